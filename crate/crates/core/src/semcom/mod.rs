//! Context generation, receiver-side re-projection, masked fusion on index
//! grids, rate accounting and the local semantic feedback (LSF) controller.

mod context;
mod fusion;
mod lsf;
pub mod rate;

pub use context::{make_context, reproject_context, ContextBundle, Geometry};
pub use fusion::{build_mask, fuse, FusionMask, Patch};
pub use lsf::{analyze, context_only, full_latent, fused_for_p, lsf_select, plan_fixed, validate_search_set, Compatibility, LsfDecision, LsfMode, LsfOutcome, TransmitterView, DEFAULT_SEARCH_SET};
pub use rate::{rate_report, RateReport};
