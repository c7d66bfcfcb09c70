use serde::{Deserialize, Serialize};

use super::rate::{context_plus_task_bits, image_bits};
use super::{build_mask, fuse, make_context, reproject_context, ContextBundle, Geometry, Patch};
use crate::imagecore::Image;
use crate::saliency::{pool_to_latent, selection_count, Cell, ImportanceGrid, TaskModel};
use crate::vq::{CodecModel, LatentGrid};
use crate::{Error, Result};

pub const DEFAULT_SEARCH_SET: [u32; 7] = [10, 20, 30, 50, 70, 90, 100];

/// When a reconstruction counts as good enough for the task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Compatibility {
    /// The predicted class on `x̂` equals the prediction on `x`.
    #[default]
    ExactMatch,
    /// The prediction on `x` is among the `k` top classes on `x̂`.
    TopK(usize),
}

impl Compatibility {
    pub fn check(&self, task: &TaskModel, reference_class: usize, x_hat: &Image) -> Result<bool> {
        match *self {
            Compatibility::ExactMatch => Ok(task.predict(x_hat)? == reference_class),
            Compatibility::TopK(k) => Ok(task.ranking(x_hat)?.iter().take(k.max(1)).any(|&c| c == reference_class)),
        }
    }
}

/// Everything the transmitter derives from one image before choosing what
/// to send. Computed once per image.
#[derive(Debug, Clone)]
pub struct TransmitterView {
    pub geometry: Geometry,
    pub z: LatentGrid,
    pub context: ContextBundle,
    pub z_u: LatentGrid,
    pub importance: ImportanceGrid,
    /// All latent cells in transmission priority order.
    pub ranked: Vec<Cell>,
    /// The task model's prediction on the original image.
    pub reference_class: usize,
}

impl TransmitterView {
    /// The top-`p` percent cells.
    pub fn top_cells(&self, p: u32) -> Result<&[Cell]> {
        Ok(&self.ranked[..selection_count(p, self.ranked.len())?])
    }

    pub fn r_c(&self) -> u64 {
        self.context.rate_bits
    }

    pub fn r_i(&self, codebook_size: usize) -> u64 {
        image_bits(&self.geometry, codebook_size)
    }
}

pub fn analyze(codec: &CodecModel, task: &TaskModel, x: &Image, f_ctx: usize) -> Result<TransmitterView> {
    let geometry = Geometry::new(x.height(), x.width(), codec.f_model(), f_ctx)?;
    let z = codec.encode(x)?;
    let context = make_context(codec, x, f_ctx)?;
    let z_u = reproject_context(codec, &context.z_c, f_ctx)?;
    let importance = pool_to_latent(&task.gradcam(x, None)?, codec.f_model())?;
    let ranked = importance.ranked();
    let reference_class = task.predict(x)?;
    Ok(TransmitterView { geometry, z, context, z_u, importance, ranked, reference_class })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LsfMode {
    ContextOnly,
    ContextPlusTask { p: u32 },
    FullLatent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LsfDecision {
    pub mode: LsfMode,
    /// The percentage that passed (or, for a fixed plan, was requested).
    pub p: Option<u32>,
    /// Payload bits of the message this decision sends.
    pub rate_bits: u64,
    pub compatible: bool,
}

/// A decision together with what the receiver will end up holding.
#[derive(Debug, Clone)]
pub struct LsfOutcome {
    pub decision: LsfDecision,
    /// Cells whose image-latent index is sent (empty for context only).
    pub cells: Vec<Cell>,
    /// The fused grid the receiver will reconstruct from.
    pub z_r: LatentGrid,
}

impl LsfOutcome {
    pub fn patch(&self, view: &TransmitterView) -> Result<Patch> {
        Patch::from_latent(&view.z, &self.cells)
    }
}

/// Fusion of the top-`p` cells into `z_u`, as the receiver would compute it.
pub fn fused_for_p(view: &TransmitterView, p: u32) -> Result<(Vec<Cell>, LatentGrid)> {
    let cells = view.top_cells(p)?.to_vec();
    let (h, w) = view.z.dims();
    let mask = build_mask(&cells, h, w)?;
    let z_r = fuse(&view.z_u, &Patch::from_latent(&view.z, &cells)?, &mask)?;
    Ok((cells, z_r))
}

/// Sends the top-`p` cells with the context without checking the task; a
/// message heavier than the full latent becomes the full latent.
pub fn plan_fixed(view: &TransmitterView, p: u32, codebook_size: usize, compatible: bool) -> Result<LsfOutcome> {
    let b = crate::vq::bits_per_index(codebook_size);
    let n = selection_count(p, view.ranked.len())?;
    let rate = context_plus_task_bits(view.context.z_c.cells(), view.ranked.len(), n, b);
    let r_i = view.r_i(codebook_size);
    if rate > r_i {
        let cells = view.ranked.clone();
        return Ok(LsfOutcome {
            decision: LsfDecision { mode: LsfMode::FullLatent, p: Some(p), rate_bits: r_i, compatible },
            cells,
            z_r: view.z.clone(),
        });
    }
    let (cells, z_r) = fused_for_p(view, p)?;
    Ok(LsfOutcome { decision: LsfDecision { mode: LsfMode::ContextPlusTask { p }, p: Some(p), rate_bits: rate, compatible }, cells, z_r })
}

/// The whole image latent, `R = R_i`.
pub fn full_latent(view: &TransmitterView, codebook_size: usize) -> LsfOutcome {
    LsfOutcome {
        decision: LsfDecision { mode: LsfMode::FullLatent, p: None, rate_bits: view.r_i(codebook_size), compatible: true },
        cells: view.ranked.clone(),
        z_r: view.z.clone(),
    }
}

pub fn context_only(view: &TransmitterView) -> LsfOutcome {
    LsfOutcome {
        decision: LsfDecision { mode: LsfMode::ContextOnly, p: None, rate_bits: view.r_c(), compatible: false },
        cells: Vec::new(),
        z_r: view.z_u.clone(),
    }
}

pub fn validate_search_set(search_set: &[u32]) -> Result<()> {
    if search_set.is_empty() || search_set.windows(2).any(|w| w[0] >= w[1]) || search_set.iter().any(|&p| p > 100) {
        return Err(Error::Config(format!("search set {search_set:?} must be strictly increasing within 0..=100")));
    }
    Ok(())
}

/// Local semantic feedback: the smallest `p` whose simulated receiver
/// reconstruction keeps the task prediction, with the context-only and
/// full-latent fallbacks.
pub fn lsf_select(
    codec: &CodecModel,
    task: &TaskModel,
    view: &TransmitterView,
    search_set: &[u32],
    compatibility: Compatibility,
) -> Result<LsfOutcome> {
    validate_search_set(search_set)?;
    let k = codec.codebook().size();
    for &p in search_set {
        let (_, z_r) = fused_for_p(view, p)?;
        if compatibility.check(task, view.reference_class, &codec.decode(&z_r)?)? {
            return plan_fixed(view, p, k, true);
        }
    }
    Ok(context_only(view))
}
