//! Task classifier, GradCAM saliency and the pixel-to-latent importance
//! mapping used to pick which latent cells to transmit.

mod classifier;
mod gradcam;
mod importance;

pub use classifier::{train_classifier, ClassifierConfig, ClassifierReport, TaskModel, CLASSIFIER_KIND};
pub use gradcam::{gradcam_from_activations, SaliencyMap};
pub use importance::{pool_to_latent, select_top_p, selection_count, Cell, ImportanceGrid};
