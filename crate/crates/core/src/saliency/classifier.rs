use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gradcam_from_activations, SaliencyMap};
use crate::archive::{Archive, NamedTensor};
use crate::imagecore::{Image, LoadedSplit};
use crate::kv::KvConfig;
use crate::nn::{Adam, Conv2d, Layer, Linear, Real, Sequential, Tensor3};
use crate::{Error, Result};

pub const CLASSIFIER_KIND: &str = "classifier";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub class_count: usize,
    pub in_channels: usize,
    /// Output channels of the four conv blocks; the first two use stride 2.
    pub widths: [usize; 4],
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            class_count: 10,
            in_channels: 3,
            widths: [16, 32, 32, 32],
            learning_rate: 2e-3,
            epochs: 10,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn from_kv(kv: &KvConfig, class_count: usize) -> Result<Self> {
        let d = Self::default();
        let widths = match kv.get_list::<usize>("task_widths")? {
            Some(w) => w.try_into().map_err(|_| Error::Config("task_widths needs four entries".into()))?,
            None => d.widths,
        };
        let cfg = Self {
            class_count,
            in_channels: d.in_channels,
            widths,
            learning_rate: kv.get_or("task_lr", d.learning_rate)?,
            epochs: kv.get_or("task_epochs", d.epochs)?,
            batch_size: kv.get_or("task_batch", d.batch_size)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::Config("a classifier needs at least two classes".into()));
        }
        if self.widths.contains(&0) || self.in_channels == 0 || self.batch_size == 0 {
            return Err(Error::Config("widths, channels and batch size must be positive".into()));
        }
        if self.class_count > 1 << 16 || self.in_channels > 16 || self.widths.iter().any(|&w| w > 1024) {
            return Err(Error::Config("classifier size out of range".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Four conv blocks, global average pooling and a linear head. GradCAM
/// hooks the rectified output of the last conv block.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel<T = f32> {
    config: ClassifierConfig,
    pub(crate) features: Sequential<T>,
    pub(crate) head: Linear<T>,
}

struct Pass<T> {
    acts: Tensor3<T>,
    logits: Vec<T>,
}

impl<T: Real> TaskModel<T> {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gain = 2f64.sqrt();
        let [w0, w1, w2, w3] = config.widths;
        let features = Sequential::new(vec![
            Layer::Conv(Conv2d::new(&mut rng, config.in_channels, w0, 3, 2, 1, gain)),
            Layer::Relu,
            Layer::Conv(Conv2d::new(&mut rng, w0, w1, 3, 2, 1, gain)),
            Layer::Relu,
            Layer::Conv(Conv2d::new(&mut rng, w1, w2, 3, 1, 1, gain)),
            Layer::Relu,
            Layer::Conv(Conv2d::new(&mut rng, w2, w3, 3, 1, 1, gain)),
            Layer::Relu,
        ]);
        let head = Linear::new(&mut rng, w3, config.class_count, 1.0);
        Ok(Self { config, features, head })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn class_count(&self) -> usize {
        self.config.class_count
    }

    fn pass(&self, x: &Image) -> Result<Pass<T>> {
        if x.channels() != self.config.in_channels {
            return Err(Error::Dimension(format!("classifier expects {} channels", self.config.in_channels)));
        }
        let acts = self.features.forward(&x.to_tensor())?;
        let pooled = global_mean(&acts);
        let logits = self.head.forward(&pooled);
        Ok(Pass { acts, logits })
    }

    pub fn logits(&self, x: &Image) -> Result<Vec<f64>> {
        Ok(self.pass(x)?.logits.iter().map(|v| v.as_f64()).collect())
    }

    pub fn probabilities(&self, x: &Image) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Most likely class; ties go to the lower class id.
    pub fn predict(&self, x: &Image) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Classes ordered by descending logit, ties by class id.
    pub fn ranking(&self, x: &Image) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        let mut order: Vec<usize> = (0..logits.len()).collect();
        order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        Ok(order)
    }

    /// GradCAM at the input resolution for `target`, or for the predicted
    /// class when `target` is `None`.
    pub fn gradcam(&self, x: &Image, target: Option<usize>) -> Result<SaliencyMap> {
        let pass = self.pass(x)?;
        let class = match target {
            Some(c) if c >= self.class_count() => {
                return Err(Error::Argument(format!("class {c} out of range for {} classes", self.class_count())))
            }
            Some(c) => c,
            None => argmax(&pass.logits.iter().map(|v| v.as_f64()).collect::<Vec<_>>()),
        };
        // y_c = w_c · mean(A) + b_c, so dy_c/dA is w_c[k] / (h·w) everywhere
        let plane = pass.acts.plane_len();
        let mut grads = Tensor3::zeros(pass.acts.channels, pass.acts.height, pass.acts.width);
        for k in 0..pass.acts.channels {
            let g = self.head.weight[class * self.head.in_dim + k] / T::of(plane as f64);
            grads.data[k * plane..(k + 1) * plane].iter_mut().for_each(|v| *v = g);
        }
        gradcam_from_activations(&pass.acts, &grads, x.height(), x.width())
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        let mut g = self.features.zero_grads();
        g.push(vec![T::zero(); self.head.weight.len()]);
        g.push(vec![T::zero(); self.head.bias.len()]);
        g
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut p = self.features.params_mut();
        p.push(&mut self.head.weight);
        p.push(&mut self.head.bias);
        p
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut p = self.features.params();
        p.push(&self.head.weight);
        p.push(&self.head.bias);
        p
    }

    /// Cross-entropy forward/backward for one sample; gradients are added
    /// into `grads`. Returns the loss and whether the prediction was right.
    pub fn accumulate_gradients(&self, x: &Image, label: usize, grads: &mut [Vec<T>]) -> Result<(f64, bool)> {
        if label >= self.class_count() {
            return Err(Error::Argument(format!("label {label} out of range")));
        }
        let (acts, trace) = self.features.forward_traced(&x.to_tensor())?;
        let pooled = global_mean(&acts);
        let logits: Vec<f64> = self.head.forward(&pooled).iter().map(|v| v.as_f64()).collect();
        let probs = softmax(&logits);
        let loss = -probs[label].max(1e-300).ln();
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("classifier loss is {loss}")));
        }
        let d_logits: Vec<T> =
            probs.iter().enumerate().map(|(c, &p)| T::of(if c == label { p - 1.0 } else { p })).collect();
        let n = grads.len();
        let (feat_grads, head_grads) = grads.split_at_mut(n - 2);
        let (gw, gb) = head_grads.split_at_mut(1);
        let d_pooled = self.head.backward(&pooled, &d_logits, &mut gw[0], &mut gb[0]);
        let plane = acts.plane_len();
        let mut d_acts = Tensor3::zeros(acts.channels, acts.height, acts.width);
        for (k, &g) in d_pooled.iter().enumerate() {
            let v = g / T::of(plane as f64);
            d_acts.data[k * plane..(k + 1) * plane].iter_mut().for_each(|d| *d = v);
        }
        self.features.backward(&trace, d_acts, feat_grads, false);
        Ok((loss, argmax(&logits) == label))
    }
}

fn global_mean<T: Real>(t: &Tensor3<T>) -> Vec<T> {
    let n = T::of(t.plane_len() as f64);
    (0..t.channels).map(|k| t.plane(k).iter().copied().sum::<T>() / n).collect()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl TaskModel<f32> {
    fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.features.layers.iter().enumerate() {
            if let Layer::Conv(_) = layer {
                names.push(format!("features.{i}.weight"));
                names.push(format!("features.{i}.bias"));
            }
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut shapes = Vec::new();
        for layer in &self.features.layers {
            if let Layer::Conv(c) = layer {
                shapes.push(vec![c.out_channels, c.in_channels, c.kernel, c.kernel]);
                shapes.push(vec![c.out_channels]);
            }
        }
        shapes.push(vec![self.head.out_dim, self.head.in_dim]);
        shapes.push(vec![self.head.out_dim]);
        let tensors = self
            .tensor_names()
            .into_iter()
            .zip(shapes)
            .zip(self.params())
            .map(|((name, shape), data)| NamedTensor { name, shape, data: data.to_vec() })
            .collect();
        Ok(Archive {
            kind: CLASSIFIER_KIND.into(),
            config: serde_json::to_value(&self.config).map_err(|e| Error::Checkpoint(e.to_string()))?,
            tensors,
        })
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        archive.expect_kind(CLASSIFIER_KIND)?;
        let mut model = Self::new(archive.parse_config()?)?;
        let names = model.tensor_names();
        archive.restore_into(&names, model.params_mut())?;
        Ok(model)
    }

    /// Top-1 accuracy over a split.
    pub fn accuracy(&self, split: &LoadedSplit) -> Result<f64> {
        if split.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for (x, &y) in split.images.iter().zip(&split.labels) {
            hits += usize::from(self.predict(x)? == y);
        }
        Ok(hits as f64 / split.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierReport {
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_accuracy: Option<f64>,
}

/// Trains a classifier with cross-entropy and Adam.
pub fn train_classifier(
    train: &LoadedSplit,
    val: Option<&LoadedSplit>,
    config: &ClassifierConfig,
) -> Result<(TaskModel<f32>, ClassifierReport)> {
    if train.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    if train.class_count != config.class_count {
        return Err(Error::Argument(format!(
            "split has {} classes, config expects {}",
            train.class_count, config.class_count
        )));
    }
    let mut model = TaskModel::<f32>::new(config.clone())?;
    let mut adam = Adam::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7a5c_0001);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut train_accuracy = Vec::new();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut hits) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let mut grads = model.zero_grads();
            for &i in batch {
                let (l, ok) = model.accumulate_gradients(&train.images[i], train.labels[i], &mut grads)?;
                loss += l;
                hits += usize::from(ok);
            }
            adam.step(model.params_mut(), &grads, 1.0 / batch.len() as f64);
        }
        let n = train.len() as f64;
        info!("task epoch {}: loss {:.4}, train accuracy {:.3}", epoch + 1, loss / n, hits as f64 / n);
        epoch_losses.push(loss / n);
        train_accuracy.push(hits as f64 / n);
    }
    let val_accuracy = match val {
        Some(v) if !v.is_empty() => Some(model.accuracy(v)?),
        _ => None,
    };
    Ok((model, ClassifierReport { epoch_losses, train_accuracy, val_accuracy }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ClassifierConfig {
        ClassifierConfig { class_count: 3, widths: [4, 4, 4, 4], ..ClassifierConfig::default() }
    }

    fn img(seed: usize) -> Image {
        let data = (0..3 * 16 * 16).map(|i| (((i * 31 + seed * 7) % 23) as f32 / 11.0 - 1.0).clamp(-1.0, 1.0)).collect();
        Image::new(3, 16, 16, data).unwrap()
    }

    #[test]
    fn head_and_feature_gradients_match_finite_differences() {
        let mut m = TaskModel::<f64>::new(small()).unwrap();
        let x = img(1);
        let mut grads = m.zero_grads();
        m.accumulate_gradients(&x, 2, &mut grads).unwrap();
        let loss = |m: &TaskModel<f64>| -softmax(&m.logits(&x).unwrap())[2].ln();
        let h = 1e-6;
        for (slot, idx) in [(0usize, 3usize), (2, 5), (6, 1), (8, 4), (9, 2)] {
            let orig = m.params()[slot][idx];
            m.params_mut()[slot][idx] = orig + h;
            let up = loss(&m);
            m.params_mut()[slot][idx] = orig - h;
            let down = loss(&m);
            m.params_mut()[slot][idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads[slot][idx];
            assert!((fd - an).abs() <= 1e-6 + 1e-4 * fd.abs().max(an.abs()), "slot {slot}: {fd} vs {an}");
        }
    }

    #[test]
    fn gradcam_covers_the_input_and_rejects_bad_class() {
        let m = TaskModel::<f32>::new(small()).unwrap();
        let map = m.gradcam(&img(3), None).unwrap();
        assert_eq!((map.height, map.width), (16, 16));
        assert!(m.gradcam(&img(3), Some(3)).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let m = TaskModel::<f32>::new(small()).unwrap();
        let back = TaskModel::from_archive(&m.to_archive().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn training_is_deterministic() {
        let split = LoadedSplit { images: (0..12).map(img).collect(), labels: (0..12).map(|i| i % 3).collect(), class_count: 3 };
        let cfg = ClassifierConfig { epochs: 2, batch_size: 4, ..small() };
        let (a, ra) = train_classifier(&split, Some(&split), &cfg).unwrap();
        let (b, rb) = train_classifier(&split, Some(&split), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }
}
