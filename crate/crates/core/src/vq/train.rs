use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{CodecConfig, CodecModel, VqLoss};
use crate::imagecore::{psnr, LoadedSplit};
use crate::nn::Adam;
use crate::{Error, Result};

/// Share of an epoch's cells below which a codeword counts as dead.
pub const DEAD_CODE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodecTrainReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<VqLoss>,
    /// Mean reconstruction PSNR on the validation split, when one was given.
    pub val_psnr: Option<f64>,
    /// Codeword hit counts over the last epoch.
    pub usage_histogram: Vec<u64>,
    /// Fraction of codewords used at least once on the validation split.
    pub val_usage: Option<f64>,
    pub dead_codes: usize,
}

/// Trains a codec from scratch with Adam on mini-batches.
pub fn train_codec(
    train: &LoadedSplit,
    val: Option<&LoadedSplit>,
    config: &CodecConfig,
) -> Result<(CodecModel<f32>, CodecTrainReport)> {
    if train.images.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    let mut model = CodecModel::<f32>::new(config.clone())?;
    let mut adam = Adam::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_c0de);
    let mut order: Vec<usize> = (0..train.images.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut usage = vec![0u64; config.codebook_size];
    let mut dead_codes = 0;
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        usage.iter_mut().for_each(|u| *u = 0);
        let mut sum = VqLoss::default();
        for batch in order.chunks(config.batch_size) {
            step += 1;
            if step <= config.warmup_steps {
                adam.learning_rate = config.learning_rate * step as f64 / config.warmup_steps as f64;
            }
            let mut grads = model.zero_grads();
            for &i in batch {
                let (loss, indices) = model.accumulate_gradients(&train.images[i], &mut grads)?;
                sum.total += loss.total;
                sum.recon += loss.recon;
                sum.codebook += loss.codebook;
                sum.commit += loss.commit;
                for k in indices {
                    usage[k as usize] += 1;
                }
            }
            adam.step(model.params_mut(), &grads, 1.0 / batch.len() as f64);
        }
        let n = order.len() as f64;
        let mean = VqLoss { total: sum.total / n, recon: sum.recon / n, codebook: sum.codebook / n, commit: sum.commit / n };
        info!("codec epoch {}: loss {:.5} (recon {:.5}, codebook {:.5})", epoch + 1, mean.total, mean.recon, mean.codebook);
        epoch_losses.push(mean);

        let cells: u64 = usage.iter().sum();
        dead_codes = usage.iter().filter(|&&u| (u as f64) < DEAD_CODE_FLOOR * cells as f64).count();
        debug!("codec epoch {}: {dead_codes} codewords under the usage floor", epoch + 1);
    }
    if dead_codes > 0 {
        warn!(
            "{dead_codes} of {} codewords under the usage floor after training; nonzero histogram {:?}",
            usage.len(),
            usage.iter().enumerate().filter(|(_, &u)| u > 0).collect::<Vec<_>>()
        );
    }

    let (val_psnr, val_usage) = match val {
        Some(v) if !v.images.is_empty() => {
            let (p, u) = evaluate_codec(&model, v)?;
            (Some(p), Some(u))
        }
        _ => (None, None),
    };
    Ok((model, CodecTrainReport { epoch_losses, val_psnr, usage_histogram: usage, val_usage, dead_codes }))
}

/// Mean reconstruction PSNR and the fraction of codewords hit over `split`.
pub fn evaluate_codec(model: &CodecModel<f32>, split: &LoadedSplit) -> Result<(f64, f64)> {
    let mut used = vec![false; model.codebook().size()];
    let mut total = 0.0;
    for x in &split.images {
        let z = model.encode(x)?;
        for &k in z.indices() {
            used[k as usize] = true;
        }
        total += psnr(x, &model.decode(&z)?)?;
    }
    let frac = used.iter().filter(|&&u| u).count() as f64 / used.len() as f64;
    Ok((total / split.images.len() as f64, frac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::Image;

    fn split(n: usize, size: usize) -> LoadedSplit {
        let images = (0..n)
            .map(|s| {
                let data = (0..3 * size * size)
                    .map(|i| {
                        let (c, p) = (i / (size * size), i % (size * size));
                        let (y, x) = (p / size, p % size);
                        let v = ((x + s) / 4 + (y * (c + 1)) / 4) % 2;
                        v as f32 * 1.2 - 0.6
                    })
                    .collect();
                Image::new(3, size, size, data).unwrap()
            })
            .collect();
        LoadedSplit { images, labels: vec![0; n], class_count: 1 }
    }

    #[test]
    fn two_epochs_reduce_loss() {
        let cfg = CodecConfig { codebook_size: 32, embed_dim: 8, hidden_channels: 8, epochs: 2, batch_size: 8, ..CodecConfig::default() };
        let (_, report) = train_codec(&split(64, 16), Some(&split(4, 16)), &cfg).unwrap();
        assert_eq!(report.epoch_losses.len(), 2);
        assert!(report.epoch_losses[1].total < report.epoch_losses[0].total);
        assert!(report.val_psnr.is_some());
        assert_eq!(report.usage_histogram.iter().sum::<u64>(), 64 * 16);
    }

    #[test]
    fn empty_split_is_rejected() {
        let empty = LoadedSplit { images: vec![], labels: vec![], class_count: 1 };
        assert!(train_codec(&empty, None, &CodecConfig::default()).is_err());
    }
}
