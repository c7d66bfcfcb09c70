//! Data loading, training entry points and checkpoint handling.

use std::fs;

use anyhow::Context;
use log::info;
use semcom_core::archive::Archive;
use semcom_core::imagecore::{LabeledDataset, LoadedSplit, Split};
use semcom_core::saliency::{train_classifier, ClassifierReport, TaskModel};
use semcom_core::vq::{train_codec, CodecModel, CodecTrainReport};

use crate::config::RunConfig;

/// Which downstream task a classifier serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TaskId {
    /// Fine-grained texture class.
    A,
    /// Coarse relabelling of the same images.
    B,
}

pub fn load_split(cfg: &RunConfig, split: Split) -> anyhow::Result<LoadedSplit> {
    let manifest = cfg.manifest(&split.to_string());
    let ds = LabeledDataset::from_manifest(&manifest, cfg.class_count, split)
        .with_context(|| format!("loading manifest {}", manifest.display()))?;
    let mut loaded = ds.load(cfg.height, cfg.width)?;
    if split == Split::Test {
        if let Some(n) = cfg.test_limit {
            loaded = loaded.take(n);
        }
    }
    Ok(loaded)
}

fn for_task(cfg: &RunConfig, split: LoadedSplit, task: TaskId) -> anyhow::Result<LoadedSplit> {
    Ok(match task {
        TaskId::A => split,
        TaskId::B => split.remap_labels(&cfg.coarse_groups)?,
    })
}

pub fn train_codec_stage(cfg: &RunConfig) -> anyhow::Result<(CodecModel, CodecTrainReport)> {
    let train = load_split(cfg, Split::Train)?;
    let val = load_split(cfg, Split::Val)?;
    let (model, report) = train_codec(&train, Some(&val), &cfg.codec)?;
    save_archive(&model.to_archive()?, &cfg.codec_checkpoint)?;
    info!("codec saved to {}", cfg.codec_checkpoint.display());
    Ok((model, report))
}

pub fn train_task_stage(cfg: &RunConfig, task: TaskId) -> anyhow::Result<(TaskModel, ClassifierReport)> {
    let train = for_task(cfg, load_split(cfg, Split::Train)?, task)?;
    let val = for_task(cfg, load_split(cfg, Split::Val)?, task)?;
    let (cls_cfg, path) = match task {
        TaskId::A => (&cfg.task_a, &cfg.task_a_checkpoint),
        TaskId::B => (&cfg.task_b, &cfg.task_b_checkpoint),
    };
    let (model, report) = train_classifier(&train, Some(&val), cls_cfg)?;
    save_archive(&model.to_archive()?, path)?;
    info!("task {task:?} classifier saved to {}", path.display());
    Ok((model, report))
}

fn save_archive(archive: &Archive, path: &std::path::Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    archive.save(path).with_context(|| format!("writing {}", path.display()))
}

/// The frozen models every scenario shares.
#[derive(Debug, Clone)]
pub struct Models {
    pub codec: CodecModel,
    pub task_a: TaskModel,
    pub task_b: TaskModel,
}

impl Models {
    pub fn load(cfg: &RunConfig) -> anyhow::Result<Self> {
        let open = |p: &std::path::Path| Archive::load(p).with_context(|| format!("missing or unreadable checkpoint {}", p.display()));
        Ok(Self {
            codec: CodecModel::from_archive(&open(&cfg.codec_checkpoint)?)?,
            task_a: TaskModel::from_archive(&open(&cfg.task_a_checkpoint)?)?,
            task_b: TaskModel::from_archive(&open(&cfg.task_b_checkpoint)?)?,
        })
    }

    /// Test split with fine labels and the same images with coarse labels.
    pub fn test_splits(cfg: &RunConfig) -> anyhow::Result<(LoadedSplit, LoadedSplit)> {
        let fine = load_split(cfg, Split::Test)?;
        let coarse = fine.remap_labels(&cfg.coarse_groups)?;
        Ok((fine, coarse))
    }
}
