use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use semcom_core::kv::KvConfig;
use semcom_core::saliency::ClassifierConfig;
use semcom_core::semcom::{validate_search_set, Compatibility, Geometry, DEFAULT_SEARCH_SET};
use semcom_core::vq::CodecConfig;

use crate::synth::{CLASS_NAMES, COARSE_GROUPS};

/// Everything a run needs. Built from a flat `key = value` file with
/// command-line overrides applied on top.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub height: usize,
    pub width: usize,
    pub f_ctx: usize,
    pub class_count: usize,
    /// Fine label to coarse label for the second task.
    pub coarse_groups: Vec<usize>,
    pub search_set: Vec<u32>,
    pub theta: f64,
    pub compatibility: Compatibility,
    /// Saliency level whose bounding box becomes a region request.
    pub region_threshold: f32,
    /// Evaluate at most this many test images.
    pub test_limit: Option<usize>,
    pub seed: Option<u64>,
    pub plots: bool,
    pub codec: CodecConfig,
    pub task_a: ClassifierConfig,
    pub task_b: ClassifierConfig,
    pub codec_checkpoint: PathBuf,
    pub task_a_checkpoint: PathBuf,
    pub task_b_checkpoint: PathBuf,
}

fn parse_compatibility(text: &str) -> anyhow::Result<Compatibility> {
    match text {
        "exact" => Ok(Compatibility::ExactMatch),
        other => match other.strip_prefix("top") {
            Some(k) => Ok(Compatibility::TopK(k.parse().with_context(|| format!("bad compatibility {other:?}"))?)),
            None => bail!("compatibility must be `exact` or `topK`, got {other:?}"),
        },
    }
}

impl RunConfig {
    pub fn from_kv(kv: &KvConfig) -> anyhow::Result<Self> {
        let out_dir: PathBuf = kv.get_or("out_dir", PathBuf::from("runs/default"))?;
        let class_count = kv.get_or("class_count", CLASS_NAMES.len())?;
        let coarse_groups = kv.get_list("coarse_groups")?.unwrap_or_else(|| COARSE_GROUPS.to_vec());
        if coarse_groups.len() != class_count {
            bail!("coarse_groups has {} entries for {class_count} classes", coarse_groups.len());
        }
        let coarse_count = coarse_groups.iter().max().map_or(0, |m| m + 1);
        let seed: Option<u64> = kv.get("seed")?;
        let mut task_a = ClassifierConfig::from_kv(kv, class_count)?;
        let mut task_b = ClassifierConfig::from_kv(kv, coarse_count)?;
        let base_seed = seed.unwrap_or(0);
        task_a.seed = base_seed.wrapping_add(1);
        task_b.seed = base_seed.wrapping_add(2);
        let mut codec = CodecConfig::from_kv(kv)?;
        codec.seed = base_seed;
        let search_set = kv.get_list("search_set")?.unwrap_or_else(|| DEFAULT_SEARCH_SET.to_vec());
        validate_search_set(&search_set)?;
        let cfg = Self {
            data_dir: kv.get_or("data_dir", PathBuf::from("data"))?,
            height: kv.get_or("height", 64)?,
            width: kv.get_or("width", 64)?,
            f_ctx: kv.get_or("f_ctx", 4)?,
            class_count,
            coarse_groups,
            search_set,
            theta: kv.get_or("theta", 0.8)?,
            compatibility: parse_compatibility(&kv.get_or("compatibility", "exact".to_string())?)?,
            region_threshold: kv.get_or("region_threshold", 0.5)?,
            test_limit: kv.get("test_limit")?,
            seed,
            plots: kv.get_or("plots", false)?,
            codec,
            task_a,
            task_b,
            codec_checkpoint: kv.get_or("codec_checkpoint", out_dir.join("codec.ckpt"))?,
            task_a_checkpoint: kv.get_or("task_a_checkpoint", out_dir.join("task_a.ckpt"))?,
            task_b_checkpoint: kv.get_or("task_b_checkpoint", out_dir.join("task_b.ckpt"))?,
            out_dir,
        };
        cfg.geometry()?;
        if !(0.0..=1.0).contains(&cfg.theta) {
            bail!("theta must lie in [0, 1]");
        }
        Ok(cfg)
    }

    /// Reads `path` (if any), then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> anyhow::Result<Self> {
        let mut kv = match path {
            Some(p) => KvConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => KvConfig::default(),
        };
        for (k, v) in overrides {
            kv.set(k, v.clone());
        }
        Self::from_kv(&kv)
    }

    pub fn geometry(&self) -> anyhow::Result<Geometry> {
        Ok(Geometry::new(self.height, self.width, self.codec.f_model, self.f_ctx)?)
    }

    pub fn manifest(&self, split: &str) -> PathBuf {
        self.data_dir.join(format!("{split}.csv"))
    }

    pub fn require_seed(&self) -> anyhow::Result<u64> {
        self.seed.context("reported runs need an explicit --seed")
    }
}
