//! Scenario runners. Every transmission goes through a real [`Channel`]
//! between a [`Transmitter`] and a [`Receiver`], so bandwidth figures come
//! from the channel counters.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Context as _};
use log::info;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use semcom_core::imagecore::{psnr, ssim, Image, LoadedSplit};
use semcom_core::protocol::{
    region_request_round, Channel, Direction, GateOutcome, PixelBox, Receiver, ReceiverConfig, Transcript, Transmitter,
};
use semcom_core::saliency::TaskModel;
use semcom_core::semcom::rate::bits_to_kb;
use semcom_core::semcom::{
    analyze, context_only, full_latent, fused_for_p, lsf_select, plan_fixed, Geometry, LsfMode, LsfOutcome,
    TransmitterView,
};
use semcom_core::vq::LatentGrid;

use crate::config::RunConfig;
use crate::pipeline::Models;
use crate::report::MetricsRow;

/// Frozen models plus the run settings the sessions need.
pub struct Bench<'a> {
    pub cfg: &'a RunConfig,
    pub models: &'a Models,
    pub geometry: Geometry,
}

impl<'a> Bench<'a> {
    pub fn new(cfg: &'a RunConfig, models: &'a Models) -> anyhow::Result<Self> {
        Ok(Self { cfg, models, geometry: cfg.geometry()? })
    }

    fn codebook_size(&self) -> usize {
        self.models.codec.codebook().size()
    }

    pub fn analyze(&self, x: &Image) -> anyhow::Result<TransmitterView> {
        Ok(analyze(&self.models.codec, &self.models.task_a, x, self.cfg.f_ctx)?)
    }

    pub fn lsf(&self, view: &TransmitterView) -> anyhow::Result<LsfOutcome> {
        Ok(lsf_select(&self.models.codec, &self.models.task_a, view, &self.cfg.search_set, self.cfg.compatibility)?)
    }

    /// Opens a session and delivers the first message of `outcome`.
    pub fn start(&self, view: &TransmitterView, outcome: &LsfOutcome) -> anyhow::Result<Live<'a>> {
        let codec = &self.models.codec;
        let mut ch = Channel::new();
        let mut tx = Transmitter::new(codec, view.clone(), &self.cfg.search_set)?;
        let mut rx = Receiver::new(codec, self.geometry, ReceiverConfig { theta: self.cfg.theta })?;
        let started = Instant::now();
        tx.transmit(outcome, &mut ch)?;
        let msg = ch.receive(Direction::Forward)?.context("transmitter sent nothing")?;
        let x_hat = rx.receive_and_reconstruct(&msg)?;
        let first_z_r = rx.z_r()?;
        Ok(Live { tx, rx, ch, x_hat, first_z_r, started, limit: self.cfg.search_set.len() as u32 + 2 })
    }
}

/// A session in progress.
pub struct Live<'a> {
    pub tx: Transmitter<'a>,
    pub rx: Receiver<'a>,
    pub ch: Channel,
    pub x_hat: Image,
    /// The receiver's fused grid after the first message.
    pub first_z_r: LatentGrid,
    started: Instant,
    limit: u32,
}

impl Live<'_> {
    /// Lets the receiver ask for more until `task` is confident enough.
    pub fn run_gate(&mut self, task: &TaskModel) -> anyhow::Result<()> {
        while let GateOutcome::Request(req) = self.rx.confidence_gate(task, &self.x_hat)? {
            ensure!(self.rx.round() < self.limit, "session did not terminate within {} rounds", self.limit);
            self.ch.send(Direction::Backward, &req)?;
            self.tx.respond(&mut self.ch)?;
            let reply = self.ch.receive(Direction::Forward)?.context("no reply to a request")?;
            self.x_hat = self.rx.receive_and_reconstruct(&reply)?;
        }
        Ok(())
    }

    pub fn forward_bits(&self) -> u64 {
        self.ch.sent_bits(Direction::Forward)
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }
}

/// Running sums for one table row.
struct Tally {
    scenario: u8,
    mode: String,
    task: String,
    n: usize,
    hits: usize,
    psnr: f64,
    ssim: f64,
    bits: u64,
    rounds: u64,
    wall_ms: f64,
    transcript: Transcript,
}

impl Tally {
    fn new(scenario: u8, mode: impl Into<String>, task: &str) -> Self {
        Self {
            scenario,
            mode: mode.into(),
            task: task.into(),
            n: 0,
            hits: 0,
            psnr: 0.0,
            ssim: 0.0,
            bits: 0,
            rounds: 0,
            wall_ms: 0.0,
            transcript: Transcript::default(),
        }
    }

    fn add(&mut self, correct: bool, x: &Image, live: &Live) -> anyhow::Result<()> {
        self.n += 1;
        self.hits += usize::from(correct);
        self.psnr += psnr(x, &live.x_hat)?;
        self.ssim += ssim(x, &live.x_hat)?;
        self.bits += live.forward_bits();
        self.rounds += live.rx.round() as u64;
        self.wall_ms += live.elapsed_ms();
        self.transcript.frames.extend(live.ch.transcript().frames.iter().cloned());
        Ok(())
    }

    fn row(&self) -> MetricsRow {
        let n = self.n.max(1) as f64;
        MetricsRow {
            scenario: self.scenario,
            mode: self.mode.clone(),
            task: self.task.clone(),
            images: self.n,
            accuracy: 100.0 * self.hits as f64 / n,
            psnr: self.psnr / n,
            ssim: self.ssim / n,
            bandwidth_kb: bits_to_kb(self.bits) / n,
            rounds: self.rounds as f64 / n,
            wall_ms: self.wall_ms / n,
        }
    }

    fn file_stem(&self) -> String {
        let mode: String = self.mode.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
        format!("scenario{}_{}_{}", self.scenario, self.task, mode)
    }
}

fn save_transcripts(tallies: &[Tally], out_dir: Option<&Path>) -> anyhow::Result<()> {
    let Some(dir) = out_dir else { return Ok(()) };
    let dir = dir.join("transcripts");
    std::fs::create_dir_all(&dir)?;
    for t in tallies {
        t.transcript.save(&dir.join(format!("{}.bin", t.file_stem())))?;
    }
    Ok(())
}

pub fn fixed_mode_name(p: u32) -> String {
    format!("zeta+{p}%")
}

/// Output of a scenario: table rows plus scenario-specific details.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutput<D> {
    pub rows: Vec<MetricsRow>,
    pub details: D,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Scenario1Details {
    /// Sessions whose receiver grid differed from the transmitter's plan.
    pub z_r_mismatches: usize,
    pub r_c_bits: u64,
    pub r_i_bits: u64,
    /// Raw 8-bit RGB size of one original image.
    pub original_raw_kb: f64,
}

/// Context only, each fixed percentage of the search set and the full
/// latent, scored with task A.
pub fn run_scenario1(bench: &Bench, test: &LoadedSplit, out_dir: Option<&Path>) -> anyhow::Result<ScenarioOutput<Scenario1Details>> {
    let task = &bench.models.task_a;
    let k = bench.codebook_size();
    let mut tallies = vec![Tally::new(1, "zeta", "a")];
    tallies.extend(bench.cfg.search_set.iter().map(|&p| Tally::new(1, fixed_mode_name(p), "a")));
    tallies.push(Tally::new(1, "full", "a"));
    let mut details = Scenario1Details {
        original_raw_kb: bits_to_kb((3 * bench.geometry.height * bench.geometry.width * 8) as u64),
        ..Default::default()
    };
    for (i, (x, &label)) in test.images.iter().zip(&test.labels).enumerate() {
        let view = bench.analyze(x)?;
        details.r_c_bits = view.r_c();
        details.r_i_bits = view.r_i(k);
        let mut outcomes = vec![context_only(&view)];
        for &p in &bench.cfg.search_set {
            outcomes.push(plan_fixed(&view, p, k, false)?);
        }
        outcomes.push(full_latent(&view, k));
        for (tally, outcome) in tallies.iter_mut().zip(&outcomes) {
            let live = bench.start(&view, outcome)?;
            details.z_r_mismatches += usize::from(live.first_z_r != outcome.z_r);
            tally.add(task.predict(&live.x_hat)? == label, x, &live)?;
        }
        if (i + 1) % 100 == 0 {
            info!("scenario 1: {} images", i + 1);
        }
    }
    save_transcripts(&tallies, out_dir)?;
    Ok(ScenarioOutput { rows: tallies.iter().map(Tally::row).collect(), details })
}

/// One LSF decision and its audit.
#[derive(Debug, Clone, Serialize)]
pub struct DecisionRecord {
    pub mode: LsfMode,
    pub p: Option<u32>,
    pub rate_bits: u64,
    pub r_c_bits: u64,
    pub r_i_bits: u64,
    /// No smaller searched percentage passes and the chosen one does.
    pub minimal: bool,
    pub z_r_match: bool,
    pub correct: bool,
}

impl DecisionRecord {
    pub fn rate_chain_holds(&self) -> bool {
        self.r_c_bits <= self.rate_bits && self.rate_bits <= self.r_i_bits
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Scenario2Details {
    pub decisions: Vec<DecisionRecord>,
    /// How often each outcome was chosen, keyed by mode name.
    pub choice_histogram: BTreeMap<String, usize>,
    pub rate_chain_violations: usize,
    pub non_minimal: usize,
    pub z_r_mismatches: usize,
    pub max_gate_rounds: u32,
}

fn mode_key(outcome: &LsfOutcome) -> String {
    match outcome.decision.mode {
        LsfMode::ContextOnly => "zeta".into(),
        LsfMode::ContextPlusTask { p } => fixed_mode_name(p),
        LsfMode::FullLatent => "full".into(),
    }
}

/// Checks LSF's first-hit rule by evaluating every searched percentage.
fn audit_minimality(bench: &Bench, view: &TransmitterView, outcome: &LsfOutcome) -> anyhow::Result<bool> {
    let codec = &bench.models.codec;
    let mut first = None;
    for &p in &bench.cfg.search_set {
        let (_, z_r) = fused_for_p(view, p)?;
        if bench.cfg.compatibility.check(&bench.models.task_a, view.reference_class, &codec.decode(&z_r)?)? {
            first = Some(p);
            break;
        }
    }
    Ok(match outcome.decision.mode {
        LsfMode::ContextOnly => first.is_none(),
        _ => first.is_some() && first == outcome.decision.p,
    })
}

/// Fixed-percentage rows (as in scenario 1) next to LSF, with and without
/// the receiver's confidence gate.
pub fn run_scenario2(bench: &Bench, test: &LoadedSplit, out_dir: Option<&Path>) -> anyhow::Result<ScenarioOutput<Scenario2Details>> {
    let fixed = run_scenario1(bench, test, None)?;
    let task = &bench.models.task_a;
    let k = bench.codebook_size();
    let mut lsf = Tally::new(2, "lsf", "a");
    let mut gated = Tally::new(2, "lsf+gate", "a");
    let mut details = Scenario2Details::default();
    for (x, &label) in test.images.iter().zip(&test.labels) {
        let view = bench.analyze(x)?;
        let outcome = bench.lsf(&view)?;
        let live = bench.start(&view, &outcome)?;
        let correct = task.predict(&live.x_hat)? == label;
        let record = DecisionRecord {
            mode: outcome.decision.mode,
            p: outcome.decision.p,
            rate_bits: live.forward_bits(),
            r_c_bits: view.r_c(),
            r_i_bits: view.r_i(k),
            minimal: audit_minimality(bench, &view, &outcome)?,
            z_r_match: live.first_z_r == outcome.z_r,
            correct,
        };
        ensure!(record.rate_bits == outcome.decision.rate_bits, "channel bits disagree with the decision's rate");
        details.rate_chain_violations += usize::from(!record.rate_chain_holds());
        details.non_minimal += usize::from(!record.minimal);
        details.z_r_mismatches += usize::from(!record.z_r_match);
        *details.choice_histogram.entry(mode_key(&outcome)).or_default() += 1;
        details.decisions.push(record);
        lsf.add(correct, x, &live)?;

        let mut live = bench.start(&view, &outcome)?;
        live.run_gate(task)?;
        details.max_gate_rounds = details.max_gate_rounds.max(live.rx.round());
        gated.add(task.predict(&live.x_hat)? == label, x, &live)?;
    }
    let tallies = [lsf, gated];
    save_transcripts(&tallies, out_dir)?;
    let mut rows: Vec<MetricsRow> = fixed.rows.into_iter().map(|r| MetricsRow { scenario: 2, ..r }).collect();
    rows.extend(tallies.iter().map(Tally::row));
    Ok(ScenarioOutput { rows, details })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Scenario3Details {
    pub images: usize,
    /// Images whose task-B confidence fell below the threshold.
    pub low_confidence: usize,
    pub requests: usize,
    /// Backward payload bytes of each region request, deduplicated.
    pub request_payload_bytes: Vec<u64>,
    pub improved: usize,
    pub worsened: usize,
    /// One-sided sign test: P(at least `improved` successes) under
    /// Binomial(improved + worsened, 1/2).
    pub sign_test_p: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub added_kb_per_image: f64,
    /// Replies that took a session past `R_i` in total.
    pub cap_violations: usize,
}

/// One-sided binomial sign test on paired outcomes; ties are dropped.
pub fn sign_test(improved: usize, worsened: usize) -> f64 {
    let n = (improved + worsened) as u64;
    if n == 0 || improved == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    b.sf(improved as u64 - 1)
}

/// LSF tuned to task A; the receiver evaluates task B and, when unsure,
/// requests the box around task B's saliency on the reconstruction.
pub fn run_scenario3(
    bench: &Bench,
    test: &LoadedSplit,
    coarse_labels: &[usize],
    out_dir: Option<&Path>,
) -> anyhow::Result<ScenarioOutput<Scenario3Details>> {
    let task_b = &bench.models.task_b;
    let mut before = Tally::new(3, "lsf-before-feedback", "b");
    let mut after = Tally::new(3, "lsf-after-feedback", "b");
    let mut task_a_rows = Tally::new(3, "lsf", "a");
    let mut d = Scenario3Details::default();
    let mut added_bits = 0u64;
    let mut request_sizes = std::collections::BTreeSet::new();
    for ((x, &fine), &label) in test.images.iter().zip(&test.labels).zip(coarse_labels) {
        let view = bench.analyze(x)?;
        let outcome = bench.lsf(&view)?;
        let mut live = bench.start(&view, &outcome)?;
        task_a_rows.add(bench.models.task_a.predict(&live.x_hat)? == fine, x, &live)?;
        let ok_before = task_b.predict(&live.x_hat)? == label;
        before.add(ok_before, x, &live)?;
        let confidence = task_b.probabilities(&live.x_hat)?.into_iter().fold(0.0, f64::max);
        if confidence < bench.cfg.theta && live.rx.can_request_region() {
            d.low_confidence += 1;
            let cam = task_b.gradcam(&live.x_hat, None)?;
            if let Some((x0, y0, x1, y1)) = cam.bounding_box(bench.cfg.region_threshold) {
                let region = PixelBox { x0: x0 as u16, y0: y0 as u16, x1: x1 as u16, y1: y1 as u16 };
                let sent_before = live.forward_bits();
                let back_before = live.ch.sent_bits(Direction::Backward);
                live.x_hat = region_request_round(&mut live.rx, &mut live.tx, region, &mut live.ch)?;
                d.requests += 1;
                request_sizes.insert((live.ch.sent_bits(Direction::Backward) - back_before) / 8);
                added_bits += live.forward_bits() - sent_before;
                d.cap_violations += usize::from(live.forward_bits() > view.r_i(bench.codebook_size()));
            }
        }
        let ok_after = task_b.predict(&live.x_hat)? == label;
        d.improved += usize::from(ok_after && !ok_before);
        d.worsened += usize::from(ok_before && !ok_after);
        after.add(ok_after, x, &live)?;
    }
    d.images = test.len();
    d.request_payload_bytes = request_sizes.into_iter().collect();
    d.sign_test_p = sign_test(d.improved, d.worsened);
    let tallies = [task_a_rows, before, after];
    let rows: Vec<MetricsRow> = tallies.iter().map(Tally::row).collect();
    d.accuracy_before = rows[1].accuracy;
    d.accuracy_after = rows[2].accuracy;
    d.added_kb_per_image = bits_to_kb(added_bits) / test.len().max(1) as f64;
    save_transcripts(&tallies, out_dir)?;
    Ok(ScenarioOutput { rows, details: d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_matches_hand_values() {
        // P(X >= 6 | n = 6) = 1/64
        assert!((sign_test(6, 0) - 1.0 / 64.0).abs() < 1e-12);
        // P(X >= 4 | n = 5) = 6/32
        assert!((sign_test(4, 1) - 6.0 / 32.0).abs() < 1e-12);
        assert_eq!(sign_test(0, 0), 1.0);
        assert_eq!(sign_test(0, 3), 1.0);
    }
}
