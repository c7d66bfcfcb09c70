//! Metrics rows, CSV/JSON emission and the optional rate-accuracy plot.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use image::{Rgb, RgbImage};
use serde::Serialize;

/// One line of the metrics table. Accuracy is in percent, bandwidth is the
/// mean forward payload per image in KB (1 KB = 1024 bytes).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scenario: u8,
    pub mode: String,
    pub task: String,
    pub images: usize,
    pub accuracy: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub bandwidth_kb: f64,
    pub rounds: f64,
    /// Mean per-image wall time; kept out of the CSV so it stays
    /// reproducible byte for byte.
    #[serde(skip)]
    pub wall_ms: f64,
}

pub fn write_csv(rows: &[MetricsRow], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(RoundedRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-precision view of a row so the CSV text does not depend on float
/// formatting of the last bits.
#[derive(Serialize)]
struct RoundedRow<'a> {
    scenario: u8,
    mode: &'a str,
    task: &'a str,
    images: usize,
    accuracy: String,
    psnr: String,
    ssim: String,
    bandwidth_kb: String,
    rounds: String,
}

impl<'a> From<&'a MetricsRow> for RoundedRow<'a> {
    fn from(r: &'a MetricsRow) -> Self {
        Self {
            scenario: r.scenario,
            mode: &r.mode,
            task: &r.task,
            images: r.images,
            accuracy: format!("{:.2}", r.accuracy),
            psnr: format!("{:.3}", r.psnr),
            ssim: format!("{:.4}", r.ssim),
            bandwidth_kb: format!("{:.4}", r.bandwidth_kb),
            rounds: format!("{:.3}", r.rounds),
        }
    }
}

/// Writes `metrics.csv`, `report.json` and, when asked, a plot of accuracy
/// against bandwidth. Returns the written paths.
pub fn emit_report(
    rows: &[MetricsRow],
    extra: serde_json::Value,
    out_dir: &Path,
    plot: bool,
) -> anyhow::Result<Vec<PathBuf>> {
    anyhow::ensure!(!rows.is_empty(), "no metrics rows to report");
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join("metrics.csv");
    write_csv(rows, &csv_path)?;
    let json_rows: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("row serializes");
            v["wall_ms"] = serde_json::json!(r.wall_ms);
            v
        })
        .collect();
    let report = serde_json::json!({ "rows": json_rows, "details": extra });
    let json_path = out_dir.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    let mut written = vec![csv_path, json_path];
    if plot {
        let dir = out_dir.join("plots");
        fs::create_dir_all(&dir)?;
        let path = dir.join("rate_accuracy.png");
        plot_rate_accuracy(rows)
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// Scatter plot: bandwidth on x, accuracy on y, one colour per scenario.
pub fn plot_rate_accuracy(rows: &[MetricsRow]) -> RgbImage {
    const W: u32 = 480;
    const H: u32 = 320;
    const M: u32 = 30;
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    for x in M..W - M / 2 {
        img.put_pixel(x, H - M, Rgb([0, 0, 0]));
    }
    for y in M / 2..=H - M {
        img.put_pixel(M, y, Rgb([0, 0, 0]));
    }
    let max_kb = rows.iter().map(|r| r.bandwidth_kb).fold(0.0, f64::max).max(1e-9);
    let colors = [Rgb([200, 40, 40]), Rgb([40, 120, 200]), Rgb([40, 160, 60])];
    for r in rows {
        let px = M as f64 + r.bandwidth_kb / max_kb * (W - M - M / 2) as f64;
        let py = (H - M) as f64 - r.accuracy.clamp(0.0, 100.0) / 100.0 * (H - M - M / 2) as f64;
        let color = colors[(r.scenario as usize + 2) % 3];
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let (x, y) = (px as i64 + dx, py as i64 + dy);
                if (0..W as i64).contains(&x) && (0..H as i64).contains(&y) {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: &str, acc: f64, kb: f64) -> MetricsRow {
        MetricsRow {
            scenario: 1,
            mode: mode.into(),
            task: "a".into(),
            images: 10,
            accuracy: acc,
            psnr: 20.0,
            ssim: 0.5,
            bandwidth_kb: kb,
            rounds: 1.0,
            wall_ms: 3.0,
        }
    }

    #[test]
    fn three_rows_give_header_plus_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("zeta", 20.0, 0.0176), row("zeta+10%", 50.0, 0.07), row("full", 90.0, 0.28125)];
        let files = emit_report(&rows, serde_json::json!({}), dir.path(), true).unwrap();
        assert_eq!(files.len(), 3);
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("scenario,mode,task,images,accuracy,psnr,ssim,bandwidth_kb,rounds\n"));
        assert!(!text.contains("wall"));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json["rows"][2]["wall_ms"], 3.0);
    }

    #[test]
    fn empty_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], serde_json::json!({}), dir.path(), false).is_err());
    }
}
