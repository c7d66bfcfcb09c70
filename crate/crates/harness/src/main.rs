use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::info;
use semcom_core::imagecore::Split;
use semcom_core::protocol::{payload_bits, MessageBody, SemMessage, Transcript};
use semcom_harness::config::RunConfig;
use semcom_harness::pipeline::{train_codec_stage, train_task_stage, Models, TaskId};
use semcom_harness::report::emit_report;
use semcom_harness::scenarios::{run_scenario1, run_scenario2, run_scenario3, Bench};
use semcom_harness::synth::{write_dataset, SynthConfig};

#[derive(Parser)]
#[command(name = "semcom", about = "Context plus task-latent semantic communication on a desk dataset")]
struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = parse_kv)]
    overrides: Vec<(String, String)>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic texture dataset into `data_dir`.
    SynthDataset {
        #[arg(long, default_value_t = 1200)]
        train: usize,
        #[arg(long, default_value_t = 200)]
        val: usize,
        #[arg(long, default_value_t = 400)]
        test: usize,
    },
    TrainCodec,
    TrainTask {
        #[arg(value_enum)]
        task: TaskId,
    },
    Scenario1,
    Scenario2,
    Scenario3,
    /// Decode a serialized message, or every frame of a transcript log.
    InspectMessage { path: PathBuf },
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn describe(msg: &SemMessage) -> String {
    let detail = match &msg.body {
        MessageBody::ContextOnly { indices } | MessageBody::FullLatent { indices } => format!("{} indices", indices.len()),
        MessageBody::ContextPlusTask { context_factor, context, patch } => {
            format!("context f={context_factor} {} indices, patch {} cells", context.len(), patch.len())
        }
        MessageBody::TaskPatch { patch } => format!("patch {} cells", patch.len()),
        MessageBody::MoreInfoRequest => String::new(),
        MessageBody::RegionRequest { region } => format!("box ({},{})-({},{})", region.x0, region.y0, region.x1, region.y1),
    };
    format!(
        "{:?} grid {}x{} b={} {detail} payload_bits={}",
        msg.msg_type(),
        msg.grid_h,
        msg.grid_w,
        msg.index_bits,
        payload_bits(msg)
    )
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut overrides = cli.overrides;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("out_dir".into(), out.display().to_string()));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;

    match cli.command {
        Command::SynthDataset { train, val, test } => {
            if cfg.height != cfg.width {
                bail!("the synthetic dataset is square; got {}x{}", cfg.height, cfg.width);
            }
            let synth = SynthConfig { size: cfg.height, seed: cfg.seed.unwrap_or(1), ..SynthConfig::default() };
            let counts = [(Split::Train, train), (Split::Val, val), (Split::Test, test)];
            for path in write_dataset(&cfg.data_dir, &counts, &synth)? {
                println!("{}", path.display());
            }
        }
        Command::TrainCodec => {
            cfg.require_seed()?;
            let (_, report) = train_codec_stage(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::TrainTask { task } => {
            cfg.require_seed()?;
            let (_, report) = train_task_stage(&cfg, task)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Scenario1 | Command::Scenario2 | Command::Scenario3 => {
            cfg.require_seed()?;
            let models = Models::load(&cfg)?;
            let bench = Bench::new(&cfg, &models)?;
            let (fine, coarse) = Models::test_splits(&cfg)?;
            let out = Some(cfg.out_dir.as_path());
            let (rows, details) = match cli.command {
                Command::Scenario1 => {
                    let o = run_scenario1(&bench, &fine, out)?;
                    (o.rows, serde_json::to_value(o.details)?)
                }
                Command::Scenario2 => {
                    let o = run_scenario2(&bench, &fine, out)?;
                    (o.rows, serde_json::to_value(o.details)?)
                }
                _ => {
                    let o = run_scenario3(&bench, &fine, &coarse.labels, out)?;
                    (o.rows, serde_json::to_value(o.details)?)
                }
            };
            for path in emit_report(&rows, details, &cfg.out_dir, cfg.plots)? {
                info!("wrote {}", path.display());
            }
            for r in &rows {
                println!(
                    "{:<22} task {}  acc {:6.2}%  psnr {:6.2}  ssim {:.4}  {:.4} KB  rounds {:.2}",
                    r.mode, r.task, r.accuracy, r.psnr, r.ssim, r.bandwidth_kb, r.rounds
                );
            }
        }
        Command::InspectMessage { path } => {
            let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            if bytes.starts_with(b"TCLG") {
                for (i, (dir, msg)) in Transcript::from_bytes(&bytes)?.messages()?.iter().enumerate() {
                    println!("#{i} {dir:?} {}", describe(msg));
                }
            } else {
                println!("{}", describe(&SemMessage::deserialize(&bytes)?));
            }
        }
    }
    Ok(())
}
