use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use plaquekit::pipeline::{Store, DATA_ENV};
use plaquekit::titration::titer_csv;
use plaquekit::welldetect::Layout;
use plaquekit_cli::commands::{self, AnalyzeArgs};
use plaquekit_cli::server;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "plaquekit", version, about = "Plaque assay quantification from plate images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect wells and plaques in a plate image and compute the titer.
    Analyze {
        image: PathBuf,
        /// Plate layout as ROWSxCOLS, e.g. 3x4.
        #[arg(long)]
        layout: Layout,
        /// Dilution scheme JSON.
        #[arg(long)]
        scheme: PathBuf,
        /// Directory of per-well probability maps (`well_r{row}_c{col}.png`).
        #[arg(long)]
        prob_dir: Option<PathBuf>,
        /// Directory of external well candidate masks.
        #[arg(long)]
        masks_dir: Option<PathBuf>,
        /// Pipeline configuration JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Print the analysis JSON to stdout.
        #[arg(long)]
        json: bool,
    },
    /// Recompute the titer of an analysis under a dilution scheme.
    Titer {
        analysis: PathBuf,
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Score a predicted analysis against annotated ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// A single IoU threshold or START:STOP:STEP.
        #[arg(long, default_value = "0.5:0.95:0.05")]
        iou_thresholds: String,
        #[arg(long)]
        json: bool,
    },
    /// Write a seeded synthetic plate image and its ground truth.
    RenderSynthetic {
        /// 6, 12 or 24.
        #[arg(long)]
        wells: usize,
        /// Comma-separated counts in row-major order, or one count for every well.
        #[arg(long, value_delimiter = ',', required = true)]
        plaques_per_well: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = DATA_ENV, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Directory with the built review UI, served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Analyze {
            image,
            layout,
            scheme,
            prob_dir,
            masks_dir,
            config,
            out,
            json,
        } => {
            let args = AnalyzeArgs {
                image,
                layout,
                scheme,
                prob_dir,
                masks_dir,
                config,
                out,
            };
            let a = commands::analyze(&args).with_context(|| format!("analysing {}", args.image.display()))?;
            if json {
                return print_json(&a);
            }
            for w in &a.wells {
                let state = if w.missing {
                    "missing".to_string()
                } else {
                    w.count.to_string()
                };
                println!("r{}c{}\t{state}", w.row, w.col);
            }
            if let Some(t) = a.titer.as_ref().and_then(|t| t.plate_titer_pfu_per_ml) {
                println!("titer\t{t:.4e} PFU/mL");
            }
            eprintln!("wrote {}", args.out.join(commands::ANALYSIS_FILE).display());
        }
        Command::Titer {
            analysis,
            scheme,
            config,
            json,
        } => {
            let (plate_id, t) = commands::titer(&analysis, &scheme, config.as_deref())?;
            if json {
                return print_json(&t);
            }
            print!("{}", titer_csv(&plate_id, &t)?);
        }
        Command::Eval {
            gt,
            pred,
            iou_thresholds,
            json,
        } => {
            let thresholds = commands::parse_thresholds(&iou_thresholds)?;
            let e = commands::eval(&gt, &pred, &thresholds)?;
            if json {
                return print_json(&e);
            }
            println!("iou\tprecision\trecall");
            for p in &e.plaque_pr {
                println!("{:.2}\t{:.4}\t{:.4}", p.threshold, p.precision, p.recall);
            }
            println!("wells compared\t{} (missed {})", e.wells_compared, e.wells_missed);
            if let Some(a) = e.count_agreement {
                println!("count bias\t{:.3} (LoA {:.3} .. {:.3})", a.bias, a.loa_low, a.loa_high);
            }
            if let Some(r) = e.count_pearson {
                println!("count pearson\t{r:.4}");
            }
            if let Some(s) = e.mean_symmetric_error {
                println!("mean symmetric error\t{s:.4}");
            }
            if let Some(f) = e.empty_well_fp_rate {
                println!("empty-well FP rate\t{f:.3}");
            }
        }
        Command::RenderSynthetic {
            wells,
            plaques_per_well,
            seed,
            out,
            json,
        } => {
            let truth = commands::render_synthetic(wells, &plaques_per_well, seed, &out)?;
            if json {
                return print_json(&truth);
            }
            eprintln!("wrote {}", out.display());
        }
        Command::Serve { data, listen, ui } => {
            let store = Arc::new(Store::open(&data).with_context(|| format!("opening {}", data.display()))?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(store, &listen, ui))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
