//! Command-line interface of the headpose toolkit.
//!
//! Every command is a pure function of its inputs, flags and seed: reruns
//! produce byte-identical outputs. Reports embed the toolkit version and the
//! effective configuration, and all files are written atomically.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "headpose", version, about = "Head-pose geometry, loss and evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate predictions against ground truth (Euler/MAE/geodesic, NME).
    Evaluate {
        /// Prediction sample file (JSON lines).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth sample file (JSON lines).
        #[arg(long)]
        gt: PathBuf,
        /// Also compute the normalized mean 2D landmark error.
        #[arg(long)]
        nme: bool,
        /// Drop ground-truth samples with any |Euler angle| above 99°.
        #[arg(long)]
        filter99: bool,
        /// Report output path (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Optional per-sample CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate noise-injected copies of a directory of PGM images.
    Noise {
        /// Directory containing {id}.pgm images.
        #[arg(long)]
        images: PathBuf,
        /// Comma-separated noise sigmas (intensity units of 255).
        #[arg(long)]
        sigmas: String,
        /// Trials per sigma.
        #[arg(long, default_value_t = 16)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (sigma_*/trial_*/{id}.pgm).
        #[arg(long)]
        out: PathBuf,
    },
    /// Noise-resistance sweep over per-sigma, per-trial prediction sets.
    Sweep {
        /// Sweep specification JSON: {"points":[{"sigma":..,"trials":[paths]}]}.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV with one row per sweep point.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the augmentation pipeline over samples and images.
    Augment {
        /// Sample file; geometric fields in source pixel coordinates.
        #[arg(long)]
        samples: PathBuf,
        /// Directory containing {id}.pgm source images.
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of augmented samples to draw (records are cycled).
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Rescale output labels to the [-1, 1] crop convention.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit pose and shape coefficients to 2D landmark annotations.
    Fit {
        /// Landmark records (landmarks2d mask; optional confidences).
        #[arg(long)]
        landmarks: PathBuf,
        /// Deformable model container.
        #[arg(long)]
        model: PathBuf,
        /// Optional prior records with pose pseudo-labels, matched by id.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Gaussian-mixture shape prior (JSON); unit prior when omitted.
        #[arg(long)]
        mixture: Option<PathBuf>,
        /// Rotation prior weight (used when --prior is given).
        #[arg(long, default_value_t = 1.0)]
        prior_weight: f64,
        /// Mixture NLL weight.
        #[arg(long, default_value_t = 0.01)]
        mixture_weight: f64,
        /// Fit results (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a deterministic sample stream from a dataset mix.
    Mix {
        /// Mix specification JSON: {"datasets":[{name,size}],"probs":[..],"seed":..}.
        #[arg(long)]
        spec: PathBuf,
        /// Number of draws.
        #[arg(long)]
        count: usize,
        /// Output CSV (draw, dataset index, dataset name, sample index).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the linear head on a synthetic task and export it.
    TrainDemo {
        /// Optional configuration JSON (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trained (iterate-averaged) head output.
        #[arg(long)]
        out_head: PathBuf,
        /// Per-step loss trace CSV.
        #[arg(long)]
        out_trace: PathBuf,
    },
    /// Verify analytic loss gradients against central finite differences.
    Gradcheck {
        /// `all` or a comma-separated subset of loss names.
        #[arg(long, default_value = "all")]
        losses: String,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the deterministic synthetic deformable model.
    MakeModel {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a Gaussian-mixture shape prior from sample records by EM.
    Gmm {
        /// Records carrying shape coefficients.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 4)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit-code classification: 1 for invalid inputs, 2 for runtime failures.
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<headpose::Error> for CliError {
    fn from(e: headpose::Error) -> Self {
        match e {
            headpose::Error::Diverged { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Evaluate {
            pred,
            gt,
            nme,
            filter99,
            out,
            csv,
        } => commands::evaluate(&pred, &gt, nme, filter99, &out, csv.as_deref()),
        Command::Noise {
            images,
            sigmas,
            trials,
            seed,
            out,
        } => commands::noise(&images, &sigmas, trials, seed, &out),
        Command::Sweep { spec, gt, out, csv } => {
            commands::sweep(&spec, &gt, &out, csv.as_deref())
        }
        Command::Augment {
            samples,
            images,
            seed,
            count,
            normalize,
            out,
        } => commands::augment(&samples, &images, seed, count, normalize, &out),
        Command::Fit {
            landmarks,
            model,
            prior,
            mixture,
            prior_weight,
            mixture_weight,
            out,
        } => commands::fit(
            &landmarks,
            &model,
            prior.as_deref(),
            mixture.as_deref(),
            prior_weight,
            mixture_weight,
            &out,
        ),
        Command::Mix { spec, count, out } => commands::mix(&spec, count, &out),
        Command::TrainDemo {
            config,
            seed,
            out_head,
            out_trace,
        } => commands::train_demo(config.as_deref(), seed, &out_head, &out_trace),
        Command::Gradcheck {
            losses,
            points,
            seed,
            out,
        } => commands::gradcheck(&losses, points, seed, out.as_deref()),
        Command::MakeModel { seed, out } => commands::make_model(seed, &out),
        Command::Gmm {
            samples,
            components,
            seed,
            out,
        } => commands::gmm(&samples, components, seed, &out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
