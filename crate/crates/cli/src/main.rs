//! `fuse`: fuse two registered images by sparse wavelet-domain optimization
//! (GMC or l1 penalty, optional joint deconvolution) or plain wavelet
//! averaging, with quality metrics and CSV reporting.

mod jobspec;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;

use gmcfuse::pipeline::{fuse_pipeline, report, ReportRow};
use jobspec::JobSpec;

#[derive(Parser, Debug)]
#[command(
    name = "fuse",
    version,
    about = "Fuse two registered images in the wavelet domain",
    after_help = "Defaults: method gmc, lambda 0.005 (use 0.5 for noisy inputs), gamma 0.8,\n\
                  automatic step size, 300 iterations, tol 1e-6, patch 16, levels from the\n\
                  image size. Job files hold `key = value` lines with the same names as the\n\
                  flags; flags override file values."
)]
struct Cli {
    /// Job file(s) to run; may repeat. Flags below override file values.
    #[arg(long = "job", value_name = "FILE")]
    jobs: Vec<PathBuf>,

    /// First input image (png, pgm or ppm).
    #[arg(long, value_name = "PATH")]
    in1: Option<PathBuf>,

    /// Second input image.
    #[arg(long, value_name = "PATH")]
    in2: Option<PathBuf>,

    /// Blur kernel for the first input (text format: `rows cols` then taps).
    #[arg(long, value_name = "PATH")]
    psf1: Option<PathBuf>,

    /// Blur kernel for the second input.
    #[arg(long, value_name = "PATH")]
    psf2: Option<PathBuf>,

    /// Fusion rule: gmc, l1 or wavelet-wa.
    #[arg(long)]
    method: Option<String>,

    /// Regularization weight.
    #[arg(long)]
    lambda: Option<f64>,

    /// Penalty convexity parameter in [0, 1).
    #[arg(long)]
    gamma: Option<f64>,

    /// Explicit step size (default: 1.9 / rho).
    #[arg(long)]
    mu: Option<f64>,

    /// Wavelet decomposition depth (default: from the image size).
    #[arg(long)]
    levels: Option<usize>,

    /// Gain-estimation patch side in pixels.
    #[arg(long)]
    patch: Option<usize>,

    /// Iteration budget.
    #[arg(long)]
    iters: Option<usize>,

    /// Relative-change stopping threshold.
    #[arg(long)]
    tol: Option<f64>,

    /// Output image path (extension selects the format).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Write a CSV report here and compute quality metrics.
    #[arg(long, value_name = "CSV_PATH")]
    metrics: Option<PathBuf>,

    /// Center-crop mismatched inputs to their common size.
    #[arg(long)]
    crop: bool,

    /// Smooth the patch gain grid with a 3x3 mean.
    #[arg(long)]
    smooth_gains: bool,

    /// Dataset label for the report (default: first input's file stem).
    #[arg(long)]
    dataset: Option<String>,
}

impl Cli {
    fn overrides(&self) -> JobSpec {
        JobSpec {
            in1: self.in1.clone(),
            in2: self.in2.clone(),
            psf1: self.psf1.clone(),
            psf2: self.psf2.clone(),
            method: self.method.clone(),
            lambda: self.lambda,
            gamma: self.gamma,
            mu: self.mu,
            levels: self.levels,
            patch: self.patch,
            iters: self.iters,
            tol: self.tol,
            out: self.out.clone(),
            metrics: self.metrics.clone(),
            crop: if self.crop { Some(true) } else { None },
            smooth_gains: if self.smooth_gains { Some(true) } else { None },
            dataset: self.dataset.clone(),
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let overrides = cli.overrides();

    let specs: Vec<JobSpec> = if cli.jobs.is_empty() {
        vec![overrides.clone()]
    } else {
        let mut out = Vec::new();
        for path in &cli.jobs {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading job file {}", path.display()))?;
            let spec = JobSpec::parse(&text)
                .with_context(|| format!("parsing job file {}", path.display()))?;
            out.push(spec.overlay(&overrides));
        }
        out
    };
    if specs.is_empty() {
        bail!("nothing to do");
    }

    // One CSV path serves the whole run: the flag wins, else the first job
    // file that names one.
    let csv_path = cli
        .metrics
        .clone()
        .or_else(|| specs.iter().find_map(|s| s.metrics.clone()));

    let mut rows: Vec<ReportRow<f64>> = Vec::new();
    for spec in specs {
        let job = spec.into_job()?;
        let output = fuse_pipeline(&job)
            .with_context(|| format!("fusing {} + {}", job.input1.display(), job.input2.display()))?;
        eprintln!(
            "{} [{}]: wrote {} ({} iterations, solver {:.3} s)",
            output.dataset,
            output.method,
            job.output.display(),
            output
                .diagnostics
                .as_ref()
                .map(|d| d.iters_used.to_string())
                .unwrap_or_else(|| "-".into()),
            output.solver_seconds
        );
        rows.push(ReportRow::from(&output));
    }

    let (csv, table) = report(&rows);
    print!("{}", table);
    if let Some(path) = csv_path {
        std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("report written to {}", path.display());
    }
    Ok(())
}
