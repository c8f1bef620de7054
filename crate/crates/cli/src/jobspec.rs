//! Job files: line-oriented `key = value` text mirroring the CLI flags.
//! Values given on the command line override values from the file.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use gmcfuse::pipeline::{FusionJob, Method};

/// A partially specified job; `None` fields fall back to the overlay or to
/// the built-in defaults.
#[derive(Debug, Default, Clone)]
pub struct JobSpec {
    pub in1: Option<PathBuf>,
    pub in2: Option<PathBuf>,
    pub psf1: Option<PathBuf>,
    pub psf2: Option<PathBuf>,
    pub method: Option<String>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub levels: Option<usize>,
    pub patch: Option<usize>,
    pub iters: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub crop: Option<bool>,
    pub smooth_gains: Option<bool>,
    pub dataset: Option<String>,
}

fn parse_bool(value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => bail!("expected a boolean, got {:?}", other),
    }
}

impl JobSpec {
    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = JobSpec::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let ctx = || format!("line {}: key {:?}", lineno + 1, key);
            match key {
                "in1" => spec.in1 = Some(value.into()),
                "in2" => spec.in2 = Some(value.into()),
                "psf1" => spec.psf1 = Some(value.into()),
                "psf2" => spec.psf2 = Some(value.into()),
                "method" => spec.method = Some(value.to_string()),
                "lambda" => spec.lambda = Some(value.parse().with_context(ctx)?),
                "gamma" => spec.gamma = Some(value.parse().with_context(ctx)?),
                "mu" => spec.mu = Some(value.parse().with_context(ctx)?),
                "levels" => spec.levels = Some(value.parse().with_context(ctx)?),
                "patch" => spec.patch = Some(value.parse().with_context(ctx)?),
                "iters" => spec.iters = Some(value.parse().with_context(ctx)?),
                "tol" => spec.tol = Some(value.parse().with_context(ctx)?),
                "out" => spec.out = Some(value.into()),
                "metrics" => spec.metrics = Some(value.into()),
                "crop" => spec.crop = Some(parse_bool(value).with_context(ctx)?),
                "smooth-gains" | "smooth_gains" => {
                    spec.smooth_gains = Some(parse_bool(value).with_context(ctx)?)
                }
                "dataset" => spec.dataset = Some(value.to_string()),
                other => bail!("line {}: unknown key {:?}", lineno + 1, other),
            }
        }
        Ok(spec)
    }

    /// Returns `self` with every field that `over` sets replaced by it.
    pub fn overlay(mut self, over: &JobSpec) -> Self {
        macro_rules! take {
            ($field:ident) => {
                if over.$field.is_some() {
                    self.$field = over.$field.clone();
                }
            };
        }
        take!(in1);
        take!(in2);
        take!(psf1);
        take!(psf2);
        take!(method);
        take!(lambda);
        take!(gamma);
        take!(mu);
        take!(levels);
        take!(patch);
        take!(iters);
        take!(tol);
        take!(out);
        take!(metrics);
        take!(crop);
        take!(smooth_gains);
        take!(dataset);
        self
    }

    /// Resolves the spec into a runnable job, applying the defaults.
    pub fn into_job(self) -> Result<FusionJob<f64>> {
        let in1 = self.in1.ok_or_else(|| anyhow!("missing input: --in1"))?;
        let in2 = self.in2.ok_or_else(|| anyhow!("missing input: --in2"))?;
        let out = self.out.ok_or_else(|| anyhow!("missing output: --out"))?;
        let mut job = FusionJob::<f64>::new(in1, in2, out);
        if let Some(m) = self.method {
            job.method = m.parse::<Method>()?;
        }
        if let Some(v) = self.lambda {
            job.lambda = v;
        }
        if let Some(v) = self.gamma {
            job.gamma = v;
        }
        job.mu = self.mu;
        job.levels = self.levels;
        if let Some(v) = self.patch {
            job.patch_size = v;
        }
        if let Some(v) = self.iters {
            job.max_iters = v;
        }
        if let Some(v) = self.tol {
            job.tol = v;
        }
        job.psf1 = self.psf1;
        job.psf2 = self.psf2;
        job.crop = self.crop.unwrap_or(false);
        job.smooth_gains = self.smooth_gains.unwrap_or(false);
        job.metrics = self.metrics.is_some();
        job.dataset = self.dataset;
        Ok(job)
    }
}
