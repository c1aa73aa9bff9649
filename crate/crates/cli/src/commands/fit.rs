use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use skelfit_core::cloud::normalize;
use skelfit_core::{fit, FitConfig, NormalizeTransform, Skeleton, SkeletonDoc};

use crate::error::{CliError, CliResult, Kind};
use crate::files::{create_dir, read_cloud, read_config, write_pretty, write_text};
use crate::manifest::Manifest;
use crate::svg::{line_chart, Series};

#[derive(Debug, clap::Args)]
pub struct FitArgs {
    /// Point cloud (.xyz or ascii .ply)
    #[arg(long)]
    pub input: PathBuf,
    /// Fitting configuration JSON; only `k` is required
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    pub out: PathBuf,
}

/// Contents of `report.json`. Losses are in the normalized frame the fit runs
/// in; `normalization` maps them back to input units.
#[derive(Debug, Serialize)]
pub struct FitReportFile {
    pub config: FitConfig,
    pub normalization: NormalizeTransform,
    pub n_points: usize,
    /// Rows are `[ccd, fidelity, coverage, penalty]`, one per iteration.
    pub history: Vec<[f64; 4]>,
    pub best_iteration: usize,
    pub best_loss: [f64; 4],
    pub converged: bool,
    pub activations: Vec<f64>,
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    create_dir(&args.out)?;
    let mut manifest = Manifest::new("fit", args.out.join("manifest.json"));
    let outcome = execute(args, &mut manifest);
    manifest.finish(outcome)
}

fn execute(args: &FitArgs, manifest: &mut Manifest) -> CliResult<()> {
    let (config, digest): (FitConfig, String) = read_config(&args.config)?;
    config
        .validate()
        .map_err(|e| CliError::new(Kind::Config, e.to_string()).at(&args.config))?;
    manifest.config_sha256 = Some(digest);
    manifest.seed = Some(config.seed);
    manifest.add_input(&args.input)?;
    manifest.write()?;

    let cloud = read_cloud(&args.input)?;
    let (unit, transform) = normalize(&cloud)?;
    let report = fit(&unit, &config)?;

    let keypoints = report.keypoints().iter().map(|p| transform.inverse(p)).collect();
    let skeleton = Skeleton::new(keypoints)?;
    let doc = SkeletonDoc::new(&skeleton, &report.activations, &report.params.plan);
    write_pretty(&args.out.join("skeleton.json"), &doc)?;

    let rows: Vec<[f64; 4]> = report.history.iter().map(|h| h.as_row()).collect();
    let file = FitReportFile {
        config: config.clone(),
        normalization: transform,
        n_points: cloud.len(),
        history: rows.clone(),
        best_iteration: report.best_iteration,
        best_loss: report.best_loss.as_row(),
        converged: report.converged,
        activations: report.activations.as_slice().to_vec(),
    };
    write_pretty(&args.out.join("report.json"), &file)?;

    let mut xyz = String::new();
    for (edge, p) in report.subclouds.tagged_points() {
        let q = transform.inverse(p);
        let _ = writeln!(xyz, "{:?} {:?} {:?} {edge}", q.x, q.y, q.z);
    }
    write_text(&args.out.join("reconstruction.xyz"), &xyz)?;

    let column = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
    let (total, fidelity, coverage) = (column(0), column(1), column(2));
    let svg = line_chart(
        "Fitting loss",
        "iteration",
        "loss (normalized units)",
        &[
            Series { name: "CCD", color: "#1f77b4", values: &total },
            Series { name: "fidelity", color: "#2ca02c", values: &fidelity },
            Series { name: "coverage", color: "#d62728", values: &coverage },
        ],
    );
    write_text(&args.out.join("loss_curve.svg"), &svg)
}
