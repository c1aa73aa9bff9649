use std::path::PathBuf;

use serde::Serialize;
use skelfit_core::cloud::sample_in_box;
use skelfit_core::metrics::{skeleton_distance_histogram, DistanceHistograms};
use skelfit_core::skeleton::sample_edges;
use skelfit_core::{BoundingBox, PointCloud, SkeletonDoc};

use crate::error::{CliError, CliResult};
use crate::files::{create_dir, read_cloud, read_json, write_pretty, write_text};
use crate::manifest::Manifest;
use crate::svg::{histogram_chart, Series};

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    /// Point cloud the skeleton was fitted to
    #[arg(long)]
    pub input: PathBuf,
    /// skeleton.json written by `fit`
    #[arg(long)]
    pub skeleton: PathBuf,
    /// Uniform samples drawn in the cloud's bounding box
    #[arg(long, default_value_t = 3200)]
    pub bbox_samples: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct HistogramFile {
    pub n_points: usize,
    pub bbox_samples: usize,
    pub skeleton_samples: usize,
    pub bins: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub histograms: DistanceHistograms,
}

/// Describes why the skeleton does not look like it lives in the cloud's frame.
fn frame_mismatch(cloud: &PointCloud, doc: &SkeletonDoc) -> Option<String> {
    let cloud_box = cloud.bounding_box();
    let diag = cloud_box.diagonal();
    let kps: Vec<_> = doc.keypoints.iter().map(|&p| p.into()).collect();
    let kp_box = BoundingBox::of(&kps)?;
    let outside = kps.iter().filter(|p| !cloud_box.contains(p, 0.25 * diag)).count();
    if outside > 0 {
        return Some(format!(
            "{outside} of {} keypoints lie well outside the cloud's bounding box; \
             the skeleton and cloud may use different normalizations",
            kps.len()
        ));
    }
    let ratio = kp_box.diagonal() / diag;
    if doc.k > 1 && !(0.05..=2.0).contains(&ratio) {
        return Some(format!(
            "keypoint spread is {ratio:.3} of the cloud's diagonal; \
             the skeleton and cloud may use different normalizations"
        ));
    }
    None
}

pub fn run(args: &AnalyzeArgs) -> CliResult<()> {
    create_dir(&args.out)?;
    let mut manifest = Manifest::new("analyze", args.out.join("manifest.json"));
    let outcome = execute(args, &mut manifest);
    manifest.finish(outcome)
}

fn execute(args: &AnalyzeArgs, manifest: &mut Manifest) -> CliResult<()> {
    if args.bbox_samples == 0 || args.bins == 0 {
        return Err(CliError::usage("--bbox-samples and --bins must be positive"));
    }
    manifest.seed = Some(args.seed);
    manifest.set("bbox_samples", args.bbox_samples);
    manifest.set("bins", args.bins);
    manifest.add_input(&args.input)?;
    manifest.add_input(&args.skeleton)?;
    manifest.write()?;

    let cloud = read_cloud(&args.input)?;
    let doc: SkeletonDoc = read_json(&args.skeleton)?;
    let (skeleton, _, plan) = doc.to_parts().map_err(|e| CliError::from(e).at(&args.skeleton))?;
    if let Some(w) = frame_mismatch(&cloud, &doc) {
        eprintln!("warning: {w}");
        manifest.warnings.push(w);
    }
    let samples = sample_edges(&skeleton, &plan)?;
    let bbox = sample_in_box(&cloud.bounding_box(), args.bbox_samples, args.seed);
    let histograms =
        skeleton_distance_histogram(&cloud, samples.all_points(), skeleton.keypoints(), &bbox, args.bins)?;

    let to_f = |c: &[usize]| c.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let (s, k, b) = (
        to_f(&histograms.skeleton.counts),
        to_f(&histograms.keypoints.counts),
        to_f(&histograms.bbox.counts),
    );
    let svg = histogram_chart(
        "Nearest-neighbour distances from cloud points",
        histograms.bin_width,
        &[
            Series { name: "skeleton", color: "#d62728", values: &s },
            Series { name: "bbox samples", color: "#2ca02c", values: &b },
            Series { name: "keypoints", color: "#1f77b4", values: &k },
        ],
    );
    let file = HistogramFile {
        n_points: cloud.len(),
        bbox_samples: args.bbox_samples,
        skeleton_samples: samples.total_points(),
        bins: args.bins,
        seed: args.seed,
        histograms,
    };
    write_pretty(&args.out.join("histogram.json"), &file)?;
    write_text(&args.out.join("histogram.svg"), &svg)
}
