use std::path::{Path, PathBuf};

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use skelfit_core::metrics::{
    das, match_keypoints, pooled_iou, repeatability_with_ratio, MatchConfig, MatchCounts, MetricReport,
    REPEATABILITY_RATIO,
};
use skelfit_core::AnnotationSet;

use crate::error::{CliError, CliResult};
use crate::files::{read_cloud, read_config, read_json, read_keypoints, write_pretty};
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Inputs: `pred anno` per instance
    Miou,
    /// Inputs: `pred anno` per instance, at least two instances
    Das,
    /// Inputs: `original_keypoints perturbed_keypoints original_cloud` per instance
    Repeatability,
}

impl Metric {
    fn arity(self) -> usize {
        match self {
            Metric::Miou | Metric::Das => 2,
            Metric::Repeatability => 3,
        }
    }
}

fn default_ratio() -> f64 {
    REPEATABILITY_RATIO
}

/// Evaluation settings; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub matching: MatchConfig,
    /// Repeatability threshold as a fraction of the original cloud's
    /// bounding-box diagonal.
    #[serde(default = "default_ratio")]
    pub repeatability_ratio: f64,
    /// Instance used as the DAS reference.
    #[serde(default)]
    pub das_reference: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { matching: MatchConfig::default(), repeatability_ratio: default_ratio(), das_reference: 0 }
    }
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Evaluation configuration JSON; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report path
    #[arg(long)]
    pub out: PathBuf,
    /// Instance files, grouped per instance as the metric requires
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct InstanceDetail {
    pub inputs: Vec<PathBuf>,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<MatchCounts>,
    /// DAS with this instance evaluated against the reference, then the roles swapped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub das_forward: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub das_backward: Option<[f64; 2]>,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub report: MetricReport<EvalConfig>,
    /// IoU from TP/FP/FN summed over instances (mIoU only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled: Option<f64>,
    pub instances: Vec<InstanceDetail>,
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let mut manifest = Manifest::new("eval", manifest_path(&args.out));
    let outcome = execute(args, &mut manifest);
    manifest.finish(outcome)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

fn execute(args: &EvalArgs, manifest: &mut Manifest) -> CliResult<()> {
    let config = match &args.config {
        Some(path) => {
            let (config, digest): (EvalConfig, String) = read_config(path)?;
            manifest.config_sha256 = Some(digest);
            config
        }
        None => EvalConfig::default(),
    };
    manifest.set("metric", args.metric);
    let arity = args.metric.arity();
    if !args.inputs.len().is_multiple_of(arity) {
        return Err(CliError::usage(format!(
            "{:?} takes {arity} files per instance, got {} files",
            args.metric,
            args.inputs.len()
        )));
    }
    let groups: Vec<&[PathBuf]> = args.inputs.chunks(arity).collect();
    if args.metric == Metric::Das && groups.len() < 2 {
        return Err(CliError::usage("das needs at least two instances (pred anno pred anno ...)"));
    }
    if args.metric == Metric::Das && config.das_reference >= groups.len() {
        return Err(CliError::usage(format!(
            "das_reference {} is out of range for {} instances",
            config.das_reference,
            groups.len()
        )));
    }
    for path in &args.inputs {
        manifest.add_input(path)?;
    }
    manifest.write()?;

    let instances = match args.metric {
        Metric::Miou => miou_instances(&groups, &config)?,
        Metric::Das => das_instances(&groups, &config)?,
        Metric::Repeatability => repeatability_instances(&groups, &config)?,
    };
    let pooled = (args.metric == Metric::Miou)
        .then(|| pooled_iou(&instances.iter().filter_map(|i| i.counts).collect::<Vec<_>>()));
    let name = match args.metric {
        Metric::Miou => "miou",
        Metric::Das => "das",
        Metric::Repeatability => "repeatability",
    };
    let report = EvalReport {
        report: MetricReport::new(name, instances.iter().map(|i| i.score).collect(), config),
        pooled,
        instances,
    };
    write_pretty(&args.out, &report)
}

type Labeled = (Vec<Point3<f64>>, AnnotationSet);

fn load_labeled(group: &[PathBuf]) -> CliResult<Labeled> {
    Ok((read_keypoints(&group[0])?, read_json(&group[1])?))
}

fn miou_instances(groups: &[&[PathBuf]], config: &EvalConfig) -> CliResult<Vec<InstanceDetail>> {
    groups
        .par_iter()
        .map(|g| {
            let (pred, annos) = load_labeled(g)?;
            let counts = match_keypoints(&pred, &annos.positions(), &config.matching)?;
            Ok(InstanceDetail {
                inputs: g.to_vec(),
                score: counts.iou(),
                counts: Some(counts),
                das_forward: None,
                das_backward: None,
            })
        })
        .collect()
}

fn das_instances(groups: &[&[PathBuf]], config: &EvalConfig) -> CliResult<Vec<InstanceDetail>> {
    let loaded: Vec<Labeled> = groups.par_iter().map(|g| load_labeled(g)).collect::<CliResult<_>>()?;
    let r = config.das_reference;
    let (ref_pred, ref_anno) = &loaded[r];
    (0..loaded.len())
        .into_par_iter()
        .filter(|&i| i != r)
        .map(|i| {
            let (pred, anno) = &loaded[i];
            let there = das(ref_pred, ref_anno, pred, anno)?;
            let back = das(pred, anno, ref_pred, ref_anno)?;
            Ok(InstanceDetail {
                inputs: groups[i].to_vec(),
                score: 0.5 * (there.score + back.score),
                counts: None,
                das_forward: Some([there.forward, back.forward]),
                das_backward: Some([there.backward, back.backward]),
            })
        })
        .collect()
}

fn repeatability_instances(groups: &[&[PathBuf]], config: &EvalConfig) -> CliResult<Vec<InstanceDetail>> {
    groups
        .par_iter()
        .map(|g| {
            let original = read_keypoints(&g[0])?;
            let perturbed = read_keypoints(&g[1])?;
            let size = read_cloud(&g[2])?.bounding_box().diagonal();
            let score = repeatability_with_ratio(&original, &perturbed, size, config.repeatability_ratio)?;
            Ok(InstanceDetail { inputs: g.to_vec(), score, counts: None, das_forward: None, das_backward: None })
        })
        .collect()
}
