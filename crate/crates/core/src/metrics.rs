//! Keypoint evaluation: saliency IoU, dual alignment score, in-order
//! repeatability, and nearest-distance histograms.

use std::collections::HashMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationSet;
use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::spatial::{dist2, nearest_brute, KdTree};

/// Saliency threshold in model units.
pub const MIOU_THRESHOLD: f64 = 0.1;
/// Repeatability threshold as a fraction of the model size.
pub const REPEATABILITY_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// Globally nearest pair first, one-to-one.
    #[default]
    Greedy,
    /// Largest possible number of one-to-one matches under the threshold.
    MaxCardinality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub distance_threshold: f64,
    #[serde(default)]
    pub rule: MatchRule,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            distance_threshold: MIOU_THRESHOLD,
            rule: MatchRule::Greedy,
        }
    }
}

impl MatchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0) {
            return Err(invalid("distance threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn iou(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            self.tp as f64 / denom as f64
        }
    }
}

/// Matches predictions to annotations within the threshold (strictly closer).
pub fn match_keypoints(
    predicted: &[Point3<f64>],
    annotated: &[Point3<f64>],
    config: &MatchConfig,
) -> Result<MatchCounts> {
    config.validate()?;
    if predicted.is_empty() || annotated.is_empty() {
        return Err(Error::EmptyInput("keypoint matching needs nonempty lists".into()));
    }
    let t2 = config.distance_threshold * config.distance_threshold;
    let tp = match config.rule {
        MatchRule::Greedy => {
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for (i, p) in predicted.iter().enumerate() {
                for (j, a) in annotated.iter().enumerate() {
                    let d = dist2(p, a);
                    if d < t2 {
                        pairs.push((d, i, j));
                    }
                }
            }
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
            let mut used_p = vec![false; predicted.len()];
            let mut used_a = vec![false; annotated.len()];
            let mut tp = 0;
            for (_, i, j) in pairs {
                if !used_p[i] && !used_a[j] {
                    used_p[i] = true;
                    used_a[j] = true;
                    tp += 1;
                }
            }
            tp
        }
        MatchRule::MaxCardinality => {
            let adj: Vec<Vec<usize>> = predicted
                .iter()
                .map(|p| {
                    (0..annotated.len())
                        .filter(|&j| dist2(p, &annotated[j]) < t2)
                        .collect()
                })
                .collect();
            max_bipartite_matching(&adj, annotated.len())
        }
    };
    Ok(MatchCounts {
        tp,
        fp: predicted.len() - tp,
        fn_: annotated.len() - tp,
    })
}

/// Kuhn's augmenting-path matching.
fn max_bipartite_matching(adj: &[Vec<usize>], right: usize) -> usize {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                    owner[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; right];
    (0..adj.len())
        .filter(|&u| augment(u, adj, &mut vec![false; right], &mut owner))
        .count()
}

/// `TP / (TP + FP + FN)` for one instance.
pub fn miou(predicted: &[Point3<f64>], annotations: &AnnotationSet, config: &MatchConfig) -> Result<f64> {
    Ok(match_keypoints(predicted, &annotations.positions(), config)?.iou())
}

fn nearest_index(query: &Point3<f64>, targets: &[Point3<f64>]) -> usize {
    nearest_brute(query, targets).expect("nonempty").index
}

/// Label transfer in both directions between a reference and an evaluation
/// instance whose prediction lists are index-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DasScore {
    /// Predictions labeled on the reference, checked on the evaluation instance.
    pub forward: f64,
    /// Annotations labeled by prediction index on the reference, checked on the evaluation instance.
    pub backward: f64,
    pub score: f64,
}

pub fn das(
    pred_ref: &[Point3<f64>],
    anno_ref: &AnnotationSet,
    pred_eval: &[Point3<f64>],
    anno_eval: &AnnotationSet,
) -> Result<DasScore> {
    if pred_ref.len() != pred_eval.len() {
        return Err(Error::ShapeMismatch(format!(
            "aligned prediction lists differ in length: {} vs {}",
            pred_ref.len(),
            pred_eval.len()
        )));
    }
    if pred_ref.is_empty() {
        return Err(Error::EmptyInput("no predicted keypoints".into()));
    }
    let ref_pos = anno_ref.positions();
    let eval_pos = anno_eval.positions();

    let correct = pred_ref
        .iter()
        .zip(pred_eval)
        .filter(|(pr, pe)| {
            let want = anno_ref.items()[nearest_index(pr, &ref_pos)].semantic_id;
            anno_eval.items()[nearest_index(pe, &eval_pos)].semantic_id == want
        })
        .count();
    let forward = correct as f64 / pred_ref.len() as f64;

    // semantic label -> prediction index, from the first reference annotation carrying it
    let mut label_to_pred: HashMap<u32, usize> = HashMap::new();
    for a in anno_ref.items() {
        label_to_pred
            .entry(a.semantic_id)
            .or_insert_with(|| nearest_index(&a.xyz, pred_ref));
    }
    let mut checked = 0usize;
    let mut hits = 0usize;
    for a in anno_eval.items() {
        if let Some(&want) = label_to_pred.get(&a.semantic_id) {
            checked += 1;
            if nearest_index(&a.xyz, pred_eval) == want {
                hits += 1;
            }
        }
    }
    if checked == 0 {
        return Err(invalid("reference and evaluation annotations share no semantic label"));
    }
    let backward = hits as f64 / checked as f64;
    Ok(DasScore {
        forward,
        backward,
        score: 0.5 * (forward + backward),
    })
}

/// Fraction of indices whose keypoints moved strictly less than
/// `REPEATABILITY_RATIO * model_size`.
pub fn repeatability(original: &[Point3<f64>], perturbed: &[Point3<f64>], model_size: f64) -> Result<f64> {
    repeatability_with_ratio(original, perturbed, model_size, REPEATABILITY_RATIO)
}

pub fn repeatability_with_ratio(
    original: &[Point3<f64>],
    perturbed: &[Point3<f64>],
    model_size: f64,
    ratio: f64,
) -> Result<f64> {
    if original.len() != perturbed.len() {
        return Err(Error::ShapeMismatch(format!(
            "keypoint lists differ in length: {} vs {}",
            original.len(),
            perturbed.len()
        )));
    }
    if original.is_empty() {
        return Err(Error::EmptyInput("no keypoints to compare".into()));
    }
    if !(model_size > 0.0 && ratio > 0.0) {
        return Err(invalid("model size and ratio must be positive"));
    }
    let limit = ratio * model_size;
    let ok = original
        .iter()
        .zip(perturbed)
        .filter(|(a, b)| (*a - *b).norm() < limit)
        .count();
    Ok(ok as f64 / original.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<usize>,
    pub median: f64,
}

/// Nearest-distance histograms of one cloud against three targets, on shared
/// fixed-width bins over `[0, max observed]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistograms {
    pub bin_width: f64,
    pub max_distance: f64,
    pub skeleton: Histogram,
    pub keypoints: Histogram,
    pub bbox: Histogram,
}

pub fn nearest_distances(cloud: &PointCloud, target: &[Point3<f64>]) -> Result<Vec<f64>> {
    if target.is_empty() {
        return Err(Error::EmptyInput("histogram target is empty".into()));
    }
    let tree = KdTree::new(target);
    Ok(cloud
        .points()
        .iter()
        .map(|p| tree.nearest(p).unwrap().distance())
        .collect())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn skeleton_distance_histogram(
    cloud: &PointCloud,
    skeleton_samples: &[Point3<f64>],
    keypoints: &[Point3<f64>],
    bbox_samples: &[Point3<f64>],
    bins: usize,
) -> Result<DistanceHistograms> {
    if bins == 0 {
        return Err(invalid("histogram needs at least one bin"));
    }
    let series = [
        nearest_distances(cloud, skeleton_samples)?,
        nearest_distances(cloud, keypoints)?,
        nearest_distances(cloud, bbox_samples)?,
    ];
    let max = series
        .iter()
        .flatten()
        .copied()
        .fold(0.0, f64::max);
    let width = max / bins as f64;
    let hist = |d: &[f64]| {
        let mut counts = vec![0; bins];
        for &x in d {
            let b = if width > 0.0 {
                ((x / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[b] += 1;
        }
        Histogram {
            counts,
            median: median(d),
        }
    };
    Ok(DistanceHistograms {
        bin_width: width,
        max_distance: max,
        skeleton: hist(&series[0]),
        keypoints: hist(&series[1]),
        bbox: hist(&series[2]),
    })
}

/// Per-instance scores with their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<C> {
    pub metric: String,
    pub per_instance: Vec<f64>,
    pub aggregate: f64,
    pub config: C,
}

impl<C> MetricReport<C> {
    pub fn new(metric: &str, per_instance: Vec<f64>, config: C) -> Self {
        let aggregate = if per_instance.is_empty() {
            0.0
        } else {
            per_instance.iter().sum::<f64>() / per_instance.len() as f64
        };
        MetricReport {
            metric: metric.to_string(),
            per_instance,
            aggregate,
            config,
        }
    }
}

/// IoU from TP/FP/FN summed over all instances.
pub fn pooled_iou(counts: &[MatchCounts]) -> f64 {
    let total = counts.iter().fold(MatchCounts::default(), |acc, c| MatchCounts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    });
    total.iou()
}
