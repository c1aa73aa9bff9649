//! Skeleton decoding: complete graph over ordered keypoints, length-proportional
//! sampling along every edge, and per-sample position offsets.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Lexicographic list of all index pairs `(i, j)` with `i < j < k`.
pub fn enumerate_edges(k: usize) -> Result<Vec<(usize, usize)>> {
    if k < 2 {
        return Err(invalid(format!("a skeleton needs at least 2 keypoints, got {k}")));
    }
    Ok((0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect())
}

pub fn edge_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Ordered keypoints joined by every pair, edges in [`enumerate_edges`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    keypoints: Vec<Point3<f64>>,
    edges: Vec<(usize, usize)>,
}

impl Skeleton {
    pub fn new(keypoints: Vec<Point3<f64>>) -> Result<Self> {
        let edges = enumerate_edges(keypoints.len())?;
        Ok(Skeleton { keypoints, edges })
    }

    pub fn keypoints(&self) -> &[Point3<f64>] {
        &self.keypoints
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn k(&self) -> usize {
        self.keypoints.len()
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let (u, v) = self.edges[edge];
        (self.keypoints[v] - self.keypoints[u]).norm()
    }
}

/// Per-edge existence weights, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActivationVector(Vec<f64>);

impl ActivationVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|a| !(0.0..=1.0).contains(a)) {
            return Err(invalid(format!(
                "activation {i} = {} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(ActivationVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ActivationVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ActivationVector::new(v)
    }
}

impl From<ActivationVector> for Vec<f64> {
    fn from(a: ActivationVector) -> Self {
        a.0
    }
}

/// Number of samples per edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    #[serde(rename = "M")]
    pub total_budget: usize,
    #[serde(rename = "n")]
    pub counts: Vec<usize>,
}

impl SamplingPlan {
    /// Prefix offsets into a flat per-sample array; length is `edges + 1`.
    pub fn starts(&self) -> Vec<usize> {
        prefix_starts(&self.counts)
    }

    pub fn total_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Position parameter of sample `slot` on an edge with `count` samples.
    #[inline]
    pub fn sample_param(slot: usize, count: usize) -> f64 {
        (slot as f64 + 0.5) / count as f64
    }
}

fn prefix_starts(counts: &[usize]) -> Vec<usize> {
    let mut starts = Vec::with_capacity(counts.len() + 1);
    let mut acc = 0;
    starts.push(0);
    for c in counts {
        acc += c;
        starts.push(acc);
    }
    starts
}

/// `n_i = max(1, round(M * L_i / sum L))`. Degenerate skeletons (all edges
/// of zero length) get one sample per edge.
pub fn plan_sampling(skeleton: &Skeleton, total_budget: usize) -> Result<SamplingPlan> {
    let e = skeleton.edges().len();
    if total_budget < e {
        return Err(invalid(format!(
            "sample budget {total_budget} is smaller than the edge count {e}"
        )));
    }
    let lengths: Vec<f64> = (0..e).map(|i| skeleton.edge_length(i)).collect();
    let total: f64 = lengths.iter().sum();
    let counts = lengths
        .iter()
        .map(|&l| {
            if total > 0.0 {
                ((total_budget as f64 * l / total).round() as usize).max(1)
            } else {
                1
            }
        })
        .collect();
    Ok(SamplingPlan {
        total_budget,
        counts,
    })
}

/// Flat list of per-edge point groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SubCloudSet {
    points: Vec<Point3<f64>>,
    starts: Vec<usize>,
}

impl SubCloudSet {
    pub fn from_groups(groups: Vec<Vec<Point3<f64>>>) -> Self {
        let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
        SubCloudSet {
            points: groups.into_iter().flatten().collect(),
            starts: prefix_starts(&counts),
        }
    }

    /// Builds from a flat point list and per-edge counts.
    pub fn from_flat(points: Vec<Point3<f64>>, counts: &[usize]) -> Result<Self> {
        let starts = prefix_starts(counts);
        if *starts.last().unwrap() != points.len() {
            return Err(Error::ShapeMismatch(format!(
                "edge counts sum to {} but {} points were given",
                starts.last().unwrap(),
                points.len()
            )));
        }
        Ok(SubCloudSet { points, starts })
    }

    pub fn num_edges(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn edge(&self, i: usize) -> &[Point3<f64>] {
        &self.points[self.starts[i]..self.starts[i + 1]]
    }

    pub fn edge_range(&self, i: usize) -> std::ops::Range<usize> {
        self.starts[i]..self.starts[i + 1]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.starts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn all_points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn total_points(&self) -> usize {
        self.points.len()
    }

    /// Points tagged with the index of the edge they belong to.
    pub fn tagged_points(&self) -> impl Iterator<Item = (usize, &Point3<f64>)> {
        (0..self.num_edges()).flat_map(move |e| self.edge(e).iter().map(move |p| (e, p)))
    }
}

/// Per-sample displacement vectors laid out like a [`SubCloudSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTable {
    offsets: Vec<Vector3<f64>>,
    counts: Vec<usize>,
}

impl OffsetTable {
    pub fn zeros(plan: &SamplingPlan) -> Self {
        OffsetTable {
            offsets: vec![Vector3::zeros(); plan.total_samples()],
            counts: plan.counts.clone(),
        }
    }

    pub fn from_flat(offsets: Vec<Vector3<f64>>, counts: Vec<usize>) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total != offsets.len() {
            return Err(Error::ShapeMismatch(format!(
                "offset counts sum to {total} but {} offsets were given",
                offsets.len()
            )));
        }
        Ok(OffsetTable { offsets, counts })
    }

    pub fn as_slice(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    pub fn as_mut_slice(&mut self) -> &mut [Vector3<f64>] {
        &mut self.offsets
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn negated(&self) -> Self {
        OffsetTable {
            offsets: self.offsets.iter().map(|b| -b).collect(),
            counts: self.counts.clone(),
        }
    }
}

/// Midpoint-rule samples `K_u + t (K_v - K_u)`, `t = (s + 0.5) / n`.
pub fn sample_edges(skeleton: &Skeleton, plan: &SamplingPlan) -> Result<SubCloudSet> {
    if plan.counts.len() != skeleton.edges().len() {
        return Err(Error::ShapeMismatch(format!(
            "plan has {} edges, skeleton has {}",
            plan.counts.len(),
            skeleton.edges().len()
        )));
    }
    let kp = skeleton.keypoints();
    let mut points = Vec::with_capacity(plan.total_samples());
    for (&(u, v), &n) in skeleton.edges().iter().zip(&plan.counts) {
        let dir = kp[v] - kp[u];
        points.extend((0..n).map(|s| kp[u] + dir * SamplingPlan::sample_param(s, n)));
    }
    SubCloudSet::from_flat(points, &plan.counts)
}

/// Pointwise `raw + offsets`, order preserved.
pub fn apply_offsets(raw: &SubCloudSet, offsets: &OffsetTable) -> Result<SubCloudSet> {
    if raw.counts() != offsets.counts {
        return Err(Error::ShapeMismatch(
            "offset table does not match the sub-cloud layout".into(),
        ));
    }
    Ok(SubCloudSet {
        points: raw
            .points
            .iter()
            .zip(&offsets.offsets)
            .map(|(p, b)| p + b)
            .collect(),
        starts: raw.starts.clone(),
    })
}

/// Ridge penalty `lambda * sum |b|^2` and its gradient `2 lambda b`.
pub fn offset_penalty(offsets: &OffsetTable, lambda_reg: f64) -> (f64, Vec<Vector3<f64>>) {
    let value = lambda_reg * offsets.offsets.iter().map(|b| b.norm_squared()).sum::<f64>();
    let grad = offsets
        .offsets
        .iter()
        .map(|b| b * (2.0 * lambda_reg))
        .collect();
    (value, grad)
}

/// Serialized skeleton: `{k, keypoints, edges, activations, plan: {M, n}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonDoc {
    pub k: usize,
    pub keypoints: Vec<[f64; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub activations: Vec<f64>,
    pub plan: SamplingPlan,
}

impl SkeletonDoc {
    pub fn new(skeleton: &Skeleton, activations: &ActivationVector, plan: &SamplingPlan) -> Self {
        SkeletonDoc {
            k: skeleton.k(),
            keypoints: skeleton.keypoints().iter().map(|p| [p.x, p.y, p.z]).collect(),
            edges: skeleton.edges().iter().map(|&(i, j)| [i, j]).collect(),
            activations: activations.as_slice().to_vec(),
            plan: plan.clone(),
        }
    }

    /// Validates the document and rebuilds the typed skeleton.
    pub fn to_parts(&self) -> Result<(Skeleton, ActivationVector, SamplingPlan)> {
        if self.keypoints.len() != self.k {
            return Err(Error::ShapeMismatch(format!(
                "k = {} but {} keypoints listed",
                self.k,
                self.keypoints.len()
            )));
        }
        let skeleton = Skeleton::new(self.keypoints.iter().map(|&p| Point3::from(p)).collect())?;
        let expected: Vec<[usize; 2]> = skeleton.edges().iter().map(|&(i, j)| [i, j]).collect();
        if expected != self.edges {
            return Err(invalid("edge list is not the lexicographic complete graph"));
        }
        if self.activations.len() != expected.len() || self.plan.counts.len() != expected.len() {
            return Err(Error::ShapeMismatch(
                "activations and plan must have one entry per edge".into(),
            ));
        }
        let activations = ActivationVector::new(self.activations.clone())?;
        Ok((skeleton, activations, self.plan.clone()))
    }
}
