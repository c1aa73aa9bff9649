//! Point clouds and the preprocessing used around fitting: normalization,
//! farthest-point sampling, subsampling and Gaussian perturbation.

use nalgebra::{Point3, Vector3};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, stream_rng};
use crate::spatial::{dist2, KdTree, Neighbor};

/// Ordered, nonempty list of finite 3D points.
///
/// Order is significant: keypoint weights index into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point3<f64>>", into = "Vec<Point3<f64>>")]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point cloud has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { points })
    }

    pub fn from_arrays(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|&p| Point3::from(p)).collect())
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3<f64>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of(&self.points).expect("cloud is nonempty")
    }

    pub fn kdtree(&self) -> KdTree<'_> {
        KdTree::new(&self.points)
    }
}

impl TryFrom<Vec<Point3<f64>>> for PointCloud {
    type Error = Error;
    fn try_from(points: Vec<Point3<f64>>) -> Result<Self> {
        PointCloud::new(points)
    }
}

impl From<PointCloud> for Vec<Point3<f64>> {
    fn from(c: PointCloud) -> Self {
        c.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl BoundingBox {
    pub fn of(points: &[Point3<f64>]) -> Option<Self> {
        let first = *points.first()?;
        let (min, max) = points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        });
        Some(BoundingBox { min, max })
    }

    /// Euclidean length of the box diagonal; the "model size" of a shape.
    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Point3<f64>, margin: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - margin && p[a] <= self.max[a] + margin)
    }
}

/// Record of the similarity transform applied by [`normalize`]:
/// `normalized = (original - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizeTransform {
    pub center: Point3<f64>,
    pub scale: f64,
}

impl NormalizeTransform {
    pub fn identity() -> Self {
        NormalizeTransform {
            center: Point3::origin(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p - self.center) * self.scale)
    }

    pub fn inverse(&self, p: &Point3<f64>) -> Point3<f64> {
        self.center + p.coords / self.scale
    }

    pub fn inverse_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.inverse(p)).collect(),
        }
    }
}

/// Centers the cloud on its centroid and scales it to unit bounding-box diagonal.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, NormalizeTransform)> {
    let diagonal = cloud.bounding_box().diagonal();
    if diagonal == 0.0 {
        return Err(Error::ZeroDiagonal);
    }
    let transform = NormalizeTransform {
        center: cloud.centroid(),
        scale: 1.0 / diagonal,
    };
    let points = cloud.points.iter().map(|p| transform.apply(p)).collect();
    Ok((PointCloud { points }, transform))
}

/// Greedy farthest-point sampling starting from an explicit index.
///
/// Each pick maximizes the distance to the already chosen set; ties go to the
/// lowest index.
pub fn farthest_point_sample_from(cloud: &PointCloud, k: usize, start: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(invalid(format!("farthest point sampling needs 1 <= k <= {n}, got {k}")));
    }
    if start >= n {
        return Err(invalid(format!("start index {start} out of range for {n} points")));
    }
    let pts = cloud.points();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut current = start;
    loop {
        chosen.push(current);
        taken[current] = true;
        if chosen.len() == k {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            let d = dist2(&pts[i], &pts[current]);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if !taken[i] && best.is_none_or(|(_, bd)| min_d2[i] > bd) {
                best = Some((i, min_d2[i]));
            }
        }
        current = best.expect("k <= n leaves an untaken point").0;
    }
    Ok(chosen)
}

/// Farthest-point sampling whose first index is drawn from `seed`.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    let start = stream_rng(seed, stream::FPS_START).random_range(0..cloud.len());
    farthest_point_sample_from(cloud, k, start)
}

/// Globally nearest point of `target` to `query` (lowest index on ties).
pub fn nearest_neighbor(query: &Point3<f64>, target: &PointCloud) -> (usize, f64) {
    let Neighbor { index, dist2 } = target
        .kdtree()
        .nearest(query)
        .expect("cloud is nonempty");
    (index, dist2.sqrt())
}

/// Uniform random subset of `round(ratio * N)` points, kept in original order.
pub fn subsample(cloud: &PointCloud, ratio: f64, seed: u64) -> Result<PointCloud> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(invalid(format!("subsample ratio must lie in (0, 1], got {ratio}")));
    }
    let n = cloud.len();
    let m = (n as f64 * ratio).round() as usize;
    if m == 0 {
        return Err(invalid(format!(
            "subsample ratio {ratio} leaves no points out of {n}"
        )));
    }
    let mut rng = stream_rng(seed, stream::SUBSAMPLE);
    let mut picked = index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(PointCloud {
        points: picked.into_iter().map(|i| cloud.points[i]).collect(),
    })
}

/// Adds independent zero-mean Gaussian noise of standard deviation `sigma` to every coordinate.
pub fn add_gaussian_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
    let mut rng = stream_rng(seed, stream::NOISE);
    let points = cloud
        .points
        .iter()
        .map(|p| {
            Point3::new(
                p.x + normal.sample(&mut rng),
                p.y + normal.sample(&mut rng),
                p.z + normal.sample(&mut rng),
            )
        })
        .collect();
    Ok(PointCloud { points })
}

/// Uniform samples inside an axis-aligned box.
pub fn sample_in_box(bbox: &BoundingBox, count: usize, seed: u64) -> Vec<Point3<f64>> {
    let mut rng = stream_rng(seed, stream::BBOX_SAMPLES);
    (0..count)
        .map(|_| {
            Point3::new(
                rng.random_range(bbox.min.x..=bbox.max.x),
                rng.random_range(bbox.min.y..=bbox.max.y),
                rng.random_range(bbox.min.z..=bbox.max.z),
            )
        })
        .collect()
}
