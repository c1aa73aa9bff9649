//! Synthetic shapes with known skeletons.

use nalgebra::Point3;
use rand::Rng;

use crate::cloud::PointCloud;
use crate::rng::{stream, stream_rng};

/// Points spread uniformly along segments, chosen round-robin so every
/// segment receives `n / segments.len()` points (±1).
pub fn sample_segments(segments: &[(Point3<f64>, Point3<f64>)], n: usize, seed: u64) -> PointCloud {
    let mut rng = stream_rng(seed, stream::SYNTHETIC);
    let points = (0..n)
        .map(|i| {
            let (a, b) = segments[i % segments.len()];
            let t: f64 = rng.random();
            a + (b - a) * t
        })
        .collect();
    PointCloud::new(points).expect("n > 0")
}

pub const SEGMENT_ENDS: [[f64; 3]; 2] = [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];

/// Arm tips of the cross: two perpendicular unit-half-length segments sharing
/// their midpoint. Tips 0-1 span one segment and tips 2-3 the other.
pub const CROSS_TIPS: [[f64; 3]; 4] = [
    [-1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0],
];

pub fn segment(n: usize, seed: u64) -> PointCloud {
    let [a, b] = SEGMENT_ENDS.map(Point3::from);
    sample_segments(&[(a, b)], n, seed)
}

pub fn cross(n: usize, seed: u64) -> PointCloud {
    let t = CROSS_TIPS.map(Point3::from);
    sample_segments(&[(t[0], t[1]), (t[2], t[3])], n, seed)
}
