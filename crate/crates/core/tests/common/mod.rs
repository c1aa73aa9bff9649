#![allow(dead_code)]

pub mod checks;

use nalgebra::Point3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use skelfit_core::cloud::{add_gaussian_noise, normalize};
use skelfit_core::rng::stream_rng;
use skelfit_core::shapes;
use skelfit_core::{ActivationVector, PointCloud, SubCloudSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    // streams above 100 stay clear of the library's own consumers
    stream_rng(seed, 100)
}

pub fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Point3<f64> {
    Point3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Coordinates snapped to a coarse grid so that distance ties are common.
pub fn grid_point(rng: &mut ChaCha8Rng, steps: i32) -> Point3<f64> {
    let mut c = || rng.random_range(-steps..=steps) as f64 * 0.25;
    Point3::new(c(), c(), c())
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> PointCloud {
    PointCloud::new((0..n).map(|_| random_point(rng, scale)).collect()).unwrap()
}

pub fn random_subclouds(rng: &mut ChaCha8Rng, edges: usize, max_pts: usize, scale: f64) -> SubCloudSet {
    SubCloudSet::from_groups(
        (0..edges)
            .map(|_| {
                let n = rng.random_range(1..=max_pts);
                (0..n).map(|_| random_point(rng, scale)).collect()
            })
            .collect(),
    )
}

pub fn random_activations(rng: &mut ChaCha8Rng, edges: usize, lo: f64, hi: f64) -> ActivationVector {
    ActivationVector::new((0..edges).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn d(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

/// Noisy segment in normalized units, with its true endpoints in the same frame.
pub fn unit_segment(n: usize, sigma: f64, seed: u64) -> (PointCloud, [Point3<f64>; 2]) {
    let raw = shapes::segment(n, seed);
    let (clean, t) = normalize(&raw).unwrap();
    let ends = shapes::SEGMENT_ENDS.map(|p| t.apply(&Point3::from(p)));
    (add_gaussian_noise(&clean, sigma, seed).unwrap(), ends)
}

/// Worse endpoint error under the better of the two orderings.
pub fn endpoint_error(kp: &[Point3<f64>], ends: &[Point3<f64>; 2]) -> f64 {
    let e = |a: &Point3<f64>, b: &Point3<f64>| (a - b).norm();
    let straight = e(&kp[0], &ends[0]).max(e(&kp[1], &ends[1]));
    let swapped = e(&kp[0], &ends[1]).max(e(&kp[1], &ends[0]));
    straight.min(swapped)
}
