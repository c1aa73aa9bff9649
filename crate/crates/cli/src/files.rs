//! Loading helpers that attach paths and exit classes to failures.

use std::fs;
use std::path::Path;

use nalgebra::Point3;
use serde::de::DeserializeOwned;
use serde::Serialize;
use skelfit_core::io::{load_cloud, CloudFormat};
use skelfit_core::{PointCloud, SkeletonDoc};

use crate::error::{CliError, CliResult, Kind};
use crate::manifest::sha256_bytes;

/// Parsed configuration plus the digest of its exact bytes.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<(T, String)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e).into_config(path))?;
    let value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::new(Kind::Config, format!("{}: {e}", path.display())).at(path))?;
    Ok((value, sha256_bytes(&bytes)))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::new(Kind::Io, format!("{}: {e}", path.display())).at(path))
}

pub fn read_cloud(path: &Path) -> CliResult<PointCloud> {
    load_cloud(path, CloudFormat::from_path(path)).map_err(|e| CliError::from(e).at(path))
}

/// Ordered keypoints from a skeleton document, a JSON list of `[x, y, z]`,
/// or an xyz file.
pub fn read_keypoints(path: &Path) -> CliResult<Vec<Point3<f64>>> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        return Ok(read_cloud(path)?.into_points());
    }
    let value: serde_json::Value = read_json(path)?;
    if let Ok(doc) = serde_json::from_value::<SkeletonDoc>(value.clone()) {
        return Ok(doc.keypoints.iter().map(|&p| Point3::from(p)).collect());
    }
    let list: Vec<[f64; 3]> = serde_json::from_value(value).map_err(|_| {
        CliError::new(Kind::Io, format!("{}: expected a skeleton document or a list of [x, y, z]", path.display()))
            .at(path)
    })?;
    if list.is_empty() {
        return Err(CliError::usage(format!("{}: keypoint list is empty", path.display())).at(path));
    }
    Ok(list.into_iter().map(Point3::from).collect())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_pretty<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    write_text(path, &(text + "\n"))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
