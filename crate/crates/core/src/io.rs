//! Point-cloud and annotation file formats.
//!
//! * `xyz`: one point per line, whitespace-separated reals, blank lines ignored.
//!   Columns after the third are ignored (the reconstruction dump appends an
//!   edge index there).
//! * ascii PLY: vertex positions only; other properties and elements skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationSet;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Xyz,
    Ply,
}

impl CloudFormat {
    /// Guesses from the extension; anything but `.ply` is read as xyz.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::Ply,
            _ => CloudFormat::Xyz,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xyz" => Ok(CloudFormat::Xyz),
            "ply" => Ok(CloudFormat::Ply),
            other => Err(Error::InvalidArgument(format!("unknown cloud format {other:?}"))),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = read_to_string(path)?;
    match format {
        CloudFormat::Xyz => parse_xyz(&text, path),
        CloudFormat::Ply => parse_ply(&text, path),
    }
}

fn parse_coord(tok: Option<&str>, path: &Path, line: usize) -> Result<f64> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let tok = tok.ok_or_else(|| parse_err("expected three coordinates".into()))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(format!("{tok:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(format!("{tok:?} is not finite")));
    }
    Ok(v)
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace().peekable();
        if toks.peek().is_none() {
            continue;
        }
        let x = parse_coord(toks.next(), path, i + 1)?;
        let y = parse_coord(toks.next(), path, i + 1)?;
        let z = parse_coord(toks.next(), path, i + 1)?;
        points.push(Point3::new(x, y, z));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput(format!("{} contains no points", path.display())));
    }
    PointCloud::new(points)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let err = |line: usize, message: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_done = false;
    for (i, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(err(i + 1, &format!("unsupported PLY format {other:?}")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(i + 1, "bad element count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(i + 1, "property before any element"))?;
                el.properties.push(name.to_string());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(err(i + 1, "unrecognized header line")),
        }
    }
    if !header_done {
        return Err(err(1, "missing end_header"));
    }
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| err(1, "no vertex element"))?;
    let vertex = &elements[vertex_pos];
    let column = |name: &str| {
        vertex
            .properties
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| err(1, &format!("vertex element lacks property {name}")))
    };
    let (cx, cy, cz) = (column("x")?, column("y")?, column("z")?);

    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    let skip: usize = elements[..vertex_pos].iter().map(|e| e.count).sum();
    for _ in 0..skip {
        body.next().ok_or_else(|| err(0, "file ends before vertex data"))?;
    }
    let mut points = Vec::with_capacity(vertex.count);
    for _ in 0..vertex.count {
        let (i, line) = body
            .next()
            .ok_or_else(|| err(0, "file ends before all vertices were read"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let x = parse_coord(toks.get(cx).copied(), path, i + 1)?;
        let y = parse_coord(toks.get(cy).copied(), path, i + 1)?;
        let z = parse_coord(toks.get(cz).copied(), path, i + 1)?;
        points.push(Point3::new(x, y, z));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput(format!("{} has zero vertices", path.display())));
    }
    PointCloud::new(points)
}

/// Formats points as xyz text. Uses shortest round-trip float formatting, so
/// loading the output reproduces the points bit-for-bit.
pub fn format_xyz(points: &[Point3<f64>]) -> String {
    let mut s = String::with_capacity(points.len() * 32);
    for p in points {
        writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    s
}

pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_string(path, &format_xyz(cloud.points()))
}

pub fn format_ply(points: &[Point3<f64>]) -> String {
    let mut s = String::new();
    writeln!(s, "ply\nformat ascii 1.0\nelement vertex {}", points.len()).unwrap();
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    s.push_str(&format_xyz(points));
    s
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_string(path, &format_ply(cloud.points()))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud, format: CloudFormat) -> Result<()> {
    match format {
        CloudFormat::Xyz => write_xyz(path, cloud),
        CloudFormat::Ply => write_ply(path, cloud),
    }
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_string(path, &s)
}
