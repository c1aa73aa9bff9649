use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled keypoint. Serialized as `{"xyz": [x, y, z], "semantic_id": n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub xyz: Point3<f64>,
    pub semantic_id: u32,
}

/// Nonempty ordered list of semantically labeled keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Annotation>", into = "Vec<Annotation>")]
pub struct AnnotationSet {
    items: Vec<Annotation>,
}

impl AnnotationSet {
    pub fn new(items: Vec<Annotation>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyInput("annotation set has no keypoints".into()));
        }
        if items.iter().any(|a| !a.xyz.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument(
                "annotation coordinates must be finite".into(),
            ));
        }
        Ok(AnnotationSet { items })
    }

    /// Convenience constructor from `(point, label)` pairs.
    pub fn from_pairs(pairs: &[([f64; 3], u32)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(p, semantic_id)| Annotation {
                    xyz: Point3::from(p),
                    semantic_id,
                })
                .collect(),
        )
    }

    pub fn items(&self) -> &[Annotation] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.items.iter().map(|a| a.xyz).collect()
    }
}

impl TryFrom<Vec<Annotation>> for AnnotationSet {
    type Error = Error;
    fn try_from(v: Vec<Annotation>) -> Result<Self> {
        AnnotationSet::new(v)
    }
}

impl From<AnnotationSet> for Vec<Annotation> {
    fn from(s: AnnotationSet) -> Self {
        s.items
    }
}
