//! Label encoding and similarity retrieval over solved PDEs.
//!
//! Each label category becomes a block of the feature vector: a one-hot
//! block scaled by the category weight, or a single `{0, w}` entry for
//! boolean categories. The default layout has 22 dimensions:
//!
//! | block                | dims | default weight |
//! |----------------------|------|----------------|
//! | equation_type        | 4    | 3.0            |
//! | spatial_dims_class   | 4    | 1.0            |
//! | linearity            | 2    | 2.0            |
//! | time_dependence      | 1    | 1.0            |
//! | bc_type              | 4    | 1.0            |
//! | ic_present           | 1    | 1.0            |
//! | coefficient_type     | 2    | 1.0            |
//! | time_scale           | 2    | 1.0            |
//! | geometric_complexity | 2    | 1.0            |
//!
//! Similarity is the cosine of `W·a` and `W·b`. Encoding already applies the
//! category weights, so `W` defaults to the identity.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::FeatureLabels;
use crate::db::RunRecord;
use crate::space::HyperConfig;

/// Similarities closer than this are ranked as ties.
pub const SIMILARITY_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PgkrError {
    #[error("similarity undefined for a zero vector (index {0})")]
    ZeroVector(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("no solved candidate PDEs in the database")]
    EmptyRetrieval,
    #[error("invalid weight scheme: {0}")]
    Scheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    EquationType,
    SpatialDimsClass,
    Linearity,
    TimeDependence,
    BcType,
    IcPresent,
    CoefficientType,
    TimeScale,
    GeometricComplexity,
}

/// Block order of the feature vector.
pub const CATEGORIES: [Category; 9] = [
    Category::EquationType,
    Category::SpatialDimsClass,
    Category::Linearity,
    Category::TimeDependence,
    Category::BcType,
    Category::IcPresent,
    Category::CoefficientType,
    Category::TimeScale,
    Category::GeometricComplexity,
];

impl Category {
    pub fn block_len(self) -> usize {
        match self {
            Category::EquationType | Category::SpatialDimsClass | Category::BcType => 4,
            Category::Linearity | Category::CoefficientType | Category::TimeScale | Category::GeometricComplexity => 2,
            Category::TimeDependence | Category::IcPresent => 1,
        }
    }

    /// Local index of the hot entry, or `None` for an unset boolean.
    fn hot(self, l: &FeatureLabels) -> Option<usize> {
        match self {
            Category::EquationType => Some(l.equation_type.index()),
            Category::SpatialDimsClass => Some(l.spatial_dims_class.index()),
            Category::Linearity => Some(l.linearity.index()),
            Category::TimeDependence => l.time_dependence.then_some(0),
            Category::BcType => Some(l.bc_type.index()),
            Category::IcPresent => l.ic_present.then_some(0),
            Category::CoefficientType => Some(l.coefficient_type.index()),
            Category::TimeScale => Some(l.time_scale.index()),
            Category::GeometricComplexity => Some(l.geometric_complexity.index()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per-category weights plus an optional diagonal applied at similarity time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    weights: BTreeMap<Category, f64>,
    similarity_diagonal: Option<Vec<f64>>,
}

/// On-disk form; omitted categories keep their default weight.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    #[serde(default)]
    weights: BTreeMap<Category, f64>,
    #[serde(default)]
    similarity_diagonal: Option<Vec<f64>>,
}

impl Default for WeightScheme {
    fn default() -> Self {
        let weights = CATEGORIES
            .iter()
            .map(|&c| {
                let w = match c {
                    Category::EquationType => 3.0,
                    Category::Linearity => 2.0,
                    _ => 1.0,
                };
                (c, w)
            })
            .collect();
        Self {
            weights,
            similarity_diagonal: None,
        }
    }
}

impl WeightScheme {
    pub fn dim(&self) -> usize {
        CATEGORIES.iter().map(|c| c.block_len()).sum()
    }

    pub fn weight(&self, c: Category) -> f64 {
        self.weights[&c]
    }

    pub fn with_weight(mut self, c: Category, w: f64) -> Result<Self, PgkrError> {
        if !(w.is_finite() && w > 0.0) {
            return Err(PgkrError::Scheme(format!("weight for {c:?} must be positive, got {w}")));
        }
        self.weights.insert(c, w);
        Ok(self)
    }

    pub fn with_similarity_diagonal(mut self, diag: Vec<f64>) -> Result<Self, PgkrError> {
        if diag.len() != self.dim() {
            return Err(PgkrError::Dimension(diag.len(), self.dim()));
        }
        if diag.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(PgkrError::Scheme("similarity diagonal entries must be positive".into()));
        }
        self.similarity_diagonal = Some(diag);
        Ok(self)
    }

    /// Index range of each block within the feature vector.
    pub fn layout(&self) -> Vec<(Category, std::ops::Range<usize>)> {
        let mut start = 0;
        CATEGORIES
            .iter()
            .map(|&c| {
                let r = start..start + c.block_len();
                start = r.end;
                (c, r)
            })
            .collect()
    }

    pub fn from_yaml(text: &str) -> Result<Self, PgkrError> {
        let file: WeightFile = serde_yaml::from_str(text).map_err(|e| PgkrError::Scheme(e.to_string()))?;
        let mut scheme = WeightScheme::default();
        for (c, w) in file.weights {
            scheme = scheme.with_weight(c, w)?;
        }
        if let Some(d) = file.similarity_diagonal {
            scheme = scheme.with_similarity_diagonal(d)?;
        }
        Ok(scheme)
    }

    pub fn load(path: &Path) -> Result<Self, PgkrError> {
        let text = std::fs::read_to_string(path).map_err(|e| PgkrError::Scheme(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&text)
    }

    /// Weighted cosine similarity under this scheme's diagonal.
    pub fn similarity(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64, PgkrError> {
        match &self.similarity_diagonal {
            None => similarity(a, b),
            Some(d) => {
                if a.dim() != d.len() || b.dim() != d.len() {
                    return Err(PgkrError::Dimension(a.dim(), d.len()));
                }
                let scale = |v: &FeatureVector| FeatureVector {
                    values: v.values.iter().zip(d).map(|(x, w)| x * w).collect(),
                };
                similarity(&scale(a), &scale(b))
            }
        }
    }
}

pub fn encode(labels: &FeatureLabels, scheme: &WeightScheme) -> FeatureVector {
    let mut values = vec![0.0; scheme.dim()];
    for (c, range) in scheme.layout() {
        if let Some(i) = c.hot(labels) {
            values[range.start + i] = scheme.weight(c);
        }
    }
    FeatureVector { values }
}

/// Cosine of the angle between two (already weighted) vectors.
pub fn similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64, PgkrError> {
    if a.dim() != b.dim() {
        return Err(PgkrError::Dimension(a.dim(), b.dim()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na: f64 = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 {
        return Err(PgkrError::ZeroVector(0));
    }
    if nb == 0.0 {
        return Err(PgkrError::ZeroVector(1));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Pairwise similarities with a row/column id map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

pub fn similarity_matrix(ids: &[String], vectors: &[FeatureVector]) -> Result<SimilarityMatrix, PgkrError> {
    let n = vectors.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s = if i == j {
                // Self-similarity, still validated for zero vectors.
                similarity(&vectors[i], &vectors[i]).map_err(|_| PgkrError::ZeroVector(i))?;
                1.0
            } else {
                similarity(&vectors[i], &vectors[j]).map_err(|e| match e {
                    PgkrError::ZeroVector(0) => PgkrError::ZeroVector(i),
                    PgkrError::ZeroVector(_) => PgkrError::ZeroVector(j),
                    other => other,
                })?
            };
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    Ok(SimilarityMatrix {
        ids: ids.to_vec(),
        values,
    })
}

/// One retrieved PDE with its best configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub pde_id: String,
    pub similarity: f64,
    pub config: HyperConfig,
    pub mse: f64,
}

/// Ranking used by [`top_k`]: similarity descending (ties within
/// [`SIMILARITY_TIE_EPS`]), then best MSE ascending, then id.
pub fn rank_order(a: &Retrieved, b: &Retrieved) -> Ordering {
    if (a.similarity - b.similarity).abs() > SIMILARITY_TIE_EPS {
        return b.similarity.total_cmp(&a.similarity);
    }
    a.mse.total_cmp(&b.mse).then_with(|| a.pde_id.cmp(&b.pde_id))
}

/// Best non-diverged record per PDE, earliest first on equal MSE.
pub fn best_per_pde(records: &[RunRecord]) -> BTreeMap<&str, &RunRecord> {
    let mut best: BTreeMap<&str, &RunRecord> = BTreeMap::new();
    for r in records {
        let Some(mse) = r.completed_mse() else { continue };
        match best.get(r.pde_id.as_str()) {
            Some(cur) if cur.completed_mse().is_some_and(|m| m <= mse) => {}
            _ => {
                best.insert(r.pde_id.as_str(), r);
            }
        }
    }
    best
}

/// Most similar solved PDEs to `target`, excluding `target_id` itself.
pub fn top_k(
    target_id: &str,
    target: &FeatureLabels,
    records: &[RunRecord],
    k: usize,
    scheme: &WeightScheme,
) -> Result<Vec<Retrieved>, PgkrError> {
    let tv = encode(target, scheme);
    let mut ranked = Vec::new();
    for (id, rec) in best_per_pde(records) {
        if id == target_id {
            continue;
        }
        let v = encode(&rec.labels, scheme);
        ranked.push(Retrieved {
            pde_id: id.to_string(),
            similarity: scheme.similarity(&tv, &v)?,
            config: rec.config,
            mse: rec.completed_mse().expect("best records are completed"),
        });
    }
    if ranked.is_empty() {
        return Err(PgkrError::EmptyRetrieval);
    }
    ranked.sort_by(rank_order);
    ranked.truncate(k);
    Ok(ranked)
}
