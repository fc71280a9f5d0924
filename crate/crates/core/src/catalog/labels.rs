use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationType {
    Elliptic,
    Parabolic,
    Hyperbolic,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DimsClass {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "4+")]
    Many,
}

impl DimsClass {
    pub fn from_dims(dims: usize) -> Self {
        match dims {
            0 | 1 => DimsClass::One,
            2 => DimsClass::Two,
            3 => DimsClass::Three,
            _ => DimsClass::Many,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearity {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcType {
    Dirichlet,
    Neumann,
    Mixed,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientType {
    Constant,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScale {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricComplexity {
    Simple,
    Complex,
}

/// Categorical description of a PDE used for similarity retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureLabels {
    pub equation_type: EquationType,
    pub spatial_dims_class: DimsClass,
    pub linearity: Linearity,
    pub time_dependence: bool,
    pub bc_type: BcType,
    pub ic_present: bool,
    pub coefficient_type: CoefficientType,
    pub time_scale: TimeScale,
    pub geometric_complexity: GeometricComplexity,
}

pub const EQUATION_TYPES: [EquationType; 4] = [
    EquationType::Elliptic,
    EquationType::Parabolic,
    EquationType::Hyperbolic,
    EquationType::Mixed,
];
pub const DIMS_CLASSES: [DimsClass; 4] = [DimsClass::One, DimsClass::Two, DimsClass::Three, DimsClass::Many];
pub const LINEARITIES: [Linearity; 2] = [Linearity::Linear, Linearity::Nonlinear];
pub const BC_TYPES: [BcType; 4] = [BcType::Dirichlet, BcType::Neumann, BcType::Mixed, BcType::Periodic];
pub const COEFFICIENT_TYPES: [CoefficientType; 2] = [CoefficientType::Constant, CoefficientType::Variable];
pub const TIME_SCALES: [TimeScale; 2] = [TimeScale::Single, TimeScale::Multi];
pub const GEOMETRIC_COMPLEXITIES: [GeometricComplexity; 2] =
    [GeometricComplexity::Simple, GeometricComplexity::Complex];

fn position<T: PartialEq>(all: &[T], v: &T) -> usize {
    all.iter()
        .position(|x| x == v)
        .expect("enumeration lists every variant")
}

impl EquationType {
    pub fn index(self) -> usize {
        position(&EQUATION_TYPES, &self)
    }
}
impl DimsClass {
    pub fn index(self) -> usize {
        position(&DIMS_CLASSES, &self)
    }
}
impl Linearity {
    pub fn index(self) -> usize {
        position(&LINEARITIES, &self)
    }
}
impl BcType {
    pub fn index(self) -> usize {
        position(&BC_TYPES, &self)
    }
}
impl CoefficientType {
    pub fn index(self) -> usize {
        position(&COEFFICIENT_TYPES, &self)
    }
}
impl TimeScale {
    pub fn index(self) -> usize {
        position(&TIME_SCALES, &self)
    }
}
impl GeometricComplexity {
    pub fn index(self) -> usize {
        position(&GEOMETRIC_COMPLEXITIES, &self)
    }
}
