//! Built-in benchmark PDEs.
//!
//! Every problem lives on an axis-aligned box; when time dependent, time is
//! the last coordinate. Residuals take a [`DerivativeBundle`] holding the
//! solution value, all first partials and all pure second partials.

pub mod burgers;
pub mod jet;
mod labels;

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use labels::*;

use jet::{Jet, Scalar};

/// Slack allowed when checking that a point lies in the closed domain box.
pub const CLOSURE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown pde id `{0}`")]
    UnknownPde(String),
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point {point:?} lies outside the domain of `{pde}`")]
    OutsideDomain { pde: String, point: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Solution value with first and pure second partials w.r.t. every
/// coordinate (time included, last).
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub u: f64,
    pub grad: Vec<f64>,
    pub diag_hess: Vec<f64>,
}

impl DerivativeBundle {
    pub fn zeros(coords: usize) -> Self {
        Self {
            u: 0.0,
            grad: vec![0.0; coords],
            diag_hess: vec![0.0; coords],
        }
    }
}

/// Partials of a residual with respect to each bundle entry.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleSensitivity {
    pub du: f64,
    pub dgrad: Vec<f64>,
    pub ddiag_hess: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// A face of the domain box: coordinate `axis` pinned at its lower or upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Dirichlet,
    /// Prescribes the outward normal derivative.
    Neumann,
    /// Ties the face to its opposite face; the target is unused.
    Periodic,
}

pub type PointFn = fn(&[f64]) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct BoundaryCondition {
    pub region: Face,
    pub kind: ConditionKind,
    pub target: PointFn,
}

/// Conditions on the `t = t0` slice. `velocity` prescribes `u_t` for
/// second-order-in-time problems.
#[derive(Debug, Clone, Copy)]
pub struct InitialCondition {
    pub value: PointFn,
    pub velocity: Option<PointFn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Analytic,
    /// 64-node Gauss–Hermite Cole–Hopf evaluation.
    ColeHopfQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeKind {
    Poisson1d,
    Poisson2d,
    Poisson5d,
    Heat1d,
    Wave1d,
    Burgers1d,
}

pub const HEAT_DIFFUSIVITY: f64 = 0.1;

/// Which partials a residual reads; `second ⊆ first`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivativeNeeds {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PdeSpec {
    pub id: &'static str,
    pub kind: PdeKind,
    pub equation: &'static str,
    pub spatial_dims: usize,
    pub time_dependent: bool,
    pub domain: Vec<Interval>,
    pub boundary_conditions: Vec<BoundaryCondition>,
    pub initial_condition: Option<InitialCondition>,
    pub reference: ReferenceKind,
    pub labels: FeatureLabels,
}

/// Serializable view printed by `catalog list`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSummary {
    pub id: String,
    pub equation: String,
    pub spatial_dims: usize,
    pub time_dependent: bool,
    pub domain: Vec<Interval>,
    pub reference: ReferenceKind,
    pub labels: FeatureLabels,
}

fn sin_product<S: Scalar>(x: &[S]) -> S {
    x.iter().fold(S::constant(1.0), |acc, &xk| acc * xk.scale(PI).sin())
}

fn zero(_: &[f64]) -> f64 {
    0.0
}

fn sine_profile(p: &[f64]) -> f64 {
    (PI * p[0]).sin()
}

fn negative_sine_profile(p: &[f64]) -> f64 {
    -(PI * p[0]).sin()
}

impl PdeKind {
    /// Exact (or quadrature) solution, generic so jets give exact derivatives.
    pub fn reference<S: Scalar>(self, p: &[S]) -> S {
        match self {
            PdeKind::Poisson1d | PdeKind::Poisson2d | PdeKind::Poisson5d => sin_product(p),
            PdeKind::Heat1d => {
                let decay = p[1].scale(-HEAT_DIFFUSIVITY * PI * PI).exp();
                decay * p[0].scale(PI).sin()
            }
            PdeKind::Wave1d => p[0].scale(PI).sin() * p[1].scale(PI).cos(),
            PdeKind::Burgers1d => burgers::cole_hopf(p[0], p[1]),
        }
    }

    /// Right-hand side `f` of `-Δu = f` for the Poisson family.
    fn poisson_forcing(self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        d * PI * PI * sin_product(x)
    }

    /// Residual value and its partials. `grad`/`hess` are full-length; the
    /// sensitivity buffers are overwritten.
    pub fn residual_terms(
        self,
        x: &[f64],
        u: f64,
        grad: &[f64],
        hess: &[f64],
        dgrad: &mut [f64],
        dhess: &mut [f64],
    ) -> (f64, f64) {
        dgrad.iter_mut().for_each(|v| *v = 0.0);
        dhess.iter_mut().for_each(|v| *v = 0.0);
        match self {
            PdeKind::Poisson1d | PdeKind::Poisson2d | PdeKind::Poisson5d => {
                let lap: f64 = hess.iter().sum();
                dhess.iter_mut().for_each(|v| *v = -1.0);
                (-lap - self.poisson_forcing(x), 0.0)
            }
            PdeKind::Heat1d => {
                dgrad[1] = 1.0;
                dhess[0] = -HEAT_DIFFUSIVITY;
                (grad[1] - HEAT_DIFFUSIVITY * hess[0], 0.0)
            }
            PdeKind::Wave1d => {
                dhess[1] = 1.0;
                dhess[0] = -1.0;
                (hess[1] - hess[0], 0.0)
            }
            PdeKind::Burgers1d => {
                dgrad[1] = 1.0;
                dgrad[0] = u;
                dhess[0] = -burgers::NU;
                (grad[1] + u * grad[0] - burgers::NU * hess[0], grad[0])
            }
        }
    }

    pub fn needs(self) -> DerivativeNeeds {
        match self {
            PdeKind::Poisson1d => DerivativeNeeds {
                first: vec![0],
                second: vec![0],
            },
            PdeKind::Poisson2d => DerivativeNeeds {
                first: vec![0, 1],
                second: vec![0, 1],
            },
            PdeKind::Poisson5d => DerivativeNeeds {
                first: (0..5).collect(),
                second: (0..5).collect(),
            },
            PdeKind::Heat1d | PdeKind::Burgers1d => DerivativeNeeds {
                first: vec![0, 1],
                second: vec![0],
            },
            PdeKind::Wave1d => DerivativeNeeds {
                first: vec![0, 1],
                second: vec![0, 1],
            },
        }
    }
}

fn dirichlet_faces(spatial_dims: usize, target: PointFn) -> Vec<BoundaryCondition> {
    (0..spatial_dims)
        .flat_map(|axis| {
            [Side::Lower, Side::Upper]
                .into_iter()
                .map(move |side| BoundaryCondition {
                    region: Face { axis, side },
                    kind: ConditionKind::Dirichlet,
                    target,
                })
        })
        .collect()
}

fn steady_labels(dims: usize) -> FeatureLabels {
    FeatureLabels {
        equation_type: EquationType::Elliptic,
        spatial_dims_class: DimsClass::from_dims(dims),
        linearity: Linearity::Linear,
        time_dependence: false,
        bc_type: BcType::Dirichlet,
        ic_present: false,
        coefficient_type: CoefficientType::Constant,
        time_scale: TimeScale::Single,
        geometric_complexity: GeometricComplexity::Simple,
    }
}

fn evolution_labels(equation_type: EquationType, linearity: Linearity) -> FeatureLabels {
    FeatureLabels {
        equation_type,
        spatial_dims_class: DimsClass::One,
        linearity,
        time_dependence: true,
        bc_type: BcType::Dirichlet,
        ic_present: true,
        coefficient_type: CoefficientType::Constant,
        time_scale: TimeScale::Single,
        geometric_complexity: GeometricComplexity::Simple,
    }
}

fn build_catalog() -> Vec<PdeSpec> {
    let unit = Interval::new(0.0, 1.0);
    let poisson = |id, kind, equation, dims: usize| PdeSpec {
        id,
        kind,
        equation,
        spatial_dims: dims,
        time_dependent: false,
        domain: vec![unit; dims],
        boundary_conditions: dirichlet_faces(dims, zero),
        initial_condition: None,
        reference: ReferenceKind::Analytic,
        labels: steady_labels(dims),
    };
    let mut all = vec![
        poisson(
            "poisson1d",
            PdeKind::Poisson1d,
            "-u_xx = pi^2 sin(pi x), x in [0,1], u = 0 on the boundary",
            1,
        ),
        poisson(
            "poisson2d",
            PdeKind::Poisson2d,
            "-(u_xx + u_yy) = 2 pi^2 sin(pi x) sin(pi y), (x,y) in [0,1]^2, u = 0 on the boundary",
            2,
        ),
        poisson(
            "poisson5d",
            PdeKind::Poisson5d,
            "-sum_k u_{x_k x_k} = 5 pi^2 prod_k sin(pi x_k), x in [0,1]^5, u = 0 on the boundary",
            5,
        ),
        PdeSpec {
            id: "heat1d",
            kind: PdeKind::Heat1d,
            equation: "u_t = 0.1 u_xx, x in [0,1], t in [0,1], u(x,0) = sin(pi x), u = 0 at x = 0, 1",
            spatial_dims: 1,
            time_dependent: true,
            domain: vec![unit, unit],
            boundary_conditions: dirichlet_faces(1, zero),
            initial_condition: Some(InitialCondition {
                value: sine_profile,
                velocity: None,
            }),
            reference: ReferenceKind::Analytic,
            labels: evolution_labels(EquationType::Parabolic, Linearity::Linear),
        },
        PdeSpec {
            id: "wave1d",
            kind: PdeKind::Wave1d,
            equation: "u_tt = u_xx, x in [0,1], t in [0,1], u(x,0) = sin(pi x), u_t(x,0) = 0, u = 0 at x = 0, 1",
            spatial_dims: 1,
            time_dependent: true,
            domain: vec![unit, unit],
            boundary_conditions: dirichlet_faces(1, zero),
            initial_condition: Some(InitialCondition {
                value: sine_profile,
                velocity: Some(zero),
            }),
            reference: ReferenceKind::Analytic,
            labels: evolution_labels(EquationType::Hyperbolic, Linearity::Linear),
        },
        PdeSpec {
            id: "burgers1d",
            kind: PdeKind::Burgers1d,
            equation: "u_t + u u_x = (0.01/pi) u_xx, x in [-1,1], t in [0,1], u(x,0) = -sin(pi x), u = 0 at x = -1, 1",
            spatial_dims: 1,
            time_dependent: true,
            domain: vec![Interval::new(-1.0, 1.0), unit],
            boundary_conditions: dirichlet_faces(1, zero),
            initial_condition: Some(InitialCondition {
                value: negative_sine_profile,
                velocity: None,
            }),
            reference: ReferenceKind::ColeHopfQuadrature,
            labels: evolution_labels(EquationType::Parabolic, Linearity::Nonlinear),
        },
    ];
    all.sort_by(|a, b| a.id.cmp(b.id));
    all
}

/// All built-in PDEs, ordered by id.
pub fn list_pdes() -> &'static [PdeSpec] {
    static CATALOG: OnceLock<Vec<PdeSpec>> = OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

pub fn get(id: &str) -> Result<&'static PdeSpec, CatalogError> {
    list_pdes()
        .iter()
        .find(|p| p.id == id)
        .ok_or_else(|| CatalogError::UnknownPde(id.to_string()))
}

impl PdeSpec {
    /// Spatial coordinates plus time, when present.
    pub fn coords(&self) -> usize {
        self.spatial_dims + usize::from(self.time_dependent)
    }

    pub fn time_axis(&self) -> Option<usize> {
        self.time_dependent.then_some(self.spatial_dims)
    }

    pub fn summary(&self) -> PdeSummary {
        PdeSummary {
            id: self.id.to_string(),
            equation: self.equation.to_string(),
            spatial_dims: self.spatial_dims,
            time_dependent: self.time_dependent,
            domain: self.domain.clone(),
            reference: self.reference,
            labels: self.labels,
        }
    }

    pub fn needs(&self) -> DerivativeNeeds {
        self.kind.needs()
    }

    fn check_dims(&self, got: usize) -> Result<(), CatalogError> {
        if got != self.coords() {
            return Err(CatalogError::Dimension {
                expected: self.coords(),
                got,
            });
        }
        Ok(())
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.coords()
            && point
                .iter()
                .zip(&self.domain)
                .all(|(&x, iv)| x >= iv.lo - CLOSURE_TOL && x <= iv.hi + CLOSURE_TOL)
    }

    fn check_point(&self, point: &[f64]) -> Result<(), CatalogError> {
        self.check_dims(point.len())?;
        if !self.contains(point) {
            return Err(CatalogError::OutsideDomain {
                pde: self.id.to_string(),
                point: point.to_vec(),
            });
        }
        Ok(())
    }

    /// `F(x, u, ∇u, ∇²u)` for the supplied bundle.
    pub fn residual(&self, point: &[f64], bundle: &DerivativeBundle) -> Result<f64, CatalogError> {
        Ok(self.residual_with_sensitivity(point, bundle)?.0)
    }

    pub fn residual_with_sensitivity(
        &self,
        point: &[f64],
        bundle: &DerivativeBundle,
    ) -> Result<(f64, BundleSensitivity), CatalogError> {
        self.check_dims(point.len())?;
        self.check_dims(bundle.grad.len())?;
        self.check_dims(bundle.diag_hess.len())?;
        let n = self.coords();
        let mut dgrad = vec![0.0; n];
        let mut dhess = vec![0.0; n];
        let (r, du) =
            self.kind
                .residual_terms(point, bundle.u, &bundle.grad, &bundle.diag_hess, &mut dgrad, &mut dhess);
        Ok((
            r,
            BundleSensitivity {
                du,
                dgrad,
                ddiag_hess: dhess,
            },
        ))
    }

    pub fn reference_solution(&self, point: &[f64]) -> Result<f64, CatalogError> {
        self.check_point(point)?;
        Ok(self.kind.reference(point))
    }

    /// Reference value without the domain check, for hot loops over
    /// points already known to be inside.
    pub fn reference_unchecked(&self, point: &[f64]) -> f64 {
        self.kind.reference(point)
    }

    /// Exact derivative bundle of the reference solution.
    pub fn reference_bundle(&self, point: &[f64]) -> Result<DerivativeBundle, CatalogError> {
        self.check_point(point)?;
        let n = self.coords();
        let mut bundle = DerivativeBundle::zeros(n);
        bundle.u = self.kind.reference(point);
        let mut jets: Vec<Jet> = point.iter().map(|&v| Jet::constant(v)).collect();
        for k in 0..n {
            jets[k] = Jet::variable(point[k]);
            let j = self.kind.reference(&jets);
            bundle.grad[k] = j.d;
            bundle.diag_hess[k] = j.dd;
            jets[k] = Jet::constant(point[k]);
        }
        Ok(bundle)
    }

    /// Boundary conditions attached to each spatial face.
    pub fn condition_on(&self, face: Face) -> Option<&BoundaryCondition> {
        self.boundary_conditions.iter().find(|bc| bc.region == face)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interior_point(pde: &PdeSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
        pde.domain
            .iter()
            .map(|iv| iv.lo + iv.width() * rng.random_range(0.001..0.999))
            .collect()
    }

    #[test]
    fn catalog_is_sorted_and_complete() {
        let ids: Vec<_> = list_pdes().iter().map(|p| p.id).collect();
        assert!(ids.contains(&"poisson1d"));
        assert_eq!(ids.len(), 6);
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn labels_agree_with_spec_shape() {
        for pde in list_pdes() {
            assert_eq!(pde.labels.time_dependence, pde.time_dependent, "{}", pde.id);
            assert_eq!(pde.labels.ic_present, pde.initial_condition.is_some(), "{}", pde.id);
            assert_eq!(pde.time_dependent, pde.initial_condition.is_some());
            assert_eq!(pde.labels.spatial_dims_class, DimsClass::from_dims(pde.spatial_dims));
            assert_eq!(pde.domain.len(), pde.coords());
        }
    }

    #[test]
    fn boundary_regions_lie_on_domain_faces() {
        for pde in list_pdes() {
            for bc in &pde.boundary_conditions {
                assert!(bc.region.axis < pde.spatial_dims, "{}: faces are spatial", pde.id);
            }
            assert_eq!(pde.boundary_conditions.len(), 2 * pde.spatial_dims);
        }
    }

    #[test]
    fn poisson1d_exact_bundle_annihilates_residual() {
        let pde = get("poisson1d").unwrap();
        let x = 0.5;
        let bundle = DerivativeBundle {
            u: (PI * x).sin(),
            grad: vec![PI * (PI * x).cos()],
            diag_hess: vec![-PI * PI * (PI * x).sin()],
        };
        assert!(pde.residual(&[x], &bundle).unwrap().abs() < 1e-10);
    }

    #[test]
    fn constants_solve_heat() {
        let pde = get("heat1d").unwrap();
        let bundle = DerivativeBundle {
            u: 1.0,
            grad: vec![0.0, 0.0],
            diag_hess: vec![0.0, 0.0],
        };
        assert_eq!(pde.residual(&[0.3, 0.4], &bundle).unwrap(), 0.0);
    }

    #[test]
    fn residual_rejects_wrong_dimensions() {
        let pde = get("heat1d").unwrap();
        let bundle = DerivativeBundle::zeros(1);
        assert!(matches!(
            pde.residual(&[0.3, 0.4], &bundle),
            Err(CatalogError::Dimension { expected: 2, got: 1 })
        ));
        assert!(pde.residual(&[0.3], &DerivativeBundle::zeros(2)).is_err());
    }

    #[test]
    fn reference_values() {
        assert_eq!(get("poisson1d").unwrap().reference_solution(&[0.0]).unwrap(), 0.0);
        let heat = get("heat1d").unwrap().reference_solution(&[0.5, 0.0]).unwrap();
        assert!((heat - 1.0).abs() < 1e-15);
        assert!(matches!(
            get("poisson1d").unwrap().reference_solution(&[1.5]),
            Err(CatalogError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn reference_satisfies_dirichlet_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for pde in list_pdes() {
            for bc in &pde.boundary_conditions {
                for _ in 0..20 {
                    let mut p = interior_point(pde, &mut rng);
                    let iv = pde.domain[bc.region.axis];
                    p[bc.region.axis] = match bc.region.side {
                        Side::Lower => iv.lo,
                        Side::Upper => iv.hi,
                    };
                    let u = pde.reference_solution(&p).unwrap();
                    assert!((u - (bc.target)(&p)).abs() < 1e-10, "{} at {p:?}: {u}", pde.id);
                }
            }
        }
    }

    #[test]
    fn reference_matches_initial_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for pde in list_pdes().iter().filter(|p| p.time_dependent) {
            let ic = pde.initial_condition.unwrap();
            for _ in 0..20 {
                let mut p = interior_point(pde, &mut rng);
                p[pde.spatial_dims] = pde.domain[pde.spatial_dims].lo;
                let u = pde.reference_solution(&p).unwrap();
                assert!((u - (ic.value)(&p)).abs() < 1e-12, "{}", pde.id);
                if let Some(v) = ic.velocity {
                    let b = pde.reference_bundle(&p).unwrap();
                    assert!((b.grad[pde.spatial_dims] - v(&p)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn residual_of_reference_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for pde in list_pdes() {
            let tol = if pde.kind == PdeKind::Burgers1d { 1e-5 } else { 1e-8 };
            for _ in 0..100 {
                let p = interior_point(pde, &mut rng);
                let b = pde.reference_bundle(&p).unwrap();
                let r = pde.residual(&p, &b).unwrap();
                assert!(r.abs() <= tol, "{} at {p:?}: {r}", pde.id);
            }
        }
    }

    #[test]
    fn burgers_residual_with_finite_difference_bundle() {
        // Fourth-order central differences of the quadrature oracle.
        let pde = get("burgers1d").unwrap();
        let f = |x: f64, t: f64| burgers::cole_hopf(x, t);
        let (x, t, h) = (0.3, 0.2, 1e-3);
        let d1 = |g: &dyn Fn(f64) -> f64, a: f64| {
            (-g(a + 2.0 * h) + 8.0 * g(a + h) - 8.0 * g(a - h) + g(a - 2.0 * h)) / (12.0 * h)
        };
        let d2 = |g: &dyn Fn(f64) -> f64, a: f64| {
            (-g(a + 2.0 * h) + 16.0 * g(a + h) - 30.0 * g(a) + 16.0 * g(a - h) - g(a - 2.0 * h)) / (12.0 * h * h)
        };
        let fx = |a: f64| f(a, t);
        let ft = |a: f64| f(x, a);
        let bundle = DerivativeBundle {
            u: f(x, t),
            grad: vec![d1(&fx, x), d1(&ft, t)],
            diag_hess: vec![d2(&fx, x), d2(&ft, t)],
        };
        let r = pde.residual(&[x, t], &bundle).unwrap();
        assert!(r.abs() < 1e-6, "{r}");
    }

    #[test]
    fn evaluation_is_deterministic() {
        let pde = get("burgers1d").unwrap();
        let a = pde.reference_bundle(&[0.13, 0.77]).unwrap();
        let b = pde.reference_bundle(&[0.13, 0.77]).unwrap();
        assert_eq!(a, b);
    }
}
