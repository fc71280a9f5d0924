//! Collocation point sampling.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Interval, PdeSpec, Side};
use crate::space::HyperConfig;

/// Sampled training points; one point per row, time (if any) last.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSets {
    pub domain: Array2<f64>,
    pub boundary: Array2<f64>,
    /// Index into `pde.boundary_conditions` for every boundary row.
    pub boundary_condition: Vec<usize>,
    /// Points on the `t = t0` slice; empty for steady problems.
    pub initial: Array2<f64>,
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn interior<R: Rng>(iv: &Interval, rng: &mut R) -> f64 {
    loop {
        let x = iv.lo + iv.width() * open_unit(rng);
        if x > iv.lo && x < iv.hi {
            return x;
        }
    }
}

fn closed<R: Rng>(iv: &Interval, rng: &mut R) -> f64 {
    iv.lo + iv.width() * rng.random::<f64>()
}

/// Uniform samples: strictly interior domain points, boundary points
/// assigned to faces round-robin in condition order, and initial points on
/// the `t = t0` slice. Deterministic in `seed`.
pub fn sample_points(pde: &PdeSpec, config: &HyperConfig, seed: u64) -> PointSets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = pde.coords();

    let n_dom = config.n_domain as usize;
    let mut domain = Array2::zeros((n_dom, d));
    for i in 0..n_dom {
        for (k, iv) in pde.domain.iter().enumerate() {
            domain[[i, k]] = interior(iv, &mut rng);
        }
    }

    let n_bnd = config.n_boundary as usize;
    let faces = pde.boundary_conditions.len();
    let mut boundary = Array2::zeros((n_bnd, d));
    let mut boundary_condition = Vec::with_capacity(n_bnd);
    for i in 0..n_bnd {
        let c = i % faces;
        let face = pde.boundary_conditions[c].region;
        for (k, iv) in pde.domain.iter().enumerate() {
            boundary[[i, k]] = if k == face.axis {
                match face.side {
                    Side::Lower => iv.lo,
                    Side::Upper => iv.hi,
                }
            } else {
                closed(iv, &mut rng)
            };
        }
        boundary_condition.push(c);
    }

    let initial = match pde.time_axis() {
        Some(t_axis) if pde.initial_condition.is_some() => {
            let n = config.n_initial as usize;
            let mut init = Array2::zeros((n, d));
            for i in 0..n {
                for k in 0..pde.spatial_dims {
                    init[[i, k]] = closed(&pde.domain[k], &mut rng);
                }
                init[[i, t_axis]] = pde.domain[t_axis].lo;
            }
            init
        }
        _ => Array2::zeros((0, d)),
    };

    PointSets {
        domain,
        boundary,
        boundary_condition,
        initial,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::space::SearchSpace;

    fn config(pde: &PdeSpec) -> HyperConfig {
        let mut c = SearchSpace::tree(pde.time_dependent).base_config();
        c.n_domain = 600;
        c.n_boundary = 100;
        if pde.time_dependent {
            c.n_initial = 600;
        }
        c
    }

    #[test]
    fn poisson1d_boundary_alternates() {
        let pde = catalog::get("poisson1d").unwrap();
        let pts = sample_points(pde, &config(pde), 1);
        assert_eq!(pts.boundary.nrows(), 100);
        for i in 0..100 {
            assert_eq!(pts.boundary[[i, 0]], if i % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn heat_initial_slice() {
        let pde = catalog::get("heat1d").unwrap();
        let pts = sample_points(pde, &config(pde), 2);
        assert_eq!(pts.initial.nrows(), 600);
        assert!(pts.initial.column(1).iter().all(|t| *t == 0.0));
    }

    #[test]
    fn counts_and_regions() {
        for pde in catalog::list_pdes() {
            let c = config(pde);
            let pts = sample_points(pde, &c, 3);
            assert_eq!(pts.domain.nrows(), c.n_domain as usize);
            assert_eq!(pts.boundary.nrows(), c.n_boundary as usize);
            assert_eq!(pts.initial.nrows(), if pde.time_dependent { 600 } else { 0 });
            for row in pts.domain.rows() {
                for (x, iv) in row.iter().zip(&pde.domain) {
                    assert!(*x > iv.lo && *x < iv.hi, "{}", pde.id);
                }
            }
            for (row, &c) in pts.boundary.rows().into_iter().zip(&pts.boundary_condition) {
                let face = pde.boundary_conditions[c].region;
                let iv = pde.domain[face.axis];
                let target = if face.side == Side::Lower { iv.lo } else { iv.hi };
                assert!((row[face.axis] - target).abs() <= 1e-12);
                assert!(pde.contains(&row.to_vec()));
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let pde = catalog::get("burgers1d").unwrap();
        let c = config(pde);
        assert_eq!(sample_points(pde, &c, 9), sample_points(pde, &c, 9));
        assert_ne!(sample_points(pde, &c, 9), sample_points(pde, &c, 10));
    }
}
