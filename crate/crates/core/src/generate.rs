//! Random instances with a known projection.
//!
//! Sets are built around the origin. A non-interior set has `K′` tight
//! halfspaces through the origin and `K − K′` with offsets of at least
//! [`MIN_SLACK`]; interior sets have only slack halfspaces. The anchor is a
//! positive combination of tight normals, which lies in the normal cone of
//! `C` at the origin, so `P_C(d) = 0`. Every instance is checked with
//! [`brute_force_projection`] and a sampled variational inequality before
//! it is returned. An optional rotation and translation then moves the
//! whole picture.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{ExtReal, Halfspace, PolyhedralSet, SubspaceBasis};
use crate::linalg::{dist, dot, norm};
use crate::oracle::{brute_force_projection, variational_inequality_max, MAX_ENUMERATED};
use crate::qp::project_polyhedron;
use crate::solver::Instance;

/// Smallest offset of a non-tight halfspace.
pub const MIN_SLACK: f64 = 0.1;
/// Largest offset of a non-tight halfspace.
pub const MAX_SLACK: f64 = 1.0;
/// Feasible points sampled for the variational-inequality check.
pub const VI_SAMPLES: usize = 256;
/// Generation attempts before giving up.
pub const MAX_ATTEMPTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    /// Halfspaces per set.
    pub k: usize,
    /// Tight halfspaces per non-interior set.
    pub k_prime: usize,
    /// Fraction of sets with no tight halfspace, rounded to the nearest count.
    pub interior_fraction: f64,
    /// `‖d − P_C(d)‖`.
    pub distance: f64,
    pub seed: u64,
    pub rotate: bool,
    pub translate: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 3,
            m: 2,
            k: 3,
            k_prime: 1,
            interior_fraction: 0.0,
            distance: 1.0,
            seed: 0,
            rotate: false,
            translate: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.k == 0 {
            return Err(Error::contract("generator needs n, m and K at least 1"));
        }
        if self.k_prime > self.k {
            return Err(Error::contract(format!(
                "tight count {} exceeds halfspaces per set {}",
                self.k_prime, self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.interior_fraction) {
            return Err(Error::contract("interior fraction must lie in [0, 1]"));
        }
        if !(self.distance > 0.0) || !self.distance.is_finite() {
            return Err(Error::contract("distance must be positive and finite"));
        }
        Ok(())
    }

    /// Small random shapes: `n ∈ [2, 5]`, `m ∈ [2, 4]`, `K ∈ [1, 4]`,
    /// `K′ ∈ [1, K]`, all drawn from `seed`.
    pub fn small_family(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let n = rng.random_range(2..=5);
        let m = rng.random_range(2..=4);
        let k = rng.random_range(1..=4);
        let k_prime = rng.random_range(1..=k);
        GeneratorConfig {
            n,
            m,
            k,
            k_prime,
            seed,
            ..GeneratorConfig::default()
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let nv = norm(&v);
        if nv > 1e-3 {
            return v.iter().map(|x| x / nv).collect();
        }
    }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        let qr = g.qr();
        let r = qr.r();
        if (0..n).all(|i| r[(i, i)].abs() > 1e-6) {
            let mut q = qr.q();
            for i in 0..n {
                if r[(i, i)] < 0.0 {
                    q.column_mut(i).neg_mut();
                }
            }
            return q;
        }
    }
}

fn mat_vec(q: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..q.nrows())
        .map(|i| (0..q.ncols()).map(|j| q[(i, j)] * v[j]).sum())
        .collect()
}

fn attempt(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Option<Instance> {
    let n = cfg.n;
    let interior_count = (cfg.interior_fraction * cfg.m as f64).round() as usize;
    let mut interior = vec![false; cfg.m];
    interior[..interior_count].iter_mut().for_each(|v| *v = true);
    interior.shuffle(rng);

    let mut sets = Vec::with_capacity(cfg.m);
    let mut tight = Vec::new();
    for &is_interior in &interior {
        let k_tight = if is_interior { 0 } else { cfg.k_prime };
        let mut hs = Vec::with_capacity(cfg.k);
        for r in 0..cfg.k {
            let f = unit_vector(rng, n);
            let c = if r < k_tight {
                tight.push(f.clone());
                0.0
            } else {
                rng.random_range(MIN_SLACK..=MAX_SLACK)
            };
            hs.push(Halfspace::new(f, ExtReal::Finite(c)).ok()?);
        }
        sets.push(PolyhedralSet::new(hs).ok()?);
    }

    let (d, xs) = if tight.is_empty() {
        let d: Vec<f64> = unit_vector(rng, n).iter().map(|v| v * 0.5 * MIN_SLACK).collect();
        (d.clone(), d)
    } else {
        let mut d = vec![0.0; n];
        for f in &tight {
            let a: f64 = rng.random_range(0.1..1.0);
            d.iter_mut().zip(f).for_each(|(di, fi)| *di += a * fi);
        }
        let nd = norm(&d);
        if nd < 1e-3 {
            return None;
        }
        d.iter_mut().for_each(|v| *v *= cfg.distance / nd);
        (d, vec![0.0; n])
    };

    let inst = Instance::new(d, sets, None).ok()?;
    let check = if inst.total_halfspaces() <= MAX_ENUMERATED {
        brute_force_projection(&inst).ok()?.0
    } else {
        project_polyhedron(inst.d(), &inst.stacked()).ok()?.point
    };
    let scale = 1.0 + norm(inst.d());
    if dist(&check, &xs) > 1e-9 * scale {
        return None;
    }
    if variational_inequality_max(&inst, &xs, VI_SAMPLES, rng.random()).ok()? > 1e-9 * scale {
        return None;
    }
    let inst = inst.with_known_projection(xs).ok()?;
    Some(move_instance(inst, cfg, rng))
}

fn move_instance(inst: Instance, cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Instance {
    let n = cfg.n;
    let q = if cfg.rotate {
        random_orthogonal(rng, n)
    } else {
        DMatrix::identity(n, n)
    };
    let t: Vec<f64> = if cfg.translate {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    } else {
        vec![0.0; n]
    };
    if !cfg.rotate && !cfg.translate {
        return inst;
    }
    let moved = |x: &[f64]| -> Vec<f64> { mat_vec(&q, x).iter().zip(&t).map(|(a, b)| a + b).collect() };
    let sets = inst
        .sets()
        .iter()
        .map(|s| {
            let hs = s
                .halfspaces()
                .iter()
                .map(|h| {
                    let f = mat_vec(&q, h.normal());
                    let c = h.offset().to_f64() + dot(&f, &t);
                    // renormalize to absorb rounding in Q
                    Halfspace::normalized(f, ExtReal::Finite(c)).expect("rotated normal is nonzero")
                })
                .collect();
            PolyhedralSet::new(hs).expect("same halfspace count")
        })
        .collect();
    let xs = moved(inst.known_projection().expect("set by generator"));
    Instance::new(moved(inst.d()), sets, Some(xs)).expect("rigid motion keeps feasibility")
}

/// Builds a verified instance, retrying up to [`MAX_ATTEMPTS`] times.
pub fn generate(cfg: &GeneratorConfig) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(inst) = attempt(cfg, &mut rng) {
            return Ok(inst);
        }
    }
    Err(Error::NumericalFailure {
        iterations: MAX_ATTEMPTS,
        reason: "no generated anchor passed projection verification".into(),
        best: Vec::new(),
    })
}

/// `k` random subspaces of `ℝ^dim`. With probability ½ they share a
/// random common subspace, so the intersection is often nontrivial.
pub fn random_subspace_family(dim: usize, k: usize, seed: u64) -> Result<Vec<SubspaceBasis>> {
    if dim == 0 || k == 0 {
        return Err(Error::contract("subspace family needs dim and k at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common: Vec<Vec<f64>> = if dim > 1 && rng.random_bool(0.5) {
        let c = rng.random_range(1..dim);
        (0..c).map(|_| unit_vector(&mut rng, dim)).collect()
    } else {
        Vec::new()
    };
    (0..k)
        .map(|_| {
            let extra = rng.random_range(0..dim);
            let mut span = common.clone();
            span.extend((0..extra).map(|_| unit_vector(&mut rng, dim)));
            if span.is_empty() {
                span.push(unit_vector(&mut rng, dim));
            }
            SubspaceBasis::from_spanning(dim, &span)
        })
        .collect()
}
