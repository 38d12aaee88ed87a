//! Slow, independent reference computations for tests and diagnostics.
//!
//! Nothing here calls into [`crate::qp`] or [`crate::solver`] for its
//! answer.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{ExtReal, Halfspace, PolyhedralSet};
use crate::lasso::LassoProblem;
use crate::linalg::{axpy, dist, dot, norm};
use crate::solver::{DualState, Instance};

/// Largest stacked constraint count accepted by [`brute_force_projection`].
pub const MAX_ENUMERATED: usize = 20;

/// Why a brute-force projection is correct.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// Indices into the stacked constraint list.
    pub active: Vec<usize>,
    /// One multiplier per stacked constraint.
    pub multipliers: Vec<f64>,
    pub subsets_checked: usize,
}

impl Certificate {
    /// Splits the stacked multipliers back into one block per set.
    pub fn dual_state(&self, inst: &Instance) -> Result<DualState> {
        let mut blocks = Vec::with_capacity(inst.m());
        let mut offset = 0;
        for s in inst.sets() {
            blocks.push(self.multipliers[offset..offset + s.len()].to_vec());
            offset += s.len();
        }
        DualState::from_multipliers(inst, blocks)
    }
}

/// Calls `visit` on every `k`-subset of `0..t` in lexicographic order.
fn for_each_subset(t: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > t {
        return;
    }
    loop {
        visit(&idx);
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < t - k + p) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Projects `d` onto `∩ hs` by trying every candidate active set.
///
/// A candidate is a subset `S` with independent normals; its point is
/// `d − F_Sᵀλ` where `F_S F_Sᵀ λ = F_S d − c_S`. Candidates with `λ ≥ 0`
/// and a feasible point satisfy KKT. Subsets are visited by size and then
/// lexicographically, and among KKT candidates the one with the smallest
/// multiplier norm wins (the first one on ties).
pub fn brute_force_halfspaces(d: &[f64], hs: &[Halfspace]) -> Result<(Vec<f64>, Certificate)> {
    let t = hs.len();
    if t > MAX_ENUMERATED {
        return Err(Error::UnsupportedScale(format!(
            "{t} constraints exceed the enumeration limit of {MAX_ENUMERATED}"
        )));
    }
    for h in hs {
        check_dim(d.len(), h.dim())?;
    }
    let finite: Vec<usize> = (0..t).filter(|&r| hs[r].offset().is_finite()).collect();
    let scale = 1.0
        + norm(d)
        + finite
            .iter()
            .map(|&r| hs[r].offset().to_f64().abs())
            .fold(0.0, f64::max);
    let n = d.len();
    let mut best: Option<(f64, Vec<f64>, Vec<usize>, Vec<f64>)> = None;
    let mut checked = 0usize;

    for k in 0..=finite.len().min(n) {
        for_each_subset(finite.len(), k, |sub| {
            checked += 1;
            let rows: Vec<usize> = sub.iter().map(|&q| finite[q]).collect();
            let Some(lam) = kkt_candidate(d, hs, &rows) else {
                return;
            };
            if lam.iter().any(|&l| l < -1e-10 * scale) {
                return;
            }
            let mut x = d.to_vec();
            for (&r, &l) in rows.iter().zip(&lam) {
                axpy(-l, hs[r].normal(), &mut x);
            }
            if !hs.iter().all(|h| h.contains(&x, 1e-9 * scale)) {
                return;
            }
            let lnorm = norm(&lam);
            if best.as_ref().is_none_or(|b| lnorm < b.0) {
                best = Some((lnorm, x, rows, lam));
            }
        });
    }

    let (_, x, rows, lam) = best.ok_or_else(|| Error::Infeasible("no candidate active set is feasible".to_string()))?;
    let mut multipliers = vec![0.0; t];
    for (&r, &l) in rows.iter().zip(&lam) {
        multipliers[r] = l.max(0.0);
    }
    let active = (0..t).filter(|&r| multipliers[r] > 0.0).collect();
    Ok((
        x,
        Certificate {
            active,
            multipliers,
            subsets_checked: checked,
        },
    ))
}

/// Multipliers of the equality-constrained problem on `rows`, or `None`
/// when the normals are (numerically) dependent.
fn kkt_candidate(d: &[f64], hs: &[Halfspace], rows: &[usize]) -> Option<Vec<f64>> {
    let k = rows.len();
    if k == 0 {
        return Some(Vec::new());
    }
    let g = DMatrix::from_fn(k, k, |i, j| dot(hs[rows[i]].normal(), hs[rows[j]].normal()));
    let chol = g.cholesky()?;
    if (0..k).any(|i| chol.l_dirty()[(i, i)] < 1e-7) {
        return None;
    }
    let rhs = DVector::from_iterator(
        k,
        rows.iter().map(|&r| dot(hs[r].normal(), d) - hs[r].offset().to_f64()),
    );
    Some(chol.solve(&rhs).iter().copied().collect())
}

/// `P_C(d)` for the instance, by enumeration over its stacked constraints.
pub fn brute_force_projection(inst: &Instance) -> Result<(Vec<f64>, Certificate)> {
    let stacked = inst.stacked();
    brute_force_halfspaces(inst.d(), stacked.halfspaces())
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Sweep cap for [`lasso_reference`].
pub const LASSO_MAX_SWEEPS: usize = 1_000_000;

/// Cyclic proximal coordinate descent for the lasso.
///
/// Stops when a full sweep changes no coordinate by more than `tol`
/// (scaled by the column norm).
pub fn lasso_reference(p: &LassoProblem, tol: f64) -> Result<(Vec<f64>, f64)> {
    if !(tol > 0.0) {
        return Err(Error::contract("coordinate descent tolerance must be positive"));
    }
    let n = p.cols();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| p.column(j)).collect();
    let sq: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let mut x = vec![0.0; n];
    let mut r = p.b().to_vec();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut biggest = 0.0f64;
        for j in 0..n {
            let target = x[j] + dot(&cols[j], &r) / sq[j];
            let new = soft_threshold(target, p.lambda() / sq[j]);
            let delta = new - x[j];
            if delta != 0.0 {
                axpy(-delta, &cols[j], &mut r);
                x[j] = new;
                biggest = biggest.max(delta.abs() * sq[j].sqrt());
            }
        }
        if biggest < tol {
            let obj = p.objective(&x);
            return Ok((x, obj));
        }
    }
    Err(Error::NumericalFailure {
        iterations: LASSO_MAX_SWEEPS,
        reason: "coordinate descent sweep cap exceeded".to_string(),
        best: x,
    })
}

/// Number of random perturbations added to the fixed directions in
/// [`sensitivity_probe`].
pub const SENSITIVITY_SAMPLES: usize = 64;

/// Largest displacement `‖P_S(d) − P_S̃(d̃)‖` over a fixed family of
/// perturbations with `‖b̃ − b‖_∞ ≤ δ₂` and `‖d̃ − d‖ ≤ δ₂`, where
/// `S = {x : Ax ≤ b}`.
///
/// The family is the same set of unit directions scaled by `δ₂` for every
/// call: both corners `b ± δ₂·1`, every coordinate direction of `b` and of
/// `d`, and [`SENSITIVITY_SAMPLES`] seeded random directions.
pub fn sensitivity_probe(rows: &[Vec<f64>], b: &[f64], d: &[f64], delta2: f64) -> Result<f64> {
    check_dim(rows.len(), b.len())?;
    if rows.is_empty() {
        return Err(Error::contract("sensitivity probe needs at least one row"));
    }
    if !(delta2 >= 0.0) {
        return Err(Error::contract("perturbation size must be nonnegative"));
    }
    let n = d.len();
    for r in rows {
        check_dim(n, r.len())?;
    }
    let k = rows.len();
    let a = DMatrix::from_fn(k, n, |i, j| rows[i][j]);
    let sv = a.singular_values();
    let smax = sv.max();
    if k > n || sv.iter().any(|&s| s <= 1e-10 * smax.max(1.0)) {
        return Err(Error::contract("rows of the constraint matrix are linearly dependent"));
    }

    let project = |bb: &[f64], dd: &[f64]| -> Result<Vec<f64>> {
        let hs: Vec<Halfspace> = rows
            .iter()
            .zip(bb)
            .map(|(r, &c)| Halfspace::normalized(r.clone(), ExtReal::Finite(c)))
            .collect::<Result<_>>()?;
        Ok(brute_force_halfspaces(dd, &hs)?.0)
    };
    let base = project(b, d)?;
    if delta2 == 0.0 {
        return Ok(0.0);
    }

    let mut dirs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    dirs.push((vec![1.0; k], vec![0.0; n]));
    dirs.push((vec![-1.0; k], vec![0.0; n]));
    for i in 0..k {
        for sign in [1.0, -1.0] {
            let mut ub = vec![0.0; k];
            ub[i] = sign;
            dirs.push((ub, vec![0.0; n]));
        }
    }
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut ud = vec![0.0; n];
            ud[i] = sign;
            dirs.push((vec![0.0; k], ud));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..SENSITIVITY_SAMPLES {
        let ub: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let mut ud: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let nd = norm(&ud);
        if nd > 1.0 {
            ud.iter_mut().for_each(|v| *v /= nd);
        }
        dirs.push((ub, ud));
    }

    let mut worst = 0.0f64;
    for (ub, ud) in &dirs {
        let bb: Vec<f64> = b.iter().zip(ub).map(|(v, u)| v + delta2 * u).collect();
        let dd: Vec<f64> = d.iter().zip(ud).map(|(v, u)| v + delta2 * u).collect();
        worst = worst.max(dist(&base, &project(&bb, &dd)?));
    }
    Ok(worst)
}

/// Largest `⟨d − x, z − x⟩` over `samples` feasible points `z`.
///
/// Each `z` lies on a random ray from `x`, at a uniform fraction of the
/// distance to the first constraint it meets (capped at 5). A projection
/// `x = P_C(d)` gives values `≤ 0` up to rounding.
pub fn variational_inequality_max(inst: &Instance, x: &[f64], samples: usize, seed: u64) -> Result<f64> {
    check_dim(inst.dim(), x.len())?;
    let scale = 1.0 + norm(x);
    if !inst.contains(x, 1e-9 * scale) {
        return Err(Error::contract("the candidate projection is not feasible"));
    }
    let g: Vec<f64> = inst.d().iter().zip(x).map(|(a, b)| a - b).collect();
    let stacked = inst.stacked();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let u: Vec<f64> = (0..inst.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut reach = 5.0f64;
        for h in stacked.halfspaces() {
            let slope = dot(h.normal(), &u);
            if let (true, Some(e)) = (slope > 0.0, h.excess(x)) {
                reach = reach.min((-e).max(0.0) / slope);
            }
        }
        let t = rng.random_range(0.0..=1.0) * reach;
        worst = worst.max(t * dot(&g, &u));
    }
    Ok(worst)
}

/// The projection onto a single polyhedron, by enumeration.
pub fn brute_force_set(d: &[f64], set: &PolyhedralSet) -> Result<(Vec<f64>, Certificate)> {
    brute_force_halfspaces(d, set.halfspaces())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::project_polyhedron;
    use crate::solver::dual_value;
    use approx::assert_abs_diff_eq;

    fn hs(f: &[f64], c: f64) -> Halfspace {
        Halfspace::normalized(f.to_vec(), ExtReal::Finite(c)).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(1..=3);
        let sets = (0..m)
            .map(|_| {
                let k = rng.random_range(1..=4);
                PolyhedralSet::new(
                    (0..k)
                        .map(|_| {
                            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                            Halfspace::normalized(f, ExtReal::Finite(rng.random_range(0.0..1.0))).unwrap()
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let d = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        Instance::new(d, sets, None).unwrap()
    }

    #[test]
    fn subsets_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(
            seen,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        let mut count = 0;
        for_each_subset(3, 0, |_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn feasible_anchor_is_its_own_projection() {
        let inst = Instance::new(
            vec![-1.0, -2.0],
            vec![PolyhedralSet::new(vec![hs(&[1.0, 0.0], 0.0)]).unwrap()],
            None,
        )
        .unwrap();
        let (x, cert) = brute_force_projection(&inst).unwrap();
        assert_eq!(x, vec![-1.0, -2.0]);
        assert!(cert.active.is_empty());
    }

    #[test]
    fn orthogonal_pair() {
        let inst = Instance::new(
            vec![1.0, 1.0],
            vec![
                PolyhedralSet::new(vec![hs(&[1.0, 0.0], 0.0)]).unwrap(),
                PolyhedralSet::new(vec![hs(&[0.0, 1.0], 0.0)]).unwrap(),
            ],
            None,
        )
        .unwrap();
        let (x, cert) = brute_force_projection(&inst).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(cert.active, vec![0, 1]);
        let inst = inst.with_known_projection(x).unwrap();
        let y = cert.dual_state(&inst).unwrap();
        assert_abs_diff_eq!(dual_value(&inst, &y).unwrap().to_f64(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn agrees_with_active_set_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut worst = 0.0f64;
        for _ in 0..500 {
            let inst = random_instance(&mut rng);
            let (x, _) = brute_force_projection(&inst).unwrap();
            let y = project_polyhedron(inst.d(), &inst.stacked()).unwrap().point;
            worst = worst.max(dist(&x, &y));
        }
        assert!(worst <= 1e-9, "{worst}");
    }

    #[test]
    fn variational_inequality_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for i in 0..20 {
            let inst = random_instance(&mut rng);
            let (xs, _) = brute_force_projection(&inst).unwrap();
            assert!(variational_inequality_max(&inst, &xs, 1000, i).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn variational_inequality_rejects_wrong_point() {
        let set = PolyhedralSet::new(vec![hs(&[1.0, 0.0], 0.0)]).unwrap();
        let inst = Instance::new(vec![1.0, 0.0], vec![set], None).unwrap();
        assert!(variational_inequality_max(&inst, &[0.0, 0.0], 200, 1).unwrap() <= 0.0);
        assert!(variational_inequality_max(&inst, &[-1.0, 0.0], 200, 1).unwrap() > 0.1);
        assert!(variational_inequality_max(&inst, &[1.0, 0.0], 10, 1).is_err());
    }

    #[test]
    fn too_many_constraints() {
        let set = PolyhedralSet::new((0..21).map(|_| hs(&[1.0], 1.0)).collect()).unwrap();
        let inst = Instance::new(vec![0.0], vec![set], None).unwrap();
        assert!(matches!(brute_force_projection(&inst), Err(Error::UnsupportedScale(_))));
    }

    #[test]
    fn infeasible_detected() {
        let set = PolyhedralSet::new(vec![hs(&[1.0], -1.0), hs(&[-1.0], -1.0)]).unwrap();
        let inst = Instance::new(vec![0.0], vec![set], None).unwrap();
        assert!(matches!(brute_force_projection(&inst), Err(Error::Infeasible(_))));
    }

    #[test]
    fn lasso_large_weight_gives_zero() {
        let p = LassoProblem::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]], vec![1.0, 2.0], 10.0).unwrap();
        let (x, obj) = lasso_reference(&p, 1e-12).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_abs_diff_eq!(obj, 2.5, epsilon = 1e-15);
    }

    #[test]
    fn lasso_scalar_soft_threshold() {
        // ½(a x − b)² + λ|x|  →  x = S(a b, λ)/a²
        let (a, b, lam) = (2.0, 3.0, 1.5);
        let p = LassoProblem::from_rows(&[vec![a]], vec![b], lam).unwrap();
        let (x, _) = lasso_reference(&p, 1e-14).unwrap();
        assert_abs_diff_eq!(x[0], (a * b - lam) / (a * a), epsilon = 1e-14);
    }

    #[test]
    fn lasso_reference_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..20).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = LassoProblem::from_rows(&rows, b, 0.1).unwrap();
        let (x, obj) = lasso_reference(&p, 1e-12).unwrap();
        for j in 0..20 {
            for h in [1e-6, -1e-6] {
                let mut z = x.clone();
                z[j] += h;
                assert!(p.objective(&z) >= obj - 1e-12);
            }
        }
    }

    #[test]
    fn sensitivity_zero_perturbation() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(sensitivity_probe(&rows, &[0.0, 0.0], &[1.0, 1.0], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn sensitivity_single_halfspace_bound() {
        let rows = vec![vec![1.0, 1.0]];
        for delta in [1e-1, 1e-3] {
            let disp = sensitivity_probe(&rows, &[0.5], &[2.0, -1.0], delta).unwrap();
            assert!(disp <= 2.0 * delta + 1e-12);
        }
    }

    #[test]
    fn sensitivity_rejects_dependent_rows() {
        let rows = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(sensitivity_probe(&rows, &[0.0, 0.0], &[1.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn sensitivity_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        let d: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut prev = f64::INFINITY;
        let mut delta = 1e-1;
        while delta >= 1e-6 {
            let a = sensitivity_probe(&rows, &b, &d, delta).unwrap();
            let half = sensitivity_probe(&rows, &b, &d, delta / 2.0).unwrap();
            assert!(half <= a + 1e-9);
            assert!(a <= prev + 1e-9);
            prev = a;
            delta /= 10.0;
        }
        assert!(prev < 1e-3);
    }
}
