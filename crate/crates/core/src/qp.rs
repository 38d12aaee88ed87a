//! Exact projection onto an intersection of halfspaces.
//!
//! The default projector is a dual active-set method (Goldfarb–Idnani with
//! an identity Hessian): start at the unconstrained minimizer `x`, add the
//! most violated constraint, and drop active constraints whose multiplier
//! would turn negative. It terminates finitely and yields KKT multipliers,
//! which the solver stores as the decomposition of each dual vector.
//!
//! The cyclic single-halfspace Dykstra iteration with warm multipliers is
//! kept as an alternative projector.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{ExtReal, Halfspace, PolyhedralSet};
use crate::linalg::{axpy, dist, dot, lstsq_min_norm, norm, solve_spd};

/// Squared norm below which a new normal counts as dependent on the active ones.
const DEPENDENT_SQ: f64 = 1e-20;
/// Warmstart Dykstra sweep cap.
pub const WARMSTART_MAX_SWEEPS: usize = 10_000;

/// A projection together with its KKT multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub point: Vec<f64>,
    /// One multiplier per halfspace, all `≥ 0`.
    pub multipliers: Vec<f64>,
    /// Halfspaces with a positive multiplier, ascending.
    pub active_set: Vec<usize>,
    /// Active-set pivots, or Dykstra sweeps for the warmstart projector.
    pub iterations: usize,
}

impl ProjectionResult {
    fn from_multipliers(x: &[f64], hs: &[Halfspace], multipliers: Vec<f64>, iterations: usize) -> Self {
        let mut point = x.to_vec();
        for (h, &l) in hs.iter().zip(&multipliers) {
            if l != 0.0 {
                axpy(-l, h.normal(), &mut point);
            }
        }
        let active_set = (0..multipliers.len()).filter(|&r| multipliers[r] > 0.0).collect();
        ProjectionResult {
            point,
            multipliers,
            active_set,
            iterations,
        }
    }
}

/// Which routine computes per-set projections.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ProjectorKind {
    #[default]
    ActiveSet,
    /// Cyclic halfspace Dykstra warm-started from the previous multipliers,
    /// stopped when a sweep moves the iterate by less than `tol`.
    WarmstartDykstra { tol: f64 },
}

/// Projects `x` onto `set`, returning the point and its multipliers.
pub fn project_polyhedron(x: &[f64], set: &PolyhedralSet) -> Result<ProjectionResult> {
    check_dim(set.dim(), x.len())?;
    project_halfspaces(x, set.halfspaces())
}

/// Projection onto `∩ hs` (any length, including zero).
pub fn project_halfspaces(x: &[f64], hs: &[Halfspace]) -> Result<ProjectionResult> {
    for h in hs {
        check_dim(x.len(), h.dim())?;
    }
    let k = hs.len();
    let scale = 1.0
        + norm(x)
        + hs.iter()
            .filter_map(|h| h.offset().finite())
            .fold(0.0, |m: f64, c| m.max(c.abs()));
    let feas_tol = 1e-13 * scale;
    let cap = 50 * (k + 1);

    let mut z = x.to_vec();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut pivots = 0usize;

    loop {
        // most violated constraint; strict comparison keeps the smallest index on ties
        let mut pick = None;
        let mut worst = feas_tol;
        for (r, h) in hs.iter().enumerate() {
            if active.contains(&r) {
                continue;
            }
            if let Some(e) = h.excess(&z) {
                if e > worst {
                    worst = e;
                    pick = Some(r);
                }
            }
        }
        let Some(p) = pick else { break };
        let fp = hs[p].normal();
        let mut up = 0.0;

        loop {
            pivots += 1;
            if pivots > cap {
                return Err(Error::NumericalFailure {
                    iterations: pivots,
                    reason: "active-set pivot cap exceeded".to_string(),
                    best: z,
                });
            }
            let (r, w) = step_direction(hs, &active, fp)?;
            let ww = dot(&w, &w);
            let excess = hs[p].excess(&z).unwrap_or(0.0);
            let full = if ww > DEPENDENT_SQ {
                excess.max(0.0) / ww
            } else {
                f64::INFINITY
            };

            let mut partial = f64::INFINITY;
            let mut leaving = None;
            for (idx, &ra) in r.iter().enumerate() {
                if ra > 0.0 {
                    let t = u[idx] / ra;
                    if t < partial {
                        partial = t;
                        leaving = Some(idx);
                    }
                }
            }

            if full.is_infinite() && partial.is_infinite() {
                return Err(Error::Infeasible(format!(
                    "halfspace {p} cannot be satisfied together with the active set"
                )));
            }

            let t = full.min(partial);
            if ww > DEPENDENT_SQ {
                axpy(-t, &w, &mut z);
            }
            for (ui, ri) in u.iter_mut().zip(&r) {
                *ui = (*ui - t * ri).max(0.0);
            }
            up += t;

            if partial < full {
                let idx = leaving.expect("partial step has a leaving constraint");
                active.remove(idx);
                u.remove(idx);
            } else {
                active.push(p);
                u.push(up);
                break;
            }
        }
    }

    let mut multipliers = vec![0.0; k];
    for (&a, &ua) in active.iter().zip(&u) {
        multipliers[a] = ua;
    }
    let mut result = ProjectionResult::from_multipliers(x, hs, multipliers, pivots);
    polish_min_norm(x, hs, &mut result, scale);
    Ok(result)
}

/// `r = G_A⁻¹ N_Aᵀ f_p` and `w = f_p − N_A r` for the active normals `N_A`.
fn step_direction(hs: &[Halfspace], active: &[usize], fp: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if active.is_empty() {
        return Ok((Vec::new(), fp.to_vec()));
    }
    let q = active.len();
    let gram = DMatrix::from_fn(q, q, |i, j| dot(hs[active[i]].normal(), hs[active[j]].normal()));
    let rhs: Vec<f64> = active.iter().map(|&a| dot(hs[a].normal(), fp)).collect();
    let r = solve_spd(gram, &rhs).ok_or_else(|| Error::NumericalFailure {
        iterations: 0,
        reason: "active normals became linearly dependent".to_string(),
        best: Vec::new(),
    })?;
    let mut w = fp.to_vec();
    for (&a, &ra) in active.iter().zip(&r) {
        axpy(-ra, hs[a].normal(), &mut w);
    }
    Ok((r, w))
}

/// Replaces the multipliers by the minimum-norm decomposition over all tight
/// halfspaces when that decomposition is nonnegative.
fn polish_min_norm(x: &[f64], hs: &[Halfspace], result: &mut ProjectionResult, scale: f64) {
    let tight: Vec<usize> = (0..hs.len())
        .filter(|&r| hs[r].excess(&result.point).is_some_and(|e| e.abs() <= 1e-11 * scale))
        .collect();
    if tight.len() < 2 {
        return;
    }
    let n = x.len();
    let target: Vec<f64> = x.iter().zip(&result.point).map(|(a, b)| a - b).collect();
    let mat = DMatrix::from_fn(n, tight.len(), |i, c| hs[tight[c]].normal()[i]);
    let lam = lstsq_min_norm(&mat, &target, 1e-12);
    if lam.iter().any(|&l| l < -1e-12 * scale) {
        return;
    }
    let mut multipliers = vec![0.0; hs.len()];
    for (&r, &l) in tight.iter().zip(&lam) {
        multipliers[r] = l.max(0.0);
    }
    let candidate = ProjectionResult::from_multipliers(x, hs, multipliers, result.iterations);
    if dist(&candidate.point, &result.point) <= 1e-12 * scale {
        *result = candidate;
    }
}

/// Cyclic Dykstra over the halfspaces of `set`, warm-started from `warm`.
///
/// The iteration starts at `x − Σ warm_r f_r` and each step adds back the
/// multiplier of the halfspace it is about to project onto, so with
/// `warm = 0` this is plain Dykstra. Stops once a full sweep moves the
/// iterate and every multiplier by less than `tol`.
pub fn project_polyhedron_warmstart(
    x: &[f64],
    set: &PolyhedralSet,
    warm: &[f64],
    tol: f64,
) -> Result<ProjectionResult> {
    check_dim(set.dim(), x.len())?;
    check_dim(set.len(), warm.len())?;
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::contract("warmstart tolerance must be positive"));
    }
    if warm.iter().any(|&l| l < 0.0) {
        return Err(Error::contract("warmstart multipliers must be nonnegative"));
    }
    let hs = set.halfspaces();
    let mut lambda = warm.to_vec();
    for (l, h) in lambda.iter_mut().zip(hs) {
        if !h.offset().is_finite() {
            *l = 0.0;
        }
    }
    let mut cur = x.to_vec();
    for (h, &l) in hs.iter().zip(&lambda) {
        axpy(-l, h.normal(), &mut cur);
    }

    let mut z = vec![0.0; x.len()];
    for sweep in 1..=WARMSTART_MAX_SWEEPS {
        let start = cur.clone();
        let lambda_start = lambda.clone();
        for (h, l) in hs.iter().zip(lambda.iter_mut()) {
            z.copy_from_slice(&cur);
            axpy(*l, h.normal(), &mut z);
            let excess = match h.offset() {
                ExtReal::Finite(c) => (dot(h.normal(), &z) - c).max(0.0),
                ExtReal::PosInf => 0.0,
            };
            cur.copy_from_slice(&z);
            axpy(-excess, h.normal(), &mut cur);
            *l = excess;
        }
        let moved = lambda.iter().zip(&lambda_start).any(|(a, b)| (a - b).abs() >= tol);
        if dist(&cur, &start) < tol && !moved {
            let mut out = ProjectionResult::from_multipliers(x, hs, lambda, sweep);
            // keep the iterate itself; `from_multipliers` only differs by rounding
            out.point = cur;
            return Ok(out);
        }
    }
    Err(Error::NumericalFailure {
        iterations: WARMSTART_MAX_SWEEPS,
        reason: "warmstart Dykstra sweep cap exceeded".to_string(),
        best: cur,
    })
}

/// Projection with the configured routine; `warm` is only read by the
/// warmstart projector.
pub fn project_with(
    kind: ProjectorKind,
    x: &[f64],
    hs: &[Halfspace],
    warm: Option<&[f64]>,
) -> Result<ProjectionResult> {
    match kind {
        ProjectorKind::ActiveSet => project_halfspaces(x, hs),
        ProjectorKind::WarmstartDykstra { tol } => {
            if hs.is_empty() {
                return Ok(ProjectionResult::from_multipliers(x, hs, Vec::new(), 0));
            }
            let set = PolyhedralSet::new(hs.to_vec())?;
            let zeros;
            let warm = match warm {
                Some(w) => w,
                None => {
                    zeros = vec![0.0; hs.len()];
                    &zeros
                }
            };
            project_polyhedron_warmstart(x, &set, warm, tol)
        }
    }
}

/// Halfspaces standing in for one set during an SHQP step.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub set: usize,
    pub halfspaces: Vec<Halfspace>,
}

/// New dual vector for one free block, in multiplier form over its bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockUpdate {
    pub set: usize,
    pub multipliers: Vec<f64>,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShqpResult {
    /// `d − Σ fixed − Σ new free vectors`.
    pub point: Vec<f64>,
    pub blocks: Vec<BlockUpdate>,
}

/// Minimizes `½‖d − Σ fixed − Σ ỹ_i‖² + Σ δ*(ỹ_i, P_i)` over the free blocks.
///
/// This is the dual of projecting `d − Σ fixed` onto the intersection of all
/// bundles, so the blocks are read off the joint KKT multipliers. `init`
/// (one multiplier list per bundle) warm-starts the warmstart projector.
pub fn shqp_block_minimize(
    d: &[f64],
    fixed: &[&[f64]],
    free: &[Bundle],
    init: Option<&[Vec<f64>]>,
    projector: ProjectorKind,
) -> Result<ShqpResult> {
    let mut u = d.to_vec();
    for f in fixed {
        check_dim(d.len(), f.len())?;
        axpy(-1.0, f, &mut u);
    }
    if free.is_empty() {
        return Ok(ShqpResult {
            point: u,
            blocks: Vec::new(),
        });
    }
    let stacked: Vec<Halfspace> = free.iter().flat_map(|b| b.halfspaces.iter().cloned()).collect();
    let warm: Option<Vec<f64>> = init.map(|lists| lists.iter().flatten().copied().collect());
    if let Some(w) = &warm {
        check_dim(stacked.len(), w.len())?;
    }
    let proj = project_with(projector, &u, &stacked, warm.as_deref()).map_err(|e| match e {
        Error::Infeasible(msg) => Error::NumericalFailure {
            iterations: 0,
            reason: format!("SHQP dual unbounded: {msg}"),
            best: u.clone(),
        },
        other => other,
    })?;

    let mut blocks = Vec::with_capacity(free.len());
    let mut offset = 0;
    for b in free {
        let k = b.halfspaces.len();
        let multipliers = proj.multipliers[offset..offset + k].to_vec();
        let mut vector = vec![0.0; d.len()];
        for (h, &l) in b.halfspaces.iter().zip(&multipliers) {
            axpy(l, h.normal(), &mut vector);
        }
        blocks.push(BlockUpdate {
            set: b.set,
            multipliers,
            vector,
        });
        offset += k;
    }
    Ok(ShqpResult {
        point: proj.point,
        blocks,
    })
}
