//! Empirical checks of convergence-rate statements.
//!
//! - [`decrease_lower_bound`] evaluates the per-cycle dual decrease estimate
//!   built from distances to the halfspaces and their hyperplanes.
//! - [`estimate_mu`] estimates the regularity constant of a family of
//!   hyperplanes through a common point.
//! - [`check_cycle_contraction`] tests the per-cycle contraction implied by
//!   that constant once the run has reached its terminal phase.
//! - [`fit_linear_rate`] and [`detect_transition`] fit the linear tail of
//!   an error sequence and locate the end of the initial phase.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{SubspaceBasis, TAU_RAY};
use crate::linalg::{dist, dot, norm};
use crate::schedule::Schedule;
use crate::solver::{CycleTrace, DualState, Instance};

/// Sphere samples used by [`estimate_mu`].
pub const MU_SAMPLES: usize = 10_000;
/// Coordinate-descent refinement steps used by [`estimate_mu`].
pub const MU_REFINE_STEPS: usize = 100;
/// Fewest points above the noise floor that [`fit_linear_rate`] accepts.
pub const MIN_FIT_POINTS: usize = 10;
/// `r²` a trailing window needs to be preferred over longer ones.
pub const WINDOW_R2: f64 = 0.99;

/// Error values at or below this are treated as rounding noise.
pub fn noise_floor(d: &[f64]) -> f64 {
    1e2 * f64::EPSILON * (1.0 + norm(d))
}

/// The maximum over all halfspaces `(i, r)` of
/// `max{d(x₀, 𝓗_{i,r}), min{d(x₀, H_{i,r}), ‖ỹ_{i,r}‖}}²`, where
/// `x₀ = d − Σ y_i`, `𝓗` is the halfspace, `H` its boundary and
/// `ỹ_{i,r} = λ_{i,r} f_{i,r}` the stored decomposition.
pub fn decrease_estimate_core(inst: &Instance, y: &DualState) -> Result<f64> {
    if inst.known_projection().is_none() {
        return Err(Error::UnsupportedQuery(
            "the decrease bound is stated for instances with a known projection".into(),
        ));
    }
    let x0 = y.primal(inst);
    let mut best = 0.0f64;
    for (set, lam) in inst.sets().iter().zip(y.multipliers()) {
        for (h, &l) in set.halfspaces().iter().zip(lam) {
            let to_half = h.dist(&x0);
            let to_plane = h.dist_to_boundary(&x0);
            let term = to_half.max(to_plane.min(l.abs()));
            best = best.max(term);
        }
    }
    Ok(best * best)
}

/// The decrease estimate exactly as stated: the core term over `2w′ − 1`.
///
/// This overstates the guaranteed decrease by a factor of two: summing the
/// per-step inequalities `v_before − v_after ≥ ½‖step‖²` gives
/// `v(y°) − v(y⁺) ≥ ½ Σ ‖step‖²`, not `Σ ‖step‖²`. With one halfspace,
/// `y = 0` and `d` at distance `t`, the decrease is `t²/2` while this
/// returns `t²`. See [`decrease_lower_bound_halved`] for the provable form.
pub fn decrease_lower_bound(inst: &Instance, y: &DualState, sched: &Schedule) -> Result<f64> {
    let w = sched.w_prime() as f64;
    Ok(decrease_estimate_core(inst, y)? / (2.0 * w - 1.0))
}

/// The core term over `2(2w′ − 1)`, which the per-step inequalities do imply.
pub fn decrease_lower_bound_halved(inst: &Instance, y: &DualState, sched: &Schedule) -> Result<f64> {
    Ok(0.5 * decrease_lower_bound(inst, y, sched)?)
}

/// Result of [`estimate_mu`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MuEstimate {
    pub mu: f64,
    pub samples: usize,
    pub refinement_steps: usize,
    /// Number of subfamilies minimized over (1 for a single family).
    pub families: usize,
}

/// `min_{u ∈ L, ‖u‖ = 1} max_r |⟨f_r, u⟩|` for unit normals `f_r` spanning `L`.
///
/// For hyperplanes `H_r = {x : ⟨f_r, x⟩ = 0}` this is the best constant in
/// `max_r d(x, H_r) ≥ μ d(x, L^⊥)`. The minimum is estimated from `samples`
/// random unit vectors of `L` followed by `refine` rounds of coordinate
/// descent in an orthonormal basis of `L`.
pub fn estimate_mu_with(normals: &[Vec<f64>], samples: usize, refine: usize, seed: u64) -> Result<MuEstimate> {
    let first = normals
        .first()
        .ok_or_else(|| Error::contract("regularity constant of an empty family"))?;
    let n = first.len();
    let basis = SubspaceBasis::from_spanning(n, normals)?;
    let k = basis.rank();
    if k == 0 {
        return Err(Error::contract("the normals span only the zero subspace"));
    }
    let b = basis.matrix();
    let objective = |a: &[f64]| -> f64 {
        let na = norm(a);
        let u: Vec<f64> = (0..n)
            .map(|i| (0..k).map(|c| b[(i, c)] * a[c]).sum::<f64>() / na)
            .collect();
        normals.iter().map(|f| dot(f, &u).abs()).fold(0.0, f64::max)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_a = vec![0.0; k];
    best_a[0] = 1.0;
    let mut best = objective(&best_a);
    for _ in 0..samples {
        let a: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        if norm(&a) == 0.0 {
            continue;
        }
        let v = objective(&a);
        if v < best {
            best = v;
            best_a = a;
        }
    }
    let na = norm(&best_a);
    best_a.iter_mut().for_each(|v| *v /= na);

    let mut step = 0.1;
    for _ in 0..refine {
        let mut improved = false;
        for c in 0..k {
            for sign in [1.0, -1.0] {
                let mut trial = best_a.clone();
                trial[c] += sign * step;
                if norm(&trial) == 0.0 {
                    continue;
                }
                let v = objective(&trial);
                if v < best {
                    best = v;
                    let nt = norm(&trial);
                    best_a = trial.iter().map(|t| t / nt).collect();
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(MuEstimate {
        mu: best,
        samples,
        refinement_steps: refine,
        families: 1,
    })
}

/// [`estimate_mu_with`] using [`MU_SAMPLES`] samples and [`MU_REFINE_STEPS`] refinements.
pub fn estimate_mu(normals: &[Vec<f64>]) -> Result<MuEstimate> {
    estimate_mu_with(normals, MU_SAMPLES, MU_REFINE_STEPS, 0)
}

/// Minimum of the regularity constant over all nonempty subfamilies.
///
/// The contraction argument uses the constant of whichever subfamily
/// carries the final dual vector, so a bound valid for every cycle needs
/// the minimum. Families larger than 12 are rejected.
pub fn estimate_mu_over_subsets(normals: &[Vec<f64>], samples: usize, refine: usize) -> Result<MuEstimate> {
    let t = normals.len();
    if t == 0 {
        return Err(Error::contract("regularity constant of an empty family"));
    }
    if t > 12 {
        return Err(Error::UnsupportedScale(format!(
            "{t} hyperplanes is too many subfamilies"
        )));
    }
    let mut best = f64::INFINITY;
    let mut families = 0;
    for mask in 1u32..(1 << t) {
        let sub: Vec<Vec<f64>> = (0..t)
            .filter(|r| mask & (1 << r) != 0)
            .map(|r| normals[r].clone())
            .collect();
        let est = estimate_mu_with(&sub, samples, refine, mask as u64)?;
        best = best.min(est.mu);
        families += 1;
    }
    Ok(MuEstimate {
        mu: best,
        samples,
        refinement_steps: refine,
        families,
    })
}

/// Unit normals of the halfspaces tight at the known projection.
pub fn tight_normals(inst: &Instance, tol: f64) -> Result<Vec<Vec<f64>>> {
    let xs = inst
        .known_projection()
        .ok_or_else(|| Error::UnsupportedQuery("tight constraints need a known projection".into()))?;
    Ok(inst
        .sets()
        .iter()
        .flat_map(|s| s.halfspaces())
        .filter(|h| h.excess(xs).is_some_and(|e| e.abs() <= tol))
        .map(|h| h.normal().to_vec())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The cycle was not in the phase where the inequality applies.
    Inconclusive,
}

/// Outcome of [`check_cycle_contraction`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContractionCheck {
    /// Judged on the `μ²` form.
    pub status: CheckStatus,
    /// `‖x₀ − x*‖ − √(1 + μ²/(2w′))·‖x_{w′} − x*‖`.
    pub margin: f64,
    /// `‖x₀ − x*‖ − √(1 + μ/(2w′))·‖x_{w′} − x*‖`, the form as usually quoted.
    pub margin_stated: f64,
}

/// Checks `√(1 + μ²/(2w′))·‖x_{w′} − x*‖ ≤ ‖x₀ − x*‖` for one cycle.
///
/// The argument behind the inequality gives `μ²`; the version with `μ`
/// is reported alongside as `margin_stated`. The check applies once every
/// dual vector is supported only on halfspaces tight at `x*`, i.e. all
/// support terms of the shifted problem vanish; before that the result is
/// [`CheckStatus::Inconclusive`].
pub fn check_cycle_contraction(
    inst: &Instance,
    trace: &CycleTrace,
    mu: f64,
    w_prime: usize,
) -> Result<ContractionCheck> {
    let xs = inst
        .known_projection()
        .ok_or_else(|| Error::UnsupportedQuery("contraction is measured towards a known projection".into()))?;
    if !(mu > 0.0) || w_prime == 0 {
        return Err(Error::contract("contraction check needs μ > 0 and w′ ≥ 1"));
    }
    let e0 = dist(&trace.x_start, xs);
    let e1 = dist(&trace.x_end, xs);
    let w = w_prime as f64;
    let margin = e0 - (1.0 + mu * mu / (2.0 * w)).sqrt() * e1;
    let margin_stated = e0 - (1.0 + mu / (2.0 * w)).sqrt() * e1;

    let y = &trace.y_start;
    let ynorm = y.multipliers().iter().flatten().fold(0.0f64, |m, l| m.max(*l));
    let mut terminal = true;
    for (set, lam) in inst.sets().iter().zip(y.multipliers()) {
        for (h, &l) in set.halfspaces().iter().zip(lam) {
            let slack = h.excess(xs).map_or(f64::INFINITY, |e| -e);
            if slack > 1e-9 && l > TAU_RAY * (1.0 + ynorm) {
                terminal = false;
            }
        }
    }
    let tol = 1e-12 * (1.0 + norm(inst.d()));
    let status = if e0 <= tol && e1 <= tol {
        CheckStatus::Pass
    } else if !terminal {
        CheckStatus::Inconclusive
    } else if margin >= -tol {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(ContractionCheck {
        status,
        margin,
        margin_stated,
    })
}

/// Result of [`fit_linear_rate`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub rho_hat: f64,
    /// Half-open index range `[start, end)` of the fitted errors.
    pub window: (usize, usize),
    pub r_squared: f64,
}

fn fit_log_line(values: &[f64], start: usize) -> (f64, f64) {
    let n = values.len() as f64;
    let xs: Vec<f64> = (0..values.len()).map(|i| (start + i) as f64).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (my + slope * (x - mx));
            r * r
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let scale = 1.0 + ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let r2 = if ss_res <= (1e-12 * scale).powi(2) * n {
        1.0
    } else if ss_tot == 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    };
    (slope, r2)
}

/// Least-squares slope of `log error` over a trailing window.
///
/// Only the leading run of errors above `floor` is used. Among trailing
/// windows of at least [`MIN_FIT_POINTS`] points, the longest with
/// `r² ≥` [`WINDOW_R2`] is chosen, or the best-`r²` one if none qualifies.
/// `ρ̂ = exp(slope)`.
pub fn fit_linear_rate(errors: &[f64], floor: f64) -> Result<RateFit> {
    let usable = errors.iter().take_while(|&&e| e.is_finite() && e > floor).count();
    if usable < MIN_FIT_POINTS {
        return Err(Error::Inconclusive(format!(
            "{usable} errors above the noise floor, need {MIN_FIT_POINTS}"
        )));
    }
    let mut fallback: Option<RateFit> = None;
    for start in 0..=usable - MIN_FIT_POINTS {
        let (slope, r2) = fit_log_line(&errors[start..usable], start);
        let fit = RateFit {
            rho_hat: slope.exp(),
            window: (start, usable),
            r_squared: r2,
        };
        if r2 >= WINDOW_R2 {
            return Ok(fit);
        }
        if fallback.as_ref().is_none_or(|f| r2 > f.r_squared) {
            fallback = Some(fit);
        }
    }
    Ok(fallback.expect("at least one window"))
}

/// Result of [`detect_transition`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transition {
    /// For each `δ₂` of the grid, the first cycle whose decrease is below
    /// it (1-based, `None` if no cycle qualifies).
    pub kbar: Vec<(f64, Option<usize>)>,
    /// The smallest `δ₂` whose `k̄` is at or before the start of the linear
    /// window, with that `k̄`.
    pub knee: Option<(f64, usize)>,
}

/// Locates the end of the phase where every cycle decreases `v` by at
/// least `δ₂`.
///
/// `v[0]` is the dual value before cycle 1 and `v[k]` the value after
/// cycle `k`. `linear_start` is the first cycle of the fitted linear window.
pub fn detect_transition(v: &[f64], delta2_grid: &[f64], linear_start: Option<usize>) -> Transition {
    let kbar: Vec<(f64, Option<usize>)> = delta2_grid
        .iter()
        .map(|&d2| {
            let k = (1..v.len()).find(|&k| v[k - 1] - v[k] < d2);
            (d2, k)
        })
        .collect();
    let knee = linear_start.and_then(|start| {
        kbar.iter()
            .filter_map(|&(d2, k)| k.filter(|&k| k <= start).map(|k| (d2, k)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    });
    Transition { kbar, knee }
}

/// Smallest cycle decrease among cycles starting farther than `delta1`
/// from the solution; `None` if there are none.
pub fn far_decrease_floor(inst: &Instance, traces: &[CycleTrace], delta1: f64) -> Option<f64> {
    let xs = inst.known_projection()?;
    traces
        .iter()
        .filter(|t| dist(&t.x_start, xs) > delta1)
        .map(|t| t.decrease())
        .reduce(f64::min)
}

/// Per-run summary of the rate diagnostics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateReport {
    /// `‖x_k − x*‖` after each cycle.
    pub errors: Vec<f64>,
    /// `v(y^{k−1}) − v(y^k)` for each cycle.
    pub decreases: Vec<f64>,
    /// `None` when too few errors lie above the noise floor.
    pub fit: Option<RateFit>,
    pub transition: Transition,
}

/// Builds a [`RateReport`] from the cycle traces of one run.
pub fn rate_report(inst: &Instance, traces: &[CycleTrace], delta2_grid: &[f64]) -> Result<RateReport> {
    if inst.known_projection().is_none() {
        return Err(Error::UnsupportedQuery(
            "rates are measured towards a known projection".into(),
        ));
    }
    let errors: Vec<f64> = traces.iter().map(|t| t.err_end.unwrap_or(f64::NAN)).collect();
    let decreases = traces.iter().map(|t| t.decrease()).collect();
    let fit = fit_linear_rate(&errors, noise_floor(inst.d())).ok();
    let mut v = Vec::with_capacity(traces.len() + 1);
    if let Some(first) = traces.first() {
        v.push(first.v_start);
    }
    v.extend(traces.iter().map(|t| t.v_end));
    // window indices count from cycle 1
    let transition = detect_transition(&v, delta2_grid, fit.as_ref().map(|f| f.window.0 + 1));
    Ok(RateReport {
        errors,
        decreases,
        fit,
        transition,
    })
}
