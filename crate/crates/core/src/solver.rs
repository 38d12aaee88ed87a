//! Almost-cyclic Dykstra with SHQP steps.
//!
//! Each dual vector `y_i` is stored only as nonnegative multipliers over the
//! halfspaces of `C_i`; the primal iterate is always `x = d − Σ y_i`.
//!
//! One cycle runs, for `j = 1..=w′`:
//!
//! 1. a projection step on `C_{s(j)}`: `z = x + y_{s(j)}`,
//!    `x° = P_{C_{s(j)}}(z)`, and `y_{s(j)}` becomes `z − x°`;
//! 2. an optional SHQP step: for the sets in `Q_j`, replace `C_i` by a
//!    bundle of supporting halfspaces and minimize the dual jointly over
//!    those blocks. The result is expanded back onto the multipliers of the
//!    original halfspaces.
//!
//! Supporting halfspaces come from dual vectors: a vector `e = Σ λ_r f_r`
//! obtained by projecting onto `C_i` defines `{x : ⟨e, x⟩ ≤ Σ λ_r c_r}`,
//! which contains `C_i` and touches it.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{ExtReal, Halfspace, PolyhedralSet};
use crate::linalg::{axpy, dist, dot, norm};
use crate::qp::{project_with, shqp_block_minimize, Bundle, ProjectorKind};
use crate::schedule::Schedule;

/// Maximum number of generated halfspaces kept per set in accumulate mode.
pub const BUNDLE_CAP: usize = 8;

/// A new generated halfspace replaces any older one whose unit normal is
/// within this distance; nearly parallel bundle members make the SHQP step
/// ill-conditioned.
const BUNDLE_MIN_SEPARATION: f64 = 1e-4;

/// Relative tolerance for feasibility of a stored projection.
const KNOWN_FEAS_TOL: f64 = 1e-9;

/// A best approximation problem: project `d` onto `∩ sets`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    d: Vec<f64>,
    sets: Vec<PolyhedralSet>,
    known_projection: Option<Vec<f64>>,
}

impl Instance {
    pub fn new(d: Vec<f64>, sets: Vec<PolyhedralSet>, known_projection: Option<Vec<f64>>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::contract("anchor must have positive dimension"));
        }
        if sets.is_empty() {
            return Err(Error::contract("an instance needs at least one set"));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("anchor has non-finite entries"));
        }
        for s in &sets {
            check_dim(d.len(), s.dim())?;
        }
        let inst = Instance {
            d,
            sets,
            known_projection: None,
        };
        match known_projection {
            Some(x) => inst.with_known_projection(x),
            None => Ok(inst),
        }
    }

    /// Attaches `P_C(d)`; it must be feasible up to a relative `1e-9`.
    pub fn with_known_projection(mut self, x: Vec<f64>) -> Result<Self> {
        check_dim(self.dim(), x.len())?;
        let tol = KNOWN_FEAS_TOL * (1.0 + norm(&x));
        if let Some(i) = self.sets.iter().position(|s| !s.contains(&x, tol)) {
            return Err(Error::contract(format!("known projection is outside set {}", i + 1)));
        }
        self.known_projection = Some(x);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn sets(&self) -> &[PolyhedralSet] {
        &self.sets
    }

    pub fn m(&self) -> usize {
        self.sets.len()
    }

    pub fn known_projection(&self) -> Option<&[f64]> {
        self.known_projection.as_deref()
    }

    pub fn total_halfspaces(&self) -> usize {
        self.sets.iter().map(|s| s.len()).sum()
    }

    /// All halfspaces of all sets, in order.
    pub fn stacked(&self) -> PolyhedralSet {
        let hs = self.sets.iter().flat_map(|s| s.halfspaces().iter().cloned()).collect();
        PolyhedralSet::new(hs).expect("instances have at least one halfspace")
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.sets.iter().all(|s| s.contains(x, tol))
    }
}

/// Dual vectors `y_i = Σ_r λ_{i,r} f_{i,r}` held as their multipliers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DualState {
    multipliers: Vec<Vec<f64>>,
}

impl DualState {
    pub fn zeros(inst: &Instance) -> Self {
        DualState {
            multipliers: inst.sets().iter().map(|s| vec![0.0; s.len()]).collect(),
        }
    }

    /// Checks block count, block lengths and `λ ≥ 0`.
    pub fn from_multipliers(inst: &Instance, multipliers: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(inst.m(), multipliers.len())?;
        for (i, (set, block)) in inst.sets().iter().zip(&multipliers).enumerate() {
            check_dim(set.len(), block.len())?;
            if let Some(l) = block.iter().find(|l| !l.is_finite() || **l < 0.0) {
                return Err(Error::contract(format!("multiplier {l} of set {} is not ≥ 0", i + 1)));
            }
        }
        Ok(DualState { multipliers })
    }

    pub fn multipliers(&self) -> &[Vec<f64>] {
        &self.multipliers
    }

    pub fn into_multipliers(self) -> Vec<Vec<f64>> {
        self.multipliers
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.multipliers[i]
    }

    pub fn is_zero(&self) -> bool {
        self.multipliers.iter().flatten().all(|&l| l == 0.0)
    }

    /// `y_i`.
    pub fn vector(&self, inst: &Instance, i: usize) -> Vec<f64> {
        inst.sets()[i].combine(&self.multipliers[i])
    }

    pub fn vectors(&self, inst: &Instance) -> Vec<Vec<f64>> {
        (0..inst.m()).map(|i| self.vector(inst, i)).collect()
    }

    /// `d − Σ y_i`.
    pub fn primal(&self, inst: &Instance) -> Vec<f64> {
        primal_from(inst.d(), &self.vectors(inst))
    }
}

fn primal_from(d: &[f64], yvec: &[Vec<f64>]) -> Vec<f64> {
    let mut x = d.to_vec();
    for y in yvec {
        axpy(-1.0, y, &mut x);
    }
    x
}

/// How the SHQP step builds its halfspace bundles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShqpMode {
    /// Plain almost-cyclic Dykstra.
    #[default]
    Off,
    /// One halfspace per set, from its most recent dual vector.
    LastHalfspace,
    /// Up to [`BUNDLE_CAP`] most recent halfspaces per set.
    Accumulate,
}

impl FromStr for ShqpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(ShqpMode::Off),
            "last-halfspace" => Ok(ShqpMode::LastHalfspace),
            "accumulate" => Ok(ShqpMode::Accumulate),
            other => Err(Error::contract(format!(
                "unknown SHQP mode `{other}` (expected off, last-halfspace or accumulate)"
            ))),
        }
    }
}

/// Rule for the block set `Q_j` of the SHQP step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QSelector {
    /// Every set already projected onto in the current cycle.
    #[default]
    VisitedThisCycle,
    Empty,
    /// The visited sets, but only on steps `j` divisible by the period.
    AllVisitedEvery(usize),
}

impl FromStr for QSelector {
    type Err = Error;

    /// `visited`, `none`, or `every:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visited" => Ok(QSelector::VisitedThisCycle),
            "none" => Ok(QSelector::Empty),
            _ => {
                let k = s
                    .strip_prefix("every:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0)
                    .ok_or_else(|| {
                        Error::contract(format!("unknown Q policy `{s}` (expected visited, none or every:<k>)"))
                    })?;
                Ok(QSelector::AllVisitedEvery(k))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShqpPolicy {
    pub mode: ShqpMode,
    pub q_selector: QSelector,
}

impl ShqpPolicy {
    pub fn off() -> Self {
        ShqpPolicy::default()
    }

    pub fn last_halfspace() -> Self {
        ShqpPolicy {
            mode: ShqpMode::LastHalfspace,
            q_selector: QSelector::VisitedThisCycle,
        }
    }

    pub fn accumulate() -> Self {
        ShqpPolicy {
            mode: ShqpMode::Accumulate,
            q_selector: QSelector::VisitedThisCycle,
        }
    }
}

/// How much of a run to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum TraceLevel {
    Off,
    /// One summary per cycle.
    #[default]
    Cycles,
    /// Plus scalar records for every inner step.
    Steps,
    /// Plus the primal points of every inner step.
    Points,
}

/// One inner step `j` of a cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub j: usize,
    /// `s(j)`, 1-based.
    pub s: usize,
    pub p: isize,
    /// Dual value after the projection step.
    pub v_proj: f64,
    /// Dual value after the SHQP step (equal to `v_proj` when it is skipped).
    pub v_plus: f64,
    /// `‖x_j° − x_{j−1}^+‖`.
    pub step_proj: f64,
    /// `‖x_j^+ − x_j°‖`.
    pub step_shqp: f64,
    /// `‖x_j^+ − x*‖` when the projection is known.
    pub err: Option<f64>,
    pub x_proj: Option<Vec<f64>>,
    pub x_plus: Option<Vec<f64>>,
}

/// Record of one cycle. Dual values are `v` relative to the known
/// projection when there is one, and `½‖x‖² + Σ δ*(y_i, C_i)` otherwise;
/// the two differ by a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTrace {
    /// 1-based cycle number within a run (0 when produced by [`run_cycle`] directly).
    pub cycle: usize,
    pub v_start: f64,
    pub v_end: f64,
    /// `x₀^+ = d − Σ y_in`.
    pub x_start: Vec<f64>,
    pub x_end: Vec<f64>,
    pub err_end: Option<f64>,
    pub y_start: DualState,
    pub steps: Vec<StepRecord>,
}

impl CycleTrace {
    pub fn decrease(&self) -> f64 {
        self.v_start - self.v_end
    }
}

/// Precomputed offsets for dual evaluation.
struct Evaluator<'a> {
    inst: &'a Instance,
    /// Offsets `c − ⟨f, x*⟩` when `x*` is known, raw `c` otherwise.
    offsets: Vec<Vec<ExtReal>>,
}

impl<'a> Evaluator<'a> {
    fn new(inst: &'a Instance) -> Self {
        let offsets = inst
            .sets()
            .iter()
            .map(|s| match inst.known_projection() {
                Some(xs) => s.shifted(xs).halfspaces().iter().map(|h| h.offset()).collect(),
                None => s.halfspaces().iter().map(|h| h.offset()).collect(),
            })
            .collect();
        Evaluator { inst, offsets }
    }

    fn value(&self, lam: &[Vec<f64>], x: &[f64]) -> ExtReal {
        let quad = match self.inst.known_projection() {
            Some(xs) => 0.5 * x.iter().zip(xs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            None => 0.5 * dot(x, x),
        };
        let mut total = quad;
        for (block, offs) in lam.iter().zip(&self.offsets) {
            for (&l, &c) in block.iter().zip(offs) {
                if l > 0.0 {
                    match c {
                        ExtReal::Finite(c) => total += l * c,
                        ExtReal::PosInf => return ExtReal::PosInf,
                    }
                }
            }
        }
        ExtReal::Finite(total)
    }

    fn err(&self, x: &[f64]) -> Option<f64> {
        self.inst.known_projection().map(|xs| dist(x, xs))
    }
}

/// `v(y) = ½‖d − x* − Σ y_i‖² + Σ δ*(y_i, C_i − x*)`, with each support
/// term evaluated from the stored multipliers.
///
/// Requires the known projection `x*`.
pub fn dual_value(inst: &Instance, y: &DualState) -> Result<ExtReal> {
    if inst.known_projection().is_none() {
        return Err(Error::UnsupportedQuery(
            "the dual value is measured relative to a known projection".to_string(),
        ));
    }
    check_dim(inst.m(), y.multipliers().len())?;
    Ok(Evaluator::new(inst).value(y.multipliers(), &y.primal(inst)))
}

/// `½‖d − Σ y_i‖² + Σ δ*(y_i, C_i)`, which differs from [`dual_value`] by
/// the constant `½‖d − x*‖² − ½‖d‖²`. For a lasso instance this is the
/// lasso objective.
pub fn dual_value_unshifted(inst: &Instance, y: &DualState) -> ExtReal {
    let x = y.primal(inst);
    let mut total = 0.5 * dot(&x, &x);
    for (set, block) in inst.sets().iter().zip(y.multipliers()) {
        for (h, &l) in set.halfspaces().iter().zip(block) {
            if l > 0.0 {
                match h.offset() {
                    ExtReal::Finite(c) => total += l * c,
                    ExtReal::PosInf => return ExtReal::PosInf,
                }
            }
        }
    }
    ExtReal::Finite(total)
}

/// A supporting halfspace of one set together with its expansion onto the
/// set's own halfspaces: `normal = Σ_r expansion_r f_r`.
#[derive(Debug, Clone)]
struct Generator {
    halfspace: Halfspace,
    expansion: Vec<f64>,
}

impl Generator {
    fn from_multipliers(set: &PolyhedralSet, lam: &[f64], scale: f64) -> Option<Self> {
        let e = set.combine(lam);
        let ne = norm(&e);
        if ne <= 1e-14 * scale {
            return None;
        }
        let mut offset = 0.0;
        for (h, &l) in set.halfspaces().iter().zip(lam) {
            if l > 0.0 {
                offset += l * h.offset().finite()?;
            }
        }
        let halfspace = Halfspace::new(e.iter().map(|v| v / ne).collect(), ExtReal::Finite(offset / ne))
            .or_else(|_| Halfspace::normalized(e, ExtReal::Finite(offset)))
            .ok()?;
        Some(Generator {
            halfspace,
            expansion: lam.iter().map(|l| l / ne).collect(),
        })
    }

    fn own(set: &PolyhedralSet) -> Self {
        Generator {
            halfspace: set.halfspaces()[0].clone(),
            expansion: vec![1.0],
        }
    }
}

/// A set given by one halfspace with a finite offset is its own bundle.
fn is_single_halfspace(set: &PolyhedralSet) -> bool {
    set.len() == 1 && set.halfspaces()[0].offset().is_finite()
}

fn push_generator(bundle: &mut Vec<Generator>, g: Generator, mode: ShqpMode) {
    match mode {
        ShqpMode::Off => {}
        ShqpMode::LastHalfspace => {
            bundle.clear();
            bundle.push(g);
        }
        ShqpMode::Accumulate => {
            bundle.retain(|old| dist(old.halfspace.normal(), g.halfspace.normal()) > BUNDLE_MIN_SEPARATION);
            bundle.push(g);
            if bundle.len() > BUNDLE_CAP {
                bundle.remove(0);
            }
        }
    }
}

fn check_block(lam: &[f64], step: usize, what: &str) -> Result<()> {
    if let Some(l) = lam.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::Consistency {
            step,
            detail: format!("{what} produced multiplier {l}"),
        });
    }
    Ok(())
}

/// Runs one cycle of the almost-cyclic iteration starting from `y_in`.
pub fn run_cycle(
    inst: &Instance,
    y_in: &DualState,
    sched: &Schedule,
    policy: &ShqpPolicy,
    projector: ProjectorKind,
    level: TraceLevel,
) -> Result<(DualState, CycleTrace)> {
    let eval = Evaluator::new(inst);
    run_cycle_with(&eval, y_in, sched, policy, projector, level)
}

fn run_cycle_with(
    eval: &Evaluator<'_>,
    y_in: &DualState,
    sched: &Schedule,
    policy: &ShqpPolicy,
    projector: ProjectorKind,
    level: TraceLevel,
) -> Result<(DualState, CycleTrace)> {
    let inst = eval.inst;
    let m = inst.m();
    if sched.m() != m {
        return Err(Error::contract(format!(
            "schedule is for {} sets but the instance has {m}",
            sched.m()
        )));
    }
    let y_checked = DualState::from_multipliers(inst, y_in.multipliers().to_vec())?;
    let mut lam = y_checked.multipliers.clone();
    let mut yvec = y_checked.vectors(inst);
    let scale = 1.0 + norm(inst.d());
    let shqp_on = policy.mode != ShqpMode::Off;

    let mut bundles: Vec<Vec<Generator>> = vec![Vec::new(); m];
    if shqp_on {
        for (i, set) in inst.sets().iter().enumerate() {
            if lam[i].iter().all(|&l| l == 0.0) {
                continue;
            }
            let g = if is_single_halfspace(set) {
                Some(Generator::own(set))
            } else {
                Generator::from_multipliers(set, &lam[i], scale)
            };
            if let Some(g) = g {
                bundles[i].push(g);
            }
        }
    }

    let x_start = primal_from(inst.d(), &yvec);
    let v_start = eval.value(&lam, &x_start).to_f64();
    let mut x = x_start.clone();
    let mut visited = vec![false; m];
    let mut steps = Vec::new();

    for j in 1..=sched.w_prime() {
        let ji = j as isize;
        let s1 = sched.s(ji)?;
        let s = s1 - 1;
        let set = &inst.sets()[s];

        let mut z = x.clone();
        axpy(1.0, &yvec[s], &mut z);
        let proj = project_with(projector, &z, set.halfspaces(), Some(&lam[s]))?;
        check_block(&proj.multipliers, j, "projection")?;
        lam[s] = proj.multipliers;
        yvec[s] = set.combine(&lam[s]);
        let x_proj = primal_from(inst.d(), &yvec);
        visited[s] = true;

        if shqp_on {
            let g = if is_single_halfspace(set) {
                Some(Generator::own(set))
            } else {
                Generator::from_multipliers(set, &lam[s], scale)
            };
            if let Some(g) = g {
                push_generator(&mut bundles[s], g, policy.mode);
            }
        }
        let v_proj = if level >= TraceLevel::Steps {
            eval.value(&lam, &x_proj).to_f64()
        } else {
            f64::NAN
        };

        let mut x_plus = x_proj.clone();
        if shqp_on {
            let in_q = |i: usize| -> bool {
                visited[i]
                    && match policy.q_selector {
                        QSelector::VisitedThisCycle => true,
                        QSelector::Empty => false,
                        QSelector::AllVisitedEvery(k) => j % k == 0,
                    }
            };
            let free: Vec<usize> = (0..m).filter(|&i| in_q(i) && !bundles[i].is_empty()).collect();
            if !free.is_empty() {
                let fixed: Vec<&[f64]> = (0..m)
                    .filter(|i| !free.contains(i))
                    .map(|i| yvec[i].as_slice())
                    .collect();
                let free_bundles: Vec<Bundle> = free
                    .iter()
                    .map(|&i| Bundle {
                        set: i,
                        halfspaces: bundles[i].iter().map(|g| g.halfspace.clone()).collect(),
                    })
                    .collect();
                let out = shqp_block_minimize(inst.d(), &fixed, &free_bundles, None, projector)?;
                for block in out.blocks {
                    let i = block.set;
                    let mut new_lam = vec![0.0; inst.sets()[i].len()];
                    for (g, &t) in bundles[i].iter().zip(&block.multipliers) {
                        if t > 0.0 {
                            axpy(t, &g.expansion, &mut new_lam);
                        }
                    }
                    check_block(&new_lam, j, "SHQP step")?;
                    yvec[i] = inst.sets()[i].combine(&new_lam);
                    lam[i] = new_lam;
                }
                x_plus = primal_from(inst.d(), &yvec);
            }
        }

        if level >= TraceLevel::Steps {
            let v_plus = eval.value(&lam, &x_plus).to_f64();
            let keep = level >= TraceLevel::Points;
            steps.push(StepRecord {
                j,
                s: s1,
                p: sched.p(ji)?,
                v_proj,
                v_plus,
                step_proj: dist(&x_proj, &x),
                step_shqp: dist(&x_plus, &x_proj),
                err: eval.err(&x_plus),
                x_proj: keep.then(|| x_proj.clone()),
                x_plus: keep.then(|| x_plus.clone()),
            });
        }
        x = x_plus;
    }

    let v_end = eval.value(&lam, &x).to_f64();
    let trace = CycleTrace {
        cycle: 0,
        v_start,
        v_end,
        err_end: eval.err(&x),
        x_start,
        x_end: x,
        y_start: y_checked,
        steps,
    };
    Ok((DualState { multipliers: lam }, trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub tol: f64,
    pub max_cycles: usize,
    /// Stop once `‖x^k − x^{k−1}‖ ≤ tol·(1 + ‖d‖)` and every dual vector
    /// moved by no more than that over the cycle.
    pub primal_change: bool,
    /// Stop once `‖x − x*‖ ≤ tol` when `x*` is known.
    pub known_error: bool,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            tol: 1e-9,
            max_cycles: 10_000,
            primal_change: true,
            known_error: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveOptions {
    pub policy: ShqpPolicy,
    pub projector: ProjectorKind,
    pub stop: StoppingRule,
    pub trace: TraceLevel,
    /// Initial dual state; zero when absent.
    pub warmstart: Option<DualState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// The cycle cap was reached; the outcome holds the last iterate.
    Unconverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub y: DualState,
    pub traces: Vec<CycleTrace>,
    pub status: SolveStatus,
    /// Number of completed cycles.
    pub cycles: usize,
}

/// Repeats [`run_cycle`] until the stopping rule fires.
pub fn solve(inst: &Instance, sched: &Schedule, opts: &SolveOptions) -> Result<SolveOutcome> {
    let stop = opts.stop;
    if !(stop.tol > 0.0) {
        return Err(Error::contract("stopping tolerance must be positive"));
    }
    let eval = Evaluator::new(inst);
    let mut y = match &opts.warmstart {
        Some(w) => DualState::from_multipliers(inst, w.multipliers().to_vec())?,
        None => DualState::zeros(inst),
    };
    let mut x = y.primal(inst);
    let scale = 1.0 + norm(inst.d());
    let mut traces = Vec::new();

    let done_at_start = (y.is_zero() && inst.contains(&x, 1e-12 * scale))
        || (stop.known_error && eval.err(&x).is_some_and(|e| e <= stop.tol));
    if done_at_start {
        return Ok(SolveOutcome {
            x,
            y,
            traces,
            status: SolveStatus::Converged,
            cycles: 0,
        });
    }

    for k in 1..=stop.max_cycles {
        let (y_next, mut trace) = run_cycle_with(&eval, &y, sched, &opts.policy, opts.projector, opts.trace)?;
        let change = dist(&trace.x_end, &x);
        let dual_change = (0..inst.m())
            .map(|i| dist(&y_next.vector(inst, i), &y.vector(inst, i)))
            .fold(0.0, f64::max);
        trace.cycle = k;
        x = trace.x_end.clone();
        y = y_next;
        let err = trace.err_end;
        if opts.trace > TraceLevel::Off {
            traces.push(trace);
        }
        let converged = (stop.primal_change && change.max(dual_change) <= stop.tol * scale)
            || (stop.known_error && err.is_some_and(|e| e <= stop.tol));
        if converged {
            return Ok(SolveOutcome {
                x,
                y,
                traces,
                status: SolveStatus::Converged,
                cycles: k,
            });
        }
    }
    Ok(SolveOutcome {
        x,
        y,
        traces,
        status: SolveStatus::Unconverged,
        cycles: stop.max_cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::project_polyhedron;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hs(f: &[f64], c: f64) -> Halfspace {
        Halfspace::normalized(f.to_vec(), ExtReal::Finite(c)).unwrap()
    }

    fn set(h: Vec<Halfspace>) -> PolyhedralSet {
        PolyhedralSet::new(h).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> Instance {
        let sets = (0..m)
            .map(|_| {
                set((0..k)
                    .map(|_| {
                        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                        Halfspace::normalized(f, ExtReal::Finite(rng.random_range(0.0..0.5))).unwrap()
                    })
                    .collect())
            })
            .collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let inst = Instance::new(d, sets, None).unwrap();
        let xs = project_polyhedron(inst.d(), &inst.stacked()).unwrap().point;
        inst.with_known_projection(xs).unwrap()
    }

    fn steps_opts(policy: ShqpPolicy) -> SolveOptions {
        SolveOptions {
            policy,
            trace: TraceLevel::Points,
            stop: StoppingRule {
                primal_change: false,
                ..StoppingRule::default()
            },
            ..SolveOptions::default()
        }
    }

    /// Textbook Dykstra with one increment per set.
    fn naive_dykstra(inst: &Instance, cycles: usize) -> Vec<Vec<f64>> {
        let mut x = inst.d().to_vec();
        let mut incr = vec![vec![0.0; inst.dim()]; inst.m()];
        let mut points = Vec::new();
        for _ in 0..cycles {
            for (i, s) in inst.sets().iter().enumerate() {
                let z: Vec<f64> = x.iter().zip(&incr[i]).map(|(a, b)| a + b).collect();
                x = project_polyhedron(&z, s).unwrap().point;
                incr[i] = z.iter().zip(&x).map(|(a, b)| a - b).collect();
                points.push(x.clone());
            }
        }
        points
    }

    #[test]
    fn fixed_point_when_anchor_feasible() {
        let inst = Instance::new(vec![-1.0, -1.0], vec![set(vec![hs(&[1.0, 0.0], 0.0)])], None).unwrap();
        let y0 = DualState::zeros(&inst);
        let sched = Schedule::cyclic(1).unwrap();
        let (y, tr) = run_cycle(
            &inst,
            &y0,
            &sched,
            &ShqpPolicy::off(),
            ProjectorKind::ActiveSet,
            TraceLevel::Steps,
        )
        .unwrap();
        assert!(y.is_zero());
        assert!(tr.steps.iter().all(|s| s.step_proj == 0.0 && s.step_shqp == 0.0));
        let out = solve(&inst, &sched, &SolveOptions::default()).unwrap();
        assert_eq!(out.cycles, 0);
        assert_eq!(out.status, SolveStatus::Converged);
    }

    #[test]
    fn single_set_is_exact_after_first_step() {
        let s = set(vec![hs(&[1.0, 1.0], 0.0), hs(&[1.0, -2.0], 0.5)]);
        let inst = Instance::new(vec![2.0, 1.0], vec![s.clone()], None).unwrap();
        let sched = Schedule::cyclic(1).unwrap();
        let (_, tr) = run_cycle(
            &inst,
            &DualState::zeros(&inst),
            &sched,
            &ShqpPolicy::off(),
            ProjectorKind::ActiveSet,
            TraceLevel::Points,
        )
        .unwrap();
        let expect = project_polyhedron(inst.d(), &s).unwrap().point;
        assert!(dist(tr.steps[0].x_proj.as_ref().unwrap(), &expect) < 1e-14);
    }

    #[test]
    fn orthogonal_halfspaces_one_cycle() {
        let inst = Instance::new(
            vec![1.0, 1.0],
            vec![set(vec![hs(&[1.0, 0.0], 0.0)]), set(vec![hs(&[0.0, 1.0], 0.0)])],
            None,
        )
        .unwrap();
        let oracle = project_polyhedron(inst.d(), &inst.stacked()).unwrap().point;
        let sched = Schedule::cyclic(2).unwrap();
        let (y, _) = run_cycle(
            &inst,
            &DualState::zeros(&inst),
            &sched,
            &ShqpPolicy::off(),
            ProjectorKind::ActiveSet,
            TraceLevel::Off,
        )
        .unwrap();
        assert!(dist(&y.primal(&inst), &oracle) < 1e-15);
        assert_eq!(y.primal(&inst), vec![0.0, 0.0]);
    }

    #[test]
    fn matches_textbook_dykstra_step_for_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 4, 3, 3);
            let sched = Schedule::cyclic(3).unwrap();
            let mut opts = steps_opts(ShqpPolicy::off());
            opts.stop = StoppingRule {
                max_cycles: 15,
                primal_change: false,
                known_error: false,
                ..StoppingRule::default()
            };
            let out = solve(&inst, &sched, &opts).unwrap();
            let ours: Vec<Vec<f64>> = out
                .traces
                .iter()
                .flat_map(|t| t.steps.iter().map(|s| s.x_plus.clone().unwrap()))
                .collect();
            let naive = naive_dykstra(&inst, 15);
            assert_eq!(ours.len(), naive.len());
            for (a, b) in ours.iter().zip(&naive) {
                assert!(dist(a, b) < 1e-10);
            }
        }
    }

    #[test]
    fn converges_to_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 4, 3, 3);
            let sched = Schedule::cyclic(3).unwrap();
            // x* is not used for stopping here
            let bare = Instance::new(inst.d().to_vec(), inst.sets().to_vec(), None).unwrap();
            let out = solve(&bare, &sched, &SolveOptions::default()).unwrap();
            assert_eq!(out.status, SolveStatus::Converged);
            assert!(dist(&out.x, inst.known_projection().unwrap()) <= 1e-6);
        }
    }

    fn assert_decreases(inst: &Instance, out: &SolveOutcome) {
        let tol = 1e-9;
        let _ = inst;
        for tr in &out.traces {
            let mut prev = tr.v_start;
            for st in &tr.steps {
                assert!(prev - st.v_proj >= 0.5 * st.step_proj.powi(2) - tol, "{prev} {st:?}");
                assert!(st.v_proj - st.v_plus >= 0.5 * st.step_shqp.powi(2) - tol, "{st:?}");
                let err = st.err.unwrap();
                assert!(0.5 * err * err <= st.v_plus + tol);
                prev = st.v_plus;
            }
        }
    }

    #[test]
    fn dual_decrease_all_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let policies = [
            ShqpPolicy::off(),
            ShqpPolicy::last_halfspace(),
            ShqpPolicy::accumulate(),
            ShqpPolicy {
                mode: ShqpMode::Accumulate,
                q_selector: QSelector::AllVisitedEvery(2),
            },
        ];
        for _ in 0..15 {
            let inst = random_instance(&mut rng, 4, 3, 3);
            for (pi, policy) in policies.iter().enumerate() {
                let sched = if pi % 2 == 0 {
                    Schedule::cyclic(3).unwrap()
                } else {
                    Schedule::random_covering(3, 6, 5).unwrap()
                };
                let out = solve(&inst, &sched, &steps_opts(*policy)).unwrap();
                assert_eq!(out.status, SolveStatus::Converged, "{policy:?}");
                let e = dist(&out.x, inst.known_projection().unwrap());
                assert!(e <= 1e-6, "{policy:?} {pi} err {e}");
                assert_decreases(&inst, &out);
            }
        }
    }

    #[test]
    fn halfspaces_only_one_shot() {
        // H3 is inactive when first visited but active at the solution
        let inst = Instance::new(
            vec![0.0, 2.0],
            vec![
                set(vec![hs(&[0.0, 1.0], 1.0)]),
                set(vec![hs(&[1.0, 0.0], 0.5)]),
                set(vec![hs(&[-1.0, 1.0], 0.0)]),
            ],
            None,
        )
        .unwrap();
        let xs = project_polyhedron(inst.d(), &inst.stacked()).unwrap().point;
        let inst = inst.with_known_projection(xs.clone()).unwrap();
        let out = solve(
            &inst,
            &Schedule::cyclic(3).unwrap(),
            &steps_opts(ShqpPolicy::accumulate()),
        )
        .unwrap();
        assert_eq!(out.cycles, 1);
        assert!(dist(&out.x, &xs) <= 1e-12);
    }

    #[test]
    fn dual_value_basics() {
        let inst = Instance::new(
            vec![1.0, 1.0],
            vec![set(vec![hs(&[1.0, 0.0], 0.0)]), set(vec![hs(&[0.0, 1.0], 0.0)])],
            Some(vec![0.0, 0.0]),
        )
        .unwrap();
        let y0 = DualState::zeros(&inst);
        assert_eq!(dual_value(&inst, &y0).unwrap(), ExtReal::Finite(1.0));
        let opt = DualState::from_multipliers(&inst, vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(dual_value(&inst, &opt).unwrap(), ExtReal::Finite(0.0));
        let bare = Instance::new(inst.d().to_vec(), inst.sets().to_vec(), None).unwrap();
        assert!(matches!(dual_value(&bare, &y0), Err(Error::UnsupportedQuery(_))));
        assert_eq!(dual_value_unshifted(&bare, &opt), ExtReal::Finite(0.0));
    }

    #[test]
    fn infinite_offset_with_weight_gives_infinite_value() {
        let inst = Instance::new(
            vec![1.0],
            vec![set(vec![Halfspace::whole_space(vec![1.0]).unwrap(), hs(&[1.0], 0.0)])],
            Some(vec![0.0]),
        )
        .unwrap();
        let y = DualState::from_multipliers(&inst, vec![vec![0.5, 0.0]]).unwrap();
        assert_eq!(dual_value(&inst, &y).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn unconverged_is_a_status() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instance(&mut rng, 5, 3, 4);
        let opts = SolveOptions {
            stop: StoppingRule {
                tol: 1e-15,
                max_cycles: 1,
                ..StoppingRule::default()
            },
            ..SolveOptions::default()
        };
        let out = solve(&inst, &Schedule::cyclic(3).unwrap(), &opts).unwrap();
        if dist(&out.x, inst.known_projection().unwrap()) > 1e-15 {
            assert_eq!(out.status, SolveStatus::Unconverged);
        }
        assert_eq!(out.traces.len(), out.cycles);
    }

    #[test]
    fn warmstart_from_solution_stops_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let inst = random_instance(&mut rng, 3, 2, 3);
        let sched = Schedule::cyclic(2).unwrap();
        let first = solve(&inst, &sched, &SolveOptions::default()).unwrap();
        let opts = SolveOptions {
            warmstart: Some(first.y.clone()),
            ..SolveOptions::default()
        };
        let second = solve(&inst, &sched, &opts).unwrap();
        assert!(second.cycles <= 1);
    }

    #[test]
    fn warmstart_projector_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let inst = random_instance(&mut rng, 3, 2, 3);
            let opts = SolveOptions {
                projector: ProjectorKind::WarmstartDykstra { tol: 1e-12 },
                ..SolveOptions::default()
            };
            let out = solve(&inst, &Schedule::cyclic(2).unwrap(), &opts).unwrap();
            assert!(dist(&out.x, inst.known_projection().unwrap()) <= 1e-6);
        }
    }

    #[test]
    fn policy_text_forms() {
        assert_eq!("accumulate".parse::<ShqpMode>().unwrap(), ShqpMode::Accumulate);
        assert!("nope".parse::<ShqpMode>().is_err());
        assert_eq!("every:3".parse::<QSelector>().unwrap(), QSelector::AllVisitedEvery(3));
        assert!("every:0".parse::<QSelector>().is_err());
        assert_eq!("none".parse::<QSelector>().unwrap(), QSelector::Empty);
    }

    #[test]
    fn known_projection_must_be_feasible() {
        let r = Instance::new(vec![1.0], vec![set(vec![hs(&[1.0], 0.0)])], Some(vec![1.0]));
        assert!(r.is_err());
    }
}
