//! Halfspaces, polyhedra, support functions, and linear subspaces.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, norm, null_space};

/// Relative tolerance for deciding that a vector is a nonnegative multiple
/// of a halfspace normal.
pub const TAU_RAY: f64 = 1e-9;
/// Singular values within this distance of 1 count as shared directions.
pub const TAU_ANGLE: f64 = 1e-8;
/// Allowed deviation of a stored normal from unit length.
pub const UNIT_TOL: f64 = 1e-12;
/// Allowed deviation from orthonormality for subspace bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// A real number or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// `f64` view with `+∞` mapped to `f64::INFINITY`, for reporting only.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl core::ops::Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("inf"),
        }
    }
}

/// `{x : ⟨normal, x⟩ ≤ offset}` with a unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: Vec<f64>,
    offset: ExtReal,
}

impl Halfspace {
    /// Builds a halfspace from an already unit-length normal.
    pub fn new(normal: Vec<f64>, offset: ExtReal) -> Result<Self> {
        let nrm = norm(&normal);
        if normal.is_empty() || (nrm - 1.0).abs() > UNIT_TOL {
            return Err(Error::contract(format!(
                "halfspace normal must have unit length (got norm {nrm}); \
                 use Halfspace::normalized to rescale"
            )));
        }
        if let ExtReal::Finite(c) = offset {
            if !c.is_finite() {
                return Err(Error::contract("finite offset must be a finite float"));
            }
        }
        Ok(Halfspace { normal, offset })
    }

    /// `{x : ⟨f, x⟩ ≤ c}` rescaled so the normal has unit length.
    pub fn normalized(f: Vec<f64>, c: ExtReal) -> Result<Self> {
        let nrm = norm(&f);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::contract("halfspace normal must be nonzero"));
        }
        let normal = f.iter().map(|x| x / nrm).collect();
        let offset = match c {
            ExtReal::Finite(c) => ExtReal::Finite(c / nrm),
            ExtReal::PosInf => ExtReal::PosInf,
        };
        Ok(Halfspace { normal, offset })
    }

    /// The whole space, written as a halfspace with infinite offset.
    pub fn whole_space(normal: Vec<f64>) -> Result<Self> {
        Halfspace::new(normal, ExtReal::PosInf)
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> ExtReal {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `⟨normal, x⟩ − offset`, or `None` for the whole space.
    pub fn excess(&self, x: &[f64]) -> Option<f64> {
        self.offset.finite().map(|c| dot(&self.normal, x) - c)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.excess(x).is_none_or(|e| e <= tol)
    }

    /// Distance from `x` to the halfspace.
    pub fn dist(&self, x: &[f64]) -> f64 {
        self.excess(x).map_or(0.0, |e| e.max(0.0))
    }

    /// Distance from `x` to the boundary hyperplane (`+∞` when there is none).
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        self.excess(x).map_or(f64::INFINITY, |e| e.abs())
    }

    /// The same halfspace seen from an origin moved to `p`: offset `c − ⟨f, p⟩`.
    pub fn shifted(&self, p: &[f64]) -> Halfspace {
        let offset = match self.offset {
            ExtReal::Finite(c) => ExtReal::Finite(c - dot(&self.normal, p)),
            ExtReal::PosInf => ExtReal::PosInf,
        };
        Halfspace {
            normal: self.normal.clone(),
            offset,
        }
    }
}

/// Ordered intersection of halfspaces of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralSet {
    halfspaces: Vec<Halfspace>,
}

impl PolyhedralSet {
    pub fn new(halfspaces: Vec<Halfspace>) -> Result<Self> {
        let first = halfspaces
            .first()
            .ok_or_else(|| Error::contract("a polyhedral set needs at least one halfspace"))?;
        let n = first.dim();
        for h in &halfspaces {
            check_dim(n, h.dim())?;
        }
        Ok(PolyhedralSet { halfspaces })
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn len(&self) -> usize {
        self.halfspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halfspaces.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.halfspaces[0].dim()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.contains(x, tol))
    }

    /// `Σ_r λ_r f_r`.
    pub fn combine(&self, multipliers: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for (h, &l) in self.halfspaces.iter().zip(multipliers) {
            if l != 0.0 {
                axpy(l, h.normal(), &mut y);
            }
        }
        y
    }

    pub fn shifted(&self, p: &[f64]) -> PolyhedralSet {
        PolyhedralSet {
            halfspaces: self.halfspaces.iter().map(|h| h.shifted(p)).collect(),
        }
    }
}

/// Euclidean projection onto one halfspace.
pub fn project_halfspace(x: &[f64], h: &Halfspace) -> Result<Vec<f64>> {
    check_dim(h.dim(), x.len())?;
    let mut out = x.to_vec();
    if let Some(e) = h.excess(x) {
        if e > 0.0 {
            axpy(-e, h.normal(), &mut out);
        }
    }
    Ok(out)
}

/// `δ*(y, H) = sup_{x ∈ H} ⟨y, x⟩`.
///
/// Finite only on the ray `{λ f : λ ≥ 0}`; membership is decided with
/// relative tolerance [`TAU_RAY`].
pub fn support_halfspace(y: &[f64], h: &Halfspace) -> ExtReal {
    let ny = norm(y);
    if ny == 0.0 {
        return ExtReal::Finite(0.0);
    }
    let lambda = dot(y, h.normal());
    let mut off_ray = 0.0;
    for (yi, fi) in y.iter().zip(h.normal()) {
        let r = yi - lambda * fi;
        off_ray += r * r;
    }
    if off_ray.sqrt() > TAU_RAY * ny || lambda < -TAU_RAY * ny {
        return ExtReal::PosInf;
    }
    let lambda = lambda.max(0.0);
    match h.offset() {
        ExtReal::Finite(c) => ExtReal::Finite(lambda * c),
        ExtReal::PosInf if lambda <= TAU_RAY * ny => ExtReal::Finite(0.0),
        ExtReal::PosInf => ExtReal::PosInf,
    }
}

/// Support value of `y = Σ λ_r f_r` computed as `Σ λ_r c_r`.
///
/// Exact whenever a point of the set is tight on every halfspace with
/// `λ_r > 0` (which holds for multipliers produced by a projection), and an
/// upper bound on `δ*(y, C)` otherwise.
pub fn support_decomposed(multipliers: &[f64], set: &PolyhedralSet) -> Result<ExtReal> {
    check_dim(set.len(), multipliers.len())?;
    let mut total = 0.0;
    for (h, &l) in set.halfspaces().iter().zip(multipliers) {
        if l < -TAU_RAY {
            return Err(Error::contract(format!("negative multiplier {l}")));
        }
        if l <= 0.0 {
            continue;
        }
        match h.offset() {
            ExtReal::Finite(c) => total += l * c,
            ExtReal::PosInf => return Ok(ExtReal::PosInf),
        }
    }
    Ok(ExtReal::Finite(total))
}

/// Orthonormal basis of a linear subspace of `ℝⁿ`, stored as matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Wraps columns that must already be orthonormal.
    pub fn from_orthonormal(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        for c in columns {
            check_dim(dim, c.len())?;
        }
        let basis = DMatrix::from_fn(dim, columns.len(), |r, c| columns[c][r]);
        let gram = basis.transpose() * &basis;
        let k = columns.len();
        let err = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if err > ORTHONORMAL_TOL {
            return Err(Error::contract(format!(
                "subspace basis is not orthonormal (max Gram deviation {err:e})"
            )));
        }
        Ok(SubspaceBasis { basis })
    }

    /// Orthonormalizes an arbitrary spanning list.
    pub fn from_spanning(dim: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        for v in vectors {
            check_dim(dim, v.len())?;
        }
        let m = DMatrix::from_fn(dim, vectors.len(), |r, c| vectors[c][r]);
        Ok(SubspaceBasis {
            basis: crate::linalg::orthonormal_range(&m, 1e-10),
        })
    }

    pub fn zero(dim: usize) -> Self {
        SubspaceBasis {
            basis: DMatrix::zeros(dim, 0),
        }
    }

    pub fn whole(dim: usize) -> Self {
        SubspaceBasis {
            basis: DMatrix::identity(dim, dim),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Dimension of the subspace.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `M_1 ∩ … ∩ M_k`, as the null space of the stacked complement
    /// projectors `I − P_{M_i}`.
    pub fn intersection(spaces: &[&SubspaceBasis]) -> Result<SubspaceBasis> {
        let first = spaces
            .first()
            .ok_or_else(|| Error::contract("intersection of an empty family"))?;
        let n = first.ambient_dim();
        for s in spaces {
            check_dim(n, s.ambient_dim())?;
        }
        if spaces.len() == 1 {
            return Ok((*first).clone());
        }
        let mut stacked = DMatrix::zeros(n * spaces.len(), n);
        for (k, s) in spaces.iter().enumerate() {
            let comp = DMatrix::<f64>::identity(n, n) - s.projector();
            stacked.view_mut((k * n, 0), (n, n)).copy_from(&comp);
        }
        Ok(SubspaceBasis {
            basis: null_space(&stacked, TAU_ANGLE),
        })
    }
}

/// Cosine of the Friedrichs angle between two subspaces.
///
/// Principal-angle cosines are the singular values of `B_Mᵀ B_N`; those
/// within [`TAU_ANGLE`] of one belong to `M ∩ N` and are skipped.
pub fn friedrichs_angle(m: &SubspaceBasis, n: &SubspaceBasis) -> Result<f64> {
    check_dim(m.ambient_dim(), n.ambient_dim())?;
    for b in [m, n] {
        let k = b.rank();
        let err = (b.matrix().transpose() * b.matrix() - DMatrix::<f64>::identity(k, k)).amax();
        if k > 0 && err > ORTHONORMAL_TOL {
            return Err(Error::contract("friedrichs_angle needs orthonormal bases"));
        }
    }
    if m.rank() == 0 || n.rank() == 0 {
        return Ok(0.0);
    }
    let cross = m.matrix().transpose() * n.matrix();
    let sv = cross.singular_values();
    let c = sv.iter().copied().filter(|&s| s < 1.0 - TAU_ANGLE).fold(0.0, f64::max);
    Ok(c.clamp(0.0, 1.0))
}

/// `α = [1 − ∏_{l=2}^{k} (1 − c²(M_l, M_1 ∩ … ∩ M_{l−1}))]^{1/2}`, the bound on
/// `‖P_{M_k} ⋯ P_{M_1} − P_M‖` for `M = ∩ M_i`.
pub fn dh97_alpha(subspaces: &[SubspaceBasis]) -> Result<f64> {
    if subspaces.is_empty() {
        return Err(Error::contract("dh97_alpha needs at least one subspace"));
    }
    let mut product = 1.0;
    let mut running = subspaces[0].clone();
    for next in &subspaces[1..] {
        let c = friedrichs_angle(next, &running)?;
        product *= 1.0 - c * c;
        running = SubspaceBasis::intersection(&[&running, next])?;
    }
    Ok((1.0 - product).max(0.0).sqrt())
}

/// Power-iteration estimate of `‖P_{M_k} ⋯ P_{M_1} − P_M‖₂`.
///
/// Converges from below, so the result never overstates the true norm by
/// more than rounding.
pub fn product_gap_norm(subspaces: &[SubspaceBasis], iterations: usize, seed: u64) -> Result<f64> {
    let first = subspaces
        .first()
        .ok_or_else(|| Error::contract("product_gap_norm needs at least one subspace"))?;
    let n = first.ambient_dim();
    let mut prod = DMatrix::<f64>::identity(n, n);
    for s in subspaces {
        check_dim(n, s.ambient_dim())?;
        prod = s.projector() * prod;
    }
    let refs: Vec<&SubspaceBasis> = subspaces.iter().collect();
    let t = prod - SubspaceBasis::intersection(&refs)?.projector();
    let a = t.transpose() * &t;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut est = 0.0;
    for _ in 0..iterations {
        let nv = v.norm();
        if nv == 0.0 {
            return Ok(0.0);
        }
        v /= nv;
        let av = &a * &v;
        est = v.dot(&av);
        v = av;
    }
    Ok(est.max(0.0).sqrt())
}
