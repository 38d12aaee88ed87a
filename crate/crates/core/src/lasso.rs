//! Least-squares lasso as a best approximation problem.
//!
//! For `min ½‖Ax − b‖² + λ‖x‖₁`, write `y_i = x_i A_i`. Then
//! `λ|x_i| = δ*(y_i, S_i)` for the slab `S_i = {z : |⟨A_i, z⟩| ≤ λ}`, and
//! the lasso becomes
//!
//! ```text
//! min_y ½‖b − Σ y_i‖² + Σ δ*(y_i, S_i)
//! ```
//!
//! which is the dual of projecting `b` onto `∩ S_i`. Each slab is stored as
//! two halfspaces with normals `±A_i/‖A_i‖` and offset `λ/‖A_i‖`; the lasso
//! coefficient is the difference of their multipliers divided by `‖A_i‖`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{ExtReal, Halfspace, PolyhedralSet};
use crate::linalg::{dot, norm};
use crate::schedule::Schedule;
use crate::solver::{solve, DualState, Instance, SolveOptions, SolveOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct LassoProblem {
    a: DMatrix<f64>,
    b: Vec<f64>,
    lambda: f64,
}

impl LassoProblem {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>, lambda: f64) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        if a.ncols() == 0 || a.nrows() == 0 {
            return Err(Error::contract("lasso matrix must be nonempty"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::contract(format!("lasso weight must be positive, got {lambda}")));
        }
        if let Some(j) = (0..a.ncols()).find(|&j| a.column(j).norm() == 0.0) {
            return Err(Error::contract(format!("column {j} of the lasso matrix is zero")));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::contract("lasso data has non-finite entries"));
        }
        Ok(LassoProblem { a, b, lambda })
    }

    /// Builds `A` from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], b: Vec<f64>, lambda: f64) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        for r in rows {
            check_dim(n, r.len())?;
        }
        LassoProblem::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]), b, lambda)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of observations (the ambient dimension of the slabs).
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Number of coefficients (the number of slabs).
    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.a.column(j).iter().copied().collect()
    }

    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let ax = &self.a * nalgebra::DVector::from_column_slice(x);
        self.b.iter().zip(ax.iter()).map(|(b, v)| b - v).collect()
    }

    /// `½‖Ax − b‖² + λ‖x‖₁`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let r = self.residual(x);
        0.5 * dot(&r, &r) + self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// `{z : |⟨axis, z⟩| ≤ half_width}` with a unit axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabSet {
    pub axis: Vec<f64>,
    pub half_width: f64,
}

impl SlabSet {
    /// Halfspaces `+axis` then `−axis`.
    pub fn to_polyhedral(&self) -> PolyhedralSet {
        let neg: Vec<f64> = self.axis.iter().map(|v| -v).collect();
        let w = ExtReal::Finite(self.half_width);
        PolyhedralSet::new(vec![
            Halfspace::normalized(self.axis.clone(), w).expect("slab axis is nonzero"),
            Halfspace::normalized(neg, w).expect("slab axis is nonzero"),
        ])
        .expect("two halfspaces")
    }

    /// Clips the axial coordinate of `z` to `[−w, w]`.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let t = dot(&self.axis, z);
        let clipped = t.clamp(-self.half_width, self.half_width);
        z.iter().zip(&self.axis).map(|(v, a)| v + (clipped - t) * a).collect()
    }
}

pub fn slabs(p: &LassoProblem) -> Vec<SlabSet> {
    (0..p.cols())
        .map(|j| {
            let col = p.column(j);
            let nrm = norm(&col);
            SlabSet {
                axis: col.iter().map(|v| v / nrm).collect(),
                half_width: p.lambda / nrm,
            }
        })
        .collect()
}

/// The projection problem with anchor `b` and one slab per column.
pub fn to_dual_bap(p: &LassoProblem) -> Result<Instance> {
    let sets = slabs(p).iter().map(SlabSet::to_polyhedral).collect();
    Instance::new(p.b.clone(), sets, None)
}

/// `x_i = (λ_{i,+} − λ_{i,−}) / ‖A_i‖`.
pub fn recover_x(p: &LassoProblem, y: &DualState) -> Result<Vec<f64>> {
    check_dim(p.cols(), y.multipliers().len())?;
    y.multipliers()
        .iter()
        .enumerate()
        .map(|(j, block)| {
            if block.len() != 2 {
                return Err(Error::Consistency {
                    step: j,
                    detail: format!("slab {j} has {} multipliers, expected 2", block.len()),
                });
            }
            Ok((block[0] - block[1]) / p.a.column(j).norm())
        })
        .collect()
}

/// Solves the lasso through the projection problem and returns the
/// recovered coefficients.
pub fn solve_lasso(p: &LassoProblem, sched: &Schedule, opts: &SolveOptions) -> Result<(Vec<f64>, SolveOutcome)> {
    let inst = to_dual_bap(p)?;
    let out = solve(&inst, sched, opts)?;
    let x = recover_x(p, &out.y)?;
    Ok((x, out))
}
