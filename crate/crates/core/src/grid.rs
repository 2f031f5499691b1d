//! Complex-valued grid functions and stencil operators on a nested 2D
//! node-based hierarchy.
//!
//! A level `l` carries `(n + 1) x (n + 1)` nodes with `n = 2^l` and mesh
//! width `h = 1/n`. The x-direction (index `i`) carries Robin radiation
//! rows at `i = 0` and `i = n`; the y-direction (index `j`) is Dirichlet
//! at `j = 0` and `j = n`. Dirichlet rows are kept in the arrays as
//! identity rows pinned to zero so that all levels index uniformly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex = Complex64;

/// One level of the nested grid hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLevel {
    /// Refinement exponent: n = 2^index points per dimension.
    pub index: u32,
}

impl GridLevel {
    pub fn new(index: u32) -> Self {
        GridLevel { index }
    }

    /// Points per dimension minus one; the grid has (n+1)^2 nodes.
    #[inline]
    pub fn n(&self) -> usize {
        1usize << self.index
    }

    /// Mesh width; h * n == 1 exactly.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    /// Total node count (n+1)^2.
    #[inline]
    pub fn points(&self) -> usize {
        let m = self.n() + 1;
        m * m
    }

    pub fn coarser(&self) -> Result<GridLevel> {
        if self.index < 2 {
            return Err(Error::CoarsestLevel(self.index));
        }
        Ok(GridLevel::new(self.index - 1))
    }

    pub fn finer(&self) -> GridLevel {
        GridLevel::new(self.index + 1)
    }
}

/// A complex field on one grid level. Values are stored row-major with
/// `j` (the Dirichlet direction) as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub level: GridLevel,
    values: Vec<Complex>,
}

impl GridFunction {
    pub fn zeros(level: GridLevel) -> Self {
        GridFunction {
            level,
            values: vec![Complex::ZERO; level.points()],
        }
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.level.n() + 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex {
        self.values[j * self.stride() + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex) {
        let s = self.stride();
        self.values[j * s + i] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex] {
        &mut self.values
    }

    pub fn fill_zero(&mut self) {
        self.values.fill(Complex::ZERO);
    }

    /// Zero out the Dirichlet rows j = 0 and j = n.
    pub fn clamp_dirichlet(&mut self) {
        let s = self.stride();
        let n = self.level.n();
        self.values[0..s].fill(Complex::ZERO);
        self.values[n * s..].fill(Complex::ZERO);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    fn check_level(&self, other: &GridFunction) -> Result<()> {
        if self.level != other.level {
            return Err(Error::LevelMismatch(self.level.index, other.level.index));
        }
        Ok(())
    }

    /// a + alpha * b, elementwise.
    pub fn axpy(&self, b: &GridFunction, alpha: Complex) -> Result<GridFunction> {
        self.check_level(b)?;
        let mut out = self.clone();
        out.axpy_inplace(b, alpha);
        Ok(out)
    }

    /// self += alpha * b. Levels must already agree.
    pub fn axpy_inplace(&mut self, b: &GridFunction, alpha: Complex) {
        debug_assert_eq!(self.level, b.level);
        for (x, y) in self.values.iter_mut().zip(b.values.iter()) {
            *x += alpha * y;
        }
    }

    pub fn scale_inplace(&mut self, alpha: Complex) {
        for x in self.values.iter_mut() {
            *x *= alpha;
        }
    }

    /// Conjugated inner product sum conj(a_i) * b_i, accumulated in a
    /// fixed (row-major) order.
    pub fn dot(&self, b: &GridFunction) -> Result<Complex> {
        self.check_level(b)?;
        let mut acc = Complex::ZERO;
        for (x, y) in self.values.iter().zip(b.values.iter()) {
            acc += x.conj() * y;
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for x in &self.values {
            acc += x.norm_sqr();
        }
        acc.sqrt()
    }
}

/// Boundary treatment in the x-direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum XBoundary {
    /// Radiation condition d_n u - i k u = 0, discretized by second-order
    /// ghost-point elimination with the (real) wavenumber k.
    Robin { k: f64 },
    /// Identity rows pinned to zero, like the y-direction.
    Dirichlet,
}

/// Variable-coefficient complex 5-point operator with boundary-modified
/// rows. All coefficients carry the 1/h^2 factor already.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilOperator {
    pub level: GridLevel,
    /// Interior center coefficient (4 - kappa^2) / h^2.
    pub center: Complex,
    /// Off-diagonal coefficient -1 / h^2 (real-valued by construction).
    pub offdiag: f64,
    /// Center coefficient of the Robin-eliminated rows at i = 0 and i = n.
    pub robin_center: Complex,
    /// Inward coefficient -2 / h^2 of the Robin rows.
    pub robin_inner: f64,
    pub x_boundary: XBoundary,
}

impl StencilOperator {
    /// Helmholtz-type operator -lap - kappa^2 with kappa^2 = (k h)^2 * (1 + shift * i).
    /// `shift = 0` yields the system operator A; `shift = beta` the
    /// complex-shifted preconditioning operator M.
    pub fn helmholtz(level: GridLevel, k: f64, shift: f64) -> Self {
        let h = level.h();
        let inv_h2 = 1.0 / (h * h);
        let kappa_sq = Complex::new((k * h) * (k * h), shift * (k * h) * (k * h));
        let center = (Complex::new(4.0, 0.0) - kappa_sq) * inv_h2;
        let robin_center = center - Complex::new(0.0, 2.0 * k * h * inv_h2);
        StencilOperator {
            level,
            center,
            offdiag: -inv_h2,
            robin_center,
            robin_inner: -2.0 * inv_h2,
            x_boundary: XBoundary::Robin { k },
        }
    }

    /// Plain Laplacian with Dirichlet rows on all four sides.
    pub fn laplace_dirichlet(level: GridLevel) -> Self {
        let inv_h2 = 1.0 / (level.h() * level.h());
        StencilOperator {
            level,
            center: Complex::new(4.0 * inv_h2, 0.0),
            offdiag: -inv_h2,
            robin_center: Complex::ONE,
            robin_inner: 0.0,
            x_boundary: XBoundary::Dirichlet,
        }
    }

    /// True when the row at (i, j) is a pinned identity row.
    #[inline]
    pub fn is_pinned(&self, i: usize, j: usize) -> bool {
        let n = self.level.n();
        if j == 0 || j == n {
            return true;
        }
        match self.x_boundary {
            XBoundary::Robin { .. } => false,
            XBoundary::Dirichlet => i == 0 || i == n,
        }
    }

    /// Diagonal entry of the row at (i, j).
    #[inline]
    pub fn diagonal(&self, i: usize, j: usize) -> Complex {
        if self.is_pinned(i, j) {
            return Complex::ONE;
        }
        let n = self.level.n();
        if i == 0 || i == n {
            self.robin_center
        } else {
            self.center
        }
    }

    /// Off-diagonal coupling from row (i, j) to column (ii, jj); zero
    /// unless the two nodes are stencil neighbors.
    pub fn coupling(&self, i: usize, j: usize, ii: usize, jj: usize) -> Complex {
        if self.is_pinned(i, j) {
            return Complex::ZERO;
        }
        let n = self.level.n();
        let di = ii as isize - i as isize;
        let dj = jj as isize - j as isize;
        match (di, dj) {
            (0, 0) => self.diagonal(i, j),
            (0, 1) | (0, -1) => Complex::new(self.offdiag, 0.0),
            (1, 0) if i == 0 => Complex::new(self.robin_inner, 0.0),
            (-1, 0) if i == n => Complex::new(self.robin_inner, 0.0),
            (1, 0) | (-1, 0) => Complex::new(self.offdiag, 0.0),
            _ => Complex::ZERO,
        }
    }

    /// v = op * u into a preallocated output field.
    pub fn apply_into(&self, u: &GridFunction, out: &mut GridFunction) {
        debug_assert_eq!(self.level, u.level);
        debug_assert_eq!(self.level, out.level);
        let n = self.level.n();
        let s = n + 1;
        let uv = u.as_slice();
        let ov = out.as_mut_slice();
        // Dirichlet identity rows.
        ov[0..s].copy_from_slice(&uv[0..s]);
        ov[n * s..].copy_from_slice(&uv[n * s..]);
        let c = self.center;
        let od = self.offdiag;
        for j in 1..n {
            let row = j * s;
            let (south, rest) = uv.split_at(row);
            let south = &south[row - s..];
            let (cur, north) = rest.split_at(s);
            match self.x_boundary {
                XBoundary::Robin { .. } => {
                    ov[row] = self.robin_center * cur[0]
                        + self.robin_inner * cur[1]
                        + od * (south[0] + north[0]);
                    ov[row + n] = self.robin_center * cur[n]
                        + self.robin_inner * cur[n - 1]
                        + od * (south[n] + north[n]);
                }
                XBoundary::Dirichlet => {
                    ov[row] = cur[0];
                    ov[row + n] = cur[n];
                }
            }
            for i in 1..n {
                ov[row + i] =
                    c * cur[i] + od * (cur[i - 1] + cur[i + 1] + south[i] + north[i]);
            }
        }
    }

    /// v = op * u.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if self.level != u.level {
            return Err(Error::LevelMismatch(self.level.index, u.level.index));
        }
        let mut out = GridFunction::zeros(self.level);
        self.apply_into(u, &mut out);
        Ok(out)
    }

    /// r = rhs - op * u into a preallocated output field.
    pub fn residual_into(&self, rhs: &GridFunction, u: &GridFunction, out: &mut GridFunction) {
        debug_assert_eq!(self.level, u.level);
        let n = self.level.n();
        let s = n + 1;
        let uv = u.as_slice();
        let fv = rhs.as_slice();
        let ov = out.as_mut_slice();
        for idx in 0..s {
            ov[idx] = fv[idx] - uv[idx];
        }
        for idx in n * s..(n + 1) * s {
            ov[idx] = fv[idx] - uv[idx];
        }
        let c = self.center;
        let od = self.offdiag;
        for j in 1..n {
            let row = j * s;
            let (south, rest) = uv.split_at(row);
            let south = &south[row - s..];
            let (cur, north) = rest.split_at(s);
            match self.x_boundary {
                XBoundary::Robin { .. } => {
                    ov[row] = fv[row]
                        - (self.robin_center * cur[0]
                            + self.robin_inner * cur[1]
                            + od * (south[0] + north[0]));
                    ov[row + n] = fv[row + n]
                        - (self.robin_center * cur[n]
                            + self.robin_inner * cur[n - 1]
                            + od * (south[n] + north[n]));
                }
                XBoundary::Dirichlet => {
                    ov[row] = fv[row] - cur[0];
                    ov[row + n] = fv[row + n] - cur[n];
                }
            }
            for i in 1..n {
                ov[row + i] = fv[row + i]
                    - (c * cur[i] + od * (cur[i - 1] + cur[i + 1] + south[i] + north[i]));
            }
        }
    }
}

/// Apply a stencil operator to a grid function (spec-level entry point).
pub fn apply_operator(op: &StencilOperator, u: &GridFunction) -> Result<GridFunction> {
    op.apply(u)
}

/// Full-weighting restriction onto the next coarser level.
///
/// Interior coarse nodes use the 3x3 weights {1,2,1; 2,4,2; 1,2,1}/16
/// around the coincident fine node. At the x-boundaries the out-of-domain
/// weights are clipped, which makes the assembled matrix exactly
/// (1/4) P^T for the bilinear prolongation P. Dirichlet rows stay zero.
pub fn restrict_full_weighting(fine: &GridFunction) -> Result<GridFunction> {
    let coarse_level = fine.level.coarser()?;
    let nc = coarse_level.n();
    let nf = fine.level.n();
    let mut coarse = GridFunction::zeros(coarse_level);
    let wx = [0.25, 0.5, 0.25];
    for jc in 1..nc {
        let jf = 2 * jc;
        for ic in 0..=nc {
            let icf = 2 * ic;
            let mut acc = Complex::ZERO;
            for (dy, wy) in (-1isize..=1).zip(wx) {
                let jj = (jf as isize + dy) as usize;
                for (dx, wxx) in (-1isize..=1).zip(wx) {
                    let iif = icf as isize + dx;
                    if iif < 0 || iif > nf as isize {
                        continue;
                    }
                    acc += (wxx * wy) * fine.get(iif as usize, jj);
                }
            }
            coarse.set(ic, jc, acc);
        }
    }
    Ok(coarse)
}

/// Bilinear interpolation onto the next finer level.
///
/// Coincident nodes copy, edge midpoints average two coarse neighbors,
/// cell centers average four. Coarse Dirichlet entries are read as zero
/// and fine Dirichlet rows stay zero.
pub fn prolongate_bilinear(coarse: &GridFunction, fine_level: GridLevel) -> Result<GridFunction> {
    if fine_level.index != coarse.level.index + 1 {
        return Err(Error::LevelRelation(coarse.level.index, fine_level.index));
    }
    let mut fine = GridFunction::zeros(fine_level);
    prolongate_bilinear_into(coarse, &mut fine);
    Ok(fine)
}

pub(crate) fn prolongate_bilinear_into(coarse: &GridFunction, fine: &mut GridFunction) {
    let nf = fine.level.n();
    let nc = coarse.level.n();
    debug_assert_eq!(nc * 2, nf);
    let read = |i: usize, j: usize| -> Complex {
        if j == 0 || j == nc {
            Complex::ZERO
        } else {
            coarse.get(i, j)
        }
    };
    for jf in 1..nf {
        for iff in 0..=nf {
            let v = match (iff % 2, jf % 2) {
                (0, 0) => read(iff / 2, jf / 2),
                (1, 0) => 0.5 * (read(iff / 2, jf / 2) + read(iff / 2 + 1, jf / 2)),
                (0, 1) => 0.5 * (read(iff / 2, jf / 2) + read(iff / 2, jf / 2 + 1)),
                _ => {
                    0.25 * (read(iff / 2, jf / 2)
                        + read(iff / 2 + 1, jf / 2)
                        + read(iff / 2, jf / 2 + 1)
                        + read(iff / 2 + 1, jf / 2 + 1))
                }
            };
            fine.set(iff, jf, v);
        }
    }
}
