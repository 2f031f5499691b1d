//! Construction of the Helmholtz test problem: operator hierarchy,
//! shifted-Laplacian preconditioning hierarchy and right-hand side,
//! parameterized by the wavenumber.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridLevel, StencilOperator};

/// Resolution rule h * k = 0.625 on the finest level.
pub const HK: f64 = 0.625;

/// One concrete Helmholtz problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    /// Wavenumber of the system operator.
    pub k: f64,
    /// Imaginary shift factor beta of the preconditioning operator:
    /// zeroth-order term k^2 + beta * i * k^2.
    pub shift_factor: f64,
    /// Finest level exponent; the finest grid has 2^l_max + 1 points per dimension.
    pub l_max: u32,
    /// Number of levels in the hierarchy.
    pub depth: usize,
    /// Required relative residual reduction.
    pub target_reduction: f64,
}

impl ProblemInstance {
    /// Instance with custom depth/levels; used for reduced test hierarchies.
    pub fn custom(k: f64, shift_factor: f64, l_max: u32, depth: usize) -> Self {
        ProblemInstance {
            k,
            shift_factor,
            l_max,
            depth,
            target_reduction: if k <= 160.0 { 1e-7 } else { 1e-6 },
        }
    }

    pub fn finest(&self) -> GridLevel {
        GridLevel::new(self.l_max)
    }

    pub fn coarsest(&self) -> GridLevel {
        GridLevel::new(self.l_max + 1 - self.depth as u32)
    }

    /// Level descriptors ordered finest to coarsest.
    pub fn levels(&self) -> Vec<GridLevel> {
        (0..self.depth)
            .map(|d| GridLevel::new(self.l_max - d as u32))
            .collect()
    }
}

/// Per-level operators: the system operator A on the finest level and the
/// complex-shifted preconditioning operator M on every level.
#[derive(Debug, Clone)]
pub struct OperatorHierarchy {
    pub levels: Vec<GridLevel>,
    /// System operator (shift 0), finest level only.
    pub a_fine: StencilOperator,
    /// Preconditioning operators, finest to coarsest, rediscretized with
    /// the level's own mesh width.
    pub m_ops: Vec<StencilOperator>,
}

impl OperatorHierarchy {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

/// Build the standard 5-level instance for a wavenumber on the
/// h k = 0.625 ladder (k = 0.625 * 2^m, m >= 7).
pub fn build_instance(k: f64) -> Result<ProblemInstance> {
    let ratio = k / HK;
    let m = ratio.log2().round() as i64;
    if m < 7 || (HK * (1u64 << m.max(0)) as f64 - k).abs() > 1e-9 * k.abs() {
        return Err(Error::InvalidWavenumber(format!(
            "k = {k} is not on the admissible ladder k = 0.625 * 2^m with m >= 7 \
             (nearest: {})",
            HK * 2f64.powi(m.max(0) as i32)
        )));
    }
    Ok(ProblemInstance::custom(k, 0.5, m as u32, 5))
}

/// The next harder instance: doubled wavenumber, one level finer, same depth.
pub fn next_difficulty(p: &ProblemInstance) -> ProblemInstance {
    let k = 2.0 * p.k;
    ProblemInstance {
        k,
        shift_factor: p.shift_factor,
        l_max: p.l_max + 1,
        depth: p.depth,
        target_reduction: if k <= 160.0 { 1e-7 } else { 1e-6 },
    }
}

/// Discrete point source at the node nearest (0.5, 0.5), scaled by 1/h^2.
pub fn build_rhs(p: &ProblemInstance) -> GridFunction {
    let level = p.finest();
    let n = level.n();
    let h = level.h();
    let mut f = GridFunction::zeros(level);
    f.set(n / 2, n / 2, Complex64::new(1.0 / (h * h), 0.0));
    f
}

/// Assemble A (finest) and the M hierarchy (all levels).
pub fn build_hierarchy(p: &ProblemInstance) -> OperatorHierarchy {
    let levels = p.levels();
    let a_fine = StencilOperator::helmholtz(levels[0], p.k, 0.0);
    let m_ops = levels
        .iter()
        .map(|&lvl| StencilOperator::helmholtz(lvl, p.k, p.shift_factor))
        .collect();
    OperatorHierarchy {
        levels,
        a_fine,
        m_ops,
    }
}

/// All-Dirichlet Laplace hierarchy on the same level layout; used by the
/// mesh-independence checks.
pub fn build_laplace_hierarchy(p: &ProblemInstance) -> OperatorHierarchy {
    let levels = p.levels();
    let a_fine = StencilOperator::laplace_dirichlet(levels[0]);
    let m_ops = levels
        .iter()
        .map(|&lvl| StencilOperator::laplace_dirichlet(lvl))
        .collect();
    OperatorHierarchy {
        levels,
        a_fine,
        m_ops,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_ladder() {
        let p = build_instance(80.0).unwrap();
        assert_eq!(p.l_max, 7);
        assert_eq!(p.finest().n() + 1, 129);
        assert_eq!(p.target_reduction, 1e-7);
        assert_eq!(p.depth, 5);
        assert_eq!(p.coarsest().index, 3);

        let p = build_instance(160.0).unwrap();
        assert_eq!(p.l_max, 8);
        assert_eq!(p.target_reduction, 1e-7);

        let p = build_instance(640.0).unwrap();
        assert_eq!(p.l_max, 10);
        assert_eq!(p.target_reduction, 1e-6);

        assert!(build_instance(100.0).is_err());
        assert!(build_instance(40.0).is_err()); // m = 6 < 7
    }

    #[test]
    fn difficulty_doubling() {
        let p = build_instance(80.0).unwrap();
        let q = next_difficulty(&p);
        assert_eq!(q.k, 160.0);
        assert_eq!(q.l_max, 8);
        assert_eq!(q.depth, 5);
        let r = next_difficulty(&q);
        assert_eq!(r.k, 320.0);
        // Node count grows by a factor approaching 4.
        let ratio = q.finest().points() as f64 / p.finest().points() as f64;
        assert!((ratio - 4.0).abs() < 0.1);
        // Doubling commutes with building the instance directly.
        assert_eq!(q, build_instance(160.0).unwrap());
    }

    #[test]
    fn rhs_is_normalized_point_source() {
        let p = build_instance(80.0).unwrap();
        let f = build_rhs(&p);
        let h = p.finest().h();
        let total: f64 = f.as_slice().iter().map(|c| c.norm()).sum::<f64>() * h * h;
        assert!((total - 1.0).abs() < 1e-12);
        let nonzero = f.as_slice().iter().filter(|c| c.norm() > 0.0).count();
        assert_eq!(nonzero, 1);
        // Brute-force scan for the node nearest (0.5, 0.5).
        let n = p.finest().n();
        let mut best = (0usize, 0usize, f64::INFINITY);
        for j in 0..=n {
            for i in 0..=n {
                let d = (i as f64 * h - 0.5).hypot(j as f64 * h - 0.5);
                if d < best.2 {
                    best = (i, j, d);
                }
            }
        }
        assert_eq!((best.0, best.1), (64, 64));
        assert_eq!(f.get(64, 64), Complex64::new(128.0 * 128.0, 0.0));
    }

    #[test]
    fn hierarchy_shapes_and_shifts() {
        let p = build_instance(80.0).unwrap();
        let h = build_hierarchy(&p);
        assert_eq!(h.depth(), 5);
        assert_eq!(h.levels[0].n(), 128);
        assert_eq!(h.levels[4].n(), 8);
        // Coarsest kappa = k * h_coarse = 0.625 * 16 = 10.
        let kappa = p.k * h.levels[4].h();
        assert!((kappa - 10.0).abs() < 1e-12);

        // Finest M center coefficient = (4 - 0.625^2 (1 + 0.5 i)) / h^2.
        let hf = h.levels[0].h();
        let want = (Complex64::new(4.0 - 0.625 * 0.625, -0.5 * 0.625 * 0.625)) / (hf * hf);
        assert!((h.m_ops[0].center - want).norm() < 1e-9 * want.norm());

        // A equals M with shift 0.
        let a_like = StencilOperator::helmholtz(h.levels[0], p.k, 0.0);
        assert_eq!(h.a_fine, a_like);
        assert!(h.a_fine.center.im.abs() < 1e-12);
        // Im part of every M center is negative (shift convention -beta k^2 h^2 ... scaled).
        for m in &h.m_ops {
            assert!(m.center.im != 0.0);
        }
    }
}
