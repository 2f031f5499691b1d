//! Semantic evaluation of derivation trees: each genotype compiles
//! bottom-up into a flat instruction sequence (one preconditioner
//! application), plus hand-built reference cycles and the work-unit cost
//! model.
//!
//! Register model: every level `l` owns a solution register `u_l`, a
//! right-hand-side register `uhat_l` and a residual register `r_l`. The
//! finest right-hand side `uhat_0` is the preconditioner input; the
//! program leaves its output in `u_0`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{
    DerivationTree, Grammar, Partitioning, Splitting, Symbol, TreeNode, PROD_CGC, PROD_COCY,
    PROD_INITIAL, PROD_RESIDUAL, PROD_SMOOTH,
};
use crate::grid::GridLevel;

/// One primitive operation of a multigrid program. Levels are relative to
/// the finest grid (0 = finest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instr {
    /// u_l = 0.
    SetZero { level: usize },
    /// r_l = uhat_l - M_l u_l.
    Residual { level: usize },
    /// One damped (block-)Jacobi sweep: u_l += omega * B^-1 r_l, with an
    /// exact residual refresh between partitions.
    Smooth {
        level: usize,
        splitting: Splitting,
        partitioning: Partitioning,
        omega: f64,
    },
    /// uhat_{l+1} = R r_l (full weighting).
    Restrict { fine_level: usize },
    /// u_cst = M_cst^-1 uhat_cst on the coarsest level.
    CoarseSolve,
    /// u_l += omega * P u_{l+1}.
    ProlongCorrect { level: usize, omega: f64 },
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::SetZero { level } => write!(f, "zero      u[{level}]"),
            Instr::Residual { level } => write!(f, "residual  r[{level}]"),
            Instr::Smooth {
                level,
                splitting,
                partitioning,
                omega,
            } => {
                let s = match splitting {
                    Splitting::Pointwise => "point".to_string(),
                    Splitting::Block { a, b } => format!("block{a}x{b}"),
                };
                let p = match partitioning {
                    Partitioning::None => "lex",
                    Partitioning::RedBlack => "rb",
                };
                write!(f, "smooth    u[{level}] {s}/{p} w={omega:.2}")
            }
            Instr::Restrict { fine_level } => {
                write!(f, "restrict  r[{fine_level}] -> f[{}]", fine_level + 1)
            }
            Instr::CoarseSolve => write!(f, "csolve"),
            Instr::ProlongCorrect { level, omega } => {
                write!(f, "correct   u[{level}] += {omega:.2} * P u[{}]", level + 1)
            }
        }
    }
}

/// A compiled preconditioner: the instruction sequence of one application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultigridProgram {
    pub depth: usize,
    pub instrs: Vec<Instr>,
}

impl fmt::Display for MultigridProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ins) in self.instrs.iter().enumerate() {
            writeln!(f, "{i:3}  {ins}")?;
        }
        Ok(())
    }
}

impl MultigridProgram {
    /// Register-state simulation: checks level bounds and that every
    /// instruction only reads registers that are defined and fresh, and
    /// that the program terminates with a defined finest solution.
    pub fn validate(&self) -> Result<()> {
        let d = self.depth;
        let bad = |msg: String| Err(Error::InvalidTree(msg));
        let mut u = vec![false; d];
        let mut uhat = vec![false; d];
        let mut r = vec![false; d];
        uhat[0] = true; // preconditioner input
        for (idx, ins) in self.instrs.iter().enumerate() {
            match *ins {
                Instr::SetZero { level } => {
                    if level >= d {
                        return bad(format!("instr {idx}: level {level} out of range"));
                    }
                    u[level] = true;
                    r[level] = false;
                }
                Instr::Residual { level } => {
                    if level >= d || !u[level] || !uhat[level] {
                        return bad(format!("instr {idx}: residual needs u and uhat at {level}"));
                    }
                    r[level] = true;
                }
                Instr::Smooth { level, .. } => {
                    if level >= d - 1 {
                        return bad(format!("instr {idx}: smoothing on level {level}"));
                    }
                    if !u[level] || !r[level] {
                        return bad(format!("instr {idx}: smooth needs fresh r at {level}"));
                    }
                    r[level] = false; // residual now stale
                }
                Instr::Restrict { fine_level } => {
                    if fine_level + 1 >= d || !r[fine_level] {
                        return bad(format!(
                            "instr {idx}: restrict needs fresh r at {fine_level}"
                        ));
                    }
                    uhat[fine_level + 1] = true;
                    u[fine_level + 1] = false;
                    r[fine_level + 1] = false;
                }
                Instr::CoarseSolve => {
                    if !uhat[d - 1] {
                        return bad(format!("instr {idx}: coarse solve without rhs"));
                    }
                    u[d - 1] = true;
                }
                Instr::ProlongCorrect { level, .. } => {
                    if level + 1 >= d || !u[level] || !u[level + 1] {
                        return bad(format!(
                            "instr {idx}: correction needs u at {level} and {}",
                            level + 1
                        ));
                    }
                    r[level] = false;
                    u[level + 1] = false;
                    uhat[level + 1] = false;
                }
            }
        }
        if self.instrs.is_empty() || !u[0] {
            return bad("program leaves no finest-level solution".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serialization cannot fail")
    }
}

/// Compile a derivation tree into its multigrid program (bottom-up over
/// the chain: the innermost node is the first operation).
pub fn evaluate_semantics(t: &DerivationTree, g: &Grammar) -> Result<MultigridProgram> {
    t.validate(g)?;
    let mut instrs = Vec::new();
    compile(&t.root, g, &mut instrs)?;
    let prog = MultigridProgram {
        depth: g.depth,
        instrs,
    };
    prog.validate()?;
    Ok(prog)
}

fn compile(node: &TreeNode, g: &Grammar, out: &mut Vec<Instr>) -> Result<()> {
    let coarsest = (g.depth - 1) as u8;
    match node.symbol {
        Symbol::Start => compile(&node.children[0], g, out),
        Symbol::Smoothing(l) => match node.production {
            PROD_INITIAL => {
                out.push(Instr::SetZero { level: 0 });
                Ok(())
            }
            PROD_SMOOTH => {
                let omega = g.menu.omegas[node.children[0].production];
                let partitioning = g.menu.partitionings[node.children[1].production];
                let splitting = g.menu.splittings[node.children[2].production];
                compile(&node.children[3], g, out)?;
                out.push(Instr::Smooth {
                    level: l as usize,
                    splitting,
                    partitioning,
                    omega,
                });
                Ok(())
            }
            PROD_CGC => {
                let omega = g.menu.omegas[node.children[0].production];
                compile(&node.children[1], g, out)?;
                out.push(Instr::ProlongCorrect {
                    level: l as usize,
                    omega,
                });
                Ok(())
            }
            other => Err(Error::InvalidTree(format!(
                "unknown smoothing production {other}"
            ))),
        },
        Symbol::Correction(l) if l == coarsest => {
            compile(&node.children[0], g, out)?;
            out.push(Instr::Restrict {
                fine_level: l as usize - 1,
            });
            out.push(Instr::CoarseSolve);
            Ok(())
        }
        Symbol::Correction(l) => match node.production {
            PROD_RESIDUAL => {
                compile(&node.children[0], g, out)?;
                out.push(Instr::Residual { level: l as usize });
                Ok(())
            }
            PROD_COCY => {
                compile(&node.children[0], g, out)?;
                out.push(Instr::Restrict {
                    fine_level: l as usize - 1,
                });
                out.push(Instr::SetZero { level: l as usize });
                out.push(Instr::Residual { level: l as usize });
                Ok(())
            }
            other => Err(Error::InvalidTree(format!(
                "unknown correction production {other}"
            ))),
        },
        other => Err(Error::InvalidTree(format!(
            "cannot compile choice symbol {other:?}"
        ))),
    }
}

/// Classical cycle shapes used as references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleType {
    V,
    W,
    F,
}

impl fmt::Display for CycleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CycleType::V => write!(f, "V"),
            CycleType::W => write!(f, "W"),
            CycleType::F => write!(f, "F"),
        }
    }
}

/// Build one application of a classical V/W/F(nu1, nu2) cycle with
/// red-black Gauss-Seidel smoothing at relaxation `omega` and unit-damped
/// coarse-grid corrections.
pub fn build_reference_cycle(
    cycle: CycleType,
    nu1: usize,
    nu2: usize,
    omega: f64,
    depth: usize,
) -> MultigridProgram {
    let mut instrs = vec![Instr::SetZero { level: 0 }];
    emit_cycle(cycle, 0, false, nu1, nu2, omega, depth, &mut instrs);
    let prog = MultigridProgram { depth, instrs };
    debug_assert!(prog.validate().is_ok());
    prog
}

#[allow(clippy::too_many_arguments)]
fn emit_cycle(
    cycle: CycleType,
    level: usize,
    r_fresh: bool,
    nu1: usize,
    nu2: usize,
    omega: f64,
    depth: usize,
    out: &mut Vec<Instr>,
) {
    let smooth = |out: &mut Vec<Instr>| {
        out.push(Instr::Smooth {
            level,
            splitting: Splitting::Pointwise,
            partitioning: Partitioning::RedBlack,
            omega,
        });
    };
    let mut fresh = r_fresh;
    for _ in 0..nu1 {
        if !fresh {
            out.push(Instr::Residual { level });
        }
        smooth(out);
        fresh = false;
    }
    if !fresh {
        out.push(Instr::Residual { level });
    }
    out.push(Instr::Restrict { fine_level: level });
    if level + 1 == depth - 1 {
        out.push(Instr::CoarseSolve);
    } else {
        out.push(Instr::SetZero { level: level + 1 });
        out.push(Instr::Residual { level: level + 1 });
        let recursions: &[CycleType] = match cycle {
            CycleType::V => &[CycleType::V],
            CycleType::W => &[CycleType::W, CycleType::W],
            CycleType::F => &[CycleType::F, CycleType::V],
        };
        for (i, sub) in recursions.iter().enumerate() {
            emit_cycle(*sub, level + 1, i == 0, nu1, nu2, omega, depth, out);
        }
    }
    out.push(Instr::ProlongCorrect { level, omega: 1.0 });
    for _ in 0..nu2 {
        out.push(Instr::Residual { level });
        smooth(out);
    }
}

/// Relative weight of the coarsest-level direct solve, in residual
/// evaluations per coarsest-grid point.
pub const COARSE_SOLVE_WEIGHT: f64 = 50.0;

/// Work units of one program application: residuals and pointwise sweeps
/// cost 1 per point on their level, a x b block sweeps cost a*b, transfers
/// 0.5 on the finer level, the coarsest solve a fixed multiple of its
/// point count.
pub fn program_cost(prog: &MultigridProgram, levels: &[GridLevel]) -> f64 {
    assert_eq!(levels.len(), prog.depth, "level layout mismatch");
    let pts = |l: usize| levels[l].points() as f64;
    let mut total = 0.0;
    for ins in &prog.instrs {
        total += match *ins {
            Instr::SetZero { .. } => 0.0,
            Instr::Residual { level } => pts(level),
            Instr::Smooth {
                level, splitting, ..
            } => splitting.terms() as f64 * pts(level),
            Instr::Restrict { fine_level } => 0.5 * pts(fine_level),
            Instr::ProlongCorrect { level, .. } => 0.5 * pts(level),
            Instr::CoarseSolve => COARSE_SOLVE_WEIGHT * pts(prog.depth - 1),
        };
    }
    total
}
