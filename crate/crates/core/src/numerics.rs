//! Numerical execution: damped (block-)Jacobi smoothers with optional
//! red-black partitioning, the multigrid program executor, and a
//! right-preconditioned BiCGSTAB driver generic over the linear system
//! representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{Partitioning, Splitting};
use crate::grid::{prolongate_bilinear_into, restrict_full_weighting, Complex, GridFunction,
    StencilOperator};
use crate::problem::{build_hierarchy, build_rhs, OperatorHierarchy, ProblemInstance};
use crate::semantics::{program_cost, Instr, MultigridProgram};

/// Inner-product magnitude below which BiCGSTAB declares a breakdown.
pub const BREAKDOWN_EPS: f64 = 1e-300;
/// Residual growth factor treated as divergence.
pub const GROWTH_LIMIT: f64 = 1e10;
/// Relative tolerance of the coarsest-level solve; tight enough that one
/// preconditioner application is linear to near machine precision.
pub const COARSE_TOL: f64 = 1e-13;
/// Iteration cap of the coarsest-level solve.
pub const COARSE_MAX_ITERS: usize = 400;

/// Stopping controls for the outer Krylov iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Required relative residual reduction.
    pub tol: f64,
    pub max_iters: usize,
    /// Abort as non-convergent when no new best relative residual has
    /// been seen for this many iterations. `None` disables the cutoff.
    pub stagnation_window: Option<usize>,
}

impl SolveOptions {
    /// Settings used while evaluating candidates during the search.
    pub fn search() -> Self {
        SolveOptions {
            tol: 1e-7,
            max_iters: 10_000,
            stagnation_window: Some(500),
        }
    }

    /// Settings used for final benchmarking: generous cap, no cutoff.
    pub fn benchmark() -> Self {
        SolveOptions {
            tol: 1e-7,
            max_iters: 20_000,
            stagnation_window: None,
        }
    }
}

/// Outcome of one Krylov solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub rel_residual: f64,
}

/// A linear system with a (possibly approximate) right preconditioner,
/// abstracted over the vector representation.
pub trait LinearSystem {
    type Vec: Clone;

    /// out = A x.
    fn apply(&mut self, x: &Self::Vec, out: &mut Self::Vec);
    /// out ~= M^-1 r. An `Err(Divergence)` marks the preconditioner as
    /// unusable for this solve.
    fn precondition(&mut self, r: &Self::Vec, out: &mut Self::Vec) -> Result<()>;
    fn zeros(&self) -> Self::Vec;
    fn dot(&self, a: &Self::Vec, b: &Self::Vec) -> Complex;
    fn norm(&self, v: &Self::Vec) -> f64;
    /// y += alpha * x.
    fn axpy(&self, y: &mut Self::Vec, alpha: Complex, x: &Self::Vec);
    fn scale(&self, v: &mut Self::Vec, alpha: Complex);
    fn copy(&self, dst: &mut Self::Vec, src: &Self::Vec);
}

/// Right-preconditioned BiCGSTAB. Iterations are counted per half-step,
/// i.e. per preconditioner application followed by an operator
/// application; one full BiCGSTAB step contributes two iterations. On an
/// inner-product breakdown the iteration restarts once from the current
/// residual before giving up; non-finite values or residual growth beyond
/// [`GROWTH_LIMIT`] abort immediately as non-convergent.
pub fn bicgstab<S: LinearSystem>(
    sys: &mut S,
    b: &S::Vec,
    x: &mut S::Vec,
    opts: &SolveOptions,
) -> Result<IterationOutcome> {
    let one = Complex::ONE;
    let b_norm = sys.norm(b);
    if b_norm == 0.0 {
        sys.scale(x, Complex::ZERO);
        return Ok(IterationOutcome {
            iterations: 0,
            converged: true,
            rel_residual: 0.0,
        });
    }

    let mut r = sys.zeros();
    sys.apply(x, &mut r);
    sys.scale(&mut r, -one);
    sys.axpy(&mut r, one, b);
    let mut r_norm = sys.norm(&r);
    if r_norm / b_norm <= opts.tol {
        return Ok(IterationOutcome {
            iterations: 0,
            converged: true,
            rel_residual: r_norm / b_norm,
        });
    }

    let mut rhat = r.clone();
    let mut p = r.clone();
    let mut rho = sys.dot(&rhat, &r);
    let mut y = sys.zeros();
    let mut q = sys.zeros();
    let mut s = sys.zeros();
    let mut z = sys.zeros();
    let mut t = sys.zeros();

    let mut restarted = false;
    let mut best = r_norm / b_norm;
    let mut best_iter = 0usize;

    let fail = |iterations: usize, rel: f64| {
        Ok(IterationOutcome {
            iterations,
            converged: false,
            rel_residual: rel,
        })
    };

    let mut iters = 0usize;
    while iters < opts.max_iters {
        let mut breakdown = rho.norm() < BREAKDOWN_EPS;
        if !breakdown {
            iters += 1;
            match sys.precondition(&p, &mut y) {
                Ok(()) => {}
                Err(Error::Divergence) => return fail(iters, r_norm / b_norm),
                Err(e) => return Err(e),
            }
            sys.apply(&y, &mut q);
            let rhat_q = sys.dot(&rhat, &q);
            if rhat_q.norm() < BREAKDOWN_EPS {
                breakdown = true;
            } else {
                let alpha = rho / rhat_q;
                // s = r - alpha q
                sys.copy(&mut s, &r);
                sys.axpy(&mut s, -alpha, &q);
                let s_rel = sys.norm(&s) / b_norm;
                if s_rel <= opts.tol {
                    sys.axpy(x, alpha, &y);
                    return Ok(IterationOutcome {
                        iterations: iters,
                        converged: true,
                        rel_residual: s_rel,
                    });
                }
                if iters >= opts.max_iters {
                    return fail(iters, s_rel);
                }
                iters += 1;
                match sys.precondition(&s, &mut z) {
                    Ok(()) => {}
                    Err(Error::Divergence) => return fail(iters, r_norm / b_norm),
                    Err(e) => return Err(e),
                }
                sys.apply(&z, &mut t);
                let tt = sys.dot(&t, &t);
                if tt.norm() < BREAKDOWN_EPS {
                    breakdown = true;
                } else {
                    let omega = sys.dot(&t, &s) / tt;
                    sys.axpy(x, alpha, &y);
                    sys.axpy(x, omega, &z);
                    // r = s - omega t
                    sys.copy(&mut r, &s);
                    sys.axpy(&mut r, -omega, &t);
                    r_norm = sys.norm(&r);
                    let rel = r_norm / b_norm;
                    if !rel.is_finite() || rel > GROWTH_LIMIT {
                        return fail(iters, rel);
                    }
                    if rel <= opts.tol {
                        return Ok(IterationOutcome {
                            iterations: iters,
                            converged: true,
                            rel_residual: rel,
                        });
                    }
                    if rel < best {
                        best = rel;
                        best_iter = iters;
                    }
                    if let Some(window) = opts.stagnation_window {
                        if iters - best_iter >= window {
                            return fail(iters, rel);
                        }
                    }
                    let rho_new = sys.dot(&rhat, &r);
                    let beta = (rho_new / rho) * (alpha / omega);
                    rho = rho_new;
                    // p = r + beta (p - omega q)
                    sys.axpy(&mut p, -omega, &q);
                    sys.scale(&mut p, beta);
                    sys.axpy(&mut p, one, &r);
                    continue;
                }
            }
        }
        if breakdown {
            if restarted {
                return fail(iters, r_norm / b_norm);
            }
            restarted = true;
            sys.copy(&mut rhat, &r);
            sys.copy(&mut p, &r);
            rho = sys.dot(&rhat, &r);
        }
    }
    fail(iters, r_norm / b_norm)
}

/// Dense row-major system; primarily a test vehicle for the Krylov
/// driver against direct solves.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub dim: usize,
    /// Row-major dim x dim operator.
    pub a: Vec<Complex>,
    /// Optional explicit right preconditioner (row-major); identity if absent.
    pub precond: Option<Vec<Complex>>,
}

impl DenseSystem {
    pub fn new(dim: usize, a: Vec<Complex>) -> Self {
        assert_eq!(a.len(), dim * dim);
        DenseSystem {
            dim,
            a,
            precond: None,
        }
    }

    pub fn with_preconditioner(mut self, m: Vec<Complex>) -> Self {
        assert_eq!(m.len(), self.dim * self.dim);
        self.precond = Some(m);
        self
    }

    fn matvec(dim: usize, m: &[Complex], x: &[Complex], out: &mut [Complex]) {
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = Complex::ZERO;
            for (col, xv) in x.iter().enumerate() {
                acc += m[row * dim + col] * xv;
            }
            *o = acc;
        }
    }
}

impl LinearSystem for DenseSystem {
    type Vec = Vec<Complex>;

    fn apply(&mut self, x: &Self::Vec, out: &mut Self::Vec) {
        Self::matvec(self.dim, &self.a, x, out);
    }

    fn precondition(&mut self, r: &Self::Vec, out: &mut Self::Vec) -> Result<()> {
        match &self.precond {
            Some(m) => Self::matvec(self.dim, m, r, out),
            None => out.copy_from_slice(r),
        }
        Ok(())
    }

    fn zeros(&self) -> Self::Vec {
        vec![Complex::ZERO; self.dim]
    }

    fn dot(&self, a: &Self::Vec, b: &Self::Vec) -> Complex {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    fn norm(&self, v: &Self::Vec) -> f64 {
        v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    fn axpy(&self, y: &mut Self::Vec, alpha: Complex, x: &Self::Vec) {
        for (yy, xx) in y.iter_mut().zip(x) {
            *yy += alpha * xx;
        }
    }

    fn scale(&self, v: &mut Self::Vec, alpha: Complex) {
        for x in v.iter_mut() {
            *x *= alpha;
        }
    }

    fn copy(&self, dst: &mut Self::Vec, src: &Self::Vec) {
        dst.copy_from_slice(src);
    }
}

/// Unpreconditioned stencil system used for the coarsest-level solve.
struct StencilSystem<'a> {
    op: &'a StencilOperator,
}

impl LinearSystem for StencilSystem<'_> {
    type Vec = GridFunction;

    fn apply(&mut self, x: &Self::Vec, out: &mut Self::Vec) {
        self.op.apply_into(x, out);
    }

    fn precondition(&mut self, r: &Self::Vec, out: &mut Self::Vec) -> Result<()> {
        self.copy(out, r);
        Ok(())
    }

    fn zeros(&self) -> Self::Vec {
        GridFunction::zeros(self.op.level)
    }

    fn dot(&self, a: &Self::Vec, b: &Self::Vec) -> Complex {
        a.dot(b).expect("level mismatch in stencil system")
    }

    fn norm(&self, v: &Self::Vec) -> f64 {
        v.norm()
    }

    fn axpy(&self, y: &mut Self::Vec, alpha: Complex, x: &Self::Vec) {
        y.axpy_inplace(x, alpha);
    }

    fn scale(&self, v: &mut Self::Vec, alpha: Complex) {
        v.scale_inplace(alpha);
    }

    fn copy(&self, dst: &mut Self::Vec, src: &Self::Vec) {
        dst.as_mut_slice().copy_from_slice(src.as_slice());
    }
}

/// Direct (to near machine precision) solve of op * u = rhs via an
/// unpreconditioned Krylov iteration; intended for the small coarsest level.
pub fn coarse_solve(op: &StencilOperator, rhs: &GridFunction, u: &mut GridFunction) -> Result<()> {
    let mut sys = StencilSystem { op };
    u.fill_zero();
    let opts = SolveOptions {
        tol: COARSE_TOL,
        max_iters: COARSE_MAX_ITERS,
        stagnation_window: None,
    };
    let out = bicgstab(&mut sys, rhs, u, &opts)?;
    if !out.converged {
        return Err(Error::Divergence);
    }
    Ok(())
}

/// Per-level registers of the program executor. Reused across
/// preconditioner applications to avoid reallocation.
#[derive(Debug, Clone)]
pub struct ExecutionState {
    pub u: Vec<GridFunction>,
    pub uhat: Vec<GridFunction>,
    pub r: Vec<GridFunction>,
    scratch: Vec<GridFunction>,
    scratch2: Vec<GridFunction>,
}

impl ExecutionState {
    pub fn new(hier: &OperatorHierarchy) -> Self {
        let alloc = || {
            hier.levels
                .iter()
                .map(|&l| GridFunction::zeros(l))
                .collect::<Vec<_>>()
        };
        ExecutionState {
            u: alloc(),
            uhat: alloc(),
            r: alloc(),
            scratch: alloc(),
            scratch2: alloc(),
        }
    }
}

/// Execute one preconditioner application: `input` is the finest
/// right-hand side, the result is left in `state.u[0]`.
pub fn execute_program(
    prog: &MultigridProgram,
    hier: &OperatorHierarchy,
    input: &GridFunction,
    state: &mut ExecutionState,
) -> Result<()> {
    if prog.depth != hier.depth() {
        return Err(Error::Config(format!(
            "program depth {} does not match hierarchy depth {}",
            prog.depth,
            hier.depth()
        )));
    }
    state.uhat[0]
        .as_mut_slice()
        .copy_from_slice(input.as_slice());
    for ins in &prog.instrs {
        match *ins {
            Instr::SetZero { level } => state.u[level].fill_zero(),
            Instr::Residual { level } => {
                hier.m_ops[level].residual_into(&state.uhat[level], &state.u[level],
                    &mut state.r[level]);
            }
            Instr::Smooth {
                level,
                splitting,
                partitioning,
                omega,
            } => {
                let (pre, post) = state.scratch.split_at_mut(level + 1);
                let _ = post;
                let delta = &mut pre[level];
                smooth_sweep(
                    &hier.m_ops[level],
                    &mut state.u[level],
                    &state.r[level],
                    delta,
                    &mut state.scratch2[level],
                    splitting,
                    partitioning,
                    omega,
                )?;
            }
            Instr::Restrict { fine_level } => {
                let mut coarse = restrict_full_weighting(&state.r[fine_level])?;
                // Coarse nodes pinned by the coarse operator are not
                // unknowns; their restricted values must not re-enter
                // through the identity rows.
                let coarse_op = &hier.m_ops[fine_level + 1];
                let nc = coarse.level.n();
                for j in 0..=nc {
                    for i in 0..=nc {
                        if coarse_op.is_pinned(i, j) {
                            coarse.set(i, j, Complex::ZERO);
                        }
                    }
                }
                state.uhat[fine_level + 1]
                    .as_mut_slice()
                    .copy_from_slice(coarse.as_slice());
            }
            Instr::CoarseSolve => {
                let cst = prog.depth - 1;
                let (uhat, u) = (&state.uhat[cst], &mut state.u[cst]);
                coarse_solve(&hier.m_ops[cst], uhat, u)?;
            }
            Instr::ProlongCorrect { level, omega } => {
                let (fine, coarse) = state.u.split_at_mut(level + 1);
                prolongate_bilinear_into(&coarse[0], &mut state.scratch[level]);
                fine[level].axpy_inplace(&state.scratch[level], Complex::new(omega, 0.0));
            }
        }
    }
    if !state.u[0].is_finite() {
        return Err(Error::Divergence);
    }
    Ok(())
}

/// One damped (block-)Jacobi sweep u += omega * B^-1 r. With red-black
/// partitioning the black phase uses the residual refreshed by the exact
/// effect of the red update.
#[allow(clippy::too_many_arguments)]
pub fn smooth_sweep(
    op: &StencilOperator,
    u: &mut GridFunction,
    r: &GridFunction,
    delta: &mut GridFunction,
    refresh: &mut GridFunction,
    splitting: Splitting,
    partitioning: Partitioning,
    omega: f64,
) -> Result<()> {
    match partitioning {
        Partitioning::None => {
            sweep_phase(op, r, delta, omega, splitting, None)?;
            u.axpy_inplace(delta, Complex::ONE);
        }
        Partitioning::RedBlack => {
            sweep_phase(op, r, delta, omega, splitting, Some(0))?;
            u.axpy_inplace(delta, Complex::ONE);
            // refresh = r - M * delta_red (delta carries omega already)
            op.apply_into(delta, refresh);
            for (x, y) in refresh.as_mut_slice().iter_mut().zip(r.as_slice()) {
                *x = y - *x;
            }
            sweep_phase(op, refresh, delta, omega, splitting, Some(1))?;
            u.axpy_inplace(delta, Complex::ONE);
        }
    }
    Ok(())
}

/// Write omega * B^-1 rhs restricted to one color class into `delta`
/// (zero elsewhere). `color` is `None` for the whole grid, or the parity
/// of `i + j` (pointwise) / of the block index sum (blocks).
fn sweep_phase(
    op: &StencilOperator,
    rhs: &GridFunction,
    delta: &mut GridFunction,
    omega: f64,
    splitting: Splitting,
    color: Option<usize>,
) -> Result<()> {
    delta.fill_zero();
    let n = op.level.n();
    match splitting {
        Splitting::Pointwise => {
            for j in 1..n {
                for i in 0..=n {
                    if op.is_pinned(i, j) {
                        continue;
                    }
                    if let Some(c) = color {
                        if (i + j) % 2 != c {
                            continue;
                        }
                    }
                    let d = op.diagonal(i, j);
                    delta.set(i, j, omega * rhs.get(i, j) / d);
                }
            }
            Ok(())
        }
        Splitting::Block { a, b } => {
            let (a, b) = (a as usize, b as usize);
            let nbi = n / a + 1;
            let nbj = n / b + 1;
            let mut mat = [Complex::ZERO; 36];
            let mut vec = [Complex::ZERO; 6];
            let mut nodes = [(0usize, 0usize); 6];
            for bj in 0..nbj {
                let j0 = bj * b;
                if j0 > n {
                    continue;
                }
                for bi in 0..nbi {
                    let i0 = bi * a;
                    if i0 > n {
                        continue;
                    }
                    if let Some(c) = color {
                        if (bi + bj) % 2 != c {
                            continue;
                        }
                    }
                    let mut m = 0usize;
                    for j in j0..(j0 + b).min(n + 1) {
                        for i in i0..(i0 + a).min(n + 1) {
                            if !op.is_pinned(i, j) {
                                nodes[m] = (i, j);
                                m += 1;
                            }
                        }
                    }
                    if m == 0 {
                        continue;
                    }
                    for p in 0..m {
                        let (ip, jp) = nodes[p];
                        vec[p] = rhs.get(ip, jp);
                        for q in 0..m {
                            let (iq, jq) = nodes[q];
                            mat[p * m + q] = op.coupling(ip, jp, iq, jq);
                        }
                    }
                    solve_small(&mut mat[..m * m], &mut vec[..m], m)?;
                    for p in 0..m {
                        let (ip, jp) = nodes[p];
                        delta.set(ip, jp, omega * vec[p]);
                    }
                }
            }
            Ok(())
        }
    }
}

/// In-place LU solve with partial pivoting for tiny dense systems.
fn solve_small(mat: &mut [Complex], rhs: &mut [Complex], m: usize) -> Result<()> {
    debug_assert_eq!(mat.len(), m * m);
    for col in 0..m {
        let mut pivot = col;
        let mut best = mat[col * m + col].norm_sqr();
        for row in col + 1..m {
            let v = mat[row * m + col].norm_sqr();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-280 {
            return Err(Error::SingularBlock);
        }
        if pivot != col {
            for k in 0..m {
                mat.swap(col * m + k, pivot * m + k);
            }
            rhs.swap(col, pivot);
        }
        let d = mat[col * m + col];
        for row in col + 1..m {
            let f = mat[row * m + col] / d;
            if f == Complex::ZERO {
                continue;
            }
            for k in col + 1..m {
                let v = mat[col * m + k];
                mat[row * m + k] -= f * v;
            }
            let rv = rhs[col];
            rhs[row] -= f * rv;
        }
    }
    for row in (0..m).rev() {
        let mut acc = rhs[row];
        for k in row + 1..m {
            acc -= mat[row * m + k] * rhs[k];
        }
        rhs[row] = acc / mat[row * m + row];
    }
    Ok(())
}

/// The full preconditioned Helmholtz system: the unshifted operator A on
/// the finest grid, preconditioned by one multigrid program application
/// on the shifted hierarchy.
pub struct HelmholtzSystem<'a> {
    hier: &'a OperatorHierarchy,
    prog: &'a MultigridProgram,
    state: ExecutionState,
}

impl<'a> HelmholtzSystem<'a> {
    pub fn new(hier: &'a OperatorHierarchy, prog: &'a MultigridProgram) -> Self {
        let state = ExecutionState::new(hier);
        HelmholtzSystem { hier, prog, state }
    }
}

impl LinearSystem for HelmholtzSystem<'_> {
    type Vec = GridFunction;

    fn apply(&mut self, x: &Self::Vec, out: &mut Self::Vec) {
        self.hier.a_fine.apply_into(x, out);
    }

    fn precondition(&mut self, r: &Self::Vec, out: &mut Self::Vec) -> Result<()> {
        execute_program(self.prog, self.hier, r, &mut self.state)?;
        out.as_mut_slice()
            .copy_from_slice(self.state.u[0].as_slice());
        Ok(())
    }

    fn zeros(&self) -> Self::Vec {
        GridFunction::zeros(self.hier.levels[0])
    }

    fn dot(&self, a: &Self::Vec, b: &Self::Vec) -> Complex {
        a.dot(b).expect("level mismatch in Helmholtz system")
    }

    fn norm(&self, v: &Self::Vec) -> f64 {
        v.norm()
    }

    fn axpy(&self, y: &mut Self::Vec, alpha: Complex, x: &Self::Vec) {
        y.axpy_inplace(x, alpha);
    }

    fn scale(&self, v: &mut Self::Vec, alpha: Complex) {
        v.scale_inplace(alpha);
    }

    fn copy(&self, dst: &mut Self::Vec, src: &Self::Vec) {
        dst.as_mut_slice().copy_from_slice(src.as_slice());
    }
}

/// Result of solving one problem instance with one preconditioner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub k: f64,
    pub l_max: u32,
    pub iterations: usize,
    pub converged: bool,
    pub rel_residual: f64,
    /// Cost of one iteration in work units; equal to the cost of one
    /// preconditioner program application.
    pub work_units_per_iter: f64,
    pub wall_ms_per_iter: Option<f64>,
}

impl SolveReport {
    pub fn csv_header() -> &'static str {
        "k,l_max,iterations,converged,rel_residual,work_units_per_iter,wall_ms_per_iter"
    }

    pub fn csv_row(&self) -> String {
        let wall = self
            .wall_ms_per_iter
            .map(|w| format!("{w:.6}"))
            .unwrap_or_else(|| "-".into());
        format!(
            "{},{},{},{},{:.3e},{:.6},{}",
            self.k,
            self.l_max,
            if self.converged {
                self.iterations.to_string()
            } else {
                "-".into()
            },
            self.converged,
            self.rel_residual,
            self.work_units_per_iter,
            wall
        )
    }
}

/// Solve a problem instance with the given preconditioner program,
/// starting from zero, to the instance's target reduction.
pub fn solve_instance(
    p: &ProblemInstance,
    prog: &MultigridProgram,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if prog.depth != p.depth {
        return Err(Error::Config(format!(
            "program depth {} does not match instance depth {}",
            prog.depth, p.depth
        )));
    }
    prog.validate()?;
    let hier = build_hierarchy(p);
    let b = build_rhs(p);
    let mut sys = HelmholtzSystem::new(&hier, prog);
    let mut x = sys.zeros();
    let inner = SolveOptions {
        tol: p.target_reduction,
        ..*opts
    };
    let out = bicgstab(&mut sys, &b, &mut x, &inner)?;
    Ok(SolveReport {
        k: p.k,
        l_max: p.l_max,
        iterations: out.iterations,
        converged: out.converged,
        rel_residual: out.rel_residual,
        work_units_per_iter: program_cost(prog, &p.levels()),
        wall_ms_per_iter: None,
    })
}

/// Like [`solve_instance`], but additionally measures wall-clock time.
/// The solve is repeated `repeats` times (at least once) and the report
/// carries the fastest observed milliseconds per iteration. Timings are
/// inherently non-reproducible across machines and runs.
pub fn solve_instance_timed(
    p: &ProblemInstance,
    prog: &MultigridProgram,
    opts: &SolveOptions,
    repeats: usize,
) -> Result<SolveReport> {
    let mut report = solve_instance(p, prog, opts)?;
    let mut best_ms = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = std::time::Instant::now();
        let timed = solve_instance(p, prog, opts)?;
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        best_ms = best_ms.min(elapsed_ms / timed.iterations.max(1) as f64);
    }
    report.wall_ms_per_iter = Some(best_ms);
    Ok(report)
}
