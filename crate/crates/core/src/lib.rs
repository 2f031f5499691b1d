//! Evolutionary design of multigrid preconditioners for the 2D indefinite
//! Helmholtz equation.
//!
//! The crate is organized bottom-up:
//! - [`grid`]: complex grid functions, stencil operators, inter-grid transfers;
//! - [`problem`]: Helmholtz instances on the h*k = 0.625 ladder and their
//!   operator hierarchies;
//! - [`grammar`]: the preconditioner grammar, derivation trees and the
//!   variation operators (grow, mutate, crossover, translate);
//! - [`semantics`]: compilation of genotypes into flat multigrid programs
//!   plus reference V/W/F cycles and the work-unit cost model;
//! - [`numerics`]: program execution, smoothers and the preconditioned
//!   BiCGSTAB driver;
//! - [`evolution`]: NSGA-II search with successive difficulty adaptation.

pub mod error;
pub mod evolution;
pub mod grammar;
pub mod numerics;
pub mod grid;
pub mod problem;
pub mod semantics;

pub use error::{Error, Result};
pub use evolution::{
    assign_rank_crowding, crowding_distance, environmental_select, final_evaluation,
    non_dominated_sort, run_search, tournament_select, BenchmarkTable, Fitness, Individual,
    SearchConfig, SearchOutcome,
};
pub use grammar::{
    crossover, grow, make_grammar, mutate, reference_vcycle, translate, ComponentMenu,
    DerivationTree, Grammar, GrowLimits, Partitioning, Splitting, Symbol, TreeNode,
};
pub use grid::{
    apply_operator, prolongate_bilinear, restrict_full_weighting, Complex, GridFunction,
    GridLevel, StencilOperator, XBoundary,
};
pub use numerics::{
    bicgstab, coarse_solve, execute_program, smooth_sweep, solve_instance, solve_instance_timed,
    DenseSystem, ExecutionState, HelmholtzSystem, IterationOutcome, LinearSystem, SolveOptions,
    SolveReport,
};
pub use problem::{
    build_hierarchy, build_instance, build_laplace_hierarchy, build_rhs, next_difficulty,
    OperatorHierarchy, ProblemInstance, HK,
};
pub use semantics::{
    build_reference_cycle, evaluate_semantics, program_cost, CycleType, Instr, MultigridProgram,
};
