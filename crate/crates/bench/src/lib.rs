//! Criterion benchmarks for the hot multigrid kernels (stencil
//! application, full-weighting restriction, red-black smoothing and a
//! complete V-cycle application on the 257x257 grid). The crate contains
//! no library code; see `benches/kernels.rs`.
