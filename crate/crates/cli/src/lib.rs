//! Command implementations behind the `evomg` binary: search runs with
//! artifact/manifest plumbing, reference-cycle benchmarking, genotype
//! evaluation and plot-data export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use evomg_core::evolution::{BenchCell, BenchRow, BenchmarkTable, GenerationSnapshot};
use evomg_core::grammar::{ComponentMenu, DerivationTree, Grammar};
use evomg_core::numerics::{solve_instance, solve_instance_timed, SolveOptions};
use evomg_core::problem::build_instance;
use evomg_core::semantics::{build_reference_cycle, evaluate_semantics, CycleType};
use evomg_core::{run_search, translate, Error, Fitness, Result, SearchConfig};

/// Smoothing patterns (nu1, nu2) of the reference cycle family.
pub const REFERENCE_PATTERNS: [(usize, usize); 5] = [(0, 1), (1, 1), (2, 1), (2, 2), (3, 3)];

/// Experimentally tuned relaxation factors for each reference cycle,
/// in [`REFERENCE_PATTERNS`] order.
pub const REFERENCE_OMEGAS: [(CycleType, [f64; 5]); 3] = [
    (CycleType::V, [1.25, 0.6, 0.6, 0.5, 0.4]),
    (CycleType::F, [1.15, 0.75, 0.55, 0.65, 0.45]),
    (CycleType::W, [0.75, 0.8, 0.6, 0.5, 0.45]),
];

/// Overwrite a file atomically: write a sibling temp file, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Parse a flat `key = value` configuration into a [`SearchConfig`].
/// Blank lines and `#` comments are ignored; unknown keys are rejected
/// with a field-level message. Every key is optional and defaults to the
/// standard search settings.
pub fn parse_config(text: &str) -> Result<SearchConfig> {
    let mut cfg = SearchConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| {
            Error::Config(format!("line {}: {key}: invalid {what} '{value}'", lineno + 1))
        };
        match key {
            "mu" => cfg.mu = value.parse().map_err(|_| bad("integer"))?,
            "lambda" => cfg.lambda = value.parse().map_err(|_| bad("integer"))?,
            "generations" => cfg.generations = value.parse().map_err(|_| bad("integer"))?,
            "difficulty_period" => {
                cfg.difficulty_period = value.parse().map_err(|_| bad("integer"))?
            }
            "init_pool" => cfg.init_pool = value.parse().map_err(|_| bad("integer"))?,
            "p_crossover" => cfg.p_crossover = value.parse().map_err(|_| bad("number"))?,
            "p_terminal" => cfg.p_terminal = value.parse().map_err(|_| bad("number"))?,
            "min_height" => cfg.grow_limits.min_height = value.parse().map_err(|_| bad("integer"))?,
            "max_height" => cfg.grow_limits.max_height = value.parse().map_err(|_| bad("integer"))?,
            "initial_k" => cfg.initial_k = value.parse().map_err(|_| bad("number"))?,
            "max_iters" => cfg.options.max_iters = value.parse().map_err(|_| bad("integer"))?,
            "stagnation_window" => {
                cfg.options.stagnation_window = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("integer or 'none'"))?)
                }
            }
            "master_seed" => cfg.master_seed = value.parse().map_err(|_| bad("integer"))?,
            "workers" => cfg.workers = value.parse().map_err(|_| bad("integer"))?,
            _ => {
                return Err(Error::Config(format!(
                    "line {}: unknown configuration key '{key}'",
                    lineno + 1
                )))
            }
        }
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Relative paths (from the manifest's directory) of a run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub front_csv: String,
    pub snapshots_jsonl: String,
    pub genotype_archive: String,
    pub benchmark_table: Option<String>,
}

/// Record of one `search` invocation; everything needed to re-read and
/// re-evaluate the run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub created_unix: u64,
    pub seed: u64,
    pub workers: usize,
    pub config: SearchConfig,
    /// Wavenumbers visited by the difficulty schedule, in order.
    pub instance_ladder: Vec<f64>,
    pub artifacts: Artifacts,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest {path:?}: {e}")))
    }

    /// Resolve an artifact path relative to the manifest location.
    pub fn resolve(&self, manifest_path: &Path, artifact: &str) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(artifact)
    }
}

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

/// Run the evolutionary search and write front CSV, per-generation
/// snapshots, the genotype archive and a manifest into `out_dir`.
/// Returns the manifest path.
pub fn cmd_search(
    config_path: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: &Path,
) -> Result<PathBuf> {
    let mut cfg = parse_config(&fs::read_to_string(config_path)?)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    fs::create_dir_all(out_dir)?;

    let outcome = run_search(&cfg)?;

    write_atomic(&out_dir.join("front.csv"), &outcome.front_csv())?;
    write_atomic(&out_dir.join("snapshots.jsonl"), &outcome.snapshots_jsonl())?;

    let mut archive = String::new();
    let mut front = outcome.front();
    front.sort_by(|a, b| {
        a.fitness
            .product()
            .partial_cmp(&b.fitness.product())
            .unwrap()
            .then_with(|| a.genotype.to_sexp().cmp(&b.genotype.to_sexp()))
    });
    for ind in front {
        archive.push_str(&ind.genotype.to_sexp());
        archive.push('\n');
    }
    write_atomic(&out_dir.join("genotypes.txt"), &archive)?;

    let mut ladder = Vec::new();
    for snap in &outcome.history {
        if ladder.last() != Some(&snap.k) {
            ladder.push(snap.k);
        }
    }
    let manifest = RunManifest {
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        seed: cfg.master_seed,
        workers: cfg.workers,
        config: cfg,
        instance_ladder: ladder,
        artifacts: Artifacts {
            front_csv: "front.csv".into(),
            snapshots_jsonl: "snapshots.jsonl".into(),
            genotype_archive: "genotypes.txt".into(),
            benchmark_table: None,
        },
    };
    let manifest_path = out_dir.join("manifest.json");
    write_atomic(
        &manifest_path,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&manifest)
                .map_err(|e| Error::Parse(format!("manifest serialization: {e}")))?
        ),
    )?;
    Ok(manifest_path)
}

// ---------------------------------------------------------------------------
// benchmark-reference
// ---------------------------------------------------------------------------

fn solve_cell(
    k: f64,
    tree_depth_prog: &evomg_core::MultigridProgram,
    wall_clock: bool,
    repeats: usize,
) -> Result<BenchCell> {
    let p = build_instance(k)?;
    let opts = SolveOptions::benchmark();
    let report = if wall_clock {
        solve_instance_timed(&p, tree_depth_prog, &opts, repeats)?
    } else {
        solve_instance(&p, tree_depth_prog, &opts)?
    };
    Ok(BenchCell {
        k,
        iterations: report.converged.then_some(report.iterations),
        work_units_per_iter: report.work_units_per_iter,
        wall_ms_per_iter: report.wall_ms_per_iter,
    })
}

/// Find the relaxation factor with the fewest iterations for one cycle
/// shape at wavenumber `k`, scanning `omegas`. Non-convergent factors
/// rank last; ties prefer the smaller factor.
pub fn sweep_relaxation(
    cycle: CycleType,
    nu1: usize,
    nu2: usize,
    k: f64,
    omegas: &[f64],
) -> Result<f64> {
    let p = build_instance(k)?;
    let opts = SolveOptions::benchmark();
    let mut best = (usize::MAX, omegas[0]);
    for &omega in omegas {
        let prog = build_reference_cycle(cycle, nu1, nu2, omega, p.depth);
        let report = solve_instance(&p, &prog, &opts)?;
        let iters = if report.converged {
            report.iterations
        } else {
            usize::MAX
        };
        if iters < best.0 {
            best = (iters, omega);
        }
    }
    Ok(best.1)
}

/// Benchmark the 15 reference cycles (V/F/W with the 5 standard
/// smoothing patterns, red-black Gauss-Seidel) at the given wavenumbers.
/// With `sweep` set the relaxation factor of each cycle is re-tuned at
/// `sweep_k` over the component menu; otherwise the tuned table values
/// are used. Returns the CSV text and writes `reference.csv` to
/// `out_dir` when given.
pub fn cmd_benchmark_reference(
    ks: &[f64],
    sweep: bool,
    sweep_k: f64,
    wall_clock: bool,
    repeats: usize,
    out_dir: Option<&Path>,
) -> Result<String> {
    let menu = ComponentMenu::standard();
    let mut out = String::from("cycle,nu1,nu2,omega");
    for k in ks {
        let _ = write!(out, ",iters_k{k},work_per_iter_k{k},ms_per_iter_k{k}");
    }
    out.push('\n');

    for (cycle, omegas) in REFERENCE_OMEGAS {
        for (pat, &(nu1, nu2)) in REFERENCE_PATTERNS.iter().enumerate() {
            let omega = if sweep {
                sweep_relaxation(cycle, nu1, nu2, sweep_k, &menu.omegas)?
            } else {
                omegas[pat]
            };
            let _ = write!(out, "{cycle},{nu1},{nu2},{omega}");
            for &k in ks {
                let p = build_instance(k)?;
                let prog = build_reference_cycle(cycle, nu1, nu2, omega, p.depth);
                let cell = solve_cell(k, &prog, wall_clock, repeats)?;
                let iters = cell
                    .iterations
                    .map(|i| i.to_string())
                    .unwrap_or_else(|| "-".into());
                let ms = cell
                    .wall_ms_per_iter
                    .map(|m| format!("{m:.4}"))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, ",{iters},{},{ms}", cell.work_units_per_iter);
            }
            out.push('\n');
        }
    }

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("reference.csv"), &out)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Evaluate serialized genotypes (one s-expression per line) at each
/// wavenumber; writes `evaluation.csv` (Table-style report, dashes for
/// non-convergence) and `structures.txt` (compiled program listings) to
/// `out_dir` when given. Returns the table.
pub fn cmd_evaluate(
    genotype_path: &Path,
    ks: &[f64],
    wall_clock: bool,
    repeats: usize,
    out_dir: Option<&Path>,
) -> Result<BenchmarkTable> {
    if ks.is_empty() {
        return Err(Error::Config("at least one wavenumber is required".into()));
    }
    let text = fs::read_to_string(genotype_path)?;
    let mut trees = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tree = DerivationTree::from_sexp(line)
            .map_err(|e| Error::Parse(format!("genotype line {}: {e}", lineno + 1)))?;
        trees.push(tree);
    }
    if trees.is_empty() {
        return Err(Error::Config(format!(
            "no genotypes found in {genotype_path:?}"
        )));
    }

    let menu = ComponentMenu::standard();
    let mut rows = Vec::with_capacity(trees.len());
    let mut structures = String::new();
    for (idx, tree) in trees.iter().enumerate() {
        let mut cells = Vec::with_capacity(ks.len());
        for (kidx, &k) in ks.iter().enumerate() {
            let p = build_instance(k)?;
            let g = Grammar::new(p.depth, menu.clone())?;
            let translated = translate(tree, &g)?;
            let prog = evaluate_semantics(&translated, &g)?;
            if kidx == 0 {
                let _ = writeln!(structures, "# genotype {}\n{prog}", idx + 1);
            }
            cells.push(solve_cell(k, &prog, wall_clock, repeats)?);
        }
        rows.push(BenchRow {
            rank: idx + 1,
            genotype: tree.to_sexp(),
            product: 0.0,
            cells,
        });
    }
    let table = BenchmarkTable {
        ks: ks.to_vec(),
        rows,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("evaluation.csv"), &table.to_csv())?;
        write_atomic(&dir.join("structures.txt"), &structures)?;
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// export-plots
// ---------------------------------------------------------------------------

fn load_snapshots(path: &Path) -> Result<Vec<GenerationSnapshot>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Parse(format!("snapshot {path:?}: {e}")))
        })
        .collect()
}

/// Export plotting data from one or more run manifests:
/// `scatter.csv` holds the combined (mutually non-dominated) final-front
/// objective pairs labeled by run seed; `cost_per_point.csv` holds, per
/// run and visited wavenumber, the best iterations x work product
/// normalized by finest-grid points. Returns the two CSV texts.
pub fn cmd_export_plots(manifest_paths: &[PathBuf], out_dir: &Path) -> Result<(String, String)> {
    let mut scatter_points: Vec<(u64, Fitness)> = Vec::new();
    let mut cost_rows: Vec<(u64, f64, f64)> = Vec::new();

    for mpath in manifest_paths {
        let manifest = RunManifest::load(mpath)?;
        let snap_path = manifest.resolve(mpath, &manifest.artifacts.snapshots_jsonl);
        if !snap_path.is_file() {
            return Err(Error::MissingArtifact(format!("{snap_path:?}")));
        }
        let snaps = load_snapshots(&snap_path)?;

        if let Some(last) = snaps.last() {
            for m in &last.front {
                if m.convergent {
                    scatter_points.push((
                        manifest.seed,
                        Fitness {
                            iterations: m.iterations,
                            cost: m.cost,
                        },
                    ));
                }
            }
        }
        for &k in &manifest.instance_ladder {
            let best = snaps
                .iter()
                .rev()
                .find(|s| s.k == k)
                .map(|s| {
                    s.front
                        .iter()
                        .filter(|m| m.convergent)
                        .map(|m| m.iterations * m.cost)
                        .fold(f64::INFINITY, f64::min)
                })
                .unwrap_or(f64::INFINITY);
            if best.is_finite() {
                let points = build_instance(k)?.finest().points() as f64;
                cost_rows.push((manifest.seed, k, best / points));
            }
        }
    }

    // Keep only mutually non-dominated scatter points across all runs.
    let survivors: Vec<&(u64, Fitness)> = scatter_points
        .iter()
        .filter(|(_, f)| !scatter_points.iter().any(|(_, g)| g.dominates(f)))
        .collect();
    let mut scatter = String::from("run_seed,iterations,cost_per_iteration\n");
    for (seed, f) in survivors {
        let _ = writeln!(scatter, "{seed},{},{}", f.iterations, f.cost);
    }

    let mut cost = String::from("run_seed,k,best_product_per_point\n");
    for (seed, k, v) in cost_rows {
        let _ = writeln!(cost, "{seed},{k},{v}");
    }

    fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("scatter.csv"), &scatter)?;
    write_atomic(&out_dir.join("cost_per_point.csv"), &cost)?;
    Ok((scatter, cost))
}
