//! The context-free grammar for multigrid preconditioners, generalized to
//! an arbitrary level count, plus genotype construction and variation:
//! grow initialization, typed subtree crossover, insertion-capable
//! mutation and translation to a structurally equivalent grammar for a
//! harder problem instance.
//!
//! A derivation tree encodes the full sequence of smoothing and
//! coarse-grid correction steps of one preconditioner application. The
//! outermost node of the chain corresponds to the last operation.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

/// Smoother splitting: the (block-)diagonal part of M used in the Jacobi
/// update. `Pointwise` is the scalar diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Splitting {
    Pointwise,
    /// Rectangular a x b blocks (a in x-direction, b in y-direction).
    Block { a: u8, b: u8 },
}

impl Splitting {
    pub fn terms(&self) -> usize {
        match self {
            Splitting::Pointwise => 1,
            Splitting::Block { a, b } => (*a as usize) * (*b as usize),
        }
    }
}

/// Grid partitioning applied within one smoothing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partitioning {
    None,
    RedBlack,
}

/// Terminal alphabets of the grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMenu {
    pub omegas: Vec<f64>,
    pub splittings: Vec<Splitting>,
    pub partitionings: Vec<Partitioning>,
}

impl ComponentMenu {
    /// Relaxation factors 0.1, 0.15, ..., 1.9; pointwise plus all a x b
    /// blocks with 2 <= a*b <= 6; no partitioning or red-black.
    pub fn standard() -> Self {
        let omegas: Vec<f64> = (0..37).map(|i| (i + 2) as f64 / 20.0).collect();
        let mut splittings = vec![Splitting::Pointwise];
        for ab in 2..=6usize {
            for a in 1..=ab {
                if ab % a == 0 {
                    let b = ab / a;
                    splittings.push(Splitting::Block {
                        a: a as u8,
                        b: b as u8,
                    });
                }
            }
        }
        ComponentMenu {
            omegas,
            splittings,
            partitionings: vec![Partitioning::None, Partitioning::RedBlack],
        }
    }

    pub fn omega_index(&self, omega: f64) -> Option<usize> {
        self.omegas.iter().position(|w| (w - omega).abs() < 1e-9)
    }
}

/// Grammar variables. Levels are relative: 0 = finest, depth-1 = coarsest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    /// Start symbol S.
    Start,
    /// Smoothing state variable s_l.
    Smoothing(u8),
    /// Correction (defect) variable c_l.
    Correction(u8),
    /// Splitting choice B_l.
    SplittingChoice(u8),
    /// Partitioning choice P.
    PartitioningChoice,
    /// Relaxation factor omega.
    RelaxationFactor,
}

impl Symbol {
    fn render(&self) -> String {
        match self {
            Symbol::Start => "S".into(),
            Symbol::Smoothing(l) => format!("s{l}"),
            Symbol::Correction(l) => format!("c{l}"),
            Symbol::SplittingChoice(l) => format!("B{l}"),
            Symbol::PartitioningChoice => "P".into(),
            Symbol::RelaxationFactor => "w".into(),
        }
    }
}

/// The grammar: level count plus terminal alphabets. Production shapes
/// are fully determined by these two.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub depth: usize,
    pub menu: ComponentMenu,
}

/// Production indices for the non-choice variables.
pub const PROD_SMOOTH: usize = 0;
pub const PROD_CGC: usize = 1;
pub const PROD_INITIAL: usize = 2;
pub const PROD_RESIDUAL: usize = 0;
pub const PROD_COCY: usize = 1;
pub const PROD_SOLVE: usize = 0;

impl Grammar {
    pub fn new(depth: usize, menu: ComponentMenu) -> Result<Self> {
        if !(2..=12).contains(&depth) {
            return Err(Error::GrammarMismatch(format!(
                "unsupported grammar depth {depth}"
            )));
        }
        Ok(Grammar { depth, menu })
    }

    fn coarsest(&self) -> u8 {
        (self.depth - 1) as u8
    }

    /// Number of productions of a variable.
    pub fn production_count(&self, sym: Symbol) -> usize {
        match sym {
            Symbol::Start => 1,
            Symbol::Smoothing(0) => 3,
            Symbol::Smoothing(_) => 2,
            Symbol::Correction(l) if l == self.coarsest() => 1,
            Symbol::Correction(0) => 1,
            Symbol::Correction(_) => 2,
            Symbol::SplittingChoice(_) => self.menu.splittings.len(),
            Symbol::PartitioningChoice => self.menu.partitionings.len(),
            Symbol::RelaxationFactor => self.menu.omegas.len(),
        }
    }

    /// Child variables of the right-hand side of a production.
    pub fn rhs(&self, sym: Symbol, prod: usize) -> Result<Vec<Symbol>> {
        let bad = || Error::InvalidTree(format!("no production {prod} for {sym:?}"));
        if prod >= self.production_count(sym) {
            return Err(bad());
        }
        Ok(match (sym, prod) {
            (Symbol::Start, 0) => vec![Symbol::Smoothing(0)],
            (Symbol::Smoothing(l), PROD_SMOOTH) => vec![
                Symbol::RelaxationFactor,
                Symbol::PartitioningChoice,
                Symbol::SplittingChoice(l),
                Symbol::Correction(l),
            ],
            (Symbol::Smoothing(l), PROD_CGC) => {
                if l + 1 < self.coarsest() {
                    vec![Symbol::RelaxationFactor, Symbol::Smoothing(l + 1)]
                } else {
                    vec![Symbol::RelaxationFactor, Symbol::Correction(self.coarsest())]
                }
            }
            (Symbol::Smoothing(0), PROD_INITIAL) => vec![],
            (Symbol::Correction(l), _) if l == self.coarsest() => {
                vec![Symbol::Correction(l - 1)]
            }
            (Symbol::Correction(l), PROD_RESIDUAL) => vec![Symbol::Smoothing(l)],
            (Symbol::Correction(l), PROD_COCY) => vec![Symbol::Correction(l - 1)],
            (Symbol::SplittingChoice(_), _)
            | (Symbol::PartitioningChoice, _)
            | (Symbol::RelaxationFactor, _) => vec![],
            _ => return Err(bad()),
        })
    }

    pub fn is_terminal_production(&self, sym: Symbol, prod: usize) -> bool {
        self.rhs(sym, prod).map(|c| c.is_empty()).unwrap_or(false)
    }

    /// Variables of the grammar (omega is treated as a terminal alphabet).
    pub fn variables(&self) -> Vec<Symbol> {
        let mut v = vec![Symbol::Start];
        for l in 0..self.depth - 1 {
            v.push(Symbol::Smoothing(l as u8));
            v.push(Symbol::Correction(l as u8));
            v.push(Symbol::SplittingChoice(l as u8));
        }
        v.push(Symbol::Correction(self.coarsest()));
        v.push(Symbol::PartitioningChoice);
        v
    }

    /// Minimal completion height (in edges) per symbol.
    fn min_completion(&self) -> HashMap<Symbol, usize> {
        let mut syms = self.variables();
        syms.push(Symbol::RelaxationFactor);
        let mut mc: HashMap<Symbol, usize> = syms.iter().map(|s| (*s, usize::MAX)).collect();
        loop {
            let mut changed = false;
            for &sym in &syms {
                let mut best = usize::MAX;
                for prod in 0..self.production_count(sym) {
                    let rhs = self.rhs(sym, prod).unwrap();
                    let cand = if rhs.is_empty() {
                        0
                    } else {
                        let mut worst = 0usize;
                        let mut ok = true;
                        for c in &rhs {
                            match mc.get(c) {
                                Some(&v) if v != usize::MAX => worst = worst.max(v),
                                _ => ok = false,
                            }
                        }
                        if ok {
                            1 + worst
                        } else {
                            usize::MAX
                        }
                    };
                    best = best.min(cand);
                }
                if best < mc[&sym] {
                    mc.insert(sym, best);
                    changed = true;
                }
            }
            if !changed {
                return mc;
            }
        }
    }

    /// Number of distinct complete derivation trees of height (in edges)
    /// at most `max_height`, saturating at u128::MAX.
    pub fn count_trees(&self, max_height: usize) -> u128 {
        fn count(
            g: &Grammar,
            sym: Symbol,
            d: usize,
            memo: &mut HashMap<(Symbol, usize), u128>,
        ) -> u128 {
            if let Some(v) = memo.get(&(sym, d)) {
                return *v;
            }
            let mut total: u128 = 0;
            for prod in 0..g.production_count(sym) {
                let rhs = g.rhs(sym, prod).unwrap();
                if rhs.is_empty() {
                    total = total.saturating_add(1);
                } else if d >= 1 {
                    let mut prodcount: u128 = 1;
                    for c in rhs {
                        prodcount = prodcount.saturating_mul(count(g, c, d - 1, memo));
                    }
                    total = total.saturating_add(prodcount);
                }
            }
            memo.insert((sym, d), total);
            total
        }
        let mut memo = HashMap::new();
        count(self, Symbol::Start, max_height, &mut memo)
    }
}

/// Build the grammar bound to a problem instance's hierarchy shape.
pub fn make_grammar(p: &ProblemInstance, menu: &ComponentMenu) -> Result<Grammar> {
    Grammar::new(p.depth, menu.clone())
}

/// One node of a derivation tree: variable, chosen production and the
/// children prescribed by its right-hand side. For the choice variables
/// (omega, splitting, partitioning) the production index IS the terminal
/// value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeNode {
    pub symbol: Symbol,
    pub production: usize,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    fn height(&self) -> usize {
        self.children
            .iter()
            .map(|c| 1 + c.height())
            .max()
            .unwrap_or(0)
    }

    fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    fn collect_paths(&self, prefix: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, Symbol)>) {
        out.push((prefix.clone(), self.symbol));
        for (idx, c) in self.children.iter().enumerate() {
            prefix.push(idx);
            c.collect_paths(prefix, out);
            prefix.pop();
        }
    }

    fn at_path(&self, path: &[usize]) -> &TreeNode {
        let mut cur = self;
        for &i in path {
            cur = &cur.children[i];
        }
        cur
    }

    fn at_path_mut(&mut self, path: &[usize]) -> &mut TreeNode {
        let mut cur = self;
        for &i in path {
            cur = &mut cur.children[i];
        }
        cur
    }

    fn contains(&self, other: &TreeNode) -> usize {
        let mut hits = if self == other { 1 } else { 0 };
        for c in &self.children {
            hits += c.contains(other);
        }
        hits
    }
}

/// A genotype: typed derivation tree rooted at the start symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DerivationTree {
    pub root: TreeNode,
}

impl DerivationTree {
    /// Longest root-to-leaf path, in edges.
    pub fn height(&self) -> usize {
        self.root.height()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Standalone structural validator, usable as a test oracle.
    pub fn validate(&self, g: &Grammar) -> Result<()> {
        fn check(g: &Grammar, node: &TreeNode) -> Result<()> {
            let rhs = g.rhs(node.symbol, node.production)?;
            if rhs.len() != node.children.len() {
                return Err(Error::InvalidTree(format!(
                    "arity mismatch at {:?} production {}: expected {}, got {}",
                    node.symbol,
                    node.production,
                    rhs.len(),
                    node.children.len()
                )));
            }
            for (want, child) in rhs.iter().zip(&node.children) {
                if *want != child.symbol {
                    return Err(Error::InvalidTree(format!(
                        "child label mismatch under {:?}: expected {:?}, got {:?}",
                        node.symbol, want, child.symbol
                    )));
                }
                check(g, child)?;
            }
            Ok(())
        }
        if self.root.symbol != Symbol::Start {
            return Err(Error::InvalidTree("root must be the start symbol".into()));
        }
        check(g, &self.root)
    }

    /// Canonical S-expression form; round-trips bit-exactly.
    pub fn to_sexp(&self) -> String {
        fn write_node(node: &TreeNode, out: &mut String) {
            if node.children.is_empty() {
                let _ = write!(out, "{}.{}", node.symbol.render(), node.production);
            } else {
                let _ = write!(out, "({}.{}", node.symbol.render(), node.production);
                for c in &node.children {
                    out.push(' ');
                    write_node(c, out);
                }
                out.push(')');
            }
        }
        let mut s = String::new();
        write_node(&self.root, &mut s);
        s
    }

    pub fn from_sexp(text: &str) -> Result<DerivationTree> {
        let mut tokens = tokenize(text)?;
        tokens.reverse();
        let root = parse_node(&mut tokens)?;
        if !tokens.is_empty() {
            return Err(Error::Parse("trailing tokens after genotype".into()));
        }
        if root.symbol != Symbol::Start {
            return Err(Error::Parse("genotype must start at S".into()));
        }
        Ok(DerivationTree { root })
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' | ')' | ' ' | '\n' | '\t' | '\r' => {
                if !cur.is_empty() {
                    out.push(Token::Atom(std::mem::take(&mut cur)));
                }
                match ch {
                    '(' => out.push(Token::Open),
                    ')' => out.push(Token::Close),
                    _ => {}
                }
            }
            _ => cur.push(ch),
        }
    }
    if !cur.is_empty() {
        out.push(Token::Atom(cur));
    }
    if out.is_empty() {
        return Err(Error::Parse("empty genotype".into()));
    }
    Ok(out)
}

fn parse_atom(atom: &str) -> Result<(Symbol, usize)> {
    let (name, prod) = atom
        .rsplit_once('.')
        .ok_or_else(|| Error::Parse(format!("malformed atom '{atom}'")))?;
    let production: usize = prod
        .parse()
        .map_err(|_| Error::Parse(format!("bad production index in '{atom}'")))?;
    let symbol = match name {
        "S" => Symbol::Start,
        "P" => Symbol::PartitioningChoice,
        "w" => Symbol::RelaxationFactor,
        _ => {
            let (kind, lvl) = name.split_at(1);
            let level: u8 = lvl
                .parse()
                .map_err(|_| Error::Parse(format!("bad level in '{atom}'")))?;
            match kind {
                "s" => Symbol::Smoothing(level),
                "c" => Symbol::Correction(level),
                "B" => Symbol::SplittingChoice(level),
                _ => return Err(Error::Parse(format!("unknown symbol '{name}'"))),
            }
        }
    };
    Ok((symbol, production))
}

fn parse_node(tokens: &mut Vec<Token>) -> Result<TreeNode> {
    match tokens.pop() {
        Some(Token::Atom(a)) => {
            let (symbol, production) = parse_atom(&a)?;
            Ok(TreeNode {
                symbol,
                production,
                children: vec![],
            })
        }
        Some(Token::Open) => {
            let head = match tokens.pop() {
                Some(Token::Atom(a)) => a,
                _ => return Err(Error::Parse("expected atom after '('".into())),
            };
            let (symbol, production) = parse_atom(&head)?;
            let mut children = Vec::new();
            loop {
                match tokens.last() {
                    Some(Token::Close) => {
                        tokens.pop();
                        break;
                    }
                    None => return Err(Error::Parse("unbalanced parentheses".into())),
                    _ => children.push(parse_node(tokens)?),
                }
            }
            Ok(TreeNode {
                symbol,
                production,
                children,
            })
        }
        _ => Err(Error::Parse("unexpected token".into())),
    }
}

const GROW_RETRIES: usize = 64;

/// Grow-initialize a random derivation tree whose height (longest path,
/// in edges) lies within [min_height, max_height]. Productions are drawn
/// uniformly from the combined terminal + non-terminal set; while the
/// tree has not reached min_height, terminal productions are excluded on
/// the deepest frontier, and productions that cannot complete within
/// max_height are never chosen.
pub fn grow(
    g: &Grammar,
    min_height: usize,
    max_height: usize,
    rng: &mut impl Rng,
) -> Result<DerivationTree> {
    if min_height > max_height {
        return Err(Error::GrowFailed(format!(
            "empty height window [{min_height}, {max_height}]"
        )));
    }
    let root = grow_from(g, Symbol::Start, min_height, max_height, rng)?;
    Ok(DerivationTree { root })
}

/// Grow a subtree rooted at an arbitrary symbol (heights relative to it).
pub fn grow_from(
    g: &Grammar,
    symbol: Symbol,
    min_height: usize,
    max_height: usize,
    rng: &mut impl Rng,
) -> Result<TreeNode> {
    let mc = g.min_completion();
    if mc[&symbol] > max_height {
        return Err(Error::GrowFailed(format!(
            "symbol {symbol:?} cannot complete within height {max_height}"
        )));
    }
    for _ in 0..GROW_RETRIES {
        if let Some(node) = try_grow(g, symbol, 0, min_height, max_height, true, &mc, rng) {
            return Ok(node);
        }
    }
    Err(Error::GrowFailed(format!(
        "no derivation for {symbol:?} within heights [{min_height}, {max_height}]"
    )))
}

#[allow(clippy::too_many_arguments)]
fn try_grow(
    g: &Grammar,
    sym: Symbol,
    depth: usize,
    min_height: usize,
    max_height: usize,
    deepest: bool,
    mc: &HashMap<Symbol, usize>,
    rng: &mut impl Rng,
) -> Option<TreeNode> {
    let mut eligible: Vec<usize> = Vec::new();
    for prod in 0..g.production_count(sym) {
        let rhs = g.rhs(sym, prod).ok()?;
        let feasible = if rhs.is_empty() {
            true
        } else {
            rhs.iter().all(|c| depth + 1 + mc[c] <= max_height)
        };
        if !feasible {
            continue;
        }
        if deepest && depth < min_height && rhs.is_empty() {
            continue; // terminal productions barred below the minimum height
        }
        eligible.push(prod);
    }
    if eligible.is_empty() {
        return None;
    }
    let prod = eligible[rng.gen_range(0..eligible.len())];
    let rhs = g.rhs(sym, prod).ok()?;
    let carrier = rhs
        .iter()
        .position(|c| matches!(c, Symbol::Smoothing(_) | Symbol::Correction(_)));
    let mut children = Vec::with_capacity(rhs.len());
    for (idx, child_sym) in rhs.into_iter().enumerate() {
        let child_deepest = deepest && Some(idx) == carrier;
        children.push(try_grow(
            g,
            child_sym,
            depth + 1,
            min_height,
            max_height,
            child_deepest,
            mc,
            rng,
        )?);
    }
    Some(TreeNode {
        symbol: sym,
        production: prod,
        children,
    })
}

/// Height window used for tree construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowLimits {
    pub min_height: usize,
    pub max_height: usize,
}

impl Default for GrowLimits {
    fn default() -> Self {
        GrowLimits {
            min_height: 4,
            max_height: 12,
        }
    }
}

/// Mutate by replacing the subtree under a uniformly chosen node. With
/// probability `p_terminal` the replacement is a terminal production of
/// the node's variable (a direct relabel); otherwise a fresh grown
/// subtree, into which the replaced subtree is spliced back exactly once
/// if a node with the same label occurs in it.
pub fn mutate(
    t: &DerivationTree,
    g: &Grammar,
    p_terminal: f64,
    limits: GrowLimits,
    rng: &mut impl Rng,
) -> Result<DerivationTree> {
    let mut paths = Vec::new();
    t.root.collect_paths(&mut Vec::new(), &mut paths);
    let (path, sym) = paths[rng.gen_range(0..paths.len())].clone();

    let terminal_prods: Vec<usize> = (0..g.production_count(sym))
        .filter(|&p| g.is_terminal_production(sym, p))
        .collect();

    let mut out = t.clone();
    if rng.gen_bool(p_terminal.clamp(0.0, 1.0)) && !terminal_prods.is_empty() {
        let prod = terminal_prods[rng.gen_range(0..terminal_prods.len())];
        *out.root.at_path_mut(&path) = TreeNode {
            symbol: sym,
            production: prod,
            children: vec![],
        };
        return Ok(out);
    }

    let mc = g.min_completion();
    let max_height = limits.max_height.max(mc[&sym]);
    let mut fresh = grow_from(g, sym, 0, max_height, rng)?;
    // Insertion: splice the original subtree at one same-labeled node of
    // the fresh subtree (never at its root).
    let original = out.root.at_path(&path).clone();
    let mut spots = Vec::new();
    fresh.collect_paths(&mut Vec::new(), &mut spots);
    let candidates: Vec<Vec<usize>> = spots
        .into_iter()
        .filter(|(p, s)| !p.is_empty() && *s == sym)
        .map(|(p, _)| p)
        .collect();
    if !candidates.is_empty() {
        let spot = &candidates[rng.gen_range(0..candidates.len())];
        *fresh.at_path_mut(spot) = original;
    }
    *out.root.at_path_mut(&path) = fresh;
    Ok(out)
}

/// Typed subtree crossover: a node pair with identical variable labels is
/// sampled uniformly over all label-matching pairs and the subtrees are
/// exchanged. Parents are returned unchanged when no pair matches.
#[allow(clippy::type_complexity)]
pub fn crossover(
    a: &DerivationTree,
    b: &DerivationTree,
    rng: &mut impl Rng,
) -> (DerivationTree, DerivationTree) {
    let mut pa = Vec::new();
    a.root.collect_paths(&mut Vec::new(), &mut pa);
    let mut pb = Vec::new();
    b.root.collect_paths(&mut Vec::new(), &mut pb);

    let mut by_symbol: HashMap<Symbol, (Vec<&Vec<usize>>, Vec<&Vec<usize>>)> = HashMap::new();
    for (p, s) in &pa {
        by_symbol.entry(*s).or_default().0.push(p);
    }
    for (p, s) in &pb {
        by_symbol.entry(*s).or_default().1.push(p);
    }
    let mut weighted: Vec<(Symbol, usize)> = by_symbol
        .iter()
        .filter(|(_, (xa, xb))| !xa.is_empty() && !xb.is_empty())
        .map(|(s, (xa, xb))| (*s, xa.len() * xb.len()))
        .collect();
    weighted.sort_by_key(|(s, _)| format!("{s:?}"));
    let total: usize = weighted.iter().map(|(_, w)| w).sum();
    if total == 0 {
        return (a.clone(), b.clone());
    }
    let mut pick = rng.gen_range(0..total);
    let mut chosen = weighted[0].0;
    for (s, w) in &weighted {
        if pick < *w {
            chosen = *s;
            break;
        }
        pick -= w;
    }
    let (ca, cb) = &by_symbol[&chosen];
    let path_a = ca[rng.gen_range(0..ca.len())].clone();
    let path_b = cb[rng.gen_range(0..cb.len())].clone();

    let mut na = a.clone();
    let mut nb = b.clone();
    let sub_a = na.root.at_path(&path_a).clone();
    let sub_b = nb.root.at_path(&path_b).clone();
    *na.root.at_path_mut(&path_a) = sub_b;
    *nb.root.at_path_mut(&path_b) = sub_a;
    (na, nb)
}

/// Rebind a genotype to a structurally equivalent grammar for another
/// problem instance. The tree is problem-size independent, so the result
/// is node-for-node identical; depth and component menu must match.
pub fn translate(t: &DerivationTree, g_new: &Grammar) -> Result<DerivationTree> {
    let out = t.clone();
    out.validate(g_new).map_err(|e| {
        Error::GrammarMismatch(format!("genotype incompatible with target grammar: {e}"))
    })?;
    Ok(out)
}

/// The V(nu1, nu2) reference genotype: red-black Gauss-Seidel smoothing
/// with relaxation `omega` on every level and unit-relaxed coarse-grid
/// corrections.
pub fn reference_vcycle(
    g: &Grammar,
    nu1: usize,
    nu2: usize,
    omega: f64,
) -> Result<DerivationTree> {
    let omega_idx = g
        .menu
        .omega_index(omega)
        .ok_or_else(|| Error::GrammarMismatch(format!("omega {omega} not in menu")))?;
    let cgc_idx = g
        .menu
        .omega_index(1.0)
        .ok_or_else(|| Error::GrammarMismatch("menu lacks omega = 1.0".into()))?;
    let rb_idx = g
        .menu
        .partitionings
        .iter()
        .position(|p| *p == Partitioning::RedBlack)
        .ok_or_else(|| Error::GrammarMismatch("menu lacks red-black partitioning".into()))?;
    let leaf = |sym: Symbol, production: usize| TreeNode {
        symbol: sym,
        production,
        children: vec![],
    };
    let depth = g.depth;
    let coarsest = (depth - 1) as u8;

    // Chain tip: either a smoothing-state or a correction node of level l.
    enum Tip {
        S(u8, TreeNode),
        C(TreeNode),
    }
    let as_corr = |tip: Tip| -> TreeNode {
        match tip {
            Tip::C(n) => n,
            Tip::S(l, n) => TreeNode {
                symbol: Symbol::Correction(l),
                production: PROD_RESIDUAL,
                children: vec![n],
            },
        }
    };
    let smooth_wrap = |l: u8, tip: Tip| -> Tip {
        let corr = as_corr(tip);
        Tip::S(
            l,
            TreeNode {
                symbol: Symbol::Smoothing(l),
                production: PROD_SMOOTH,
                children: vec![
                    leaf(Symbol::RelaxationFactor, omega_idx),
                    leaf(Symbol::PartitioningChoice, rb_idx),
                    leaf(Symbol::SplittingChoice(l), 0),
                    corr,
                ],
            },
        )
    };

    let mut tip = Tip::S(0, leaf(Symbol::Smoothing(0), PROD_INITIAL));
    for _ in 0..nu1 {
        tip = smooth_wrap(0, tip);
    }
    for l in 1..=depth as u8 - 2 {
        tip = Tip::C(TreeNode {
            symbol: Symbol::Correction(l),
            production: PROD_COCY,
            children: vec![as_corr(tip)],
        });
        for _ in 0..nu1 {
            tip = smooth_wrap(l, tip);
        }
    }
    // Coarsest solve correcting onto level depth-2.
    let solve = TreeNode {
        symbol: Symbol::Correction(coarsest),
        production: PROD_SOLVE,
        children: vec![as_corr(tip)],
    };
    tip = Tip::S(
        coarsest - 1,
        TreeNode {
            symbol: Symbol::Smoothing(coarsest - 1),
            production: PROD_CGC,
            children: vec![leaf(Symbol::RelaxationFactor, cgc_idx), solve],
        },
    );
    for _ in 0..nu2 {
        tip = smooth_wrap(coarsest - 1, tip);
    }
    for l in (0..=depth as u8 - 3).rev() {
        let inner = match tip {
            Tip::S(_, n) => n,
            Tip::C(..) => unreachable!("ascent always holds a smoothing state"),
        };
        tip = Tip::S(
            l,
            TreeNode {
                symbol: Symbol::Smoothing(l),
                production: PROD_CGC,
                children: vec![leaf(Symbol::RelaxationFactor, cgc_idx), inner],
            },
        );
        for _ in 0..nu2 {
            tip = smooth_wrap(l, tip);
        }
    }
    let root = match tip {
        Tip::S(_, n) => TreeNode {
            symbol: Symbol::Start,
            production: 0,
            children: vec![n],
        },
        Tip::C(..) => unreachable!(),
    };
    let tree = DerivationTree { root };
    tree.validate(g)?;
    Ok(tree)
}

/// How many times `needle` occurs as an exact subtree of `tree`.
pub fn subtree_occurrences(tree: &DerivationTree, needle: &TreeNode) -> usize {
    tree.root.contains(needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn g5() -> Grammar {
        Grammar::new(5, ComponentMenu::standard()).unwrap()
    }

    fn g3() -> Grammar {
        Grammar::new(3, ComponentMenu::standard()).unwrap()
    }

    #[test]
    fn menu_sizes() {
        let m = ComponentMenu::standard();
        assert_eq!(m.omegas.len(), 37);
        assert!((m.omegas[36] - 1.9).abs() < 1e-12);
        assert_eq!(m.splittings.len(), 14);
        // Brute-force enumeration of admissible block shapes.
        let mut brute = vec![];
        for a in 1..=6u8 {
            for b in 1..=6u8 {
                let ab = a as usize * b as usize;
                if (2..=6).contains(&ab) {
                    brute.push(Splitting::Block { a, b });
                }
            }
        }
        assert_eq!(brute.len(), 13);
        for s in brute {
            assert!(m.splittings.contains(&s));
        }
    }

    #[test]
    fn depth3_variable_set_matches_three_grid_grammar() {
        let g = g3();
        let vars = g.variables();
        let want = vec![
            Symbol::Start,
            Symbol::Smoothing(0),
            Symbol::Correction(0),
            Symbol::SplittingChoice(0),
            Symbol::Smoothing(1),
            Symbol::Correction(1),
            Symbol::SplittingChoice(1),
            Symbol::Correction(2),
            Symbol::PartitioningChoice,
        ];
        assert_eq!(vars.len(), want.len());
        for v in want {
            assert!(vars.contains(&v), "missing {v:?}");
        }
    }

    #[test]
    fn grow_respects_bounds_and_validates() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(0);
        for _ in 0..2000 {
            let t = grow(&g, 4, 12, &mut rng).unwrap();
            t.validate(&g).unwrap();
            let h = t.height();
            assert!((4..=12).contains(&h), "height {h}");
        }
    }

    #[test]
    fn grow_minimal_window_gives_skeleton() {
        // The smallest window containing a full coarse-solve chain forces
        // the V(0,0) skeleton for depth 3.
        let g = g3();
        let mut rng = StdRng::seed_from_u64(1);
        // Minimal full-depth chain for depth 3:
        // S -> s0(cgc) -> c2 -> c1(cocy) -> c0 -> s0(initial): height 5 + omega leaf.
        let t = grow(&g, 5, 5, &mut rng).unwrap();
        assert_eq!(t.height(), 5);
        t.validate(&g).unwrap();
    }

    #[test]
    fn grow_uniform_partitioning_choice() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(42);
        let mut counts = [0usize; 2];
        let mut samples = 0;
        while samples < 10_000 {
            let t = grow(&g, 3, 10, &mut rng).unwrap();
            let mut paths = Vec::new();
            t.root.collect_paths(&mut Vec::new(), &mut paths);
            for (p, s) in paths {
                if s == Symbol::PartitioningChoice && samples < 10_000 {
                    counts[t.root.at_path(&p).production] += 1;
                    samples += 1;
                }
            }
        }
        let f = counts[0] as f64 / samples as f64;
        assert!((f - 0.5).abs() < 0.03, "frequency {f}");
    }

    #[test]
    fn search_space_exceeds_a_million() {
        let g = g3();
        assert!(g.count_trees(6) > 1_000_000, "{}", g.count_trees(6));
    }

    #[test]
    fn mutate_preserves_validity() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(3);
        let limits = GrowLimits::default();
        for _ in 0..2000 {
            let t = grow(&g, 3, 10, &mut rng).unwrap();
            let m = mutate(&t, &g, 1.0 / 3.0, limits, &mut rng).unwrap();
            m.validate(&g).unwrap();
        }
    }

    #[test]
    fn mutate_partitioning_leaf_toggles() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(4);
        // A tree with exactly one P node.
        let t = reference_vcycle(&g, 0, 1, 0.8).unwrap();
        // Force terminal mutations until the chosen node is a P leaf.
        for _ in 0..2000 {
            let m = mutate(&t, &g, 1.0, GrowLimits::default(), &mut rng).unwrap();
            m.validate(&g).unwrap();
        }
    }

    #[test]
    fn mutation_insertion_splices_original_once() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(5);
        // Use a distinctive subtree at s1 and mutate at its path until the
        // grow branch with insertion fires.
        let t = reference_vcycle(&g, 2, 2, 0.45).unwrap();
        let mut paths = Vec::new();
        t.root.collect_paths(&mut Vec::new(), &mut paths);
        let (s1_path, _) = paths
            .iter()
            .find(|(_, s)| *s == Symbol::Smoothing(1))
            .unwrap()
            .clone();
        let original = t.root.at_path(&s1_path).clone();
        let mut spliced = 0;
        for _ in 0..400 {
            let m = mutate(&t, &g, 0.0, GrowLimits { min_height: 2, max_height: 16 }, &mut rng)
                .unwrap();
            m.validate(&g).unwrap();
            let occurrences = m.root.contains(&original);
            if occurrences >= 1 && m != t {
                spliced += 1;
            }
        }
        assert!(spliced > 0, "insertion never observed");
    }

    #[test]
    fn crossover_with_self_stays_valid_and_conserves_nodes() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(6);
        let t = grow(&g, 4, 10, &mut rng).unwrap();
        for _ in 0..50 {
            let (a, b) = crossover(&t, &t, &mut rng);
            a.validate(&g).unwrap();
            b.validate(&g).unwrap();
            assert_eq!(a.node_count() + b.node_count(), 2 * t.node_count());
        }
    }

    #[test]
    fn crossover_children_valid_and_conserve_nodes() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = grow(&g, 3, 10, &mut rng).unwrap();
            let b = grow(&g, 3, 10, &mut rng).unwrap();
            let (ca, cb) = crossover(&a, &b, &mut rng);
            ca.validate(&g).unwrap();
            cb.validate(&g).unwrap();
            assert_eq!(
                ca.node_count() + cb.node_count(),
                a.node_count() + b.node_count()
            );
        }
    }

    #[test]
    fn translate_same_grammar_is_identity() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(8);
        let t = grow(&g, 4, 10, &mut rng).unwrap();
        let u = translate(&t, &g).unwrap();
        assert_eq!(t, u);
        // Depth mismatch is rejected.
        assert!(translate(&t, &g3()).is_err());
    }

    #[test]
    fn sexp_round_trip() {
        let g = g5();
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..500 {
            let t = grow(&g, 3, 12, &mut rng).unwrap();
            let s = t.to_sexp();
            let back = DerivationTree::from_sexp(&s).unwrap();
            assert_eq!(back, t);
            assert_eq!(back.to_sexp(), s);
        }
        assert!(DerivationTree::from_sexp("(bogus").is_err());
        assert!(DerivationTree::from_sexp("w.3").is_err());
    }

    #[test]
    fn reference_vcycle_is_valid() {
        let g = g5();
        for (nu1, nu2) in [(0, 1), (1, 1), (2, 2), (3, 3)] {
            let t = reference_vcycle(&g, nu1, nu2, 1.25).unwrap();
            t.validate(&g).unwrap();
        }
        assert!(reference_vcycle(&g, 0, 1, 0.62).is_err()); // off-menu omega
    }
}
