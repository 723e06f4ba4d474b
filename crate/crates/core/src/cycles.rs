//! Leading-cycle search on a graph system.
//!
//! Strategies: exhaustive enumeration of closed paths up to a length bound,
//! a beam search in the style of the modified Gripenberg algorithm that
//! follows the products with the largest and smallest normalized norms, and
//! a scan over cycles with few mode blocks but long dwell times.
//! [`leading_cycle_search`] runs all of them and keeps the best.
//!
//! Search products are kept as `e^{log_scale} · M` with `‖M‖_F = 1` so that long
//! paths neither overflow nor underflow.

use std::cmp::Ordering;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix};
use crate::system::{EdgeKind, GraphSystem};

pub const DEFAULT_ENUM_CAP: u64 = 10_000_000;
pub const DEFAULT_BEAM: usize = 100;
pub const DEFAULT_DEPTH: usize = 2000;
pub const DEFAULT_ENUM_LENGTH: usize = 12;

/// Relative tolerance under which two cycle values count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CycleError {
    #[error("enumeration would generate {paths} paths (cap {cap})")]
    BudgetExceeded { paths: u64, cap: u64 },
    #[error("no closed path found within the search depth")]
    NoCycleFound,
    #[error("path from {start} to {end} is not closed")]
    NotClosed { start: usize, end: usize },
    #[error("malformed cycle: {0}")]
    MalformedCycle(String),
    #[error("invalid search parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// An edge path together with its (scaled) operator product.
#[derive(Debug, Clone, PartialEq)]
pub struct PathProduct {
    pub start_vertex: usize,
    pub end_vertex: usize,
    pub edges: Vec<usize>,
    /// Product direction, largest entry in `[1, 2)` unless the product vanished.
    pub product: Matrix,
    /// `Π = e^{log_scale} · product`.
    pub log_scale: f64,
    pub total_time: f64,
}

impl PathProduct {
    pub fn from_edges(g: &GraphSystem, edges: &[usize]) -> Result<Self, CycleError> {
        let first = *edges
            .first()
            .ok_or_else(|| CycleError::MalformedCycle("empty edge sequence".into()))?;
        check_edges(g, edges)?;
        let d = g.dim();
        let mut product = Matrix::identity(d, d);
        let mut log_scale = 0.0;
        let mut total_time = 0.0;
        for &e in edges {
            let edge = g.edge(e);
            product = &edge.operator * product;
            // Power-of-two rescaling is exact, so e.g. the identity keeps
            // value exactly 1.
            let n = product.amax();
            if n > 0.0 {
                let k = n.log2().floor() as i32;
                product *= 2f64.powi(-k);
                log_scale += k as f64 * std::f64::consts::LN_2;
            } else {
                log_scale = f64::NEG_INFINITY;
            }
            total_time += edge.duration;
        }
        Ok(PathProduct {
            start_vertex: g.edge(first).from,
            end_vertex: g.edge(*edges.last().unwrap()).to,
            edges: edges.to_vec(),
            product,
            log_scale,
            total_time,
        })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.start_vertex == self.end_vertex
    }

    /// The unscaled product. May overflow for long, fast-growing paths.
    pub fn matrix(&self) -> Matrix {
        &self.product * self.log_scale.exp()
    }
}

fn check_edges(g: &GraphSystem, edges: &[usize]) -> Result<(), CycleError> {
    for (k, &e) in edges.iter().enumerate() {
        if e >= g.edges().len() {
            return Err(CycleError::MalformedCycle(format!("edge index {e} out of range")));
        }
        if k > 0 && g.edge(edges[k - 1]).to != g.edge(e).from {
            return Err(CycleError::MalformedCycle(format!(
                "edges {} and {} are not incident",
                edges[k - 1],
                e
            )));
        }
    }
    Ok(())
}

/// `ρ(Π)^{1/T}` for a closed path.
pub fn cycle_value(p: &PathProduct) -> Result<f64, CycleError> {
    if !p.is_closed() {
        return Err(CycleError::NotClosed {
            start: p.start_vertex,
            end: p.end_vertex,
        });
    }
    Ok(value_of(&p.product, p.log_scale, p.total_time)?)
}

fn value_of(product: &Matrix, log_scale: f64, total_time: f64) -> Result<f64, LinalgError> {
    let rho = linalg::spectral_radius(product)?;
    if rho == 0.0 || log_scale == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok(((log_scale + rho.ln()) / total_time).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub path: PathProduct,
    /// `ρ(Π)^{1/T}`.
    pub value: f64,
}

impl Cycle {
    pub fn new(path: PathProduct) -> Result<Self, CycleError> {
        let value = cycle_value(&path)?;
        Ok(Cycle { path, value })
    }

    pub fn from_edges(g: &GraphSystem, edges: &[usize]) -> Result<Self, CycleError> {
        Cycle::new(PathProduct::from_edges(g, edges)?)
    }

    pub fn edges(&self) -> &[usize] {
        &self.path.edges
    }

    pub fn total_time(&self) -> f64 {
        self.path.total_time
    }

    /// The same cycle started at edge position `k`.
    pub fn rotated(&self, g: &GraphSystem, k: usize) -> Result<Cycle, CycleError> {
        let e = &self.path.edges;
        let rot: Vec<usize> = e[k..].iter().chain(&e[..k]).copied().collect();
        Cycle::from_edges(g, &rot)
    }
}

/// Descending value; ties by shorter total time, then lexicographic edges.
pub fn compare_cycles(a: &Cycle, b: &Cycle) -> Ordering {
    let scale = a.value.abs().max(b.value.abs());
    if (a.value - b.value).abs() > TIE_TOL * scale {
        return b.value.total_cmp(&a.value);
    }
    let dt = a.total_time() - b.total_time();
    if dt.abs() > 1e-12 * a.total_time().max(b.total_time()) {
        return a.total_time().total_cmp(&b.total_time());
    }
    a.edges().cmp(b.edges())
}

fn is_min_rotation(seq: &[usize]) -> bool {
    let n = seq.len();
    (1..n).all(|k| {
        let rot = seq[k..].iter().chain(&seq[..k]);
        seq.iter().cmp(rot) != Ordering::Greater
    })
}

/// Number of edge paths of length `1..=max_len` (closed or not).
fn path_count(g: &GraphSystem, max_len: usize) -> u64 {
    let n = g.vertex_count();
    // counts[v] = number of paths of the current length ending at v
    let mut counts = vec![1u64; n];
    let mut total: u64 = 0;
    for _ in 0..max_len {
        let mut next = vec![0u64; n];
        for (v, &c) in counts.iter().enumerate() {
            for &e in g.outgoing(v) {
                let t = g.edge(e).to;
                next[t] = next[t].saturating_add(c);
            }
        }
        total = next.iter().fold(total, |acc, &c| acc.saturating_add(c));
        counts = next;
        if total == u64::MAX {
            break;
        }
    }
    total
}

/// All closed paths of length at most `max_len`, one representative per
/// rotation class, sorted by [`compare_cycles`].
pub fn enumerate_cycles(g: &GraphSystem, max_len: usize) -> Result<Vec<Cycle>, CycleError> {
    enumerate_cycles_capped(g, max_len, DEFAULT_ENUM_CAP)
}

pub fn enumerate_cycles_capped(
    g: &GraphSystem,
    max_len: usize,
    cap: u64,
) -> Result<Vec<Cycle>, CycleError> {
    if max_len == 0 {
        return Err(CycleError::InvalidParameter("enumeration length must be >= 1".into()));
    }
    let paths = path_count(g, max_len);
    if paths > cap {
        return Err(CycleError::BudgetExceeded { paths, cap });
    }
    let starts: Vec<usize> = (0..g.vertex_count()).collect();
    let per_start: Vec<Vec<Cycle>> = starts
        .par_iter()
        .map(|&s| {
            let mut out = Vec::new();
            let mut stack = Vec::new();
            let d = g.dim();
            dfs(g, s, s, max_len, &mut stack, &Matrix::identity(d, d), 0.0, 0.0, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_, CycleError>>()?;
    let mut all: Vec<Cycle> = per_start.into_iter().flatten().collect();
    all.sort_by(compare_cycles);
    Ok(all)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    g: &GraphSystem,
    start: usize,
    at: usize,
    max_len: usize,
    stack: &mut Vec<usize>,
    product: &Matrix,
    log_scale: f64,
    time: f64,
    out: &mut Vec<Cycle>,
) -> Result<(), CycleError> {
    if stack.len() == max_len {
        return Ok(());
    }
    for &e in g.outgoing(at) {
        let edge = g.edge(e);
        let mut next = &edge.operator * product;
        let n = next.norm();
        let ls = if n > 0.0 {
            next /= n;
            log_scale + n.ln()
        } else {
            f64::NEG_INFINITY
        };
        let t = time + edge.duration;
        stack.push(e);
        if edge.to == start && is_min_rotation(stack) {
            let value = value_of(&next, ls, t)?;
            out.push(Cycle {
                path: PathProduct {
                    start_vertex: start,
                    end_vertex: start,
                    edges: stack.clone(),
                    product: next.clone(),
                    log_scale: ls,
                    total_time: t,
                },
                value,
            });
        }
        dfs(g, start, edge.to, max_len, stack, &next, ls, t, out)?;
        stack.pop();
    }
    Ok(())
}

/// Persistent edge list shared between beam entries.
struct PathNode {
    edge: usize,
    parent: Option<Arc<PathNode>>,
}

fn collect_edges(node: &Arc<PathNode>, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    let mut cur = Some(node);
    while let Some(n) = cur {
        out.push(n.edge);
        cur = n.parent.as_ref();
    }
    out.reverse();
    out
}

struct BeamEntry {
    start: usize,
    end: usize,
    len: usize,
    path: Option<Arc<PathNode>>,
    product: Matrix,
    log_scale: f64,
    time: f64,
}

struct Extended {
    entry: BeamEntry,
    /// `‖Π‖^{1/T}` in log form.
    log_norm_rate: f64,
    closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripenbergConfig {
    /// Beam width `N` (even).
    pub beam: usize,
    /// Number of iterations `K`.
    pub depth: usize,
    /// Retained size of the candidate set.
    pub max_candidates: usize,
}

impl Default for GripenbergConfig {
    fn default() -> Self {
        GripenbergConfig {
            beam: DEFAULT_BEAM,
            depth: DEFAULT_DEPTH,
            max_candidates: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Cycle,
    /// The accumulated best-cycle set, sorted by [`compare_cycles`].
    pub candidates: Vec<Cycle>,
}

/// Markovian modified Gripenberg search.
///
/// Iteration `k` extends every retained product by every admissible edge,
/// records the best closed products, then keeps the `N/2` products with the
/// largest and the `N/2` with the smallest `‖E‖^{1/T(E)}`.
pub fn gripenberg_search(g: &GraphSystem, cfg: &GripenbergConfig) -> Result<SearchResult, CycleError> {
    if cfg.beam < 2 || !cfg.beam.is_multiple_of(2) {
        return Err(CycleError::InvalidParameter(format!(
            "beam must be a positive even number, got {}",
            cfg.beam
        )));
    }
    if cfg.depth == 0 {
        return Err(CycleError::InvalidParameter("depth must be >= 1".into()));
    }
    let d = g.dim();
    let mut beam: Vec<BeamEntry> = (0..g.vertex_count())
        .map(|v| BeamEntry {
            start: v,
            end: v,
            len: 0,
            path: None,
            product: Matrix::identity(d, d),
            log_scale: 0.0,
            time: 0.0,
        })
        .collect();
    let mut rho_max: f64 = 0.0;
    let mut candidates: Vec<Cycle> = Vec::new();

    for _ in 0..cfg.depth {
        let extended: Vec<Extended> = beam
            .par_iter()
            .flat_map_iter(|b| g.outgoing(b.end).iter().map(move |&e| (b, e)))
            .map(|(b, e)| extend(g, b, e))
            .collect::<Result<_, CycleError>>()?;

        // ρ(Π)^{1/T} ≤ ‖Π‖_F^{1/T}: skip the eigenvalue solve when the norm
        // alone rules out reaching the best value found so far.
        let threshold = if rho_max > 0.0 {
            rho_max.ln() + (-TIE_TOL).ln_1p()
        } else {
            f64::NEG_INFINITY
        };
        let values: Vec<(usize, f64)> = extended
            .par_iter()
            .enumerate()
            .filter(|(_, x)| x.closed && x.log_norm_rate >= threshold && may_reach(&x.entry, threshold))
            .map(|(i, x)| Ok((i, value_of(&x.entry.product, x.entry.log_scale, x.entry.time)?)))
            .collect::<Result<_, CycleError>>()?;
        let keep = cfg.max_candidates.max(1);
        let cutoff = if candidates.len() >= keep {
            candidates[keep - 1].value * (1.0 - TIE_TOL)
        } else {
            0.0
        };
        let mut grew = false;
        for (i, v) in values {
            if v >= cutoff && v > 0.0 {
                candidates.push(to_cycle(&extended[i].entry, v));
                grew = true;
            }
        }
        if grew {
            candidates.sort_by(compare_cycles);
            candidates.dedup_by(|a, b| a.edges() == b.edges());
            candidates.truncate(keep);
            rho_max = candidates[0].value;
        }

        beam = select_beam(extended, cfg.beam);
    }
    let best = candidates.first().cloned().ok_or(CycleError::NoCycleFound)?;
    Ok(SearchResult { best, candidates })
}

/// Tighter spectral bound `ρ(Π) ≤ ‖Π^{2^k}‖^{1/2^k}` before paying for
/// an eigenvalue solve.
fn may_reach(b: &BeamEntry, threshold: f64) -> bool {
    if threshold == f64::NEG_INFINITY {
        return true;
    }
    let mut p = b.product.clone();
    let mut log_norm = 0.0; // ln ‖M^{2^k}‖ with ‖M‖_F = 1 accumulated in steps
    let mut power = 1.0;
    for _ in 0..3 {
        p = &p * &p;
        power *= 2.0;
        let n = p.norm();
        if n == 0.0 {
            return false;
        }
        log_norm = 2.0 * log_norm + n.ln();
        p /= n;
        if (b.log_scale + log_norm / power) / b.time < threshold {
            return false;
        }
    }
    true
}

fn extend(g: &GraphSystem, b: &BeamEntry, e: usize) -> Result<Extended, CycleError> {
    let edge = g.edge(e);
    let mut product = &edge.operator * &b.product;
    let n = product.norm();
    let log_scale = if n > 0.0 && b.log_scale.is_finite() {
        product /= n;
        b.log_scale + n.ln()
    } else {
        f64::NEG_INFINITY
    };
    let time = b.time + edge.duration;
    let start = b.start;
    Ok(Extended {
        entry: BeamEntry {
            start,
            end: edge.to,
            len: b.len + 1,
            path: Some(Arc::new(PathNode {
                edge: e,
                parent: b.path.clone(),
            })),
            product,
            log_scale,
            time,
        },
        log_norm_rate: log_scale / time,
        closed: edge.to == start,
    })
}

fn to_cycle(b: &BeamEntry, value: f64) -> Cycle {
    Cycle {
        path: PathProduct {
            start_vertex: b.start,
            end_vertex: b.end,
            edges: collect_edges(b.path.as_ref().unwrap(), b.len),
            product: b.product.clone(),
            log_scale: b.log_scale,
            total_time: b.time,
        },
        value,
    }
}

fn select_beam(mut extended: Vec<Extended>, width: usize) -> Vec<BeamEntry> {
    if extended.len() <= width {
        return extended.into_iter().map(|x| x.entry).collect();
    }
    // Stable sort keeps generation order among equal norms.
    extended.sort_by(|a, b| b.log_norm_rate.total_cmp(&a.log_norm_rate));
    let half = width / 2;
    let total = extended.len();
    extended
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i < half || *i >= total - half)
        .map(|(_, x)| x.entry)
        .collect()
}

/// Cycles made of at most `max_blocks` mode blocks, each a switch followed
/// by `0..=max_loops` loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSearchConfig {
    pub max_blocks: usize,
    pub max_loops: usize,
    /// Upper limit on the number of block words evaluated.
    pub budget: u64,
}

impl Default for BlockSearchConfig {
    fn default() -> Self {
        BlockSearchConfig {
            max_blocks: 2,
            max_loops: 256,
            budget: 4_000_000,
        }
    }
}

struct BlockOp {
    product: Matrix,
    log_scale: f64,
    time: f64,
}

fn normalized_mul(a: &Matrix, b: &Matrix, la: f64, lb: f64) -> Result<(Matrix, f64), LinalgError> {
    let mut p = a * b;
    let n = p.norm();
    if n > 0.0 && la.is_finite() && lb.is_finite() {
        p /= n;
        Ok((p, la + lb + n.ln()))
    } else {
        Ok((p, f64::NEG_INFINITY))
    }
}

/// Exhaustive scan over block words `(j₁,k₁)…(j_b,k_b)` with `b ≤ max_blocks`,
/// consecutive modes distinct (cyclically), one word per rotation class.
/// Loop-only cycles at each mode are included as well.
pub fn block_search(g: &GraphSystem, cfg: &BlockSearchConfig) -> Result<SearchResult, CycleError> {
    block_search_above(g, cfg, 0.0)
}

/// As [`block_search`], but words whose value provably stays below `floor`
/// are not evaluated (they may be missing from the candidate list).
pub fn block_search_above(g: &GraphSystem, cfg: &BlockSearchConfig, floor: f64) -> Result<SearchResult, CycleError> {
    let n = g.vertex_count();
    let kk = cfg.max_loops + 1;
    let mut words: u64 = 0;
    for b in 2..=cfg.max_blocks {
        let modes = (n as u64).saturating_mul((n as u64).saturating_sub(1).saturating_pow(b as u32 - 1));
        words = words.saturating_add(modes.saturating_mul((kk as u64).saturating_pow(b as u32)));
    }
    if words > cfg.budget {
        return Err(CycleError::BudgetExceeded {
            paths: words,
            cap: cfg.budget,
        });
    }
    // ops[j][k] = (e^{hA_j})^k · e^{mA_j}, i.e. entering j and staying k steps
    let mut ops: Vec<Vec<BlockOp>> = Vec::with_capacity(n);
    if n > 1 {
        for j in 0..n {
            let entry = g
                .edges()
                .iter()
                .find(|e| e.to == j && e.kind == EdgeKind::Switch)
                .expect("complete switch graph");
            let lp = &g.edge(g.loop_edge(j)).operator;
            let mut list = Vec::with_capacity(kk);
            let n0 = entry.operator.norm();
            let (mut cur, mut ls) = if n0 > 0.0 {
                (&entry.operator / n0, n0.ln())
            } else {
                (entry.operator.clone(), f64::NEG_INFINITY)
            };
            for k in 0..kk {
                if k > 0 {
                    (cur, ls) = normalized_mul(lp, &cur, 0.0, ls)?;
                }
                list.push(BlockOp {
                    product: cur.clone(),
                    log_scale: ls,
                    time: g.dwell_time() + k as f64 * g.step(),
                });
            }
            ops.push(list);
        }
    }

    let mut candidates: Vec<Cycle> = Vec::new();
    for j in 0..n {
        candidates.push(Cycle::from_edges(g, &[g.loop_edge(j)])?);
    }
    let start_best = candidates.iter().map(|c| c.value).fold(floor.max(0.0), f64::max);
    let shared = AtomicU64::new(start_best.to_bits());

    let firsts: Vec<(usize, usize)> = (0..ops.len()).flat_map(|j| (0..kk).map(move |k| (j, k))).collect();
    let found: Vec<Option<BlockBest>> = firsts
        .par_iter()
        .map(|&(j, k)| {
            let mut best: Option<BlockBest> = None;
            let mut word = vec![(j, k)];
            let op = &ops[j][k];
            let mut ctx = BlockCtx {
                ops: &ops,
                max_blocks: cfg.max_blocks,
                shared: &shared,
                best: &mut best,
            };
            ctx.dfs(&mut word, &op.product, op.log_scale, op.time)?;
            Ok(best)
        })
        .collect::<Result<_, CycleError>>()?;

    for (_, word) in found.into_iter().flatten() {
        candidates.push(Cycle::from_edges(g, &block_word_edges(g, &word))?);
    }
    candidates.sort_by(compare_cycles);
    let best = candidates.first().cloned().ok_or(CycleError::NoCycleFound)?;
    Ok(SearchResult { best, candidates })
}

/// Best word found so far with its value.
type BlockBest = (f64, Vec<(usize, usize)>);

struct BlockCtx<'a> {
    ops: &'a [Vec<BlockOp>],
    max_blocks: usize,
    /// Best value over all threads, as `f64` bits (values are nonnegative,
    /// so the bit order is the numeric order).
    shared: &'a AtomicU64,
    best: &'a mut Option<BlockBest>,
}

impl BlockCtx<'_> {
    fn dfs(&mut self, word: &mut Vec<(usize, usize)>, product: &Matrix, log_scale: f64, time: f64) -> Result<(), CycleError> {
        let first = word[0];
        let last_mode = word.last().unwrap().0;
        for j in 0..self.ops.len() {
            if j == last_mode {
                continue;
            }
            for k in 0..self.ops[j].len() {
                // rotation representative: the first block is the smallest
                if (j, k) < first {
                    continue;
                }
                let op = &self.ops[j][k];
                let (p, ls) = normalized_mul(&op.product, product, op.log_scale, log_scale)?;
                let t = time + op.time;
                word.push((j, k));
                if j != first.0 && is_min_rotation_blocks(word) {
                    let best_known = f64::from_bits(self.shared.load(AtomicOrdering::Relaxed));
                    // ‖p‖_F = 1, so ls/t bounds the log of the cycle value
                    if best_known <= 0.0 || ls / t >= best_known.ln() + (-TIE_TOL).ln_1p() {
                        let v = value_of(&p, ls, t)?;
                        if self.best.as_ref().is_none_or(|(bv, _)| v > *bv * (1.0 + TIE_TOL)) {
                            *self.best = Some((v, word.clone()));
                        }
                        self.shared.fetch_max(v.to_bits(), AtomicOrdering::Relaxed);
                    }
                }
                if word.len() < self.max_blocks {
                    self.dfs(word, &p, ls, t)?;
                }
                word.pop();
            }
        }
        Ok(())
    }
}

fn is_min_rotation_blocks(seq: &[(usize, usize)]) -> bool {
    let n = seq.len();
    (1..n).all(|k| seq.iter().cmp(seq[k..].iter().chain(&seq[..k])) != Ordering::Greater)
}

fn block_word_edges(g: &GraphSystem, word: &[(usize, usize)]) -> Vec<usize> {
    let nb = word.len();
    let mut edges = Vec::new();
    for b in 0..nb {
        let (j, k) = word[b];
        let prev = word[(b + nb - 1) % nb].0;
        edges.push(g.edge_index(prev, j).expect("switch edge"));
        edges.extend(std::iter::repeat_n(g.loop_edge(j), k));
    }
    edges
}

/// Settings for [`leading_cycle_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub enum_length: usize,
    pub enum_cap: u64,
    pub gripenberg: GripenbergConfig,
    pub blocks: Option<BlockSearchConfig>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            enum_length: DEFAULT_ENUM_LENGTH,
            enum_cap: DEFAULT_ENUM_CAP,
            gripenberg: GripenbergConfig::default(),
            blocks: Some(BlockSearchConfig::default()),
        }
    }
}

/// Runs enumeration (skipped when over budget), the beam search and the
/// block scan, and merges their candidates.
pub fn leading_cycle_search(g: &GraphSystem, cfg: &SearchConfig) -> Result<SearchResult, CycleError> {
    let mut candidates: Vec<Cycle> = Vec::new();
    match enumerate_cycles_capped(g, cfg.enum_length, cfg.enum_cap) {
        Ok(cs) => candidates.extend(cs.into_iter().take(cfg.gripenberg.max_candidates.max(1))),
        Err(CycleError::BudgetExceeded { paths, cap }) => {
            log::warn!("enumeration skipped: {paths} paths exceed the cap {cap}");
        }
        Err(e) => return Err(e),
    }
    candidates.extend(gripenberg_search(g, &cfg.gripenberg)?.candidates);
    if let Some(b) = &cfg.blocks {
        let floor = candidates.iter().map(|c| c.value).fold(0.0, f64::max);
        match block_search_above(g, b, floor) {
            Ok(r) => candidates.extend(r.candidates),
            Err(CycleError::BudgetExceeded { paths, cap }) => {
                log::warn!("block scan skipped: {paths} words exceed the cap {cap}");
            }
            Err(e) => return Err(e),
        }
    }
    candidates.sort_by(compare_cycles);
    // drop rotations and powers of the same cycle
    let mut seen: Vec<Vec<usize>> = Vec::new();
    candidates.retain(|c| {
        let key = min_rotation(primitive_root(c.edges()));
        if seen.contains(&key) {
            false
        } else {
            seen.push(key);
            true
        }
    });
    candidates.truncate(cfg.gripenberg.max_candidates.max(1));
    let best = candidates.first().cloned().ok_or(CycleError::NoCycleFound)?;
    Ok(SearchResult { best, candidates })
}

/// Shortest prefix whose repetition gives `seq`.
fn primitive_root(seq: &[usize]) -> &[usize] {
    let n = seq.len();
    let p = (1..n)
        .find(|&p| n.is_multiple_of(p) && seq.iter().zip(seq[p..].iter()).all(|(a, b)| a == b))
        .unwrap_or(n);
    &seq[..p]
}

fn min_rotation(seq: &[usize]) -> Vec<usize> {
    (0..seq.len())
        .map(|k| seq[k..].iter().chain(&seq[..k]).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

/// A cycle written as consecutive mode blocks `(mode, duration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellNotation {
    /// Zero-based mode indices with their total active times.
    pub blocks: Vec<(usize, f64)>,
}

/// Durations in product order: the block applied last is printed first.
impl fmt::Display for DwellNotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.blocks.iter().rev().map(|&(_, t)| format_duration(t)).collect();
        write!(f, "({})", parts.join("; "))
    }
}

/// Two decimals minimum, up to six, trailing zeros trimmed.
fn format_duration(t: f64) -> String {
    let s = format!("{t:.6}");
    let (int, frac) = s.split_once('.').unwrap();
    let mut frac = frac.trim_end_matches('0').to_string();
    while frac.len() < 2 {
        frac.push('0');
    }
    format!("{int}.{frac}")
}

/// Groups the cycle into mode blocks. Each switch edge into `j` followed by
/// `k` loops at `j` becomes `(j, m + k·h)`; a cycle made only of loops at
/// `j` becomes the single block `(j, k·h)`. The listing starts at the block
/// whose rotation is lexicographically smallest by `(mode, loop count)`.
pub fn to_dwell_notation(c: &Cycle, g: &GraphSystem) -> Result<DwellNotation, CycleError> {
    let edges = c.edges();
    if edges.is_empty() {
        return Err(CycleError::MalformedCycle("empty cycle".into()));
    }
    check_edges(g, edges)?;
    let first = g.edge(edges[0]);
    let last = g.edge(*edges.last().unwrap());
    if first.from != last.to {
        return Err(CycleError::NotClosed {
            start: first.from,
            end: last.to,
        });
    }
    let (h, m) = (g.step(), g.dwell_time());
    let switches: Vec<usize> = (0..edges.len())
        .filter(|&k| g.edge(edges[k]).kind == EdgeKind::Switch)
        .collect();
    if switches.is_empty() {
        let mode = first.to;
        if edges.iter().any(|&e| g.edge(e).to != mode) {
            return Err(CycleError::MalformedCycle("loop-only cycle changes mode".into()));
        }
        return Ok(DwellNotation {
            blocks: vec![(mode, edges.len() as f64 * h)],
        });
    }
    // (mode, loop count) per block, starting from the first switch.
    let len = edges.len();
    let mut blocks: Vec<(usize, usize)> = Vec::with_capacity(switches.len());
    for (b, &s) in switches.iter().enumerate() {
        let mode = g.edge(edges[s]).to;
        let next = if b + 1 < switches.len() {
            switches[b + 1]
        } else {
            switches[0] + len
        };
        for k in s + 1..next {
            let e = g.edge(edges[k % len]);
            if e.kind != EdgeKind::Loop || e.to != mode {
                return Err(CycleError::MalformedCycle(format!(
                    "edge {} inside a block of mode {mode}",
                    edges[k % len]
                )));
            }
        }
        blocks.push((mode, next - s - 1));
    }
    let nb = blocks.len();
    let best_rot = (0..nb)
        .min_by(|&a, &b| {
            let ra = blocks[a..].iter().chain(&blocks[..a]);
            let rb = blocks[b..].iter().chain(&blocks[..b]);
            ra.cmp(rb)
        })
        .unwrap();
    let rotated = blocks[best_rot..].iter().chain(&blocks[..best_rot]);
    Ok(DwellNotation {
        blocks: rotated.map(|&(j, k)| (j, m + k as f64 * h)).collect(),
    })
}

impl DwellNotation {
    /// Rebuilds an edge sequence in `g` realising this notation.
    pub fn to_edges(&self, g: &GraphSystem) -> Result<Vec<usize>, CycleError> {
        let (h, m) = (g.step(), g.dwell_time());
        let nb = self.blocks.len();
        if nb == 0 {
            return Err(CycleError::MalformedCycle("empty notation".into()));
        }
        let mut edges = Vec::new();
        if nb == 1 {
            let (j, t) = self.blocks[0];
            let k = (t / h).round() as usize;
            if j >= g.vertex_count() || k == 0 {
                return Err(CycleError::MalformedCycle("bad single block".into()));
            }
            edges.extend(std::iter::repeat_n(g.loop_edge(j), k));
            return Ok(edges);
        }
        for b in 0..nb {
            let (j, t) = self.blocks[b];
            let prev = self.blocks[(b + nb - 1) % nb].0;
            let e = g
                .edge_index(prev, j)
                .filter(|_| prev != j)
                .ok_or_else(|| CycleError::MalformedCycle(format!("no switch {prev} -> {j}")))?;
            edges.push(e);
            let k = ((t - m) / h).round();
            if k < 0.0 {
                return Err(CycleError::MalformedCycle(format!("block shorter than dwell time: {t}")));
            }
            edges.extend(std::iter::repeat_n(g.loop_edge(j), k as usize));
        }
        Ok(edges)
    }
}
