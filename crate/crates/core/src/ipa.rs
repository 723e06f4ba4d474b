//! Invariant polytope iteration on a graph system.
//!
//! Starting from the periodic trajectory of the leading cycle's eigenvector
//! (after normalizing the cycle value to one), every edge operator is applied
//! to the freshly added points; images that leave the current polytope of
//! their target mode become new vertices. When an iteration adds nothing, the
//! polytopes are invariant and form an extremal multinorm.

use rayon::prelude::*;
use thiserror::Error;

use crate::cycles::{Cycle, CycleError};
use crate::linalg::{self, LinalgError, Vector};
use crate::polytope::{self, Multinorm, PolytopeError, PolytopeNorm, Variant};
use crate::system::GraphSystem;

pub const DEFAULT_MAX_ITERATIONS: usize = 200;
pub const DEFAULT_MAX_VERTICES: usize = 20_000;
pub const DEFAULT_SLACK: f64 = 1e-10;
/// Absolute tolerance of [`verify_certificate`].
pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpaConfig {
    pub max_iterations: usize,
    pub max_vertices_per_mode: usize,
    /// Redundancy slack: a point with norm `≤ 1 + slack` counts as inside.
    pub slack: f64,
    pub positive_mode: bool,
    /// Extra growth rate `η ≥ 0` per unit time. The polytopes are built for
    /// `ρ̂·e^η`, which closes them in fewer steps when the leading cycle is
    /// only weakly dominant. A positive margin never yields `Certified`;
    /// ε is the defect measured at `ρ̂`.
    pub rate_margin: f64,
}

impl Default for IpaConfig {
    fn default() -> Self {
        IpaConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            max_vertices_per_mode: DEFAULT_MAX_VERTICES,
            slack: DEFAULT_SLACK,
            positive_mode: false,
            rate_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IpaStatus {
    Certified,
    Approximate,
}

#[derive(Debug, Error)]
pub enum IpaError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cycle has value {0}, expected a positive value")]
    ZeroCycle(f64),
    #[error("polytopes degenerate, no finite extremality defect: {0}")]
    VertexBudgetExceeded(String),
}

#[derive(Debug, Clone)]
pub struct MultinormCertificate {
    /// Growth rate per unit time the multinorm is built for.
    pub rho_hat: f64,
    pub multinorm: Multinorm,
    /// Per-unit-time defect: every edge satisfies
    /// `‖E_ji x‖_j ≤ ((1+ε)·rho_hat)^{h_ji} ‖x‖_i`.
    pub epsilon: f64,
    pub leading_cycle: Cycle,
    pub iterations_used: usize,
    pub status: IpaStatus,
    /// Measured defect of the final polytopes (`≤ slack`-sized when certified).
    pub residual: f64,
    pub step: f64,
    pub dwell_time: f64,
}

impl MultinormCertificate {
    /// `ln(rho_hat)`.
    pub fn sigma_lower(&self) -> f64 {
        self.rho_hat.ln()
    }

    /// `ln((1+ε)·rho_hat)`.
    pub fn sigma_upper(&self) -> f64 {
        self.rho_hat.ln() + self.epsilon.ln_1p()
    }

    pub fn is_certified(&self) -> bool {
        self.status == IpaStatus::Certified
    }

    pub fn total_vertices(&self) -> usize {
        self.multinorm.components.iter().map(|c| c.vertices().len()).sum()
    }
}

struct State {
    variant: Variant,
    vertices: Vec<Vec<Vector>>,
    /// Index of the first vertex not yet mapped forward, per mode.
    mapped: Vec<usize>,
}

impl State {
    fn gauge(&self, mode: usize, x: &Vector) -> Result<f64, PolytopeError> {
        polytope::gauge(&self.vertices[mode], self.variant, x)
    }

    /// Adds `x` to mode `j` unless it is already inside.
    fn offer(&mut self, j: usize, x: Vector, slack: f64) -> Result<bool, PolytopeError> {
        if self.gauge(j, &x)? <= 1.0 + slack {
            return Ok(false);
        }
        self.vertices[j].push(x);
        Ok(true)
    }
}

fn clean(x: Vector, variant: Variant) -> Vector {
    match variant {
        Variant::Positive => x.map(|v| v.max(0.0)),
        Variant::Symmetric => x,
    }
}

/// Runs the invariant polytope iteration for the candidate leading cycle `c`.
pub fn run_ipa(g: &GraphSystem, c: &Cycle, cfg: &IpaConfig) -> Result<MultinormCertificate, IpaError> {
    if cfg.max_iterations == 0 || cfg.max_vertices_per_mode == 0 {
        return Err(IpaError::InvalidConfig("caps must be positive".into()));
    }
    if !(cfg.slack >= 0.0) {
        return Err(IpaError::InvalidConfig(format!("slack must be >= 0, got {}", cfg.slack)));
    }
    if !(cfg.rate_margin >= 0.0 && cfg.rate_margin.is_finite()) {
        return Err(IpaError::InvalidConfig(format!("rate margin must be finite and >= 0, got {}", cfg.rate_margin)));
    }
    // Recompute against this graph so a cycle from elsewhere is rejected.
    let c = Cycle::from_edges(g, c.edges())?;
    if !(c.value > 0.0) {
        return Err(IpaError::ZeroCycle(c.value));
    }
    let variant = if cfg.positive_mode {
        Variant::Positive
    } else {
        Variant::Symmetric
    };
    let mut gs = g.shifted(c.value.ln());
    let mut gi = g.shifted(c.value.ln() + cfg.rate_margin);
    if cfg.positive_mode {
        gs = gs.clamped_nonnegative();
        gi = gi.clamped_nonnegative();
    }
    let n = g.vertex_count();
    let space = linalg::leading_eigenspace(&c.path.product)?;

    let mut st = State {
        variant,
        vertices: vec![Vec::new(); n],
        mapped: vec![0; n],
    };
    let start = c.path.start_vertex;
    let edges = c.edges();
    for x0 in space.basis {
        let mut x = clean(x0, variant);
        st.offer(start, x.clone(), cfg.slack)?;
        for &e in &edges[..edges.len() - 1] {
            let edge = gi.edge(e);
            x = clean(&edge.operator * &x, variant);
            st.offer(edge.to, x.clone(), cfg.slack)?;
        }
    }

    let mut iterations = 0;
    let mut completed = false;
    let status = loop {
        if iterations >= cfg.max_iterations {
            break IpaStatus::Approximate;
        }
        iterations += 1;
        let added = step(&gi, &mut st, cfg.slack)?;
        log::debug!(
            "ipa iteration {iterations}: {added} new vertices, sizes {:?}",
            st.vertices.iter().map(Vec::len).collect::<Vec<_>>()
        );
        if st.vertices.iter().any(|v| v.len() > cfg.max_vertices_per_mode) {
            break IpaStatus::Approximate;
        }
        if added == 0 {
            if spans(&st) {
                break if cfg.rate_margin > 0.0 {
                    IpaStatus::Approximate
                } else {
                    IpaStatus::Certified
                };
            }
            if completed {
                return Err(IpaError::VertexBudgetExceeded(
                    "invariant polytopes do not span the space".into(),
                ));
            }
            complete(&mut st);
            completed = true;
        }
    };

    if status == IpaStatus::Approximate && !spans(&st) {
        complete(&mut st);
    }
    let components = st
        .vertices
        .into_iter()
        .map(|v| PolytopeNorm::new(v, variant))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| IpaError::VertexBudgetExceeded(e.to_string()))?;
    let multinorm = Multinorm::new(components)?;
    let residual = polytope::check_extremality(&gs, &multinorm, 1.0)?;
    if !residual.is_finite() {
        return Err(IpaError::VertexBudgetExceeded("infinite extremality defect".into()));
    }
    let epsilon = match status {
        IpaStatus::Certified => 0.0,
        IpaStatus::Approximate => residual,
    };
    Ok(MultinormCertificate {
        rho_hat: c.value,
        multinorm,
        epsilon,
        leading_cycle: c,
        iterations_used: iterations,
        status,
        residual,
        step: g.step(),
        dwell_time: g.dwell_time(),
    })
}

/// One iteration: maps every vertex added since the last call along every
/// outgoing edge, tests the images against a snapshot in parallel, then
/// merges the survivors in deterministic order.
fn step(gs: &GraphSystem, st: &mut State, slack: f64) -> Result<usize, IpaError> {
    let n = gs.vertex_count();
    let mut candidates: Vec<(usize, Vector)> = Vec::new();
    for i in 0..n {
        for v in &st.vertices[i][st.mapped[i]..] {
            for &e in gs.outgoing(i) {
                let edge = gs.edge(e);
                candidates.push((edge.to, clean(&edge.operator * v, st.variant)));
            }
        }
    }
    for i in 0..n {
        st.mapped[i] = st.vertices[i].len();
    }
    let snapshot = &*st;
    let outside: Vec<bool> = candidates
        .par_iter()
        .map(|(j, x)| Ok(snapshot.gauge(*j, x)? > 1.0 + slack))
        .collect::<Result<_, PolytopeError>>()?;
    let mut added = 0;
    for ((j, x), out) in candidates.into_iter().zip(outside) {
        // A survivor may be swallowed by points accepted just before it.
        if out && st.offer(j, x, slack)? {
            added += 1;
        }
    }
    Ok(added)
}

fn spans(st: &State) -> bool {
    st.vertices
        .iter()
        .all(|v| !v.is_empty() && PolytopeNorm::new(v.clone(), st.variant).is_ok())
}

/// Adds a small cross-polytope to modes whose polytope is flat, so that the
/// iteration can continue towards a full-dimensional invariant set.
fn complete(st: &mut State) {
    let d = st.vertices.iter().find_map(|v| v.first().map(|x| x.len())).unwrap_or(0);
    let scale = st
        .vertices
        .iter()
        .flatten()
        .map(|x| x.amax())
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
        * 1e-3;
    for vs in &mut st.vertices {
        if PolytopeNorm::new(vs.clone(), st.variant).is_ok() {
            continue;
        }
        for k in 0..d {
            let mut e = Vector::zeros(d);
            e[k] = scale;
            vs.push(e);
        }
    }
}

/// One violated containment found by [`verify_certificate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub edge: usize,
    pub vertex: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub shape_ok: bool,
    pub cycle_ok: bool,
    pub violations: Vec<Violation>,
    /// Largest `lhs − rhs` over all checks.
    pub worst_margin: f64,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.shape_ok && self.cycle_ok && self.violations.is_empty()
    }
}

/// Rechecks every edge/vertex containment with fresh LPs:
/// `‖E_ji v‖_j ≤ ((1+ε)ρ̂)^{h_ji} ‖v‖_i + 1e-9`, and `ρ̂` equal to the cycle value.
pub fn verify_certificate(g: &GraphSystem, cert: &MultinormCertificate) -> Verification {
    let m = &cert.multinorm;
    let shape_ok = m.len() == g.vertex_count()
        && m.dim() == g.dim()
        && (cert.step - g.step()).abs() <= 1e-12 * g.step()
        && (cert.dwell_time - g.dwell_time()).abs() <= 1e-12 * g.dwell_time()
        && cert.rho_hat > 0.0
        && cert.epsilon >= 0.0;
    if !shape_ok {
        return Verification {
            shape_ok,
            cycle_ok: false,
            violations: Vec::new(),
            worst_margin: f64::INFINITY,
        };
    }
    let cycle_ok = match Cycle::from_edges(g, cert.leading_cycle.edges()) {
        Ok(c) => (cert.rho_hat - c.value).abs() <= 1e-9 * c.value,
        Err(_) => false,
    };
    let rate = (1.0 + cert.epsilon) * cert.rho_hat;
    let jobs: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(ei, e)| (0..m.components[e.from].vertices().len()).map(move |vi| (ei, vi)))
        .collect();
    let results: Vec<(usize, usize, f64, f64)> = jobs
        .par_iter()
        .map(|&(ei, vi)| {
            let e = g.edge(ei);
            let v = &m.components[e.from].vertices()[vi];
            let target = &m.components[e.to];
            let img = &e.operator * v;
            let lhs = target.norm_eval(&img).unwrap_or(f64::INFINITY);
            let src = m.components[e.from].norm_eval(v).unwrap_or(f64::NAN);
            let rhs = rate.powf(e.duration) * src + VERIFY_TOL;
            (ei, vi, lhs, rhs)
        })
        .collect();
    let mut worst_margin = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for (edge, vertex, lhs, rhs) in results {
        let margin = lhs - rhs;
        worst_margin = worst_margin.max(if margin.is_nan() { f64::INFINITY } else { margin });
        if !(lhs <= rhs) {
            violations.push(Violation { edge, vertex, lhs, rhs });
        }
    }
    Verification {
        shape_ok,
        cycle_ok,
        violations,
        worst_margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{leading_cycle_search, SearchConfig};
    use crate::io::generate::{generate, Family, GeneratorParams};
    use crate::linalg::Matrix;
    use crate::system::tests::example1;
    use crate::system::{build_discretization, validate_system, SwitchingSystem};

    fn certify(sys: &SwitchingSystem, h: f64, cfg: &IpaConfig) -> (GraphSystem, MultinormCertificate) {
        let g = build_discretization(sys, h).unwrap();
        let c = leading_cycle_search(&g, &SearchConfig::default()).unwrap().best;
        let cert = run_ipa(&g, &c, cfg).unwrap();
        (g, cert)
    }

    #[test]
    fn zero_regime() {
        let sys = validate_system(vec![Matrix::zeros(3, 3)], 0.7).unwrap();
        let (g, cert) = certify(&sys, 0.35, &IpaConfig::default());
        assert!(cert.is_certified());
        assert_eq!(cert.rho_hat, 1.0);
        assert_eq!(cert.epsilon, 0.0);
        assert!(verify_certificate(&g, &cert).passed());
    }

    #[test]
    fn example1_certified() {
        let (g, cert) = certify(&example1(), 0.2, &IpaConfig::default());
        assert!(cert.is_certified());
        assert!((cert.rho_hat - 1.0331).abs() < 1e-3, "{}", cert.rho_hat);
        assert!(cert.residual <= 1e-8);
        let v = verify_certificate(&g, &cert);
        assert!(v.passed(), "{v:?}");
    }

    #[test]
    fn seeds_on_boundary() {
        let (g, cert) = certify(&example1(), 0.2, &IpaConfig::default());
        // The leading trajectory of the normalized operators is periodic, so
        // it lies on the boundary of every invariant multinorm.
        let c = &cert.leading_cycle;
        let space = linalg::leading_eigenspace(&c.path.product).unwrap();
        let gs = g.shifted(cert.rho_hat.ln());
        let norms = &cert.multinorm.components;
        let mut x = space.basis[0].clone();
        let x0 = norms[c.path.start_vertex].norm_eval(&x).unwrap();
        for &e in c.edges() {
            let edge = gs.edge(e);
            x = &edge.operator * &x;
            let n = norms[edge.to].norm_eval(&x).unwrap();
            assert!((n - x0).abs() < 1e-8 * x0, "{n} vs {x0}");
        }
    }

    #[test]
    fn truncated_runs_nest() {
        let sys = example1();
        let (_, full) = certify(&sys, 0.2, &IpaConfig::default());
        for k in 1..5 {
            let cfg = IpaConfig {
                max_iterations: k,
                ..IpaConfig::default()
            };
            let (_, part) = certify(&sys, 0.2, &cfg);
            assert_eq!(part.status, IpaStatus::Approximate);
            assert!(part.epsilon >= 0.0 && part.epsilon.is_finite());
            for (p, f) in part.multinorm.components.iter().zip(&full.multinorm.components) {
                for v in p.vertices() {
                    if v.amax() < 1e-2 {
                        continue; // completion vertices
                    }
                    assert!(f.norm_eval(v).unwrap() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let sys = example1();
        let (_, a) = certify(&sys, 0.2, &IpaConfig::default());
        let (g, b) = certify(&sys.permuted(&[1, 0]), 0.2, &IpaConfig::default());
        assert!((a.rho_hat - b.rho_hat).abs() < 1e-12 * a.rho_hat);
        assert!(b.is_certified());
        assert!(verify_certificate(&g, &b).passed());
    }

    #[test]
    fn halved_rho_rejected() {
        let (g, mut cert) = certify(&example1(), 0.2, &IpaConfig::default());
        cert.rho_hat *= 0.5;
        let v = verify_certificate(&g, &cert);
        assert!(!v.cycle_ok);
        assert!(!v.violations.is_empty());
        assert!(!v.passed());
    }

    #[test]
    fn positive_mode_metzler() {
        for seed in 0..4 {
            let sys = generate(&GeneratorParams {
                family: Family::Metzler,
                dim: 4,
                modes: 2,
                dwell_time: None,
                seed,
            })
            .unwrap();
            let h = sys.dwell_time() / 4.0;
            let cfg = IpaConfig {
                positive_mode: true,
                ..IpaConfig::default()
            };
            let (g, cert) = certify(&sys, h, &cfg);
            assert_eq!(cert.multinorm.variant(), Variant::Positive);
            for c in &cert.multinorm.components {
                assert!(c.vertices().iter().flatten().all(|&x| x >= 0.0));
                // The positive hull contains the symmetric one on the orthant.
                let sym = PolytopeNorm::new(c.vertices().to_vec(), Variant::Symmetric);
                if let Ok(sym) = sym {
                    for v in c.vertices() {
                        let x = v.map(|t| t * 0.5 + 0.01);
                        assert!(c.norm_eval(&x).unwrap() <= sym.norm_eval(&x).unwrap() + 1e-9);
                    }
                }
            }
            assert!(verify_certificate(&g, &cert).passed(), "seed {seed}");
        }
    }

    #[test]
    fn bad_config() {
        let g = build_discretization(&example1(), 0.2).unwrap();
        let c = leading_cycle_search(&g, &SearchConfig::default()).unwrap().best;
        let cfg = IpaConfig {
            max_iterations: 0,
            ..IpaConfig::default()
        };
        assert!(matches!(run_ipa(&g, &c, &cfg), Err(IpaError::InvalidConfig(_))));
        let cfg = IpaConfig {
            rate_margin: -0.1,
            ..IpaConfig::default()
        };
        assert!(matches!(run_ipa(&g, &c, &cfg), Err(IpaError::InvalidConfig(_))));
    }

    #[test]
    fn rate_margin_bounds_epsilon() {
        let eta = 0.05;
        let cfg = IpaConfig {
            rate_margin: eta,
            ..IpaConfig::default()
        };
        let (g, cert) = certify(&example1(), 0.2, &cfg);
        let (_, exact) = certify(&example1(), 0.2, &IpaConfig::default());
        assert_eq!(cert.status, IpaStatus::Approximate);
        assert!(cert.epsilon <= eta.exp_m1() + 1e-9, "{}", cert.epsilon);
        assert_eq!(cert.rho_hat, exact.rho_hat);
        assert!(cert.sigma_upper() >= cert.sigma_lower());
        assert!(cert.total_vertices() <= exact.total_vertices());
        let v = verify_certificate(&g, &cert);
        assert!(v.passed(), "{v:?}");
    }
}
