//! Continuous-time switching systems with a dwell time and their
//! h-discretization as a dynamical system on a complete graph.

use log::warn;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("the family of regimes is empty")]
    EmptyFamily,
    #[error("regime {index} is {rows}x{cols}, expected {dim}x{dim}")]
    DimensionMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("dwell time must be positive and finite, got {0}")]
    NonpositiveDwellTime(f64),
    #[error("regime {index} has a non-finite entry")]
    NonFiniteEntry { index: usize },
    #[error("label count {labels} does not match regime count {regimes}")]
    LabelCount { labels: usize, regimes: usize },
    #[error("step h = {h} exceeds the dwell time m = {m}")]
    StepTooLarge { h: f64, m: f64 },
    #[error("step must be positive and finite, got {0}")]
    StepNonpositive(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSystem {
    matrices: Vec<Matrix>,
    dim: usize,
    dwell_time: f64,
    labels: Option<Vec<String>>,
}

impl SwitchingSystem {
    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dwell_time(&self) -> f64 {
        self.dwell_time
    }

    pub fn mode_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Display name of mode `j` (zero-based); defaults to `A1`, `A2`, ...
    pub fn label(&self, j: usize) -> String {
        match &self.labels {
            Some(l) => l[j].clone(),
            None => format!("A{}", j + 1),
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, SystemError> {
        if labels.len() != self.matrices.len() {
            return Err(SystemError::LabelCount {
                labels: labels.len(),
                regimes: self.matrices.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Same system with regimes reordered: new regime `k` is old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        SwitchingSystem {
            matrices: perm.iter().map(|&p| self.matrices[p].clone()).collect(),
            dim: self.dim,
            dwell_time: self.dwell_time,
            labels: self
                .labels
                .as_ref()
                .map(|l| perm.iter().map(|&p| l[p].clone()).collect()),
        }
    }
}

/// Validates the regimes and dwell time. Duplicate regimes are accepted with
/// a logged warning.
pub fn validate_system(matrices: Vec<Matrix>, dwell_time: f64) -> Result<SwitchingSystem, SystemError> {
    let first = matrices.first().ok_or(SystemError::EmptyFamily)?;
    let dim = first.nrows();
    for (index, a) in matrices.iter().enumerate() {
        if a.nrows() != dim || a.ncols() != dim || dim == 0 {
            return Err(SystemError::DimensionMismatch {
                index,
                rows: a.nrows(),
                cols: a.ncols(),
                dim,
            });
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(SystemError::NonFiniteEntry { index });
        }
    }
    if !(dwell_time > 0.0 && dwell_time.is_finite()) {
        return Err(SystemError::NonpositiveDwellTime(dwell_time));
    }
    for i in 0..matrices.len() {
        for j in i + 1..matrices.len() {
            if matrices[i] == matrices[j] {
                warn!("regimes {} and {} are identical", i + 1, j + 1);
            }
        }
    }
    Ok(SwitchingSystem {
        matrices,
        dim,
        dwell_time,
        labels: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// `e^{hA_j}`, stays in mode `j`.
    Loop,
    /// `e^{mA_j}`, switches into mode `j`.
    Switch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub operator: Matrix,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSystem {
    vertex_count: usize,
    dim: usize,
    step: f64,
    dwell_time: f64,
    edges: Vec<Edge>,
    /// `outgoing[i]` lists edge indices leaving vertex `i`, ascending.
    outgoing: Vec<Vec<usize>>,
}

impl GraphSystem {
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dwell_time(&self) -> f64 {
        self.dwell_time
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn outgoing(&self, vertex: usize) -> &[usize] {
        &self.outgoing[vertex]
    }

    /// Index of the loop at vertex `j`.
    pub fn loop_edge(&self, j: usize) -> usize {
        j
    }

    /// Index of the edge `from -> to`, if present.
    pub fn edge_index(&self, from: usize, to: usize) -> Option<usize> {
        self.outgoing[from]
            .iter()
            .copied()
            .find(|&e| self.edges[e].to == to)
    }

    /// Every edge operator multiplied by `e^{-σ·duration}`.
    pub fn shifted(&self, sigma: f64) -> GraphSystem {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.operator *= (-sigma * e.duration).exp();
        }
        g
    }

    /// Negative operator entries replaced by zero.
    ///
    /// For Metzler regimes the exact exponentials are nonnegative; this only
    /// removes rounding noise of the order of machine epsilon.
    pub fn clamped_nonnegative(&self) -> GraphSystem {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.operator.apply(|x| *x = x.max(0.0));
        }
        g
    }
}

/// The h-discretization: loops `e^{hA_j}` of duration `h` and cross edges
/// `i -> j` carrying `e^{mA_j}` of duration `m`.
///
/// Edge order: the `n` loops by mode, then cross edges sorted by `(to, from)`.
pub fn build_discretization(sys: &SwitchingSystem, h: f64) -> Result<GraphSystem, SystemError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SystemError::StepNonpositive(h));
    }
    let m = sys.dwell_time();
    if h > m {
        return Err(SystemError::StepTooLarge { h, m });
    }
    let n = sys.mode_count();
    let loop_ops: Vec<Matrix> = sys
        .matrices()
        .iter()
        .map(|a| linalg::mat_exp(a, h))
        .collect::<Result<_, _>>()?;
    let switch_ops: Vec<Matrix> = if n > 1 {
        sys.matrices()
            .iter()
            .map(|a| linalg::mat_exp(a, m))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let mut edges = Vec::with_capacity(n * n);
    for (j, op) in loop_ops.into_iter().enumerate() {
        edges.push(Edge {
            from: j,
            to: j,
            kind: EdgeKind::Loop,
            operator: op,
            duration: h,
        });
    }
    for (j, op) in switch_ops.iter().enumerate() {
        for i in (0..n).filter(|&i| i != j) {
            edges.push(Edge {
                from: i,
                to: j,
                kind: EdgeKind::Switch,
                operator: op.clone(),
                duration: m,
            });
        }
    }
    let mut outgoing = vec![Vec::new(); n];
    for (idx, e) in edges.iter().enumerate() {
        outgoing[e.from].push(idx);
    }
    Ok(GraphSystem {
        vertex_count: n,
        dim: sys.dim(),
        step: h,
        dwell_time: m,
        edges,
        outgoing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSystem {
    pub base: SwitchingSystem,
    pub shift: f64,
}

impl ShiftedSystem {
    /// Regime `j` minus `σI`.
    pub fn regime(&self, j: usize) -> Matrix {
        let a = &self.base.matrices()[j];
        a - Matrix::identity(a.nrows(), a.ncols()) * self.shift
    }

    pub fn regimes(&self) -> Vec<Matrix> {
        (0..self.base.mode_count()).map(|j| self.regime(j)).collect()
    }
}

pub fn shift_system(sys: &SwitchingSystem, sigma: f64) -> ShiftedSystem {
    ShiftedSystem {
        base: sys.clone(),
        shift: sigma,
    }
}

/// True when every regime has nonnegative off-diagonal entries.
pub fn is_metzler(sys: &SwitchingSystem) -> bool {
    sys.matrices().iter().all(matrix_is_metzler)
}

pub fn matrix_is_metzler(a: &Matrix) -> bool {
    (0..a.nrows()).all(|r| (0..a.ncols()).all(|c| r == c || a[(r, c)] >= 0.0))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn example1() -> SwitchingSystem {
        let c = 1.0 / (2f64.sqrt() + 2.0);
        let a1 = Matrix::from_row_slice(2, 2, &[0.0, 0.0, c, 0.0]);
        let a2 = Matrix::from_row_slice(2, 2, &[-2.0 * c, -2.0 * c, -c, -2.0 * c]);
        validate_system(vec![a1, a2], 1.0).unwrap()
    }

    pub fn example2() -> SwitchingSystem {
        let a1 = Matrix::from_row_slice(
            4,
            4,
            &[-1., -1., 1., -1., 1., -1., -1., -1., 1., 1., -1., -1., 1., -1., 1., -1.],
        );
        let a2 = Matrix::from_row_slice(
            4,
            4,
            &[-1., -1., -1., -1., 1., -1., 1., 1., -1., 1., -1., -1., 1., -1., 1., 1.],
        );
        validate_system(vec![a1, a2], 0.5).unwrap()
    }

    #[test]
    fn validate_example1() {
        let s = example1();
        assert_eq!(s.mode_count(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.dwell_time(), 1.0);
    }

    #[test]
    fn validate_errors() {
        assert_eq!(validate_system(vec![], 1.0), Err(SystemError::EmptyFamily));
        assert!(matches!(
            validate_system(vec![Matrix::zeros(2, 2), Matrix::zeros(3, 3)], 1.0),
            Err(SystemError::DimensionMismatch { index: 1, .. })
        ));
        assert!(matches!(
            validate_system(vec![Matrix::zeros(2, 2)], -1.0),
            Err(SystemError::NonpositiveDwellTime(_))
        ));
        assert!(matches!(
            validate_system(vec![Matrix::from_element(2, 2, f64::INFINITY)], 1.0),
            Err(SystemError::NonFiniteEntry { index: 0 })
        ));
        // duplicates are fine
        assert!(validate_system(vec![Matrix::zeros(2, 2), Matrix::zeros(2, 2)], 1.0).is_ok());
    }

    #[test]
    fn discretization_shapes() {
        let g = build_discretization(&example1(), 0.2).unwrap();
        assert_eq!(g.edges().len(), 4);
        assert_eq!(g.edges().iter().filter(|e| e.kind == EdgeKind::Loop).count(), 2);

        let three = validate_system(vec![Matrix::identity(2, 2); 3], 1.0).unwrap();
        let g3 = build_discretization(&three, 0.5).unwrap();
        assert_eq!(g3.edges().len(), 9);
        for v in 0..3 {
            assert_eq!(g3.edges().iter().filter(|e| e.to == v).count(), 3);
        }
        let order: Vec<(usize, usize)> = g3.edges().iter().map(|e| (e.from, e.to)).collect();
        assert_eq!(
            order,
            vec![(0, 0), (1, 1), (2, 2), (1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (1, 2)]
        );

        let one = validate_system(vec![Matrix::identity(2, 2)], 1.0).unwrap();
        let g1 = build_discretization(&one, 0.5).unwrap();
        assert_eq!(g1.edges().len(), 1);
        assert_eq!(g1.edges()[0].kind, EdgeKind::Loop);
    }

    #[test]
    fn discretization_operators() {
        let s = example1();
        let g = build_discretization(&s, 0.2).unwrap();
        let e = g.edge(g.edge_index(0, 1).unwrap());
        assert_eq!(e.duration, 1.0);
        assert_eq!(e.operator, linalg::mat_exp(&s.matrices()[1], 1.0).unwrap());
        assert_eq!(g.edge(g.loop_edge(0)).duration, 0.2);
    }

    #[test]
    fn step_limits() {
        let s = example1();
        assert!(matches!(
            build_discretization(&s, 1.5),
            Err(SystemError::StepTooLarge { .. })
        ));
        assert!(matches!(
            build_discretization(&s, 0.0),
            Err(SystemError::StepNonpositive(_))
        ));
        assert!(build_discretization(&s, 1.0).is_ok());
    }

    #[test]
    fn shift_examples() {
        let d = validate_system(vec![Matrix::from_diagonal(&nalgebra::dvector![1.0, 2.0])], 1.0).unwrap();
        assert_eq!(shift_system(&d, 0.0).regime(0), d.matrices()[0]);
        assert_eq!(
            shift_system(&d, 1.0).regime(0),
            Matrix::from_diagonal(&nalgebra::dvector![0.0, 1.0])
        );
    }

    #[test]
    fn shift_rescales_edges() {
        let s = example1();
        let sigma = 0.0325;
        let g = build_discretization(&s, 0.2).unwrap().shifted(sigma);
        let shifted = shift_system(&s, sigma);
        let direct = validate_system(shifted.regimes(), 1.0).unwrap();
        let g2 = build_discretization(&direct, 0.2).unwrap();
        for (a, b) in g.edges().iter().zip(g2.edges()) {
            let diff = (&a.operator - &b.operator).abs().max();
            assert!(diff <= 1e-12 * b.operator.abs().max());
        }
    }

    #[test]
    fn metzler_examples() {
        let s = example1();
        assert!(matrix_is_metzler(&s.matrices()[0]));
        assert!(!matrix_is_metzler(&s.matrices()[1]));
        assert!(!is_metzler(&s));
        assert!(matrix_is_metzler(&Matrix::zeros(3, 3)));
    }
}
