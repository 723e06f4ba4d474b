//! Polytope norms given by vertex lists.
//!
//! Two flavours: the symmetric hull `co_s(V) = conv(V ∪ −V)` and, for
//! nonnegative vertex sets, the positive hull
//! `co₊(V) = {x ≥ 0 : x ≤ y for some y ∈ co_s(V)}`. The Minkowski functional
//! of either is one LP over the vertex coefficients; no facet description is
//! ever built.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Matrix, Vector};
use crate::lp::{LpError, StandardLp};
use crate::system::GraphSystem;

/// Entries of a positive-variant argument may dip this far below zero
/// (relative to the largest entry) before it counts as leaving the orthant.
const ORTHANT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolytopeError {
    #[error("vertices do not span the space (rank {rank} < {dim})")]
    DegenerateBall { rank: usize, dim: usize },
    #[error("positive-variant argument has a negative entry {value} at {index}")]
    NegativeInput { index: usize, value: f64 },
    #[error("image of a vertex leaves the nonnegative orthant")]
    OrthantViolation,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vertex set is empty")]
    Empty,
    #[error("positive variant needs nonnegative vertices")]
    NegativeVertex,
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Symmetric,
    Positive,
}

/// Minkowski functional of `co_s(V)` or `co₊(V)`; `+∞` when `x` is outside
/// the cone/span generated by the vertices.
pub fn gauge(vertices: &[Vector], variant: Variant, x: &Vector) -> Result<f64, PolytopeError> {
    let d = x.len();
    if let Some(v) = vertices.iter().find(|v| v.len() != d) {
        return Err(PolytopeError::DimensionMismatch {
            expected: d,
            got: v.len(),
        });
    }
    let xmax = x.amax();
    if xmax == 0.0 {
        return Ok(0.0);
    }
    let k = vertices.len();
    let lp = match variant {
        Variant::Symmetric => {
            // x = Σ (λ⁺ᵢ − λ⁻ᵢ) vᵢ, minimise Σ λ⁺ + λ⁻
            let mut lp = StandardLp::new(d, 2 * k);
            for (i, v) in vertices.iter().enumerate() {
                for r in 0..d {
                    lp.set(r, i, v[r]);
                    lp.set(r, k + i, -v[r]);
                }
            }
            lp.c = vec![1.0; 2 * k];
            lp.b = x.iter().copied().collect();
            lp
        }
        Variant::Positive => {
            let ax = positive_part(x)?;
            // Σ λᵢ vᵢ − s = |x|, minimise Σ λ
            let mut lp = StandardLp::new(d, k + d);
            for (i, v) in vertices.iter().enumerate() {
                for r in 0..d {
                    lp.set(r, i, v[r]);
                }
            }
            for r in 0..d {
                lp.set(r, k + r, -1.0);
            }
            lp.c = (0..k + d).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
            lp.b = ax.iter().copied().collect();
            lp
        }
    };
    match lp.solve() {
        Ok(sol) => Ok(sol.objective),
        Err(LpError::Infeasible(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e.into()),
    }
}

fn positive_part(x: &Vector) -> Result<Vector, PolytopeError> {
    let tol = ORTHANT_TOL * x.amax();
    for (index, &value) in x.iter().enumerate() {
        if value < -tol {
            return Err(PolytopeError::NegativeInput { index, value });
        }
    }
    Ok(x.abs())
}

fn rank(vertices: &[Vector], dim: usize) -> usize {
    if vertices.is_empty() {
        return 0;
    }
    let m = Matrix::from_columns(vertices);
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-12 * top).count().min(dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeNorm {
    dim: usize,
    vertices: Vec<Vector>,
    variant: Variant,
}

impl PolytopeNorm {
    pub fn new(vertices: Vec<Vector>, variant: Variant) -> Result<Self, PolytopeError> {
        let dim = vertices.first().ok_or(PolytopeError::Empty)?.len();
        if let Some(v) = vertices.iter().find(|v| v.len() != dim) {
            return Err(PolytopeError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        match variant {
            Variant::Symmetric => {
                let r = rank(&vertices, dim);
                if r < dim {
                    return Err(PolytopeError::DegenerateBall { rank: r, dim });
                }
            }
            Variant::Positive => {
                if vertices.iter().flatten().any(|&x| x < 0.0) {
                    return Err(PolytopeError::NegativeVertex);
                }
                // Needs a strictly positive combination, i.e. every
                // coordinate is hit by some vertex.
                let sum = vertices.iter().fold(Vector::zeros(dim), |acc, v| acc + v);
                let covered = sum.iter().filter(|&&s| s > 0.0).count();
                if covered < dim {
                    return Err(PolytopeError::DegenerateBall { rank: covered, dim });
                }
            }
        }
        Ok(PolytopeNorm {
            dim,
            vertices,
            variant,
        })
    }

    /// Unit cross-polytope (the ℓ¹ ball) in `ℝ^d`.
    pub fn cross_polytope(dim: usize, variant: Variant) -> Self {
        let vertices = (0..dim)
            .map(|i| {
                let mut e = Vector::zeros(dim);
                e[i] = 1.0;
                e
            })
            .collect();
        PolytopeNorm {
            dim,
            vertices,
            variant,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn norm_eval(&self, x: &Vector) -> Result<f64, PolytopeError> {
        if x.len() != self.dim {
            return Err(PolytopeError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        gauge(&self.vertices, self.variant, x)
    }

    pub fn contains(&self, x: &Vector, slack: f64) -> Result<bool, PolytopeError> {
        Ok(self.norm_eval(x)? <= 1.0 + slack)
    }
}

/// `max_{v ∈ V(from)} ‖Bv‖_to`, the induced norm of `B`.
///
/// For the positive variant `B` must map the vertices into the orthant.
pub fn operator_norm(b: &Matrix, from: &PolytopeNorm, to: &PolytopeNorm) -> Result<f64, PolytopeError> {
    if b.ncols() != from.dim() || b.nrows() != to.dim() {
        return Err(PolytopeError::DimensionMismatch {
            expected: from.dim(),
            got: b.ncols(),
        });
    }
    let norms: Vec<f64> = from
        .vertices()
        .par_iter()
        .map(|v| {
            let img = b * v;
            match to.variant() {
                Variant::Positive => {
                    let tol = ORTHANT_TOL * img.amax().max(b.amax() * v.amax());
                    if img.iter().any(|&x| x < -tol) {
                        return Err(PolytopeError::OrthantViolation);
                    }
                    to.norm_eval(&img.map(|x| x.max(0.0)))
                }
                Variant::Symmetric => to.norm_eval(&img),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// Upper bound on the induced norm valid for any `B`.
///
/// Symmetric variant: exact, same as [`operator_norm`]. Positive variant:
/// the norm of `|B|` (entrywise absolute value). On the orthant the
/// positive-hull norm extends to `‖x‖ = ‖|x|‖₊`, which is monotone, and
/// `|Bx| ≤ |B||x|`, so this bounds the induced norm of the extension.
pub fn operator_norm_upper(b: &Matrix, from: &PolytopeNorm, to: &PolytopeNorm) -> Result<f64, PolytopeError> {
    match to.variant() {
        Variant::Symmetric => operator_norm(b, from, to),
        Variant::Positive => operator_norm(&b.abs(), from, to),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multinorm {
    pub components: Vec<PolytopeNorm>,
}

impl Multinorm {
    pub fn new(components: Vec<PolytopeNorm>) -> Result<Self, PolytopeError> {
        let first = components.first().ok_or(PolytopeError::Empty)?;
        let (dim, variant) = (first.dim(), first.variant());
        for c in &components {
            if c.dim() != dim {
                return Err(PolytopeError::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
            if c.variant() != variant {
                return Err(PolytopeError::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        Ok(Multinorm { components })
    }

    pub fn variant(&self) -> Variant {
        self.components[0].variant()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Smallest `ε ≥ 0` with `‖E_ji x‖_j ≤ ((1+ε)ρ)^{h_ji} ‖x‖_i` on every edge.
///
/// `ε = 0` means the multinorm is extremal for growth rate `ρ`. The factor
/// is per unit time so that `(1+ε)ρ` is itself a valid rate for which the
/// multinorm is extremal.
pub fn check_extremality(g: &GraphSystem, m: &Multinorm, rho: f64) -> Result<f64, PolytopeError> {
    Ok(edge_ratios(g, m, rho)?
        .into_iter()
        .map(|(_, ratio)| ratio)
        .fold(0.0, f64::max))
}

/// Per-edge excess growth `max_v (‖E_ji v‖_j / ρ^{h})^{1/h} − 1`, clamped at 0.
pub fn edge_ratios(g: &GraphSystem, m: &Multinorm, rho: f64) -> Result<Vec<(usize, f64)>, PolytopeError> {
    if m.len() != g.vertex_count() {
        return Err(PolytopeError::DimensionMismatch {
            expected: g.vertex_count(),
            got: m.len(),
        });
    }
    if m.dim() != g.dim() {
        return Err(PolytopeError::DimensionMismatch {
            expected: g.dim(),
            got: m.dim(),
        });
    }
    let jobs: Vec<(usize, &Vector)> = g
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(idx, e)| m.components[e.from].vertices().iter().map(move |v| (idx, v)))
        .collect();
    let vals: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(idx, v)| {
            let e = g.edge(idx);
            let target = &m.components[e.to];
            let img = &e.operator * v;
            let img = match target.variant() {
                Variant::Positive => img.map(|x| x.max(0.0)),
                Variant::Symmetric => img,
            };
            let n = target.norm_eval(&img)?;
            let ratio = n / rho.powf(e.duration);
            Ok((idx, (ratio.powf(1.0 / e.duration) - 1.0).max(0.0)))
        })
        .collect::<Result<_, PolytopeError>>()?;
    let mut per_edge = vec![0.0f64; g.edges().len()];
    for (idx, r) in vals {
        per_edge[idx] = per_edge[idx].max(r);
    }
    Ok(per_edge.into_iter().enumerate().collect())
}
