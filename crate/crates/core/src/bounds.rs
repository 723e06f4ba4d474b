//! Two-sided bounds on the Lyapunov exponent from a multinorm certificate.
//!
//! With `σ_h = ln ρ̂` and `C = max_j ‖(A_j − σ I)²‖_j` measured in the
//! certificate's own norms,
//!
//! ```text
//! σ_h ≤ σ ≤ σ_h − (1/m)·ln(1 − C·h²/8)      whenever C·h² < 8.
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::{to_dwell_notation, DwellNotation};
use crate::ipa::{IpaStatus, MultinormCertificate};
use crate::linalg::{self, LinalgError, Matrix, Vector};
use crate::polytope::{operator_norm_upper, PolytopeError, PolytopeNorm, Variant};
use crate::system::{build_discretization, SwitchingSystem, SystemError};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("certificate does not match the system: {0}")]
    CertificateMismatch(String),
    #[error("1 - C·h²/8 = {0} is not positive")]
    DomainError(f64),
    #[error("step {h} too large: h²·‖A²‖/8 = {ratio} ≥ 1")]
    StepTooLarge { h: f64, ratio: f64 },
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl Verdict {
    /// Exact sign tests, no slack.
    pub fn from_bounds(lower: f64, upper: f64) -> Verdict {
        if lower > 0.0 {
            Verdict::Unstable
        } else if upper < 0.0 {
            Verdict::Stable
        } else {
            Verdict::Inconclusive
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// The leading cycle column: its dwell notation when the invariant polytope
/// iteration proved it leading, otherwise only the candidate found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum LeadingCycle {
    Certified { cycle: DwellNotation },
    Uncertified { candidate: Option<DwellNotation> },
}

impl fmt::Display for LeadingCycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeadingCycle::Certified { cycle } => write!(f, "{cycle}"),
            LeadingCycle::Uncertified { .. } => f.write_str("uncertified"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub h: f64,
    pub m: f64,
    pub sigma_lower: f64,
    /// `+∞` when `C·h²/8 ≥ 1`.
    pub sigma_upper: f64,
    pub curvature: f64,
    pub leading_cycle: LeadingCycle,
    pub verdict: Verdict,
    pub epsilon: f64,
}

impl BoundsReport {
    pub fn upper_available(&self) -> bool {
        self.sigma_upper.is_finite()
    }

    /// Report for a step where only a lower bound is known.
    pub fn lower_only(h: f64, m: f64, sigma_lower: f64, candidate: Option<DwellNotation>) -> Self {
        BoundsReport {
            h,
            m,
            sigma_lower,
            sigma_upper: f64::INFINITY,
            curvature: f64::NAN,
            leading_cycle: LeadingCycle::Uncertified { candidate },
            verdict: Verdict::from_bounds(sigma_lower, f64::INFINITY),
            epsilon: f64::INFINITY,
        }
    }
}

/// `−(1/m)·ln(1 − C·h²/8)`, which is `C·h²/(8m) + O(h⁴)`.
pub fn quadratic_bound_gap(c: f64, m: f64, h: f64) -> Result<f64, BoundsError> {
    let q = c * h * h / 8.0;
    if !(q < 1.0) {
        return Err(BoundsError::DomainError(1.0 - q));
    }
    Ok(-(-q).ln_1p() / m)
}

/// `max_j ‖(A_j − σI)²‖_j` in the certificate's norms.
pub fn curvature(sys: &SwitchingSystem, cert: &MultinormCertificate, sigma: f64) -> Result<f64, BoundsError> {
    let d = sys.dim();
    let mut c: f64 = 0.0;
    for (j, a) in sys.matrices().iter().enumerate() {
        let shifted = a - Matrix::identity(d, d) * sigma;
        let sq = &shifted * &shifted;
        let p = &cert.multinorm.components[j];
        c = c.max(operator_norm_upper(&sq, p, p)?);
    }
    Ok(c)
}

fn check_match(cert: &MultinormCertificate, sys: &SwitchingSystem, h: f64) -> Result<(), BoundsError> {
    let mn = &cert.multinorm;
    if mn.len() != sys.mode_count() || mn.dim() != sys.dim() {
        return Err(BoundsError::CertificateMismatch(format!(
            "certificate has {} components of dimension {}, system has {} modes of dimension {}",
            mn.len(),
            mn.dim(),
            sys.mode_count(),
            sys.dim()
        )));
    }
    if (cert.step - h).abs() > 1e-12 * h {
        return Err(BoundsError::CertificateMismatch(format!(
            "certificate step {} differs from {h}",
            cert.step
        )));
    }
    if (cert.dwell_time - sys.dwell_time()).abs() > 1e-12 * sys.dwell_time() {
        return Err(BoundsError::CertificateMismatch(format!(
            "certificate dwell time {} differs from {}",
            cert.dwell_time,
            sys.dwell_time()
        )));
    }
    Ok(())
}

/// Assembles the bounds for one step from its certificate.
///
/// The curvature is measured after shifting by `σ⁺ = ln((1+ε)ρ̂)`, the rate
/// for which the certificate's multinorm is non-expanding. For `ε = 0` this
/// is `σ_h` itself.
pub fn lyapunov_bounds(cert: &MultinormCertificate, sys: &SwitchingSystem, h: f64) -> Result<BoundsReport, BoundsError> {
    check_match(cert, sys, h)?;
    let g = build_discretization(sys, h)?;
    let m = sys.dwell_time();
    let lower = cert.sigma_lower();
    let plus = cert.sigma_upper();
    let c = curvature(sys, cert, plus)?;
    let upper = match quadratic_bound_gap(c, m, h) {
        Ok(gap) => plus + gap,
        Err(_) => f64::INFINITY,
    };
    let notation = to_dwell_notation(&cert.leading_cycle, &g).ok();
    let leading_cycle = match (cert.status, notation) {
        (IpaStatus::Certified, Some(cycle)) => LeadingCycle::Certified { cycle },
        (_, candidate) => LeadingCycle::Uncertified { candidate },
    };
    Ok(BoundsReport {
        h,
        m,
        sigma_lower: lower,
        sigma_upper: upper,
        curvature: c,
        leading_cycle,
        verdict: Verdict::from_bounds(lower, upper),
        epsilon: cert.epsilon,
    })
}

/// Checks `‖x(τ)‖ ≤ max{‖x(0)‖, ‖x(h)‖} / (1 − h²‖A²‖/8)` for
/// `x(t) = e^{tA}x₀`, in the norm `P`.
///
/// A positive-variant `P` is extended to all of `ℝ^d` by `‖x‖ = ‖|x|‖`.
pub fn chord_bound_check(a: &Matrix, p: &PolytopeNorm, x0: &Vector, h: f64, tau: f64) -> Result<bool, BoundsError> {
    let a2 = operator_norm_upper(&(a * a), p, p)?;
    let ratio = h * h * a2 / 8.0;
    if !(ratio < 1.0) || !(h > 0.0) {
        return Err(BoundsError::StepTooLarge { h, ratio });
    }
    if !(0.0..=h).contains(&tau) {
        return Err(BoundsError::DomainError(tau));
    }
    let norm = |x: &Vector| match p.variant() {
        Variant::Positive => p.norm_eval(&x.abs()),
        Variant::Symmetric => p.norm_eval(x),
    };
    let xt = linalg::mat_exp(a, tau)? * x0;
    let xh = linalg::mat_exp(a, h)? * x0;
    let lhs = norm(&xt)?;
    let rhs = norm(x0)?.max(norm(&xh)?) / (1.0 - ratio);
    Ok(lhs <= rhs * (1.0 + 1e-10) + 1e-14)
}
