//! Certificate files: everything needed to re-check the extremality
//! containments without repeating the search.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::config::{parse_system_file, rows_of};
use super::{write_atomic, IoError, SCHEMA_VERSION};
use crate::cycles::{to_dwell_notation, Cycle};
use crate::ipa::{verify_certificate, IpaStatus, MultinormCertificate, Verification};
use crate::linalg::{Matrix, Vector};
use crate::polytope::{Multinorm, PolytopeNorm, Variant};
use crate::system::{build_discretization, SwitchingSystem};

/// A float written with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom("non-finite number in certificate"));
        }
        let raw = serde_json::value::RawValue::from_string(format!("{:.16e}", self.0))
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for F17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(F17)
    }
}

fn f17_rows(a: &Matrix) -> Vec<Vec<F17>> {
    rows_of(a).into_iter().map(|r| r.into_iter().map(F17).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifiedSystem {
    pub matrices: Vec<Vec<Vec<F17>>>,
    pub dwell_time: F17,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub schema_version: String,
    pub tool_version: String,
    pub system: CertifiedSystem,
    pub step: F17,
    pub variant: Variant,
    pub status: IpaStatus,
    pub rho_hat: F17,
    pub epsilon: F17,
    pub residual: F17,
    pub iterations_used: usize,
    /// Edge indices of the leading cycle in the step's graph.
    pub cycle_edges: Vec<usize>,
    /// Informational; not used by verification.
    pub cycle_notation: String,
    /// Vertex lists, one per mode.
    pub components: Vec<Vec<Vec<F17>>>,
}

#[derive(Debug, Error)]
pub enum CertError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("certificate does not match the system: {0}")]
    CertificateMismatch(String),
    #[error("certificate verification failed: {0}")]
    VerificationFailed(String),
}

impl CertificateFile {
    pub fn new(cert: &MultinormCertificate, sys: &SwitchingSystem) -> Self {
        let notation = build_discretization(sys, cert.step)
            .ok()
            .and_then(|g| to_dwell_notation(&cert.leading_cycle, &g).ok())
            .map(|n| n.to_string())
            .unwrap_or_default();
        CertificateFile {
            schema_version: SCHEMA_VERSION.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            system: CertifiedSystem {
                matrices: sys.matrices().iter().map(f17_rows).collect(),
                dwell_time: F17(sys.dwell_time()),
            },
            step: F17(cert.step),
            variant: cert.multinorm.variant(),
            status: cert.status,
            rho_hat: F17(cert.rho_hat),
            epsilon: F17(cert.epsilon),
            residual: F17(cert.residual),
            iterations_used: cert.iterations_used,
            cycle_edges: cert.leading_cycle.edges().to_vec(),
            cycle_notation: notation,
            components: cert
                .multinorm
                .components
                .iter()
                .map(|c| c.vertices().iter().map(|v| v.iter().map(|&x| F17(x)).collect()).collect())
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificate serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, IoError> {
        let c: CertificateFile = serde_json::from_str(text).map_err(|e| IoError::parse(path, &e))?;
        if c.schema_version != SCHEMA_VERSION {
            return Err(IoError::validation(
                path,
                format!("unsupported certificate schema_version {:?}", c.schema_version),
            ));
        }
        Ok(c)
    }

    /// Checks that the certificate was issued for `sys` (bit-identical
    /// regimes and dwell time).
    pub fn matches(&self, sys: &SwitchingSystem) -> Result<(), CertError> {
        let mine = CertifiedSystem {
            matrices: sys.matrices().iter().map(f17_rows).collect(),
            dwell_time: F17(sys.dwell_time()),
        };
        if mine != self.system {
            return Err(CertError::CertificateMismatch(
                "regimes or dwell time differ from the certified system".into(),
            ));
        }
        Ok(())
    }

    /// Rebuilds the in-memory certificate against `sys`.
    pub fn to_certificate(&self, sys: &SwitchingSystem) -> Result<MultinormCertificate, CertError> {
        self.matches(sys)?;
        let g = build_discretization(sys, self.step.0).map_err(|e| CertError::CertificateMismatch(e.to_string()))?;
        let cycle = Cycle::from_edges(&g, &self.cycle_edges)
            .map_err(|e| CertError::VerificationFailed(format!("leading cycle: {e}")))?;
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(j, vs)| {
                let vs: Vec<Vector> = vs.iter().map(|v| Vector::from_iterator(v.len(), v.iter().map(|x| x.0))).collect();
                PolytopeNorm::new(vs, self.variant)
                    .map_err(|e| CertError::VerificationFailed(format!("component {j}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let multinorm = Multinorm::new(components).map_err(|e| CertError::VerificationFailed(e.to_string()))?;
        Ok(MultinormCertificate {
            rho_hat: self.rho_hat.0,
            multinorm,
            epsilon: self.epsilon.0,
            leading_cycle: cycle,
            iterations_used: self.iterations_used,
            status: self.status,
            residual: self.residual.0,
            step: self.step.0,
            dwell_time: self.system.dwell_time.0,
        })
    }
}

/// Serializes the certificate and writes it atomically.
pub fn emit_certificate(cert: &MultinormCertificate, sys: &SwitchingSystem, path: &Path) -> Result<(), IoError> {
    write_atomic(path, CertificateFile::new(cert, sys).to_json().as_bytes())
}

/// Checks a certificate against a system without any search.
pub fn verify_against(file: &CertificateFile, sys: &SwitchingSystem) -> Result<Verification, CertError> {
    let cert = file.to_certificate(sys)?;
    let g = build_discretization(sys, cert.step).map_err(|e| CertError::CertificateMismatch(e.to_string()))?;
    Ok(verify_certificate(&g, &cert))
}

/// Loads a certificate and the system file it claims to certify, and
/// re-checks every containment with fresh LPs.
pub fn load_and_verify(cert_path: &Path, system_path: &Path) -> Result<Verification, CertError> {
    let text = std::fs::read_to_string(cert_path).map_err(|e| IoError::io(cert_path, e))?;
    let file = CertificateFile::from_json(&text, &cert_path.display().to_string())?;
    let (sys, _) = parse_system_file(system_path)?;
    verify_against(&file, &sys)
}

/// Human-readable description of the first failed check.
pub fn describe_failure(v: &Verification) -> String {
    if !v.shape_ok {
        return "certificate shape does not match the graph".into();
    }
    if !v.cycle_ok {
        return "rho_hat does not equal the leading cycle's value".into();
    }
    match v.violations.first() {
        Some(x) => format!(
            "edge {} vertex {}: norm of image {:.17e} exceeds {:.17e}",
            x.edge, x.vertex, x.lhs, x.rhs
        ),
        None => "no violation".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{leading_cycle_search, SearchConfig};
    use crate::io::config::SystemFile;
    use crate::ipa::{run_ipa, IpaConfig};
    use crate::system::tests::{example1, example2};

    fn example1_cert() -> (SwitchingSystem, MultinormCertificate) {
        let sys = example1();
        let g = build_discretization(&sys, 0.2).unwrap();
        let c = leading_cycle_search(&g, &SearchConfig::default()).unwrap().best;
        let cert = run_ipa(&g, &c, &IpaConfig::default()).unwrap();
        (sys, cert)
    }

    fn write_system(dir: &Path, name: &str, sys: &SwitchingSystem) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, serde_json::to_string(&SystemFile::from_system(sys)).unwrap()).unwrap();
        p
    }

    #[test]
    fn seventeen_digits() {
        let s = serde_json::to_string(&F17(0.1)).unwrap();
        assert_eq!(s, "1.0000000000000001e-1");
        let back: F17 = serde_json::from_str(&s).unwrap();
        assert_eq!(back.0, 0.1);
        assert!(serde_json::to_string(&F17(f64::NAN)).is_err());
    }

    #[test]
    fn roundtrip_verifies() {
        let (sys, cert) = example1_cert();
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("cert.json");
        emit_certificate(&cert, &sys, &cp).unwrap();
        let sp = write_system(dir.path(), "sys.json", &sys);
        let v = load_and_verify(&cp, &sp).unwrap();
        assert!(v.passed(), "{}", describe_failure(&v));

        let file = CertificateFile::from_json(&std::fs::read_to_string(&cp).unwrap(), "c").unwrap();
        let back = file.to_certificate(&sys).unwrap();
        assert_eq!(back.rho_hat, cert.rho_hat);
        for (a, b) in back.multinorm.components.iter().zip(&cert.multinorm.components) {
            assert_eq!(a.vertices(), b.vertices());
        }
    }

    #[test]
    fn tampered_rho_fails() {
        let (sys, cert) = example1_cert();
        let mut file = CertificateFile::new(&cert, &sys);
        file.rho_hat = F17(file.rho_hat.0 * 1.1);
        let v = verify_against(&file, &sys).unwrap();
        assert!(!v.passed());
        let mut file = CertificateFile::new(&cert, &sys);
        file.rho_hat = F17(file.rho_hat.0 * 0.5);
        assert!(!verify_against(&file, &sys).unwrap().passed());
    }

    #[test]
    fn other_system_mismatch() {
        let (sys, cert) = example1_cert();
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("cert.json");
        emit_certificate(&cert, &sys, &cp).unwrap();
        let sp = write_system(dir.path(), "other.json", &example2());
        assert!(matches!(load_and_verify(&cp, &sp), Err(CertError::CertificateMismatch(_))));
    }
}
