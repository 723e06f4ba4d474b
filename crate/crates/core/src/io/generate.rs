//! Seeded random test systems: Gaussian regimes and integer Metzler regimes,
//! each scaled to unit spectral norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{operator_2norm, Matrix};
use crate::system::{validate_system, SwitchingSystem, SystemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Independent standard normal entries.
    Gaussian,
    /// Integer entries uniform in `[-9, 9]` on the diagonal and `[0, 9]` off it.
    Metzler,
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "metzler" => Ok(Family::Metzler),
            other => Err(format!("unknown family {other:?} (gaussian, metzler)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub family: Family,
    pub dim: usize,
    pub modes: usize,
    /// Drawn uniformly from `(0, 1)` when absent.
    pub dwell_time: Option<f64>,
    pub seed: u64,
}

fn random_matrix(rng: &mut ChaCha8Rng, family: Family, d: usize) -> Matrix {
    loop {
        let a = Matrix::from_fn(d, d, |i, j| match family {
            Family::Gaussian => rng.sample::<f64, _>(StandardNormal),
            Family::Metzler if i == j => rng.random_range(-9i32..=9) as f64,
            Family::Metzler => rng.random_range(0i32..=9) as f64,
        });
        // All-zero draws are possible for tiny integer matrices; redraw.
        if let Ok(n) = operator_2norm(&a) {
            if n > 0.0 {
                return a / n;
            }
        }
    }
}

/// The same parameters always yield the same system.
pub fn generate(params: &GeneratorParams) -> Result<SwitchingSystem, SystemError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mats: Vec<Matrix> = (0..params.modes).map(|_| random_matrix(&mut rng, params.family, params.dim)).collect();
    let m = match params.dwell_time {
        Some(m) => m,
        None => loop {
            let m: f64 = rng.random();
            if m > 0.0 {
                break m;
            }
        },
    };
    validate_system(mats, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::is_metzler;

    fn params(family: Family, seed: u64) -> GeneratorParams {
        GeneratorParams {
            family,
            dim: 5,
            modes: 2,
            dwell_time: None,
            seed,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&params(Family::Gaussian, 7)).unwrap();
        let b = generate(&params(Family::Gaussian, 7)).unwrap();
        let c = generate(&params(Family::Gaussian, 8)).unwrap();
        assert_eq!(a.matrices(), b.matrices());
        assert_ne!(a.matrices(), c.matrices());
    }

    #[test]
    fn families() {
        for seed in 0..10 {
            let s = generate(&params(Family::Metzler, seed)).unwrap();
            assert!(is_metzler(&s));
            assert!(s.dwell_time() > 0.0 && s.dwell_time() < 1.0);
            for a in s.matrices() {
                assert!((operator_2norm(a).unwrap() - 1.0).abs() < 1e-12);
            }
        }
        let s = generate(&GeneratorParams {
            dwell_time: Some(0.5),
            ..params(Family::Gaussian, 1)
        })
        .unwrap();
        assert_eq!(s.dwell_time(), 0.5);
        assert_eq!(s.mode_count(), 2);
        assert_eq!(s.dim(), 5);
    }
}
