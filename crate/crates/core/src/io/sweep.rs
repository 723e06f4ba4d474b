//! One pipeline run per step size: cycle search, invariant polytopes,
//! bounds.

use rayon::prelude::*;
use thiserror::Error;

use super::config::RunConfig;
use crate::bounds::{lyapunov_bounds, BoundsError, BoundsReport};
use crate::cycles::{leading_cycle_search, to_dwell_notation, CycleError, SearchResult};
use crate::ipa::{run_ipa, IpaError, IpaStatus, MultinormCertificate};
use crate::system::{build_discretization, is_metzler, GraphSystem, SwitchingSystem, SystemError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Ipa(#[from] IpaError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub report: BoundsReport,
    pub certificate: Option<MultinormCertificate>,
    pub search: SearchResult,
    pub graph: GraphSystem,
    /// Set when the polytope iteration failed; the lower bound still holds.
    pub ipa_error: Option<String>,
}

impl StepOutput {
    pub fn possibly_not_leading(&self) -> bool {
        self.certificate
            .as_ref()
            .is_some_and(|c| c.status == IpaStatus::Approximate)
    }
}

#[derive(Debug)]
pub struct StepResult {
    pub h: f64,
    pub outcome: Result<StepOutput, PipelineError>,
}

impl StepResult {
    /// True when anything numerical went wrong at this step.
    pub fn failed(&self) -> bool {
        match &self.outcome {
            Ok(o) => o.ipa_error.is_some(),
            Err(_) => true,
        }
    }
}

pub fn positive_mode(sys: &SwitchingSystem, cfg: &RunConfig) -> bool {
    cfg.positive_mode.unwrap_or_else(|| is_metzler(sys))
}

/// The full pipeline for one step `h`.
pub fn run_step(sys: &SwitchingSystem, h: f64, cfg: &RunConfig) -> Result<StepOutput, PipelineError> {
    let g = build_discretization(sys, h)?;
    let search = leading_cycle_search(&g, &cfg.search_config())?;
    let positive = positive_mode(sys, cfg);
    match run_ipa(&g, &search.best, &cfg.ipa_config(positive)) {
        Ok(cert) => {
            let report = lyapunov_bounds(&cert, sys, h)?;
            Ok(StepOutput {
                report,
                certificate: Some(cert),
                search,
                graph: g,
                ipa_error: None,
            })
        }
        Err(e) => {
            log::warn!("h = {h}: polytope iteration failed: {e}");
            let notation = to_dwell_notation(&search.best, &g).ok();
            let report = BoundsReport::lower_only(h, sys.dwell_time(), search.best.value.ln(), notation);
            Ok(StepOutput {
                report,
                certificate: None,
                search,
                graph: g,
                ipa_error: Some(e.to_string()),
            })
        }
    }
}

/// Runs every step of `cfg.steps` independently (in parallel) and returns
/// the results ordered by decreasing `h`.
pub fn run_sweep(sys: &SwitchingSystem, cfg: &RunConfig) -> Vec<StepResult> {
    let mut steps = cfg.steps.clone();
    steps.sort_by(|a, b| b.total_cmp(a));
    steps
        .par_iter()
        .map(|&h| StepResult {
            h,
            outcome: run_step(sys, h, cfg),
        })
        .collect()
}
