//! Central finite-difference checks of tape gradients with respect to parameters.
//!
//! The forward pass is evaluated once to record its selections; every perturbed
//! evaluation replays them, so ReLU masks and max-pool winners stay fixed and the
//! check measures the gradient of the piecewise-smooth branch actually taken.

use super::params::{ModelParams, ParamId};
use super::tape::{Tape, Var};
use super::NnError;
use crate::rng::SplitMix64;

/// Denominator floor of the relative error, so entries whose true gradient is
/// zero are judged by absolute error instead.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub eps: f64,
    /// Entries sampled per parameter tensor; `None` checks every entry.
    pub samples_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { eps: 1e-5, samples_per_param: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<Mismatch>,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

impl GradCheck {
    pub fn run<F>(&self, params: &ModelParams, f: F) -> Result<GradCheckReport, NnError>
    where
        F: Fn(&ModelParams, &mut Tape) -> Result<Var, NnError>,
    {
        let mut tape = Tape::new();
        let loss = f(params, &mut tape)?;
        let grads = tape.gradients(loss)?;
        let selections = tape.into_selections();
        let analytic = |id: ParamId, k: usize| {
            grads.params().iter().find(|(p, _)| *p == id).map_or(0.0, |(_, m)| m.data()[k])
        };
        let eval = |p: &ModelParams| -> Result<f64, NnError> {
            let mut t = Tape::replaying(selections.clone());
            let l = f(p, &mut t)?;
            Ok(t.value(l).item())
        };

        let mut rng = SplitMix64::new(self.seed);
        let mut report = GradCheckReport::default();
        let mut work = params.clone();
        for (id, p) in params.iter() {
            let n = p.value.len();
            let entries: Vec<usize> = match self.samples_per_param {
                Some(s) if s < n => (0..s).map(|_| rng.below(n as u64) as usize).collect(),
                _ => (0..n).collect(),
            };
            for k in entries {
                let orig = p.value.data()[k];
                work.get_mut(id).value.data_mut()[k] = orig + self.eps;
                let up = eval(&work)?;
                work.get_mut(id).value.data_mut()[k] = orig - self.eps;
                let down = eval(&work)?;
                work.get_mut(id).value.data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * self.eps);
                let a = analytic(id, k);
                let e = rel_err(a, numeric);
                report.checked += 1;
                if e > report.max_rel_err || report.worst.is_none() {
                    report.max_rel_err = report.max_rel_err.max(e);
                    report.worst = Some(Mismatch { param: p.name.clone(), index: k, analytic: a, numeric });
                }
            }
        }
        Ok(report)
    }
}
