//! Content lifecycle: per-content covariates, a Cox proportional hazards fit
//! (Breslow ties, Newton-Raphson with step halving), survival prediction and
//! the active-content filter CL(t).

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::ids::ContentId;

#[derive(Debug, Error, PartialEq)]
pub enum LifecycleError {
    #[error("interaction series is all zero")]
    AllZeroSeries,
    #[error("series and window must be non-empty")]
    EmptySeries,
    #[error("need at least 2 uncensored events, got {0}")]
    NoEvents(usize),
    #[error("observations have inconsistent covariate dimensions")]
    DimensionMismatch,
    #[error("Newton-Raphson did not converge (gradient max-norm {gradient_norm:e})")]
    NonConvergence { gradient_norm: f64 },
    #[error("information matrix is singular (condition estimate {condition:e})")]
    SingularHessian { condition: f64 },
}

/// The five lifecycle covariates of one content item. Periods are relative to
/// the item's publication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleCovariates {
    pub t_start: u32,
    pub duration: u32,
    pub avg_interactions: f64,
    pub total_interactions: u64,
    pub min_window_interactions: u64,
    pub window: u32,
}

pub const COVARIATE_NAMES: [&str; 5] = [
    "t_start",
    "duration",
    "avg_interactions",
    "total_interactions",
    "min_window_interactions",
];

impl LifecycleCovariates {
    pub fn features(&self) -> Vec<f64> {
        vec![
            f64::from(self.t_start),
            f64::from(self.duration),
            self.avg_interactions,
            self.total_interactions as f64,
            self.min_window_interactions as f64,
        ]
    }
}

/// Computes lifecycle covariates from per-period interaction counts.
///
/// The active window runs from the first nonzero period to the first zero
/// after it (or the end of the series).
pub fn extract_covariates(series: &[u32], window: u32) -> Result<LifecycleCovariates, LifecycleError> {
    if series.is_empty() || window == 0 {
        return Err(LifecycleError::EmptySeries);
    }
    let t_start = series
        .iter()
        .position(|&c| c > 0)
        .ok_or(LifecycleError::AllZeroSeries)?;
    let duration = series[t_start..]
        .iter()
        .position(|&c| c == 0)
        .unwrap_or(series.len() - t_start);
    let active = &series[t_start..t_start + duration];
    let total: u64 = active.iter().map(|&c| u64::from(c)).sum();
    let w = window as usize;
    let min_window = if duration < w {
        total
    } else {
        active
            .windows(w)
            .map(|win| win.iter().map(|&c| u64::from(c)).sum::<u64>())
            .min()
            .unwrap_or(total)
    };
    Ok(LifecycleCovariates {
        t_start: t_start as u32,
        duration: duration as u32,
        avg_interactions: total as f64 / duration as f64,
        total_interactions: total,
        min_window_interactions: min_window,
        window,
    })
}

/// Expiration period: the first period at or after the first interaction that
/// begins a run of `run` consecutive zero periods fully inside the series.
pub fn expiration_period(series: &[u32], run: u32) -> Option<u32> {
    let start = series.iter().position(|&c| c > 0)?;
    let run = run.max(1) as usize;
    let mut zeros = 0usize;
    for (i, &c) in series.iter().enumerate().skip(start) {
        if c == 0 {
            zeros += 1;
            if zeros == run {
                return Some((i + 1 - run) as u32);
            }
        } else {
            zeros = 0;
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalObservation {
    pub features: Vec<f64>,
    pub event_time: f64,
    pub censored: bool,
}

impl SurvivalObservation {
    /// Builds an observation from a content's interaction series. Covariates
    /// only see the history before the observed expiration; items that never
    /// expire inside the series are right-censored at its length.
    pub fn from_series(series: &[u32], window: u32, expiry_run: u32) -> Result<Self, LifecycleError> {
        let tau = expiration_period(series, expiry_run);
        let seen = match tau {
            Some(t) => &series[..t as usize],
            None => series,
        };
        let cov = extract_covariates(seen, window)?;
        Ok(Self {
            features: cov.features(),
            event_time: f64::from(tau.unwrap_or(series.len() as u32)),
            censored: tau.is_none(),
        })
    }
}

/// Per-content reply counts bucketed by period since publication, covering
/// the rest of the data window.
pub fn content_series(dataset: &Dataset, period_minutes: u32) -> Vec<(ContentId, Vec<u32>)> {
    let pm = u64::from(period_minutes.max(1));
    let end = dataset.window_end_min();
    let contents = dataset.contents();
    let mut series: std::collections::BTreeMap<&ContentId, Vec<u32>> = contents
        .iter()
        .map(|(id, info)| (id, vec![0u32; ((end - info.published_min) / pm + 1) as usize]))
        .collect();
    for e in dataset.events() {
        if let Some(parent) = &e.parent_content_id {
            let published = contents[parent].published_min;
            if e.timestamp_min < published {
                continue;
            }
            let idx = ((e.timestamp_min - published) / pm) as usize;
            if let Some(s) = series.get_mut(parent) {
                s[idx] += 1;
            }
        }
    }
    series.into_iter().map(|(id, s)| (id.clone(), s)).collect()
}

/// Survival observations for every content item that received at least one
/// reply. Never-interacted items are skipped.
pub fn observations_from_dataset(
    dataset: &Dataset,
    period_minutes: u32,
    window: u32,
    expiry_run: u32,
) -> Vec<(ContentId, SurvivalObservation)> {
    content_series(dataset, period_minutes)
        .into_iter()
        .filter_map(|(id, s)| {
            SurvivalObservation::from_series(&s, window, expiry_run)
                .ok()
                .map(|o| (id, o))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    /// Zero-variance covariates map to 0.
    pub fn apply(&self, x: f64) -> f64 {
        if self.std > 0.0 {
            (x - self.mean) / self.std
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineStep {
    pub t: f64,
    #[serde(rename = "H0")]
    pub cumulative_hazard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentLifecycleModel {
    /// Coefficients on the standardized covariates.
    pub beta: Vec<f64>,
    pub standardization: Vec<Standardization>,
    pub baseline: Vec<BaselineStep>,
    pub survival_threshold: f64,
}

impl ContentLifecycleModel {
    /// Model with no covariate effect and an explicit baseline step function.
    pub fn from_baseline(baseline: Vec<BaselineStep>, dims: usize, survival_threshold: f64) -> Self {
        Self {
            beta: vec![0.0; dims],
            standardization: vec![Standardization { mean: 0.0, std: 1.0 }; dims],
            baseline,
            survival_threshold,
        }
    }

    /// Baseline cumulative hazard H0(t); zero for t <= 0 and before the first step.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let i = self.baseline.partition_point(|s| s.t <= t);
        if i == 0 {
            0.0
        } else {
            self.baseline[i - 1].cumulative_hazard
        }
    }

    pub fn linear_predictor(&self, features: &[f64]) -> f64 {
        self.beta
            .iter()
            .zip(&self.standardization)
            .zip(features)
            .map(|((b, s), x)| b * s.apply(*x))
            .sum()
    }

    /// Relative risk exp(beta . F_std).
    pub fn risk(&self, features: &[f64]) -> f64 {
        self.linear_predictor(features).exp()
    }

    /// Probability that content with these covariates expires before `t`.
    pub fn expiration_probability(&self, features: &[f64], t: f64) -> f64 {
        let h = self.cumulative_hazard(t);
        if h == 0.0 {
            return 0.0;
        }
        (1.0 - (-h * self.risk(features)).exp()).clamp(0.0, 1.0)
    }

    pub fn survival(&self, features: &[f64], t: f64) -> f64 {
        1.0 - self.expiration_probability(features, t)
    }

    /// Active iff not hard-expired at `t` and predicted survival exceeds the
    /// threshold. Content without covariates yet is judged by the hard rule only.
    pub fn is_active(&self, record: &ContentRecord, t: f64, survival_threshold: f64) -> bool {
        if record.expired_at.is_some_and(|tau| t >= tau) {
            return false;
        }
        match &record.features {
            Some(f) => self.survival(f, t) > survival_threshold,
            None => true,
        }
    }

    /// Coefficients mapped back to the raw covariate scale.
    pub fn raw_beta(&self) -> Vec<f64> {
        self.beta
            .iter()
            .zip(&self.standardization)
            .map(|(b, s)| if s.std > 0.0 { b / s.std } else { 0.0 })
            .collect()
    }
}

pub fn expiration_probability(model: &ContentLifecycleModel, covariates: &LifecycleCovariates, t: f64) -> f64 {
    model.expiration_probability(&covariates.features(), t)
}

/// One content item as seen by the active-content filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentRecord {
    pub content_id: ContentId,
    pub features: Option<Vec<f64>>,
    /// Observed expiration, if any.
    pub expired_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveContentSet {
    pub period: f64,
    pub content_ids: BTreeSet<ContentId>,
}

/// CL(t) for contents sharing one clock.
pub fn active_content(
    model: &ContentLifecycleModel,
    contents: &[ContentRecord],
    t: f64,
    survival_threshold: f64,
) -> ActiveContentSet {
    ActiveContentSet {
        period: t,
        content_ids: contents
            .iter()
            .filter(|c| model.is_active(c, t, survival_threshold))
            .map(|c| c.content_id.clone())
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxConfig {
    /// Convergence threshold on the gradient max-norm.
    pub gradient_tol: f64,
    pub max_iters: usize,
    /// Optional L2 penalty on the standardized coefficients.
    pub ridge: f64,
    pub survival_threshold: f64,
}

impl Default for CoxConfig {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-8,
            max_iters: 100,
            ridge: 0.0,
            survival_threshold: 0.5,
        }
    }
}

/// Fit result with optimizer diagnostics.
#[derive(Debug, Clone)]
pub struct CoxFit {
    pub model: ContentLifecycleModel,
    /// Penalized partial log-likelihood after each accepted Newton step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Standardized covariates sorted by descending event time.
struct RiskData {
    x: Vec<Vec<f64>>,
    time: Vec<f64>,
    event: Vec<bool>,
    /// Column indices that take part in the fit.
    active: Vec<usize>,
}

impl RiskData {
    /// Breslow partial log-likelihood with gradient and information matrix
    /// over the active columns.
    fn evaluate(&self, beta: &[f64], ridge: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = self.active.len();
        let eta: Vec<f64> = self
            .x
            .iter()
            .map(|row| self.active.iter().zip(beta).map(|(&j, b)| b * row[j]).sum())
            .collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut ll = 0.0;
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        let n = self.x.len();
        let mut i = 0;
        while i < n {
            let t = self.time[i];
            let mut j = i;
            while j < n && self.time[j] == t {
                let w = (eta[j] - shift).exp();
                let xa = DVector::from_iterator(p, self.active.iter().map(|&c| self.x[j][c]));
                s0 += w;
                s1.axpy(w, &xa, 1.0);
                s2.ger(w, &xa, &xa, 1.0);
                j += 1;
            }
            let deaths = (i..j).filter(|&k| self.event[k]).count();
            if deaths > 0 {
                let d = deaths as f64;
                for k in (i..j).filter(|&k| self.event[k]) {
                    ll += eta[k];
                    for (a, &c) in self.active.iter().enumerate() {
                        grad[a] += self.x[k][c];
                    }
                }
                ll -= d * (s0.ln() + shift);
                let mean = &s1 / s0;
                grad.axpy(-d, &mean, 1.0);
                let cov = &s2 / s0 - &mean * mean.transpose();
                info += cov * d;
            }
            i = j;
        }
        if ridge > 0.0 {
            for (a, b) in beta.iter().enumerate() {
                ll -= 0.5 * ridge * b * b;
                grad[a] -= ridge * b;
                info[(a, a)] += ridge;
            }
        }
        (ll, grad, info)
    }
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Partial log-likelihood (Breslow ties) of raw-scale observations at the
/// standardized coefficients `beta`, using the given standardization.
pub fn partial_log_likelihood(
    observations: &[SurvivalObservation],
    standardization: &[Standardization],
    beta: &[f64],
) -> f64 {
    let data = prepare(observations, standardization, (0..beta.len()).collect());
    data.evaluate(beta, 0.0).0
}

fn prepare(
    observations: &[SurvivalObservation],
    standardization: &[Standardization],
    active: Vec<usize>,
) -> RiskData {
    let mut order: Vec<usize> = (0..observations.len()).collect();
    order.sort_by(|&a, &b| observations[b].event_time.total_cmp(&observations[a].event_time));
    RiskData {
        x: order
            .iter()
            .map(|&i| {
                observations[i]
                    .features
                    .iter()
                    .zip(standardization)
                    .map(|(x, s)| s.apply(*x))
                    .collect()
            })
            .collect(),
        time: order.iter().map(|&i| observations[i].event_time).collect(),
        event: order.iter().map(|&i| !observations[i].censored).collect(),
        active,
    }
}

pub fn standardize(observations: &[SurvivalObservation]) -> Vec<Standardization> {
    let p = observations.first().map_or(0, |o| o.features.len());
    let n = observations.len() as f64;
    (0..p)
        .map(|j| {
            let mean = observations.iter().map(|o| o.features[j]).sum::<f64>() / n;
            let var = observations
                .iter()
                .map(|o| (o.features[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            // tolerate round-off on constant columns
            let std = if std > 1e-12 * mean.abs().max(1.0) { std } else { 0.0 };
            Standardization { mean, std }
        })
        .collect()
}

/// Fits a Cox model and returns optimizer diagnostics alongside it.
pub fn fit_coxph_traced(
    observations: &[SurvivalObservation],
    config: &CoxConfig,
) -> Result<CoxFit, LifecycleError> {
    let events = observations.iter().filter(|o| !o.censored).count();
    if events < 2 {
        return Err(LifecycleError::NoEvents(events));
    }
    let p = observations[0].features.len();
    if observations.iter().any(|o| o.features.len() != p) {
        return Err(LifecycleError::DimensionMismatch);
    }
    let standardization = standardize(observations);
    let active: Vec<usize> = (0..p).filter(|&j| standardization[j].std > 0.0).collect();
    let data = prepare(observations, &standardization, active.clone());

    let mut beta = vec![0.0; active.len()];
    let (mut ll, mut grad, mut info) = data.evaluate(&beta, config.ridge);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let max_norm = |g: &DVector<f64>| g.iter().map(|v| v.abs()).fold(0.0, f64::max);
    while !active.is_empty() && max_norm(&grad) >= config.gradient_tol {
        if iterations == config.max_iters {
            return Err(LifecycleError::NonConvergence {
                gradient_norm: max_norm(&grad),
            });
        }
        iterations += 1;
        let chol = info.clone().cholesky().ok_or_else(|| LifecycleError::SingularHessian {
            condition: condition_estimate(&info),
        })?;
        let step = chol.solve(&grad);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let eval = data.evaluate(&cand, config.ridge);
            if eval.0.is_finite() && eval.0 >= ll - 1e-10 * ll.abs().max(1.0) {
                accepted = Some((cand, eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, (new_ll, new_grad, new_info))) = accepted else {
            // no ascent possible at machine precision
            let g = max_norm(&grad);
            if g < 1e-6 * observations.len() as f64 {
                break;
            }
            return Err(LifecycleError::NonConvergence { gradient_norm: g });
        };
        let stalled = (new_ll - ll).abs() <= f64::EPSILON * ll.abs() * 4.0;
        beta = cand;
        ll = new_ll;
        grad = new_grad;
        info = new_info;
        trace.push(ll);
        if stalled && max_norm(&grad) < 1e-6 * observations.len() as f64 {
            break;
        }
    }

    let mut full_beta = vec![0.0; p];
    for (a, &j) in active.iter().enumerate() {
        full_beta[j] = beta[a];
    }
    let baseline = breslow(&data, &beta);
    Ok(CoxFit {
        model: ContentLifecycleModel {
            beta: full_beta,
            standardization,
            baseline,
            survival_threshold: config.survival_threshold,
        },
        trace,
        iterations,
        gradient_norm: max_norm(&grad),
    })
}

pub fn fit_coxph(
    observations: &[SurvivalObservation],
    config: &CoxConfig,
) -> Result<ContentLifecycleModel, LifecycleError> {
    fit_coxph_traced(observations, config).map(|f| f.model)
}

/// Breslow baseline cumulative hazard at the distinct event times.
fn breslow(data: &RiskData, beta: &[f64]) -> Vec<BaselineStep> {
    let n = data.x.len();
    let risk: Vec<f64> = data
        .x
        .iter()
        .map(|row| data.active.iter().zip(beta).map(|(&j, b)| b * row[j]).sum::<f64>().exp())
        .collect();
    // walk descending times, collecting (time, deaths / risk-set sum)
    let mut increments = Vec::new();
    let mut s0 = 0.0;
    let mut i = 0;
    while i < n {
        let t = data.time[i];
        let mut j = i;
        while j < n && data.time[j] == t {
            s0 += risk[j];
            j += 1;
        }
        let deaths = (i..j).filter(|&k| data.event[k]).count();
        if deaths > 0 {
            increments.push((t, deaths as f64 / s0));
        }
        i = j;
    }
    increments.reverse();
    let mut cum = 0.0;
    increments
        .into_iter()
        .map(|(t, dh)| {
            cum += dh;
            BaselineStep {
                t,
                cumulative_hazard: cum,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::cox_observations;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn covariates_follow_the_window_semantics() {
        let c = extract_covariates(&[0, 0, 3, 2, 0, 0], 1).unwrap();
        assert_eq!(c.t_start, 2);
        assert_eq!(c.duration, 2);
        assert_eq!(c.avg_interactions, 2.5);
        assert_eq!(c.total_interactions, 5);
        assert_eq!(c.min_window_interactions, 2);

        let c = extract_covariates(&[5], 1).unwrap();
        assert_eq!((c.t_start, c.duration, c.total_interactions, c.min_window_interactions), (0, 1, 5, 5));
        assert_eq!(c.avg_interactions, 5.0);

        assert_eq!(extract_covariates(&[0, 0, 0], 1), Err(LifecycleError::AllZeroSeries));
    }

    #[test]
    fn wide_windows_use_sliding_sums_or_total() {
        // active window [1, 4): 4 1 6 -> length-2 sums 5, 7
        let c = extract_covariates(&[0, 4, 1, 6, 0, 9], 2).unwrap();
        assert_eq!(c.min_window_interactions, 5);
        // shorter than the window: m = total
        let c = extract_covariates(&[2, 3, 0], 5).unwrap();
        assert_eq!(c.min_window_interactions, 5);
        assert!(c.min_window_interactions as f64 <= c.avg_interactions * 5.0);
    }

    #[test]
    fn expiration_needs_a_full_zero_run_after_first_interaction() {
        let mut s = vec![0u32; 12];
        s.extend([1, 2, 0, 1]);
        s.extend([0; 10]);
        assert_eq!(expiration_period(&s, 10), Some(16));
        assert_eq!(expiration_period(&s[..20], 10), None);
        assert_eq!(expiration_period(&[0, 0, 0], 2), None);
    }

    #[test]
    fn observation_is_censored_without_a_zero_run() {
        let o = SurvivalObservation::from_series(&[1, 1, 0, 1, 1], 1, 3).unwrap();
        assert!(o.censored);
        assert_eq!(o.event_time, 5.0);
        let mut s = vec![2, 1, 0, 3];
        s.extend([0; 3]);
        let o = SurvivalObservation::from_series(&s, 1, 3).unwrap();
        assert!(!o.censored);
        assert_eq!(o.event_time, 4.0);
        assert_eq!(o.features, vec![0.0, 2.0, 1.5, 3.0, 1.0]);
    }

    #[test]
    fn constant_baseline_gives_exponential_expiration() {
        let steps = (1..=20)
            .map(|t| BaselineStep {
                t: f64::from(t),
                cumulative_hazard: 0.1 * f64::from(t),
            })
            .collect();
        let m = ContentLifecycleModel::from_baseline(steps, 5, 0.5);
        let f = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(m.expiration_probability(&f, 10.0), 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.expiration_probability(&f, 10.0), 0.6321, epsilon = 1e-4);
        assert_eq!(m.expiration_probability(&f, 0.0), 0.0);
        assert_eq!(m.expiration_probability(&f, 0.5), 0.0);
    }

    #[test]
    fn hard_expiration_overrides_prediction() {
        let m = ContentLifecycleModel::from_baseline(vec![], 1, 0.5);
        let gone = ContentRecord {
            content_id: "c".into(),
            features: Some(vec![0.0]),
            expired_at: Some(5.0),
        };
        let live = ContentRecord {
            content_id: "d".into(),
            features: Some(vec![0.0]),
            expired_at: None,
        };
        let set = active_content(&m, &[gone, live], 7.0, 0.5);
        assert_eq!(set.content_ids.into_iter().collect::<Vec<_>>(), vec![ContentId::from("d")]);
    }

    #[test]
    fn survival_above_threshold_is_included() {
        let steps = vec![BaselineStep {
            t: 1.0,
            cumulative_hazard: -(0.9f64.ln()),
        }];
        let m = ContentLifecycleModel::from_baseline(steps, 1, 0.5);
        let r = ContentRecord {
            content_id: "c".into(),
            features: Some(vec![3.0]),
            expired_at: None,
        };
        assert_abs_diff_eq!(m.survival(&[3.0], 4.0), 0.9, epsilon = 1e-12);
        assert!(m.is_active(&r, 4.0, 0.5));
        assert!(!m.is_active(&r, 4.0, 0.95));
    }

    #[test]
    fn too_few_events() {
        let mut obs = cox_observations(10, &[0.5], 0.1, 0.0, 1);
        for o in obs.iter_mut().skip(1) {
            o.censored = true;
        }
        assert_eq!(fit_coxph(&obs, &CoxConfig::default()), Err(LifecycleError::NoEvents(1)));
    }

    #[test]
    fn zero_covariates_reduce_to_the_baseline() {
        let mut obs = cox_observations(100, &[0.5, 0.5], 0.1, 0.05, 2);
        for o in &mut obs {
            o.features = vec![0.0, 0.0];
        }
        let fit = fit_coxph_traced(&obs, &CoxConfig::default()).unwrap();
        assert_eq!(fit.model.beta, vec![0.0, 0.0]);
        assert_eq!(fit.iterations, 0);
        // Breslow with beta = 0 is Nelson-Aalen: sum of d / at-risk
        let mut times: Vec<f64> = obs.iter().map(|o| o.event_time).collect();
        times.sort_by(f64::total_cmp);
        let first_event = obs
            .iter()
            .filter(|o| !o.censored)
            .map(|o| o.event_time)
            .fold(f64::INFINITY, f64::min);
        let at_risk = times.iter().filter(|&&t| t >= first_event).count() as f64;
        assert_abs_diff_eq!(fit.model.baseline[0].cumulative_hazard, 1.0 / at_risk, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.model.risk(&[5.0, -3.0]), 1.0, epsilon = 0.0);
    }

    #[test]
    fn recovers_planted_coefficients() {
        let obs = cox_observations(2000, &[0.8, -0.5], 0.1, 0.03, 17);
        let fit = fit_coxph_traced(&obs, &CoxConfig::default()).unwrap();
        let b = fit.model.raw_beta();
        assert_abs_diff_eq!(b[0], 0.8, epsilon = 0.15);
        assert_abs_diff_eq!(b[1], -0.5, epsilon = 0.15);
        assert!(fit.gradient_norm < 1e-8);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
        }
    }

    #[test]
    fn breslow_is_a_nondecreasing_step_function() {
        let obs = cox_observations(300, &[0.3, 0.2], 0.2, 0.1, 8);
        let m = fit_coxph(&obs, &CoxConfig::default()).unwrap();
        assert!(m.baseline[0].cumulative_hazard > 0.0);
        assert_eq!(m.cumulative_hazard(0.0), 0.0);
        for w in m.baseline.windows(2) {
            assert!(w[0].t < w[1].t);
            assert!(w[0].cumulative_hazard <= w[1].cumulative_hazard);
        }
    }

    #[test]
    fn tied_times_use_breslow() {
        // two tied deaths at t=1 with beta = 0: increment 2 / 4
        let obs: Vec<SurvivalObservation> = [(1.0, false), (1.0, false), (2.0, true), (3.0, false)]
            .iter()
            .map(|&(t, c)| SurvivalObservation {
                features: vec![0.0],
                event_time: t,
                censored: c,
            })
            .collect();
        let m = fit_coxph(&obs, &CoxConfig::default()).unwrap();
        assert_abs_diff_eq!(m.cumulative_hazard(1.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.cumulative_hazard(2.9), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.cumulative_hazard(3.0), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn perfectly_collinear_columns_are_singular() {
        let mut obs = cox_observations(200, &[0.5], 0.1, 0.0, 4);
        for o in &mut obs {
            o.features.push(2.0 * o.features[0] + 1.0);
        }
        assert!(matches!(
            fit_coxph(&obs, &CoxConfig::default()),
            Err(LifecycleError::SingularHessian { .. })
        ));
        // a small ridge makes it well-posed
        let cfg = CoxConfig {
            ridge: 1e-3,
            ..Default::default()
        };
        assert!(fit_coxph(&obs, &cfg).is_ok());
    }

    #[test]
    fn model_json_uses_the_documented_keys() {
        let m = ContentLifecycleModel::from_baseline(
            vec![BaselineStep {
                t: 1.0,
                cumulative_hazard: 0.2,
            }],
            2,
            0.5,
        );
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["baseline"][0]["H0"], 0.2);
        assert_eq!(v["standardization"][1]["std"], 1.0);
        assert_eq!(v["survival_threshold"], 0.5);
        assert_eq!(v["beta"].as_array().unwrap().len(), 2);
    }

    fn fitted(seed: u64) -> ContentLifecycleModel {
        fit_coxph(&cox_observations(150, &[0.6, -0.4], 0.1, 0.05, seed), &CoxConfig::default()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn expiration_probability_is_monotone_in_time(
            seed in 0u64..40,
            x0 in -3.0f64..3.0,
            x1 in -3.0f64..3.0,
            t1 in 0.0f64..60.0,
            dt in 0.0f64..60.0,
        ) {
            let m = fitted(seed);
            let f = [x0, x1];
            let a = m.expiration_probability(&f, t1);
            let b = m.expiration_probability(&f, t1 + dt);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a);
            prop_assert!(m.expiration_probability(&f, 50.0) >= m.expiration_probability(&f, 20.0));
        }

        #[test]
        fn active_set_shrinks_over_time(seed in 0u64..40, t in 0.0f64..50.0, dt in 0.0f64..50.0) {
            let m = fitted(seed);
            let records: Vec<ContentRecord> = (0..20)
                .map(|i| ContentRecord {
                    content_id: ContentId::new(format!("c{i}")),
                    features: Some(vec![i as f64 / 5.0 - 2.0, 1.0 - i as f64 / 10.0]),
                    expired_at: if i % 3 == 0 { Some(i as f64 * 4.0) } else { None },
                })
                .collect();
            let early = active_content(&m, &records, t, 0.5);
            let late = active_content(&m, &records, t + dt, 0.5);
            prop_assert!(late.content_ids.is_subset(&early.content_ids));
        }

        #[test]
        fn rescaling_a_covariate_keeps_the_risk_ordering(seed in 0u64..20, scale in 0.01f64..100.0) {
            let obs = cox_observations(120, &[0.7, -0.3], 0.1, 0.05, seed);
            let m = fit_coxph(&obs, &CoxConfig::default()).unwrap();
            let scaled: Vec<SurvivalObservation> = obs
                .iter()
                .map(|o| SurvivalObservation {
                    features: vec![o.features[0] * scale, o.features[1]],
                    ..o.clone()
                })
                .collect();
            let ms = fit_coxph(&scaled, &CoxConfig::default()).unwrap();
            for (o, s) in obs.iter().zip(&scaled) {
                prop_assert!((m.linear_predictor(&o.features) - ms.linear_predictor(&s.features)).abs() < 1e-6);
            }
        }
    }
}
