//! Periodic Gaussian-process model of normal traffic and the likelihood
//! detector built on it.
//!
//! Time is divided into periods of `P` measurement intervals, and the model
//! stores one mean per (sensor, phase) and one covariance per ordered sensor
//! pair, phase and lag `0..=P`. Covariance is zero beyond lag `P`. A detector
//! window is one full period starting at phase 0, so its `S·P` values are
//! jointly Gaussian with a mean vector and covariance matrix assembled from
//! these tables.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TrafficTrace;

const JITTER_SCALE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub period: usize,
    pub sensors: Vec<String>,
    pub interval_seconds: f64,
    /// `mean[s * P + phase]`.
    pub mean: Vec<f64>,
    /// `cov[((s1 * S + s2) * P + phase) * (P + 1) + lag]` is the covariance
    /// of sensor `s1` at `phase` with sensor `s2` at `phase + lag`.
    pub cov: Vec<f64>,
    pub jitter: f64,
}

/// A model with its window covariance factorized, ready for scoring.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    pub model: GpModel,
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    /// Jitter actually applied, after any escalation.
    pub jitter: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Variance,
    Median,
    Quantile(f64),
}

impl Statistic {
    pub fn quantile(q: f64) -> Statistic {
        Statistic::Quantile(q)
    }

    pub fn compute(self, values: &[f64]) -> f64 {
        let n = values.len() as f64;
        match self {
            Statistic::Mean => values.iter().sum::<f64>() / n,
            Statistic::Variance => {
                let m = values.iter().sum::<f64>() / n;
                values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0)
            }
            Statistic::Median => quantile_of(values, 0.5),
            Statistic::Quantile(q) => quantile_of(values, q),
        }
    }

    pub fn parse(text: &str) -> Result<Statistic> {
        match text {
            "mean" => Ok(Statistic::Mean),
            "variance" => Ok(Statistic::Variance),
            "median" => Ok(Statistic::Median),
            other => {
                let q = other
                    .strip_prefix("quantile:")
                    .and_then(|q| q.parse::<f64>().ok())
                    .filter(|q| (0.0..=1.0).contains(q))
                    .ok_or_else(|| Error::Parse(format!("unknown statistic `{other}`")))?;
                Ok(Statistic::quantile(q))
            }
        }
    }
}

/// Linear-interpolation quantile of unsorted data.
fn quantile_of(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn start_index(trace: &TrafficTrace) -> Result<usize> {
    let idx = trace.start / trace.interval_seconds;
    if idx < 0.0 || (idx - idx.round()).abs() > 1e-6 {
        return Err(Error::Misaligned(format!(
            "start {} s is not a whole number of {} s intervals",
            trace.start, trace.interval_seconds
        )));
    }
    Ok(idx.round() as usize)
}

/// Fits the periodic model by maximum likelihood (sample means and
/// covariances dividing by the number of samples).
pub fn train(trace: &TrafficTrace, period: usize) -> Result<GpModel> {
    trace.validate()?;
    if period == 0 {
        return Err(Error::InvalidInput("period must be positive".into()));
    }
    let n = trace.len();
    if n < 2 * period {
        return Err(Error::InsufficientData(format!(
            "{n} intervals is fewer than two periods of {period}"
        )));
    }
    let s_count = trace.sensors.len();
    let p = period;
    let offset = start_index(trace)?;
    let phase = |r: usize| (offset + r) % p;

    let mut sums = vec![0.0; s_count * p];
    let mut counts = vec![0usize; p];
    for (r, row) in trace.values.iter().enumerate() {
        let a = phase(r);
        counts[a] += 1;
        for s in 0..s_count {
            sums[s * p + a] += row[s];
        }
    }
    if let Some(a) = counts.iter().position(|&c| c < 2) {
        return Err(Error::DegenerateTrace(format!("phase {a} is observed fewer than twice")));
    }
    let mean: Vec<f64> = (0..s_count * p).map(|i| sums[i] / counts[i % p] as f64).collect();

    // Centered values, sensor-major for cache-friendly inner loops.
    let centered: Vec<Vec<f64>> = (0..s_count)
        .map(|s| {
            trace
                .values
                .iter()
                .enumerate()
                .map(|(r, row)| row[s] - mean[s * p + phase(r)])
                .collect()
        })
        .collect();

    let width = p + 1;
    let mut cov = vec![0.0; s_count * s_count * p * width];
    for s1 in 0..s_count {
        for s2 in 0..s_count {
            let (x, y) = (&centered[s1], &centered[s2]);
            let base = (s1 * s_count + s2) * p;
            for lag in 0..=p {
                let mut acc = vec![0.0; p];
                let mut cnt = vec![0usize; p];
                for r in 0..n.saturating_sub(lag) {
                    let a = phase(r);
                    acc[a] += x[r] * y[r + lag];
                    cnt[a] += 1;
                }
                for a in 0..p {
                    if cnt[a] > 0 {
                        cov[(base + a) * width + lag] = acc[a] / cnt[a] as f64;
                    }
                }
            }
        }
    }

    let mut model = GpModel {
        period,
        sensors: trace.sensors.clone(),
        interval_seconds: trace.interval_seconds,
        mean,
        cov,
        jitter: 0.0,
    };
    let diag_mean = model.window_covariance().diagonal().mean();
    model.jitter = JITTER_SCALE * diag_mean.max(1.0);
    Ok(model)
}

impl GpModel {
    pub fn dimension(&self) -> usize {
        self.sensors.len() * self.period
    }

    pub fn window_seconds(&self) -> f64 {
        self.period as f64 * self.interval_seconds
    }

    /// Covariance of sensor `s1` at `phase` with sensor `s2` at `phase + lag`.
    pub fn k(&self, s1: usize, s2: usize, phase: usize, lag: usize) -> f64 {
        let p = self.period;
        if lag > p {
            return 0.0;
        }
        let s = self.sensors.len();
        self.cov[((s1 * s + s2) * p + phase % p) * (p + 1) + lag]
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    /// Covariance of an aligned window, without jitter. Rows and columns are
    /// indexed `sensor * P + phase`.
    pub fn window_covariance(&self) -> DMatrix<f64> {
        self.window_covariance_at(0)
    }

    /// Covariance of a window whose first interval falls at phase `offset`.
    /// Rows and columns are indexed `sensor * P + position`.
    pub fn window_covariance_at(&self, offset: usize) -> DMatrix<f64> {
        let p = self.period;
        let d = self.dimension();
        DMatrix::from_fn(d, d, |i, j| {
            let (s1, a) = (i / p, i % p);
            let (s2, b) = (j / p, j % p);
            if a <= b {
                self.k(s1, s2, offset + a, b - a)
            } else {
                self.k(s2, s1, offset + b, a - b)
            }
        })
    }

    fn mean_vector_at(&self, offset: usize) -> DVector<f64> {
        let p = self.period;
        DVector::from_fn(self.dimension(), |i, _| self.mean[(i / p) * p + (offset + i % p) % p])
    }

    /// Factorizes the jittered window covariance, escalating the jitter by
    /// ten once if the first attempt fails.
    pub fn prepare(&self) -> Result<PreparedModel> {
        let (chol, log_det, jitter) = factorize(&self.window_covariance(), self.jitter)?;
        Ok(PreparedModel {
            model: self.clone(),
            mean: self.mean_vector(),
            chol,
            log_det,
            jitter,
        })
    }

    /// The same model with sensors listed in `order` (indices into the
    /// current sensor list).
    pub fn reorder(&self, order: &[usize]) -> GpModel {
        let p = self.period;
        let s = self.sensors.len();
        let width = p + 1;
        let mut mean = vec![0.0; s * p];
        let mut cov = vec![0.0; self.cov.len()];
        for (new1, &old1) in order.iter().enumerate() {
            mean[new1 * p..(new1 + 1) * p].copy_from_slice(&self.mean[old1 * p..(old1 + 1) * p]);
            for (new2, &old2) in order.iter().enumerate() {
                let src = (old1 * s + old2) * p * width;
                let dst = (new1 * s + new2) * p * width;
                cov[dst..dst + p * width].copy_from_slice(&self.cov[src..src + p * width]);
            }
        }
        GpModel {
            period: p,
            sensors: order.iter().map(|&i| self.sensors[i].clone()).collect(),
            interval_seconds: self.interval_seconds,
            mean,
            cov,
            jitter: self.jitter,
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let m: GpModel = serde_json::from_reader(r).map_err(|e| Error::Parse(e.to_string()))?;
        let s = m.sensors.len();
        if m.period == 0 || m.mean.len() != s * m.period || m.cov.len() != s * s * m.period * (m.period + 1) {
            return Err(Error::Parse("model tables do not match period and sensor count".into()));
        }
        Ok(m)
    }

    /// Independent aligned windows drawn from the model, concatenated into
    /// a trace. Negative draws are clamped to zero since counts cannot be
    /// negative.
    pub fn sample_trace<R: Rng>(&self, prepared: &PreparedModel, periods: usize, rng: &mut R) -> TrafficTrace {
        let p = self.period;
        let s = self.sensors.len();
        let mut values = vec![vec![0.0; s]; periods * p];
        for w in 0..periods {
            let x = prepared.sample_window(rng);
            for sensor in 0..s {
                for a in 0..p {
                    values[w * p + a][sensor] = x[sensor * p + a].max(0.0);
                }
            }
        }
        TrafficTrace {
            sensors: self.sensors.clone(),
            interval_seconds: self.interval_seconds,
            start: 0.0,
            values,
        }
    }
}

/// Cholesky factor and log-determinant of `sigma` plus jitter on the
/// diagonal. The jitter is raised tenfold once if the first attempt fails.
fn factorize(sigma: &DMatrix<f64>, jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64, f64)> {
    let sym = (sigma + sigma.transpose()) * 0.5;
    for jitter in [jitter, jitter * 10.0] {
        let mut m = sym.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            if log_det.is_finite() {
                return Ok((chol, log_det, jitter));
            }
        }
    }
    Err(Error::NonPositiveDefinite)
}

fn gaussian_log_density(chol: &Cholesky<f64, Dyn>, log_det: f64, diff: &DVector<f64>) -> Result<f64> {
    let z = chol
        .l_dirty()
        .solve_lower_triangular(diff)
        .ok_or(Error::NonPositiveDefinite)?;
    let d = diff.len() as f64;
    Ok(-0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared()))
}

/// One scored detector window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub start: f64,
    pub end: f64,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlarmReport {
    /// Window end times at which an alarm fired.
    pub alarms: Vec<f64>,
    pub fp_count: usize,
    /// Minutes from onset to the first alarm after it.
    pub delay_minutes: Option<f64>,
}

impl PreparedModel {
    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }

    /// Gaussian log-density of a window given as `values[sensor * P + phase]`.
    pub fn log_likelihood(&self, window: &[f64]) -> Result<f64> {
        let d = self.dimension();
        if window.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d.to_string(),
                got: window.len().to_string(),
            });
        }
        let diff = DVector::from_column_slice(window) - &self.mean;
        gaussian_log_density(&self.chol, self.log_det, &diff)
    }

    pub fn sample_window<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dimension();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.chol.l_dirty().lower_triangle() * z
    }

    fn check_trace(&self, trace: &TrafficTrace) -> Result<()> {
        if trace.sensors != self.model.sensors {
            return Err(Error::DimensionMismatch {
                expected: self.model.sensors.join(","),
                got: trace.sensors.join(","),
            });
        }
        if (trace.interval_seconds - self.model.interval_seconds).abs() > 1e-9 {
            return Err(Error::Misaligned("measurement interval differs from the model's".into()));
        }
        if start_index(trace)? % self.model.period != 0 {
            return Err(Error::Misaligned(format!(
                "trace starts at {} s, not at a window boundary",
                trace.start
            )));
        }
        Ok(())
    }

    fn window_values(&self, trace: &TrafficTrace, first_row: usize) -> Vec<f64> {
        let p = self.model.period;
        let s = trace.sensors.len();
        let mut out = vec![0.0; s * p];
        for a in 0..p {
            let row = &trace.values[first_row + a];
            for sensor in 0..s {
                out[sensor * p + a] = row[sensor];
            }
        }
        out
    }

    /// Scores every complete non-overlapping window, each starting at a
    /// period boundary.
    pub fn score(&self, trace: &TrafficTrace) -> Result<Vec<WindowScore>> {
        self.score_with(trace, false)
    }

    /// Like [`score`](Self::score), but with `overlapping` set a window
    /// starts at every interval. Windows that begin mid-period are scored
    /// against the covariance for their starting phase.
    pub fn score_with(&self, trace: &TrafficTrace, overlapping: bool) -> Result<Vec<WindowScore>> {
        self.check_trace(trace)?;
        let p = self.model.period;
        if !overlapping {
            let count = trace.len() / p;
            let mut out = Vec::with_capacity(count);
            for w in 0..count {
                let row = w * p;
                let ll = self.log_likelihood(&self.window_values(trace, row))?;
                out.push(WindowScore {
                    start: trace.timestamp(row),
                    end: trace.timestamp(row + p),
                    log_likelihood: ll,
                });
            }
            return Ok(out);
        }
        let mut factors = Vec::with_capacity(p);
        for offset in 0..p {
            let (chol, log_det, _) = factorize(&self.model.window_covariance_at(offset), self.jitter)?;
            factors.push((self.model.mean_vector_at(offset), chol, log_det));
        }
        let count = (trace.len() + 1).saturating_sub(p);
        let mut out = Vec::with_capacity(count);
        for row in 0..count {
            let (mean, chol, log_det) = &factors[row % p];
            let diff = DVector::from_column_slice(&self.window_values(trace, row)) - mean;
            out.push(WindowScore {
                start: trace.timestamp(row),
                end: trace.timestamp(row + p),
                log_likelihood: gaussian_log_density(chol, *log_det, &diff)?,
            });
        }
        Ok(out)
    }

    /// Raises an alarm for every window scoring below `ln_tau`.
    pub fn detect(&self, trace: &TrafficTrace, ln_tau: f64, onset: Option<f64>) -> Result<AlarmReport> {
        Ok(alarms_from_scores(&self.score(trace)?, ln_tau, onset))
    }

    /// Posterior predictive p-value per sensor: the fraction of `n_rep`
    /// model windows whose statistic is at least the observed one. The
    /// observed statistic is the average of the statistic over the observed
    /// trace's windows.
    pub fn posterior_predictive_check<R: Rng>(
        &self,
        observed: &TrafficTrace,
        statistic: Statistic,
        n_rep: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_trace(observed)?;
        let p = self.model.period;
        let s = observed.sensors.len();
        let windows = observed.len() / p;
        if windows == 0 {
            return Err(Error::InsufficientData("observed trace is shorter than one window".into()));
        }
        if n_rep == 0 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        let mut t_obs = vec![0.0; s];
        for w in 0..windows {
            let x = self.window_values(observed, w * p);
            for sensor in 0..s {
                t_obs[sensor] += statistic.compute(&x[sensor * p..(sensor + 1) * p]) / windows as f64;
            }
        }
        let mut exceed = vec![0usize; s];
        for _ in 0..n_rep {
            let x = self.sample_window(rng);
            for sensor in 0..s {
                if statistic.compute(&x.as_slice()[sensor * p..(sensor + 1) * p]) >= t_obs[sensor] {
                    exceed[sensor] += 1;
                }
            }
        }
        Ok(exceed.iter().map(|&e| e as f64 / n_rep as f64).collect())
    }
}

pub fn alarms_from_scores(scores: &[WindowScore], ln_tau: f64, onset: Option<f64>) -> AlarmReport {
    let alarms: Vec<f64> = scores
        .iter()
        .filter(|w| w.log_likelihood < ln_tau)
        .map(|w| w.end)
        .collect();
    let (fp_count, delay_minutes) = match onset {
        Some(t0) => {
            let fp = alarms.iter().filter(|&&t| t <= t0).count();
            let delay = alarms.iter().find(|&&t| t > t0).map(|&t| (t - t0) / 60.0);
            (fp, delay)
        }
        None => (alarms.len(), None),
    };
    AlarmReport {
        alarms,
        fp_count,
        delay_minutes,
    }
}

/// Seconds in the 30-day month used to normalize false-positive counts.
pub const MONTH_SECONDS: f64 = 30.0 * 24.0 * 3600.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub ln_tau: f64,
    pub fp_per_month: f64,
    pub delay_minutes: f64,
}

/// False positives on `normal` and detection delay on `attacked` for each
/// threshold, reduced to the Pareto-optimal points sorted by fp rate.
/// Thresholds that never detect the attack are dropped.
pub fn pareto_curve(
    prepared: &PreparedModel,
    normal: &TrafficTrace,
    attacked: &TrafficTrace,
    onset: f64,
    thresholds: &[f64],
) -> Result<Vec<ParetoPoint>> {
    let normal_scores = prepared.score(normal)?;
    let attacked_scores = prepared.score(attacked)?;
    let months = normal.len() as f64 * normal.interval_seconds / MONTH_SECONDS;
    let mut points: Vec<ParetoPoint> = thresholds
        .iter()
        .filter_map(|&tau| {
            let fp = alarms_from_scores(&normal_scores, tau, None).fp_count as f64 / months;
            alarms_from_scores(&attacked_scores, tau, Some(onset))
                .delay_minutes
                .map(|delay| ParetoPoint {
                    ln_tau: tau,
                    fp_per_month: fp,
                    delay_minutes: delay,
                })
        })
        .collect();
    points.sort_by(|a, b| {
        a.fp_per_month
            .total_cmp(&b.fp_per_month)
            .then(a.delay_minutes.total_cmp(&b.delay_minutes))
    });
    let mut front: Vec<ParetoPoint> = Vec::new();
    for pt in points {
        if front.last().map_or(true, |last| pt.delay_minutes < last.delay_minutes) {
            front.push(pt);
        }
    }
    Ok(front)
}

/// The largest threshold that raises no alarm on `normal`: just below its
/// lowest window score.
pub fn zero_fp_threshold(prepared: &PreparedModel, normal: &TrafficTrace) -> Result<f64> {
    let scores = prepared.score(normal)?;
    let min = scores
        .iter()
        .map(|w| w.log_likelihood)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::InsufficientData("no complete window to score".into()));
    }
    Ok(min - 1e-6 * min.abs().max(1.0))
}

/// `count` thresholds spread over the distinct window scores of both
/// traces, each placed just above a score so that window alarms.
pub fn threshold_grid(scores: &[f64], count: usize) -> Vec<f64> {
    let mut s: Vec<f64> = scores.iter().copied().filter(|v| v.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    if s.is_empty() || count == 0 {
        return Vec::new();
    }
    let mut out: Vec<f64> = (0..count)
        .map(|i| {
            let idx = if count == 1 { 0 } else { i * (s.len() - 1) / (count - 1) };
            s[idx] + 1e-9 * s[idx].abs().max(1.0)
        })
        .collect();
    out.dedup();
    out
}

/// Kullback-Leibler divergence `KL(N(m1, S1) || N(m2, S2))` between the
/// window distributions of two models with identical layout.
pub fn window_kl(a: &PreparedModel, b: &PreparedModel) -> f64 {
    let d = a.dimension() as f64;
    let la = a.chol.l();
    // tr(S2^-1 S1) = ||L2^-1 L1||_F^2
    let m = b.chol.l_dirty().solve_lower_triangular(&la).expect("triangular solve");
    let trace_term = m.norm_squared();
    let diff = &b.mean - &a.mean;
    let z = b.chol.l_dirty().solve_lower_triangular(&diff).expect("triangular solve");
    0.5 * (trace_term + z.norm_squared() - d + b.log_det - a.log_det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_model(s: usize, p: usize, mean: f64) -> GpModel {
        let width = p + 1;
        let mut cov = vec![0.0; s * s * p * width];
        for sensor in 0..s {
            for a in 0..p {
                cov[((sensor * s + sensor) * p + a) * width] = 1.0;
            }
        }
        GpModel {
            period: p,
            sensors: (0..s).map(|i| format!("s{i}")).collect(),
            interval_seconds: 15.0,
            mean: vec![mean; s * p],
            cov,
            jitter: 0.0,
        }
    }

    /// Model with correlated sensors and phases to exercise off-diagonal terms.
    fn correlated_model() -> GpModel {
        let (s, p) = (2, 3);
        let mut m = identity_model(s, p, 10.0);
        m.mean = vec![10.0, 12.0, 8.0, 5.0, 6.0, 7.0];
        let width = p + 1;
        for a in 0..p {
            m.cov[((0 * s + 1) * p + a) * width] = 0.5;
            m.cov[((1 * s + 0) * p + a) * width] = 0.5;
            if a + 1 < p {
                m.cov[((0 * s + 0) * p + a) * width + 1] = 0.3;
            }
        }
        m.jitter = 1e-9;
        m
    }

    #[test]
    fn log_likelihood_at_mean_with_identity() {
        let m = identity_model(2, 3, 1.0);
        let prep = m.prepare().unwrap();
        let ll = prep.log_likelihood(&[1.0; 6]).unwrap();
        let expected = -3.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((ll - expected).abs() < 1e-9);
        let far = prep.log_likelihood(&[11.0; 6]).unwrap();
        assert!(far < ll - 50.0 * 6.0 * 0.99);
        assert!(prep.log_likelihood(&[1.0; 5]).is_err());
    }

    #[test]
    fn constant_trace_has_zero_covariance() {
        let t = TrafficTrace::new(vec!["a".into()], 15.0, 0.0, vec![vec![4.0]; 40]).unwrap();
        let m = train(&t, 4).unwrap();
        assert!(m.mean.iter().all(|&v| v == 4.0));
        assert!(m.cov.iter().all(|&v| v == 0.0));
        assert!(m.jitter > 0.0);
        m.prepare().unwrap();
    }

    #[test]
    fn training_needs_two_periods() {
        let t = TrafficTrace::new(vec!["a".into()], 15.0, 0.0, vec![vec![1.0]; 7]).unwrap();
        assert!(matches!(train(&t, 4), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn month_at_48_minutes_has_192_phases() {
        let t = TrafficTrace::new(vec!["a".into()], 15.0, 0.0, vec![vec![1.0]; 192 * 3]).unwrap();
        let m = train(&t, 192).unwrap();
        assert_eq!(m.period, 192);
        assert_eq!(m.mean.len(), 192);
    }

    #[test]
    fn recovers_mean_from_samples() {
        let truth = correlated_model();
        let prep = truth.prepare().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let trace = truth.sample_trace(&prep, n, &mut rng);
        let fit = train(&trace, 3).unwrap();
        for (i, (&a, &b)) in fit.mean.iter().zip(&truth.mean).enumerate() {
            let sd = truth.k(i / 3, i / 3, i % 3, 0).sqrt();
            assert!((a - b).abs() < 3.0 * sd / (n as f64).sqrt() * 1.5, "{i}: {a} vs {b}");
        }
    }

    #[test]
    fn kl_shrinks_with_more_training_data() {
        let truth = correlated_model();
        let prep = truth.prepare().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kls: Vec<f64> = [100, 1000, 10_000]
            .iter()
            .map(|&n| {
                let fit = train(&truth.sample_trace(&prep, n, &mut rng), 3).unwrap();
                window_kl(&prep, &fit.prepare().unwrap())
            })
            .collect();
        assert!(kls[0] > kls[1] && kls[1] > kls[2], "{kls:?}");
    }

    #[test]
    fn sensor_order_does_not_change_likelihood() {
        let m = correlated_model();
        let prep = m.prepare().unwrap();
        let window = [9.0, 12.5, 7.0, 5.5, 6.1, 6.0];
        let swapped = m.reorder(&[1, 0]);
        let sw = [5.5, 6.1, 6.0, 9.0, 12.5, 7.0];
        let a = prep.log_likelihood(&window).unwrap();
        let b = swapped.prepare().unwrap().log_likelihood(&sw).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn window_covariance_is_symmetric_positive_definite() {
        let truth = correlated_model();
        let prep = truth.prepare().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fit = train(&truth.sample_trace(&prep, 200, &mut rng), 3).unwrap();
        let sigma = fit.window_covariance();
        assert!((&sigma - sigma.transpose()).amax() < 1e-12);
        let mut jittered = sigma.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += fit.jitter;
        }
        let eig = jittered.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn alarm_accounting() {
        let scores = vec![
            WindowScore { start: 0.0, end: 60.0, log_likelihood: -5.0 },
            WindowScore { start: 60.0, end: 120.0, log_likelihood: -50.0 },
            WindowScore { start: 120.0, end: 180.0, log_likelihood: -1.0 },
            WindowScore { start: 180.0, end: 240.0, log_likelihood: -80.0 },
        ];
        let r = alarms_from_scores(&scores, -10.0, Some(130.0));
        assert_eq!(r.alarms, vec![120.0, 240.0]);
        assert_eq!(r.fp_count, 1);
        assert!((r.delay_minutes.unwrap() - 110.0 / 60.0).abs() < 1e-12);
        assert!(alarms_from_scores(&scores, f64::NEG_INFINITY, None).alarms.is_empty());
    }

    #[test]
    fn ppc_calibration() {
        let truth = correlated_model();
        let prep = truth.prepare().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // Observed equal to the mean everywhere.
        let mut at_mean = truth.sample_trace(&prep, 10, &mut rng);
        for w in 0..10 {
            for a in 0..3 {
                for s in 0..2 {
                    at_mean.values[w * 3 + a][s] = truth.mean[s * 3 + a];
                }
            }
        }
        let p = prep.posterior_predictive_check(&at_mean, Statistic::Mean, 4000, &mut rng).unwrap();
        assert!(p.iter().all(|&v| (v - 0.5).abs() < 0.05), "{p:?}");
        let mut shifted = at_mean.clone();
        for row in &mut shifted.values {
            for v in row.iter_mut() {
                *v += 5.0;
            }
        }
        let p = prep.posterior_predictive_check(&shifted, Statistic::Mean, 4000, &mut rng).unwrap();
        assert!(p.iter().all(|&v| v < 0.01), "{p:?}");
    }

    #[test]
    fn statistics() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(Statistic::Mean.compute(&v), 2.5);
        assert!((Statistic::Variance.compute(&v) - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(Statistic::Median.compute(&v), 2.5);
        assert_eq!(Statistic::parse("quantile:0.75").unwrap().compute(&v), 3.25);
        assert!(Statistic::parse("mode").is_err());
    }

    #[test]
    fn overlapping_windows_agree_at_period_boundaries() {
        let m = correlated_model();
        let prepared = m.prepare().unwrap();
        let trace = m.sample_trace(&prepared, 6, &mut ChaCha8Rng::seed_from_u64(4));
        let aligned = prepared.score(&trace).unwrap();
        let all = prepared.score_with(&trace, true).unwrap();
        assert_eq!(all.len(), trace.len() - m.period + 1);
        for (w, score) in aligned.iter().enumerate() {
            let same = all[w * m.period];
            assert_eq!(same.start, score.start);
            assert!((same.log_likelihood - score.log_likelihood).abs() < 1e-9);
        }
    }

    #[test]
    fn misaligned_stream_is_rejected() {
        let m = identity_model(1, 4, 0.0).prepare().unwrap();
        let t = TrafficTrace::new(vec!["s0".into()], 15.0, 15.0, vec![vec![0.0]; 8]).unwrap();
        assert!(matches!(m.score(&t), Err(Error::Misaligned(_))));
    }

    #[test]
    fn threshold_grid_spans_scores() {
        let g = threshold_grid(&[-5.0, -1.0, -3.0, f64::NEG_INFINITY], 3);
        assert_eq!(g.len(), 3);
        assert!(g[0] > -5.0 && g[0] < -4.99);
        assert!(g[2] > -1.0);
    }
}
