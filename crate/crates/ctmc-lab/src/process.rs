//! Corruption processes and their closed-form quantities: forward kernels,
//! marginals, exact posteriors and discrete scores.
//!
//! The single-coordinate corruption CTMC has generator beta_t (1 pi^T - I),
//! so the transition kernel from time s to t is the mixture
//! `q_{t|s}(y|x) = r 1[y=x] + (1-r) pi(y)` with `r = alpha(t)/alpha(s)`,
//! and the time marginal is `p_t = alpha_t p_0 + (1-alpha_t) pi`.

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use serde::{Deserialize, Serialize};

pub const DIST_SUM_TOL: f64 = 1e-12;

/// Stationary distribution of the corruption process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stationary {
    Uniform,
    Masking { mask_index: usize },
}

/// A single-coordinate corruption process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub num_states: usize,
    pub stationary: Stationary,
    pub schedule: NoiseSchedule,
}

impl ProcessSpec {
    pub fn uniform(num_states: usize, schedule: NoiseSchedule) -> Result<Self> {
        let spec = ProcessSpec { num_states, stationary: Stationary::Uniform, schedule };
        spec.validate()?;
        Ok(spec)
    }

    pub fn masking(num_states: usize, mask_index: usize, schedule: NoiseSchedule) -> Result<Self> {
        let spec =
            ProcessSpec { num_states, stationary: Stationary::Masking { mask_index }, schedule };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states < 2 {
            return Err(Error::Domain(format!("num_states {} < 2", self.num_states)));
        }
        if let Stationary::Masking { mask_index } = self.stationary {
            if mask_index >= self.num_states {
                return Err(Error::Domain(format!(
                    "mask_index {mask_index} out of range for {} states",
                    self.num_states
                )));
            }
        }
        self.schedule.validate()
    }

    /// Stationary mass of state `y`.
    #[inline]
    pub fn pi(&self, y: usize) -> f64 {
        match self.stationary {
            Stationary::Uniform => 1.0 / self.num_states as f64,
            Stationary::Masking { mask_index } => {
                if y == mask_index {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_masking(&self) -> bool {
        matches!(self.stationary, Stationary::Masking { .. })
    }

    pub fn mask_index(&self) -> Option<usize> {
        match self.stationary {
            Stationary::Masking { mask_index } => Some(mask_index),
            Stationary::Uniform => None,
        }
    }

    pub fn stationary_dist(&self) -> Dist {
        let probs = (0..self.num_states).map(|y| self.pi(y)).collect();
        Dist::new_unchecked(probs)
    }
}

/// A finite probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    probs: Vec<f64>,
}

impl Dist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDist("empty".into()));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDist(format!("negative or non-finite entry {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DIST_SUM_TOL {
            return Err(Error::InvalidDist(format!("entries sum to {sum}")));
        }
        Ok(Dist { probs })
    }

    /// Wrap without validation; for values produced by exact identities.
    pub(crate) fn new_unchecked(probs: Vec<f64>) -> Self {
        Dist { probs }
    }

    /// Normalize a non-negative weight vector.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidDist("weights sum to zero".into()));
        }
        for w in &mut weights {
            if !(*w >= 0.0) {
                return Err(Error::InvalidDist(format!("negative weight {w}")));
            }
            *w /= sum;
        }
        Ok(Dist { probs: weights })
    }

    pub fn uniform(n: usize) -> Self {
        Dist { probs: vec![1.0 / n as f64; n] }
    }

    pub fn point(n: usize, i: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[i] = 1.0;
        Dist { probs }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// A row-stochastic matrix; row i is the conditional distribution given i.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    n_in: usize,
    n_out: usize,
    rows: Vec<f64>,
}

impl Channel {
    pub fn new(n_in: usize, n_out: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != n_in * n_out {
            return Err(Error::DimensionMismatch { expected: n_in * n_out, got: rows.len() });
        }
        for x in 0..n_in {
            let row = &rows[x * n_out..(x + 1) * n_out];
            if let Some(p) = row.iter().find(|&&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidDist(format!("row {x} has invalid entry {p}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDist(format!("row {x} sums to {sum}")));
            }
        }
        Ok(Channel { n_in, n_out, rows })
    }

    pub(crate) fn new_unchecked(n_in: usize, n_out: usize, rows: Vec<f64>) -> Self {
        Channel { n_in, n_out, rows }
    }

    #[inline]
    pub fn n_in(&self) -> usize {
        self.n_in
    }

    #[inline]
    pub fn n_out(&self) -> usize {
        self.n_out
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x * self.n_out..(x + 1) * self.n_out]
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.rows[x * self.n_out + y]
    }

    /// Push a distribution through the channel: out(y) = sum_x d(x) row_x(y).
    pub fn apply(&self, d: &Dist) -> Result<Dist> {
        if d.len() != self.n_in {
            return Err(Error::DimensionMismatch { expected: self.n_in, got: d.len() });
        }
        let mut out = vec![0.0; self.n_out];
        for x in 0..self.n_in {
            let px = d.get(x);
            if px == 0.0 {
                continue;
            }
            for (y, o) in out.iter_mut().enumerate() {
                *o += px * self.entry(x, y);
            }
        }
        Ok(Dist::new_unchecked(out))
    }

    /// Kernel composition: first `self`, then `other`.
    pub fn compose(&self, other: &Channel) -> Result<Channel> {
        if self.n_out != other.n_in {
            return Err(Error::DimensionMismatch { expected: self.n_out, got: other.n_in });
        }
        let mut rows = vec![0.0; self.n_in * other.n_out];
        for x in 0..self.n_in {
            for z in 0..self.n_out {
                let w = self.entry(x, z);
                if w == 0.0 {
                    continue;
                }
                for y in 0..other.n_out {
                    rows[x * other.n_out + y] += w * other.entry(z, y);
                }
            }
        }
        Ok(Channel::new_unchecked(self.n_in, other.n_out, rows))
    }

    pub fn max_abs_diff(&self, other: &Channel) -> f64 {
        self.rows
            .iter()
            .zip(other.rows.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// alpha(t) for the process schedule (the signal level of the marginal map).
pub fn alpha(schedule: &NoiseSchedule, t: f64) -> Result<f64> {
    schedule.alpha(t)
}

/// Closed-form forward transition kernel q_{t|s}.
pub fn forward_kernel(spec: &ProcessSpec, s: f64, t: f64) -> Result<Channel> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(if (0.0..=1.0).contains(&s) { t } else { s }));
    }
    if s > t {
        return Err(Error::InvertedInterval { lo: s, hi: t });
    }
    let r = spec.schedule.alpha_ratio(s, t);
    let n = spec.num_states;
    let mut rows = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            let mut v = (1.0 - r) * spec.pi(y);
            if x == y {
                v += r;
            }
            rows[x * n + y] = v;
        }
    }
    Ok(Channel::new_unchecked(n, n, rows))
}

/// Time marginal p_t = alpha_t p_0 + (1 - alpha_t) pi.
pub fn marginal(spec: &ProcessSpec, p0: &Dist, t: f64) -> Result<Dist> {
    if p0.len() != spec.num_states {
        return Err(Error::DimensionMismatch { expected: spec.num_states, got: p0.len() });
    }
    let a = spec.schedule.alpha(t)?;
    let probs =
        (0..spec.num_states).map(|y| a * p0.get(y) + (1.0 - a) * spec.pi(y)).collect();
    Ok(Dist::new_unchecked(probs))
}

/// The posterior mixture weight f_t(x) = alpha p0(x) / p_t(x).
#[inline]
pub fn posterior_weight(spec: &ProcessSpec, p0: &Dist, alpha_t: f64, x: usize) -> f64 {
    let num = alpha_t * p0.get(x);
    num / (num + (1.0 - alpha_t) * spec.pi(x))
}

/// One exact Bayes posterior row p_{0|t}(. | x).
///
/// Errors when x is unreachable at time t (p_t(x) = 0), instead of
/// fabricating a row.
pub fn posterior_row(spec: &ProcessSpec, p0: &Dist, t: f64, x: usize) -> Result<Vec<f64>> {
    if p0.len() != spec.num_states {
        return Err(Error::DimensionMismatch { expected: spec.num_states, got: p0.len() });
    }
    let a = spec.schedule.alpha(t)?;
    let pt_x = a * p0.get(x) + (1.0 - a) * spec.pi(x);
    if pt_x <= 0.0 {
        return Err(Error::UnreachableState { state: x, t });
    }
    let f = a * p0.get(x) / pt_x;
    let mut row: Vec<f64> = (0..spec.num_states).map(|y| (1.0 - f) * p0.get(y)).collect();
    row[x] += f;
    Ok(row)
}

/// Exact posterior channel; every state must be reachable.
pub fn posterior(spec: &ProcessSpec, p0: &Dist, t: f64) -> Result<Channel> {
    let n = spec.num_states;
    let mut rows = vec![0.0; n * n];
    for x in 0..n {
        let row = posterior_row(spec, p0, t, x)?;
        rows[x * n..(x + 1) * n].copy_from_slice(&row);
    }
    Ok(Channel::new_unchecked(n, n, rows))
}

/// Discrete score p_t(y)/p_t(x).
pub fn score(spec: &ProcessSpec, p0: &Dist, t: f64, x: usize, y: usize) -> Result<f64> {
    if p0.len() != spec.num_states {
        return Err(Error::DimensionMismatch { expected: spec.num_states, got: p0.len() });
    }
    let a = spec.schedule.alpha(t)?;
    let pt_x = a * p0.get(x) + (1.0 - a) * spec.pi(x);
    if pt_x <= 0.0 {
        return Err(Error::SingularScore { state: x });
    }
    let pt_y = a * p0.get(y) + (1.0 - a) * spec.pi(y);
    Ok(pt_y / pt_x)
}

/// Full score row s(x, .) written into `out`; out[x] = 1.
pub fn score_row_into(
    spec: &ProcessSpec,
    p0: &Dist,
    t: f64,
    x: usize,
    out: &mut [f64],
) -> Result<()> {
    let a = spec.schedule.alpha(t)?;
    let pt_x = a * p0.get(x) + (1.0 - a) * spec.pi(x);
    if pt_x <= 0.0 {
        return Err(Error::SingularScore { state: x });
    }
    for (y, o) in out.iter_mut().enumerate() {
        *o = (a * p0.get(y) + (1.0 - a) * spec.pi(y)) / pt_x;
    }
    out[x] = 1.0;
    Ok(())
}
