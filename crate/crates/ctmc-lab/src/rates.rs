//! Reverse-time rate construction.
//!
//! All rates use the source -> destination convention: `row[y]` is the
//! instantaneous rate of jumping from the current state to `y`. With the
//! forward generator beta_t (1 pi^T - I):
//!
//! * forward:  fwd(x -> y)  = beta pi(y)
//! * reverse:  rev(x -> y)  = s(x,y) * fwd(y -> x) = s(x,y) beta pi(x)
//! * DPF:      (rev(x -> y) - fwd(x -> y))_+   (redundant pair flow removed)
//! * nu:       DPF + nu * (rev + fwd)          (rev + fwd satisfies detailed
//!                                              balance under the exact score)
//!
//! Row builders are the unit the samplers consume; dense matrices exist for
//! test oracles at S <= 64.

use crate::error::{Error, Result};
use crate::process::{marginal, score_row_into, Dist, ProcessSpec};
use serde::{Deserialize, Serialize};

pub const MAX_DENSE_STATES: usize = 64;

/// Dense CTMC generator, diagonal = -(row sum of off-diagonals).
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl RateMatrix {
    pub fn from_off_diagonal(n: usize, mut entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        for x in 0..n {
            let mut sum = 0.0;
            for y in 0..n {
                if x == y {
                    continue;
                }
                let v = entries[x * n + y];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Domain(format!("negative off-diagonal rate {v}")));
                }
                sum += v;
            }
            entries[x * n + x] = -sum;
        }
        Ok(RateMatrix { n, entries })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.n + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.entries[x * self.n..(x + 1) * self.n]
    }

    /// Off-diagonal rates >= 0 and rows summing to zero.
    pub fn validate(&self) -> Result<()> {
        for x in 0..self.n {
            let mut sum = 0.0;
            for y in 0..self.n {
                let v = self.entry(x, y);
                if x != y && v < 0.0 {
                    return Err(Error::Domain(format!("rate({x}->{y}) = {v} < 0")));
                }
                sum += v;
            }
            if sum.abs() > 1e-12 * (1.0 + self.entry(x, x).abs()) {
                return Err(Error::Domain(format!("row {x} sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Schedule for the extra stochasticity level nu_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StochasticitySchedule {
    Constant { nu: f64 },
    /// Disjoint `[t_lo, t_hi)` intervals; nu = 0 outside all of them.
    Piecewise { pieces: Vec<NuPiece> },
    /// nu_t = alpha_t (1 - alpha_s) / (alpha_s - alpha_t) for the step t -> s.
    MaxContraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuPiece {
    pub t_lo: f64,
    pub t_hi: f64,
    pub nu: f64,
}

impl StochasticitySchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StochasticitySchedule::Constant { nu } => {
                if *nu < 0.0 {
                    return Err(Error::Domain(format!("negative nu {nu}")));
                }
            }
            StochasticitySchedule::Piecewise { pieces } => {
                let mut sorted = pieces.clone();
                sorted.sort_by(|a, b| a.t_lo.total_cmp(&b.t_lo));
                for w in sorted.windows(2) {
                    if w[0].t_hi > w[1].t_lo {
                        return Err(Error::Domain("overlapping nu pieces".into()));
                    }
                }
                if pieces.iter().any(|p| p.nu < 0.0 || p.t_lo >= p.t_hi) {
                    return Err(Error::Domain("invalid nu piece".into()));
                }
            }
            StochasticitySchedule::MaxContraction => {}
        }
        Ok(())
    }

    /// nu for a reverse step from `t` down to `s_next`.
    pub fn nu_at(&self, spec: &ProcessSpec, t: f64, s_next: f64) -> Result<f64> {
        match self {
            StochasticitySchedule::Constant { nu } => Ok(*nu),
            StochasticitySchedule::Piecewise { pieces } => Ok(pieces
                .iter()
                .find(|p| p.t_lo <= t && t < p.t_hi)
                .map(|p| p.nu)
                .unwrap_or(0.0)),
            StochasticitySchedule::MaxContraction => {
                let a_t = spec.schedule.alpha(t)?;
                let a_s = spec.schedule.alpha(s_next)?;
                if a_s <= a_t {
                    return Err(Error::Domain(format!(
                        "max_contraction needs alpha(s) > alpha(t); got {a_s} <= {a_t}"
                    )));
                }
                Ok(a_t * (1.0 - a_s) / (a_s - a_t))
            }
        }
    }
}

/// Forward rate row: out[y] = beta pi(y), out[x] = 0.
#[inline]
pub fn forward_rate_row_into(spec: &ProcessSpec, beta_t: f64, x: usize, out: &mut [f64]) {
    for (y, o) in out.iter_mut().enumerate() {
        *o = beta_t * spec.pi(y);
    }
    out[x] = 0.0;
}

/// Detailed-balance reverse rate row: out[y] = s(x,y) beta pi(x), out[x] = 0.
#[inline]
pub fn reverse_rate_row_into(
    spec: &ProcessSpec,
    beta_t: f64,
    score_row: &[f64],
    x: usize,
    out: &mut [f64],
) {
    let w = beta_t * spec.pi(x);
    for (y, o) in out.iter_mut().enumerate() {
        *o = w * score_row[y];
    }
    out[x] = 0.0;
}

/// DPF rate row: out[y] = (s(x,y) beta pi(x) - beta pi(y))_+, out[x] = 0.
#[inline]
pub fn dpf_rate_row_into(
    spec: &ProcessSpec,
    beta_t: f64,
    score_row: &[f64],
    x: usize,
    out: &mut [f64],
) {
    let w = beta_t * spec.pi(x);
    for (y, o) in out.iter_mut().enumerate() {
        *o = (w * score_row[y] - beta_t * spec.pi(y)).max(0.0);
    }
    out[x] = 0.0;
}

/// Detailed-balance stochasticity row: reverse + forward.
#[inline]
pub fn db_rate_row_into(
    spec: &ProcessSpec,
    beta_t: f64,
    score_row: &[f64],
    x: usize,
    out: &mut [f64],
) {
    let w = beta_t * spec.pi(x);
    for (y, o) in out.iter_mut().enumerate() {
        *o = w * score_row[y] + beta_t * spec.pi(y);
    }
    out[x] = 0.0;
}

/// nu-augmented row: DPF + nu * (reverse + forward). Errors on negative nu.
pub fn nu_rate_row_into(
    spec: &ProcessSpec,
    beta_t: f64,
    score_row: &[f64],
    nu: f64,
    x: usize,
    out: &mut [f64],
) -> Result<()> {
    if nu < 0.0 || !nu.is_finite() {
        return Err(Error::Domain(format!("invalid nu {nu}")));
    }
    let w = beta_t * spec.pi(x);
    for (y, o) in out.iter_mut().enumerate() {
        let rev = w * score_row[y];
        let fwd = beta_t * spec.pi(y);
        *o = (rev - fwd).max(0.0) + nu * (rev + fwd);
    }
    out[x] = 0.0;
    Ok(())
}

fn dense_guard(spec: &ProcessSpec) -> Result<()> {
    if spec.num_states > MAX_DENSE_STATES {
        return Err(Error::Domain(format!(
            "dense rate matrices are for test oracles at S <= {MAX_DENSE_STATES}; got {}",
            spec.num_states
        )));
    }
    Ok(())
}

/// Dense forward generator beta_t (1 pi^T - I).
pub fn forward_rate(spec: &ProcessSpec, t: f64) -> Result<RateMatrix> {
    dense_guard(spec)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    let n = spec.num_states;
    let beta_t = spec.schedule.beta(t);
    let mut entries = vec![0.0; n * n];
    for x in 0..n {
        forward_rate_row_into(spec, beta_t, x, &mut entries[x * n..(x + 1) * n]);
    }
    RateMatrix::from_off_diagonal(n, entries)
}

fn exact_score_matrix_rows<F>(spec: &ProcessSpec, p0: &Dist, t: f64, mut fill: F) -> Result<RateMatrix>
where
    F: FnMut(&ProcessSpec, f64, &[f64], usize, &mut [f64]),
{
    dense_guard(spec)?;
    let n = spec.num_states;
    let beta_t = spec.schedule.beta(t);
    let pt = marginal(spec, p0, t)?;
    let mut entries = vec![0.0; n * n];
    let mut srow = vec![0.0; n];
    for x in 0..n {
        if pt.get(x) <= 0.0 {
            // unreachable source: no mass can sit there, emit a zero row
            continue;
        }
        score_row_into(spec, p0, t, x, &mut srow)?;
        fill(spec, beta_t, &srow, x, &mut entries[x * n..(x + 1) * n]);
    }
    RateMatrix::from_off_diagonal(n, entries)
}

/// Dense exact-score reverse generator (test oracle).
pub fn reverse_rate_matrix(spec: &ProcessSpec, p0: &Dist, t: f64) -> Result<RateMatrix> {
    exact_score_matrix_rows(spec, p0, t, reverse_rate_row_into)
}

/// Dense exact-score DPF generator (test oracle).
pub fn dpf_rate_matrix(spec: &ProcessSpec, p0: &Dist, t: f64) -> Result<RateMatrix> {
    exact_score_matrix_rows(spec, p0, t, dpf_rate_row_into)
}

/// Dense exact-score nu-augmented generator (test oracle).
pub fn nu_rate_matrix(spec: &ProcessSpec, p0: &Dist, t: f64, nu: f64) -> Result<RateMatrix> {
    if nu < 0.0 {
        return Err(Error::Domain(format!("negative nu {nu}")));
    }
    exact_score_matrix_rows(spec, p0, t, |spec, beta_t, srow, x, out| {
        nu_rate_row_into(spec, beta_t, srow, nu, x, out).expect("nu validated")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::NoiseSchedule;

    fn uniform2() -> ProcessSpec {
        ProcessSpec::uniform(2, NoiseSchedule::linear()).unwrap()
    }

    /// time with alpha = 0.5 under the linear unit schedule
    fn t_half() -> f64 {
        2.0f64.ln()
    }

    #[test]
    fn forward_rate_uniform_offdiag() {
        let r = forward_rate(&uniform2(), 0.3).unwrap();
        assert!((r.entry(0, 1) - 0.5).abs() < 1e-15);
        assert!((r.entry(1, 0) - 0.5).abs() < 1e-15);
        r.validate().unwrap();
    }

    #[test]
    fn forward_rate_masking_structure() {
        let spec = ProcessSpec::masking(4, 3, NoiseSchedule::linear()).unwrap();
        let r = forward_rate(&spec, 0.5).unwrap();
        for x in 0..3 {
            assert!((r.entry(x, 3) - 1.0).abs() < 1e-15);
            for y in 0..3 {
                if x != y {
                    assert_eq!(r.entry(x, y), 0.0);
                }
            }
        }
    }

    #[test]
    fn reverse_rate_worked_example() {
        // uniform S=2, beta=1, p_t=(0.75,0.25):
        // rate(1->0) = 3 * 0.5 = 1.5, rate(0->1) = (1/3) * 0.5
        let spec = uniform2();
        let p0 = Dist::new(vec![0.875, 0.125]).unwrap(); // alpha=0.5 -> p_t=(0.75,0.25)? No:
        // choose p0 directly such that marginal at t_half is (0.75, 0.25):
        // p_t = 0.5 p0 + 0.25 -> p0 = (1.0, 0.0)
        let p0 = Dist::new(vec![1.0, 0.0]).unwrap();
        let t = t_half();
        let _ = p0;
        let p0 = Dist::new(vec![1.0, 0.0]).unwrap();
        let m = marginal(&spec, &p0, t).unwrap();
        assert!((m.get(0) - 0.75).abs() < 1e-12);
        let r = reverse_rate_matrix(&spec, &p0, t).unwrap();
        assert!((r.entry(1, 0) - 1.5).abs() < 1e-12);
        assert!((r.entry(0, 1) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn reverse_rate_masking_structure() {
        let spec = ProcessSpec::masking(3, 2, NoiseSchedule::linear()).unwrap();
        let p0 = Dist::new(vec![0.6, 0.4, 0.0]).unwrap();
        let t = 0.4;
        let r = reverse_rate_matrix(&spec, &p0, t).unwrap();
        // non-mask sources have zero rates
        for y in 0..3 {
            if y != 0 {
                assert_eq!(r.entry(0, y), 0.0);
            }
            if y != 1 {
                assert_eq!(r.entry(1, y), 0.0);
            }
        }
        // mask -> y rate equals s(mask, y) * beta
        let beta_t = spec.schedule.beta(t);
        for y in 0..2 {
            let s = crate::process::score(&spec, &p0, t, 2, y).unwrap();
            assert!((r.entry(2, y) - s * beta_t).abs() < 1e-12);
        }
    }

    #[test]
    fn reverse_equals_forward_at_stationarity() {
        // p0 = pi (uniform): scores are 1, reverse = forward
        let spec = ProcessSpec::uniform(5, NoiseSchedule::linear()).unwrap();
        let p0 = Dist::uniform(5);
        let rev = reverse_rate_matrix(&spec, &p0, 0.5).unwrap();
        let fwd = forward_rate(&spec, 0.5).unwrap();
        for x in 0..5 {
            for y in 0..5 {
                assert!((rev.entry(x, y) - fwd.entry(x, y)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn dpf_worked_example() {
        let spec = uniform2();
        let p0 = Dist::new(vec![1.0, 0.0]).unwrap();
        let t = t_half();
        let d = dpf_rate_matrix(&spec, &p0, t).unwrap();
        assert!((d.entry(1, 0) - 1.0).abs() < 1e-12);
        assert_eq!(d.entry(0, 1), 0.0);
    }

    #[test]
    fn dpf_zero_at_stationarity() {
        let spec = ProcessSpec::uniform(4, NoiseSchedule::linear()).unwrap();
        let p0 = Dist::uniform(4);
        let d = dpf_rate_matrix(&spec, &p0, 0.5).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                assert!(d.entry(x, y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dpf_equals_reverse_for_masking() {
        // masking has no mutual flow: forward rate out of non-mask states is 0
        let spec = ProcessSpec::masking(4, 3, NoiseSchedule::linear()).unwrap();
        let p0 = Dist::new(vec![0.2, 0.5, 0.3, 0.0]).unwrap();
        let d = dpf_rate_matrix(&spec, &p0, 0.5).unwrap();
        let r = reverse_rate_matrix(&spec, &p0, 0.5).unwrap();
        // rows out of the mask state agree; non-mask rows are zero in both
        for y in 0..4 {
            assert!((d.entry(3, y) - r.entry(3, y)).abs() < 1e-13);
        }
    }

    #[test]
    fn nu_rate_worked_example() {
        // uniform S=2, p_t=(0.75,0.25), beta=1, nu=1:
        // rate(0->1) = 0 + 1*(1/6 + 1/2) = 2/3
        let spec = uniform2();
        let p0 = Dist::new(vec![1.0, 0.0]).unwrap();
        let t = t_half();
        let m = nu_rate_matrix(&spec, &p0, t, 1.0).unwrap();
        assert!((m.entry(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        // nu = 0 reduces exactly to DPF
        let m0 = nu_rate_matrix(&spec, &p0, t, 0.0).unwrap();
        let d = dpf_rate_matrix(&spec, &p0, t).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(m0.entry(x, y), d.entry(x, y));
            }
        }
    }

    #[test]
    fn nu_rate_rejects_negative() {
        let spec = uniform2();
        let mut out = vec![0.0; 2];
        assert!(nu_rate_row_into(&spec, 1.0, &[1.0, 1.0], -0.5, 0, &mut out).is_err());
    }

    #[test]
    fn redundancy_removal_pairs() {
        // under the exact score, min(flow(x->y), flow(y->x)) = 0 for DPF
        let spec = ProcessSpec::uniform(6, NoiseSchedule::geometric_default()).unwrap();
        let p0 = Dist::new(vec![0.05, 0.3, 0.15, 0.2, 0.1, 0.2]).unwrap();
        for &t in &[0.02, 0.05, 0.1, 0.3] {
            let pt = marginal(&spec, &p0, t).unwrap();
            let d = dpf_rate_matrix(&spec, &p0, t).unwrap();
            for x in 0..6 {
                for y in (x + 1)..6 {
                    let fxy = pt.get(x) * d.entry(x, y);
                    let fyx = pt.get(y) * d.entry(y, x);
                    assert!(fxy.min(fyx) < 1e-14, "mutual flow at t={t} ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn db_row_satisfies_detailed_balance() {
        let spec = ProcessSpec::uniform(5, NoiseSchedule::linear()).unwrap();
        let p0 = Dist::new(vec![0.1, 0.25, 0.3, 0.05, 0.3]).unwrap();
        let t = 0.3;
        let pt = marginal(&spec, &p0, t).unwrap();
        let beta_t = spec.schedule.beta(t);
        let mut rows = vec![vec![0.0; 5]; 5];
        let mut srow = vec![0.0; 5];
        for x in 0..5 {
            score_row_into(&spec, &p0, t, x, &mut srow).unwrap();
            db_rate_row_into(&spec, beta_t, &srow, x, &mut rows[x]);
        }
        for x in 0..5 {
            for y in 0..5 {
                if x == y {
                    continue;
                }
                let lhs = pt.get(x) * rows[x][y];
                let rhs = pt.get(y) * rows[y][x];
                assert!((lhs - rhs).abs() < 1e-13, "({x},{y})");
            }
        }
    }

    #[test]
    fn nonnegative_rows_for_arbitrary_scores() {
        // any (valid, nonnegative) score row must give nonnegative rates
        let spec = ProcessSpec::uniform(4, NoiseSchedule::linear()).unwrap();
        let srow = [0.01, 1.0, 37.5, 0.0];
        let mut out = vec![0.0; 4];
        for builder in [reverse_rate_row_into, dpf_rate_row_into, db_rate_row_into] {
            builder(&spec, 2.0, &srow, 1, &mut out);
            assert!(out.iter().all(|&v| v >= 0.0));
        }
        nu_rate_row_into(&spec, 2.0, &srow, 0.3, 1, &mut out).unwrap();
        assert!(out.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn piecewise_nu_lookup() {
        let sched = StochasticitySchedule::Piecewise {
            pieces: vec![NuPiece { t_lo: 0.0, t_hi: 0.1, nu: 20.0 }],
        };
        sched.validate().unwrap();
        let spec = uniform2();
        assert_eq!(sched.nu_at(&spec, 0.05, 0.04).unwrap(), 20.0);
        assert_eq!(sched.nu_at(&spec, 0.5, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn max_contraction_nu_matches_sigma_identity() {
        // sigma_remdm = nu (alpha_s - alpha_t) / alpha_t should equal 1 - alpha_s
        let spec = ProcessSpec::uniform(3, NoiseSchedule::linear()).unwrap();
        let (t, s) = (0.7, 0.5);
        let nu = StochasticitySchedule::MaxContraction.nu_at(&spec, t, s).unwrap();
        let a_t = spec.schedule.alpha(t).unwrap();
        let a_s = spec.schedule.alpha(s).unwrap();
        let sigma_remdm = nu * (a_s - a_t) / a_t;
        assert!((sigma_remdm - (1.0 - a_s)).abs() < 1e-12);
    }
}
