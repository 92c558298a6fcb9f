//! Score oracles: exact enumerated sources plus the perturbed and
//! temperature-sharpened query modes.
//!
//! A `ScoreSource` answers per-dimension conditional queries for a model
//! process (which may run a different noise schedule than the sampler, the
//! train/inference mismatch used to study model error). A `ScoreOracle`
//! wraps a source with a query mode:
//!
//! * `Exact` is deterministic and side-effect free.
//! * `Perturbed` multiplies every score of one evaluation by a single
//!   c ~ Uniform(0,1) drawn per model evaluation while t lies in the window.
//! * `Temperature` returns score^(1/tau).
//!
//! One call to `evaluate_scores`/`evaluate_posteriors` is one model
//! evaluation: it covers all dimensions and candidate states of a sampler
//! step and consumes at most one perturbation scalar.

use crate::error::{Error, Result};
use crate::process::{posterior_row, score_row_into, Dist, ProcessSpec, Stationary};
use crate::schedule::NoiseSchedule;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Query mode of a score oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    Exact,
    /// Multiplicative c ~ U(0,1) on scores while t in (t_lo, t_hi).
    Perturbed { t_lo: f64, t_hi: f64 },
    /// Sharpened score s^(1/tau).
    Temperature { tau: f64 },
}

/// Exact per-dimension conditional tables for a model process.
pub trait ScoreSource: Sync {
    /// The model's single-coordinate process (its schedule is the one the
    /// model was "trained" with).
    fn spec(&self) -> &ProcessSpec;

    fn dims(&self) -> usize;

    /// Conditional marginal ratios for coordinate d at `state`:
    /// out[v] = p_t(x^d = v | x^{not d}) / p_t(x^d = cur | x^{not d}).
    fn score_row_into(&self, t: f64, state: &[u16], d: usize, out: &mut [f64]) -> Result<()>;

    /// Exact per-dimension Bayes posterior p(x_0^d = . | x_t) under the
    /// model process.
    fn posterior_row_into(&self, t: f64, state: &[u16], d: usize, out: &mut [f64]) -> Result<()>;
}

/// Exact closed-form source for a one-dimensional process.
pub struct Exact1d {
    spec: ProcessSpec,
    p0: Dist,
}

impl Exact1d {
    pub fn new(spec: ProcessSpec, p0: Dist) -> Result<Self> {
        if p0.len() != spec.num_states {
            return Err(Error::DimensionMismatch { expected: spec.num_states, got: p0.len() });
        }
        Ok(Exact1d { spec, p0 })
    }

    pub fn p0(&self) -> &Dist {
        &self.p0
    }
}

impl ScoreSource for Exact1d {
    fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    fn dims(&self) -> usize {
        1
    }

    fn score_row_into(&self, t: f64, state: &[u16], _d: usize, out: &mut [f64]) -> Result<()> {
        score_row_into(&self.spec, &self.p0, t, state[0] as usize, out)
    }

    fn posterior_row_into(&self, t: f64, state: &[u16], _d: usize, out: &mut [f64]) -> Result<()> {
        let row = posterior_row(&self.spec, &self.p0, t, state[0] as usize)?;
        out.copy_from_slice(&row);
        Ok(())
    }
}

/// Maximum number of enumerable data states for joint sources.
pub const MAX_JOINT_STATES: usize = 1 << 14;

/// Exact source over a joint distribution of binary coordinates, used for
/// the quantized mixture experiments. The corruption acts independently per
/// bit; for masking processes each coordinate has states {0, 1, mask=2}.
///
/// Joint time-marginals are evaluated through a Walsh-Hadamard filter
/// (uniform) or a subset-sum table over masked patterns (masking), so a
/// model evaluation costs O(dims) lookups.
pub struct BinaryJointSource {
    spec: ProcessSpec,
    dims: usize,
    p0: Vec<f64>,
    /// WHT of p0 (uniform corruption).
    p0_hat: Vec<f64>,
    bit_weight: Vec<u32>,
    /// cache of per-time joint marginal tables keyed by t bits (uniform)
    pt_cache: RwLock<HashMap<u64, Arc<Vec<f64>>>>,
    /// subset-sum table over {0,1,star}^dims patterns (masking)
    masked_marginals: Vec<f64>,
    pow3: Vec<usize>,
}

fn wht_in_place(a: &mut [f64]) {
    let n = a.len();
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let x = a[j];
                let y = a[j + h];
                a[j] = x + y;
                a[j + h] = x - y;
            }
            i += 2 * h;
        }
        h *= 2;
    }
}

impl BinaryJointSource {
    /// `spec` is the per-coordinate model process: uniform with S=2 or
    /// masking with S=3 (mask index 2). `p0` is the joint over 2^dims data
    /// states, indexed by the bitmask of coordinate values.
    pub fn new(spec: ProcessSpec, dims: usize, p0: Vec<f64>) -> Result<Self> {
        let n = 1usize << dims;
        if p0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p0.len() });
        }
        if n > MAX_JOINT_STATES {
            return Err(Error::Config(format!(
                "joint size {n} exceeds the exact-oracle cap {MAX_JOINT_STATES}; \
                 a learned oracle is out of scope"
            )));
        }
        match spec.stationary {
            Stationary::Uniform if spec.num_states == 2 => {}
            Stationary::Masking { mask_index: 2 } if spec.num_states == 3 => {}
            _ => {
                return Err(Error::Config(
                    "binary joint source needs uniform S=2 or masking S=3 (mask=2) per bit"
                        .into(),
                ))
            }
        }
        let sum: f64 = p0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || p0.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidDist(format!("joint p0 sums to {sum}")));
        }
        let mut p0_hat = p0.clone();
        wht_in_place(&mut p0_hat);
        let bit_weight = (0..n as u64).map(|i| i.count_ones()).collect();

        let (masked_marginals, pow3) = if spec.is_masking() {
            let mut pow3 = vec![1usize; dims + 1];
            for d in 0..dims {
                pow3[d + 1] = pow3[d] * 3;
            }
            if pow3[dims] > 8 * MAX_JOINT_STATES {
                return Err(Error::Config(format!(
                    "masking joint pattern table 3^{dims} too large"
                )));
            }
            // T[pattern] = sum of p0 over data states matching the pattern,
            // pattern digit in {0, 1, 2=star}.
            let mut t = vec![0.0; pow3[dims]];
            for (x, &p) in p0.iter().enumerate() {
                let mut code = 0usize;
                for d in 0..dims {
                    code += ((x >> d) & 1) * pow3[d];
                }
                t[code] = p;
            }
            // zeta transform dim by dim: star = value0 + value1
            for d in 0..dims {
                let stride = pow3[d];
                for base in 0..pow3[dims] {
                    // visit only codes whose digit d is 0
                    if (base / stride) % 3 != 0 {
                        continue;
                    }
                    t[base + 2 * stride] = t[base] + t[base + stride];
                }
            }
            (t, pow3)
        } else {
            (Vec::new(), Vec::new())
        };

        Ok(BinaryJointSource {
            spec,
            dims,
            p0,
            p0_hat,
            bit_weight,
            pt_cache: RwLock::new(HashMap::new()),
            masked_marginals,
            pow3,
        })
    }

    pub fn joint_p0(&self) -> &[f64] {
        &self.p0
    }

    fn pt_table(&self, t: f64) -> Arc<Vec<f64>> {
        let key = t.to_bits();
        if let Some(tbl) = self.pt_cache.read().unwrap().get(&key) {
            return tbl.clone();
        }
        let r = self.spec.schedule.alpha_unchecked(t);
        let n = self.p0.len();
        let mut tbl: Vec<f64> =
            (0..n).map(|i| self.p0_hat[i] * r.powi(self.bit_weight[i] as i32)).collect();
        wht_in_place(&mut tbl);
        let scale = 1.0 / n as f64;
        for v in &mut tbl {
            *v = (*v * scale).max(1e-300);
        }
        let tbl = Arc::new(tbl);
        self.pt_cache.write().unwrap().insert(key, tbl.clone());
        tbl
    }

    /// Masking joint marginal p_t(x) up to the shared (1-a)^m a^(D-m) split:
    /// returns (number of masked coords, T[pattern of unmasked values]).
    fn masked_lookup(&self, state: &[u16]) -> (u32, f64) {
        let mut code = 0usize;
        let mut masked = 0u32;
        for d in 0..self.dims {
            let v = state[d] as usize;
            if v == 2 {
                masked += 1;
                code += 2 * self.pow3[d];
            } else {
                code += v * self.pow3[d];
            }
        }
        (masked, self.masked_marginals[code])
    }
}

impl ScoreSource for BinaryJointSource {
    fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn score_row_into(&self, t: f64, state: &[u16], d: usize, out: &mut [f64]) -> Result<()> {
        match self.spec.stationary {
            Stationary::Uniform => {
                let tbl = self.pt_table(t);
                let mut idx = 0usize;
                for (dd, &v) in state.iter().enumerate() {
                    idx |= (v as usize & 1) << dd;
                }
                let cur = tbl[idx];
                let flip = tbl[idx ^ (1 << d)];
                let v = state[d] as usize;
                out[v] = 1.0;
                out[1 - v] = flip / cur;
                Ok(())
            }
            Stationary::Masking { .. } => {
                let a = self.spec.schedule.alpha_unchecked(t);
                let cur = state[d] as usize;
                // pattern code with digit d replaced by each candidate value
                let mut code = 0usize;
                let mut masked = 0u32;
                for (dd, &v) in state.iter().enumerate() {
                    if dd == d {
                        continue;
                    }
                    let v = v as usize;
                    if v == 2 {
                        masked += 1;
                    }
                    code += v.min(2) * self.pow3[dd];
                }
                let _ = masked;
                let t0 = self.masked_marginals[code]; // digit d = 0
                let t1 = self.masked_marginals[code + self.pow3[d]];
                let tstar = self.masked_marginals[code + 2 * self.pow3[d]];
                // unnormalized conditional marginal over {0, 1, mask}
                let w = [a * t0, a * t1, (1.0 - a) * tstar];
                let wc = w[cur.min(2)];
                if wc <= 0.0 {
                    return Err(Error::SingularScore { state: cur });
                }
                for v in 0..3 {
                    out[v] = w[v] / wc;
                }
                out[cur] = 1.0;
                Ok(())
            }
        }
    }

    fn posterior_row_into(&self, t: f64, state: &[u16], d: usize, out: &mut [f64]) -> Result<()> {
        // Reconstruct the per-dimension posterior from the conditional
        // marginal at the model's own alpha. Exact up to fp cancellation at
        // extreme alpha, where the posterior's influence is O(alpha).
        let s = self.spec.num_states;
        let mut srow = vec![0.0; s];
        self.score_row_into(t, state, d, &mut srow)?;
        let a = self.spec.schedule.alpha_unchecked(t);
        posterior_from_score_row(&self.spec, a, &srow, state[d] as usize, out);
        Ok(())
    }
}

/// Rebuild a per-dimension posterior row from a (possibly modified) score
/// row: normalize to the conditional marginal m, invert
/// m = a rho + (1-a) pi for rho (clamping negatives), and mix
/// row = f delta_cur + (1-f) rho with f = a rho(cur) / m_hat(cur).
pub fn posterior_from_score_row(
    spec: &ProcessSpec,
    alpha_t: f64,
    score_row: &[f64],
    cur: usize,
    out: &mut [f64],
) {
    let s = score_row.len();
    let total: f64 = score_row.iter().sum();
    let mut rho_sum = 0.0;
    for v in 0..s {
        let m = score_row[v] / total;
        let r = (m - (1.0 - alpha_t) * spec.pi(v)).max(0.0);
        out[v] = r;
        rho_sum += r;
    }
    if rho_sum <= 0.0 {
        // degenerate reconstruction: fall back to the conditional marginal
        for v in 0..s {
            out[v] = score_row[v] / total;
        }
        return;
    }
    for v in out.iter_mut() {
        *v /= rho_sum;
    }
    let m_hat_cur = alpha_t * out[cur] + (1.0 - alpha_t) * spec.pi(cur);
    let f = if m_hat_cur > 0.0 { alpha_t * out[cur] / m_hat_cur } else { 1.0 };
    for v in out.iter_mut() {
        *v *= 1.0 - f;
    }
    out[cur] += f;
}

/// A score source viewed through a query mode.
pub struct ScoreOracle<'a> {
    source: &'a dyn ScoreSource,
    /// The sampler-side process (inference schedule); usually the same as
    /// the source's spec, different under train/inference mismatch.
    inference: ProcessSpec,
    mode: OracleMode,
}

/// Per-evaluation buffer of all per-dimension rows.
#[derive(Debug, Clone)]
pub struct EvalBuf {
    rows: Vec<f64>,
    dims: usize,
    states: usize,
}

impl EvalBuf {
    pub fn new(dims: usize, states: usize) -> Self {
        EvalBuf { rows: vec![0.0; dims * states], dims, states }
    }

    #[inline]
    pub fn row(&self, d: usize) -> &[f64] {
        &self.rows[d * self.states..(d + 1) * self.states]
    }

    #[inline]
    pub fn row_mut(&mut self, d: usize) -> &mut [f64] {
        &mut self.rows[d * self.states..(d + 1) * self.states]
    }

    pub fn dims(&self) -> usize {
        self.dims
    }
}

impl<'a> ScoreOracle<'a> {
    pub fn new(source: &'a dyn ScoreSource, inference: ProcessSpec, mode: OracleMode) -> Self {
        ScoreOracle { source, inference, mode }
    }

    /// Oracle with the inference process equal to the model process.
    pub fn matched(source: &'a dyn ScoreSource, mode: OracleMode) -> Self {
        ScoreOracle { source, inference: source.spec().clone(), mode }
    }

    pub fn inference(&self) -> &ProcessSpec {
        &self.inference
    }

    pub fn dims(&self) -> usize {
        self.source.dims()
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    fn perturbation(&self, t: f64, rng: &mut ChaCha12Rng) -> Option<f64> {
        match self.mode {
            OracleMode::Perturbed { t_lo, t_hi } if t_lo < t && t < t_hi => {
                Some(rng.gen::<f64>())
            }
            _ => None,
        }
    }

    /// One model evaluation producing all per-dimension score rows.
    pub fn evaluate_scores(
        &self,
        t: f64,
        state: &[u16],
        rng: &mut ChaCha12Rng,
        buf: &mut EvalBuf,
    ) -> Result<()> {
        let c = self.perturbation(t, rng);
        for d in 0..self.source.dims() {
            let cur = state[d] as usize;
            let row = buf.row_mut(d);
            self.source.score_row_into(t, state, d, row)?;
            match self.mode {
                OracleMode::Exact | OracleMode::Perturbed { .. } => {
                    if let Some(c) = c {
                        for (v, r) in row.iter_mut().enumerate() {
                            if v != cur {
                                *r *= c;
                            }
                        }
                    }
                }
                OracleMode::Temperature { tau } => {
                    let inv = 1.0 / tau;
                    for (v, r) in row.iter_mut().enumerate() {
                        if v != cur {
                            *r = r.powf(inv);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// One model evaluation producing all per-dimension posterior rows.
    pub fn evaluate_posteriors(
        &self,
        t: f64,
        state: &[u16],
        rng: &mut ChaCha12Rng,
        buf: &mut EvalBuf,
    ) -> Result<()> {
        let direct = matches!(self.mode, OracleMode::Exact)
            && self.inference.schedule == self.source.spec().schedule;
        if direct {
            for d in 0..self.source.dims() {
                self.source.posterior_row_into(t, state, d, buf.row_mut(d))?;
            }
            return Ok(());
        }
        // mode- or mismatch-adjusted route: reconstruct from score rows at
        // the inference alpha
        self.evaluate_scores(t, state, rng, buf)?;
        let a = self.inference.schedule.alpha_unchecked(t);
        let s = self.inference.num_states;
        let mut tmp = vec![0.0; s];
        for d in 0..self.source.dims() {
            let cur = state[d] as usize;
            posterior_from_score_row(&self.inference, a, buf.row(d), cur, &mut tmp);
            buf.row_mut(d).copy_from_slice(&tmp);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};

    fn spec15() -> ProcessSpec {
        ProcessSpec::uniform(15, NoiseSchedule::geometric_default()).unwrap()
    }

    fn p0_15() -> Dist {
        let w: Vec<f64> = (1..=15).map(|i| i as f64).collect();
        Dist::normalized(w).unwrap()
    }

    #[test]
    fn exact_mode_is_deterministic() {
        let src = Exact1d::new(spec15(), p0_15()).unwrap();
        let oracle = ScoreOracle::matched(&src, OracleMode::Exact);
        let mut rng1 = stream(&[1, tag::PERTURB]);
        let mut rng2 = stream(&[2, tag::PERTURB]);
        let mut b1 = EvalBuf::new(1, 15);
        let mut b2 = EvalBuf::new(1, 15);
        oracle.evaluate_scores(0.05, &[3], &mut rng1, &mut b1).unwrap();
        oracle.evaluate_scores(0.05, &[3], &mut rng2, &mut b2).unwrap();
        assert_eq!(b1.row(0), b2.row(0));
    }

    #[test]
    fn perturbed_mode_scales_offdiagonal_inside_window() {
        let src = Exact1d::new(spec15(), p0_15()).unwrap();
        let exact = ScoreOracle::matched(&src, OracleMode::Exact);
        let pert = ScoreOracle::matched(&src, OracleMode::Perturbed { t_lo: 0.0, t_hi: 0.1 });
        let mut rng = stream(&[3, tag::PERTURB]);
        let mut be = EvalBuf::new(1, 15);
        let mut bp = EvalBuf::new(1, 15);
        exact.evaluate_scores(0.05, &[3], &mut rng.clone(), &mut be).unwrap();
        pert.evaluate_scores(0.05, &[3], &mut rng, &mut bp).unwrap();
        let c = bp.row(0)[0] / be.row(0)[0];
        assert!((0.0..=1.0).contains(&c));
        for y in 0..15 {
            let want = if y == 3 { be.row(0)[y] } else { c * be.row(0)[y] };
            assert!((bp.row(0)[y] - want).abs() < 1e-12, "y={y}");
        }
        // outside the window the rows are exact
        let mut rng2 = stream(&[3, tag::PERTURB]);
        let mut bo = EvalBuf::new(1, 15);
        pert.evaluate_scores(0.5, &[3], &mut rng2, &mut bo).unwrap();
        assert_eq!(bo.row(0), be.row(0) as &[f64]);
        let _ = bo;
        // and it is exact at out-of-window times
        let mut be2 = EvalBuf::new(1, 15);
        exact.evaluate_scores(0.5, &[3], &mut rng2, &mut be2).unwrap();
        let mut bo2 = EvalBuf::new(1, 15);
        pert.evaluate_scores(0.5, &[3], &mut rng2, &mut bo2).unwrap();
        assert_eq!(be2.row(0), bo2.row(0));
    }

    #[test]
    fn temperature_mode_sharpens() {
        let src = Exact1d::new(spec15(), p0_15()).unwrap();
        let sharp = ScoreOracle::matched(&src, OracleMode::Temperature { tau: 0.8 });
        let exact = ScoreOracle::matched(&src, OracleMode::Exact);
        let mut rng = stream(&[4, tag::PERTURB]);
        let mut bs = EvalBuf::new(1, 15);
        let mut be = EvalBuf::new(1, 15);
        sharp.evaluate_scores(0.3, &[7], &mut rng, &mut bs).unwrap();
        exact.evaluate_scores(0.3, &[7], &mut rng, &mut be).unwrap();
        for y in 0..15 {
            if y == 7 {
                continue;
            }
            assert!((bs.row(0)[y] - be.row(0)[y].powf(1.0 / 0.8)).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_reconstruction_matches_direct() {
        // the score-row reconstruction equals the exact Bayes posterior
        let spec = ProcessSpec::uniform(8, NoiseSchedule::linear()).unwrap();
        let p0 = Dist::normalized((1..=8).map(|i| (i * i) as f64).collect()).unwrap();
        let src = Exact1d::new(spec.clone(), p0.clone()).unwrap();
        for &t in &[0.1, 0.3, 0.6, 0.9] {
            let a = spec.schedule.alpha(t).unwrap();
            for x in 0..8u16 {
                let mut srow = vec![0.0; 8];
                src.score_row_into(t, &[x], 0, &mut srow).unwrap();
                let mut rec = vec![0.0; 8];
                posterior_from_score_row(&spec, a, &srow, x as usize, &mut rec);
                let direct = posterior_row(&spec, &p0, t, x as usize).unwrap();
                for y in 0..8 {
                    assert!((rec[y] - direct[y]).abs() < 1e-10, "t={t} x={x} y={y}");
                }
            }
        }
    }

    #[test]
    fn joint_source_matches_bruteforce_conditionals() {
        // 4-bit joint, uniform corruption: WHT route vs direct enumeration
        let spec = ProcessSpec::uniform(2, NoiseSchedule::linear()).unwrap();
        let mut rng = stream(&[5, tag::DATA]);
        let w: Vec<f64> = (0..16).map(|_| rng.gen::<f64>() + 0.01).collect();
        let total: f64 = w.iter().sum();
        let p0: Vec<f64> = w.iter().map(|v| v / total).collect();
        let src = BinaryJointSource::new(spec.clone(), 4, p0.clone()).unwrap();
        let t = 0.4;
        let r = spec.schedule.alpha_unchecked(t);
        // brute-force p_t(x) = sum_x0 p0(x0) prod_d (r 1[same] + (1-r)/2)
        let pt = |x: usize| -> f64 {
            (0..16)
                .map(|x0| {
                    let mut w = p0[x0];
                    for d in 0..4 {
                        let same = (x >> d) & 1 == (x0 >> d) & 1;
                        w *= if same { r + (1.0 - r) * 0.5 } else { (1.0 - r) * 0.5 };
                    }
                    w
                })
                .sum()
        };
        for xi in 0..16usize {
            let state: Vec<u16> = (0..4).map(|d| ((xi >> d) & 1) as u16).collect();
            for d in 0..4 {
                let mut row = vec![0.0; 2];
                src.score_row_into(t, &state, d, &mut row).unwrap();
                let cur = (xi >> d) & 1;
                let flip = xi ^ (1 << d);
                let want = pt(flip) / pt(xi);
                assert!((row[1 - cur] - want).abs() < 1e-10, "x={xi} d={d}");
                assert_eq!(row[cur], 1.0);
            }
        }
    }

    #[test]
    fn joint_source_masking_matches_bruteforce() {
        let spec = ProcessSpec::masking(3, 2, NoiseSchedule::linear()).unwrap();
        let mut rng = stream(&[6, tag::DATA]);
        let w: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() + 0.01).collect();
        let total: f64 = w.iter().sum();
        let p0: Vec<f64> = w.iter().map(|v| v / total).collect();
        let src = BinaryJointSource::new(spec.clone(), 3, p0.clone()).unwrap();
        let t = 0.35;
        let a = spec.schedule.alpha_unchecked(t);
        // brute force over data states with per-coordinate kernels
        let q = |v: usize, x0bit: usize| -> f64 {
            match v {
                2 => 1.0 - a,
                _ if v == x0bit => a,
                _ => 0.0,
            }
        };
        let pt = |state: &[u16]| -> f64 {
            (0..8)
                .map(|x0: usize| {
                    let mut w = p0[x0];
                    for d in 0..3 {
                        w *= q(state[d] as usize, (x0 >> d) & 1);
                    }
                    w
                })
                .sum()
        };
        let state = [0u16, 2, 1];
        for d in 0..3 {
            let mut row = vec![0.0; 3];
            src.score_row_into(t, &state, d, &mut row).unwrap();
            for v in 0..3u16 {
                let mut alt = state;
                alt[d] = v;
                let want = pt(&alt) / pt(&state);
                assert!((row[v as usize] - want).abs() < 1e-10, "d={d} v={v}");
            }
        }
    }

    #[test]
    fn joint_cap_is_enforced() {
        let spec = ProcessSpec::uniform(2, NoiseSchedule::linear()).unwrap();
        let err = BinaryJointSource::new(spec, 15, vec![0.0; 1 << 15]);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
