//! Reverse-sampling step primitives.
//!
//! Every step operates on a joint state (one coordinate per dimension) and
//! a per-chain context that owns the random streams, the NFE counter, the
//! event flags and the evaluation buffers. NFE counts model evaluations:
//! tau-leaping / Euler / analytic steps evaluate once, the trapezoidal step
//! twice, churn and restart draws are closed-form forward noise and
//! evaluate nothing.

use crate::error::{Error, Result};
use crate::oracle::{EvalBuf, ScoreOracle};
use crate::process::ProcessSpec;
use crate::rates::{
    dpf_rate_row_into, nu_rate_row_into, reverse_rate_row_into, StochasticitySchedule,
};
use crate::rng::{stream, tag};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};

/// Count of score/posterior oracle evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NfeCounter {
    count: u64,
}

impl NfeCounter {
    pub fn count(&self) -> u64 {
        self.count
    }

    #[inline]
    fn bump(&mut self) {
        self.count += 1;
    }
}

/// Counts of exceptional events during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepFlags {
    /// Euler steps whose off-diagonal mass exceeded 1.
    pub invalid_mass: u64,
    /// Coordinates clamped back into range by tau-leaping.
    pub clamps: u64,
    /// Churn times clamped to 1.
    pub warnings: u64,
}

impl StepFlags {
    pub fn merge(&mut self, other: &StepFlags) {
        self.invalid_mass += other.invalid_mass;
        self.clamps += other.clamps;
        self.warnings += other.warnings;
    }
}

/// Which reverse rate the discretization steppers use.
#[derive(Debug, Clone, PartialEq)]
pub enum RateKind {
    Reverse,
    Dpf,
    Nu(StochasticitySchedule),
}

/// Per-chain sampling context.
pub struct Chain<'a> {
    pub oracle: &'a ScoreOracle<'a>,
    pub state: Vec<u16>,
    pub nfe: NfeCounter,
    pub flags: StepFlags,
    rng_rev: ChaCha12Rng,
    rng_fwd: ChaCha12Rng,
    rng_pert: ChaCha12Rng,
    buf: EvalBuf,
    rows: Vec<f64>,
    rows2: Vec<f64>,
}

impl<'a> Chain<'a> {
    pub fn new(oracle: &'a ScoreOracle<'a>, master_seed: u64, chain_index: u64) -> Self {
        let dims = oracle.dims();
        let s = oracle.inference().num_states;
        Chain {
            oracle,
            state: vec![0; dims],
            nfe: NfeCounter::default(),
            flags: StepFlags::default(),
            rng_rev: stream(&[master_seed, tag::REVERSE, chain_index]),
            rng_fwd: stream(&[master_seed, tag::FORWARD, chain_index]),
            rng_pert: stream(&[master_seed, tag::PERTURB, chain_index]),
            buf: EvalBuf::new(dims, s),
            rows: vec![0.0; dims * s],
            rows2: vec![0.0; dims * s],
        }
    }

    pub fn dims(&self) -> usize {
        self.state.len()
    }

    fn n_states(&self) -> usize {
        self.oracle.inference().num_states
    }

    /// Draw the initial state from the stationary distribution.
    pub fn init_from_stationary(&mut self, master_seed: u64, chain_index: u64) {
        let spec = self.oracle.inference().clone();
        let mut rng = stream(&[master_seed, tag::INIT, chain_index]);
        for d in 0..self.state.len() {
            self.state[d] = sample_stationary(&spec, &mut rng);
        }
    }

    /// Evaluate the oracle once and build per-dimension rate rows at `t`.
    fn fill_rate_rows(&mut self, kind: &RateKind, t: f64, s_next: f64, second: bool) -> Result<()> {
        let spec = self.oracle.inference();
        let s = self.n_states();
        self.oracle.evaluate_scores(t, &self.state, &mut self.rng_pert, &mut self.buf)?;
        self.nfe.bump();
        let beta_t = spec.schedule.beta(t);
        let dst = if second { &mut self.rows2 } else { &mut self.rows };
        for d in 0..self.state.len() {
            let x = self.state[d] as usize;
            let out = &mut dst[d * s..(d + 1) * s];
            match kind {
                RateKind::Reverse => reverse_rate_row_into(spec, beta_t, self.buf.row(d), x, out),
                RateKind::Dpf => dpf_rate_row_into(spec, beta_t, self.buf.row(d), x, out),
                RateKind::Nu(sched) => {
                    let nu = sched.nu_at(spec, t, s_next)?;
                    nu_rate_row_into(spec, beta_t, self.buf.row(d), nu, x, out)?
                }
            }
        }
        Ok(())
    }

    /// Tau-leaping step (Poisson jump counts per candidate, displacements
    /// summed per dimension and clamped). Ordered, non-masking spaces only.
    pub fn tau_leap_step(&mut self, kind: &RateKind, t: f64, t_next: f64) -> Result<()> {
        if self.oracle.inference().is_masking() {
            return Err(Error::Domain(
                "tau-leaping needs an ordered state space; masking processes use euler".into(),
            ));
        }
        self.fill_rate_rows(kind, t, t_next, false)?;
        let dt = t - t_next;
        let s = self.n_states();
        for d in 0..self.state.len() {
            let row = &self.rows[d * s..(d + 1) * s];
            let x = self.state[d] as usize;
            let disp = poisson_displacement(row, x, dt, &mut self.rng_rev);
            self.state[d] = clamp_state(x as i64 + disp, s, &mut self.flags);
        }
        Ok(())
    }

    /// Euler step: clamped categorical over delta + R dt, per dimension.
    pub fn euler_step(&mut self, kind: &RateKind, t: f64, t_next: f64) -> Result<()> {
        self.fill_rate_rows(kind, t, t_next, false)?;
        let dt = t - t_next;
        let s = self.n_states();
        for d in 0..self.state.len() {
            let row = &self.rows[d * s..(d + 1) * s];
            let x = self.state[d] as usize;
            let mut mass = 0.0;
            for (y, &r) in row.iter().enumerate() {
                if y != x {
                    mass += r * dt;
                }
            }
            let self_mass = if mass > 1.0 {
                self.flags.invalid_mass += 1;
                0.0
            } else {
                1.0 - mass
            };
            let total = mass + self_mass;
            let mut u = self.rng_rev.gen::<f64>() * total;
            let mut next = x;
            for (y, &r) in row.iter().enumerate() {
                let p = if y == x { self_mass } else { r * dt };
                if u < p {
                    next = y;
                    break;
                }
                u -= p;
            }
            self.state[d] = next as u16;
        }
        Ok(())
    }

    /// Trapezoidal step: a tau-leap leg over [t, t_mid] with rates at
    /// (t, x), then a leg over [t_mid, t_next] with the weighted rate
    /// combination of the two evaluations. Two model evaluations.
    pub fn trapezoidal_step(
        &mut self,
        kind: &RateKind,
        t: f64,
        t_next: f64,
        theta: f64,
    ) -> Result<()> {
        if !(0.0 < theta && theta < 1.0) {
            return Err(Error::Domain(format!("theta {theta} outside (0,1)")));
        }
        if self.oracle.inference().is_masking() {
            return Err(Error::Domain(
                "trapezoidal tau-leap legs need an ordered state space".into(),
            ));
        }
        let h = t - t_next;
        let t_mid = theta * (t_next - t) + t;
        let alpha_w = 1.0 / (2.0 * theta * (1.0 - theta));
        self.fill_rate_rows(kind, t, t_mid, false)?;
        let s = self.n_states();
        // leg 1: [t, t_mid] with rates frozen at (t, x)
        let mut mid = self.state.clone();
        for d in 0..self.state.len() {
            let row = &self.rows[d * s..(d + 1) * s];
            let x = self.state[d] as usize;
            let disp = poisson_displacement(row, x, theta * h, &mut self.rng_rev);
            mid[d] = clamp_state(x as i64 + disp, s, &mut self.flags);
        }
        // second evaluation at (t_mid, x_mid)
        let start = std::mem::replace(&mut self.state, mid);
        self.fill_rate_rows(kind, t_mid, t_next, true)?;
        // leg 2: combined rates (alpha R_mid - (alpha-1) R_t)_+
        for d in 0..self.state.len() {
            let x0 = start[d] as usize;
            let xm = self.state[d] as usize;
            let row_t = &self.rows[d * s..(d + 1) * s];
            let row_m = &self.rows2[d * s..(d + 1) * s];
            let mut combined = vec![0.0; s];
            for y in 0..s {
                // row_t is indexed from the pre-leg-1 state; its own-state
                // entry is zero which is what the combination needs
                let rt = if y == x0 { 0.0 } else { row_t[y] };
                let rm = if y == xm { 0.0 } else { row_m[y] };
                combined[y] = (alpha_w * rm - (alpha_w - 1.0) * rt).max(0.0);
            }
            combined[xm] = 0.0;
            let disp = poisson_displacement(&combined, xm, (1.0 - theta) * h, &mut self.rng_rev);
            self.state[d] = clamp_state(xm as i64 + disp, s, &mut self.flags);
        }
        Ok(())
    }

    /// Analytic D3PM step from t down to s: per dimension, sample from the
    /// Bayes reversal with x0 marginalized under the model posterior.
    pub fn d3pm_step(&mut self, t: f64, s_time: f64) -> Result<()> {
        let spec = self.oracle.inference().clone();
        self.oracle.evaluate_posteriors(t, &self.state, &mut self.rng_pert, &mut self.buf)?;
        self.nfe.bump();
        let s = self.n_states();
        let mut row = vec![0.0; s];
        for d in 0..self.state.len() {
            let x = self.state[d] as usize;
            d3pm_row_into(&spec, self.buf.row(d), t, s_time, x, &mut row)?;
            self.state[d] = sample_categorical(&row, &mut self.rng_rev) as u16;
        }
        Ok(())
    }

    /// Closed-form DPF transition (the DDIM update): keep with probability
    /// sigma_{s|t}, otherwise emit a posterior sample of x0.
    pub fn ddim_step(&mut self, t: f64, s_time: f64) -> Result<()> {
        let spec = self.oracle.inference().clone();
        let a_t = spec.schedule.alpha(t)?;
        let a_s = spec.schedule.alpha(s_time)?;
        if a_t >= 1.0 {
            return Err(Error::Domain("ddim needs alpha(t) < 1".into()));
        }
        let sigma = (1.0 - a_s) / (1.0 - a_t);
        self.oracle.evaluate_posteriors(t, &self.state, &mut self.rng_pert, &mut self.buf)?;
        self.nfe.bump();
        for d in 0..self.state.len() {
            if self.rng_rev.gen::<f64>() >= sigma {
                self.state[d] = sample_categorical(self.buf.row(d), &mut self.rng_rev) as u16;
            }
        }
        Ok(())
    }

    /// ReMDM step: three-component mixture of keep, posterior x0 and the
    /// stationary distribution.
    pub fn remdm_step(&mut self, t: f64, s_time: f64, sigma_remdm: f64) -> Result<()> {
        let spec = self.oracle.inference().clone();
        let a_t = spec.schedule.alpha(t)?;
        let a_s = spec.schedule.alpha(s_time)?;
        remdm_validity(a_t, a_s, sigma_remdm)?;
        self.oracle.evaluate_posteriors(t, &self.state, &mut self.rng_pert, &mut self.buf)?;
        self.nfe.bump();
        let s = self.n_states();
        let mut row = vec![0.0; s];
        for d in 0..self.state.len() {
            let x = self.state[d] as usize;
            remdm_row_into(&spec, self.buf.row(d), a_t, a_s, sigma_remdm, x, &mut row)?;
            self.state[d] = sample_categorical(&row, &mut self.rng_rev) as u16;
        }
        Ok(())
    }

    /// Marginal-preserving corrector at time s (backward posterior mix then
    /// forward stationary mix). One model evaluation.
    pub fn corrector_step(&mut self, s_time: f64, sigma_remdm: f64) -> Result<()> {
        let spec = self.oracle.inference().clone();
        let a_s = spec.schedule.alpha(s_time)?;
        if sigma_remdm < 0.0 || sigma_remdm >= 1.0 {
            return Err(Error::Domain(format!("corrector sigma {sigma_remdm} outside [0,1)")));
        }
        if sigma_remdm == 0.0 {
            return Ok(());
        }
        self.oracle.evaluate_posteriors(s_time, &self.state, &mut self.rng_pert, &mut self.buf)?;
        self.nfe.bump();
        let s = self.n_states();
        let mut row = vec![0.0; s];
        let b = sigma_remdm * a_s / ((1.0 - a_s) * (1.0 - sigma_remdm));
        if b > 1.0 {
            return Err(Error::Domain(format!("corrector backward weight {b} > 1")));
        }
        for d in 0..self.state.len() {
            let x = self.state[d] as usize;
            // backward: (1-b) delta + b posterior_s
            for (y, r) in row.iter_mut().enumerate() {
                *r = b * self.buf.row(d)[y];
                if y == x {
                    *r += 1.0 - b;
                }
            }
            let mut next = sample_categorical(&row, &mut self.rng_rev) as u16;
            // forward: keep w.p. 1 - sigma, else stationary draw
            if self.rng_rev.gen::<f64>() < sigma_remdm {
                next = sample_stationary(&spec, &mut self.rng_rev);
            }
            self.state[d] = next;
        }
        Ok(())
    }

    /// Churn: advance to (1+gamma) t through the closed-form forward kernel.
    /// No model evaluation. Returns the churned time.
    pub fn churn_step(&mut self, t: f64, gamma: f64) -> Result<f64> {
        if gamma < 0.0 {
            return Err(Error::Domain(format!("negative churn gamma {gamma}")));
        }
        if gamma == 0.0 {
            return Ok(t);
        }
        let mut t_churn = (1.0 + gamma) * t;
        if t_churn > 1.0 {
            t_churn = 1.0;
            self.flags.warnings += 1;
        }
        self.forward_noise(t, t_churn);
        Ok(t_churn)
    }

    /// Restart: re-corrupt from t_min up to t_max through the forward
    /// kernel. No model evaluation.
    pub fn restart_step(&mut self, t_min: f64, t_max: f64) -> Result<()> {
        if t_min > t_max {
            return Err(Error::InvertedInterval { lo: t_min, hi: t_max });
        }
        self.forward_noise(t_min, t_max);
        Ok(())
    }

    fn forward_noise(&mut self, t_from: f64, t_to: f64) {
        let spec = self.oracle.inference().clone();
        let r = spec.schedule.alpha_ratio(t_from, t_to);
        for d in 0..self.state.len() {
            if self.rng_fwd.gen::<f64>() >= r {
                self.state[d] = sample_stationary(&spec, &mut self.rng_fwd);
            }
        }
    }

    /// Resolve residual masks with one conditional model evaluation at
    /// t_stop (masking processes).
    pub fn resolve_masks(&mut self, t_stop: f64) -> Result<()> {
        let spec = self.oracle.inference().clone();
        let mask = match spec.mask_index() {
            Some(m) => m as u16,
            None => return Ok(()),
        };
        self.oracle.evaluate_scores(t_stop, &self.state, &mut self.rng_pert, &mut self.buf)?;
        self.nfe.bump();
        for d in 0..self.state.len() {
            if self.state[d] == mask {
                // score row is proportional to the conditional marginal
                self.state[d] = sample_categorical(self.buf.row(d), &mut self.rng_rev) as u16;
            }
        }
        Ok(())
    }

    /// Final denoise: one posterior evaluation at t_stop, emitting an x0
    /// sample per dimension.
    pub fn final_denoise(&mut self, t_stop: f64) -> Result<()> {
        self.oracle.evaluate_posteriors(t_stop, &self.state, &mut self.rng_pert, &mut self.buf)?;
        self.nfe.bump();
        for d in 0..self.state.len() {
            self.state[d] = sample_categorical(self.buf.row(d), &mut self.rng_rev) as u16;
        }
        Ok(())
    }
}

fn sample_stationary(spec: &ProcessSpec, rng: &mut ChaCha12Rng) -> u16 {
    match spec.stationary {
        crate::process::Stationary::Uniform => rng.gen_range(0..spec.num_states) as u16,
        crate::process::Stationary::Masking { mask_index } => mask_index as u16,
    }
}

/// Sample an index proportionally to nonnegative weights.
fn sample_categorical(weights: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Summed Poisson jump displacement for one dimension: the superposition of
/// per-candidate Poisson counts (one total count, then jump targets drawn
/// from the rate row), which has the same law as independent per-candidate
/// counts.
fn poisson_displacement(row: &[f64], x: usize, dt: f64, rng: &mut ChaCha12Rng) -> i64 {
    let total: f64 = row.iter().sum();
    let lambda = total * dt;
    if lambda <= 0.0 {
        return 0;
    }
    let n = Poisson::new(lambda).expect("positive mean").sample(rng) as u64;
    let mut disp = 0i64;
    for _ in 0..n {
        let y = sample_categorical(row, rng);
        disp += y as i64 - x as i64;
    }
    disp
}

fn clamp_state(v: i64, s: usize, flags: &mut StepFlags) -> u16 {
    if v < 0 {
        flags.clamps += 1;
        0
    } else if v >= s as i64 {
        flags.clamps += 1;
        (s - 1) as u16
    } else {
        v as u16
    }
}

/// Validity bound for the ReMDM stochasticity parameter.
pub fn remdm_validity(alpha_t: f64, alpha_s: f64, sigma_remdm: f64) -> Result<()> {
    let cap = 1.0f64.min((1.0 - alpha_s) / alpha_t);
    if !(0.0..=cap).contains(&sigma_remdm) {
        return Err(Error::Domain(format!(
            "sigma_remdm {sigma_remdm} outside [0, min(1, (1-alpha_s)/alpha_t)] = [0, {cap}]"
        )));
    }
    Ok(())
}

/// One-step DDIM row: sigma delta_x + (1 - sigma) posterior_row.
pub fn ddim_row_into(posterior_row: &[f64], sigma: f64, x: usize, out: &mut [f64]) {
    for (y, o) in out.iter_mut().enumerate() {
        *o = (1.0 - sigma) * posterior_row[y];
        if y == x {
            *o += sigma;
        }
    }
}

/// One-step ReMDM row: keep/posterior/stationary mixture. The negative-mass
/// check rejects parameter combinations outside the kernel's validity.
pub fn remdm_row_into(
    spec: &ProcessSpec,
    posterior_row: &[f64],
    alpha_t: f64,
    alpha_s: f64,
    sigma_remdm: f64,
    x: usize,
    out: &mut [f64],
) -> Result<()> {
    remdm_validity(alpha_t, alpha_s, sigma_remdm)?;
    let keep = (1.0 - alpha_s - sigma_remdm) / (1.0 - alpha_t);
    let post = (alpha_s - alpha_t + sigma_remdm * alpha_t) / (1.0 - alpha_t);
    for (y, o) in out.iter_mut().enumerate() {
        let mut v = post * posterior_row[y] + sigma_remdm * spec.pi(y);
        if y == x {
            v += keep;
        }
        *o = v;
    }
    let mut neg = 0.0f64;
    let mut total = 0.0;
    for o in out.iter_mut() {
        neg = neg.min(*o);
        *o = o.max(0.0);
        total += *o;
    }
    if neg < -1e-9 {
        return Err(Error::Domain(format!(
            "remdm mixture produced mass {neg} < 0; sigma_remdm too large for this posterior"
        )));
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Marginal-preserving corrector row at time s (Eq. pc).
pub fn corrector_row_into(
    spec: &ProcessSpec,
    posterior_row_s: &[f64],
    alpha_s: f64,
    sigma_remdm: f64,
    x: usize,
    out: &mut [f64],
) {
    let c_keep = 1.0 - sigma_remdm / (1.0 - alpha_s);
    let c_post = sigma_remdm * alpha_s / (1.0 - alpha_s);
    for (y, o) in out.iter_mut().enumerate() {
        let mut v = c_post * posterior_row_s[y] + sigma_remdm * spec.pi(y);
        if y == x {
            v += c_keep;
        }
        *o = v;
    }
}

/// Backward half of the corrector (posterior mix).
pub fn corrector_backward_row_into(
    posterior_row_s: &[f64],
    alpha_s: f64,
    sigma_remdm: f64,
    x: usize,
    out: &mut [f64],
) {
    let b = sigma_remdm * alpha_s / ((1.0 - alpha_s) * (1.0 - sigma_remdm));
    for (y, o) in out.iter_mut().enumerate() {
        *o = b * posterior_row_s[y];
        if y == x {
            *o += 1.0 - b;
        }
    }
}

/// Forward half of the corrector (stationary mix).
pub fn corrector_forward_row_into(spec: &ProcessSpec, sigma_remdm: f64, x: usize, out: &mut [f64]) {
    for (y, o) in out.iter_mut().enumerate() {
        *o = sigma_remdm * spec.pi(y);
        if y == x {
            *o += 1.0 - sigma_remdm;
        }
    }
}

/// Analytic D3PM row: Bayes reversal from t to s with x0 marginalized under
/// `posterior_row`.
pub fn d3pm_row_into(
    spec: &ProcessSpec,
    posterior_row: &[f64],
    t: f64,
    s_time: f64,
    x: usize,
    out: &mut [f64],
) -> Result<()> {
    if s_time > t {
        return Err(Error::InvertedInterval { lo: s_time, hi: t });
    }
    let r_ts = spec.schedule.alpha_ratio(s_time, t); // alpha_t / alpha_s
    let r_s0 = spec.schedule.alpha_unchecked(s_time);
    let r_t0 = spec.schedule.alpha_unchecked(t);
    let n = spec.num_states;
    // weight(x0) = posterior(x0) / q_{t|0}(x | x0)
    let mut wsum = 0.0; // sum over x0 of weight * (1 - r_s0) pi-part is folded below
    let mut w = vec![0.0; n];
    for x0 in 0..n {
        let q_t0 = r_t0 * if x == x0 { 1.0 } else { 0.0 } + (1.0 - r_t0) * spec.pi(x);
        if posterior_row[x0] == 0.0 {
            continue;
        }
        if q_t0 <= 0.0 {
            return Err(Error::UnreachableState { state: x, t });
        }
        w[x0] = posterior_row[x0] / q_t0;
        wsum += w[x0];
    }
    let mut total = 0.0;
    for (y, o) in out.iter_mut().enumerate() {
        let q_tsy = r_ts * if x == y { 1.0 } else { 0.0 } + (1.0 - r_ts) * spec.pi(x);
        let q_s0_part = r_s0 * w[y] + (1.0 - r_s0) * spec.pi(y) * wsum;
        *o = q_tsy * q_s0_part;
        total += *o;
    }
    if !(total > 0.0) {
        return Err(Error::UnreachableState { state: x, t });
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}
