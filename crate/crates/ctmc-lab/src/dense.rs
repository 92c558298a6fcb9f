//! Dense numerical oracles: matrix exponentials, Kolmogorov integration and
//! exact one-step sampler kernels on enumerable state spaces.
//!
//! These back the verification battery and the test suites. They are
//! independent routes to the same quantities as the closed-form code:
//! the matrix exponential is computed by scaling-and-squaring, marginal
//! evolution by RK4, and tau-leap kernels by direct convolution of Poisson
//! displacement laws.

use crate::error::{Error, Result};
use crate::process::{marginal, Channel, Dist, ProcessSpec};
use crate::rates::RateMatrix;
use crate::schedule::NoiseSchedule;

/// Dense matrix product (row-major, n x n).
pub fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Matrix exponential by scaling-and-squaring with a Taylor series.
pub fn expm(n: usize, a: &[f64]) -> Vec<f64> {
    let norm: f64 = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = (2.0f64).powi(s as i32);
    let b: Vec<f64> = a.iter().map(|&v| v / scale).collect();

    let mut result = vec![0.0; n * n];
    for i in 0..n {
        result[i * n + i] = 1.0;
    }
    let mut term = result.clone();
    for k in 1..=24 {
        term = matmul(n, &term, &b);
        let kf = k as f64;
        let mut max_term = 0.0f64;
        for (r, t) in result.iter_mut().zip(term.iter_mut()) {
            *t /= kf;
            *r += *t;
            max_term = max_term.max(t.abs());
        }
        if max_term < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = matmul(n, &result, &result);
    }
    result
}

/// Forward kernel oracle: exp(int_s^t R_tau dtau) for the corruption process.
pub fn forward_kernel_expm(spec: &ProcessSpec, s: f64, t: f64) -> Result<Channel> {
    if s > t {
        return Err(Error::InvertedInterval { lo: s, hi: t });
    }
    let n = spec.num_states;
    let c = spec.schedule.cumulative(t) - spec.schedule.cumulative(s);
    // c * (1 pi^T - I)
    let mut a = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            a[x * n + y] = c * spec.pi(y);
        }
        a[x * n + x] -= c;
    }
    let rows = expm(n, &a);
    Channel::new(n, n, rows)
}

/// Invert u = cumulative(t) for the RK4 change of variables.
fn time_of_cumulative(schedule: &NoiseSchedule, u: f64) -> f64 {
    match *schedule {
        NoiseSchedule::Linear { a } => u / a,
        NoiseSchedule::Geometric { a, b } => ((u / a) + 1.0).ln() / b.ln(),
        NoiseSchedule::Loglinear { a, epsilon } => (1.0 - (-u / a).exp()) / (1.0 - epsilon),
    }
}

/// Integrate dp/dt = -R(t)^T p from t_hi down to t_lo with RK4 in the
/// cumulative-noise variable u (which removes the stiffness of fast
/// schedules), checking TV against the analytic marginal at `checkpoints`.
///
/// Returns the worst checkpoint TV.
pub fn marginal_preservation_tv(
    spec: &ProcessSpec,
    p0: &Dist,
    build: &dyn Fn(f64) -> Result<RateMatrix>,
    t_hi: f64,
    t_lo: f64,
    checkpoints: usize,
    steps_per_unit_u: f64,
) -> Result<f64> {
    let n = spec.num_states;
    let mut p: Vec<f64> = marginal(spec, p0, t_hi)?.probs().to_vec();
    let mut worst = 0.0f64;

    let rhs = |u: f64, p: &[f64], out: &mut [f64]| -> Result<()> {
        let t = time_of_cumulative(&spec.schedule, u).clamp(t_lo, t_hi);
        let r = build(t)?;
        let beta_t = spec.schedule.beta(t);
        for x in 0..n {
            let mut acc = 0.0;
            for y in 0..n {
                acc += r.entry(y, x) * p[y];
            }
            out[x] = -acc / beta_t;
        }
        Ok(())
    };

    let ts: Vec<f64> = (0..=checkpoints)
        .map(|i| t_hi + (t_lo - t_hi) * i as f64 / checkpoints as f64)
        .collect();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for w in ts.windows(2) {
        let (ua, ub) = (spec.schedule.cumulative(w[0]), spec.schedule.cumulative(w[1]));
        let nsteps = ((ua - ub).abs() * steps_per_unit_u).ceil().max(2.0) as usize;
        let h = (ub - ua) / nsteps as f64;
        let mut u = ua;
        for _ in 0..nsteps {
            rhs(u, &p, &mut k1)?;
            for i in 0..n {
                tmp[i] = p[i] + 0.5 * h * k1[i];
            }
            rhs(u + 0.5 * h, &tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = p[i] + 0.5 * h * k2[i];
            }
            rhs(u + 0.5 * h, &tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = p[i] + h * k3[i];
            }
            rhs(u + h, &tmp, &mut k4)?;
            for i in 0..n {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            u += h;
        }
        let exact = marginal(spec, p0, w[1])?;
        let tv: f64 =
            0.5 * p.iter().zip(exact.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        worst = worst.max(tv);
    }
    Ok(worst)
}

const MAX_DENSE_POISSON_MEAN: f64 = 500.0;

/// Exact one-step tau-leaping kernel on the ordered line 0..n-1:
/// displacement = sum of independent Poisson jump counts times (y - x),
/// clamped to the line. Direct convolution of truncated Poisson pmfs.
pub fn tau_leap_kernel(rates: &RateMatrix, dt: f64) -> Result<Channel> {
    let n = rates.n();
    let mut rows = vec![0.0; n * n];
    for x in 0..n {
        let lam: Vec<f64> = (0..n)
            .map(|y| if y == x { 0.0 } else { rates.entry(x, y).max(0.0) * dt })
            .collect();
        let lmax = lam.iter().cloned().fold(0.0, f64::max);
        if lmax > MAX_DENSE_POISSON_MEAN {
            return Err(Error::Domain(format!(
                "dense tau-leap kernel: per-neighbor mean {lmax} too large"
            )));
        }
        let kcap = (8.0 + lmax + 12.0 * (lmax + 1.0).sqrt()).ceil() as usize;
        let half = n * (kcap + 1);
        let width = 2 * half + 1;
        let mut pmf = vec![0.0; width];
        pmf[half] = 1.0;
        let mut new = vec![0.0; width];
        for y in 0..n {
            if y == x || lam[y] <= 0.0 {
                continue;
            }
            let d = y as i64 - x as i64;
            // truncated, renormalized Poisson pmf
            let mut pk = Vec::with_capacity(kcap + 1);
            let mut v = (-lam[y]).exp();
            let mut sum = 0.0;
            for k in 0..=kcap {
                pk.push(v);
                sum += v;
                v *= lam[y] / (k + 1) as f64;
            }
            for v in &mut pk {
                *v /= sum;
            }
            new.iter_mut().for_each(|v| *v = 0.0);
            for (k, &w) in pk.iter().enumerate() {
                if w < 1e-18 {
                    continue;
                }
                let shift = k as i64 * d;
                for (i, &m) in pmf.iter().enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    let j = i as i64 + shift;
                    if (0..width as i64).contains(&j) {
                        new[j as usize] += w * m;
                    }
                }
            }
            std::mem::swap(&mut pmf, &mut new);
        }
        for (i, &w) in pmf.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let dst = (x as i64 + i as i64 - half as i64).clamp(0, n as i64 - 1) as usize;
            rows[x * n + dst] += w;
        }
    }
    Channel::new(n, n, rows)
}

/// Exact one-step Euler kernel: clamped categorical delta + R dt.
pub fn euler_kernel(rates: &RateMatrix, dt: f64) -> Channel {
    let n = rates.n();
    let mut rows = vec![0.0; n * n];
    for x in 0..n {
        let mut mass = 0.0;
        for y in 0..n {
            if y == x {
                continue;
            }
            let p = rates.entry(x, y).max(0.0) * dt;
            rows[x * n + y] = p;
            mass += p;
        }
        rows[x * n + x] = (1.0 - mass).max(0.0);
        let total: f64 = rows[x * n..(x + 1) * n].iter().sum();
        for v in &mut rows[x * n..(x + 1) * n] {
            *v /= total;
        }
    }
    Channel::new_unchecked(n, n, rows)
}

/// Stack per-state one-step rows into a dense kernel.
pub fn kernel_from_rows(
    n: usize,
    mut row_of: impl FnMut(usize) -> Result<Vec<f64>>,
) -> Result<Channel> {
    let mut rows = vec![0.0; n * n];
    for x in 0..n {
        let row = row_of(x)?;
        rows[x * n..(x + 1) * n].copy_from_slice(&row);
    }
    Channel::new(n, n, rows)
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::forward_kernel;
    use crate::rates::{dpf_rate_matrix, forward_rate};
    use crate::rng::{stream, tag};
    use rand::Rng;
    use rand_distr::Dirichlet;

    #[test]
    fn expm_matches_closed_form_projector_identity() {
        // exp(c (1 pi^T - I)) = e^{-c} I + (1 - e^{-c}) 1 pi^T
        let n = 5;
        let pi = [0.1, 0.2, 0.3, 0.15, 0.25];
        let c = 1.7;
        let mut a = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                a[x * n + y] = c * pi[y];
            }
            a[x * n + x] -= c;
        }
        let e = expm(n, &a);
        for x in 0..n {
            for y in 0..n {
                let want = (-c as f64).exp() * if x == y { 1.0 } else { 0.0 }
                    + (1.0 - (-c as f64).exp()) * pi[y];
                assert!((e[x * n + y] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_kernel_matches_expm_oracle() {
        let mut rng = stream(&[11, tag::SEARCH]);
        for _ in 0..30 {
            let s_states = rng.gen_range(2..=16usize);
            let schedule = match rng.gen_range(0..3) {
                0 => NoiseSchedule::linear(),
                1 => NoiseSchedule::geometric_default(),
                _ => NoiseSchedule::loglinear_default(),
            };
            let spec = if rng.gen_bool(0.5) {
                ProcessSpec::uniform(s_states, schedule).unwrap()
            } else {
                ProcessSpec::masking(s_states, rng.gen_range(0..s_states), schedule).unwrap()
            };
            let (mut s, mut t) = (rng.gen::<f64>(), rng.gen::<f64>());
            if s > t {
                std::mem::swap(&mut s, &mut t);
            }
            let a = forward_kernel(&spec, s, t).unwrap();
            let b = forward_kernel_expm(&spec, s, t).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-10);
        }
    }

    #[test]
    fn dpf_marginal_preservation_small() {
        let spec = ProcessSpec::uniform(8, NoiseSchedule::linear()).unwrap();
        let mut rng = stream(&[12, tag::SEARCH]);
        let p0: Vec<f64> = rng.sample(Dirichlet::new(&vec![1.0; 8]).unwrap());
        let p0 = Dist::new(p0).unwrap();
        let spec2 = spec.clone();
        let p02 = p0.clone();
        let build = move |t: f64| dpf_rate_matrix(&spec2, &p02, t);
        let worst =
            marginal_preservation_tv(&spec, &p0, &build, 1.0, 0.0, 20, 400.0).unwrap();
        assert!(worst < 1e-8, "worst TV {worst}");
    }

    #[test]
    fn tau_leap_kernel_row_sums_and_zero_rate() {
        let spec = ProcessSpec::uniform(6, NoiseSchedule::linear()).unwrap();
        let r = forward_rate(&spec, 0.5).unwrap();
        let k = tau_leap_kernel(&r, 0.13).unwrap();
        for x in 0..6 {
            let sum: f64 = k.row(x).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // zero rates: identity
        let z = RateMatrix::from_off_diagonal(4, vec![0.0; 16]).unwrap();
        let k = tau_leap_kernel(&z, 0.5).unwrap();
        for x in 0..4 {
            assert_eq!(k.entry(x, x), 1.0);
        }
    }
}
