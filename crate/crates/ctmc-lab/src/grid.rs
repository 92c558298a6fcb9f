//! Time discretization grids.

use crate::error::{Error, Result};

/// A strictly decreasing sequence of times in [t_min, t_max].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    rho: f64,
}

impl TimeGrid {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of reverse steps (intervals).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Power-law discretization concentrating steps near t_min:
/// times[i] = (t_max^(1/rho) + i/(n-1) (t_min^(1/rho) - t_max^(1/rho)))^rho,
/// decreasing from t_max to t_min.
pub fn edm_grid(t_min: f64, t_max: f64, n: usize, rho: f64) -> Result<TimeGrid> {
    if n < 2 {
        return Err(Error::Domain(format!("grid needs at least 2 points, got {n}")));
    }
    if !(t_min >= 0.0 && t_min < t_max && t_max <= 1.0) {
        return Err(Error::InvertedInterval { lo: t_min, hi: t_max });
    }
    if !(rho >= 1.0) {
        return Err(Error::Domain(format!("rho {rho} < 1")));
    }
    let a = t_max.powf(1.0 / rho);
    let b = t_min.powf(1.0 / rho);
    let mut times: Vec<f64> = (0..n)
        .map(|i| {
            let u = a + (i as f64 / (n - 1) as f64) * (b - a);
            u.powf(rho)
        })
        .collect();
    times[0] = t_max;
    times[n - 1] = t_min;
    for w in times.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Domain(format!(
                "grid not strictly decreasing near t={} (n too large for interval?)",
                w[0]
            )));
        }
    }
    Ok(TimeGrid { times, rho })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_one_is_linear() {
        let g = edm_grid(0.0, 1.0, 3, 1.0).unwrap();
        assert_eq!(g.times(), &[1.0, 0.5, 0.0]);
    }

    #[test]
    fn rho_seven_midpoint() {
        let g = edm_grid(0.7, 0.8, 3, 7.0).unwrap();
        assert_eq!(g.times()[0], 0.8);
        assert_eq!(g.times()[2], 0.7);
        let mid = (0.8f64.powf(1.0 / 7.0) + 0.5 * (0.7f64.powf(1.0 / 7.0) - 0.8f64.powf(1.0 / 7.0)))
            .powf(7.0);
        assert!((g.times()[1] - mid).abs() < 1e-15);
        assert!((g.times()[1] - 0.74857).abs() < 5e-5);
    }

    #[test]
    fn endpoints_exact() {
        let g = edm_grid(1e-3, 1.0, 57, 7.0).unwrap();
        assert_eq!(g.times()[0], 1.0);
        assert_eq!(*g.times().last().unwrap(), 1e-3);
        assert_eq!(g.steps(), 56);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(edm_grid(0.5, 0.2, 4, 7.0).is_err());
        assert!(edm_grid(0.1, 0.9, 1, 7.0).is_err());
        assert!(edm_grid(0.1, 0.9, 4, 0.5).is_err());
    }
}
