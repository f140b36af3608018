//! The transforms `η` and `ξ` that turn exponential test functions into
//! exact martingale-type identities, their quadratic expansions, and a root
//! solver for the defining equations.

use crate::dist::{cap_of, DistributionModel};
use crate::error::{Error, Result};

/// Default exponent in the truncation level `t = r^(1 - ε₀)`.
pub const DEFAULT_EPS0: f64 = 0.4;

const MAX_ITER: usize = 300;

/// Solves `x + ln E[exp(-f (T ∧ 1/t))] = 0` for `f`.
///
/// The left side is strictly decreasing and convex in `f`, so a bracket is
/// grown from zero and Newton steps are kept inside it.
pub fn solve_root(dist: &DistributionModel, x: f64, t: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    if !x.is_finite() {
        return Err(Error::NoConvergence(format!("non-finite argument {x}")));
    }
    let cap = cap_of(t);
    // (h, h') with h = x + ln M0; None where the transform diverges
    let eval = |f: f64| -> Option<(f64, f64)> {
        let [m0, m1, _] = dist.laplace(f, cap)?;
        if m0 <= 0.0 {
            return Some((f64::NEG_INFINITY, f64::NAN));
        }
        Some((x + m0.ln(), -m1 / m0))
    };
    let guess = x + 0.5 * dist.scv() * x * x;

    let (mut lo, mut hi);
    if x > 0.0 {
        lo = 0.0;
        hi = guess.max(x);
        let mut n = 0;
        while eval(hi).is_some_and(|(h, _)| h > 0.0) {
            hi *= 2.0;
            n += 1;
            if n > MAX_ITER {
                return Err(Error::NoConvergence(format!("{dist}: no upper bracket for x = {x}")));
            }
        }
    } else {
        hi = 0.0;
        let floor = if cap.is_infinite() { dist.abscissa() } else { f64::NEG_INFINITY };
        if floor == 0.0 {
            return Err(Error::NoConvergence(format!("{dist}: transform diverges for negative arguments without truncation")));
        }
        lo = guess.min(x);
        if lo <= floor {
            lo = 0.5 * floor;
        }
        let mut n = 0;
        while eval(lo).is_some_and(|(h, _)| h < 0.0) {
            lo = if floor.is_finite() { floor + 0.5 * (lo - floor) } else { 2.0 * lo };
            n += 1;
            if n > MAX_ITER {
                return Err(Error::NoConvergence(format!("{dist}: no lower bracket for x = {x}")));
            }
        }
    }

    let mut f = guess.clamp(lo, hi);
    if f == lo || f == hi {
        f = 0.5 * (lo + hi);
    }
    for _ in 0..MAX_ITER {
        let (h, dh) = match eval(f) {
            Some(v) => v,
            None => {
                // only possible at the divergent edge of the bracket
                lo = f;
                f = 0.5 * (lo + hi);
                continue;
            }
        };
        if h.abs() < 1e-15 {
            return Ok(f);
        }
        if h > 0.0 {
            lo = f;
        } else {
            hi = f;
        }
        let mut next = f - h / dh;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - f).abs() <= 1e-16 * f.abs().max(1e-300) {
            return Ok(next);
        }
        f = next;
    }
    Err(Error::NoConvergence(format!("{dist}: no convergence for x = {x}, t = {t}")))
}

/// `η(θ, t)`: root of `e^θ E[exp(-η (T ∧ 1/t))] = 1`.
pub fn solve_eta(dist: &DistributionModel, theta: f64, t: f64) -> Result<f64> {
    solve_root(dist, theta, t)
}

/// Log of the routing factor `e^{-θ_k} Σ_ℓ P_kℓ e^{θ_ℓ}`, the exit carrying
/// the leftover weight with `θ = 0`.
pub fn xi_argument(routing_row: &[f64], theta: &[f64], k: usize) -> f64 {
    let exit = (1.0 - routing_row.iter().sum::<f64>()).max(0.0);
    let s: f64 = exit + routing_row.iter().zip(theta).map(|(p, th)| p * th.exp()).sum::<f64>();
    -theta[k] + s.ln()
}

/// `ξ_k(θ, t)`: root of `Σ_ℓ P_kℓ e^{-θ_k + θ_ℓ} E[exp(-ξ (T ∧ 1/t))] = 1`.
pub fn solve_xi(dist: &DistributionModel, routing_row: &[f64], theta: &[f64], k: usize, t: f64) -> Result<f64> {
    if theta.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    solve_root(dist, xi_argument(routing_row, theta, k), t)
}

/// First- and second-order parts of a transform expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expansion {
    pub bar: f64,
    pub tilde: f64,
}

impl Expansion {
    pub fn star(&self) -> f64 {
        self.bar + self.tilde
    }
}

/// Expansion of `η` in `θ_k`.
pub fn eta_expansion(theta_k: f64, scv: f64) -> Expansion {
    Expansion { bar: theta_k, tilde: 0.5 * scv * theta_k * theta_k }
}

/// Expansion of `ξ_k` in `θ`.
pub fn xi_expansion(routing_row: &[f64], theta: &[f64], k: usize, scv: f64) -> Expansion {
    let mean: f64 = routing_row.iter().zip(theta).map(|(p, th)| p * th).sum();
    let second: f64 = routing_row.iter().zip(theta).map(|(p, th)| p * th * th).sum();
    let bar = -theta[k] + mean;
    Expansion { bar, tilde: 0.5 * (second - mean * mean + scv * bar * bar) }
}

/// One row of [`expansion_residual`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualRow {
    pub r: f64,
    /// `|η(rθ_k, t) - η*(rθ_k)| / r²`
    pub eta: f64,
    /// `|ξ_k(rθ, t) - ξ*_k(rθ)| / r²`
    pub xi: f64,
}

/// Expansion error divided by `r²` along `r_grid`, with `t = r^(1-ε₀)`.
/// The same model plays the interarrival and the service role.
pub fn expansion_residual(
    dist: &DistributionModel,
    routing_row: &[f64],
    theta: &[f64],
    k: usize,
    r_grid: &[f64],
    eps0: f64,
) -> Result<Vec<ResidualRow>> {
    r_grid
        .iter()
        .map(|&r| {
            let t = r.powf(1.0 - eps0);
            let rt: Vec<f64> = theta.iter().map(|v| r * v).collect();
            let eta = solve_eta(dist, rt[k], t)?;
            let xi = solve_xi(dist, routing_row, &rt, k, t)?;
            let ee = eta_expansion(rt[k], dist.scv()).star();
            let xe = xi_expansion(routing_row, &rt, k, dist.scv()).star();
            Ok(ResidualRow { r, eta: (eta - ee).abs() / (r * r), xi: (xi - xe).abs() / (r * r) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_eta_root(d: &DistributionModel, theta: f64, t: f64) -> f64 {
        let eta = solve_eta(d, theta, t).unwrap();
        let res = theta.exp() * d.mgf_truncated(eta, t) - 1.0;
        assert!(res.abs() < 1e-12, "{d} θ={theta} t={t} residual {res}");
        eta
    }

    #[test]
    fn exponential_closed_form() {
        for i in 0..20 {
            let theta = -2.0 + 0.21 * i as f64;
            let eta = check_eta_root(&DistributionModel::Exponential, theta, 0.0);
            assert!((eta - theta.exp_m1()).abs() < 1e-12, "θ={theta}");
        }
    }

    #[test]
    fn deterministic_is_identity() {
        for t in [1.0, 0.5, 0.2] {
            let eta = check_eta_root(&DistributionModel::Deterministic, 0.5, t);
            assert!((eta - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn erlang_root_brackets_against_bisection() {
        let d = DistributionModel::erlang(2).unwrap();
        let eta = check_eta_root(&d, 0.1, 0.5);
        // independent plain bisection on the defining equation
        let g = |s: f64| 0.1f64.exp() * d.mgf_truncated(s, 0.5) - 1.0;
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(m) > 0.0 {
                a = m
            } else {
                b = m
            }
        }
        assert!((eta - 0.5 * (a + b)).abs() < 1e-12);
    }

    #[test]
    fn xi_examples() {
        let e = DistributionModel::Exponential;
        // exit class
        let row = [0.0; 5];
        let mut th = [0.0; 5];
        th[4] = -0.2;
        let xi = solve_xi(&e, &row, &th, 4, 0.0).unwrap();
        assert!((xi - 0.2f64.exp_m1()).abs() < 1e-12);
        // chain step
        let row = [0.0, 1.0];
        let th = [-0.1, -0.3];
        let xi = solve_xi(&e, &row, &th, 0, 0.0).unwrap();
        assert!((xi - (-0.2f64).exp_m1()).abs() < 1e-12);
        assert_eq!(solve_xi(&e, &row, &[0.0, 0.0], 0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn expansion_examples() {
        assert!((eta_expansion(0.2, 1.0).star() - 0.22).abs() < 1e-15);
        let row = [0.0, 1.0, 0.0];
        let th = [0.3, -0.4, 0.9];
        let x = xi_expansion(&row, &th, 0, 0.7);
        assert!((x.tilde - 0.5 * 0.7 * (-0.4f64 - 0.3).powi(2)).abs() < 1e-15);
        let z = xi_expansion(&row, &[0.0; 3], 0, 0.7);
        assert_eq!((z.bar, z.tilde), (0.0, 0.0));
    }

    #[test]
    fn lognormal_needs_truncation_for_negative_arguments() {
        let d = DistributionModel::lognormal(2.0).unwrap();
        assert!(solve_eta(&d, -0.3, 0.0).is_err());
        check_eta_root(&d, -0.3, 0.25);
        check_eta_root(&d, 0.3, 0.0);
    }

    #[test]
    fn deterministic_residual_is_cubic_tail() {
        // feedback to itself with probability ½, exit otherwise
        let row = [0.5];
        let rows = expansion_residual(&DistributionModel::Deterministic, &row, &[0.7], 0, &[0.5, 0.1], DEFAULT_EPS0).unwrap();
        for r in rows {
            // η = rθ exactly and η* = rθ since c² = 0
            assert!(r.eta < 1e-12);
            let x = r.r * 0.7;
            let exact = -x + (0.5 + 0.5 * x.exp()).ln();
            let star = -0.5 * x + x * x / 8.0;
            assert!((r.xi - (exact - star).abs() / (r.r * r.r)).abs() < 1e-9);
        }
    }
}
