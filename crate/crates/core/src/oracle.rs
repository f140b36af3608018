//! Exact stationary analysis of all-exponential networks on the truncated
//! state space `{0..cap}^K`.
//!
//! Truncation is by loss: an arrival or a routed job that would push a
//! class past `cap` is dropped, which keeps the generator conservative.
//! The probability of the cap boundary measures the truncation bias.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::ValidatedNetwork;

pub const MAX_STATES: f64 = 1e7;
/// Below this size the balance equations are solved directly.
pub const DENSE_LIMIT: usize = 2000;
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Sparse generator stored by incoming transitions, which is what the
/// Gauss–Seidel sweep on `πQ = 0` reads.
#[derive(Clone, Debug)]
pub struct TruncatedCtmc {
    pub cap: u32,
    pub num_classes: usize,
    pub num_states: usize,
    /// `-Q_ii`
    pub exit_rate: Vec<f64>,
    /// `in_ptr[j]..in_ptr[j+1]` index the transitions into `j`.
    pub in_ptr: Vec<usize>,
    pub in_from: Vec<u32>,
    pub in_rate: Vec<f64>,
    h: Vec<Vec<usize>>,
    h_plus: Vec<Vec<usize>>,
}

/// Rates out of one state, excluding self-loops.
fn transitions(net: &ValidatedNetwork, cap: u32, z: &[u32], stride: &[usize], idx: usize, out: &mut Vec<(usize, f64)>) {
    let spec = &net.spec;
    let k = z.len();
    out.clear();
    for c in 0..k {
        let lam = spec.arrival_rate[c];
        if lam > 0.0 && z[c] < cap {
            out.push((idx + stride[c], lam));
        }
    }
    for c in 0..k {
        if z[c] == 0 || net.priority.h_plus[c].iter().any(|&h| z[h] > 0) {
            continue;
        }
        let mu = 1.0 / spec.mean_service[c];
        let down = idx - stride[c];
        let mut lost = 1.0 - spec.routing[c].iter().sum::<f64>();
        for (l, &p) in spec.routing[c].iter().enumerate() {
            if p <= 0.0 || l == c {
                continue;
            }
            if z[l] < cap {
                out.push((down + stride[l], mu * p));
            } else {
                lost += p;
            }
        }
        if lost > 1e-15 {
            out.push((down, mu * lost));
        }
    }
}

fn decode(mut idx: usize, cap: u32, z: &mut [u32]) {
    let base = cap as usize + 1;
    for v in z.iter_mut() {
        *v = (idx % base) as u32;
        idx /= base;
    }
}

/// Builds the loss-truncated generator.
pub fn build_generator(net: &ValidatedNetwork, cap: u32) -> Result<TruncatedCtmc> {
    let spec = &net.spec;
    let k = spec.num_classes();
    for c in 0..k {
        let arrival_ok = spec.arrival_rate[c] == 0.0 || spec.arrival_dist[c].is_exponential();
        if !arrival_ok || !spec.service_dist[c].is_exponential() {
            return Err(Error::InvalidArgument(format!("class {c} is not exponential; the oracle needs a Markov chain")));
        }
    }
    let states = (cap as f64 + 1.0).powi(k as i32);
    if states > MAX_STATES {
        return Err(Error::StateSpaceTooLarge { states });
    }
    let n = states as usize;
    let stride: Vec<usize> = (0..k).map(|c| (cap as usize + 1).pow(c as u32)).collect();

    let mut exit_rate = vec![0.0; n];
    let mut indeg = vec![0usize; n + 1];
    let mut z = vec![0u32; k];
    let mut out = Vec::new();
    for i in 0..n {
        decode(i, cap, &mut z);
        transitions(net, cap, &z, &stride, i, &mut out);
        for &(j, r) in &out {
            exit_rate[i] += r;
            indeg[j + 1] += 1;
        }
    }
    for j in 0..n {
        indeg[j + 1] += indeg[j];
    }
    let in_ptr = indeg.clone();
    let mut fill = indeg;
    let mut in_from = vec![0u32; in_ptr[n]];
    let mut in_rate = vec![0.0; in_ptr[n]];
    for i in 0..n {
        decode(i, cap, &mut z);
        transitions(net, cap, &z, &stride, i, &mut out);
        for &(j, r) in &out {
            in_from[fill[j]] = i as u32;
            in_rate[fill[j]] = r;
            fill[j] += 1;
        }
    }
    Ok(TruncatedCtmc {
        cap,
        num_classes: k,
        num_states: n,
        exit_rate,
        in_ptr,
        in_from,
        in_rate,
        h: net.priority.h.clone(),
        h_plus: net.priority.h_plus.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Dense,
    GaussSeidel,
    Power,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stationary {
    pub pi: Vec<f64>,
    /// `‖πQ‖∞`
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

impl TruncatedCtmc {
    pub fn state(&self, idx: usize) -> Vec<u32> {
        let mut z = vec![0; self.num_classes];
        decode(idx, self.cap, &mut z);
        z
    }

    pub fn index(&self, z: &[u32]) -> usize {
        let base = self.cap as usize + 1;
        z.iter().rev().fold(0, |acc, &v| acc * base + v as usize)
    }

    /// Off-diagonal rate `Q_ij` (zero if absent).
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        (self.in_ptr[j]..self.in_ptr[j + 1]).filter(|&e| self.in_from[e] as usize == i).map(|e| self.in_rate[e]).sum()
    }

    /// Outgoing transitions of state `i`, recovered from the incoming lists.
    pub fn outgoing(&self, i: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for j in 0..self.num_states {
            for e in self.in_ptr[j]..self.in_ptr[j + 1] {
                if self.in_from[e] as usize == i {
                    out.push((j, self.in_rate[e]));
                }
            }
        }
        out
    }

    /// `‖πQ‖∞`
    pub fn residual(&self, pi: &[f64]) -> f64 {
        (0..self.num_states)
            .map(|j| {
                let inflow: f64 = (self.in_ptr[j]..self.in_ptr[j + 1]).map(|e| pi[self.in_from[e] as usize] * self.in_rate[e]).sum();
                (inflow - pi[j] * self.exit_rate[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Solves `πQ = 0`, `Σπ = 1`.
    pub fn stationary(&self) -> Result<Stationary> {
        let out = if self.num_states <= DENSE_LIMIT { self.solve_dense()? } else { self.solve_gauss_seidel().or_else(|_| self.solve_power())? };
        if !(out.residual < RESIDUAL_TOL) {
            return Err(Error::SolverFailure(format!("residual {:.3e} after {:?}", out.residual, out.method)));
        }
        Ok(out)
    }

    fn solve_dense(&self) -> Result<Stationary> {
        let n = self.num_states;
        // rows of Qᵀ, the last one replaced by the normalization
        let mut a = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            a[(j, j)] = -self.exit_rate[j];
            for e in self.in_ptr[j]..self.in_ptr[j + 1] {
                a[(j, self.in_from[e] as usize)] += self.in_rate[e];
            }
        }
        for i in 0..n {
            a[(n - 1, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let x = a.lu().solve(&rhs).ok_or_else(|| Error::SolverFailure("singular balance equations".into()))?;
        let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        normalize(&mut pi);
        let residual = self.residual(&pi);
        Ok(Stationary { pi, residual, method: SolveMethod::Dense, iterations: 1 })
    }

    fn solve_gauss_seidel(&self) -> Result<Stationary> {
        let n = self.num_states;
        let mut pi = vec![1.0 / n as f64; n];
        let max_sweeps = 200_000;
        let mut sweep = 0;
        while sweep < max_sweeps {
            // forward then backward sweep
            for pass in 0..2 {
                for step in 0..n {
                    let j = if pass == 0 { step } else { n - 1 - step };
                    let d = self.exit_rate[j];
                    if d > 0.0 {
                        let inflow: f64 = (self.in_ptr[j]..self.in_ptr[j + 1]).map(|e| pi[self.in_from[e] as usize] * self.in_rate[e]).sum();
                        pi[j] = inflow / d;
                    }
                }
            }
            sweep += 1;
            if sweep % 10 == 0 {
                normalize(&mut pi);
                let residual = self.residual(&pi);
                if residual < 0.1 * RESIDUAL_TOL {
                    return Ok(Stationary { pi, residual, method: SolveMethod::GaussSeidel, iterations: sweep });
                }
            }
        }
        Err(Error::SolverFailure(format!("Gauss-Seidel did not converge in {max_sweeps} sweeps")))
    }

    /// Power iteration on the uniformized chain `I + Q/Λ`.
    fn solve_power(&self) -> Result<Stationary> {
        let n = self.num_states;
        let big = self.exit_rate.iter().fold(0.0f64, |a, &b| a.max(b)) * 1.01;
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let max_iter = 2_000_000;
        for it in 1..=max_iter {
            for j in 0..n {
                let inflow: f64 = (self.in_ptr[j]..self.in_ptr[j + 1]).map(|e| pi[self.in_from[e] as usize] * self.in_rate[e]).sum();
                next[j] = pi[j] * (1.0 - self.exit_rate[j] / big) + inflow / big;
            }
            std::mem::swap(&mut pi, &mut next);
            if it % 100 == 0 {
                normalize(&mut pi);
                let residual = self.residual(&pi);
                if residual < 0.1 * RESIDUAL_TOL {
                    return Ok(Stationary { pi, residual, method: SolveMethod::Power, iterations: it });
                }
            }
        }
        Err(Error::SolverFailure(format!("power iteration did not converge in {max_iter} steps")))
    }

    /// `Σ π(z) f(z)`
    pub fn expect(&self, pi: &[f64], mut f: impl FnMut(&[u32]) -> f64) -> f64 {
        let mut z = vec![0u32; self.num_classes];
        let mut s = 0.0;
        for (i, &p) in pi.iter().enumerate() {
            if p != 0.0 {
                decode(i, self.cap, &mut z);
                s += p * f(&z);
            }
        }
        s
    }

    pub fn exact_functionals(&self, pi: &[f64]) -> ExactFunctionals {
        let k = self.num_classes;
        let cap = self.cap;
        let mut out = ExactFunctionals {
            beta: vec![0.0; k],
            served: vec![0.0; k],
            mean: vec![0.0; k],
            second_moment: vec![0.0; k],
            marginal: vec![vec![0.0; cap as usize + 1]; k],
            boundary_mass: 0.0,
        };
        let mut z = vec![0u32; k];
        for (i, &p) in pi.iter().enumerate() {
            decode(i, cap, &mut z);
            for c in 0..k {
                let v = z[c] as f64;
                out.mean[c] += p * v;
                out.second_moment[c] += p * v * v;
                out.marginal[c][z[c] as usize] += p;
                let upper_clear = self.h_plus[c].iter().all(|&h| z[h] == 0);
                if upper_clear && z[c] == 0 {
                    out.beta[c] += p;
                }
                if upper_clear && z[c] > 0 {
                    out.served[c] += p;
                }
            }
            if z.contains(&cap) {
                out.boundary_mass += p;
            }
        }
        out
    }

    /// `φ(θ) = E exp(⟨θ_L, Z_L⟩ + ⟨θ_H, Z_H ∧ z_cap⟩)` and its conditional
    /// versions given `Z_{H(k)} = 0` (NaN where that event has no mass).
    pub fn mgf(&self, pi: &[f64], theta: &[f64], high: &[usize], z_cap: f64) -> ExactMgf {
        let k = self.num_classes;
        let mut is_high = vec![false; k];
        for &c in high {
            is_high[c] = true;
        }
        let mut phi = 0.0;
        let mut num = vec![0.0; k];
        let mut den = vec![0.0; k];
        let mut z = vec![0u32; k];
        for (i, &p) in pi.iter().enumerate() {
            decode(i, self.cap, &mut z);
            let e: f64 = (0..k).map(|c| theta[c] * if is_high[c] { (z[c] as f64).min(z_cap) } else { z[c] as f64 }).sum();
            let g = p * e.exp();
            phi += g;
            for c in 0..k {
                if self.h[c].iter().all(|&h| z[h] == 0) {
                    num[c] += g;
                    den[c] += p;
                }
            }
        }
        ExactMgf { phi, phi_cond: num.iter().zip(&den).map(|(a, b)| if *b > 0.0 { a / b } else { f64::NAN }).collect() }
    }
}

fn normalize(pi: &mut [f64]) {
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactFunctionals {
    /// `P(Z_{H(k)} = 0)`
    pub beta: Vec<f64>,
    /// `P(Z_k > 0, Z_{H₊(k)} = 0)`
    pub served: Vec<f64>,
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// `P(Z_k = z)` for `z <= cap`.
    pub marginal: Vec<Vec<f64>>,
    /// `P(Z_k = cap for some k)`
    pub boundary_mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactMgf {
    pub phi: f64,
    pub phi_cond: Vec<f64>,
}

/// Builds, solves and summarizes in one call.
pub fn solve(net: &ValidatedNetwork, cap: u32) -> Result<(TruncatedCtmc, Stationary, ExactFunctionals)> {
    let ctmc = build_generator(net, cap)?;
    let st = ctmc.stationary()?;
    let f = ctmc.exact_functionals(&st.pi);
    Ok((ctmc, st, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionModel;
    use crate::network::solve_traffic;
    use crate::pilot;

    fn mm1(lambda: f64) -> ValidatedNetwork {
        pilot::single_station(lambda, 1.0, DistributionModel::Exponential, DistributionModel::Exponential).unwrap()
    }

    #[test]
    fn birth_death_rates_and_cap() {
        let c = build_generator(&mm1(0.5), 100).unwrap();
        assert_eq!(c.num_states, 101);
        assert_eq!(c.rate(3, 4), 0.5);
        assert_eq!(c.rate(3, 2), 1.0);
        assert_eq!(c.rate(0, 1), 0.5);
        assert_eq!(c.outgoing(100), vec![(99, 1.0)]);
        // conservative rows, nonnegative off-diagonals
        for i in 0..c.num_states {
            let out = c.outgoing(i);
            assert!(out.iter().all(|&(_, r)| r >= 0.0));
            assert!((out.iter().map(|p| p.1).sum::<f64>() - c.exit_rate[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_geometric() {
        let (_, st, f) = solve(&mm1(0.5), 100).unwrap();
        let want0 = 0.5 / (1.0 - 0.5f64.powi(101));
        assert!((st.pi[0] - want0).abs() < 1e-12);
        assert!((f.mean[0] - 1.0).abs() < 1e-6);
        assert!(st.residual < 1e-10);
        assert_eq!(st.method, SolveMethod::Dense);
    }

    #[test]
    fn priority_indicator_structure() {
        let net = pilot::priority_pair([0.4, 0.3], [1.0, 1.0]).unwrap();
        let c = build_generator(&net, 5).unwrap();
        // class 2 (index 1) is served only when class 1 is empty
        let s01 = c.index(&[0, 1]);
        let s11 = c.index(&[1, 1]);
        assert_eq!(c.rate(s01, c.index(&[0, 0])), 1.0);
        assert_eq!(c.rate(s11, c.index(&[1, 0])), 0.0);
        assert_eq!(c.rate(s11, c.index(&[0, 1])), 1.0);
    }

    #[test]
    fn high_class_sees_mm1_alone() {
        let net = pilot::priority_pair([0.4, 0.3], [1.0, 1.0]).unwrap();
        let (c, st, f) = solve(&net, 60).unwrap();
        assert_eq!(st.method, SolveMethod::GaussSeidel);
        assert!(st.residual < 1e-10);
        assert!((f.beta[0] - 0.6).abs() < 1e-6);
        assert!((f.beta[1] - 0.3).abs() < 1e-6);
        // cap doubling leaves the functionals unchanged
        let (_, _, g) = solve(&net, 120).unwrap();
        for k in 0..2 {
            assert!((f.mean[k] - g.mean[k]).abs() < 1e-6);
        }
        assert!(f.boundary_mass < 1e-6, "{}", f.boundary_mass);
        let m = c.mgf(&st.pi, &[0.0, 0.0], &[0], f64::INFINITY);
        assert!((m.phi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idle_probabilities_match_traffic() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.5, [DistributionModel::Exponential; 6]).unwrap();
        let (_, st, f) = solve(&net, 12).unwrap();
        let beta = solve_traffic(&net).unwrap().beta;
        for k in 0..5 {
            assert!((f.beta[k] - beta[k]).abs() < 1e-4 + 10.0 * f.boundary_mass, "k={k}: {} vs {}", f.beta[k], beta[k]);
        }
        assert!(st.residual < 1e-10);
    }

    #[test]
    fn oversized_and_non_markov_inputs() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.5, [DistributionModel::Exponential; 6]).unwrap();
        assert!(matches!(build_generator(&net, 30), Err(Error::StateSpaceTooLarge { .. })));
        let det = pilot::single_station(0.5, 1.0, DistributionModel::Exponential, DistributionModel::Deterministic).unwrap();
        assert!(build_generator(&det, 10).is_err());
    }
}
