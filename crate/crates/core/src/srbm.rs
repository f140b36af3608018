//! Euler scheme for the semimartingale reflecting Brownian motion with data
//! `(R, Σ, b)` and drift `-Rb`, and its stationary BAR residual.
//!
//! The Brownian part has covariance `2Σ`: the stationary equation pairs
//! `⟨θ, Σθ⟩` with the boundary terms, which is the generator `½⟨θ, Γθ⟩` of a
//! motion with covariance `Γ = 2Σ`. In one dimension the stationary law is
//! then exponential with mean `Σ/(Rb)`.
//!
//! Each step solves the linear complementarity problem
//! `W' = x + Ry ≥ 0, y ≥ 0, W'ᵀy = 0` for the free step `x`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::checks::{check_completely_s, check_m_matrix};
use crate::error::{Error, Result};
use crate::stats::{BatchSeries, Estimate};

#[derive(Clone, Debug, PartialEq)]
pub struct SrbmData {
    pub r: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl SrbmData {
    pub fn new(r: DMatrix<f64>, sigma: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let l = b.len();
        if r.shape() != (l, l) || sigma.shape() != (l, l) || l == 0 {
            return Err(Error::InvalidArgument(format!("R is {:?}, Σ is {:?}, b has length {l}", r.shape(), sigma.shape())));
        }
        if b.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!("b must be positive, got {b:?}")));
        }
        if (&sigma - sigma.transpose()).abs().max() > 1e-12 * (1.0 + sigma.abs().max()) || sigma.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("Σ is not symmetric positive definite".into()));
        }
        if !check_completely_s(&r).verdict {
            return Err(Error::InvalidArgument("R is not completely-S".into()));
        }
        Ok(Self { r, sigma, b })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn drift(&self) -> Vec<f64> {
        let l = self.dim();
        (0..l).map(|i| -(0..l).map(|j| self.r[(i, j)] * self.b[j]).sum::<f64>()).collect()
    }

    /// `10⁻³ / ‖drift‖`, or `10⁻³` for zero drift.
    pub fn default_step(&self) -> f64 {
        let n = self.drift().iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            1e-3 / n
        } else {
            1e-3
        }
    }
}

/// Solver for `w = q + My ≥ 0, y ≥ 0, wᵀy = 0` at fixed `M`.
#[derive(Clone, Debug)]
pub struct Lcp {
    m: DMatrix<f64>,
    m_matrix: bool,
    tableau: Vec<f64>,
    basis: Vec<usize>,
}

const PIVOT_EPS: f64 = 1e-13;

impl Lcp {
    pub fn new(m: DMatrix<f64>) -> Self {
        let m_matrix = check_m_matrix(&m);
        Self { m, m_matrix, tableau: Vec::new(), basis: Vec::new() }
    }

    /// Writes `y` and returns the post-reflection point `w`.
    pub fn solve(&mut self, q: &[f64], y: &mut [f64], w: &mut [f64]) -> Result<()> {
        let l = q.len();
        if q.iter().all(|&v| v >= 0.0) {
            y.iter_mut().for_each(|v| *v = 0.0);
            w.copy_from_slice(q);
            return Ok(());
        }
        if l == 1 {
            y[0] = -q[0] / self.m[(0, 0)];
            w[0] = 0.0;
            return Ok(());
        }
        if self.lemke(q, y).is_err() {
            if !self.m_matrix {
                return Err(Error::LcpFailure("complementary pivoting terminated on a ray".into()));
            }
            self.projected_gauss_seidel(q, y)?;
        }
        for i in 0..l {
            w[i] = q[i] + (0..l).map(|j| self.m[(i, j)] * y[j]).sum::<f64>();
            if w[i] < 0.0 && w[i] > -1e-9 {
                w[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Complementary pivoting with covering vector `e`.
    fn lemke(&mut self, q: &[f64], y: &mut [f64]) -> Result<()> {
        let l = q.len();
        let cols = 2 * l + 2; // w, y, z0, rhs
        let z0 = 2 * l;
        let rhs = 2 * l + 1;
        self.tableau.clear();
        self.tableau.resize(l * cols, 0.0);
        self.basis.clear();
        self.basis.extend(0..l);
        let t = &mut self.tableau;
        for i in 0..l {
            t[i * cols + i] = 1.0;
            for j in 0..l {
                t[i * cols + l + j] = -self.m[(i, j)];
            }
            t[i * cols + z0] = -1.0;
            t[i * cols + rhs] = q[i];
        }
        let pivot = |t: &mut Vec<f64>, r: usize, c: usize| {
            let p = t[r * cols + c];
            for j in 0..cols {
                t[r * cols + j] /= p;
            }
            for i in 0..l {
                if i != r {
                    let f = t[i * cols + c];
                    if f != 0.0 {
                        for j in 0..cols {
                            t[i * cols + j] -= f * t[r * cols + j];
                        }
                    }
                }
            }
        };
        let mut r = (0..l).min_by(|&a, &b| q[a].partial_cmp(&q[b]).unwrap()).unwrap();
        pivot(t, r, z0);
        let mut leaving = self.basis[r];
        self.basis[r] = z0;
        for _ in 0..50 * l + 50 {
            let entering = if leaving < l { leaving + l } else { leaving - l };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..l {
                let a = t[i * cols + entering];
                if a > PIVOT_EPS {
                    let ratio = t[i * cols + rhs] / a;
                    let better = match best {
                        None => true,
                        Some((br, bi)) => ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[i] == z0 && self.basis[bi] != z0),
                    };
                    if better {
                        best = Some((ratio, i));
                    }
                }
            }
            let Some((_, row)) = best else {
                return Err(Error::LcpFailure("ray termination".into()));
            };
            r = row;
            pivot(t, r, entering);
            leaving = self.basis[r];
            self.basis[r] = entering;
            if leaving == z0 {
                y.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..l {
                    let b = self.basis[i];
                    if (l..2 * l).contains(&b) {
                        y[b - l] = t[i * cols + rhs].max(0.0);
                    }
                }
                return Ok(());
            }
        }
        Err(Error::LcpFailure("pivoting did not terminate".into()))
    }

    /// Convergent for M-matrices.
    fn projected_gauss_seidel(&self, q: &[f64], y: &mut [f64]) -> Result<()> {
        let l = q.len();
        y.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..100_000 {
            let mut change = 0.0f64;
            for i in 0..l {
                let wi = q[i] + (0..l).map(|j| self.m[(i, j)] * y[j]).sum::<f64>();
                let next = (y[i] - wi / self.m[(i, i)]).max(0.0);
                change = change.max((next - y[i]).abs());
                y[i] = next;
            }
            if change < 1e-15 {
                return Ok(());
            }
        }
        Err(Error::LcpFailure("projected Gauss-Seidel did not converge".into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrbmConfig {
    pub step: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub batches: usize,
    /// Points `θ ≤ 0` at which `φ` and the face transforms are estimated.
    pub thetas: Vec<Vec<f64>>,
}

impl SrbmConfig {
    pub fn new(data: &SrbmData, horizon: f64, seed: u64) -> Self {
        Self { step: data.default_step(), horizon, warmup: 0.1 * horizon, seed, batches: 32, thetas: Vec::new() }
    }
}

/// Sample averages over the post-warmup steps, batched by step index.
#[derive(Clone, Debug, PartialEq)]
pub struct SrbmStats {
    pub dim: usize,
    pub step: f64,
    pub thetas: Vec<Vec<f64>>,
    pub samples: Vec<f64>,
    /// `[i][batch]`
    pub sum_w: Vec<Vec<f64>>,
    pub sum_w2: Vec<Vec<f64>>,
    /// Pushing `Σ Δy_ℓ` per face and batch.
    pub push: Vec<Vec<f64>>,
    /// `[point][batch]`
    pub phi: Vec<Vec<f64>>,
    /// `[point][face][batch]`, weighted by `Δy_ℓ`
    pub phi_face: Vec<Vec<Vec<f64>>>,
    pub min_w: f64,
    pub max_complementarity: f64,
}

impl SrbmStats {
    fn new(dim: usize, step: f64, thetas: Vec<Vec<f64>>, b: usize) -> Self {
        let p = thetas.len();
        Self {
            dim,
            step,
            samples: vec![0.0; b],
            sum_w: vec![vec![0.0; b]; dim],
            sum_w2: vec![vec![0.0; b]; dim],
            push: vec![vec![0.0; b]; dim],
            phi: vec![vec![0.0; b]; p],
            phi_face: vec![vec![vec![0.0; b]; dim]; p],
            thetas,
            min_w: f64::INFINITY,
            max_complementarity: 0.0,
        }
    }

    fn avg(&self, num: &[f64]) -> Estimate {
        BatchSeries::from_parts(num.to_vec(), self.samples.clone()).estimate().expect("post-warmup samples")
    }

    pub fn mean(&self, i: usize) -> Estimate {
        self.avg(&self.sum_w[i])
    }

    pub fn second_moment(&self, i: usize) -> Estimate {
        self.avg(&self.sum_w2[i])
    }

    pub fn phi(&self, p: usize) -> Estimate {
        self.avg(&self.phi[p])
    }

    /// `∫ e^{⟨θ,x⟩} ν_ℓ(dx)` normalized by the face's pushing.
    pub fn phi_face(&self, p: usize, face: usize) -> Result<Estimate> {
        BatchSeries::from_parts(self.phi_face[p][face].clone(), self.push[face].clone()).estimate().ok_or(Error::NoBoundaryMass { face })
    }

    /// Pushing per unit time on each face.
    pub fn push_rate(&self, face: usize) -> Estimate {
        let time: Vec<f64> = self.samples.iter().map(|n| n * self.step).collect();
        BatchSeries::from_parts(self.push[face].clone(), time).estimate().expect("post-warmup samples")
    }

    pub fn merge(&mut self, other: &SrbmStats) {
        assert_eq!((self.dim, &self.thetas), (other.dim, &other.thetas));
        let cat = |a: &mut Vec<Vec<f64>>, b: &Vec<Vec<f64>>| a.iter_mut().zip(b).for_each(|(x, y)| x.extend_from_slice(y));
        self.samples.extend_from_slice(&other.samples);
        cat(&mut self.sum_w, &other.sum_w);
        cat(&mut self.sum_w2, &other.sum_w2);
        cat(&mut self.push, &other.push);
        cat(&mut self.phi, &other.phi);
        for (a, b) in self.phi_face.iter_mut().zip(&other.phi_face) {
            cat(a, b);
        }
        self.min_w = self.min_w.min(other.min_w);
        self.max_complementarity = self.max_complementarity.max(other.max_complementarity);
    }
}

pub fn simulate_srbm(data: &SrbmData, cfg: &SrbmConfig) -> Result<SrbmStats> {
    if !(cfg.step > 0.0 && cfg.horizon > cfg.warmup && cfg.warmup >= 0.0 && cfg.batches > 0) {
        return Err(Error::InvalidArgument(format!("need step > 0 and horizon > warmup >= 0, got {cfg:?}")));
    }
    let l = data.dim();
    if cfg.thetas.iter().any(|t| t.len() != l) {
        return Err(Error::InvalidArgument(format!("θ points must have length {l}")));
    }
    // Γ = 2Σ = CCᵀ
    let chol = (&data.sigma * 2.0).cholesky().ok_or_else(|| Error::InvalidArgument("Σ is not positive definite".into()))?.l();
    let drift = data.drift();
    let h = cfg.step;
    let sq = h.sqrt();
    let total_steps = (cfg.horizon / h).round() as u64;
    let warm_steps = (cfg.warmup / h).round() as u64;
    let kept = total_steps - warm_steps;
    let per_batch = kept.div_ceil(cfg.batches as u64).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lcp = Lcp::new(data.r.clone());
    let mut stats = SrbmStats::new(l, h, cfg.thetas.clone(), cfg.batches);
    let mut w = vec![0.0; l];
    let mut x = vec![0.0; l];
    let mut xi = vec![0.0; l];
    let mut y = vec![0.0; l];
    let mut next = vec![0.0; l];
    let mut diag_only = true;
    for i in 0..l {
        for j in 0..i {
            diag_only &= chol[(i, j)] == 0.0;
        }
    }

    for n in 0..total_steps {
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for i in 0..l {
            let noise = if diag_only { chol[(i, i)] * xi[i] } else { (0..=i).map(|j| chol[(i, j)] * xi[j]).sum::<f64>() };
            x[i] = w[i] + drift[i] * h + sq * noise;
        }
        lcp.solve(&x, &mut y, &mut next)?;
        std::mem::swap(&mut w, &mut next);
        if n < warm_steps {
            continue;
        }
        let b = (((n - warm_steps) / per_batch) as usize).min(cfg.batches - 1);
        stats.samples[b] += 1.0;
        for i in 0..l {
            let wi = w[i];
            stats.min_w = stats.min_w.min(wi);
            stats.max_complementarity = stats.max_complementarity.max(wi * y[i]);
            stats.sum_w[i][b] += wi;
            stats.sum_w2[i][b] += wi * wi;
            stats.push[i][b] += y[i];
        }
        for (p, th) in cfg.thetas.iter().enumerate() {
            let e = th.iter().zip(&w).map(|(a, v)| a * v).sum::<f64>().exp();
            stats.phi[p][b] += e;
            for i in 0..l {
                if y[i] > 0.0 {
                    stats.phi_face[p][i][b] += y[i] * e;
                }
            }
        }
    }
    Ok(stats)
}

/// Independent paths with seeds `seed, seed + 1, …`, run in parallel and
/// merged in seed order.
pub fn simulate_srbm_replicated(data: &SrbmData, cfg: &SrbmConfig, replications: usize) -> Result<SrbmStats> {
    let runs: Vec<Result<SrbmStats>> = (0..replications.max(1) as u64)
        .into_par_iter()
        .map(|i| simulate_srbm(data, &SrbmConfig { seed: cfg.seed.wrapping_add(i), ..cfg.clone() }))
        .collect();
    let mut it = runs.into_iter();
    let mut out = it.next().unwrap()?;
    for r in it {
        out.merge(&r?);
    }
    Ok(out)
}

/// `⟨θ, Σθ⟩φ(θ) + Σ_ℓ b_ℓ ⟨θ, R^{(ℓ)}⟩ (φ_ℓ(θ) - φ(θ))` at point `p`.
pub fn srbm_bar_residual(stats: &SrbmStats, data: &SrbmData, p: usize) -> Result<f64> {
    let th = &stats.thetas[p];
    let l = data.dim();
    if th.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let phi = stats.phi(p).value;
    let quad: f64 = (0..l).flat_map(|i| (0..l).map(move |j| (i, j))).map(|(i, j)| th[i] * data.sigma[(i, j)] * th[j]).sum();
    let mut res = quad * phi;
    for f in 0..l {
        let tr: f64 = (0..l).map(|i| th[i] * data.r[(i, f)]).sum();
        if tr == 0.0 {
            continue;
        }
        res += data.b[f] * tr * (stats.phi_face(p, f)?.value - phi);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(sigma: f64, b: f64) -> SrbmData {
        SrbmData::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, sigma), vec![b]).unwrap()
    }

    #[test]
    fn lcp_solutions_are_complementary() {
        let r = DMatrix::from_row_slice(2, 2, &[2.5, -1.5, -5.0, 5.0]);
        let mut lcp = Lcp::new(r.clone());
        let (mut y, mut w) = (vec![0.0; 2], vec![0.0; 2]);
        for q in [[-1.0, 0.5], [0.3, -0.2], [-0.4, -0.7], [1.0, 2.0], [-1e-3, 1e-3]] {
            lcp.solve(&q, &mut y, &mut w).unwrap();
            for i in 0..2 {
                assert!(y[i] >= 0.0 && w[i] >= -1e-12 && (w[i] * y[i]).abs() < 1e-12, "q={q:?} y={y:?} w={w:?}");
                let wi = q[i] + r[(i, 0)] * y[0] + r[(i, 1)] * y[1];
                assert!((wi - w[i]).abs() < 1e-12);
            }
        }
        // not an M-matrix, still completely-S: pivoting alone must cope
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.3, 1.0, 0.4, -0.2, 0.6, 1.0]);
        let mut lcp = Lcp::new(r.clone());
        let (mut y, mut w) = (vec![0.0; 3], vec![0.0; 3]);
        for q in [[-1.0, -1.0, -1.0], [-0.5, 0.2, -0.3], [0.1, -2.0, 0.4]] {
            lcp.solve(&q, &mut y, &mut w).unwrap();
            for i in 0..3 {
                assert!(y[i] >= 0.0 && w[i] >= -1e-12 && (w[i] * y[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn data_preconditions() {
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!(SrbmData::new(one.clone(), one.clone(), vec![0.0]).is_err());
        assert!(SrbmData::new(one.clone(), -one.clone(), vec![1.0]).is_err());
        assert!(SrbmData::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]).map(|v| -v), DMatrix::identity(2, 2), vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn one_dimensional_mean_and_residual() {
        let data = one_d(1.0, 1.0);
        let mut cfg = SrbmConfig::new(&data, 2e4, 3);
        cfg.thetas = vec![vec![0.0], vec![-1.0]];
        let s = simulate_srbm(&data, &cfg).unwrap();
        let m = s.mean(0);
        assert!((m.value - 1.0).abs() < 0.05, "{m:?}");
        assert!(s.min_w >= -1e-12 && s.max_complementarity <= 1e-10);
        assert_eq!(srbm_bar_residual(&s, &data, 0).unwrap(), 0.0);
        assert!(srbm_bar_residual(&s, &data, 1).unwrap().abs() < 0.05);
        // pushing rate equals Rb
        assert!((s.push_rate(0).value - 1.0).abs() < 0.05);
    }

    #[test]
    fn scaled_parameters_scale_the_mean() {
        // mean Σ/(Rb): Σ → c²Σ, b → cb gives c times the mean
        let c = 2.0;
        let data = one_d(c * c, c);
        let s = simulate_srbm(&data, &SrbmConfig::new(&data, 2e4, 5)).unwrap();
        assert!((s.mean(0).value / c - 1.0).abs() < 0.05);
    }

    #[test]
    fn diagonal_data_decouples() {
        let data = SrbmData::new(DMatrix::identity(2, 2), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5])), vec![1.0, 2.0]).unwrap();
        let s = simulate_srbm(&data, &SrbmConfig::new(&data, 1e4, 9)).unwrap();
        let (m0, m1) = (s.mean(0).value, s.mean(1).value);
        assert!((m0 - 1.0).abs() < 0.05 && (m1 - 0.25).abs() < 0.05 * 0.25 + 0.01, "{m0} {m1}");
    }

    #[test]
    fn never_pushed_face_is_reported() {
        let data = one_d(1.0, 1.0);
        let mut cfg = SrbmConfig::new(&data, 1.0, 1);
        cfg.warmup = 0.0;
        cfg.thetas = vec![vec![-1.0]];
        let mut s = simulate_srbm(&data, &cfg).unwrap();
        s.push[0].iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(srbm_bar_residual(&s, &data, 0), Err(Error::NoBoundaryMass { face: 0 })));
    }
}
