//! Heavy-traffic SRBM data `(R, Σ, b)` from a critically loaded network.

use nalgebra::{DMatrix, DVector};

use crate::checks::{check_completely_s, check_m_matrix, check_tight, TightSystemResult, TightVerdict};
use crate::error::{Error, Result};
use crate::linalg::{inverse_checked, select, vector};
use crate::network::{solve_traffic, HeavyTrafficFamily, ValidatedNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionData {
    pub a: DMatrix<f64>,
    /// `B_{k,k+} = 1`
    pub successor: DMatrix<f64>,
    pub lowest: Vec<usize>,
    pub high: Vec<usize>,
    pub a_l: DMatrix<f64>,
    pub a_lh: DMatrix<f64>,
    pub a_hl: DMatrix<f64>,
    pub a_h: DMatrix<f64>,
    pub a_h_inv: Option<DMatrix<f64>>,
    pub r: Option<DMatrix<f64>>,
}

impl ReflectionData {
    pub fn a_h_invertible(&self) -> bool {
        self.a_h_inv.is_some()
    }

    pub fn reflection(&self) -> Result<&DMatrix<f64>> {
        self.r.as_ref().ok_or(Error::AhSingular)
    }

    /// The linear map `θ_L ↦ θ_H = -(A_H⁻¹)ᵀ A_LHᵀ θ_L` as an H×L matrix.
    pub fn theta_h_map(&self) -> Result<DMatrix<f64>> {
        let inv = self.a_h_inv.as_ref().ok_or(Error::AhSingular)?;
        Ok(-(inv.transpose() * self.a_lh.transpose()))
    }

    /// Full K-vector from its L and H parts.
    pub fn assemble(&self, theta_l: &[f64], theta_h: &[f64]) -> Vec<f64> {
        let mut th = vec![0.0; self.lowest.len() + self.high.len()];
        for (i, &k) in self.lowest.iter().enumerate() {
            th[k] = theta_l[i];
        }
        for (i, &k) in self.high.iter().enumerate() {
            th[k] = theta_h[i];
        }
        th
    }
}

/// `A = (I - Pᵀ) diag(μ) (I - B)` and its L/H blocks, at the network's own
/// service rates.
pub fn build_reflection(net: &ValidatedNetwork) -> ReflectionData {
    let k = net.num_classes();
    let pr = &net.priority;
    let mut successor = DMatrix::zeros(k, k);
    for c in 0..k {
        if let Some(up) = pr.k_plus[c] {
            successor[(c, up)] = 1.0;
        }
    }
    let id = DMatrix::<f64>::identity(k, k);
    let mu = DMatrix::from_diagonal(&vector(&net.service_rates()));
    let a = (&id - net.spec.routing_matrix().transpose()) * mu * (&id - &successor);
    let (lo, hi) = (pr.lowest.clone(), pr.high.clone());
    let a_l = select(&a, &lo, &lo);
    let a_lh = select(&a, &lo, &hi);
    let a_hl = select(&a, &hi, &lo);
    let a_h = select(&a, &hi, &hi);
    let a_h_inv = if hi.is_empty() { Some(DMatrix::zeros(0, 0)) } else { inverse_checked(&a_h).filter(|inv| well_conditioned(&a_h, inv)) };
    let r = a_h_inv.as_ref().map(|inv| &a_l - &a_lh * inv * &a_hl);
    ReflectionData { a, successor, lowest: lo, high: hi, a_l, a_lh, a_hl, a_h, a_h_inv, r }
}

// Near-singular blocks pass the residual test but carry no usable inverse.
fn well_conditioned(a: &DMatrix<f64>, inv: &DMatrix<f64>) -> bool {
    a.norm() * inv.norm() < 1e12
}

pub fn theta_h(data: &ReflectionData, theta_l: &[f64]) -> Result<Vec<f64>> {
    let map = data.theta_h_map()?;
    Ok((map * vector(theta_l)).iter().copied().collect())
}

/// The quadratic form `q(θ)` built from the arrival and service variabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub lambda: Vec<f64>,
    pub scv_e: Vec<f64>,
    pub alpha: Vec<f64>,
    pub scv_s: Vec<f64>,
    pub routing: Vec<Vec<f64>>,
}

impl QuadraticForm {
    pub fn from_network(net: &ValidatedNetwork) -> Result<Self> {
        let t = solve_traffic(net)?;
        let spec = &net.spec;
        Ok(Self {
            lambda: spec.arrival_rate.clone(),
            scv_e: spec.arrival_dist.iter().map(|d| d.scv()).collect(),
            alpha: t.alpha,
            scv_s: spec.service_dist.iter().map(|d| d.scv()).collect(),
            routing: spec.routing.clone(),
        })
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        let mut q = 0.0;
        for k in 0..theta.len() {
            if self.lambda[k] > 0.0 {
                q += self.lambda[k] * self.scv_e[k] * theta[k] * theta[k];
            }
            let row = &self.routing[k];
            let m1: f64 = row.iter().zip(theta).map(|(p, t)| p * t).sum();
            let m2: f64 = row.iter().zip(theta).map(|(p, t)| p * t * t).sum();
            q += self.alpha[k] * (m2 - m1 * m1 + self.scv_s[k] * (theta[k] - m1).powi(2));
        }
        0.5 * q
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionData {
    pub theta_h_map: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub q: QuadraticForm,
}

impl DiffusionData {
    pub fn q_restricted(&self, data: &ReflectionData, theta_l: &[f64]) -> f64 {
        let th: Vec<f64> = (&self.theta_h_map * vector(theta_l)).iter().copied().collect();
        self.q.eval(&data.assemble(theta_l, &th))
    }
}

/// `Σ` by polarization of `θ_L ↦ q(θ_L, θ_H(θ_L))`.
pub fn extract_sigma(net: &ValidatedNetwork, data: &ReflectionData) -> Result<DiffusionData> {
    let map = data.theta_h_map()?;
    let q = QuadraticForm::from_network(net)?;
    let nl = data.lowest.len();
    let mut d = DiffusionData { theta_h_map: map, sigma: DMatrix::zeros(nl, nl), q };
    let unit = |i: usize| {
        let mut v = vec![0.0; nl];
        v[i] = 1.0;
        v
    };
    let diag: Vec<f64> = (0..nl).map(|i| d.q_restricted(data, &unit(i))).collect();
    let mut sigma = DMatrix::zeros(nl, nl);
    for i in 0..nl {
        sigma[(i, i)] = diag[i];
        for j in i + 1..nl {
            let mut v = unit(i);
            v[j] = 1.0;
            let s = 0.5 * (d.q_restricted(data, &v) - diag[i] - diag[j]);
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    d.sigma = sigma;
    Ok(d)
}

/// Verdicts of every hypothesis needed for the SRBM comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub a_h_invertible: bool,
    pub completely_s: Option<bool>,
    pub m_matrix: Option<bool>,
    pub tight: Option<TightVerdict>,
    pub sigma_positive_definite: Option<bool>,
}

impl CheckReport {
    /// Names of the failed hypotheses, empty when all hold.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.a_h_invertible {
            out.push("A_H invertible");
        }
        if self.completely_s != Some(true) {
            out.push("R completely-S");
        }
        if self.tight != Some(TightVerdict::Tight) {
            out.push("(R, b) tight");
        }
        if self.sigma_positive_definite != Some(true) {
            out.push("Sigma positive definite");
        }
        out
    }
}

/// Everything the analysis produces for a heavy-traffic family.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub reflection: ReflectionData,
    pub diffusion: Option<DiffusionData>,
    pub b: Vec<f64>,
    pub tight: Option<TightSystemResult>,
    pub checks: CheckReport,
}

impl Analysis {
    /// `(R, Σ, b)` when every hypothesis holds.
    pub fn srbm_data(&self) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
        let failed = self.checks.failures();
        if !failed.is_empty() {
            return Err(Error::AnalysisFailed(format!("failed: {}", failed.join(", "))));
        }
        let r = self.reflection.reflection()?.clone();
        let sigma = self.diffusion.as_ref().ok_or(Error::AhSingular)?.sigma.clone();
        Ok((r, sigma, self.b.clone()))
    }
}

pub fn analyze(family: &HeavyTrafficFamily) -> Result<Analysis> {
    let net = &family.base;
    let reflection = build_reflection(net);
    let b = family.b();
    let mut checks = CheckReport {
        a_h_invertible: reflection.a_h_invertible(),
        completely_s: None,
        m_matrix: None,
        tight: None,
        sigma_positive_definite: None,
    };
    let mut diffusion = None;
    let mut tight = None;
    if let Some(r) = &reflection.r {
        checks.completely_s = Some(check_completely_s(r).verdict);
        checks.m_matrix = Some(check_m_matrix(r));
        match check_tight(r, &b) {
            Ok(t) => {
                checks.tight = Some(t.verdict);
                tight = Some(t);
            }
            Err(Error::DimensionTooLarge { .. }) => checks.tight = Some(TightVerdict::Undecided),
            Err(e) => return Err(e),
        }
        let d = extract_sigma(net, &reflection)?;
        checks.sigma_positive_definite = Some(d.sigma.clone().cholesky().is_some());
        diffusion = Some(d);
    }
    Ok(Analysis { reflection, diffusion, b, tight, checks })
}

/// Solves `A_Hᵀ θ_H = -A_LHᵀ θ_L` residual, for diagnostics.
pub fn theta_h_residual(data: &ReflectionData, theta_l: &[f64], theta_h: &[f64]) -> f64 {
    let lhs: DVector<f64> = data.a_lh.transpose() * vector(theta_l) + data.a_h.transpose() * vector(theta_h);
    lhs.amax()
}
