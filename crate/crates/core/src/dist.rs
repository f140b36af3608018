//! Unit-mean distribution models for interarrival and service times.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, LogNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// A nonnegative random variable `T` with `E[T] = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistributionModel {
    Exponential,
    Deterministic,
    /// Uniform on `[1 - a, 1 + a]`, `0 <= a < 1`.
    Uniform { half_width: f64 },
    /// Sum of `phases` exponentials of rate `phases`.
    Erlang { phases: u32 },
    /// Two-phase hyperexponential with balanced means.
    HyperExp { scv: f64 },
    LogNormal { scv: f64 },
}

impl DistributionModel {
    pub fn uniform(half_width: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&half_width) {
            return Err(Error::Parse(format!("uniform half-width {half_width} outside [0, 1)")));
        }
        Ok(Self::Uniform { half_width })
    }

    pub fn erlang(phases: u32) -> Result<Self> {
        if phases == 0 {
            return Err(Error::Parse("erlang needs k >= 1".into()));
        }
        Ok(Self::Erlang { phases })
    }

    pub fn hyperexp(scv: f64) -> Result<Self> {
        if !(scv >= 1.0 && scv.is_finite()) {
            return Err(Error::Parse(format!("hyperexponential scv {scv} must be >= 1")));
        }
        Ok(Self::HyperExp { scv })
    }

    pub fn lognormal(scv: f64) -> Result<Self> {
        if !(scv > 0.0 && scv.is_finite()) {
            return Err(Error::Parse(format!("lognormal scv {scv} must be positive")));
        }
        Ok(Self::LogNormal { scv })
    }

    /// Squared coefficient of variation.
    pub fn scv(&self) -> f64 {
        match *self {
            Self::Exponential => 1.0,
            Self::Deterministic => 0.0,
            Self::Uniform { half_width: a } => a * a / 3.0,
            Self::Erlang { phases } => 1.0 / phases as f64,
            Self::HyperExp { scv } | Self::LogNormal { scv } => scv,
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, Self::Exponential)
            || matches!(self, Self::Erlang { phases: 1 })
            || matches!(self, Self::HyperExp { scv } if *scv == 1.0)
    }

    /// Phase probabilities and rates of the hyperexponential mixture.
    fn hyper_phases(scv: f64) -> [(f64, f64); 2] {
        let q1 = 0.5 * (1.0 + ((scv - 1.0) / (scv + 1.0)).sqrt());
        let q2 = 1.0 - q1;
        [(q1, 2.0 * q1), (q2, 2.0 * q2)]
    }

    fn lognormal_params(scv: f64) -> (f64, f64) {
        let s2 = scv.ln_1p();
        (-0.5 * s2, s2.sqrt())
    }

    /// Raw moment `E[T^p]`.
    pub fn moment(&self, p: u32) -> f64 {
        self.partial_moment(p, 0.0)
    }

    /// `E[T^p 1(T >= x)]` for `x >= 0`.
    pub fn partial_moment(&self, p: u32, x: f64) -> f64 {
        let pf = p as f64;
        match *self {
            Self::Exponential => factorial(p) * poisson_tail(p + 1, x),
            Self::Deterministic => {
                if x <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Uniform { half_width: a } => {
                if a == 0.0 {
                    return Self::Deterministic.partial_moment(p, x);
                }
                let lo = (1.0 - a).max(x);
                let hi = 1.0 + a;
                if lo >= hi {
                    return 0.0;
                }
                (hi.powf(pf + 1.0) - lo.powf(pf + 1.0)) / (2.0 * a * (pf + 1.0))
            }
            Self::Erlang { phases: k } => {
                let kf = k as f64;
                let rising: f64 = (0..p).map(|i| (kf + i as f64) / kf).product();
                rising * poisson_tail(k + p, kf * x)
            }
            Self::HyperExp { scv } => Self::hyper_phases(scv)
                .iter()
                .map(|&(q, mu)| q * factorial(p) / mu.powf(pf) * poisson_tail(p + 1, mu * x))
                .sum(),
            Self::LogNormal { scv } => {
                let (m, s) = Self::lognormal_params(scv);
                let full = (pf * m + 0.5 * pf * pf * s * s).exp();
                if x <= 0.0 {
                    full
                } else {
                    full * normal_sf((x.ln() - m - pf * s * s) / s)
                }
            }
        }
    }

    /// `P(T > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match *self {
            Self::Deterministic => {
                if x < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.partial_moment(0, x),
        }
    }

    /// `E[T ∧ c]`.
    pub fn truncated_mean(&self, c: f64) -> f64 {
        if c.is_infinite() {
            return 1.0;
        }
        1.0 - self.partial_moment(1, c) + c * self.survival(c)
    }

    /// Infimum of the arguments `s` for which `E[exp(-s T)]` is finite.
    pub fn abscissa(&self) -> f64 {
        match *self {
            Self::Exponential => -1.0,
            Self::Erlang { phases } => -(phases as f64),
            Self::HyperExp { scv } => -Self::hyper_phases(scv)[1].1.min(Self::hyper_phases(scv)[0].1),
            Self::LogNormal { .. } => 0.0,
            Self::Deterministic | Self::Uniform { .. } => f64::NEG_INFINITY,
        }
    }

    /// `[E e^{-sU}, E U e^{-sU}, E U^2 e^{-sU}]` for `U = T ∧ cap`
    /// (`cap = ∞` allowed). `None` where the transform diverges.
    pub fn laplace(&self, s: f64, cap: f64) -> Option<[f64; 3]> {
        let untruncated = cap.is_infinite();
        if untruncated {
            let a = self.abscissa();
            let ok = match self {
                Self::LogNormal { .. } => s >= 0.0,
                _ => s > a,
            };
            if !ok {
                return None;
            }
        }
        let atom = |c: f64, mass: f64| {
            let e = mass * (-s * c).exp();
            [e, c * e, c * c * e]
        };
        let out = match *self {
            Self::Deterministic => {
                let u = cap.min(1.0);
                atom(u, 1.0)
            }
            Self::Uniform { half_width: 0.0 } => Self::Deterministic.laplace(s, cap)?,
            Self::Uniform { half_width: a } => {
                let (lo, hi) = (1.0 - a, 1.0 + a);
                let top = hi.min(cap);
                let body = quad::integrate(lo, top, 0.5, |x| {
                    let e = (-s * x).exp() / (2.0 * a);
                    [e, x * e, x * x * e]
                });
                if cap < hi {
                    let mass = (hi - cap.max(lo)) / (2.0 * a);
                    add(body, atom(cap, mass))
                } else {
                    body
                }
            }
            Self::Exponential | Self::Erlang { .. } | Self::HyperExp { .. } if untruncated => {
                self.gamma_family_closed(s)
            }
            Self::Exponential | Self::Erlang { .. } | Self::HyperExp { .. } => {
                let body = quad::integrate(0.0, cap, 1.0, |x| {
                    let e = self.density(x) * (-s * x).exp();
                    [e, x * e, x * x * e]
                });
                add(body, atom(cap, self.survival(cap)))
            }
            Self::LogNormal { scv } => {
                let (m, sd) = Self::lognormal_params(scv);
                let lo = m - 12.0 * sd;
                let hi = if untruncated { m + 12.0 * sd } else { cap.ln() };
                let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
                let body = quad::integrate(lo, hi, 0.5 * sd, |y| {
                    let x = y.exp();
                    let z = (y - m) / sd;
                    let e = norm * (-0.5 * z * z - s * x).exp();
                    [e, x * e, x * x * e]
                });
                if untruncated {
                    body
                } else {
                    add(body, atom(cap, self.survival(cap)))
                }
            }
        };
        if out.iter().all(|v| v.is_finite()) {
            Some(out)
        } else {
            None
        }
    }

    fn gamma_family_closed(&self, s: f64) -> [f64; 3] {
        match *self {
            Self::Exponential => {
                let b = 1.0 / (1.0 + s);
                [b, b * b, 2.0 * b * b * b]
            }
            Self::Erlang { phases: k } => {
                let kf = k as f64;
                let b = kf / (kf + s);
                let m0 = b.powi(k as i32);
                let g = 1.0 / (kf + s);
                [m0, m0 * kf * g, m0 * kf * (kf + 1.0) * g * g]
            }
            Self::HyperExp { scv } => {
                let mut out = [0.0; 3];
                for (q, mu) in Self::hyper_phases(scv) {
                    let b = 1.0 / (mu + s);
                    out[0] += q * mu * b;
                    out[1] += q * mu * b * b;
                    out[2] += 2.0 * q * mu * b * b * b;
                }
                out
            }
            _ => unreachable!(),
        }
    }

    /// Density of the continuous gamma-family members.
    fn density(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential => (-x).exp(),
            Self::Erlang { phases: k } => {
                let kf = k as f64;
                (kf * (kf * x).ln() - kf * x - ln_factorial(k - 1) - x.ln()).exp()
            }
            Self::HyperExp { scv } => Self::hyper_phases(scv).iter().map(|&(q, mu)| q * mu * (-mu * x).exp()).sum(),
            _ => unreachable!(),
        }
    }

    /// `E[exp(-s (T ∧ 1/t))]`; `t = 0` means no truncation.
    pub fn mgf_truncated(&self, s: f64, t: f64) -> f64 {
        self.laplace(s, cap_of(t)).map_or(f64::INFINITY, |v| v[0])
    }

    pub fn sampler(&self) -> Sampler {
        match *self {
            Self::Exponential => Sampler::Exp,
            Self::Deterministic => Sampler::Det,
            Self::Uniform { half_width: 0.0 } => Sampler::Det,
            Self::Uniform { half_width: a } => Sampler::Uniform(Uniform::new(1.0 - a, 1.0 + a).unwrap()),
            Self::Erlang { phases: 1 } => Sampler::Exp,
            Self::Erlang { phases: k } => Sampler::Gamma(Gamma::new(k as f64, 1.0 / k as f64).unwrap()),
            Self::HyperExp { scv } => {
                let [(q1, r1), (_, r2)] = Self::hyper_phases(scv);
                Sampler::Hyper { q1, r1, r2 }
            }
            Self::LogNormal { scv } => {
                let (m, s) = Self::lognormal_params(scv);
                Sampler::LogNormal(LogNormal::new(m, s).unwrap())
            }
        }
    }
}

/// Cap `1/t` for truncation level `t`, with `t = 0` meaning none.
pub fn cap_of(t: f64) -> f64 {
    if t == 0.0 {
        f64::INFINITY
    } else {
        1.0 / t
    }
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// `P(Poisson(y) < n) = e^{-y} Σ_{i<n} y^i / i!`, the upper regularized
/// incomplete gamma function at integer order `n`.
fn poisson_tail(n: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..n {
        term *= y / i as f64;
        sum += term;
    }
    // log form keeps large-y tails from underflowing prematurely
    (sum.ln() - y).exp()
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

impl fmt::Display for DistributionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential => write!(f, "exponential"),
            Self::Deterministic => write!(f, "deterministic"),
            Self::Uniform { half_width } => write!(f, "uniform(a={half_width})"),
            Self::Erlang { phases } => write!(f, "erlang(k={phases})"),
            Self::HyperExp { scv } => write!(f, "hyperexp(scv={scv})"),
            Self::LogNormal { scv } => write!(f, "lognormal(scv={scv})"),
        }
    }
}

impl FromStr for DistributionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.find('(') {
            Some(i) => {
                let rest = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Parse(format!("unbalanced parentheses in '{s}'")))?;
                let (key, value) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected key=value in '{s}'")))?;
                let value: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number in '{s}'")))?;
                (s[..i].trim(), Some((key.trim(), value)))
            }
            None => (s, None),
        };
        match (name, arg) {
            ("exponential", None) => Ok(Self::Exponential),
            ("deterministic", None) => Ok(Self::Deterministic),
            ("uniform", Some(("a", a))) => Self::uniform(a),
            ("erlang", Some(("k", k))) if k.fract() == 0.0 && k >= 1.0 => Self::erlang(k as u32),
            ("hyperexp", Some(("scv", c))) => Self::hyperexp(c),
            ("lognormal", Some(("scv", c))) => Self::lognormal(c),
            _ => Err(Error::Parse(format!("unknown distribution '{s}'"))),
        }
    }
}

impl TryFrom<String> for DistributionModel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DistributionModel> for String {
    fn from(d: DistributionModel) -> String {
        d.to_string()
    }
}

/// Prebuilt sampler for one distribution model.
#[derive(Clone, Debug)]
pub enum Sampler {
    Exp,
    Det,
    Uniform(Uniform<f64>),
    Gamma(Gamma<f64>),
    Hyper { q1: f64, r1: f64, r2: f64 },
    LogNormal(LogNormal<f64>),
}

impl Sampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Exp => Exp1.sample(rng),
            Sampler::Det => 1.0,
            Sampler::Uniform(u) => u.sample(rng),
            Sampler::Gamma(g) => g.sample(rng),
            Sampler::Hyper { q1, r1, r2 } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<f64>() < *q1 {
                    e / r1
                } else {
                    e / r2
                }
            }
            Sampler::LogNormal(l) => l.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalogue() -> Vec<DistributionModel> {
        vec![
            DistributionModel::Exponential,
            DistributionModel::Deterministic,
            DistributionModel::uniform(0.9).unwrap(),
            DistributionModel::erlang(2).unwrap(),
            DistributionModel::erlang(4).unwrap(),
            DistributionModel::hyperexp(4.0).unwrap(),
            DistributionModel::lognormal(2.0).unwrap(),
        ]
    }

    #[test]
    fn unit_mean_and_second_moment() {
        for d in catalogue() {
            assert!((d.moment(1) - 1.0).abs() < 1e-10, "{d}");
            assert!((d.moment(2) - 1.0 - d.scv()).abs() < 1e-10, "{d}");
        }
    }

    #[test]
    fn laplace_at_zero_is_one() {
        for d in catalogue() {
            for t in [0.0, 1.0, 0.5, 0.1, 0.02] {
                if matches!(d, DistributionModel::LogNormal { .. }) && t == 0.0 {
                    continue;
                }
                let v = d.mgf_truncated(0.0, t);
                assert!((v - 1.0).abs() < 1e-12, "{d} t={t} v={v}");
            }
        }
    }

    #[test]
    fn laplace_derivative_matches_truncated_mean() {
        for d in catalogue() {
            for cap in [0.5, 1.3, 7.0] {
                let [_, m1, _] = d.laplace(0.0, cap).unwrap();
                assert!((m1 - d.truncated_mean(cap)).abs() < 1e-11, "{d} cap={cap}");
            }
        }
    }

    #[test]
    fn closed_form_and_quadrature_agree_for_large_caps() {
        for d in [DistributionModel::Exponential, DistributionModel::erlang(3).unwrap(), DistributionModel::hyperexp(2.0).unwrap()] {
            for s in [-0.15, 0.0, 0.4] {
                let a = d.laplace(s, f64::INFINITY).unwrap();
                let b = d.laplace(s, 200.0).unwrap();
                for i in 0..3 {
                    assert!((a[i] - b[i]).abs() < 1e-10, "{d} s={s} i={i}");
                }
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        for d in catalogue() {
            let back: DistributionModel = d.to_string().parse().unwrap();
            assert_eq!(back, d);
        }
        assert!("weibull(k=2)".parse::<DistributionModel>().is_err());
        assert!("uniform(a=1.5)".parse::<DistributionModel>().is_err());
    }

    #[test]
    fn sample_mean_near_one() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for d in catalogue() {
            let s = d.sampler();
            let n = 200_000;
            let m = (0..n).map(|_| s.sample(&mut rng)).sum::<f64>() / n as f64;
            let se = (d.scv() / n as f64).sqrt();
            assert!((m - 1.0).abs() < 5.0 * se + 1e-12, "{d}: {m}");
        }
    }
}
