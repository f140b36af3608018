//! The two-station, five-class reentrant line and its closed forms, plus a
//! few small reference networks used throughout the tests and the CLI.
//!
//! Classes 1..5 (indices 0..4) visit stations 1, 2, 1, 2, 1. Station 1
//! serves 5 > 3 > 1, station 2 serves 2 > 4.

use crate::dist::DistributionModel;
use crate::error::{Error, Result};
use crate::network::{validate_spec, HeavyTrafficFamily, NetworkSpec, ValidatedNetwork};

/// Means satisfying the critical normalization with `m₅ < m₄`.
pub const DEFAULT_MEANS: [f64; 5] = [0.3, 0.5, 0.4, 0.5, 0.3];

/// `dists[0]` is the class-1 inter-arrival model, `dists[1 + k]` the service
/// model of class `k`.
pub fn network(means: &[f64; 5], lambda: f64, dists: [DistributionModel; 6]) -> Result<ValidatedNetwork> {
    let mut routing = vec![vec![0.0; 5]; 5];
    for k in 0..4 {
        routing[k][k + 1] = 1.0;
    }
    let mut arrival_dist = vec![DistributionModel::Exponential; 5];
    arrival_dist[0] = dists[0];
    validate_spec(NetworkSpec {
        num_stations: 2,
        station_of: vec![0, 1, 0, 1, 0],
        priority_rank: vec![1, 2, 2, 1, 3],
        routing,
        arrival_rate: vec![lambda, 0.0, 0.0, 0.0, 0.0],
        mean_service: means.to_vec(),
        arrival_dist,
        service_dist: dists[1..].to_vec(),
    })
}

pub fn check_normalization(m: &[f64; 5]) -> Result<()> {
    let s1 = m[0] + m[2] + m[4];
    let s2 = m[1] + m[3];
    if m.iter().any(|&v| !(v > 0.0)) || (s1 - 1.0).abs() > 1e-12 || (s2 - 1.0).abs() > 1e-12 {
        return Err(Error::BadNormalization(format!("m1+m3+m5 = {s1}, m2+m4 = {s2}")));
    }
    if m[4] >= m[3] {
        return Err(Error::BadNormalization(format!("m5 = {} is not below m4 = {}", m[4], m[3])));
    }
    Ok(())
}

/// Family `λ^{(r)} = 1 - r` with service means held fixed.
pub fn family(means: &[f64; 5], dists: [DistributionModel; 6]) -> Result<HeavyTrafficFamily> {
    check_normalization(means)?;
    let base = network(means, 1.0, dists)?;
    HeavyTrafficFamily::new(base, vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0; 5])
}

/// Closed-form reflection matrix on `(Z₁, Z₄)`.
pub fn reflection(m: &[f64; 5]) -> [[f64; 2]; 2] {
    let d = m[3] - m[4];
    [[m[3] / d, -m[4] / d], [-1.0 / d, 1.0 / d]]
}

/// Closed-form covariance for arrival SCV `ce` and service SCVs `cs`.
///
/// The off-diagonal entry carries the factor `1/2` that the polarization of
/// the quadratic form produces.
pub fn sigma(m: &[f64; 5], ce: f64, cs: &[f64; 5]) -> [[f64; 2]; 2] {
    let mu4 = 1.0 / m[3];
    let mu5 = 1.0 / m[4];
    let d2 = (mu5 - mu4).powi(2);
    let a1 = m[0] * m[0] * mu5 * mu5 * cs[0];
    let a2 = (mu4 - 1.0).powi(2) * cs[1];
    let a3 = m[2] * m[2] * mu5 * mu5 * cs[2];
    let s11 = (d2 * ce + a1 + a2 + a3 + cs[3] + cs[4]) / (2.0 * d2);
    let s14 = -(a1 * mu4 + a2 * mu5 + a3 * mu4 + mu5 * cs[3] + mu4 * cs[4]) / (2.0 * d2);
    let s44 = (a1 * mu4 * mu4 + a2 * mu5 * mu5 + a3 * mu4 * mu4 + mu5 * mu5 * cs[3] + mu4 * mu4 * cs[4]) / (2.0 * d2);
    [[s11, s14], [s14, s44]]
}

/// `(θ₂, θ₃, θ₅)` from `(θ₁, θ₄)`.
pub fn theta_high(m: &[f64; 5], theta1: f64, theta4: f64) -> [f64; 3] {
    let mu5 = 1.0 / m[4];
    let t5 = (m[3] * theta1 - theta4) / (mu5 * m[3] - 1.0);
    [theta1 - m[0] * mu5 * t5, theta4 + m[2] * mu5 * t5, t5]
}

/// Stationary idle probabilities `β_k = P(Z_{H(k)} = 0)` at arrival rate `λ`.
pub fn idle_probabilities(m: &[f64; 5], lambda: f64) -> [f64; 5] {
    [
        1.0 - lambda * (m[0] + m[2] + m[4]),
        1.0 - lambda * m[1],
        1.0 - lambda * (m[2] + m[4]),
        1.0 - lambda * (m[1] + m[3]),
        1.0 - lambda * m[4],
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionReport {
    pub member: bool,
    /// `(θ₂, θ₃, θ₅)`
    pub theta_high: [f64; 3],
    pub all_negative: bool,
}

/// Membership of `θ_L = (θ₁, θ₄)` in the open set of admissible directions.
pub fn verify_region(m: &[f64; 5], theta_l: [f64; 2]) -> Result<RegionReport> {
    check_normalization(m)?;
    let [t1, t4] = theta_l;
    let mu5 = 1.0 / m[4];
    let lower = m[3] - (mu5 * m[3] - 1.0) / (m[0] * mu5);
    let member = t1 < 0.0 && t4 < 0.0 && {
        let ratio = t4 / t1;
        lower < ratio && ratio < m[3]
    };
    let th = theta_high(m, t1, t4);
    Ok(RegionReport { member, theta_high: th, all_negative: th.iter().all(|&v| v < 0.0) })
}

/// Ratio bounds `(lower, upper)` on `θ₄/θ₁` for the admissible region.
pub fn region_bounds(m: &[f64; 5]) -> (f64, f64) {
    let mu5 = 1.0 / m[4];
    (m[3] - (mu5 * m[3] - 1.0) / (m[0] * mu5), m[3])
}

/// Single-class station with Poisson arrivals at `lambda`.
pub fn single_station(lambda: f64, mean: f64, arrival: DistributionModel, service: DistributionModel) -> Result<ValidatedNetwork> {
    validate_spec(NetworkSpec {
        num_stations: 1,
        station_of: vec![0],
        priority_rank: vec![0],
        routing: vec![vec![0.0]],
        arrival_rate: vec![lambda],
        mean_service: vec![mean],
        arrival_dist: vec![arrival],
        service_dist: vec![service],
    })
}

/// The M/M/1 family `λ^{(r)} = 1 - r`, `m = 1`.
pub fn mm1_family() -> Result<HeavyTrafficFamily> {
    let base = single_station(1.0, 1.0, DistributionModel::Exponential, DistributionModel::Exponential)?;
    HeavyTrafficFamily::new(base, vec![1.0], vec![0.0])
}

/// One station, two externally fed classes, class 1 preempting class 2.
pub fn priority_pair(lambda: [f64; 2], means: [f64; 2]) -> Result<ValidatedNetwork> {
    validate_spec(NetworkSpec {
        num_stations: 1,
        station_of: vec![0, 0],
        priority_rank: vec![2, 1],
        routing: vec![vec![0.0; 2]; 2],
        arrival_rate: lambda.to_vec(),
        mean_service: means.to_vec(),
        arrival_dist: vec![DistributionModel::Exponential; 2],
        service_dist: vec![DistributionModel::Exponential; 2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_reflection_entries() {
        let r = reflection(&DEFAULT_MEANS);
        let want = [[2.5, -1.5], [-5.0, 5.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigma_matches_quadratic_identity() {
        // left side of the pilot quadratic identity, evaluated directly
        let m = DEFAULT_MEANS;
        let ce = 1.3;
        let cs = [0.7, 1.1, 2.0, 0.4, 1.5];
        let q = |t1: f64, t4: f64| {
            let [t2, t3, t5] = theta_high(&m, t1, t4);
            let t = [t1, t2, t3, t4, t5];
            let mut s = ce * t1 * t1 + cs[4] * t5 * t5;
            for k in 0..4 {
                s += cs[k] * (t[k + 1] - t[k]).powi(2);
            }
            0.5 * s
        };
        let s = sigma(&m, ce, &cs);
        for &(a, b) in &[(1.0, 0.0), (0.0, 1.0), (-0.7, 0.3), (2.0, -1.5)] {
            let rhs = s[0][0] * a * a + 2.0 * s[0][1] * a * b + s[1][1] * b * b;
            assert!((q(a, b) - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn region_examples() {
        let m = DEFAULT_MEANS;
        let (lo, hi) = region_bounds(&m);
        let mid = 0.5 * (lo + hi);
        let rep = verify_region(&m, [-1.0, -mid]).unwrap();
        assert!(rep.member && rep.all_negative);
        assert!(!verify_region(&m, [-1.0, -m[3]]).unwrap().member);
        assert!(!verify_region(&m, [0.0, 0.0]).unwrap().member);
        assert!(matches!(verify_region(&[0.3, 0.5, 0.4, 0.5, 0.4], [-1.0, -0.4]), Err(Error::BadNormalization(_))));
    }

    #[test]
    fn idle_closed_forms_at_critical_load() {
        let b = idle_probabilities(&DEFAULT_MEANS, 1.0);
        assert!(b[0].abs() < 1e-15 && b[3].abs() < 1e-15);
        assert!((b[4] - 0.7).abs() < 1e-15);
    }
}
