//! Network primitives, priority structure, traffic equations and
//! heavy-traffic families.
//!
//! Classes and stations are indexed from zero here; the network file and the
//! CLI use one-based labels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::DistributionModel;
use crate::error::{Error, Result, Violation};
use crate::linalg::{solve_checked, vector};

/// A multiclass network under static buffer priority.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub num_stations: usize,
    /// Station serving each class.
    pub station_of: Vec<usize>,
    /// Per-class rank; within a station the larger rank is served first.
    pub priority_rank: Vec<i64>,
    /// `routing[k][l]`: probability that a class-`k` completion becomes class `l`.
    pub routing: Vec<Vec<f64>>,
    /// External arrival rates, zero for classes without exogenous arrivals.
    pub arrival_rate: Vec<f64>,
    pub mean_service: Vec<f64>,
    pub arrival_dist: Vec<DistributionModel>,
    pub service_dist: Vec<DistributionModel>,
}

impl NetworkSpec {
    pub fn num_classes(&self) -> usize {
        self.station_of.len()
    }

    pub fn routing_matrix(&self) -> DMatrix<f64> {
        let k = self.num_classes();
        DMatrix::from_fn(k, k, |i, j| self.routing[i][j])
    }

    /// External classes `E`.
    pub fn external(&self) -> Vec<usize> {
        (0..self.num_classes()).filter(|&k| self.arrival_rate[k] > 0.0).collect()
    }

    pub fn all_exponential(&self) -> bool {
        let k = self.num_classes();
        (0..k).all(|i| self.service_dist[i].is_exponential() && (self.arrival_rate[i] == 0.0 || self.arrival_dist[i].is_exponential()))
    }
}

/// Derived priority sets and maps.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorityStructure {
    /// Classes of each station, highest priority first.
    pub order: Vec<Vec<usize>>,
    /// Position of each class in its station's order (0 = highest).
    pub position: Vec<usize>,
    /// `H(k)`: classes at `s(k)` with priority at least that of `k`.
    pub h: Vec<Vec<usize>>,
    /// `H₊(k) = H(k) \ {k}`.
    pub h_plus: Vec<Vec<usize>>,
    /// Next class below `k` at its station.
    pub k_minus: Vec<Option<usize>>,
    /// Next class above `k` at its station.
    pub k_plus: Vec<Option<usize>>,
    /// Lowest class of each station, sorted by class index.
    pub lowest: Vec<usize>,
    /// Highest class of each station, sorted by class index.
    pub highest: Vec<usize>,
    /// All classes that are not lowest at their station.
    pub high: Vec<usize>,
    /// J×K constituency matrix.
    pub constituency: DMatrix<f64>,
}

impl PriorityStructure {
    fn build(num_stations: usize, station_of: &[usize], rank: &[i64]) -> Self {
        let k = station_of.len();
        let mut order: Vec<Vec<usize>> = vec![Vec::new(); num_stations];
        for c in 0..k {
            order[station_of[c]].push(c);
        }
        for o in &mut order {
            o.sort_by_key(|&c| std::cmp::Reverse(rank[c]));
        }
        let mut position = vec![0; k];
        let mut h = vec![Vec::new(); k];
        let mut h_plus = vec![Vec::new(); k];
        let mut k_minus = vec![None; k];
        let mut k_plus = vec![None; k];
        for o in &order {
            for (p, &c) in o.iter().enumerate() {
                position[c] = p;
                h[c] = o[..=p].to_vec();
                h_plus[c] = o[..p].to_vec();
                k_plus[c] = p.checked_sub(1).map(|q| o[q]);
                k_minus[c] = o.get(p + 1).copied();
            }
        }
        let mut lowest: Vec<usize> = order.iter().filter_map(|o| o.last().copied()).collect();
        let mut highest: Vec<usize> = order.iter().filter_map(|o| o.first().copied()).collect();
        lowest.sort_unstable();
        highest.sort_unstable();
        let high = (0..k).filter(|c| !lowest.contains(c)).collect();
        let constituency = DMatrix::from_fn(num_stations, k, |j, c| if station_of[c] == j { 1.0 } else { 0.0 });
        Self { order, position, h, h_plus, k_minus, k_plus, lowest, highest, high, constituency }
    }
}

/// A network that passed validation, with its priority structure.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedNetwork {
    pub spec: NetworkSpec,
    pub priority: PriorityStructure,
}

impl ValidatedNetwork {
    pub fn num_classes(&self) -> usize {
        self.spec.num_classes()
    }

    pub fn num_stations(&self) -> usize {
        self.spec.num_stations
    }

    pub fn service_rate(&self, k: usize) -> f64 {
        1.0 / self.spec.mean_service[k]
    }

    pub fn service_rates(&self) -> Vec<f64> {
        self.spec.mean_service.iter().map(|m| 1.0 / m).collect()
    }
}

/// Checks structural assumptions and derives the priority structure.
pub fn validate_spec(spec: NetworkSpec) -> Result<ValidatedNetwork> {
    let mut bad = Vec::new();
    let k = spec.num_classes();
    let j = spec.num_stations;
    let shape_ok = k > 0
        && j > 0
        && spec.priority_rank.len() == k
        && spec.arrival_rate.len() == k
        && spec.mean_service.len() == k
        && spec.arrival_dist.len() == k
        && spec.service_dist.len() == k
        && spec.routing.len() == k
        && spec.routing.iter().all(|row| row.len() == k);
    if !shape_ok {
        return Err(Error::InvalidNetwork(vec![Violation::Shape(format!(
            "inconsistent dimensions for {k} classes and {j} stations"
        ))]));
    }
    for (c, &s) in spec.station_of.iter().enumerate() {
        if s >= j {
            bad.push(Violation::Shape(format!("class {c} refers to missing station {s}")));
        }
    }
    for s in 0..j {
        if !spec.station_of.contains(&s) {
            bad.push(Violation::Shape(format!("station {s} has no classes")));
        }
        let mut ranks: Vec<i64> = (0..k).filter(|&c| spec.station_of[c] == s).map(|c| spec.priority_rank[c]).collect();
        let n = ranks.len();
        ranks.sort_unstable();
        ranks.dedup();
        if ranks.len() != n {
            bad.push(Violation::NonStrictPriority { station: s });
        }
    }
    for c in 0..k {
        let lam = spec.arrival_rate[c];
        if !(lam >= 0.0 && lam.is_finite()) {
            bad.push(Violation::BadRates { class: c, detail: format!("arrival rate {lam}") });
        }
        let m = spec.mean_service[c];
        if !(m > 0.0 && m.is_finite()) {
            bad.push(Violation::BadRates { class: c, detail: format!("mean service time {m}") });
        }
        let row = &spec.routing[c];
        if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) || row.iter().sum::<f64>() > 1.0 + 1e-12 {
            bad.push(Violation::Shape(format!("routing row {c} is not sub-stochastic")));
        }
    }
    if !bad.is_empty() {
        return Err(Error::InvalidNetwork(bad));
    }
    if traffic_rates(&spec).is_none() {
        return Err(Error::InvalidNetwork(vec![Violation::NonOpenNetwork]));
    }
    let priority = PriorityStructure::build(j, &spec.station_of, &spec.priority_rank);
    Ok(ValidatedNetwork { spec, priority })
}

/// Solution of `α = λ + Pᵀα`, or `None` when `I - Pᵀ` is singular or the
/// solution is not a nonnegative flow.
fn traffic_rates(spec: &NetworkSpec) -> Option<DVector<f64>> {
    let k = spec.num_classes();
    let a = DMatrix::identity(k, k) - spec.routing_matrix().transpose();
    let alpha = solve_checked(&a, &vector(&spec.arrival_rate))?;
    alpha.iter().all(|&v| v >= -1e-12).then_some(alpha)
}

/// Nominal rates and loads.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSolution {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    /// `β_k = 1 - Σ_{ℓ ∈ H(k)} γ_ℓ`
    pub beta: Vec<f64>,
}

pub fn solve_traffic(net: &ValidatedNetwork) -> Result<TrafficSolution> {
    let spec = &net.spec;
    let alpha: Vec<f64> = traffic_rates(spec).ok_or(Error::NonOpenNetwork)?.iter().copied().collect();
    let gamma: Vec<f64> = alpha.iter().zip(&spec.mean_service).map(|(a, m)| a * m).collect();
    let rho = (&net.priority.constituency * vector(&gamma)).iter().copied().collect();
    let beta = net.priority.h.iter().map(|h| 1.0 - h.iter().map(|&l| gamma[l]).sum::<f64>()).collect();
    Ok(TrafficSolution { alpha, gamma, rho, beta })
}

/// A critically loaded network together with first-order perturbations
/// `λ^{(r)} = λ - rλ*`, `m^{(r)} = m - rm*`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeavyTrafficFamily {
    pub base: ValidatedNetwork,
    pub lambda_star: Vec<f64>,
    pub m_star: Vec<f64>,
    /// `α* = (I - Pᵀ)⁻¹ λ*`
    pub alpha_star: Vec<f64>,
    /// Per-station first-order load deficit.
    pub c: Vec<f64>,
}

impl HeavyTrafficFamily {
    pub fn new(base: ValidatedNetwork, lambda_star: Vec<f64>, m_star: Vec<f64>) -> Result<Self> {
        let k = base.num_classes();
        if lambda_star.len() != k || m_star.len() != k {
            return Err(Error::BadFamily(format!("perturbation vectors must have length {k}")));
        }
        for c in 0..k {
            if base.spec.arrival_rate[c] == 0.0 && lambda_star[c] != 0.0 {
                return Err(Error::BadFamily(format!("class {c} has no external arrivals but λ* ≠ 0")));
            }
        }
        let traffic = solve_traffic(&base)?;
        if let Some((j, r)) = traffic.rho.iter().enumerate().find(|(_, r)| (**r - 1.0).abs() > 1e-10) {
            return Err(Error::BadFamily(format!("station {j} has load {r}, not 1")));
        }
        let a = DMatrix::identity(k, k) - base.spec.routing_matrix().transpose();
        let alpha_star = solve_checked(&a, &vector(&lambda_star)).ok_or(Error::NonOpenNetwork)?;
        let work: Vec<f64> = (0..k)
            .map(|i| m_star[i] * traffic.alpha[i] + base.spec.mean_service[i] * alpha_star[i])
            .collect();
        let c: Vec<f64> = (&base.priority.constituency * vector(&work)).iter().copied().collect();
        if let Some((j, v)) = c.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::BadFamily(format!("station {j} has non-positive drift {v}")));
        }
        Ok(Self { base, lambda_star, m_star, alpha_star: alpha_star.iter().copied().collect(), c })
    }

    /// Drift vector indexed by the lowest classes, `b_ℓ = c_{s(ℓ)}`.
    pub fn b(&self) -> Vec<f64> {
        self.base.priority.lowest.iter().map(|&l| self.c[self.base.spec.station_of[l]]).collect()
    }

    /// The `r`-th network of the family.
    pub fn instantiate_at(&self, r: f64) -> Result<ValidatedNetwork> {
        let mut spec = self.base.spec.clone();
        for c in 0..spec.num_classes() {
            if spec.arrival_rate[c] > 0.0 {
                spec.arrival_rate[c] -= r * self.lambda_star[c];
                if spec.arrival_rate[c] <= 0.0 {
                    return Err(Error::NegativeRate { class: c, r });
                }
            }
            spec.mean_service[c] -= r * self.m_star[c];
            if spec.mean_service[c] <= 0.0 {
                return Err(Error::NegativeRate { class: c, r });
            }
        }
        Ok(ValidatedNetwork { spec, priority: self.base.priority.clone() })
    }

    /// `ρ^{(r)} = e - rc + r² C diag(m*) α*`, exact since the load is
    /// quadratic in `r`.
    pub fn rho_at(&self, r: f64) -> Vec<f64> {
        let k = self.base.num_classes();
        let quad: Vec<f64> = (0..k).map(|i| self.m_star[i] * self.alpha_star[i]).collect();
        let cq = &self.base.priority.constituency * vector(&quad);
        (0..self.c.len()).map(|j| 1.0 - r * self.c[j] + r * r * cq[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot;

    #[test]
    fn two_station_structure() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 1.0, [DistributionModel::Exponential; 6]).unwrap();
        let p = &net.priority;
        assert_eq!(p.lowest, vec![0, 3]);
        assert_eq!(p.high, vec![1, 2, 4]);
        assert_eq!(p.highest, vec![1, 4]);
        assert_eq!(net.spec.external(), vec![0]);
        assert_eq!(p.order[0], vec![4, 2, 0]);
        assert_eq!(p.k_plus[0], Some(2));
        assert_eq!(p.k_plus[2], Some(4));
        assert_eq!(p.k_plus[4], None);
        assert_eq!(p.k_minus[4], Some(2));
        assert_eq!(p.k_minus[0], None);
        assert_eq!(p.h[0], vec![4, 2, 0]);
        assert_eq!(p.h_plus[3], vec![1]);
    }

    #[test]
    fn single_class_and_closed_routing() {
        let single = NetworkSpec {
            num_stations: 1,
            station_of: vec![0],
            priority_rank: vec![0],
            routing: vec![vec![0.0]],
            arrival_rate: vec![0.5],
            mean_service: vec![1.0],
            arrival_dist: vec![DistributionModel::Exponential],
            service_dist: vec![DistributionModel::Exponential],
        };
        let net = validate_spec(single.clone()).unwrap();
        let t = solve_traffic(&net).unwrap();
        assert_eq!(t.rho, vec![0.5]);
        let mut closed = single;
        closed.routing = vec![vec![1.0]];
        assert_eq!(validate_spec(closed), Err(Error::InvalidNetwork(vec![Violation::NonOpenNetwork])));
    }

    #[test]
    fn feedback_traffic() {
        let spec = NetworkSpec {
            num_stations: 1,
            station_of: vec![0, 0],
            priority_rank: vec![2, 1],
            routing: vec![vec![0.0, 0.5], vec![0.0, 0.0]],
            arrival_rate: vec![1.0, 0.0],
            mean_service: vec![0.2, 0.3],
            arrival_dist: vec![DistributionModel::Exponential; 2],
            service_dist: vec![DistributionModel::Exponential; 2],
        };
        let t = solve_traffic(&validate_spec(spec).unwrap()).unwrap();
        assert!((t.alpha[0] - 1.0).abs() < 1e-14 && (t.alpha[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ties_are_rejected() {
        let mut spec = pilot::network(&pilot::DEFAULT_MEANS, 1.0, [DistributionModel::Exponential; 6]).unwrap().spec;
        spec.priority_rank[2] = spec.priority_rank[0];
        match validate_spec(spec) {
            Err(Error::InvalidNetwork(v)) => assert_eq!(v, vec![Violation::NonStrictPriority { station: 0 }]),
            other => panic!("{other:?}"),
        }
    }
}
