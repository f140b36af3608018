//! Experiments that tie the modules together: heavy-traffic sweeps against
//! the SRBM, the asymptotic BAR residual, Palm tail identities and state
//! space collapse diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::analyzer::analyze;
use crate::error::{Error, Result};
use crate::network::{solve_traffic, HeavyTrafficFamily, ValidatedNetwork};
use crate::oracle::TruncatedCtmc;
use crate::sim::{
    estimate_mgf, simulate, simulate_with, CountTailObserver, EventKind, EventView, MgfObserver, MgfPoint, Observer, SimConfig, Span,
    SteadyStats,
};
use crate::srbm::{simulate_srbm_replicated, SrbmConfig, SrbmData};
use crate::stats::{replicate_mean, BatchSeries, Estimate};
use crate::transforms::DEFAULT_EPS0;

/// One line of long-format output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub experiment: String,
    pub r: f64,
    pub quantity: String,
    pub index: String,
    pub value: f64,
    pub std_error: f64,
}

fn record(experiment: &str, r: f64, quantity: &str, index: impl ToString, e: &Estimate) -> Record {
    Record { experiment: experiment.into(), r, quantity: quantity.into(), index: index.to_string(), value: e.value, std_error: e.std_error }
}

fn scale(e: &Estimate, c: f64) -> Estimate {
    Estimate { value: c * e.value, std_error: c * e.std_error, batches: e.batches }
}

/// Simulation effort as a function of `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimBudget {
    /// Target event count times `r²`; relaxation times grow like `r⁻²`.
    pub events_per_r2: f64,
    pub batches: usize,
    pub replications: usize,
    pub srbm_horizon: f64,
    pub srbm_replications: usize,
    /// SRBM step; `None` uses the data's default.
    pub srbm_step: Option<f64>,
}

impl Default for SimBudget {
    fn default() -> Self {
        Self { events_per_r2: 1e4, batches: 32, replications: 1, srbm_horizon: 2e4, srbm_replications: 1, srbm_step: None }
    }
}

/// Nominal events per unit time, `Σλ + Σα`.
pub fn event_rate(net: &ValidatedNetwork) -> Result<f64> {
    let t = solve_traffic(net)?;
    Ok(net.spec.arrival_rate.iter().sum::<f64>() + t.alpha.iter().sum::<f64>())
}

impl SimBudget {
    pub fn horizon(&self, net: &ValidatedNetwork, r: f64) -> Result<f64> {
        Ok(self.events_per_r2 / (r * r) / event_rate(net)?)
    }

    pub fn config(&self, net: &ValidatedNetwork, r: f64, seed: u64) -> Result<SimConfig> {
        Ok(SimConfig::new(self.horizon(net, r)?, seed).with_batches(self.batches))
    }
}

/// Runs replications with consecutive seeds in parallel and merges them in
/// seed order, so the result does not depend on scheduling.
pub fn run_replications(net: &ValidatedNetwork, cfg: &SimConfig, replications: usize) -> Result<SteadyStats> {
    let runs: Vec<Result<SteadyStats>> = (0..replications.max(1) as u64)
        .into_par_iter()
        .map(|i| simulate(net, &SimConfig { seed: cfg.seed.wrapping_add(i), ..cfg.clone() }))
        .collect();
    let mut it = runs.into_iter();
    let mut out = it.next().unwrap()?;
    for s in it {
        out.merge(&s?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub r: f64,
    pub horizon: f64,
    /// `rE[Z_k]` for every class.
    pub scaled_mean: Vec<Estimate>,
    /// `rE[Z_ℓ]` for the lowest classes, in their order.
    pub scaled_low: Vec<Estimate>,
    /// `rE[Σ_{k∈H} Z_k]`
    pub ssc: Estimate,
    pub beta: Vec<Estimate>,
    pub events: u64,
    pub diverging: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrbmRow {
    pub mean: Vec<Estimate>,
    pub step: f64,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub lowest: Vec<usize>,
    pub high: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub srbm: SrbmRow,
}

impl SweepReport {
    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        for row in &self.rows {
            for (k, e) in row.scaled_mean.iter().enumerate() {
                out.push(record("sweep", row.r, "r*E[Z]", k + 1, e));
            }
            out.push(record("sweep", row.r, "r*E[Z_H]", "H", &row.ssc));
            for (k, e) in row.beta.iter().enumerate() {
                out.push(record("sweep", row.r, "beta", k + 1, e));
            }
        }
        for (i, e) in self.srbm.mean.iter().enumerate() {
            out.push(record("sweep", 0.0, "srbm E[W]", self.lowest[i] + 1, e));
        }
        out
    }
}

/// Simulates the family along `r_grid` and the limiting SRBM once.
///
/// Refuses to run when any hypothesis of the limit theorem fails, naming
/// the failed checks.
pub fn run_sweep(family: &HeavyTrafficFamily, r_grid: &[f64], budget: &SimBudget, seed: u64) -> Result<SweepReport> {
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > 0.0 && r < 1.0)) || r_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(format!("r grid must be strictly decreasing in (0, 1), got {r_grid:?}")));
    }
    let analysis = analyze(family)?;
    let (r_mat, sigma, b) = analysis.srbm_data()?;
    let lowest = analysis.reflection.lowest.clone();
    let high = analysis.reflection.high.clone();

    let mut rows = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let net = family.instantiate_at(r)?;
        let cfg = budget.config(&net, r, seed)?;
        let s = run_replications(&net, &cfg, budget.replications)?;
        let k = net.num_classes();
        let scaled_mean: Vec<Estimate> = (0..k).map(|c| scale(&s.mean_count(c), r)).collect();
        let mut high_sum = vec![0.0; s.batches()];
        for &c in &high {
            high_sum.iter_mut().zip(&s.count[c]).for_each(|(a, v)| *a += v);
        }
        let ssc = scale(&s.time_average(&high_sum), r);
        rows.push(SweepRow {
            r,
            horizon: cfg.horizon,
            scaled_low: lowest.iter().map(|&c| scaled_mean[c]).collect(),
            scaled_mean,
            ssc,
            beta: (0..k).map(|c| s.idle_probability(c)).collect(),
            events: s.events,
            diverging: s.diverging,
        });
    }

    let data = SrbmData::new(r_mat, sigma, b)?;
    let mut scfg = SrbmConfig::new(&data, budget.srbm_horizon, seed);
    if let Some(h) = budget.srbm_step {
        scfg.step = h;
    }
    let st = simulate_srbm_replicated(&data, &scfg, budget.srbm_replications)?;
    let srbm = SrbmRow { mean: (0..data.dim()).map(|i| st.mean(i)).collect(), step: scfg.step, horizon: scfg.horizon };
    Ok(SweepReport { lowest, high, rows, srbm })
}

/// The constants of the asymptotic BAR at one point: the left side is
/// `q ψ + Σ_ℓ c_ℓ β_ℓ (ψ_ℓ - ψ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbarCoefficients {
    /// `Σ_E λ_k η_k + Σ_K α_k ξ_k`
    pub q: f64,
    /// `μ_{ℓ-} ξ_{ℓ-} - μ_ℓ ξ_ℓ`, the first term absent for lowest classes.
    pub c: Vec<f64>,
    /// `β_ℓ` from the traffic equations.
    pub beta: Vec<f64>,
}

impl AbarCoefficients {
    pub fn new(net: &ValidatedNetwork, point: &MgfPoint) -> Result<Self> {
        let t = solve_traffic(net)?;
        let mu = net.service_rates();
        let k = net.num_classes();
        let q = (0..k).map(|c| net.spec.arrival_rate[c] * point.eta[c] + t.alpha[c] * point.xi[c]).sum();
        let c = (0..k)
            .map(|l| {
                let below = net.priority.k_minus[l].map_or(0.0, |m| mu[m] * point.xi[m]);
                below - mu[l] * point.xi[l]
            })
            .collect();
        Ok(Self { q, c, beta: t.beta })
    }

    pub fn lhs(&self, psi: f64, psi_cond: &[f64]) -> f64 {
        self.q * psi + self.c.iter().zip(&self.beta).zip(psi_cond).map(|((c, b), p)| c * b * (p - psi)).sum::<f64>()
    }

    /// The same left side written through `E[f 1(Z_{H(ℓ)} = 0)]`, which is
    /// linear in time averages and keeps batch means valid.
    fn lhs_series(&self, psi: &BatchSeries, joint: &[BatchSeries]) -> BatchSeries {
        let a = self.q - self.c.iter().zip(&self.beta).map(|(c, b)| c * b).sum::<f64>();
        let mut out = BatchSeries::from_parts(psi.num.iter().map(|v| a * v).collect(), psi.den.clone());
        for (c, j) in self.c.iter().zip(joint) {
            out = out.combine(1.0, j, *c);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbarRow {
    pub r: f64,
    /// Index into the caller's θ list.
    pub point: usize,
    /// Left side over `r²`, averaged over seeds.
    pub scaled: Estimate,
    pub per_seed: Vec<f64>,
    /// Within-run standard errors of the per-seed values.
    pub per_seed_se: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbarBudget {
    pub events_per_r2: f64,
    pub seeds: Vec<u64>,
    pub batches: usize,
    pub eps0: f64,
}

impl Default for AbarBudget {
    fn default() -> Self {
        Self { events_per_r2: 1e5, seeds: (0..10).collect(), batches: 32, eps0: DEFAULT_EPS0 }
    }
}

/// Left side of the asymptotic BAR over `r²` at each `θ` (full K-vectors,
/// `θ_L ≤ 0`), estimated with truncated transforms at `rθ`.
pub fn abar_residual(family: &HeavyTrafficFamily, thetas: &[Vec<f64>], r_grid: &[f64], budget: &AbarBudget) -> Result<Vec<AbarRow>> {
    let lowest = &family.base.priority.lowest;
    for th in thetas {
        if th.len() != family.base.num_classes() || lowest.iter().any(|&l| th[l] > 0.0) {
            return Err(Error::InvalidArgument(format!("θ = {th:?} is not in the admissible set")));
        }
    }
    let mut rows = Vec::new();
    for &r in r_grid {
        let net = family.instantiate_at(r)?;
        let points = thetas.iter().map(|th| MgfPoint::scaled(&net, th, r, budget.eps0)).collect::<Result<Vec<_>>>()?;
        let coeffs = points.iter().map(|p| AbarCoefficients::new(&net, p)).collect::<Result<Vec<_>>>()?;
        let horizon = budget.events_per_r2 / (r * r) / event_rate(&net)?;
        let per_seed: Vec<Result<Vec<Estimate>>> = budget
            .seeds
            .par_iter()
            .map(|&seed| {
                let cfg = SimConfig::new(horizon, seed).with_batches(budget.batches);
                let mut obs = MgfObserver::new(&net, points.clone(), cfg.batches);
                let s = simulate_with(&net, &cfg, &mut [&mut obs])?;
                (0..points.len())
                    .map(|p| {
                        let e = estimate_mgf(&s, &obs, p)?;
                        let lhs = coeffs[p].lhs_series(&e.psi_series, &e.psi_joint_series).estimate().expect("positive observation time");
                        Ok(scale(&lhs, 1.0 / (r * r)))
                    })
                    .collect()
            })
            .collect();
        let per_seed = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
        for p in 0..points.len() {
            let vals: Vec<f64> = per_seed.iter().map(|v| v[p].value).collect();
            rows.push(AbarRow { r, point: p, scaled: replicate_mean(&vals), per_seed_se: per_seed.iter().map(|v| v[p].std_error).collect(), per_seed: vals });
        }
    }
    Ok(rows)
}

/// Which residual clock carries the test function `(clock ∧ c) 1(z_ℓ ≥ n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum IdentityKind {
    /// Residual service time of class `k`; the left side is
    /// `P(R_{s,k} ≤ c, Z_ℓ ≥ n, k in service)`.
    Service,
    /// Residual inter-arrival time of class `k`; the left side is
    /// `P(R_{e,k} ≤ c, Z_ℓ ≥ n)`.
    Arrival,
}

/// A tail identity between a time average and Palm expectations. With
/// `kind = Service`, `l = k` and `cutoff = ∞` it is the relation between
/// `P(Z_k ≥ n, Z_{H₊(k)} = 0)` and the completion-epoch distribution of
/// `Z_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PalmQuery {
    pub kind: IdentityKind,
    pub k: usize,
    pub l: usize,
    pub n: u32,
    pub cutoff: f64,
}

/// Accumulates both sides of a tail identity. The right side sums the jump
/// of the test function over events, with the freshly drawn clock of the
/// event's own class replaced by its truncated mean.
pub struct PalmIdentityObserver {
    query: PalmQuery,
    fresh_mean: f64,
    left: Vec<f64>,
    right: Vec<f64>,
    events: u64,
}

impl PalmIdentityObserver {
    pub fn new(net: &ValidatedNetwork, query: PalmQuery, batches: usize) -> Result<Self> {
        let k = net.num_classes();
        if query.k >= k || query.l >= k || query.n == 0 || !(query.cutoff >= 0.0) {
            return Err(Error::InvalidArgument(format!("bad identity parameters {query:?}")));
        }
        let spec = &net.spec;
        let (dist, scale) = match query.kind {
            IdentityKind::Service => (&spec.service_dist[query.k], spec.mean_service[query.k]),
            IdentityKind::Arrival => {
                if spec.arrival_rate[query.k] <= 0.0 {
                    return Err(Error::InvalidArgument(format!("class {} has no external arrivals", query.k)));
                }
                (&spec.arrival_dist[query.k], 1.0 / spec.arrival_rate[query.k])
            }
        };
        let fresh_mean = scale * dist.truncated_mean(query.cutoff / scale);
        Ok(Self { query, fresh_mean, left: vec![0.0; batches], right: vec![0.0; batches], events: 0 })
    }

    fn clock(&self, s: &crate::sim::SimState) -> f64 {
        match self.query.kind {
            IdentityKind::Service => s.rs[self.query.k],
            IdentityKind::Arrival => s.re[self.query.k],
        }
    }

    fn resets_clock(&self, ev: &EventView) -> bool {
        ev.class == self.query.k
            && match self.query.kind {
                IdentityKind::Service => ev.kind == EventKind::Completion,
                IdentityKind::Arrival => ev.kind == EventKind::Arrival,
            }
    }
}

impl Observer for PalmIdentityObserver {
    fn wants_events(&self) -> bool {
        true
    }

    fn interval(&mut self, batch: usize, span: &Span) {
        let q = &self.query;
        if span.state.z[q.l] < q.n || (q.kind == IdentityKind::Service && !span.served[q.k]) {
            return;
        }
        // the clock is at most c from offset clock - c on
        let start = span.from.max(self.clock(span.state) - q.cutoff);
        if start <= span.from {
            self.left[batch] += span.dt;
        } else if start < span.to {
            self.left[batch] += span.to - start;
        }
    }

    fn event(&mut self, batch: usize, ev: &EventView) {
        let q = &self.query;
        let before = (ev.pre.z[q.l] >= q.n) as u8 as f64;
        let after = (ev.post.z[q.l] >= q.n) as u8 as f64;
        let pre_clock = self.clock(ev.pre).min(q.cutoff);
        let jump = if self.resets_clock(ev) { self.fresh_mean * after - pre_clock * before } else { pre_clock * (after - before) };
        self.right[batch] += jump;
        if self.resets_clock(ev) {
            self.events += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PalmIdentityReport {
    pub query: PalmQuery,
    pub left: Estimate,
    pub right: Estimate,
    /// Batch means of left minus right; its standard error is the pooled one.
    pub discrepancy: Estimate,
}

impl PalmIdentityReport {
    pub fn holds(&self, k: f64, floor: f64) -> bool {
        self.discrepancy.within(0.0, k, floor)
    }
}

pub fn palm_identity_check(net: &ValidatedNetwork, queries: &[PalmQuery], cfg: &SimConfig) -> Result<Vec<PalmIdentityReport>> {
    let mut observers = queries.iter().map(|q| PalmIdentityObserver::new(net, *q, cfg.batches)).collect::<Result<Vec<_>>>()?;
    let stats = {
        let mut refs: Vec<&mut dyn Observer> = observers.iter_mut().map(|o| o as &mut dyn Observer).collect();
        simulate_with(net, cfg, &mut refs)?
    };
    observers
        .iter()
        .map(|o| {
            if o.events == 0 {
                return Err(Error::NoEvents(format!("{:?} events of class {}", o.query.kind, o.query.k)));
            }
            let left = stats.time_average(&o.left);
            let right = stats.time_average(&o.right);
            let diff: Vec<f64> = o.left.iter().zip(&o.right).map(|(a, b)| a - b).collect();
            Ok(PalmIdentityReport { query: o.query, left, right, discrepancy: stats.time_average(&diff) })
        })
        .collect()
}

/// Exact left side from a solved chain, for `cutoff = ∞`.
pub fn palm_identity_left_exact(ctmc: &TruncatedCtmc, pi: &[f64], net: &ValidatedNetwork, q: &PalmQuery) -> Result<f64> {
    if q.cutoff.is_finite() {
        return Err(Error::InvalidArgument("the chain carries no clocks; only cutoff = ∞ is available".into()));
    }
    let h_plus = &net.priority.h_plus[q.k];
    Ok(ctmc.expect(pi, |z| {
        let served = z[q.k] > 0 && h_plus.iter().all(|&h| z[h] == 0);
        let counted = z[q.l] >= q.n && (q.kind == IdentityKind::Arrival || served);
        counted as u8 as f64
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SscReport {
    pub r: f64,
    pub mean: Vec<Estimate>,
    pub scaled: Vec<Estimate>,
    /// `rE[Σ_{k∈H} Z_k]`
    pub high_scaled: Estimate,
    pub levels: Vec<f64>,
    /// `E[Z_k 1(Z_k > a)]`, indexed `[k][level]`.
    pub tail: Vec<Vec<Estimate>>,
}

impl SscReport {
    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        for (k, e) in self.mean.iter().enumerate() {
            out.push(record("ssc", self.r, "E[Z]", k + 1, e));
            out.push(record("ssc", self.r, "r*E[Z]", k + 1, &self.scaled[k]));
            for (a, t) in self.levels.iter().zip(&self.tail[k]) {
                out.push(record("ssc", self.r, &format!("E[Z 1(Z > {a})]"), k + 1, t));
            }
        }
        out.push(record("ssc", self.r, "r*E[Z_H]", "H", &self.high_scaled));
        out
    }
}

/// Means, scaled means and tail proxies `E[Z_k 1(Z_k > a)]` of the network
/// at scale `r`.
pub fn ssc_diagnostics(net: &ValidatedNetwork, r: f64, cfg: &SimConfig, levels: Vec<f64>) -> Result<SscReport> {
    let k = net.num_classes();
    let mut tails = CountTailObserver::new(k, levels.clone(), cfg.batches);
    let s = simulate_with(net, cfg, &mut [&mut tails])?;
    let mean: Vec<Estimate> = (0..k).map(|c| s.mean_count(c)).collect();
    let mut high_sum = vec![0.0; s.batches()];
    for &c in &net.priority.high {
        high_sum.iter_mut().zip(&s.count[c]).for_each(|(a, v)| *a += v);
    }
    Ok(SscReport {
        r,
        scaled: mean.iter().map(|e| scale(e, r)).collect(),
        mean,
        high_scaled: scale(&s.time_average(&high_sum), r),
        tail: (0..k).map(|c| tails.tail(&s, c)).collect(),
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionModel;
    use crate::oracle;
    use crate::pilot;

    #[test]
    fn zero_theta_has_zero_abar() {
        let fam = pilot::family(&pilot::DEFAULT_MEANS, [DistributionModel::Exponential; 6]).unwrap();
        let net = fam.instantiate_at(0.2).unwrap();
        let pt = MgfPoint::scaled(&net, &[0.0; 5], 0.2, 0.4).unwrap();
        let c = AbarCoefficients::new(&net, &pt).unwrap();
        assert_eq!(c.lhs(0.7, &[0.1, 0.2, 0.3, 0.4, 0.5]), 0.0);
        let rows = abar_residual(&fam, &[vec![0.0; 5]], &[0.2], &AbarBudget { events_per_r2: 400.0, seeds: vec![1, 2], ..Default::default() }).unwrap();
        assert_eq!(rows[0].scaled.value, 0.0);
    }

    #[test]
    fn exponential_bar_holds_exactly_with_oracle_transforms() {
        // memoryless clocks are independent of Z in steady state, so ψ is φ
        // times Π 1/(1 + η) Π 1/(1 + ξ), and the untruncated BAR is exact
        let net = pilot::priority_pair([0.4, 0.3], [1.0, 1.0]).unwrap();
        let (ctmc, st, _) = oracle::solve(&net, 120).unwrap();
        for th in [[-0.3, -0.5], [-0.1, -0.05], [0.2, -0.4]] {
            let pt = MgfPoint::new(&net, &th, 0.0, 0.0).unwrap();
            let m = ctmc.mgf(&st.pi, &th, &net.priority.high, f64::INFINITY);
            let factor: f64 = (0..2).map(|k| 1.0 / ((1.0 + pt.eta[k]) * (1.0 + pt.xi[k]))).product();
            let psi = m.phi * factor;
            let psi_cond: Vec<f64> = m.phi_cond.iter().map(|v| v * factor).collect();
            let lhs = AbarCoefficients::new(&net, &pt).unwrap().lhs(psi, &psi_cond);
            assert!(lhs.abs() < 1e-8, "θ = {th:?}: {lhs}");
        }
    }

    #[test]
    fn mm1_identity_at_n1_by_hand() {
        // P(Z ≥ 1) = ρ: completions see Z₋ ≥ 2 w.p. ρ, arrivals add ρ(1-ρ)
        let net = pilot::single_station(0.5, 1.0, DistributionModel::Exponential, DistributionModel::Exponential).unwrap();
        let q = PalmQuery { kind: IdentityKind::Service, k: 0, l: 0, n: 1, cutoff: f64::INFINITY };
        let rep = &palm_identity_check(&net, &[q], &SimConfig::new(2e5, 4)).unwrap()[0];
        assert!(rep.left.within(0.5, 3.0, 0.0), "{rep:?}");
        assert!(rep.holds(3.0, 0.0), "{rep:?}");
    }

    #[test]
    fn identities_hold_off_the_diagonal() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.7, [DistributionModel::Exponential; 6]).unwrap();
        let qs = [
            PalmQuery { kind: IdentityKind::Service, k: 3, l: 0, n: 2, cutoff: 0.3 },
            PalmQuery { kind: IdentityKind::Service, k: 1, l: 1, n: 1, cutoff: 0.4 },
            PalmQuery { kind: IdentityKind::Arrival, k: 0, l: 0, n: 1, cutoff: 1.0 },
            PalmQuery { kind: IdentityKind::Arrival, k: 0, l: 3, n: 2, cutoff: f64::INFINITY },
        ];
        for rep in palm_identity_check(&net, &qs, &SimConfig::new(1e6, 6)).unwrap() {
            assert!(rep.holds(3.0, 0.0), "{rep:?}");
            assert!(rep.left.value > 0.01);
        }
    }

    #[test]
    fn identity_beyond_observed_counts_is_empty() {
        let net = pilot::single_station(0.3, 1.0, DistributionModel::Exponential, DistributionModel::Exponential).unwrap();
        let q = PalmQuery { kind: IdentityKind::Service, k: 0, l: 0, n: 1000, cutoff: f64::INFINITY };
        let rep = &palm_identity_check(&net, &[q], &SimConfig::new(1e4, 1)).unwrap()[0];
        assert_eq!((rep.left.value, rep.right.value), (0.0, 0.0));
        let none = pilot::network(&pilot::DEFAULT_MEANS, 0.7, [DistributionModel::Exponential; 6]).unwrap();
        let q = PalmQuery { kind: IdentityKind::Arrival, k: 2, l: 2, n: 1, cutoff: 1.0 };
        assert!(palm_identity_check(&none, &[q], &SimConfig::new(1e3, 1)).is_err());
    }

    #[test]
    fn sweep_refuses_failed_hypotheses() {
        // m₅ = m₄ makes A_H singular
        let m = [0.3, 0.5, 0.2, 0.5, 0.5];
        let base = pilot::network(&m, 1.0, [DistributionModel::Exponential; 6]).unwrap();
        let fam = HeavyTrafficFamily::new(base, vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0; 5]).unwrap();
        match run_sweep(&fam, &[0.2], &SimBudget::default(), 1) {
            Err(Error::AnalysisFailed(msg)) => assert!(msg.contains("A_H"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let fam = pilot::mm1_family().unwrap();
        assert!(run_sweep(&fam, &[0.1, 0.2], &SimBudget::default(), 1).is_err());
    }

    #[test]
    fn sweep_is_deterministic() {
        let fam = pilot::mm1_family().unwrap();
        let budget = SimBudget { events_per_r2: 200.0, srbm_horizon: 50.0, ..Default::default() };
        let a = run_sweep(&fam, &[0.3, 0.2], &budget, 5).unwrap();
        let b = run_sweep(&fam, &[0.3, 0.2], &budget, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records(), b.records());
    }

    #[test]
    fn ssc_tail_proxy_vanishes_far_out() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.8, [DistributionModel::Exponential; 6]).unwrap();
        let rep = ssc_diagnostics(&net, 0.2, &SimConfig::new(2e4, 3), vec![0.0, 5.0, 1e6]).unwrap();
        for k in 0..5 {
            assert!((rep.tail[k][0].value - rep.mean[k].value).abs() < 1e-9);
            assert_eq!(rep.tail[k][2].value, 0.0);
            assert!(rep.tail[k][1].value <= rep.tail[k][0].value);
        }
    }
}
