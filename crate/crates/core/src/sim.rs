//! Event-driven simulation of the piecewise-deterministic process
//! `X = (Z, R_e, R_s)` under preemptive-resume static buffer priority.
//!
//! Between events every arrival clock and the residual service clock of
//! each class in service decrease at unit rate. Clocks that reach zero
//! together (within `TIE_TOL`) form one event block: arrivals fire first,
//! then completions, each group in class order, and every event sees the
//! intermediate state left by the previous one.
//!
//! Statistics are time-batched over `(warmup, horizon]` so that every
//! estimator carries a batch-means standard error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::Sampler;
use crate::error::{Error, Result};
use crate::network::{solve_traffic, ValidatedNetwork};
use crate::stats::{BatchSeries, Estimate};
use crate::transforms::{solve_eta, solve_xi};

/// Clocks within this absolute distance of the block's first clock fire
/// together.
pub const TIE_TOL: f64 = 1e-10;

/// Snapshot of `(Z, R_e, R_s)`. `re[k]` is infinite for classes without
/// external arrivals; `rs[k]` of an idle class is the requirement of its
/// next job.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub z: Vec<u32>,
    pub re: Vec<f64>,
    pub rs: Vec<f64>,
}

impl SimState {
    pub fn total(&self) -> u64 {
        self.z.iter().map(|&v| v as u64).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrival,
    Completion,
}

/// A single event as seen by observers; states are borrowed.
#[derive(Clone, Copy, Debug)]
pub struct EventView<'a> {
    pub kind: EventKind,
    pub class: usize,
    pub time: f64,
    pub pre: &'a SimState,
    pub post: &'a SimState,
    /// Destination of a completion; `None` for exit and for arrivals.
    pub routed_to: Option<usize>,
}

impl EventView<'_> {
    pub fn to_record(&self) -> EventRecord {
        EventRecord {
            kind: self.kind,
            class: self.class,
            time: self.time,
            pre: self.pre.clone(),
            post: self.post.clone(),
            routed_to: self.routed_to,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub kind: EventKind,
    pub class: usize,
    pub time: f64,
    pub pre: SimState,
    pub post: SimState,
    pub routed_to: Option<usize>,
}

/// A stretch of time without events, inside one batch.
///
/// Clocks in `state` are those at the start of the surrounding inter-event
/// interval; at offset `τ ∈ [from, to]` the running clocks equal
/// `clock - τ`. `dt` is the length used by the built-in accumulators.
#[derive(Clone, Copy, Debug)]
pub struct Span<'a> {
    pub state: &'a SimState,
    pub served: &'a [bool],
    /// `Z_{H(k)} = 0`
    pub idle: &'a [bool],
    pub from: f64,
    pub to: f64,
    pub dt: f64,
}

/// Hook for statistics beyond the built-in ones.
pub trait Observer {
    fn interval(&mut self, _batch: usize, _span: &Span) {}
    fn event(&mut self, _batch: usize, _ev: &EventView) {}
    /// Whether `event` should be called; building views costs a state copy.
    fn wants_events(&self) -> bool {
        false
    }
}

/// Processing order inside an event block. `Reversed` runs completions
/// before arrivals and higher class indices first; it exists to check that
/// the post-block state does not depend on the order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BlockOrder {
    #[default]
    Canonical,
    Reversed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub warmup: f64,
    pub batches: usize,
    pub seed: u64,
    /// Largest count whose marginal probability is tracked.
    pub max_count: usize,
    /// Number of post-warmup events kept in `SteadyStats::log`.
    pub log_limit: usize,
    pub block_order: BlockOrder,
}

impl SimConfig {
    /// Warmup 10% of the horizon, 32 batches.
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self { horizon, warmup: 0.1 * horizon, batches: 32, seed, max_count: 16, log_limit: 0, block_order: BlockOrder::Canonical }
    }

    pub fn with_warmup(mut self, warmup: f64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_batches(mut self, batches: usize) -> Self {
        self.batches = batches;
        self
    }

    pub fn with_log(mut self, limit: usize) -> Self {
        self.log_limit = limit;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.warmup >= 0.0 && self.horizon > self.warmup) {
            return Err(Error::InvalidArgument(format!("need horizon > warmup >= 0, got {} and {}", self.horizon, self.warmup)));
        }
        if self.batches == 0 {
            return Err(Error::InvalidArgument("at least one batch is required".into()));
        }
        Ok(())
    }
}

/// Built-in time averages and event counts, all per batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SteadyStats {
    pub num_classes: usize,
    pub length: Vec<f64>,
    /// `∫ 1(Z_{H(k)} = 0)`, indexed `[k][batch]`.
    pub idle: Vec<Vec<f64>>,
    /// `∫ 1(k in service)`
    pub busy: Vec<Vec<f64>>,
    /// `∫ Z_k`
    pub count: Vec<Vec<f64>>,
    /// `∫ 1(Z_k = z)` for `z <= max_count`, indexed `[k][z][batch]`.
    pub marginal: Vec<Vec<Vec<f64>>>,
    /// `∫ Σ_k Z_k`
    pub total: Vec<f64>,
    pub arrivals: Vec<Vec<f64>>,
    pub completions: Vec<Vec<f64>>,
    /// `routing[k][ℓ]` completions of `k` routed to `ℓ`; column `K` is exit.
    pub routing: Vec<Vec<u64>>,
    pub events: u64,
    pub log: Vec<EventRecord>,
    pub diverging: bool,
    pub final_state: SimState,
}

impl SteadyStats {
    fn new(k: usize, b: usize, max_count: usize, final_state: SimState) -> Self {
        let z = || vec![vec![0.0; b]; k];
        Self {
            num_classes: k,
            length: vec![0.0; b],
            idle: z(),
            busy: z(),
            count: z(),
            marginal: vec![vec![vec![0.0; b]; max_count + 1]; k],
            total: vec![0.0; b],
            arrivals: z(),
            completions: z(),
            routing: vec![vec![0; k + 1]; k],
            events: 0,
            log: Vec::new(),
            diverging: false,
            final_state,
        }
    }

    pub fn batches(&self) -> usize {
        self.length.len()
    }

    pub fn observed_time(&self) -> f64 {
        self.length.iter().sum()
    }

    /// Time average of a per-batch integral.
    pub fn time_average(&self, integral: &[f64]) -> Estimate {
        BatchSeries::from_parts(integral.to_vec(), self.length.clone()).estimate().expect("positive observation time")
    }

    /// `P(Z_{H(k)} = 0)`
    pub fn idle_probability(&self, k: usize) -> Estimate {
        self.time_average(&self.idle[k])
    }

    pub fn busy_fraction(&self, k: usize) -> Estimate {
        self.time_average(&self.busy[k])
    }

    pub fn mean_count(&self, k: usize) -> Estimate {
        self.time_average(&self.count[k])
    }

    pub fn mean_total(&self) -> Estimate {
        self.time_average(&self.total)
    }

    /// `P(Z_k = z)`; `None` beyond the tracked range.
    pub fn marginal_probability(&self, k: usize, z: usize) -> Option<Estimate> {
        self.marginal[k].get(z).map(|v| self.time_average(v))
    }

    /// Empirical routing distribution of class `k` completions, exit last.
    pub fn routing_fractions(&self, k: usize) -> Vec<f64> {
        let n: u64 = self.routing[k].iter().sum();
        self.routing[k].iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect()
    }

    /// Appends the batches of `other` (same network, same tracked range).
    pub fn merge(&mut self, other: &SteadyStats) {
        assert_eq!(self.num_classes, other.num_classes);
        let cat = |a: &mut Vec<Vec<f64>>, b: &Vec<Vec<f64>>| a.iter_mut().zip(b).for_each(|(x, y)| x.extend_from_slice(y));
        self.length.extend_from_slice(&other.length);
        cat(&mut self.idle, &other.idle);
        cat(&mut self.busy, &other.busy);
        cat(&mut self.count, &other.count);
        for (a, b) in self.marginal.iter_mut().zip(&other.marginal) {
            cat(a, b);
        }
        self.total.extend_from_slice(&other.total);
        cat(&mut self.arrivals, &other.arrivals);
        cat(&mut self.completions, &other.completions);
        for (a, b) in self.routing.iter_mut().zip(&other.routing) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.events += other.events;
        self.log.extend(other.log.iter().cloned());
        self.diverging |= other.diverging;
    }
}

/// Event rates `N_{e,k}/T` and `N_{s,k}/T`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimates {
    pub arrival: Vec<Estimate>,
    pub completion: Vec<Estimate>,
}

pub fn estimate_rates(stats: &SteadyStats) -> RateEstimates {
    if stats.events < 10_000 {
        log::warn!("only {} post-warmup events; rate estimates are unreliable", stats.events);
    }
    RateEstimates {
        arrival: stats.arrivals.iter().map(|a| stats.time_average(a)).collect(),
        completion: stats.completions.iter().map(|c| stats.time_average(c)).collect(),
    }
}

struct Engine<'n> {
    net: &'n ValidatedNetwork,
    arrival: Vec<Option<(Sampler, f64, ChaCha8Rng)>>,
    service: Vec<(Sampler, f64, ChaCha8Rng)>,
    route: Vec<(Vec<f64>, ChaCha8Rng)>,
    state: SimState,
    served: Vec<bool>,
    idle: Vec<bool>,
}

/// Independent stream for primitive sequence `slot` of class `k`: slot 0
/// inter-arrival times, 1 service requirements, 2 routing decisions.
fn stream(seed: u64, k: usize, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3 * k as u64 + slot);
    rng
}

impl<'n> Engine<'n> {
    fn new(net: &'n ValidatedNetwork, seed: u64) -> Self {
        let spec = &net.spec;
        let k = spec.num_classes();
        let arrival = (0..k)
            .map(|c| (spec.arrival_rate[c] > 0.0).then(|| (spec.arrival_dist[c].sampler(), 1.0 / spec.arrival_rate[c], stream(seed, c, 0))))
            .collect();
        let service = (0..k).map(|c| (spec.service_dist[c].sampler(), spec.mean_service[c], stream(seed, c, 1))).collect();
        let route = (0..k)
            .map(|c| {
                let cum = spec.routing[c].iter().scan(0.0, |s, p| {
                    *s += p;
                    Some(*s)
                });
                (cum.collect(), stream(seed, c, 2))
            })
            .collect();
        let state = SimState { z: vec![0; k], re: vec![f64::INFINITY; k], rs: vec![0.0; k] };
        let mut e = Self { net, arrival, service, route, state, served: vec![false; k], idle: vec![true; k] };
        for c in 0..k {
            e.state.re[c] = e.fresh_arrival(c);
            e.state.rs[c] = e.fresh_service(c);
        }
        e.refresh();
        e
    }

    fn fresh_arrival(&mut self, k: usize) -> f64 {
        match &mut self.arrival[k] {
            Some((s, mean, rng)) => *mean * s.sample(rng),
            None => f64::INFINITY,
        }
    }

    fn fresh_service(&mut self, k: usize) -> f64 {
        let (s, mean, rng) = &mut self.service[k];
        *mean * s.sample(rng)
    }

    fn draw_route(&mut self, k: usize) -> Option<usize> {
        let (cum, rng) = &mut self.route[k];
        let u: f64 = rng.random();
        cum.iter().position(|&c| u < c)
    }

    /// Recomputes the served classes and the idle indicators.
    fn refresh(&mut self) {
        for order in &self.net.priority.order {
            let mut clear = true;
            for &c in order {
                self.served[c] = clear && self.state.z[c] > 0;
                if self.state.z[c] > 0 {
                    clear = false;
                }
                self.idle[c] = clear;
            }
        }
    }
}

/// Splits time into batches and feeds the accumulators.
struct Recorder<'o, 'p> {
    warmup: f64,
    batch_len: f64,
    batches: usize,
    max_count: usize,
    log_limit: usize,
    stats: SteadyStats,
    observers: &'o mut [&'p mut dyn Observer],
    wants_events: bool,
}

impl Recorder<'_, '_> {
    fn batch_at(&self, t: f64) -> usize {
        let mut b = (((t - self.warmup) / self.batch_len).floor().max(0.0) as usize).min(self.batches - 1);
        while b + 1 < self.batches && self.warmup + (b + 1) as f64 * self.batch_len <= t {
            b += 1;
        }
        b
    }

    /// Integrates over `(t0, t1]` with the state fixed at its value after
    /// the event at `t0`.
    fn interval(&mut self, t0: f64, t1: f64, state: &SimState, served: &[bool], idle: &[bool]) {
        let mut s = t0.max(self.warmup);
        while s < t1 {
            let b = self.batch_at(s);
            let end = if b + 1 == self.batches { t1 } else { t1.min(self.warmup + (b + 1) as f64 * self.batch_len) };
            let dt = end - s;
            let st = &mut self.stats;
            st.length[b] += dt;
            let mut tot = 0u64;
            for k in 0..st.num_classes {
                let z = state.z[k];
                if idle[k] {
                    st.idle[k][b] += dt;
                }
                if served[k] {
                    st.busy[k][b] += dt;
                }
                if z > 0 {
                    st.count[k][b] += z as f64 * dt;
                    tot += z as u64;
                }
                if (z as usize) <= self.max_count {
                    st.marginal[k][z as usize][b] += dt;
                }
            }
            st.total[b] += tot as f64 * dt;
            if !self.observers.is_empty() {
                let span = Span { state, served, idle, from: s - t0, to: end - t0, dt };
                for o in self.observers.iter_mut() {
                    o.interval(b, &span);
                }
            }
            s = end;
        }
    }

    fn needs_views(&self) -> bool {
        self.wants_events || self.stats.log.len() < self.log_limit
    }

    fn event(&mut self, batch: usize, ev: &EventView) {
        let st = &mut self.stats;
        st.events += 1;
        match ev.kind {
            EventKind::Arrival => st.arrivals[ev.class][batch] += 1.0,
            EventKind::Completion => {
                st.completions[ev.class][batch] += 1.0;
                st.routing[ev.class][ev.routed_to.unwrap_or(st.num_classes)] += 1;
            }
        }
        if st.log.len() < self.log_limit {
            st.log.push(ev.to_record());
        }
        if self.wants_events {
            for o in self.observers.iter_mut() {
                if o.wants_events() {
                    o.event(batch, ev);
                }
            }
        }
    }
}

pub fn simulate(net: &ValidatedNetwork, cfg: &SimConfig) -> Result<SteadyStats> {
    simulate_with(net, cfg, &mut [])
}

/// Runs one replication, feeding `observers` alongside the built-in
/// statistics. Deterministic given `(net, cfg)`.
pub fn simulate_with(net: &ValidatedNetwork, cfg: &SimConfig, observers: &mut [&mut dyn Observer]) -> Result<SteadyStats> {
    cfg.validate()?;
    let k = net.num_classes();
    let mut eng = Engine::new(net, cfg.seed);
    let wants_events = observers.iter().any(|o| o.wants_events());
    let mut rec = Recorder {
        warmup: cfg.warmup,
        batch_len: (cfg.horizon - cfg.warmup) / cfg.batches as f64,
        batches: cfg.batches,
        max_count: cfg.max_count,
        log_limit: cfg.log_limit,
        stats: SteadyStats::new(k, cfg.batches, cfg.max_count, eng.state.clone()),
        observers,
        wants_events,
    };
    let mut pre = eng.state.clone();
    let mut fired_arr = Vec::with_capacity(k);
    let mut fired_cmp = Vec::with_capacity(k);
    let mut t = 0.0;
    loop {
        let mut dt = f64::INFINITY;
        for c in 0..k {
            dt = dt.min(eng.state.re[c]);
            if eng.served[c] {
                dt = dt.min(eng.state.rs[c]);
            }
        }
        if !(t + dt <= cfg.horizon) {
            rec.interval(t, cfg.horizon, &eng.state, &eng.served, &eng.idle);
            break;
        }
        rec.interval(t, t + dt, &eng.state, &eng.served, &eng.idle);
        t += dt;

        fired_arr.clear();
        fired_cmp.clear();
        for c in 0..k {
            if eng.state.re[c].is_finite() {
                eng.state.re[c] -= dt;
                if eng.state.re[c] <= TIE_TOL {
                    eng.state.re[c] = 0.0;
                    fired_arr.push(c);
                }
            }
            if eng.served[c] {
                eng.state.rs[c] -= dt;
                if eng.state.rs[c] <= TIE_TOL {
                    eng.state.rs[c] = 0.0;
                    fired_cmp.push(c);
                }
            }
        }

        let counted = t > cfg.warmup;
        let batch = if counted { rec.batch_at(t) } else { 0 };
        let mut block: Vec<(EventKind, usize)> = fired_arr
            .iter()
            .map(|&c| (EventKind::Arrival, c))
            .chain(fired_cmp.iter().map(|&c| (EventKind::Completion, c)))
            .collect();
        if cfg.block_order == BlockOrder::Reversed {
            block.reverse();
        }
        for (kind, c) in block {
            let views = counted && rec.needs_views();
            if views {
                pre.clone_from(&eng.state);
            }
            let routed_to = match kind {
                EventKind::Arrival => {
                    eng.state.z[c] += 1;
                    eng.state.re[c] = eng.fresh_arrival(c);
                    None
                }
                EventKind::Completion => {
                    eng.state.z[c] -= 1;
                    let dest = eng.draw_route(c);
                    if let Some(l) = dest {
                        eng.state.z[l] += 1;
                    }
                    eng.state.rs[c] = eng.fresh_service(c);
                    dest
                }
            };
            if counted {
                // without views `pre` is stale, but then only counts are taken
                let view = EventView { kind, class: c, time: t, pre: &pre, post: &eng.state, routed_to };
                rec.event(batch, &view);
            }
        }
        eng.refresh();
    }

    let mut stats = rec.stats;
    stats.final_state = eng.state;
    let b = stats.batches();
    if b > 1 && stats.total[0] > 0.0 {
        let first = stats.total[0] / stats.length[0];
        let last = stats.total[b - 1] / stats.length[b - 1];
        if last > 10.0 * first {
            log::warn!("mean job count grew from {first:.3} in the first batch to {last:.3} in the last; the network looks unstable");
            stats.diverging = true;
        }
    }
    Ok(stats)
}

/// Runs `replications` independent copies (seeds `seed, seed + 1, …`) and
/// merges their batches.
pub fn replicate(net: &ValidatedNetwork, cfg: &SimConfig, replications: usize) -> Result<SteadyStats> {
    let mut out: Option<SteadyStats> = None;
    for i in 0..replications.max(1) {
        let c = SimConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() };
        let s = simulate(net, &c)?;
        match &mut out {
            None => out = Some(s),
            Some(o) => o.merge(&s),
        }
    }
    Ok(out.expect("at least one replication"))
}

/// One evaluation point of the truncated exponential test functions
/// `g_{θ,s}(z) = exp(⟨θ_L, z_L⟩ + ⟨θ_H, z_H ∧ 1/s⟩)` and
/// `f = g · exp(-⟨η, λu ∧ 1/t⟩ - ⟨ξ, μv ∧ 1/t⟩)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MgfPoint {
    pub theta: Vec<f64>,
    /// `1/s`, infinite for no truncation of `z_H`.
    pub z_cap: f64,
    /// `1/t`, infinite for no truncation of the clocks.
    pub clock_cap: f64,
    /// `η_k(θ_k, t)`, zero for classes without arrivals.
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

impl MgfPoint {
    /// `s = 0` or `t = 0` switch the corresponding truncation off.
    pub fn new(net: &ValidatedNetwork, theta: &[f64], s: f64, t: f64) -> Result<Self> {
        let spec = &net.spec;
        let k = spec.num_classes();
        if theta.len() != k {
            return Err(Error::InvalidArgument(format!("θ has length {}, expected {k}", theta.len())));
        }
        let mut eta = vec![0.0; k];
        let mut xi = vec![0.0; k];
        for c in 0..k {
            if spec.arrival_rate[c] > 0.0 {
                eta[c] = solve_eta(&spec.arrival_dist[c], theta[c], t)?;
            }
            xi[c] = solve_xi(&spec.service_dist[c], &spec.routing[c], theta, c, t)?;
        }
        let cap = |x: f64| if x == 0.0 { f64::INFINITY } else { 1.0 / x };
        Ok(Self { theta: theta.to_vec(), z_cap: cap(s), clock_cap: cap(t), eta, xi })
    }

    /// The point `rθ` with `s = r` and `t = r^{1-ε₀}`.
    pub fn scaled(net: &ValidatedNetwork, theta: &[f64], r: f64, eps0: f64) -> Result<Self> {
        let th: Vec<f64> = theta.iter().map(|v| r * v).collect();
        Self::new(net, &th, r, r.powf(1.0 - eps0))
    }

    /// `g` only: transforms zero, so `ψ = φ`.
    pub fn count_only(theta: &[f64], s: f64) -> Self {
        let k = theta.len();
        let z_cap = if s == 0.0 { f64::INFINITY } else { 1.0 / s };
        Self { theta: theta.to_vec(), z_cap, clock_cap: f64::INFINITY, eta: vec![0.0; k], xi: vec![0.0; k] }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct MgfAcc {
    phi: Vec<f64>,
    psi: Vec<f64>,
    phi_idle: Vec<Vec<f64>>,
    psi_idle: Vec<Vec<f64>>,
}

/// Accumulates `∫g`, `∫f` and their restrictions to `{Z_{H(k)} = 0}`.
pub struct MgfObserver {
    points: Vec<MgfPoint>,
    high: Vec<bool>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    acc: Vec<MgfAcc>,
    kinks: Vec<f64>,
}

impl MgfObserver {
    pub fn new(net: &ValidatedNetwork, points: Vec<MgfPoint>, batches: usize) -> Self {
        let k = net.num_classes();
        let mut high = vec![false; k];
        for &c in &net.priority.high {
            high[c] = true;
        }
        let acc = points
            .iter()
            .map(|_| MgfAcc { phi: vec![0.0; batches], psi: vec![0.0; batches], phi_idle: vec![vec![0.0; batches]; k], psi_idle: vec![vec![0.0; batches]; k] })
            .collect();
        Self { points, high, lambda: net.spec.arrival_rate.clone(), mu: net.service_rates(), acc, kinks: Vec::new() }
    }

    pub fn points(&self) -> &[MgfPoint] {
        &self.points
    }

    /// Appends the batches of a replication observed with the same points,
    /// matching [`SteadyStats::merge`].
    pub fn merge(&mut self, other: &MgfObserver) {
        assert_eq!(self.points, other.points);
        let cat = |a: &mut Vec<Vec<f64>>, b: &Vec<Vec<f64>>| a.iter_mut().zip(b).for_each(|(x, y)| x.extend_from_slice(y));
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            a.phi.extend_from_slice(&b.phi);
            a.psi.extend_from_slice(&b.psi);
            cat(&mut a.phi_idle, &b.phi_idle);
            cat(&mut a.psi_idle, &b.psi_idle);
        }
    }

    /// `∫ exp(clock part of log f)` over the span.
    fn clock_integral(&mut self, p: usize, span: &Span) -> f64 {
        let pt = &self.points[p];
        let st = span.state;
        let cap = pt.clock_cap;
        // (coefficient, rate, clock at offset 0, running)
        let term = |c: usize, arrival: bool| -> (f64, f64, f64, bool) {
            if arrival {
                (pt.eta[c], self.lambda[c], st.re[c], true)
            } else {
                (pt.xi[c], self.mu[c], st.rs[c], span.served[c])
            }
        };
        let k = st.z.len();
        self.kinks.clear();
        if cap.is_finite() {
            for c in 0..k {
                for arrival in [true, false] {
                    let (coef, rate, clock, running) = term(c, arrival);
                    if coef != 0.0 && running && clock.is_finite() {
                        let kink = clock - cap / rate;
                        if kink > span.from && kink < span.to {
                            self.kinks.push(kink);
                        }
                    }
                }
            }
        }
        let pieces = self.kinks.len() + 1;
        if pieces > 1 {
            self.kinks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        let mut total = 0.0;
        let mut a = span.from;
        for i in 0..pieces {
            let (b, width) = if pieces == 1 { (span.to, span.dt) } else if i + 1 < pieces { (self.kinks[i], self.kinks[i] - a) } else { (span.to, span.to - a) };
            let mid = 0.5 * (a + b);
            let mut expo = 0.0;
            let mut slope = 0.0;
            for c in 0..k {
                for arrival in [true, false] {
                    let (coef, rate, clock, running) = term(c, arrival);
                    if coef == 0.0 || !clock.is_finite() {
                        continue;
                    }
                    if !running {
                        expo -= coef * (rate * clock).min(cap);
                    } else if rate * (clock - mid) >= cap {
                        expo -= coef * cap;
                    } else {
                        expo -= coef * rate * (clock - a);
                        slope += coef * rate;
                    }
                }
            }
            let x = slope * width;
            let growth = if x == 0.0 { 1.0 } else { x.exp_m1() / x };
            total += expo.exp() * width * growth;
            a = b;
        }
        total
    }
}

impl Observer for MgfObserver {
    fn interval(&mut self, batch: usize, span: &Span) {
        for p in 0..self.points.len() {
            let pt = &self.points[p];
            let mut lg = 0.0;
            for (c, &z) in span.state.z.iter().enumerate() {
                if z > 0 {
                    let zv = if self.high[c] { (z as f64).min(pt.z_cap) } else { z as f64 };
                    lg += pt.theta[c] * zv;
                }
            }
            let g = lg.exp();
            let gi = g * span.dt;
            let fi = g * self.clock_integral(p, span);
            let acc = &mut self.acc[p];
            acc.phi[batch] += gi;
            acc.psi[batch] += fi;
            for (c, &idle) in span.idle.iter().enumerate() {
                if idle {
                    acc.phi_idle[c][batch] += gi;
                    acc.psi_idle[c][batch] += fi;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MgfEstimate {
    pub phi: Estimate,
    pub psi: Estimate,
    /// `E[g | Z_{H(k)} = 0]`
    pub phi_cond: Vec<Estimate>,
    pub psi_cond: Vec<Estimate>,
    /// `E[f 1(Z_{H(k)} = 0)]`
    pub psi_joint: Vec<Estimate>,
    /// Empirical `P(Z_{H(k)} = 0)`.
    pub idle: Vec<Estimate>,
    /// Per-batch series behind `psi` and `psi_joint`, for estimators built
    /// from several of them.
    pub psi_series: BatchSeries,
    pub psi_joint_series: Vec<BatchSeries>,
}

/// Estimates for point `index` of `obs`, which must have observed the run
/// that produced `stats`.
pub fn estimate_mgf(stats: &SteadyStats, obs: &MgfObserver, index: usize) -> Result<MgfEstimate> {
    let acc = obs.acc.get(index).ok_or(Error::UnknownPoint)?;
    let k = stats.num_classes;
    let series = |num: &[f64], den: &[f64]| BatchSeries::from_parts(num.to_vec(), den.to_vec());
    let mut phi_cond = Vec::with_capacity(k);
    let mut psi_cond = Vec::with_capacity(k);
    for c in 0..k {
        let empty = Error::ConditioningEventEmpty { class: c };
        phi_cond.push(series(&acc.phi_idle[c], &stats.idle[c]).estimate().ok_or(empty.clone())?);
        psi_cond.push(series(&acc.psi_idle[c], &stats.idle[c]).estimate().ok_or(empty)?);
    }
    let psi_series = series(&acc.psi, &stats.length);
    let psi_joint_series: Vec<BatchSeries> = (0..k).map(|c| series(&acc.psi_idle[c], &stats.length)).collect();
    Ok(MgfEstimate {
        phi: stats.time_average(&acc.phi),
        psi: psi_series.estimate().expect("positive observation time"),
        phi_cond,
        psi_cond,
        psi_joint: psi_joint_series.iter().map(|s| s.estimate().expect("positive observation time")).collect(),
        idle: (0..k).map(|c| stats.idle_probability(c)).collect(),
        psi_series,
        psi_joint_series,
    })
}

pub type PalmFunctional = Box<dyn Fn(&EventView) -> f64>;

/// Event averages of a functional of `(X₋, X₊)` per counting process.
pub struct PalmObserver {
    f: PalmFunctional,
    /// `[kind][class][batch]`
    sums: [Vec<Vec<f64>>; 2],
    counts: [Vec<Vec<f64>>; 2],
}

fn kind_index(kind: EventKind) -> usize {
    match kind {
        EventKind::Arrival => 0,
        EventKind::Completion => 1,
    }
}

impl PalmObserver {
    pub fn new(num_classes: usize, batches: usize, f: PalmFunctional) -> Self {
        let z = || vec![vec![0.0; batches]; num_classes];
        Self { f, sums: [z(), z()], counts: [z(), z()] }
    }

    pub fn occurrences(&self, kind: EventKind, class: usize) -> f64 {
        self.counts[kind_index(kind)][class].iter().sum()
    }
}

impl Observer for PalmObserver {
    fn wants_events(&self) -> bool {
        true
    }

    fn event(&mut self, batch: usize, ev: &EventView) {
        let i = kind_index(ev.kind);
        self.sums[i][ev.class][batch] += (self.f)(ev);
        self.counts[i][ev.class][batch] += 1.0;
    }
}

/// Ergodic estimate of the Palm expectation of the functional for the
/// given event type.
pub fn collect_palm(obs: &PalmObserver, kind: EventKind, class: usize) -> Result<Estimate> {
    let i = kind_index(kind);
    BatchSeries::from_parts(obs.sums[i][class].clone(), obs.counts[i][class].clone())
        .estimate()
        .ok_or_else(|| Error::NoEvents(format!("{kind:?} of class {class}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockSide {
    Arrival,
    Service,
}

/// `E[R^n 1(R >= c)]` for an arrival clock, or
/// `E[R_s^n 1(R_s >= c) 1(k in service)]` for a service clock.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailQuery {
    pub side: ClockSide,
    pub class: usize,
    pub n: u32,
    pub cutoff: f64,
}

pub struct ResidualTailObserver {
    queries: Vec<TailQuery>,
    acc: Vec<Vec<f64>>,
}

impl ResidualTailObserver {
    pub fn new(net: &ValidatedNetwork, queries: Vec<TailQuery>, batches: usize) -> Result<Self> {
        for q in &queries {
            if q.class >= net.num_classes() || (q.side == ClockSide::Arrival && net.spec.arrival_rate[q.class] <= 0.0) {
                return Err(Error::InvalidArgument(format!("no {:?} clock for class {}", q.side, q.class)));
            }
        }
        let acc = vec![vec![0.0; batches]; queries.len()];
        Ok(Self { queries, acc })
    }
}

impl Observer for ResidualTailObserver {
    fn interval(&mut self, batch: usize, span: &Span) {
        for (q, acc) in self.queries.iter().zip(&mut self.acc) {
            let clock = match q.side {
                ClockSide::Arrival => span.state.re[q.class],
                ClockSide::Service => {
                    if !span.served[q.class] {
                        continue;
                    }
                    span.state.rs[q.class]
                }
            };
            let hi = clock - span.from;
            if !(hi > q.cutoff) {
                continue;
            }
            let lo = (clock - span.to).max(q.cutoff);
            let p = (q.n + 1) as i32;
            *acc.get_mut(batch).unwrap() += (hi.powi(p) - lo.powi(p)) / p as f64;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailComparison {
    pub query: TailQuery,
    pub left: Estimate,
    pub right: f64,
}

/// Both sides of the residual-time tail identities: time averages on the
/// left, distribution moments on the right.
pub fn remaining_time_tail(net: &ValidatedNetwork, stats: &SteadyStats, obs: &ResidualTailObserver) -> Result<Vec<TailComparison>> {
    let traffic = solve_traffic(net)?;
    let spec = &net.spec;
    Ok(obs
        .queries
        .iter()
        .zip(&obs.acc)
        .map(|(q, acc)| {
            let (dist, scale, weight) = match q.side {
                ClockSide::Arrival => (&spec.arrival_dist[q.class], 1.0 / spec.arrival_rate[q.class], 1.0),
                ClockSide::Service => (&spec.service_dist[q.class], spec.mean_service[q.class], traffic.gamma[q.class]),
            };
            let right = if q.cutoff.is_infinite() {
                0.0
            } else {
                let x = q.cutoff / scale;
                let n1 = q.n + 1;
                weight * scale.powi(q.n as i32) / n1 as f64 * (dist.partial_moment(n1, x) - x.powi(n1 as i32) * dist.survival(x))
            };
            TailComparison { query: *q, left: stats.time_average(acc), right }
        })
        .collect())
}

/// `∫ Z_k 1(Z_k > a)` over a grid of levels.
pub struct CountTailObserver {
    levels: Vec<f64>,
    /// `[class][level][batch]`
    acc: Vec<Vec<Vec<f64>>>,
}

impl CountTailObserver {
    pub fn new(num_classes: usize, levels: Vec<f64>, batches: usize) -> Self {
        let acc = vec![vec![vec![0.0; batches]; levels.len()]; num_classes];
        Self { levels, acc }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `E[Z_k 1(Z_k > a)]` for every level.
    pub fn tail(&self, stats: &SteadyStats, k: usize) -> Vec<Estimate> {
        self.acc[k].iter().map(|a| stats.time_average(a)).collect()
    }
}

impl Observer for CountTailObserver {
    fn interval(&mut self, batch: usize, span: &Span) {
        for (c, &z) in span.state.z.iter().enumerate() {
            if z == 0 {
                continue;
            }
            let zf = z as f64;
            for (i, &a) in self.levels.iter().enumerate() {
                if zf > a {
                    self.acc[c][i][batch] += zf * span.dt;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionModel;
    use crate::network::{validate_spec, NetworkSpec};
    use crate::pilot;

    fn exp6() -> [DistributionModel; 6] {
        [DistributionModel::Exponential; 6]
    }

    #[test]
    fn mm1_empty_probability() {
        let net = pilot::single_station(0.5, 1.0, DistributionModel::Exponential, DistributionModel::Exponential).unwrap();
        let s = simulate(&net, &SimConfig::new(1e6, 7)).unwrap();
        let p0 = s.marginal_probability(0, 0).unwrap();
        assert!(p0.within(0.5, 3.0, 0.0), "{p0:?}");
        assert!(s.idle_probability(0).within(0.5, 3.0, 0.0));
        assert!(s.mean_count(0).within(1.0, 3.0, 0.0));
        assert!(!s.diverging);
    }

    #[test]
    fn same_seed_same_stats() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.8, exp6()).unwrap();
        let cfg = SimConfig::new(2e4, 11).with_log(50);
        let a = simulate(&net, &cfg).unwrap();
        let b = simulate(&net, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&net, &SimConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.length, c.length.iter().map(|_| 0.0).collect::<Vec<_>>());
        assert_ne!(a.count, c.count);
    }

    #[test]
    fn classes_without_inflow_never_arrive() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.8, exp6()).unwrap();
        let s = simulate(&net, &SimConfig::new(1e4, 3)).unwrap();
        for k in 1..5 {
            assert_eq!(s.arrivals[k].iter().sum::<f64>(), 0.0);
        }
        assert!(s.arrivals[0].iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn records_respect_jump_shapes_and_priority() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.8, exp6()).unwrap();
        let s = simulate(&net, &SimConfig::new(5e3, 5).with_log(20_000)).unwrap();
        assert_eq!(s.log.len(), 20_000);
        let pr = &net.priority;
        for ev in &s.log {
            let (pre, post, k) = (&ev.pre, &ev.post, ev.class);
            match ev.kind {
                EventKind::Arrival => {
                    for c in 0..5 {
                        let dz = post.z[c] as i64 - pre.z[c] as i64;
                        assert_eq!(dz, (c == k) as i64);
                        assert_eq!(post.rs[c], pre.rs[c]);
                    }
                    assert_eq!(pre.re[k], 0.0);
                    assert!(post.re[k] > 0.0);
                }
                EventKind::Completion => {
                    assert!(pre.z[k] > 0 && pr.h_plus[k].iter().all(|&h| pre.z[h] == 0));
                    for c in 0..5 {
                        let dz = post.z[c] as i64 - pre.z[c] as i64;
                        assert_eq!(dz, -((c == k) as i64) + (ev.routed_to == Some(c)) as i64);
                    }
                    assert_eq!(ev.routed_to, if k < 4 { Some(k + 1) } else { None });
                    assert_eq!(pre.rs[k], 0.0);
                    assert!(post.rs[k] > 0.0);
                    assert_eq!(post.re, pre.re);
                }
            }
        }
    }

    #[test]
    fn palm_of_constant_is_one() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.8, exp6()).unwrap();
        let cfg = SimConfig::new(2e4, 9);
        let mut palm = PalmObserver::new(5, cfg.batches, Box::new(|_| 1.0));
        let mut inc = PalmObserver::new(5, cfg.batches, Box::new(|ev| ev.post.total() as f64 - ev.pre.total() as f64));
        simulate_with(&net, &cfg, &mut [&mut palm, &mut inc]).unwrap();
        for k in 0..5 {
            let e = collect_palm(&palm, EventKind::Completion, k).unwrap();
            assert_eq!((e.value, e.std_error), (1.0, 0.0));
            let d = collect_palm(&inc, EventKind::Completion, k).unwrap().value;
            assert_eq!(d, if k == 4 { -1.0 } else { 0.0 });
        }
        assert_eq!(collect_palm(&palm, EventKind::Arrival, 0).unwrap().value, 1.0);
        assert!(matches!(collect_palm(&palm, EventKind::Arrival, 2), Err(Error::NoEvents(_))));
    }

    #[test]
    fn routing_frequencies_follow_the_matrix() {
        let net = validate_spec(NetworkSpec {
            num_stations: 2,
            station_of: vec![0, 1],
            priority_rank: vec![0, 0],
            routing: vec![vec![0.0, 0.3], vec![0.2, 0.0]],
            arrival_rate: vec![0.5, 0.0],
            mean_service: vec![1.0, 1.0],
            arrival_dist: vec![DistributionModel::Exponential; 2],
            service_dist: vec![DistributionModel::Exponential; 2],
        })
        .unwrap();
        let s = simulate(&net, &SimConfig::new(2e5, 2)).unwrap();
        for (k, row) in [(0usize, [0.0, 0.3, 0.7]), (1, [0.2, 0.0, 0.8])] {
            let n: u64 = s.routing[k].iter().sum();
            let f = s.routing_fractions(k);
            for j in 0..3 {
                let se = (row[j] * (1.0 - row[j]) / n as f64).sqrt();
                assert!((f[j] - row[j]).abs() <= 3.0 * se.max(1e-12), "k={k} j={j} {} vs {}", f[j], row[j]);
            }
        }
    }

    /// Deterministic primitives that make arrivals and completions coincide.
    fn colliding_network() -> ValidatedNetwork {
        validate_spec(NetworkSpec {
            num_stations: 2,
            station_of: vec![0, 1, 1],
            priority_rank: vec![0, 1, 2],
            routing: vec![vec![0.0, 1.0, 0.0], vec![0.0; 3], vec![0.0; 3]],
            arrival_rate: vec![1.0, 0.0, 1.0],
            mean_service: vec![0.5, 0.5, 0.25],
            arrival_dist: vec![DistributionModel::Deterministic; 3],
            service_dist: vec![DistributionModel::Deterministic; 3],
        })
        .unwrap()
    }

    #[test]
    fn block_order_does_not_change_the_path() {
        let net = colliding_network();
        let cfg = SimConfig::new(100.5, 1).with_warmup(0.0).with_batches(4).with_log(1000);
        let a = simulate(&net, &cfg).unwrap();
        let b = simulate(&net, &SimConfig { block_order: BlockOrder::Reversed, ..cfg.clone() }).unwrap();
        let shared = a.log.windows(2).filter(|w| w[0].time == w[1].time).count();
        assert!(shared > 100, "collisions were not produced");
        assert_eq!(a.final_state, b.final_state);
        assert_eq!((&a.length, &a.count, &a.idle, &a.busy), (&b.length, &b.count, &b.idle, &b.busy));
        assert_eq!((&a.arrivals, &a.completions, &a.routing), (&b.arrivals, &b.completions, &b.routing));
        // arrivals come first in the canonical block, in class order
        let block: Vec<_> = a.log.iter().filter(|e| e.time == 2.0).map(|e| (e.kind, e.class)).collect();
        assert_eq!(block, vec![(EventKind::Arrival, 0), (EventKind::Arrival, 2), (EventKind::Completion, 1)]);
    }

    #[test]
    fn zero_theta_gives_unit_transforms() {
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.8, exp6()).unwrap();
        let cfg = SimConfig::new(5e3, 4);
        let pt = MgfPoint::scaled(&net, &[0.0; 5], 0.2, 0.4).unwrap();
        let mut obs = MgfObserver::new(&net, vec![pt], cfg.batches);
        let s = simulate_with(&net, &cfg, &mut [&mut obs]).unwrap();
        let e = estimate_mgf(&s, &obs, 0).unwrap();
        assert_eq!((e.phi.value, e.psi.value), (1.0, 1.0));
        assert!(e.phi_cond.iter().chain(&e.psi_cond).all(|v| v.value == 1.0));
        assert!(matches!(estimate_mgf(&s, &obs, 1), Err(Error::UnknownPoint)));
    }

    #[test]
    fn psi_integral_matches_fine_quadrature() {
        // one interval, evaluated by brute force at fine resolution
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.8, exp6()).unwrap();
        let pt = MgfPoint::new(&net, &[-0.3, 0.2, -0.1, -0.2, 0.25], 0.25, 0.5).unwrap();
        let mut obs = MgfObserver::new(&net, vec![pt.clone()], 1);
        let state = SimState { z: vec![3, 1, 0, 6, 2], re: vec![2.7, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY], rs: vec![0.4, 3.1, 0.9, 2.2, 2.9] };
        let served = [false, true, false, false, true];
        let idle = [false, true, false, false, true];
        let mu = net.service_rates();
        let span = Span { state: &state, served: &served, idle: &idle, from: 0.1, to: 2.4, dt: 2.3 };
        let got = obs.clock_integral(0, &span);
        let n = 400_000;
        let h = 2.3 / n as f64;
        let mut want = 0.0;
        for i in 0..n {
            let tau = 0.1 + (i as f64 + 0.5) * h;
            let mut e = -pt.eta[0] * (0.8 * (state.re[0] - tau)).min(pt.clock_cap);
            for k in 0..5 {
                let v = if served[k] { state.rs[k] - tau } else { state.rs[k] };
                e -= pt.xi[k] * (mu[k] * v).min(pt.clock_cap);
            }
            want += e.exp() * h;
        }
        assert!((got - want).abs() < 1e-8 * want, "{got} vs {want}");
    }

    #[test]
    fn bounded_primitives_have_zero_mean_palm_jumps() {
        // with untruncated transforms, f(X₊)/f(X₋) has conditional mean one
        let u = DistributionModel::uniform(0.5).unwrap();
        let net = pilot::network(&pilot::DEFAULT_MEANS, 0.8, [u; 6]).unwrap();
        let theta = [-0.2, -0.1, -0.3, -0.15, -0.25];
        let pt = MgfPoint::new(&net, &theta, 0.0, 0.0).unwrap();
        let mu = net.service_rates();
        let f = move |x: &SimState| {
            let mut e = 0.0;
            for k in 0..5 {
                e += theta[k] * x.z[k] as f64 - pt.xi[k] * mu[k] * x.rs[k];
            }
            e -= pt.eta[0] * 0.8 * x.re[0];
            e.exp()
        };
        let cfg = SimConfig::new(2e5, 21);
        let mut palm = PalmObserver::new(5, cfg.batches, Box::new(move |ev| f(ev.post) - f(ev.pre)));
        simulate_with(&net, &cfg, &mut [&mut palm]).unwrap();
        let mut checks = vec![collect_palm(&palm, EventKind::Arrival, 0).unwrap()];
        checks.extend((0..5).map(|k| collect_palm(&palm, EventKind::Completion, k).unwrap()));
        for e in checks {
            assert!(e.within(0.0, 3.0, 0.0), "{e:?}");
        }
    }

    #[test]
    fn residual_tail_identities() {
        let net = pilot::priority_pair([0.4, 0.3], [1.0, 1.0]).unwrap();
        let cfg = SimConfig::new(2e5, 8);
        let qs = vec![
            TailQuery { side: ClockSide::Service, class: 1, n: 0, cutoff: 0.0 },
            TailQuery { side: ClockSide::Arrival, class: 0, n: 1, cutoff: 0.0 },
            TailQuery { side: ClockSide::Arrival, class: 1, n: 2, cutoff: 1.5 },
            TailQuery { side: ClockSide::Service, class: 0, n: 1, cutoff: 0.7 },
            TailQuery { side: ClockSide::Service, class: 1, n: 1, cutoff: f64::INFINITY },
        ];
        let mut obs = ResidualTailObserver::new(&net, qs, cfg.batches).unwrap();
        let s = simulate_with(&net, &cfg, &mut [&mut obs]).unwrap();
        let rows = remaining_time_tail(&net, &s, &obs).unwrap();
        // service side at n = 0, c = 0 is the busy fraction and γ_k
        assert!((rows[0].left.value - s.busy_fraction(1).value).abs() < 1e-12);
        assert!((rows[0].right - 0.3).abs() < 1e-12);
        // exponential arrivals: ½ a E[T²] = a
        assert!((rows[1].right - 2.5).abs() < 1e-12);
        assert_eq!((rows[4].left.value, rows[4].right), (0.0, 0.0));
        for row in &rows {
            assert!(row.left.within(row.right, 3.0, 0.0), "{row:?}");
        }
        assert!(ResidualTailObserver::new(&net, vec![TailQuery { side: ClockSide::Arrival, class: 5, n: 0, cutoff: 0.0 }], 4).is_err());
    }

    #[test]
    fn merge_concatenates_batches() {
        let net = pilot::priority_pair([0.4, 0.3], [1.0, 1.0]).unwrap();
        let runs: Vec<SteadyStats> = (0..3).map(|i| simulate(&net, &SimConfig::new(2e3, i).with_batches(4)).unwrap()).collect();
        let mut left = runs[0].clone();
        left.merge(&runs[1]);
        left.merge(&runs[2]);
        let mut bc = runs[1].clone();
        bc.merge(&runs[2]);
        let mut right = runs[0].clone();
        right.merge(&bc);
        assert_eq!(left, right);
        assert_eq!(left.batches(), 12);
        let rep = replicate(&net, &SimConfig::new(2e3, 0).with_batches(4), 3).unwrap();
        assert_eq!(rep.length, left.length);
    }

    #[test]
    fn overloaded_network_is_flagged() {
        let net = pilot::single_station(1.5, 1.0, DistributionModel::Exponential, DistributionModel::Exponential).unwrap();
        let s = simulate(&net, &SimConfig::new(2e4, 1).with_warmup(0.0)).unwrap();
        assert!(s.diverging);
    }

    #[test]
    fn bad_config_is_rejected() {
        let net = pilot::priority_pair([0.4, 0.3], [1.0, 1.0]).unwrap();
        assert!(simulate(&net, &SimConfig::new(10.0, 0).with_warmup(10.0)).is_err());
        assert!(simulate(&net, &SimConfig::new(10.0, 0).with_batches(0)).is_err());
    }
}
