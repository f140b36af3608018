//! The acceptance criteria with their pinned tolerances. Each criterion
//! builds its own inputs, compares two independent routes to the same
//! quantity and reports a verdict with the numbers behind it.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analyzer::{analyze, theta_h};
use crate::checks::{check_m_matrix, check_tight, TightVerdict};
use crate::dist::DistributionModel;
use crate::error::Error;
use crate::network::solve_traffic;
use crate::oracle;
use crate::pilot;
use crate::sim::{estimate_mgf, estimate_rates, simulate, simulate_with, MgfObserver, MgfPoint, SimConfig};
use crate::srbm::{simulate_srbm, SrbmConfig, SrbmData};
use crate::stats::{pooled_se, Estimate};
use crate::transforms::{expansion_residual, solve_eta, DEFAULT_EPS0};
use crate::verify::{abar_residual, palm_identity_check, palm_identity_left_exact, run_sweep, AbarBudget, IdentityKind, PalmQuery, SimBudget};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Criterion {
    pub id: &'static str,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} {}: {}", self.id, if self.pass { "PASS" } else { "FAIL" }, self.title, self.detail)
    }
}

type Outcome = Result<(bool, String), Error>;

const EXP: DistributionModel = DistributionModel::Exponential;

/// Simulation against an identity: 3 standard errors or 1e-2.
fn close(e: &Estimate, target: f64) -> bool {
    e.within(target, 3.0, 1e-2)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Relative error, absolute below unit magnitude so zero entries compare.
fn rel_entry(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn admissible_means() -> [[f64; 5]; 3] {
    [pilot::DEFAULT_MEANS, [0.2, 0.3, 0.5, 0.7, 0.3], [0.45, 0.6, 0.4, 0.4, 0.15]]
}

fn a1() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let dists = [
        [EXP; 6],
        [
            DistributionModel::erlang(3)?,
            DistributionModel::hyperexp(4.0)?,
            DistributionModel::Deterministic,
            DistributionModel::lognormal(2.0)?,
            DistributionModel::uniform(0.5)?,
            DistributionModel::erlang(2)?,
        ],
        [
            DistributionModel::hyperexp(2.5)?,
            DistributionModel::uniform(0.9)?,
            DistributionModel::erlang(5)?,
            EXP,
            DistributionModel::lognormal(0.3)?,
            DistributionModel::Deterministic,
        ],
    ];
    for (m, d) in admissible_means().iter().zip(&dists) {
        let fam = pilot::family(m, *d)?;
        let (r, sigma, b) = analyze(&fam)?.srbm_data()?;
        let want_r = pilot::reflection(m);
        let cs: [f64; 5] = std::array::from_fn(|k| d[k + 1].scv());
        let want_s = pilot::sigma(m, d[0].scv(), &cs);
        for i in 0..2 {
            let want_drift = -(want_r[i][0] * 1.0 + want_r[i][1] * 1.0);
            let drift = -(r[(i, 0)] * b[0] + r[(i, 1)] * b[1]);
            worst = worst.max(rel_entry(drift, want_drift));
            for j in 0..2 {
                worst = worst.max(rel_entry(r[(i, j)], want_r[i][j]));
                worst = worst.max(rel_entry(sigma[(i, j)], want_s[i][j]));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((worst <= 1e-10 && secs < 1.0, format!("max relative error {worst:.2e} in R, Sigma, -Rb over 3 mean vectors; {secs:.3} s")))
}

fn a2_a3() -> Result<[(bool, String); 2], Error> {
    let r = 0.2;
    let m = pilot::DEFAULT_MEANS;
    let fam = pilot::family(&m, [EXP; 6])?;
    let net = fam.instantiate_at(r)?;
    let cfg = SimConfig::new(1.1e6, 2024).with_warmup(1e5);
    let s = simulate(&net, &cfg)?;
    let observed = s.observed_time();

    let want = pilot::idle_probabilities(&m, 1.0 - r);
    let beta: Vec<Estimate> = (0..5).map(|k| s.idle_probability(k)).collect();
    let ok2 = observed >= 1e6 && beta.iter().zip(&want).all(|(e, w)| close(e, *w));
    let worst2 = beta.iter().zip(&want).map(|(e, w)| (e.value - w).abs()).fold(0.0, f64::max);

    let t = solve_traffic(&net)?;
    let rates = estimate_rates(&s);
    let mut worst3: f64 = rel(rates.arrival[0].value, net.spec.arrival_rate[0]);
    for k in 0..5 {
        worst3 = worst3.max(rel(rates.completion[k].value, t.alpha[k]));
    }
    Ok([
        (ok2, format!("max |beta_hat - beta| = {worst2:.4} over {observed:.3e} time units")),
        (worst3 <= 0.01, format!("max relative rate error {worst3:.4}")),
    ])
}

fn a4() -> Outcome {
    let t = Instant::now();
    let mut worst_exact: f64 = 0.0;
    for i in 0..20 {
        let theta = -3.0 + 0.17 * i as f64;
        worst_exact = worst_exact.max((solve_eta(&EXP, theta, 0.0)? - theta.exp_m1()).abs());
    }
    let row = [0.0, 0.6, 0.3];
    let theta = [-0.8, 0.5, -1.2];
    let mut worst_ratio = f64::INFINITY;
    for d in [EXP, DistributionModel::erlang(2)?] {
        let rows = expansion_residual(&d, &row, &theta, 0, &[0.1, 0.01], DEFAULT_EPS0)?;
        worst_ratio = worst_ratio.min(rows[0].eta / rows[1].eta).min(rows[0].xi / rows[1].xi);
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = worst_exact <= 1e-12 && worst_ratio >= 5.0 && secs < 1.0;
    Ok((ok, format!("exponential eta error {worst_exact:.1e}; smallest residual reduction {worst_ratio:.1}x; {secs:.3} s")))
}

fn a5_a9() -> Result<[(bool, String); 2], Error> {
    let net = pilot::priority_pair([0.4, 0.3], [1.0, 1.0])?;
    let (ctmc, st, exact) = oracle::solve(&net, 400)?;

    let thetas = [[-0.5, -0.5], [-1.0, -0.2], [-0.1, -1.0], [0.1, -0.3], [-0.3, 0.1]];
    let points: Vec<MgfPoint> = thetas.iter().map(|th| MgfPoint::count_only(th, 0.0)).collect();
    let cfg = SimConfig::new(1e6, 77);
    let mut obs = MgfObserver::new(&net, points, cfg.batches);
    let s = simulate_with(&net, &cfg, &mut [&mut obs])?;
    let mut checked = 0;
    let mut bad = Vec::new();
    for k in 0..2 {
        for z in 0..=10 {
            let e = s.marginal_probability(k, z).expect("tracked count");
            checked += 1;
            if !close(&e, exact.marginal[k][z]) {
                bad.push(format!("P(Z{}={z})", k + 1));
            }
        }
        checked += 1;
        if !close(&s.idle_probability(k), exact.beta[k]) {
            bad.push(format!("beta{}", k + 1));
        }
    }
    for (i, th) in thetas.iter().enumerate() {
        let e = estimate_mgf(&s, &obs, i)?;
        let want = ctmc.mgf(&st.pi, th, &net.priority.high, f64::INFINITY).phi;
        checked += 1;
        if !close(&e.phi, want) {
            bad.push(format!("phi{th:?}: {:.4} vs {want:.4}", e.phi.value));
        }
    }
    let a5 = (bad.is_empty(), format!("{}/{checked} quantities agree with the cap-400 chain {bad:?}", checked - bad.len()));

    let queries: Vec<PalmQuery> = [(0, 1), (0, 2), (1, 1), (1, 2)]
        .iter()
        .map(|&(k, n)| PalmQuery { kind: IdentityKind::Service, k, l: k, n, cutoff: f64::INFINITY })
        .collect();
    let reps = palm_identity_check(&net, &queries, &SimConfig::new(1e6, 78))?;
    let mut ok = true;
    let mut detail = Vec::new();
    for rep in &reps {
        let q = &rep.query;
        let exact_left = palm_identity_left_exact(&ctmc, &st.pi, &net, q)?;
        let holds = rep.holds(3.0, 0.0) && close(&rep.left, exact_left);
        ok &= holds;
        detail.push(format!(
            "k={} n={}: {:+.1e} ({:.1} se)",
            q.k + 1,
            q.n,
            rep.discrepancy.value,
            rep.discrepancy.value / rep.discrepancy.std_error
        ));
    }
    Ok([a5, (ok, detail.join(", "))])
}

fn a6() -> Outcome {
    let r = 0.05;
    let fam = pilot::mm1_family()?;
    let net = fam.instantiate_at(r)?;
    let s = simulate(&net, &SimBudget::default().config(&net, r, 6)?)?;
    let z = s.mean_count(0);
    let scaled = Estimate { value: r * z.value, std_error: r * z.std_error, batches: z.batches };
    let ok_net = scaled.within(0.95, 3.0, 0.0);

    let (rm, sigma, b) = analyze(&fam)?.srbm_data()?;
    let analytic = sigma[(0, 0)] / (rm[(0, 0)] * b[0]);
    let data = SrbmData::new(rm, sigma, b)?;
    let mut cfg = SrbmConfig::new(&data, 4e4, 6);
    cfg.step = 2.5e-4;
    let w = simulate_srbm(&data, &cfg)?.mean(0);
    let ok_srbm = (analytic - 1.0).abs() < 1e-12 && rel(w.value, analytic) <= 0.05;
    Ok((
        ok_net && ok_srbm,
        format!(
            "rE[Z] = {:.4} +- {:.4} (target 0.95); SRBM mean {:.4} +- {:.4} vs {analytic}",
            scaled.value, scaled.std_error, w.value, w.std_error
        ),
    ))
}

fn a7() -> Outcome {
    let fam = pilot::family(&pilot::DEFAULT_MEANS, [EXP; 6])?;
    let budget = SimBudget { events_per_r2: 5e4, srbm_horizon: 2e4, srbm_step: Some(2.5e-4), ..Default::default() };
    let rep = run_sweep(&fam, &[0.2, 0.1, 0.05], &budget, 7)?;
    let ssc: Vec<Estimate> = rep.rows.iter().map(|row| row.ssc).collect();
    let decreasing = ssc.windows(2).all(|w| w[0].value - w[1].value > pooled_se(&w[0], &w[1]));
    let last = rep.rows.last().unwrap();
    let errs: Vec<f64> = (0..2).map(|i| rel(last.scaled_low[i].value, rep.srbm.mean[i].value)).collect();
    let ok = decreasing && errs.iter().all(|&e| e <= 0.10);
    let ssc_s: Vec<String> = ssc.iter().map(|e| format!("{:.3}", e.value)).collect();
    Ok((
        ok,
        format!(
            "SSC column [{}]; r=0.05 (rE[Z1], rE[Z4]) = ({:.3}, {:.3}) vs SRBM ({:.3}, {:.3}), relative gaps {:.1}% and {:.1}%",
            ssc_s.join(", "),
            last.scaled_low[0].value,
            last.scaled_low[1].value,
            rep.srbm.mean[0].value,
            rep.srbm.mean[1].value,
            100.0 * errs[0],
            100.0 * errs[1]
        ),
    ))
}

fn a8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    for n in 1..=5 {
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        ok &= check_tight(&DMatrix::identity(n, n), &b)?.verdict == TightVerdict::Tight;
    }
    let mut mismatches = 0;
    for i in 0..100 {
        let mut off = || match rng.random_range(0..5) {
            0 => 0.0,
            _ => rng.random_range(-2.0..2.0),
        };
        let (r12, r21) = (off(), off());
        let r = DMatrix::from_row_slice(2, 2, &[rng.random_range(0.2..3.0), r12, r21, rng.random_range(0.2..3.0)]);
        let b = [rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)];
        // the three tight cases of the 2×2 classification
        let want = (r12 <= 0.0 && r21 <= 0.0) || (r12 < 0.0 && r21 >= 0.0) || (r12 >= 0.0 && r21 < 0.0);
        if (check_tight(&r, &b)?.verdict == TightVerdict::Tight) != want {
            mismatches += 1;
            log::warn!("2x2 case {i} misclassified: R = {r:?}");
        }
    }
    let mut pilot_ok = true;
    for m in admissible_means() {
        let a = analyze(&pilot::family(&m, [EXP; 6])?)?;
        let r = a.reflection.reflection()?;
        pilot_ok &= a.checks.tight == Some(TightVerdict::Tight) && check_m_matrix(r);
    }
    Ok((ok && mismatches == 0 && pilot_ok, format!("identity tight: {ok}; 2x2 mismatches: {mismatches}/100; pilot tight and M-matrix: {pilot_ok}")))
}

fn a10() -> Outcome {
    let fam = pilot::family(&pilot::DEFAULT_MEANS, [EXP; 6])?;
    let a = analyze(&fam)?;
    let thetas: Vec<Vec<f64>> = [[-1.0, -1.0], [-0.5, -2.0], [-2.0, -0.5]]
        .iter()
        .map(|tl| Ok(a.reflection.assemble(tl, &theta_h(&a.reflection, tl)?)))
        .collect::<Result<_, Error>>()?;
    let budget = AbarBudget { events_per_r2: 5e3, seeds: (0..10).collect(), ..Default::default() };
    let rows = abar_residual(&fam, &thetas, &[0.2, 0.05], &budget)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for p in 0..thetas.len() {
        let at = |r: f64| rows.iter().find(|row| row.point == p && row.r == r).unwrap().scaled;
        let (big, small) = (at(0.2), at(0.05));
        ok &= small.value.abs() < big.value.abs();
        detail.push(format!("{:.3} -> {:.3}", big.value, small.value));
    }
    Ok((ok, format!("residual/r^2 from r=0.2 to 0.05 at 3 points: {} (soft check)", detail.join(", "))))
}

fn verdict(id: &'static str, title: &'static str, out: Outcome, seconds: f64) -> Criterion {
    let (pass, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    Criterion { id, title, pass, detail, seconds }
}

/// Runs every criterion in order, handing each verdict to `on_result` as
/// soon as it is known. Takes about a minute on one core.
pub fn run_all(mut on_result: impl FnMut(&Criterion)) -> Vec<Criterion> {
    let mut out = Vec::new();
    let mut push = |c: Criterion| {
        on_result(&c);
        out.push(c);
    };
    let t = Instant::now();
    let a = a1();
    push(verdict("A1", "closed-form SRBM data", a, t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let (x, y) = match a2_a3() {
        Ok([x, y]) => (Ok(x), Ok(y)),
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let s = t.elapsed().as_secs_f64();
    push(verdict("A2", "idle probabilities", x, s));
    push(verdict("A3", "event rates", y, s));

    let t = Instant::now();
    let a = a4();
    push(verdict("A4", "transforms", a, t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let (a5, a9) = match a5_a9() {
        Ok([x, y]) => (Ok(x), Ok(y)),
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let s59 = t.elapsed().as_secs_f64();
    push(verdict("A5", "oracle equivalence", a5, s59));

    let t = Instant::now();
    let a = a6();
    push(verdict("A6", "one-dimensional heavy traffic", a, t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let a = a7();
    push(verdict("A7", "heavy-traffic consistency", a, t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let a = a8();
    push(verdict("A8", "tight-system checker", a, t.elapsed().as_secs_f64()));
    push(verdict("A9", "Palm identity", a9, s59));
    let t = Instant::now();
    let a = a10();
    push(verdict("A10", "asymptotic BAR residual", a, t.elapsed().as_secs_f64()));
    out
}
