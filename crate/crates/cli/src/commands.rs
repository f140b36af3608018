use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use qnbar::acceptance;
use qnbar::analyzer::{analyze as run_analysis, theta_h};
use qnbar::oracle as exact;
use qnbar::sim::{estimate_mgf, estimate_rates, simulate_with, MgfObserver, MgfPoint, Observer, SimConfig};
use qnbar::srbm::{simulate_srbm_replicated, srbm_bar_residual, SrbmConfig, SrbmData};
use qnbar::transforms::DEFAULT_EPS0;
use qnbar::verify::{
    abar_residual, event_rate, palm_identity_check, run_sweep, ssc_diagnostics, AbarBudget, IdentityKind, PalmQuery, Record, SimBudget,
};

use crate::io::*;
use crate::Output;

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Network file with a `[heavy_traffic]` section.
    pub network: PathBuf,
    /// Also write R, Σ and b as TOML for `srbm --from`.
    #[arg(long)]
    pub save: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Serialize)]
struct MatrixEntry {
    block: &'static str,
    row: usize,
    col: usize,
    value: f64,
}

fn entries(block: &'static str, m: &nalgebra::DMatrix<f64>, out: &mut Vec<MatrixEntry>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(MatrixEntry { block, row: i + 1, col: j + 1, value: m[(i, j)] });
        }
    }
}

fn verdict(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "not evaluated",
    }
}

pub fn analyze(a: AnalyzeArgs) -> Result<bool> {
    let fam = load_family(&a.network)?;
    let an = run_analysis(&fam)?;
    let refl = &an.reflection;
    let mut text = String::new();
    use std::fmt::Write as _;
    writeln!(text, "classes {}, stations {}", fam.base.num_classes(), fam.base.num_stations())?;
    writeln!(text, "lowest classes L: {}", one_based(&refl.lowest))?;
    writeln!(text, "high classes H: {}", one_based(&refl.high))?;
    writeln!(text, "A:\n{}", fmt_matrix(&refl.a))?;
    let mut csv_rows = Vec::new();
    entries("A", &refl.a, &mut csv_rows);
    if let Some(r) = &refl.r {
        writeln!(text, "R:\n{}", fmt_matrix(r))?;
        entries("R", r, &mut csv_rows);
    }
    if let Some(d) = &an.diffusion {
        writeln!(text, "Sigma:\n{}", fmt_matrix(&d.sigma))?;
        entries("Sigma", &d.sigma, &mut csv_rows);
    }
    writeln!(text, "b: [{}]", fmt_vec(&an.b))?;
    entries("b", &nalgebra::DMatrix::from_row_slice(1, an.b.len(), &an.b), &mut csv_rows);
    let c = &an.checks;
    writeln!(text, "checks:")?;
    writeln!(text, "  A_H invertible: {}", verdict(Some(c.a_h_invertible)))?;
    writeln!(text, "  R completely-S: {}", verdict(c.completely_s))?;
    writeln!(text, "  R M-matrix: {}", verdict(c.m_matrix))?;
    writeln!(text, "  (R, b) tight: {}", c.tight.map_or("not evaluated".to_string(), |t| format!("{t:?}")))?;
    writeln!(text, "  Sigma positive definite: {}", verdict(c.sigma_positive_definite))?;
    let failures = c.failures();
    if failures.is_empty() {
        writeln!(text, "all hypotheses of the limit theorem hold")?;
    } else {
        writeln!(text, "failed: {}", failures.join(", "))?;
    }

    if a.output.out.is_some() {
        print!("{text}");
        write_csv(a.output.out.as_deref(), &csv_rows)?;
    } else {
        let mut w = output(None)?;
        writeln!(w, "{text}")?;
        let mut csv = csv::Writer::from_writer(w);
        for row in &csv_rows {
            csv.serialize(row)?;
        }
        csv.flush()?;
    }

    if let Some(path) = a.save {
        let (r, sigma, b) = an.srbm_data()?;
        let file = AnalysisFile {
            r: rows_of(&r),
            sigma: rows_of(&sigma),
            b,
            lowest: refl.lowest.iter().map(|k| k + 1).collect(),
            verified: vec!["A_H invertible".into(), "R completely-S".into(), "(R, b) tight".into(), "Sigma positive definite".into()],
        };
        std::fs::write(&path, toml::to_string(&file)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(true)
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub network: PathBuf,
    /// Total simulated time, warmup included.
    #[arg(long, default_value_t = 1e5)]
    pub horizon: f64,
    /// Discarded initial time; 10% of the horizon by default.
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: usize,
    #[arg(long, default_value_t = 32)]
    pub batches: usize,
    /// Simulate the heavy-traffic family at this r.
    #[arg(long)]
    pub r: Option<f64>,
    /// θ points, one per line. With `--r` each point is scaled by r and the
    /// transforms are truncated; otherwise they are used as given.
    #[arg(long)]
    pub theta_grid: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

pub fn simulate(a: SimulateArgs) -> Result<bool> {
    let net = load_network(&a.network, a.r)?;
    let k = net.num_classes();
    let mut cfg = SimConfig::new(a.horizon, a.seed).with_batches(a.batches);
    if let Some(w) = a.warmup {
        cfg = cfg.with_warmup(w);
    }
    let thetas = match &a.theta_grid {
        Some(p) => read_theta_grid(p, k)?,
        None => Vec::new(),
    };
    let points: Vec<MgfPoint> = thetas
        .iter()
        .map(|th| match a.r {
            Some(r) => MgfPoint::scaled(&net, th, r, DEFAULT_EPS0),
            None => MgfPoint::new(&net, th, 0.0, 0.0),
        })
        .collect::<qnbar::Result<_>>()?;

    let runs: Vec<qnbar::Result<_>> = (0..a.replications.max(1) as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig { seed: cfg.seed.wrapping_add(i), ..cfg.clone() };
            let mut obs = MgfObserver::new(&net, points.clone(), cfg.batches);
            let s = simulate_with(&net, &cfg, &mut [&mut obs as &mut dyn Observer])?;
            Ok((s, obs))
        })
        .collect();
    let mut runs = runs.into_iter();
    let (mut stats, mut obs) = runs.next().unwrap()?;
    for run in runs {
        let (s, o) = run?;
        stats.merge(&s);
        obs.merge(&o);
    }

    let mut rows = Vec::new();
    for c in 0..k {
        rows.push(EstimateRow::new(format!("beta_{}", c + 1), &stats.idle_probability(c)));
        rows.push(EstimateRow::new(format!("busy_{}", c + 1), &stats.busy_fraction(c)));
        rows.push(EstimateRow::new(format!("mean_Z{}", c + 1), &stats.mean_count(c)));
    }
    let rates = estimate_rates(&stats);
    for c in net.spec.external() {
        rows.push(EstimateRow::new(format!("arrival_rate_{}", c + 1), &rates.arrival[c]));
    }
    for c in 0..k {
        rows.push(EstimateRow::new(format!("completion_rate_{}", c + 1), &rates.completion[c]));
    }
    for i in 0..points.len() {
        let e = estimate_mgf(&stats, &obs, i)?;
        rows.push(EstimateRow::new(format!("phi[{i}]"), &e.phi));
        rows.push(EstimateRow::new(format!("psi[{i}]"), &e.psi));
    }
    write_csv(a.output.out.as_deref(), &rows)?;
    eprintln!(
        "{} events over {:.4e} time units in {} replication(s){}",
        stats.events,
        stats.observed_time(),
        a.replications.max(1),
        if stats.diverging { "; the count grows across batches, the network may be unstable" } else { "" }
    );
    Ok(true)
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Network file with exponential primitives.
    pub network: PathBuf,
    /// Per-class truncation level.
    #[arg(long, default_value_t = 60)]
    pub cap: u32,
    /// Use the heavy-traffic family at this r.
    #[arg(long)]
    pub r: Option<f64>,
    /// θ points at which to evaluate `E[exp⟨θ, Z⟩]`.
    #[arg(long)]
    pub theta_grid: Option<PathBuf>,
    /// Largest count whose marginal probability is listed.
    #[arg(long, default_value_t = 10)]
    pub marginals: u32,
    #[command(flatten)]
    pub output: Output,
}

pub fn oracle(a: OracleArgs) -> Result<bool> {
    let net = load_network(&a.network, a.r)?;
    let k = net.num_classes();
    let (ctmc, st, f) = exact::solve(&net, a.cap)?;
    let mut rows = vec![
        EstimateRow::exact("states", ctmc.num_states as f64),
        EstimateRow::exact("residual", st.residual),
        EstimateRow::exact("boundary_mass", f.boundary_mass),
    ];
    for c in 0..k {
        rows.push(EstimateRow::exact(format!("beta_{}", c + 1), f.beta[c]));
        rows.push(EstimateRow::exact(format!("served_{}", c + 1), f.served[c]));
        rows.push(EstimateRow::exact(format!("mean_Z{}", c + 1), f.mean[c]));
        rows.push(EstimateRow::exact(format!("second_moment_Z{}", c + 1), f.second_moment[c]));
        for z in 0..=a.marginals.min(a.cap) as usize {
            rows.push(EstimateRow::exact(format!("P(Z{}={z})", c + 1), f.marginal[c][z]));
        }
    }
    if let Some(p) = &a.theta_grid {
        for (i, th) in read_theta_grid(p, k)?.iter().enumerate() {
            rows.push(EstimateRow::exact(format!("phi[{i}]"), ctmc.mgf(&st.pi, th, &net.priority.high, f64::INFINITY).phi));
        }
    }
    write_csv(a.output.out.as_deref(), &rows)?;
    eprintln!(
        "{} states solved by {:?} in {} iterations, residual {:.2e}, mass on the cap {:.2e}",
        ctmc.num_states, st.method, st.iterations, st.residual, f.boundary_mass
    );
    if f.boundary_mass > 1e-6 {
        eprintln!("warning: truncation mass is not negligible; raise --cap");
    }
    Ok(true)
}

#[derive(Args, Debug)]
pub struct SrbmArgs {
    /// TOML written by `analyze --save`.
    #[arg(long, conflicts_with_all = ["r", "sigma", "b"])]
    pub from: Option<PathBuf>,
    /// Reflection matrix, rows separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    #[arg(long, default_value_t = 1e4)]
    pub horizon: f64,
    /// Euler step; scaled to the drift by default.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: usize,
    /// θ ≤ 0 at which the transform and the BAR residual are reported; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Vec<String>,
    #[command(flatten)]
    pub output: Output,
}

pub fn srbm(a: SrbmArgs) -> Result<bool> {
    let data = match (&a.from, &a.r, &a.sigma, &a.b) {
        (Some(p), ..) => {
            let f = AnalysisFile::load(p)?;
            SrbmData::new(to_matrix(&f.r)?, to_matrix(&f.sigma)?, f.b)?
        }
        (None, Some(r), Some(s), Some(b)) => SrbmData::new(parse_matrix(r)?, parse_matrix(s)?, parse_list(b)?)?,
        _ => bail!("give either --from or all of --r, --sigma and --b"),
    };
    let mut cfg = SrbmConfig::new(&data, a.horizon, a.seed);
    if let Some(h) = a.step {
        cfg.step = h;
    }
    cfg.thetas = a.theta.iter().map(|t| parse_list(t)).collect::<Result<_>>()?;
    let st = simulate_srbm_replicated(&data, &cfg, a.replications.max(1))?;
    let mut rows = Vec::new();
    for i in 0..data.dim() {
        rows.push(EstimateRow::new(format!("mean_W{}", i + 1), &st.mean(i)));
        rows.push(EstimateRow::new(format!("second_moment_W{}", i + 1), &st.second_moment(i)));
        rows.push(EstimateRow::new(format!("push_rate_{}", i + 1), &st.push_rate(i)));
    }
    for p in 0..cfg.thetas.len() {
        rows.push(EstimateRow::new(format!("phi[{p}]"), &st.phi(p)));
        match srbm_bar_residual(&st, &data, p) {
            Ok(v) => rows.push(EstimateRow::exact(format!("bar_residual[{p}]"), v)),
            Err(e) => log::warn!("residual at θ[{p}]: {e}"),
        }
    }
    write_csv(a.output.out.as_deref(), &rows)?;
    eprintln!("step {:.3e}, horizon {:.3e}, stationary mean [{}]", cfg.step, cfg.horizon, fmt_vec(&(0..data.dim()).map(|i| st.mean(i).value).collect::<Vec<_>>()));
    Ok(true)
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub output: Output,
}

pub fn verify(a: VerifyArgs) -> Result<bool> {
    let results = acceptance::run_all(|c| eprintln!("{c}"));
    write_csv(a.output.out.as_deref(), &results)?;
    let failed = results.iter().filter(|c| !c.pass).count();
    eprintln!("{} of {} criteria passed", results.len() - failed, results.len());
    Ok(failed == 0)
}

#[derive(Args, Debug, Clone)]
pub struct BudgetArgs {
    /// Simulated events per run, times r².
    #[arg(long, default_value_t = 1e4)]
    pub events_per_r2: f64,
    #[arg(long, default_value_t = 32)]
    pub batches: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    pub network: PathBuf,
    /// Strictly decreasing values of r.
    #[arg(long, default_value = "0.2,0.1,0.05")]
    pub r: String,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = 1)]
    pub replications: usize,
    #[arg(long, default_value_t = 2e4)]
    pub srbm_horizon: f64,
    #[arg(long)]
    pub srbm_step: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

pub fn sweep(a: SweepArgs) -> Result<bool> {
    let fam = load_family(&a.network)?;
    let budget = SimBudget {
        events_per_r2: a.budget.events_per_r2,
        batches: a.budget.batches,
        replications: a.replications,
        srbm_horizon: a.srbm_horizon,
        srbm_replications: 1,
        srbm_step: a.srbm_step,
    };
    let rep = run_sweep(&fam, &parse_list(&a.r)?, &budget, a.budget.seed)?;
    write_csv(a.output.out.as_deref(), &rep.records())?;
    let low = one_based(&rep.lowest);
    eprintln!("{:>8} {:>12}  r*E[Z_l] for l in {low}", "r", "r*E[Z_H]");
    for row in &rep.rows {
        let cells: Vec<String> = row.scaled_low.iter().map(|e| format!("{:.4}±{:.4}", e.value, e.std_error)).collect();
        eprintln!("{:>8} {:>12.4}  {}{}", row.r, row.ssc.value, cells.join("  "), if row.diverging { "  (diverging)" } else { "" });
    }
    let cells: Vec<String> = rep.srbm.mean.iter().map(|e| format!("{:.4}±{:.4}", e.value, e.std_error)).collect();
    eprintln!("{:>8} {:>12}  {}", "SRBM", "", cells.join("  "));
    Ok(true)
}

#[derive(Args, Debug)]
pub struct AbarArgs {
    pub network: PathBuf,
    /// θ_L ≤ 0 on the lowest classes; θ_H is solved from it. Repeatable.
    #[arg(long, allow_hyphen_values = true, required = true)]
    pub theta_l: Vec<String>,
    #[arg(long, default_value = "0.2,0.1,0.05")]
    pub r: String,
    #[arg(long, default_value_t = 5e3)]
    pub events_per_r2: f64,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = DEFAULT_EPS0)]
    pub eps0: f64,
    #[command(flatten)]
    pub output: Output,
}

pub fn abar(a: AbarArgs) -> Result<bool> {
    let fam = load_family(&a.network)?;
    let an = run_analysis(&fam)?;
    let thetas: Vec<Vec<f64>> = a
        .theta_l
        .iter()
        .map(|s| {
            let tl = parse_list(s)?;
            let th = theta_h(&an.reflection, &tl)?;
            Ok(an.reflection.assemble(&tl, &th))
        })
        .collect::<Result<_>>()?;
    let budget = AbarBudget { events_per_r2: a.events_per_r2, seeds: (0..a.seeds).collect(), eps0: a.eps0, ..Default::default() };
    let rows = abar_residual(&fam, &thetas, &parse_list(&a.r)?, &budget)?;
    let records: Vec<Record> = rows
        .iter()
        .map(|row| Record {
            experiment: "abar".into(),
            r: row.r,
            quantity: "residual/r^2".into(),
            index: format!("[{}]", fmt_vec(&thetas[row.point])),
            value: row.scaled.value,
            std_error: row.scaled.std_error,
        })
        .collect();
    write_csv(a.output.out.as_deref(), &records)?;
    for row in &rows {
        eprintln!("r = {:<6} theta[{}]  residual/r^2 = {:+.4} ± {:.4}", row.r, row.point, row.scaled.value, row.scaled.std_error);
    }
    Ok(true)
}

#[derive(Args, Debug)]
pub struct PalmArgs {
    pub network: PathBuf,
    /// `KIND:k:l:n[:cutoff]` with KIND `service` or `arrival` and one-based
    /// classes. Repeatable.
    #[arg(long, required = true)]
    pub query: Vec<String>,
    #[arg(long, default_value_t = 1e5)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

fn parse_query(s: &str) -> Result<PalmQuery> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(4..=5).contains(&parts.len()) {
        bail!("query {s:?} is not KIND:k:l:n[:cutoff]");
    }
    let kind = match parts[0] {
        "service" => IdentityKind::Service,
        "arrival" => IdentityKind::Arrival,
        other => bail!("unknown identity kind {other:?}"),
    };
    let idx = |p: &str| -> Result<usize> {
        let v: usize = p.parse().with_context(|| format!("bad class {p:?}"))?;
        v.checked_sub(1).context("classes are one-based")
    };
    let cutoff = parts.get(4).map_or(Ok(f64::INFINITY), |c| parse_list(c).map(|v| v[0]))?;
    Ok(PalmQuery { kind, k: idx(parts[1])?, l: idx(parts[2])?, n: parts[3].parse()?, cutoff })
}

#[derive(Debug, Serialize)]
struct PalmRow {
    query: String,
    left: f64,
    left_se: f64,
    right: f64,
    right_se: f64,
    discrepancy: f64,
    discrepancy_se: f64,
    holds: bool,
}

pub fn palm(a: PalmArgs) -> Result<bool> {
    let net = load_network(&a.network, a.r)?;
    let queries: Vec<PalmQuery> = a.query.iter().map(|q| parse_query(q)).collect::<Result<_>>()?;
    let reps = palm_identity_check(&net, &queries, &SimConfig::new(a.horizon, a.seed))?;
    let rows: Vec<PalmRow> = reps
        .iter()
        .zip(&a.query)
        .map(|(rep, q)| PalmRow {
            query: q.clone(),
            left: rep.left.value,
            left_se: rep.left.std_error,
            right: rep.right.value,
            right_se: rep.right.std_error,
            discrepancy: rep.discrepancy.value,
            discrepancy_se: rep.discrepancy.std_error,
            holds: rep.holds(3.0, 1e-2),
        })
        .collect();
    write_csv(a.output.out.as_deref(), &rows)?;
    for r in &rows {
        eprintln!("{:<24} left {:.5}  right {:.5}  {}", r.query, r.left, r.right, if r.holds { "holds" } else { "VIOLATED" });
    }
    Ok(rows.iter().all(|r| r.holds))
}

#[derive(Args, Debug)]
pub struct SscArgs {
    pub network: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub r: f64,
    /// Levels a for E[Z_k 1(Z_k > a)].
    #[arg(long, default_value = "0,5,10,20")]
    pub levels: String,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub output: Output,
}

pub fn ssc(a: SscArgs) -> Result<bool> {
    let fam = load_family(&a.network)?;
    let net = fam.instantiate_at(a.r)?;
    let horizon = a.budget.events_per_r2 / (a.r * a.r) / event_rate(&net)?;
    let cfg = SimConfig::new(horizon, a.budget.seed).with_batches(a.budget.batches);
    let rep = ssc_diagnostics(&net, a.r, &cfg, parse_list(&a.levels)?)?;
    write_csv(a.output.out.as_deref(), &rep.records())?;
    eprintln!("r = {}: r*E[Z_H] = {:.4} ± {:.4}", a.r, rep.high_scaled.value, rep.high_scaled.std_error);
    for (k, e) in rep.scaled.iter().enumerate() {
        eprintln!("  class {}: r*E[Z] = {:.4} ± {:.4}", k + 1, e.value, e.std_error);
    }
    Ok(true)
}
