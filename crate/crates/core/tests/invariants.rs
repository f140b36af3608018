use proptest::prelude::*;

use qnbar::analyzer::analyze;
use qnbar::oracle;
use qnbar::pilot;
use qnbar::sim::{estimate_rates, simulate, SimConfig};
use qnbar::{solve_traffic, DistributionModel};

/// Limit data of the reentrant pilot line built from its workload instead of
/// the adjoint expansion. A class-1 job carries remaining work `(1, 1)` and a
/// class-4 job `(m5, m4)`, so `Z_L = G⁻¹ W`. With Poisson-type arrivals of
/// SCV `ce`, the work netput has covariance rate `ce·11ᵀ + diag(Σ m_k² c_k²)`.
/// The SRBM covariance is half its image under `G⁻¹`, and `R = G⁻¹`.
fn workload_limit(m: &[f64; 5], ce: f64, cs: &[f64; 5]) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let det = m[3] - m[4];
    let ginv = [[m[3] / det, -m[4] / det], [-1.0 / det, 1.0 / det]];
    let v1 = m[0] * m[0] * cs[0] + m[2] * m[2] * cs[2] + m[4] * m[4] * cs[4];
    let v2 = m[1] * m[1] * cs[1] + m[3] * m[3] * cs[3];
    let gamma = [[ce + v1, ce], [ce, ce + v2]];
    let mut sigma = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    sigma[i][j] += 0.5 * ginv[i][a] * gamma[a][b] * ginv[j][b];
                }
            }
        }
    }
    (ginv, sigma)
}

fn model(i: usize, p: f64) -> DistributionModel {
    match i {
        0 => DistributionModel::Exponential,
        1 => DistributionModel::erlang(1 + (p * 6.0) as u32).unwrap(),
        2 => DistributionModel::hyperexp(1.01 + 5.0 * p).unwrap(),
        3 => DistributionModel::uniform(0.95 * p).unwrap(),
        4 => DistributionModel::lognormal(0.1 + 3.0 * p).unwrap(),
        _ => DistributionModel::Deterministic,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pilot_limit_matches_workload_representation(
        m1 in 0.05..0.5f64, m3 in 0.05..0.4f64, split in 0.05..0.95f64,
        kinds in proptest::collection::vec((0usize..6, 0.0..1.0f64), 6),
    ) {
        let m5 = (1.0 - m1 - m3) * 0.9;
        prop_assume!(m5 > 0.02);
        let m1 = 1.0 - m3 - m5;
        // m4 > m5 and m2 + m4 = 1
        let m4 = m5 + split * (1.0 - m5);
        let means = [m1, 1.0 - m4, m3, m4, m5];
        prop_assume!(means[1] > 1e-3);
        let dists: [DistributionModel; 6] = std::array::from_fn(|i| model(kinds[i].0, kinds[i].1));
        let fam = pilot::family(&means, dists).unwrap();
        let (r, sigma, b) = analyze(&fam).unwrap().srbm_data().unwrap();
        let cs: [f64; 5] = std::array::from_fn(|k| dists[k + 1].scv());
        let (want_r, want_s) = workload_limit(&means, dists[0].scv(), &cs);
        let scale = want_s[0][0].abs().max(want_s[1][1].abs());
        for i in 0..2 {
            prop_assert!((b[i] - 1.0).abs() < 1e-12);
            for j in 0..2 {
                prop_assert!((r[(i, j)] - want_r[i][j]).abs() < 1e-9 * want_r[i][j].abs().max(1.0));
                prop_assert!((sigma[(i, j)] - want_s[i][j]).abs() < 1e-9 * scale, "Σ{i}{j}: {} vs {}", sigma[(i, j)], want_s[i][j]);
            }
        }
    }

    #[test]
    fn idle_probabilities_are_linear_in_r(r in 0.01..0.5f64) {
        let fam = pilot::family(&pilot::DEFAULT_MEANS, [DistributionModel::Exponential; 6]).unwrap();
        let t = solve_traffic(&fam.instantiate_at(r).unwrap()).unwrap();
        let b = fam.b();
        for (i, &l) in fam.base.priority.lowest.iter().enumerate() {
            // m* = 0 leaves no r² term
            prop_assert!((t.beta[l] - r * b[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn pilot_simulation_matches_truncated_chain() {
    let net = pilot::network(&pilot::DEFAULT_MEANS, 0.4, [DistributionModel::Exponential; 6]).unwrap();
    let (_, st, exact) = oracle::solve(&net, 12).unwrap();
    assert!(exact.boundary_mass < 1e-4, "{}", exact.boundary_mass);
    assert!(st.residual < 1e-9);
    let s = simulate(&net, &SimConfig::new(4e5, 12)).unwrap();
    for k in 0..5 {
        let beta = s.idle_probability(k);
        let mean = s.mean_count(k);
        assert!(beta.within(exact.beta[k], 3.0, 1e-2), "β{k}: {beta:?} vs {}", exact.beta[k]);
        assert!(mean.within(exact.mean[k], 3.0, 1e-2), "E[Z{k}]: {mean:?} vs {}", exact.mean[k]);
    }
}

#[test]
fn completion_rates_match_traffic_equations_under_feedback() {
    // class 1 feeds class 2, which returns to class 1 half the time
    let spec = qnbar::NetworkSpec {
        num_stations: 1,
        station_of: vec![0, 0],
        priority_rank: vec![1, 2],
        routing: vec![vec![0.0, 1.0], vec![0.5, 0.0]],
        arrival_rate: vec![0.2, 0.0],
        mean_service: vec![0.8, 0.9],
        arrival_dist: vec![DistributionModel::erlang(2).unwrap(); 2],
        service_dist: vec![DistributionModel::hyperexp(3.0).unwrap(), DistributionModel::uniform(0.5).unwrap()],
    };
    let net = qnbar::validate_spec(spec).unwrap();
    let t = solve_traffic(&net).unwrap();
    assert!((t.alpha[0] - 0.4).abs() < 1e-12 && (t.alpha[1] - 0.4).abs() < 1e-12);
    let s = simulate(&net, &SimConfig::new(5e5, 3)).unwrap();
    let rates = estimate_rates(&s);
    for k in 0..2 {
        assert!((rates.completion[k].value / t.alpha[k] - 1.0).abs() < 0.01, "{:?}", rates.completion[k]);
        let beta = s.idle_probability(k);
        assert!(beta.within(t.beta[k], 3.0, 1e-2), "β{k}: {beta:?} vs {}", t.beta[k]);
    }
}
