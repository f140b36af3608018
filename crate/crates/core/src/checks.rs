//! Matrix conditions on the reflection data: completely-S, M-matrix and
//! tight systems.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{inverse_checked, select};
use crate::lp::{Cmp, Lp, LpOutcome};

const S_MARGIN: f64 = 1e-9;
pub const MAX_TIGHT_DIM: usize = 12;

/// Outcome of the margin LP for one principal submatrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetWitness {
    pub indices: Vec<usize>,
    /// Optimal `δ` in `max δ s.t. M u ≥ δ e, 0 ≤ u ≤ e`.
    pub margin: f64,
    /// `u` with `M u > 0` when the margin is positive.
    pub u: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletelySResult {
    pub verdict: bool,
    pub subsets: Vec<SubsetWitness>,
}

/// Margin LP for the S property of a single square matrix.
pub fn s_margin(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let n = m.nrows();
    let mut lp = Lp::maximize();
    let u: Vec<usize> = (0..n).map(|_| lp.var(0.0, 0.0, 1.0)).collect();
    let delta = lp.var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = (0..n).map(|j| (u[j], m[(i, j)])).collect();
        row.push((delta, -1.0));
        lp.constraint(&row, Cmp::Ge, 0.0);
    }
    match lp.solve() {
        LpOutcome::Optimal { x, value } => (value, x[..n].to_vec()),
        // bounded and feasible by construction (u = 0, δ = min entry)
        _ => unreachable!("margin LP is feasible and bounded"),
    }
}

/// Checks every principal submatrix for a nonnegative `u` with `M u > 0`.
pub fn check_completely_s(m: &DMatrix<f64>) -> CompletelySResult {
    let n = m.nrows();
    let mut subsets = Vec::with_capacity((1usize << n) - 1);
    let mut verdict = true;
    for mask in 1usize..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let (margin, u) = s_margin(&select(m, &idx, &idx));
        let ok = margin > S_MARGIN;
        verdict &= ok;
        subsets.push(SubsetWitness { indices: idx, margin, u: ok.then_some(u) });
    }
    CompletelySResult { verdict, subsets }
}

/// Positive diagonal, nonpositive off-diagonal, invertible with `M⁻¹ ≥ 0`.
pub fn check_m_matrix(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if (i == j && v <= 0.0) || (i != j && v > 1e-10) {
                return false;
            }
        }
    }
    match inverse_checked(m) {
        Some(inv) => inv.iter().all(|&v| v >= -1e-10),
        None => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TightVerdict {
    Tight,
    NotTight,
    Undecided,
}

/// Values of `x_A` and `x_A^{(j)}`, indexed by the bit mask of `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct TightWitness {
    pub x: Vec<f64>,
    /// `xj[j][A]`
    pub xj: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TightSystemResult {
    pub verdict: TightVerdict,
    /// The minimizer of the sum of all variables; all ones when tight.
    pub witness: TightWitness,
}

/// Groups indices coupled through a nonzero `R_ij` or `R_ji`.
pub fn coupled_components(r: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = r.nrows();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut i = 0;
        while i < members.len() {
            let a = members[i];
            for b in 0..n {
                if comp[b] == usize::MAX && (r[(a, b)] != 0.0 || r[(b, a)] != 0.0) {
                    comp[b] = id;
                    members.push(b);
                }
            }
            i += 1;
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Decides whether the tight-system constraints force every variable to one.
///
/// Blocks of `R` that do not interact are decided separately, since
/// `x^{(j)}` for `j` outside a block never enters that block's equations.
/// Taken literally over all of `L`, a decoupled `R` such as the identity would
/// leave those cross variables free and never be tight.
pub fn check_tight(r: &DMatrix<f64>, b: &[f64]) -> Result<TightSystemResult> {
    let n = r.nrows();
    if n > MAX_TIGHT_DIM {
        return Err(Error::DimensionTooLarge { dim: n, max: MAX_TIGHT_DIM });
    }
    if b.len() != n || b.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::AnalysisFailed("tight-system check needs a positive b".into()));
    }
    let full = 1usize << n;
    let mut witness = TightWitness { x: vec![1.0; full], xj: vec![vec![1.0; full]; n] };
    let mut verdict = TightVerdict::Tight;
    for comp in coupled_components(r) {
        let (v, x, xj) = tight_component(r, b, &comp);
        match v {
            TightVerdict::Tight => continue,
            TightVerdict::Undecided => verdict = TightVerdict::Undecided,
            TightVerdict::NotTight => {
                if verdict == TightVerdict::Tight {
                    verdict = TightVerdict::NotTight;
                    // lift the block witness: values depend on A ∩ block only,
                    // and x^{(j)} = x for j outside the block
                    for mask in 0..full {
                        let local: usize = comp.iter().enumerate().filter(|(_, &i)| mask >> i & 1 == 1).map(|(l, _)| 1 << l).sum();
                        witness.x[mask] = x[local];
                        for j in 0..n {
                            witness.xj[j][mask] = match comp.iter().position(|&c| c == j) {
                                Some(jl) => xj[jl][local],
                                None => x[local],
                            };
                        }
                    }
                }
            }
        }
    }
    Ok(TightSystemResult { verdict, witness })
}

fn tight_component(r: &DMatrix<f64>, b: &[f64], comp: &[usize]) -> (TightVerdict, Vec<f64>, Vec<Vec<f64>>) {
    let c = comp.len();
    let subsets = 1usize << c;
    let mut lp = Lp::minimize();
    let x: Vec<usize> = (0..subsets).map(|_| lp.var(1.0, 0.0, 1.0)).collect();
    let xj: Vec<Vec<usize>> = (0..c).map(|_| (0..subsets).map(|_| lp.var(1.0, 0.0, 1.0)).collect()).collect();
    lp.constraint(&[(x[0], 1.0)], Cmp::Eq, 1.0);
    for j in 0..c {
        lp.constraint(&[(xj[j][0], 1.0)], Cmp::Eq, 1.0);
    }
    for a in 0..subsets {
        for il in 0..c {
            if a >> il & 1 == 0 {
                // covering pairs A ⊂ A ∪ {i} generate the whole order
                let bigger = a | 1 << il;
                lp.constraint(&[(x[a], 1.0), (x[bigger], -1.0)], Cmp::Ge, 0.0);
                for j in 0..c {
                    lp.constraint(&[(xj[j][a], 1.0), (xj[j][bigger], -1.0)], Cmp::Ge, 0.0);
                }
                continue;
            }
            // i ∈ A
            let i = comp[il];
            let mut row = Vec::with_capacity(2 * c);
            let mut diag = 0.0;
            for (jl, &j) in comp.iter().enumerate() {
                let w = b[j] * r[(i, j)];
                if w != 0.0 {
                    row.push((xj[jl][a], w));
                    diag -= w;
                }
            }
            if diag != 0.0 {
                row.push((x[a], diag));
            }
            if !row.is_empty() {
                lp.constraint(&row, Cmp::Eq, 0.0);
            }
            lp.constraint(&[(xj[il][a], 1.0), (xj[il][a & !(1 << il)], -1.0)], Cmp::Eq, 0.0);
        }
    }
    let total = (subsets * (c + 1)) as f64;
    match lp.solve() {
        LpOutcome::Optimal { x: sol, value } => {
            let xs = sol[..subsets].to_vec();
            let xjs = (0..c).map(|j| sol[subsets * (j + 1)..subsets * (j + 2)].to_vec()).collect();
            let v = if value >= total - 1e-7 { TightVerdict::Tight } else { TightVerdict::NotTight };
            (v, xs, xjs)
        }
        _ => (TightVerdict::Undecided, vec![1.0; subsets], vec![vec![1.0; subsets]; c]),
    }
}

/// Classification of 2×2 tight systems with positive diagonal.
pub fn tight_2x2_rule(r12: f64, r21: f64) -> bool {
    (r12 <= 0.0 && r21 <= 0.0) || (r12 < 0.0 && r21 >= 0.0) || (r12 >= 0.0 && r21 < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    /// Independent check of a witness against every constraint of the
    /// definition, written over full masks.
    fn witness_ok(r: &DMatrix<f64>, b: &[f64], w: &TightWitness) -> bool {
        let n = r.nrows();
        let full = 1usize << n;
        let tol = 1e-9;
        let in01 = |v: f64| (-tol..=1.0 + tol).contains(&v);
        if (w.x[0] - 1.0).abs() > tol || (0..n).any(|j| (w.xj[j][0] - 1.0).abs() > tol) {
            return false;
        }
        for a in 0..full {
            if !in01(w.x[a]) || (0..n).any(|j| !in01(w.xj[j][a])) {
                return false;
            }
            for a2 in 0..full {
                if a & a2 == a && (w.x[a] < w.x[a2] - tol || (0..n).any(|j| w.xj[j][a] < w.xj[j][a2] - tol)) {
                    return false;
                }
            }
            for i in 0..n {
                if a >> i & 1 == 1 {
                    let s: f64 = (0..n).map(|j| b[j] * r[(i, j)] * (w.xj[j][a] - w.x[a])).sum();
                    if s.abs() > tol || (w.xj[i][a] - w.xj[i][a & !(1 << i)]).abs() > tol {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn identity_is_everything() {
        for n in 1..=4 {
            let id = DMatrix::<f64>::identity(n, n);
            assert!(check_m_matrix(&id));
            let s = check_completely_s(&id);
            assert!(s.verdict);
            let t = check_tight(&id, &vec![0.7; n]).unwrap();
            assert_eq!(t.verdict, TightVerdict::Tight);
            assert!(witness_ok(&id, &vec![0.7; n], &t.witness));
        }
    }

    #[test]
    fn small_examples() {
        assert!(!check_completely_s(&m2(-1.0, 0.0, 0.0, 1.0)).verdict);
        assert!(!check_completely_s(&DMatrix::from_element(1, 1, -1.0)).verdict);
        let r = m2(2.5, -1.5, -5.0, 5.0);
        assert!(check_m_matrix(&r));
        assert!(check_completely_s(&r).verdict);
        assert!(!check_m_matrix(&m2(1.0, 0.5, 0.5, 1.0)));
        let t = check_tight(&m2(1.0, 0.5, 0.5, 1.0), &[1.0, 1.0]).unwrap();
        assert_eq!(t.verdict, TightVerdict::NotTight);
        assert!(witness_ok(&m2(1.0, 0.5, 0.5, 1.0), &[1.0, 1.0], &t.witness));
        assert!(t.witness.x.iter().any(|&v| v < 1.0 - 1e-6));
        assert_eq!(check_tight(&m2(1.0, -0.5, 0.2, 1.0), &[1.0, 1.0]).unwrap().verdict, TightVerdict::Tight);
    }

    #[test]
    fn dimension_cap() {
        let id = DMatrix::<f64>::identity(13, 13);
        assert_eq!(check_tight(&id, &[1.0; 13]), Err(Error::DimensionTooLarge { dim: 13, max: 12 }));
    }

    #[test]
    fn three_dim_m_matrix_tight() {
        let r = DMatrix::from_row_slice(3, 3, &[2.0, -0.5, -0.3, -0.4, 1.5, -0.2, -0.1, -0.6, 1.0]);
        assert!(check_m_matrix(&r));
        let b = [0.5, 1.2, 2.0];
        let t = check_tight(&r, &b).unwrap();
        assert_eq!(t.verdict, TightVerdict::Tight);
        assert!(witness_ok(&r, &b, &t.witness));
    }

    fn entry() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), -2.0..2.0f64]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn two_by_two_classification(d1 in 0.1..3.0f64, d2 in 0.1..3.0f64, r12 in entry(), r21 in entry(),
                                     b1 in 0.1..3.0f64, b2 in 0.1..3.0f64) {
            let r = m2(d1, r12, r21, d2);
            let t = check_tight(&r, &[b1, b2]).unwrap();
            prop_assert!(witness_ok(&r, &[b1, b2], &t.witness));
            prop_assert_eq!(t.verdict == TightVerdict::Tight, tight_2x2_rule(r12, r21));
        }

        #[test]
        fn m_matrix_implies_completely_s(n in 1usize..5, seed in proptest::collection::vec(0.0..1.0f64, 25)) {
            // strictly diagonally dominant Z-matrices are M-matrices
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                let mut off = 0.0;
                for j in 0..n {
                    if i != j {
                        m[(i, j)] = -seed[i * 5 + j];
                        off += seed[i * 5 + j];
                    }
                }
                m[(i, i)] = off + 0.05 + seed[i * 5 + i];
            }
            prop_assert!(check_m_matrix(&m));
            prop_assert!(check_completely_s(&m).verdict);
        }
    }
}
