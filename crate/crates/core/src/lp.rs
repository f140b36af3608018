//! Dense two-phase simplex for the small linear programs of the matrix
//! checkers. Bland's rule keeps the highly degenerate tight-system programs
//! from cycling.

const EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

type Row = (Vec<(usize, f64)>, Cmp, f64);

/// `min/max cᵀx` subject to sparse rows and per-variable bounds.
#[derive(Clone, Debug, Default)]
pub struct Lp {
    lower: Vec<f64>,
    upper: Vec<f64>,
    obj: Vec<f64>,
    rows: Vec<Row>,
    maximize: bool,
}

impl Lp {
    pub fn minimize() -> Self {
        Self::default()
    }

    pub fn maximize() -> Self {
        Self { maximize: true, ..Self::default() }
    }

    /// Adds a variable with objective coefficient `c` and bounds `[lo, hi]`
    /// (infinite bounds allowed); returns its index.
    pub fn var(&mut self, c: f64, lo: f64, hi: f64) -> usize {
        self.obj.push(c);
        self.lower.push(lo);
        self.upper.push(hi);
        self.obj.len() - 1
    }

    pub fn constraint(&mut self, terms: &[(usize, f64)], cmp: Cmp, rhs: f64) {
        self.rows.push((terms.to_vec(), cmp, rhs));
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn solve(&self) -> LpOutcome {
        // x_i = shift_i + sign_i * y_a  (- y_b for free variables), y >= 0
        let n = self.obj.len();
        let mut map: Vec<(f64, Vec<(usize, f64)>)> = Vec::with_capacity(n);
        let mut ny = 0;
        let mut rows: Vec<(Vec<f64>, Cmp, f64)> = Vec::new();
        let mut upper_rows = Vec::new();
        for i in 0..n {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if lo.is_finite() {
                map.push((lo, vec![(ny, 1.0)]));
                if hi.is_finite() {
                    upper_rows.push((ny, hi - lo));
                }
                ny += 1;
            } else if hi.is_finite() {
                map.push((hi, vec![(ny, -1.0)]));
                ny += 1;
            } else {
                map.push((0.0, vec![(ny, 1.0), (ny + 1, -1.0)]));
                ny += 2;
            }
        }
        for (terms, cmp, rhs) in &self.rows {
            let mut a = vec![0.0; ny];
            let mut b = *rhs;
            for &(i, v) in terms {
                b -= v * map[i].0;
                for &(y, s) in &map[i].1 {
                    a[y] += v * s;
                }
            }
            rows.push((a, *cmp, b));
        }
        for (y, cap) in upper_rows {
            let mut a = vec![0.0; ny];
            a[y] = 1.0;
            rows.push((a, Cmp::Le, cap));
        }
        let sign = if self.maximize { -1.0 } else { 1.0 };
        let mut c = vec![0.0; ny];
        let mut offset = 0.0;
        for i in 0..n {
            offset += self.obj[i] * map[i].0;
            for &(y, s) in &map[i].1 {
                c[y] += sign * self.obj[i] * s;
            }
        }
        match simplex(&rows, &c) {
            Standard::Optimal(y) => {
                let x: Vec<f64> = (0..n).map(|i| map[i].0 + map[i].1.iter().map(|&(j, s)| s * y[j]).sum::<f64>()).collect();
                let value = offset + (0..n).map(|i| self.obj[i] * (x[i] - map[i].0)).sum::<f64>();
                LpOutcome::Optimal { x, value }
            }
            Standard::Infeasible => LpOutcome::Infeasible,
            Standard::Unbounded => LpOutcome::Unbounded,
        }
    }
}

enum Standard {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

struct Tableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize, obj: &mut [f64], obj_val: &mut f64) {
        let p = self.a[r][col];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        self.b[r] /= p;
        let pivot_row = self.a[r].clone();
        let pb = self.b[r];
        for i in 0..self.a.len() {
            if i != r {
                let f = self.a[i][col];
                if f != 0.0 {
                    for (v, pv) in self.a[i].iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                    self.b[i] -= f * pb;
                }
            }
        }
        let f = obj[col];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            *obj_val -= f * pb;
        }
        self.basis[r] = col;
    }

    /// Minimizes the objective whose reduced costs are in `obj` over the
    /// columns `allowed`; returns false if unbounded.
    fn run(&mut self, obj: &mut [f64], obj_val: &mut f64, allowed: usize) -> bool {
        loop {
            let Some(col) = (0..allowed).find(|&j| obj[j] < -EPS) else {
                return true;
            };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..self.a.len() {
                let v = self.a[i][col];
                if v > EPS {
                    let ratio = self.b[i] / v;
                    best = match best {
                        None => Some((ratio, i)),
                        Some((br, bi)) => {
                            if ratio < br - EPS || (ratio <= br + EPS && self.basis[i] < self.basis[bi]) {
                                Some((ratio, i))
                            } else {
                                Some((br, bi))
                            }
                        }
                    };
                }
            }
            let Some((_, r)) = best else {
                return false;
            };
            self.pivot(r, col, obj, obj_val);
        }
    }
}

/// Minimizes `cᵀy` subject to `rows`, `y >= 0`.
fn simplex(rows: &[(Vec<f64>, Cmp, f64)], c: &[f64]) -> Standard {
    let ny = c.len();
    let m = rows.len();
    let slacks = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
    let n_art = m;
    let width = ny + slacks + n_art;
    let mut t = Tableau { a: vec![vec![0.0; width]; m], b: vec![0.0; m], basis: vec![0; m] };
    let mut s = ny;
    for (i, (a, cmp, rhs)) in rows.iter().enumerate() {
        let flip = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for j in 0..ny {
            t.a[i][j] = flip * a[j];
        }
        match cmp {
            Cmp::Le => {
                t.a[i][s] = flip;
                s += 1;
            }
            Cmp::Ge => {
                t.a[i][s] = -flip;
                s += 1;
            }
            Cmp::Eq => {}
        }
        t.b[i] = flip * rhs;
        let art = ny + slacks + i;
        t.a[i][art] = 1.0;
        t.basis[i] = art;
    }
    // phase one: minimize the sum of artificials
    let mut obj = vec![0.0; width];
    let mut val = 0.0;
    for j in ny + slacks..width {
        obj[j] = 1.0;
    }
    for i in 0..m {
        for j in 0..width {
            obj[j] -= t.a[i][j];
        }
        val -= t.b[i];
    }
    t.run(&mut obj, &mut val, ny + slacks);
    if -val > 1e-8 * (1.0 + t.b.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
        return Standard::Infeasible;
    }
    // drive zero-level artificials out of the basis or drop their rows
    let mut i = 0;
    while i < t.a.len() {
        if t.basis[i] >= ny + slacks {
            if let Some(col) = (0..ny + slacks).find(|&j| t.a[i][j].abs() > EPS) {
                t.pivot(i, col, &mut obj, &mut val);
            } else {
                t.a.remove(i);
                t.b.remove(i);
                t.basis.remove(i);
                continue;
            }
        }
        i += 1;
    }
    // phase two
    let mut obj = vec![0.0; width];
    obj[..ny].copy_from_slice(c);
    let mut val = 0.0;
    for i in 0..t.a.len() {
        let cb = obj[t.basis[i]];
        if cb != 0.0 {
            let row = t.a[i].clone();
            for j in 0..width {
                obj[j] -= cb * row[j];
            }
            val -= cb * t.b[i];
        }
    }
    if !t.run(&mut obj, &mut val, ny + slacks) {
        return Standard::Unbounded;
    }
    let mut y = vec![0.0; ny];
    for (i, &bcol) in t.basis.iter().enumerate() {
        if bcol < ny {
            y[bcol] = t.b[i];
        }
    }
    Standard::Optimal(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimum(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = Lp::maximize();
        let x = lp.var(3.0, 0.0, f64::INFINITY);
        let y = lp.var(5.0, 0.0, f64::INFINITY);
        lp.constraint(&[(x, 1.0)], Cmp::Le, 4.0);
        lp.constraint(&[(y, 2.0)], Cmp::Le, 12.0);
        lp.constraint(&[(x, 3.0), (y, 2.0)], Cmp::Le, 18.0);
        let (v, val) = optimum(lp.solve());
        assert!((v[0] - 2.0).abs() < 1e-9 && (v[1] - 6.0).abs() < 1e-9 && (val - 36.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_free_and_equalities() {
        // min x + y, x - y = -3, x in [-5, 5], y free, y <= 10 -> x = -5, y = -2
        let mut lp = Lp::minimize();
        let x = lp.var(1.0, -5.0, 5.0);
        let y = lp.var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.constraint(&[(x, 1.0), (y, -1.0)], Cmp::Eq, -3.0);
        lp.constraint(&[(y, 1.0)], Cmp::Le, 10.0);
        let (v, val) = optimum(lp.solve());
        assert!((v[0] + 5.0).abs() < 1e-9 && (v[1] + 2.0).abs() < 1e-9 && (val + 7.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = Lp::minimize();
        let x = lp.var(1.0, 0.0, 1.0);
        lp.constraint(&[(x, 1.0)], Cmp::Ge, 2.0);
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
        let mut lp = Lp::maximize();
        let x = lp.var(1.0, 0.0, f64::INFINITY);
        lp.constraint(&[(x, -1.0)], Cmp::Le, 1.0);
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }
}
