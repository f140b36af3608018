//! Gauss–Legendre quadrature.

use std::sync::OnceLock;

pub const POINTS: usize = 64;

/// Nodes and weights of the 64-point rule on [-1, 1].
pub fn rule() -> &'static ([f64; POINTS], [f64; POINTS]) {
    static RULE: OnceLock<([f64; POINTS], [f64; POINTS])> = OnceLock::new();
    RULE.get_or_init(legendre_rule::<POINTS>)
}

fn legendre_rule<const N: usize>() -> ([f64; N], [f64; N]) {
    let mut x = [0.0; N];
    let mut w = [0.0; N];
    let n = N as f64;
    for i in 0..N.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_N(z) and its derivative
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=N {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[N - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[N - 1 - i] = wi;
    }
    (x, w)
}

/// Composite rule over `[a, b]` with panels no longer than `panel`; `f` returns
/// several integrands at once.
pub fn integrate<const M: usize>(a: f64, b: f64, panel: f64, mut f: impl FnMut(f64) -> [f64; M]) -> [f64; M] {
    let mut acc = [0.0; M];
    if b <= a {
        return acc;
    }
    let (x, w) = rule();
    let panels = ((b - a) / panel).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for i in 0..POINTS {
            let v = f(mid + 0.5 * h * x[i]);
            for m in 0..M {
                acc[m] += 0.5 * h * w[i] * v[m];
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let (_, w) = rule();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_on_high_degree_polynomials() {
        let [v] = integrate(0.0, 1.0, 1.0, |x| [x.powi(100)]);
        assert!((v - 1.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn composite_exponential() {
        let [v] = integrate(0.0, 40.0, 4.0, |x| [(-x).exp()]);
        assert!((v - (1.0 - (-40.0f64).exp())).abs() < 1e-14);
    }
}
