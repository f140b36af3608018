//! Batch-means estimation for ratio estimators.

use serde::Serialize;

/// A point estimate with its batch-means standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub batches: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, batches: 0 }
    }

    /// `|value - target| ≤ max(k·se, floor)`
    pub fn within(&self, target: f64, k: f64, floor: f64) -> bool {
        (self.value - target).abs() <= (k * self.std_error).max(floor)
    }
}

/// Per-batch numerators and denominators of `Σ num / Σ den`.
///
/// For time averages the denominator is the batch length; for event
/// averages it is the batch event count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchSeries {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl BatchSeries {
    pub fn with_batches(b: usize) -> Self {
        Self { num: vec![0.0; b], den: vec![0.0; b] }
    }

    pub fn from_parts(num: Vec<f64>, den: Vec<f64>) -> Self {
        assert_eq!(num.len(), den.len());
        Self { num, den }
    }

    pub fn len(&self) -> usize {
        self.num.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num.is_empty()
    }

    /// Appends the batches of `other`; associative, so replications can be
    /// pooled in any grouping.
    pub fn merge(&mut self, other: &BatchSeries) {
        self.num.extend_from_slice(&other.num);
        self.den.extend_from_slice(&other.den);
    }

    pub fn total_den(&self) -> f64 {
        self.den.iter().sum()
    }

    /// Ratio estimate with the linearized batch-means standard error.
    pub fn estimate(&self) -> Option<Estimate> {
        let b = self.num.len();
        let den: f64 = self.den.iter().sum();
        if b == 0 || den <= 0.0 {
            return None;
        }
        let value = self.num.iter().sum::<f64>() / den;
        let std_error = if b > 1 {
            let mean_den = den / b as f64;
            let ss: f64 = self.num.iter().zip(&self.den).map(|(n, d)| (n - value * d).powi(2)).sum();
            (ss / (b as f64 * (b as f64 - 1.0))).sqrt() / mean_den
        } else {
            f64::NAN
        };
        Some(Estimate { value, std_error, batches: b })
    }

    /// Elementwise `a·self + b·other` over matching batches.
    pub fn combine(&self, a: f64, other: &BatchSeries, b: f64) -> BatchSeries {
        assert_eq!(self.len(), other.len());
        BatchSeries {
            num: self.num.iter().zip(&other.num).map(|(x, y)| a * x + b * y).collect(),
            den: self.den.clone(),
        }
    }
}

/// Standard error of a difference of two independent estimates.
pub fn pooled_se(a: &Estimate, b: &Estimate) -> f64 {
    (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

/// Mean and standard error of independent replicate values.
pub fn replicate_mean(values: &[f64]) -> Estimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ((n - 1) * n) as f64).sqrt()
    } else {
        f64::NAN
    };
    Estimate { value: mean, std_error: se, batches: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iid_batches_give_textbook_se() {
        let s = BatchSeries::from_parts(vec![1.0, 2.0, 3.0, 4.0], vec![1.0; 4]);
        let e = s.estimate().unwrap();
        assert_eq!(e.value, 2.5);
        // sample sd of 1..4 is sqrt(5/3), se = sd / 2
        assert!((e.std_error - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn merge_is_associative(a in proptest::collection::vec((0.0..10.0f64, 0.1..2.0f64), 1..6),
                                b in proptest::collection::vec((0.0..10.0f64, 0.1..2.0f64), 1..6),
                                c in proptest::collection::vec((0.0..10.0f64, 0.1..2.0f64), 1..6)) {
            let mk = |v: &Vec<(f64, f64)>| BatchSeries::from_parts(v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.1).collect());
            let (sa, sb, sc) = (mk(&a), mk(&b), mk(&c));
            let mut left = sa.clone();
            left.merge(&sb);
            left.merge(&sc);
            let mut bc = sb.clone();
            bc.merge(&sc);
            let mut right = sa.clone();
            right.merge(&bc);
            prop_assert_eq!(&left, &right);
            let all: Vec<(f64, f64)> = a.iter().chain(&b).chain(&c).copied().collect();
            prop_assert_eq!(left, mk(&all));
        }
    }
}
