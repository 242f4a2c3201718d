//! Summary statistics for comparing policies across seeds.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: mean(xs), sd: sd(xs) }
    }
}

/// Result of a one-sided Wilcoxon signed-rank test that `x` tends to be
/// below `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences x − y.
    pub w_plus: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Ranks of |d| with ties sharing their average rank.
fn abs_ranks(d: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Paired test of H1: x < y. Zero differences are dropped. Exact by
/// enumerating sign patterns up to 20 pairs, normal approximation beyond.
pub fn wilcoxon_signed_rank_less(x: &[f64], y: &[f64]) -> WilcoxonResult {
    assert_eq!(x.len(), y.len());
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return WilcoxonResult {
            w_plus: 0.0,
            n,
            p_value: 1.0,
            exact: true,
        };
    }
    let ranks = abs_ranks(&d);
    let w_plus = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .fold(0.0, |acc, (_, r)| acc + r);
    if n <= 20 {
        // P(W+ ≤ observed) under random signs; ranks may be half-integers
        let mut at_most = 0u64;
        for mask in 0u64..(1 << n) {
            let w = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .fold(0.0, |acc, i| acc + ranks[i]);
            if w <= w_plus + 1e-9 {
                at_most += 1;
            }
        }
        WilcoxonResult {
            w_plus,
            n,
            p_value: at_most as f64 / (1u64 << n) as f64,
            exact: true,
        }
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        let z = (w_plus - mu + 0.5) / var.sqrt();
        WilcoxonResult {
            w_plus,
            n,
            p_value: Normal::standard().cdf(z),
            exact: false,
        }
    }
}

/// Mean of x − y with a two-sided t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

pub fn paired_difference_ci(x: &[f64], y: &[f64], level: f64) -> PairedDifference {
    assert_eq!(x.len(), y.len());
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let m = mean(&d);
    if d.len() < 2 {
        return PairedDifference {
            mean: m,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            level,
        };
    }
    let se = sd(&d) / (d.len() as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (d.len() - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    PairedDifference {
        mean: m,
        lower: m - t * se,
        upper: m + t * se,
        level,
    }
}
