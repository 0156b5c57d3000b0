#![allow(dead_code)]

use std::collections::BTreeMap;

use modbias::benefit::Coalition;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values from the subset-weight formula
/// `|S|! (n - |S| - 1)! / n! * (v(S + i) - v(S))`, summed over `S` not
/// containing `i`.
pub fn shapley_oracle(v: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(v.len(), 1 << n);
    let total = factorial(n);
    (0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..1usize << n)
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    factorial(size) * factorial(n - size - 1) / total * (v[s | bit] - v[s])
                })
                .sum()
        })
        .collect()
}

/// Benefit table `V(S) = |S|` if correct on `S`, else 0, indexed by mask.
pub fn benefit_table(correct: &[bool]) -> Vec<f64> {
    correct
        .iter()
        .enumerate()
        .map(|(mask, &ok)| if mask != 0 && ok { (mask as u32).count_ones() as f64 } else { 0.0 })
        .collect()
}

pub fn as_coalitions(v: &[f64]) -> BTreeMap<Coalition, f64> {
    v.iter().enumerate().map(|(m, &x)| (Coalition(m as u16), x)).collect()
}

/// Nominal alpha by direct pair counting: observed disagreement within
/// units over expected disagreement across all pairable values.
pub fn alpha_oracle<L: PartialEq + Clone>(labels: &[Vec<Option<L>>]) -> f64 {
    let units = labels[0].len();
    let mut pooled: Vec<L> = Vec::new();
    let mut observed = 0.0;
    for u in 0..units {
        let values: Vec<L> = labels.iter().filter_map(|row| row[u].clone()).collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        let mut disagree = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j && values[i] != values[j] {
                    disagree += 1.0;
                }
            }
        }
        observed += disagree / (m - 1) as f64;
        pooled.extend(values);
    }
    let n = pooled.len() as f64;
    let mut expected = 0.0;
    for i in 0..pooled.len() {
        for j in 0..pooled.len() {
            if i != j && pooled[i] != pooled[j] {
                expected += 1.0;
            }
        }
    }
    if expected == 0.0 {
        return 1.0;
    }
    1.0 - (observed / n) / (expected / (n * (n - 1.0)))
}
