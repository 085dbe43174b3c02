//! Pair-counting agreement between two partitions.

use std::collections::HashMap;
use std::hash::Hash;

use crate::{Error, Result};

/// Pair counts over all `C(W, 2)` unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// Together in both partitions.
    pub a: u64,
    /// Apart in both.
    pub b: u64,
    /// Together in the truth only.
    pub c: u64,
    /// Together in the prediction only.
    pub d: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Contingency table of `pred` against `truth`, as
/// (cell counts, prediction marginals, truth marginals).
struct Contingency {
    cells: Vec<u64>,
    pred: Vec<u64>,
    truth: Vec<u64>,
}

fn contingency<P: Eq + Hash, T: Eq + Hash>(pred: &[P], truth: &[T]) -> Result<Contingency> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            context: "label vectors".into(),
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 labelled points, got {}",
            pred.len()
        )));
    }
    let mut pred_ids: HashMap<&P, usize> = HashMap::new();
    let mut truth_ids: HashMap<&T, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    for (p, t) in pred.iter().zip(truth) {
        let next = pred_ids.len();
        let pi = *pred_ids.entry(p).or_insert(next);
        let next = truth_ids.len();
        let ti = *truth_ids.entry(t).or_insert(next);
        *cells.entry((pi, ti)).or_insert(0) += 1;
    }
    let mut pred_m = vec![0; pred_ids.len()];
    let mut truth_m = vec![0; truth_ids.len()];
    for (&(p, t), &n) in &cells {
        pred_m[p] += n;
        truth_m[t] += n;
    }
    Ok(Contingency {
        cells: cells.into_values().collect(),
        pred: pred_m,
        truth: truth_m,
    })
}

pub fn pair_counts<P: Eq + Hash, T: Eq + Hash>(pred: &[P], truth: &[T]) -> Result<PairCounts> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as u64;
    let a: u64 = table.cells.iter().map(|&c| choose2(c)).sum();
    let together_pred: u64 = table.pred.iter().map(|&c| choose2(c)).sum();
    let together_truth: u64 = table.truth.iter().map(|&c| choose2(c)).sum();
    let c = together_truth - a;
    let d = together_pred - a;
    let b = choose2(n) - a - c - d;
    Ok(PairCounts { a, b, c, d })
}

/// `(a + b) / C(W, 2)`.
pub fn rand_index<P: Eq + Hash, T: Eq + Hash>(pred: &[P], truth: &[T]) -> Result<f64> {
    let pc = pair_counts(pred, truth)?;
    Ok((pc.a + pc.b) as f64 / pc.total() as f64)
}

/// Hubert–Arabie adjusted Rand index.
///
/// When the expected index equals its maximum (e.g. both partitions are a
/// single cluster) the value is 1.0 for identical partitions and 0.0
/// otherwise.
pub fn adjusted_rand_index<P: Eq + Hash, T: Eq + Hash>(pred: &[P], truth: &[T]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as u64;
    let index = table.cells.iter().map(|&c| choose2(c)).sum::<u64>() as f64;
    let sum_pred = table.pred.iter().map(|&c| choose2(c)).sum::<u64>() as f64;
    let sum_truth = table.truth.iter().map(|&c| choose2(c)).sum::<u64>() as f64;
    let expected = sum_pred * sum_truth / choose2(n) as f64;
    let max = 0.5 * (sum_pred + sum_truth);
    let denom = max - expected;
    if denom == 0.0 {
        let identical = table.cells.len() == table.pred.len() && table.cells.len() == table.truth.len();
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_partitions() {
        let p = [1, 1, 2, 2, 3];
        assert_eq!(rand_index(&p, &p).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&p, &p).unwrap(), 1.0);
        let relabelled = ["x", "x", "y", "y", "z"];
        assert_eq!(adjusted_rand_index(&p, &relabelled).unwrap(), 1.0);
    }

    #[test]
    fn crossed_partition_by_hand() {
        let pred = [1, 1, 2, 2];
        let truth = [1, 2, 1, 2];
        let pc = pair_counts(&pred, &truth).unwrap();
        assert_eq!(pc, PairCounts { a: 0, b: 2, c: 2, d: 2 });
        assert!((rand_index(&pred, &truth).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        // sum_pred = sum_truth = 2, expected = 4/6, max = 2 → (0 − 2/3)/(4/3)
        assert!((adjusted_rand_index(&pred, &truth).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_denominator() {
        assert_eq!(adjusted_rand_index(&[1, 1, 1], &[5, 5, 5]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        // not degenerate: sum_pred = 0, expected = 0, max = 1.5
        assert_eq!(adjusted_rand_index(&[1, 2, 3], &[1, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(rand_index(&[1, 2], &[1]), Err(Error::LengthMismatch { .. })));
        assert!(adjusted_rand_index(&[1], &[1]).is_err());
    }
}
