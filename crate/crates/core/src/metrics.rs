//! Top-k ranking metrics against a binary gold set.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::UserId;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("k must be at least 1")]
    ZeroK,
}

pub const DEFAULT_KS: [usize; 2] = [5, 10];

fn check(gold: &HashSet<&UserId>, k: usize) -> Result<(), MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::EmptyGold);
    }
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    Ok(())
}

fn gold_set(gold: &[UserId]) -> HashSet<&UserId> {
    gold.iter().collect()
}

fn hits(ranking: &[UserId], gold: &HashSet<&UserId>, k: usize) -> usize {
    ranking.iter().take(k).filter(|u| gold.contains(u)).count()
}

/// (precision, recall) at `k`. Rankings shorter than `k` still divide by `k`.
pub fn precision_recall_at_k(ranking: &[UserId], gold: &[UserId], k: usize) -> Result<(f64, f64), MetricsError> {
    let g = gold_set(gold);
    check(&g, k)?;
    let h = hits(ranking, &g, k) as f64;
    Ok((h / k as f64, h / g.len() as f64))
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-relevance NDCG with a `1 / log2(rank + 1)` discount.
pub fn ndcg_at_k(ranking: &[UserId], gold: &[UserId], k: usize) -> Result<f64, MetricsError> {
    let g = gold_set(gold);
    check(&g, k)?;
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, u)| g.contains(u))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=k.min(g.len())).map(discount).sum();
    Ok(dcg / idcg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub at: BTreeMap<usize, AtK>,
    pub gold_size: usize,
}

pub fn evaluate(ranking: &[UserId], gold: &[UserId], ks: &[usize]) -> Result<EvalReport, MetricsError> {
    let mut at = BTreeMap::new();
    for &k in ks {
        let (precision, recall) = precision_recall_at_k(ranking, gold, k)?;
        at.insert(
            k,
            AtK {
                precision,
                recall,
                ndcg: ndcg_at_k(ranking, gold, k)?,
            },
        );
    }
    Ok(EvalReport {
        at,
        gold_size: gold_set(gold).len(),
    })
}

impl EvalReport {
    /// Plain-text table with one row per method, two decimals.
    pub fn table(rows: &[(&str, &EvalReport)]) -> String {
        let ks: Vec<usize> = rows
            .first()
            .map(|(_, r)| r.at.keys().copied().collect())
            .unwrap_or_default();
        let mut header = format!("{:<16}", "method");
        for k in &ks {
            header.push_str(&format!(" {:>7} {:>7} {:>7}", format!("P@{k}"), format!("R@{k}"), format!("G@{k}")));
        }
        let mut out = header;
        out.push('\n');
        for (name, r) in rows {
            out.push_str(&format!("{name:<16}"));
            for k in &ks {
                let m = r.at[k];
                out.push_str(&format!(" {:>7.2} {:>7.2} {:>7.2}", m.precision, m.recall, m.ndcg));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<UserId> {
        (0..n).map(|i| UserId::new(format!("{prefix}{i}"))).collect()
    }

    /// Ranking of length `len` with gold members at the given 1-based ranks.
    fn ranking_with_hits(len: usize, hit_ranks: &[usize], gold: &[UserId]) -> Vec<UserId> {
        let mut gi = gold.iter();
        (1..=len)
            .map(|r| {
                if hit_ranks.contains(&r) {
                    gi.next().unwrap().clone()
                } else {
                    UserId::new(format!("miss{r}"))
                }
            })
            .collect()
    }

    #[test]
    fn three_hits_in_top_five_of_six() {
        let gold = ids("g", 6);
        let r = ranking_with_hits(10, &[1, 3, 4], &gold);
        let (p, rec) = precision_recall_at_k(&r, &gold, 5).unwrap();
        assert_abs_diff_eq!(p, 0.60, epsilon = 1e-12);
        assert_abs_diff_eq!(rec, 0.50, epsilon = 1e-12);
    }

    #[test]
    fn eight_hits_in_top_ten_of_ten() {
        let gold = ids("g", 10);
        let r = ranking_with_hits(10, &[1, 2, 3, 4, 5, 6, 8, 10], &gold);
        let (p, rec) = precision_recall_at_k(&r, &gold, 10).unwrap();
        assert_abs_diff_eq!(p, 0.80, epsilon = 1e-12);
        assert_abs_diff_eq!(rec, 0.80, epsilon = 1e-12);
    }

    #[test]
    fn misses_score_zero() {
        let gold = ids("g", 3);
        let r = ids("x", 10);
        assert_eq!(precision_recall_at_k(&r, &gold, 5).unwrap(), (0.0, 0.0));
        assert_eq!(ndcg_at_k(&r, &gold, 5).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let gold = ids("g", 2);
        let r = ranking_with_hits(5, &[1, 2], &gold);
        assert_abs_diff_eq!(ndcg_at_k(&r, &gold, 5).unwrap(), 1.0, epsilon = 1e-12);
        let gold = ids("g", 1);
        let r = ranking_with_hits(5, &[2], &gold);
        assert_abs_diff_eq!(ndcg_at_k(&r, &gold, 5).unwrap(), 1.0 / 3f64.log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(ndcg_at_k(&r, &gold, 5).unwrap(), 0.6309, epsilon = 1e-4);
    }

    #[test]
    fn empty_gold_and_zero_k_are_errors() {
        assert_eq!(precision_recall_at_k(&ids("x", 3), &[], 5), Err(MetricsError::EmptyGold));
        assert_eq!(ndcg_at_k(&ids("x", 3), &ids("x", 1), 0), Err(MetricsError::ZeroK));
    }

    #[test]
    fn table_has_two_decimals() {
        let gold = ids("g", 6);
        let r = ranking_with_hits(10, &[1, 3, 4], &gold);
        let rep = evaluate(&r, &gold, &DEFAULT_KS).unwrap();
        let t = EvalReport::table(&[("TIS", &rep)]);
        assert!(t.contains("P@5"));
        assert!(t.lines().nth(1).unwrap().contains("0.60"));
    }

    fn case() -> impl Strategy<Value = (Vec<UserId>, Vec<UserId>, usize)> {
        (1usize..8, 1usize..15, proptest::collection::vec(any::<bool>(), 15)).prop_map(|(g, k, mask)| {
            let gold = ids("g", g);
            let mut gi = 0;
            let ranking = mask
                .iter()
                .enumerate()
                .map(|(i, &hit)| {
                    if hit && gi < g {
                        gi += 1;
                        UserId::new(format!("g{}", gi - 1))
                    } else {
                        UserId::new(format!("m{i}"))
                    }
                })
                .collect();
            (ranking, gold, k)
        })
    }

    proptest! {
        #[test]
        fn values_are_bounded_and_integral((ranking, gold, k) in case()) {
            let (p, r) = precision_recall_at_k(&ranking, &gold, k).unwrap();
            let n = ndcg_at_k(&ranking, &gold, k).unwrap();
            for v in [p, r, n] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
            prop_assert!(((p * k as f64) - (p * k as f64).round()).abs() < 1e-9);
            prop_assert!(((r * gold.len() as f64) - (r * gold.len() as f64).round()).abs() < 1e-9);
            let (_, r_next) = precision_recall_at_k(&ranking, &gold, k + 1).unwrap();
            prop_assert!(r_next >= r);
            let ideal = ranking.iter().take(k.min(gold.len())).all(|u| gold.contains(u));
            prop_assert_eq!((n - 1.0).abs() < 1e-12, ideal);
        }

        #[test]
        fn promoting_a_hit_never_lowers_ndcg((ranking, gold, k) in case(), i in 1usize..15) {
            let before = ndcg_at_k(&ranking, &gold, k).unwrap();
            if gold.contains(&ranking[i]) && !gold.contains(&ranking[i - 1]) {
                let mut better = ranking.clone();
                better.swap(i, i - 1);
                prop_assert!(ndcg_at_k(&better, &gold, k).unwrap() >= before - 1e-12);
            }
        }
    }
}
