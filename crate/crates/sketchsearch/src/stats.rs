//! Exact significance tests for capture ratios.
//!
//! Two arms with `k1/n1` and `k2/n2` captures are compared with Fisher's
//! exact test: conditioning on the total number of captures, the captures in
//! arm 1 follow a hypergeometric law under the null of equal ratios.

use statrs::distribution::{Discrete, DiscreteCDF, Hypergeometric};

fn null_law(k1: u64, n1: u64, k2: u64, n2: u64) -> Hypergeometric {
    assert!(k1 <= n1 && k2 <= n2, "captures cannot exceed trials");
    Hypergeometric::new(n1 + n2, k1 + k2, n1).expect("valid hypergeometric parameters")
}

/// One-sided p-value for "arm 1 captures more often than arm 2".
///
/// Returns `P(X ≥ k1)` under the null. When nothing separates the arms
/// (for example 0/10 vs 0/10) every table is as extreme as the observed one
/// and the p-value is 1.
pub fn binomial_test(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    let law = null_law(k1, n1, k2, n2);
    let p = if k1 == 0 { 1.0 } else { law.sf(k1 - 1) };
    p.clamp(0.0, 1.0)
}

/// Two-sided p-value: total probability of tables no more likely than the
/// observed one.
pub fn binomial_test_two_sided(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    let law = null_law(k1, n1, k2, n2);
    let lo = (k1 + k2).saturating_sub(n2);
    let hi = (k1 + k2).min(n1);
    let observed = law.pmf(k1);
    let p: f64 = (lo..=hi).map(|x| law.pmf(x)).filter(|p| *p <= observed * (1.0 + 1e-7)).sum();
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hypergeometric tail by direct enumeration of binomial coefficients
    /// in log space, independent of the distribution library.
    fn ln_choose(n: u64, k: u64) -> f64 {
        (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
    }

    fn oracle_tail(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
        let total = k1 + k2;
        let denom = ln_choose(n1 + n2, total);
        (k1..=total.min(n1))
            .filter(|x| total - x <= n2)
            .map(|x| (ln_choose(n1, x) + ln_choose(n2, total - x) - denom).exp())
            .sum()
    }

    #[test]
    fn equal_ratios_are_not_significant() {
        for (k, n) in [(5, 10), (50, 100), (0, 7), (30, 30), (1, 3)] {
            assert!(binomial_test(k, n, k, n) >= 0.5, "{k}/{n}");
        }
    }

    #[test]
    fn strong_effect_matches_enumeration() {
        let p = binomial_test(90, 100, 50, 100);
        assert!(p < 0.001, "p = {p}");
        let oracle = oracle_tail(90, 100, 50, 100);
        assert!((p - oracle).abs() <= 1e-9 + 1e-6 * oracle, "{p} vs {oracle}");
    }

    #[test]
    fn matches_enumeration_over_a_grid() {
        for n1 in [5u64, 12, 30] {
            for n2 in [4u64, 12, 25] {
                for k1 in 0..=n1 {
                    for k2 in (0..=n2).step_by(3) {
                        let p = binomial_test(k1, n1, k2, n2);
                        let o = if k1 == 0 { 1.0 } else { oracle_tail(k1, n1, k2, n2) };
                        assert!((p - o).abs() < 1e-9, "{k1}/{n1} vs {k2}/{n2}: {p} vs {o}");
                    }
                }
            }
        }
    }

    #[test]
    fn no_captures_anywhere_gives_one() {
        assert_eq!(binomial_test(0, 10, 0, 10), 1.0);
        assert_eq!(binomial_test_two_sided(0, 10, 0, 10), 1.0);
    }

    #[test]
    fn two_sided_is_symmetric_and_bounded() {
        let a = binomial_test_two_sided(20, 50, 30, 50);
        let b = binomial_test_two_sided(30, 50, 20, 50);
        assert!((a - b).abs() < 1e-12);
        assert!(a > binomial_test(30, 50, 20, 50));
        assert!(binomial_test_two_sided(25, 50, 25, 50) > 0.99);
        // Known value: 8/10 vs 2/10 has two-sided Fisher p = 0.02301.
        assert!((binomial_test_two_sided(8, 10, 2, 10) - 0.023014).abs() < 1e-5);
    }

    #[test]
    #[should_panic]
    fn more_captures_than_trials_panics() {
        binomial_test(11, 10, 0, 10);
    }
}
