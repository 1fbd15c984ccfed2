//! Two-sample and goodness-of-fit tests used to compare path ensembles.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Categories whose pooled expected count falls below this are merged.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

#[derive(Clone, Debug, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom (chi-squared) or effective sample size (KS).
    pub dof: f64,
}

impl TestOutcome {
    /// A test with nothing to compare (e.g. both samples in one category).
    fn degenerate() -> Self {
        Self {
            statistic: 0.0,
            p_value: 1.0,
            dof: 0.0,
        }
    }
}

fn chi2_sf(statistic: f64, dof: f64) -> f64 {
    if dof < 1.0 {
        return 1.0;
    }
    ChiSquared::new(dof)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN)
}

/// Chi-squared test of homogeneity between two categorical samples given as
/// count maps. Sparse categories are pooled until every expected count is at
/// least [`MIN_EXPECTED_COUNT`].
pub fn chi2_two_sample<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> TestOutcome {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return TestOutcome::degenerate();
    }
    let keys: Vec<K> = a.keys().chain(b.keys()).cloned().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut rows: Vec<(f64, f64)> = keys
        .iter()
        .map(|k| {
            (
                *a.get(k).unwrap_or(&0) as f64,
                *b.get(k).unwrap_or(&0) as f64,
            )
        })
        .collect();
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let min_share = na.min(nb) / n;
    // pool the smallest categories into one bin
    rows.sort_by(|x, y| (x.0 + x.1).total_cmp(&(y.0 + y.1)));
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (i, &(ca, cb)) in rows.iter().enumerate() {
        acc.0 += ca;
        acc.1 += cb;
        let remaining: f64 = rows[i + 1..].iter().map(|r| r.0 + r.1).sum();
        if (acc.0 + acc.1) * min_share >= MIN_EXPECTED_COUNT {
            pooled.push(acc);
            acc = (0.0, 0.0);
        } else if remaining == 0.0 {
            match pooled.last_mut() {
                Some(last) => {
                    last.0 += acc.0;
                    last.1 += acc.1;
                }
                None => pooled.push(acc),
            }
            acc = (0.0, 0.0);
        }
    }
    if pooled.len() < 2 {
        return TestOutcome::degenerate();
    }
    let mut stat = 0.0;
    for &(ca, cb) in &pooled {
        let total = ca + cb;
        let ea = total * na / n;
        let eb = total * nb / n;
        stat += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
    }
    let dof = (pooled.len() - 1) as f64;
    TestOutcome {
        statistic: stat,
        p_value: chi2_sf(stat, dof),
        dof,
    }
}

/// Chi-squared goodness of fit of observed counts against exact category
/// probabilities. Categories are pooled (smallest expected first) until each
/// pooled bin expects at least [`MIN_EXPECTED_COUNT`] draws. Probabilities
/// should sum to one; any missing mass is treated as an extra category.
pub fn chi2_goodness_of_fit(observed: &[u64], probabilities: &[f64]) -> TestOutcome {
    assert_eq!(observed.len(), probabilities.len());
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return TestOutcome::degenerate();
    }
    let n = n as f64;
    let mut rows: Vec<(f64, f64)> = observed
        .iter()
        .zip(probabilities)
        .map(|(&o, &p)| (o as f64, p.max(0.0) * n))
        .collect();
    let missing = (1.0 - probabilities.iter().map(|p| p.max(0.0)).sum::<f64>()).max(0.0);
    if missing * n > 1e-9 {
        rows.push((0.0, missing * n));
    }
    rows.sort_by(|x, y| x.1.total_cmp(&y.1));
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    let total_rows = rows.len();
    for (i, &(o, e)) in rows.iter().enumerate() {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= MIN_EXPECTED_COUNT {
            pooled.push(acc);
            acc = (0.0, 0.0);
        } else if i + 1 == total_rows {
            match pooled.last_mut() {
                Some(last) => {
                    last.0 += acc.0;
                    last.1 += acc.1;
                }
                None => pooled.push(acc),
            }
            acc = (0.0, 0.0);
        }
    }
    if pooled.len() < 2 {
        // a category observed where nothing was expected is still a rejection
        let impossible = pooled.iter().any(|&(o, e)| e <= 0.0 && o > 0.0);
        return TestOutcome {
            statistic: if impossible { f64::INFINITY } else { 0.0 },
            p_value: if impossible { 0.0 } else { 1.0 },
            dof: 0.0,
        };
    }
    let mut stat = 0.0;
    for &(o, e) in &pooled {
        if e <= 0.0 {
            if o > 0.0 {
                stat = f64::INFINITY;
            }
            continue;
        }
        stat += (o - e).powi(2) / e;
    }
    let dof = (pooled.len() - 1) as f64;
    TestOutcome {
        statistic: stat,
        p_value: if stat.is_finite() { chi2_sf(stat, dof) } else { 0.0 },
        dof,
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // series converges slowly here and the answer is 1 to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample Kolmogorov-Smirnov test (asymptotic p-value with Stephens'
/// small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestOutcome {
    if a.is_empty() || b.is_empty() {
        return TestOutcome::degenerate();
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    TestOutcome {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        dof: n_eff,
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> TestOutcome {
    if sample.is_empty() {
        return TestOutcome::degenerate();
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0_f64;
    for (k, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs());
    }
    TestOutcome {
        statistic: d,
        p_value: ks_p_value(d, n),
        dof: n,
    }
}

/// Total-variation distance `1/2 sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Normalised histogram of category indices.
pub fn empirical_distribution(samples: impl IntoIterator<Item = usize>, categories: usize) -> Vec<f64> {
    let mut counts = vec![0.0; categories];
    let mut n = 0.0;
    for s in samples {
        counts[s] += 1.0;
        n += 1.0;
    }
    if n > 0.0 {
        counts.iter_mut().for_each(|c| *c /= n);
    }
    counts
}
