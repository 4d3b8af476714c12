//! Explanation quality measures: proximity, sparsity, the paired t-test used
//! to check that two explanation sets are matched, and ordering gap scores.

use alloc::format;
use core::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::singlecf::FeatureChange;
use crate::tabular::{FeatureKind, FeatureSchema, FeatureStats, Instance};
use crate::{Error, Result};

/// MAD-scaled L1 distance over continuous changes plus a 0/1 indicator per
/// changed categorical feature.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProximityScore {
    pub continuous: f64,
    pub categorical: f64,
    pub total: f64,
}

pub fn proximity(
    changes: &[FeatureChange],
    schema: &FeatureSchema,
    stats: &FeatureStats,
) -> Result<ProximityScore> {
    let mut score = ProximityScore::default();
    for change in changes {
        if change.feature >= schema.len() {
            return Err(Error::SchemaMismatch {
                expected: schema.len(),
                found: change.feature + 1,
            });
        }
        match schema.feature(change.feature).kind {
            FeatureKind::Continuous => {
                score.continuous += libm::fabs(change.to - change.from) / stats.scale(change.feature)
            }
            FeatureKind::Categorical => {
                if change.to != change.from {
                    score.categorical += 1.0
                }
            }
        }
    }
    score.total = score.continuous + score.categorical;
    Ok(score)
}

/// Proximity of `counterfactual` to `original`, over every differing feature.
pub fn proximity_between(
    original: &Instance,
    counterfactual: &Instance,
    schema: &FeatureSchema,
    stats: &FeatureStats,
) -> Result<ProximityScore> {
    let changes = FeatureChange::diff(original, counterfactual)?;
    proximity(&changes, schema, stats)
}

pub fn sparsity(changes: &[FeatureChange]) -> usize {
    changes.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p_two_tailed: f64,
}

/// Paired two-tailed Student t-test on `xs[i] - ys[i]`, sample standard
/// deviation with n - 1 denominator.
pub fn paired_t_test(xs: &[f64], ys: &[f64]) -> Result<TTestResult> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len() as f64;
    let diffs = xs.iter().zip(ys).map(|(x, y)| x - y);
    let first = xs[0] - ys[0];
    if diffs.clone().all(|d| d == first) {
        return Err(Error::ZeroVariance);
    }
    let mean = diffs.clone().sum::<f64>() / n;
    let var = diffs.map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let t = mean / libm::sqrt(var / n);
    let df = xs.len() - 1;
    Ok(TTestResult {
        t,
        df,
        p_two_tailed: student_t_two_tailed(t, df as f64),
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Regularised incomplete beta `I_x(a, b)` by the modified Lentz continued
/// fraction, using the symmetry `I_x(a, b) = 1 - I_{1-x}(b, a)` where the
/// fraction converges slowly.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let guard = |v: f64| if libm::fabs(v) < TINY { TINY } else { v };

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let step = d * c;
        h *= step;
        if libm::fabs(step - 1.0) < EPS {
            break;
        }
    }
    h
}

/// Number of foreign items interleaved within the positional span of `set`
/// inside `ordering`: `(last - first + 1) - |set|`. Zero iff the set is
/// contiguous.
pub fn gap_score<T: PartialEq + Display>(ordering: &[T], set: &[T]) -> Result<usize> {
    let mut first = usize::MAX;
    let mut last = 0;
    for item in set {
        let mut positions = ordering.iter().enumerate().filter(|(_, o)| *o == item);
        let (pos, _) = positions
            .next()
            .ok_or_else(|| Error::MissingItem(format!("{item}")))?;
        if positions.next().is_some() || set.iter().filter(|s| *s == item).count() > 1 {
            return Err(Error::MissingItem(format!("{item}")));
        }
        first = first.min(pos);
        last = last.max(pos);
    }
    if set.is_empty() {
        return Ok(0);
    }
    Ok(last - first + 1 - set.len())
}
