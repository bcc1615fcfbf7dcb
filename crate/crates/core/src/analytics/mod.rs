//! Dependent variables from interaction logs and the regression toolkit.

pub mod design;
pub mod regression;
pub mod users;

pub use design::{build_design, DesignMatrix, Formula, Frame, References};
pub use regression::{
    fit_logit, fit_nb, fit_ordinal, lr_test, odds_ratio, odds_ratio_from, Family, LrTest, OddsRatio, RegressionFit,
};
pub use users::{sessionize_and_filter, AnalyticsConfig, Exclusions, UserRecord, UserTable};

use crate::error::FitError;

/// Grouped-data median of integer scores with unit-width categories.
///
/// With `m` the first category whose cumulative count reaches `n/2`, `F` the
/// count below `m` and `f` the count at `m`, the lower estimate is
/// `(m − 0.5) + (n/2 − F)/f`. The same rule applied from the top gives an
/// upper estimate; the result is their mean, so the two agree whenever
/// `n/2` does not fall exactly on a category boundary.
pub fn interpolated_median(scores: &[i64]) -> Result<f64, FitError> {
    if scores.is_empty() {
        return Err(FitError::EmptySet);
    }
    let lower = grouped_median(scores.iter().copied());
    let upper = -grouped_median(scores.iter().map(|s| -s));
    Ok((lower + upper) / 2.0)
}

fn grouped_median(scores: impl Iterator<Item = i64>) -> f64 {
    let mut counts = std::collections::BTreeMap::<i64, usize>::new();
    for s in scores {
        *counts.entry(s).or_default() += 1;
    }
    let half = counts.values().sum::<usize>() as f64 / 2.0;
    let mut below = 0usize;
    for (&m, &f) in &counts {
        if (below + f) as f64 >= half {
            return (m as f64 - 0.5) + (half - below as f64) / f as f64;
        }
        below += f;
    }
    unreachable!("cumulative count reaches n")
}
