//! Treatment-coded design matrices from categorical frames and
//! `y ~ C(a) x C(b)` style formulas.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use nalgebra::DMatrix;

use crate::error::FitError;

pub const INTERCEPT: &str = "Intercept";

/// Named categorical columns of equal length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Frame {
    columns: IndexMap<String, Vec<String>>,
    rows: usize,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_column<S: Into<String>>(mut self, name: &str, values: impl IntoIterator<Item = S>) -> Result<Self, FitError> {
        let values: Vec<String> = values.into_iter().map(Into::into).collect();
        if !self.columns.is_empty() && values.len() != self.rows {
            return Err(FitError::Dimension(format!("column `{name}` has {} rows, expected {}", values.len(), self.rows)));
        }
        self.rows = values.len();
        self.columns.insert(name.to_string(), values);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn column(&self, name: &str) -> Option<&[String]> {
        self.columns.get(name).map(Vec::as_slice)
    }
}

/// Right-hand side of a model formula as a list of terms; each term is a
/// list of factor names (one name for a main effect, more for an
/// interaction). The intercept is implicit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Formula {
    pub response: Option<String>,
    pub terms: Vec<Vec<String>>,
}

impl Formula {
    /// Accepts `+` for main effects, `*`, `x` or `×` for main effects plus
    /// interactions, and `:` for an interaction alone. Factors may be written
    /// bare or as `C(name)`.
    pub fn parse(text: &str) -> Result<Self, FitError> {
        let (response, rhs) = match text.split_once('~') {
            Some((lhs, rhs)) => {
                let lhs = lhs.trim();
                if lhs.is_empty() {
                    return Err(FitError::BadFormula("empty response".into()));
                }
                (Some(lhs.to_string()), rhs)
            }
            None => (None, text),
        };
        let mut terms: Vec<Vec<String>> = Vec::new();
        let mut push = |term: Vec<String>| {
            if !terms.contains(&term) {
                terms.push(term);
            }
        };
        for part in rhs.split('+') {
            let part = part.trim();
            if part.is_empty() {
                return Err(FitError::BadFormula(format!("empty term in `{text}`")));
            }
            if part == "1" {
                continue;
            }
            let tokens: Vec<&str> = part.split_whitespace().collect();
            let normalized = tokens
                .iter()
                .map(|t| if *t == "x" { "*" } else { t })
                .collect::<Vec<_>>()
                .join(" ")
                .replace('×', "*");
            if normalized.contains('*') {
                let factors = normalized.split('*').map(factor_name).collect::<Result<Vec<_>, _>>()?;
                for subset in subsets(&factors) {
                    push(subset);
                }
            } else {
                push(normalized.split(':').map(factor_name).collect::<Result<Vec<_>, _>>()?);
            }
        }
        // Lower-order terms first, otherwise in order of appearance.
        terms.sort_by_key(Vec::len);
        Ok(Self { response, terms })
    }

    pub fn has_interactions(&self) -> bool {
        self.terms.iter().any(|t| t.len() > 1)
    }

    /// The same formula with interaction terms removed.
    pub fn main_effects(&self) -> Self {
        Self { response: self.response.clone(), terms: self.terms.iter().filter(|t| t.len() == 1).cloned().collect() }
    }
}

fn factor_name(raw: &str) -> Result<String, FitError> {
    let s = raw.trim();
    let inner = s.strip_prefix("C(").and_then(|r| r.strip_suffix(')')).unwrap_or(s).trim();
    let valid = !inner.is_empty() && inner.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.');
    if valid {
        Ok(inner.to_string())
    } else {
        Err(FitError::BadFormula(format!("bad factor `{s}`")))
    }
}

/// Non-empty subsets in order of size, then of appearance.
fn subsets(factors: &[String]) -> Vec<Vec<String>> {
    let n = factors.len();
    let mut out: Vec<Vec<String>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| factors[i].clone()).collect())
        .collect();
    out.sort_by_key(Vec::len);
    out
}

/// Reference level per factor; factors without an entry use their first level
/// in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct References(pub BTreeMap<String, String>);

impl Default for References {
    fn default() -> Self {
        Self(
            [("condition", "baseline"), ("location", "NOT-RM"), ("comparison", "DIV/PM")]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    x: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, x: DMatrix<f64>) -> Result<Self, FitError> {
        if names.len() != x.ncols() {
            return Err(FitError::Dimension(format!("{} names for {} columns", names.len(), x.ncols())));
        }
        Ok(Self { names, x })
    }

    /// Intercept column followed by the given numeric columns.
    pub fn with_intercept(columns: &[(&str, &[f64])]) -> Result<Self, FitError> {
        let n = columns.first().map_or(0, |c| c.1.len());
        if columns.iter().any(|c| c.1.len() != n) {
            return Err(FitError::Dimension("ragged columns".into()));
        }
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(columns.iter().map(|c| c.0.to_string()));
        let x = DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1].1[i] });
        Self::new(names, x)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn has_intercept(&self) -> bool {
        self.column_index(INTERCEPT).is_some()
    }

    pub fn without_intercept(&self) -> Self {
        match self.column_index(INTERCEPT) {
            None => self.clone(),
            Some(j) => Self {
                names: self.names.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, n)| n.clone()).collect(),
                x: self.x.clone().remove_column(j),
            },
        }
    }

    /// Numerical column rank.
    pub fn rank(&self) -> usize {
        if self.x.ncols() == 0 || self.x.nrows() == 0 {
            return 0;
        }
        let sv = self.x.clone().svd(false, false).singular_values;
        let max = sv.max();
        let tol = max * (self.x.nrows().max(self.x.ncols()) as f64) * f64::EPSILON;
        sv.iter().filter(|s| **s > tol).count()
    }
}

fn treatment_levels(values: &[String], reference: Option<&str>) -> (String, Vec<String>) {
    let mut levels: Vec<String> = values.to_vec();
    levels.sort();
    levels.dedup();
    let reference = match reference {
        Some(r) if levels.iter().any(|l| l == r) => r.to_string(),
        _ => levels.first().cloned().unwrap_or_default(),
    };
    levels.retain(|l| *l != reference);
    (reference, levels)
}

/// Intercept plus one dummy per non-reference level of each factor, plus
/// elementwise products for interaction terms.
pub fn build_design(frame: &Frame, formula: &Formula, references: &References) -> Result<DesignMatrix, FitError> {
    let n = frame.rows();
    let mut dummies: IndexMap<String, Vec<(String, Vec<f64>)>> = IndexMap::new();
    for term in &formula.terms {
        for factor in term {
            if dummies.contains_key(factor) {
                continue;
            }
            let values = frame.column(factor).ok_or_else(|| FitError::UnknownColumn(factor.clone()))?;
            let (_, levels) = treatment_levels(values, references.0.get(factor).map(String::as_str));
            let cols = levels
                .into_iter()
                .map(|level| {
                    let col = values.iter().map(|v| f64::from(u8::from(*v == level))).collect();
                    (format!("C({factor})[T.{level}]"), col)
                })
                .collect();
            dummies.insert(factor.clone(), cols);
        }
    }

    let mut names = vec![INTERCEPT.to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for term in &formula.terms {
        let mut acc: Vec<(String, Vec<f64>)> = vec![(String::new(), vec![1.0; n])];
        for factor in term {
            let mut next = Vec::new();
            for (name, col) in &acc {
                for (dname, dcol) in &dummies[factor] {
                    let joined = if name.is_empty() { dname.clone() } else { format!("{name}:{dname}") };
                    next.push((joined, col.iter().zip(dcol).map(|(a, b)| a * b).collect()));
                }
            }
            acc = next;
        }
        for (name, col) in acc {
            names.push(name);
            columns.push(col);
        }
    }
    let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    DesignMatrix::new(names, x)
}
