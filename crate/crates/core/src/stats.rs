//! Association testing on transition tables, plus the rank and order
//! statistics used to summarise experiments.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{ChunkId, CountTables};

/// Counts for one ordered pair (L, R) against everything else.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contingency {
    /// T(L, R)
    pub a: f64,
    /// T(L, ¬R)
    pub b: f64,
    /// T(¬L, R)
    pub c: f64,
    /// T(¬L, ¬R)
    pub d: f64,
}

impl Contingency {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Contingency { a, b, c, d }
    }

    pub fn total(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }

    /// Expected T(L, R) under independence of the margins.
    pub fn expected(&self) -> f64 {
        let n = self.total();
        if n <= 0.0 {
            return 0.0;
        }
        (self.a + self.b) * (self.a + self.c) / n
    }

    /// χ² statistic with one degree of freedom, or `None` when a margin is
    /// empty and the statistic is undefined.
    pub fn chi_square(&self, yates: bool) -> Option<f64> {
        let Contingency { a, b, c, d } = *self;
        let n = a + b + c + d;
        let denom = (a + b) * (c + d) * (a + c) * (b + d);
        if n <= 0.0 || denom <= 0.0 {
            return None;
        }
        let mut diff = (a * d - b * c).abs();
        if yates {
            diff = (diff - n / 2.0).max(0.0);
        }
        Some(n * diff * diff / denom)
    }
}

/// Precomputed margins of a transition table, so each pair's 2×2 table is
/// assembled in constant time.
#[derive(Clone, Debug)]
pub struct TransitionMargins {
    rows: BTreeMap<ChunkId, f64>,
    cols: BTreeMap<ChunkId, f64>,
    total: f64,
}

impl TransitionMargins {
    pub fn new(counts: &CountTables) -> Self {
        TransitionMargins {
            rows: counts.row_sums(),
            cols: counts.col_sums(),
            total: counts.total_transitions(),
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn row(&self, left: ChunkId) -> f64 {
        self.rows.get(&left).copied().unwrap_or(0.0)
    }

    pub fn col(&self, right: ChunkId) -> f64 {
        self.cols.get(&right).copied().unwrap_or(0.0)
    }

    pub fn table(&self, counts: &CountTables, left: ChunkId, right: ChunkId) -> Result<Contingency> {
        if self.total <= 0.0 {
            return Err(Error::InsufficientData {
                needed: 1,
                available: 0,
            });
        }
        let a = counts.transition(left, right);
        let b = (self.row(left) - a).max(0.0);
        let c = (self.col(right) - a).max(0.0);
        let d = (self.total - a - b - c).max(0.0);
        Ok(Contingency { a, b, c, d })
    }
}

/// One-sided test for positive association at a fixed significance level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndependenceTest {
    critical: f64,
    yates: bool,
}

impl IndependenceTest {
    pub fn new(alpha: f64, yates: bool) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(IndependenceTest {
            critical: chi_square_critical(alpha)?,
            yates,
        })
    }

    pub fn critical(&self) -> f64 {
        self.critical
    }

    /// True when the pair is dependent at the chosen level and co-occurs
    /// more often than independence predicts. Undefined statistics count as
    /// not significant.
    pub fn positively_associated(&self, table: &Contingency) -> bool {
        match table.chi_square(self.yates) {
            Some(chi) => chi > self.critical && table.a > table.expected(),
            None => false,
        }
    }

    /// Tests T(left, right) against its margins; an empty table is not
    /// significant.
    pub fn test_pair(&self, counts: &CountTables, margins: &TransitionMargins, left: ChunkId, right: ChunkId) -> bool {
        margins
            .table(counts, left, right)
            .map(|t| self.positively_associated(&t))
            .unwrap_or(false)
    }
}

/// Upper-tail critical value of χ²(1) at `alpha`.
pub fn chi_square_critical(alpha: f64) -> Result<f64> {
    let dist = ChiSquared::new(1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// constant input.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Median of a nonempty slice (mean of the middle pair for even lengths).
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}
