//! Domain types shared by every module.
//!
//! Items are numbered `1..=n` in every public interface. Outcome vectors
//! (counts, probabilities) have length `n + 1` with slot 0 reserved for the
//! no-purchase option, whose utility is fixed at 0 and is never a parameter.
//! Periods are addressed by 0-based row position in Rust APIs; reports
//! (violations, partitions) use 1-based period numbers.

use std::fmt;

use crate::error::{Error, Result, Violation};

/// Coordinate of one model parameter, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamIndex {
    /// Baseline preference of an item.
    Mu(usize),
    /// Effect of `absent`'s absence on the utility of `affected`.
    Alpha { absent: usize, affected: usize },
}

impl fmt::Display for ParamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamIndex::Mu(p) => write!(f, "mu[{p}]"),
            ParamIndex::Alpha { absent, affected } => write!(f, "alpha[{absent}][{affected}]"),
        }
    }
}

/// Baseline preferences `mu` and the absence-interaction matrix `alpha`.
///
/// `alpha(i, j)` is the shift in item `j`'s log-utility when item `i` is not
/// offered. The diagonal is identically zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    n: usize,
    mu: Vec<f64>,
    // row-major n x n, row = absent item
    alpha: Vec<f64>,
}

impl ParameterSet {
    pub fn new(mu: Vec<f64>, alpha: Vec<Vec<f64>>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::InvalidParameters("item count must be positive".into()));
        }
        if alpha.len() != n {
            return Err(Error::DimensionMismatch {
                what: "alpha rows",
                expected: n,
                found: alpha.len(),
            });
        }
        let mut flat = Vec::with_capacity(n * n);
        for row in &alpha {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "alpha columns",
                    expected: n,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(n, mu, flat)
    }

    /// Builds from a row-major `alpha`.
    pub fn from_flat(n: usize, mu: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameters("item count must be positive".into()));
        }
        if mu.len() != n {
            return Err(Error::DimensionMismatch {
                what: "mu",
                expected: n,
                found: mu.len(),
            });
        }
        if alpha.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "alpha entries",
                expected: n * n,
                found: alpha.len(),
            });
        }
        if let Some(p) = mu.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters(format!("mu[{}] is not finite", p + 1)));
        }
        for i in 0..n {
            for j in 0..n {
                let v = alpha[i * n + j];
                if !v.is_finite() {
                    return Err(Error::InvalidParameters(format!(
                        "alpha[{}][{}] is not finite",
                        i + 1,
                        j + 1
                    )));
                }
                if i == j && v != 0.0 {
                    return Err(Error::InvalidParameters(format!(
                        "alpha[{}][{}] = {v} but the diagonal must be zero",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { n, mu, alpha })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "item count must be positive");
        Self {
            n,
            mu: vec![0.0; n],
            alpha: vec![0.0; n * n],
        }
    }

    /// Classical MNL parameters (`alpha = 0`).
    pub fn mnl(mu: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        Self::from_flat(n, mu, vec![0.0; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Baseline preference of item `p` (1-based). Panics when out of range.
    pub fn mu(&self, p: usize) -> f64 {
        self.mu[self.idx(p)]
    }

    /// Absence effect of item `i` on item `p` (both 1-based).
    pub fn alpha(&self, i: usize, p: usize) -> f64 {
        self.alpha[self.idx(i) * self.n + self.idx(p)]
    }

    pub fn get(&self, index: ParamIndex) -> f64 {
        match index {
            ParamIndex::Mu(p) => self.mu(p),
            ParamIndex::Alpha { absent, affected } => self.alpha(absent, affected),
        }
    }

    /// `mu` as a slice; position `k` holds item `k + 1`.
    pub fn mu_values(&self) -> &[f64] {
        &self.mu
    }

    /// Row-major `alpha`; position `k * n + l` holds `alpha(k + 1, l + 1)`.
    pub fn alpha_values(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_rows(&self) -> Vec<Vec<f64>> {
        self.alpha.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Keeps only items `1..=k`.
    ///
    /// Used for the reading of the appendix fixtures where the trailing,
    /// all-zero index stands for the no-purchase option.
    pub fn leading_items(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n {
            return Err(Error::InvalidParameters(format!(
                "cannot keep {k} of {} items",
                self.n
            )));
        }
        let mu = self.mu[..k].to_vec();
        let alpha = (0..k)
            .flat_map(|i| self.alpha[i * self.n..i * self.n + k].iter().copied())
            .collect();
        Self::from_flat(k, mu, alpha)
    }

    /// Copy with every parameter outside `mask` set to zero.
    pub fn masked(&self, mask: &ParameterMask) -> Self {
        assert_eq!(mask.n(), self.n, "mask width");
        let mu = self
            .mu
            .iter()
            .zip(&mask.mu)
            .map(|(&v, &on)| if on { v } else { 0.0 })
            .collect();
        let alpha = self
            .alpha
            .iter()
            .zip(&mask.alpha)
            .map(|(&v, &on)| if on { v } else { 0.0 })
            .collect();
        Self { n: self.n, mu, alpha }
    }

    fn idx(&self, p: usize) -> usize {
        assert!(
            (1..=self.n).contains(&p),
            "item index {p} out of range 1..={}",
            self.n
        );
        p - 1
    }
}

/// Marks which parameters are estimated (`true`) versus pinned at zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterMask {
    n: usize,
    mu: Vec<bool>,
    alpha: Vec<bool>,
}

impl ParameterMask {
    /// Every `mu` and every off-diagonal `alpha`.
    pub fn all(n: usize) -> Self {
        let mut alpha = vec![true; n * n];
        for i in 0..n {
            alpha[i * n + i] = false;
        }
        Self {
            n,
            mu: vec![true; n],
            alpha,
        }
    }

    pub fn none(n: usize) -> Self {
        Self {
            n,
            mu: vec![false; n],
            alpha: vec![false; n * n],
        }
    }

    /// Classical MNL: all `mu`, no `alpha`.
    pub fn mnl(n: usize) -> Self {
        Self {
            n,
            mu: vec![true; n],
            alpha: vec![false; n * n],
        }
    }

    /// Every `mu` plus `alpha(i, p)` for `i < p`.
    pub fn upper_triangular(n: usize) -> Self {
        let mut m = Self::mnl(n);
        for i in 0..n {
            for p in (i + 1)..n {
                m.alpha[i * n + p] = true;
            }
        }
        m
    }

    pub fn from_parts(n: usize, mu: Vec<bool>, alpha: Vec<Vec<bool>>) -> Result<Self> {
        if mu.len() != n {
            return Err(Error::DimensionMismatch {
                what: "mask mu",
                expected: n,
                found: mu.len(),
            });
        }
        if alpha.len() != n || alpha.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "mask alpha",
                expected: n,
                found: alpha.len(),
            });
        }
        let mut flat: Vec<bool> = alpha.into_iter().flatten().collect();
        for i in 0..n {
            flat[i * n + i] = false;
        }
        Ok(Self { n, mu, alpha: flat })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mu(&self, p: usize) -> bool {
        self.mu[p - 1]
    }

    pub fn alpha(&self, i: usize, p: usize) -> bool {
        self.alpha[(i - 1) * self.n + (p - 1)]
    }

    pub fn get(&self, index: ParamIndex) -> bool {
        match index {
            ParamIndex::Mu(p) => self.mu(p),
            ParamIndex::Alpha { absent, affected } => self.alpha(absent, affected),
        }
    }

    pub fn set(&mut self, index: ParamIndex, on: bool) {
        match index {
            ParamIndex::Mu(p) => self.mu[p - 1] = on,
            ParamIndex::Alpha { absent, affected } => {
                if absent != affected {
                    self.alpha[(absent - 1) * self.n + (affected - 1)] = on;
                }
            }
        }
    }

    pub fn mu_flags(&self) -> &[bool] {
        &self.mu
    }

    pub fn alpha_flags(&self) -> &[bool] {
        &self.alpha
    }

    pub fn alpha_rows(&self) -> Vec<Vec<bool>> {
        self.alpha.chunks(self.n).map(<[bool]>::to_vec).collect()
    }

    /// Number of estimated parameters.
    pub fn count(&self) -> usize {
        self.mu.iter().chain(&self.alpha).filter(|&&b| b).count()
    }

    pub fn is_all(&self) -> bool {
        *self == Self::all(self.n)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "mask width");
        Self {
            n: self.n,
            mu: self.mu.iter().zip(&other.mu).map(|(a, b)| *a && *b).collect(),
            alpha: self
                .alpha
                .iter()
                .zip(&other.alpha)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    /// Estimated parameters in canonical order: all `mu`, then `alpha` row-major.
    pub fn active(&self) -> Vec<ParamIndex> {
        let n = self.n;
        let mus = (1..=n).filter(|&p| self.mu(p)).map(ParamIndex::Mu);
        let alphas = (1..=n)
            .flat_map(move |i| (1..=n).map(move |p| (i, p)))
            .filter(|&(i, p)| self.alpha(i, p))
            .map(|(absent, affected)| ParamIndex::Alpha { absent, affected });
        mus.chain(alphas).collect()
    }
}

/// The M x N binary matrix of offer sets; row `m` is the availability vector of period `m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvailabilityMatrix {
    n: usize,
    rows: Vec<Vec<bool>>,
}

impl AvailabilityMatrix {
    pub fn new(n: usize, rows: Vec<Vec<bool>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("item count must be positive".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "availability row",
                expected: n,
                found: r.len(),
            });
        }
        Ok(Self { n, rows })
    }

    /// From 0/1 integers; any other value is rejected.
    pub fn from_binary(n: usize, rows: &[Vec<u8>]) -> Result<Self> {
        let rows = rows
            .iter()
            .enumerate()
            .map(|(m, r)| {
                r.iter()
                    .enumerate()
                    .map(|(j, &v)| match v {
                        0 => Ok(false),
                        1 => Ok(true),
                        _ => Err(Error::InvalidConfig(format!(
                            "availability entry at period {}, item {} is {v}, expected 0 or 1",
                            m + 1,
                            j + 1
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, rows)
    }

    pub fn periods(&self) -> usize {
        self.rows.len()
    }

    pub fn items(&self) -> usize {
        self.n
    }

    /// Availability vector of the period at 0-based position `m`.
    pub fn row(&self, m: usize) -> &[bool] {
        &self.rows[m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[bool]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn select(&self, periods: &[usize]) -> Self {
        Self {
            n: self.n,
            rows: periods.iter().map(|&m| self.rows[m].clone()).collect(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stacked(&self, other: &Self) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                what: "availability width",
                expected: self.n,
                found: other.n,
            });
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(Self { n: self.n, rows })
    }
}

/// Per-period purchase counts `z_j^(m)` with `z_0^(m)` in slot 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransactionDataset {
    availability: AvailabilityMatrix,
    // row-major periods x (n + 1)
    counts: Vec<u64>,
}

impl TransactionDataset {
    /// Checks dimensions only; use [`validate_dataset`] for the
    /// unoffered-item invariant.
    pub fn new(availability: AvailabilityMatrix, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != availability.periods() {
            return Err(Error::DimensionMismatch {
                what: "count rows",
                expected: availability.periods(),
                found: counts.len(),
            });
        }
        let width = availability.items() + 1;
        let mut flat = Vec::with_capacity(counts.len() * width);
        for row in counts {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    what: "count row width",
                    expected: width,
                    found: row.len(),
                });
            }
            flat.extend(row);
        }
        Ok(Self {
            availability,
            counts: flat,
        })
    }

    pub fn empty(availability: AvailabilityMatrix) -> Self {
        let len = availability.periods() * (availability.items() + 1);
        Self {
            availability,
            counts: vec![0; len],
        }
    }

    pub fn availability(&self) -> &AvailabilityMatrix {
        &self.availability
    }

    pub fn items(&self) -> usize {
        self.availability.items()
    }

    pub fn periods(&self) -> usize {
        self.availability.periods()
    }

    /// Counts of period `m` (0-based): slot 0 no-purchase, slot `j` item `j`.
    pub fn counts(&self, m: usize) -> &[u64] {
        let w = self.items() + 1;
        &self.counts[m * w..(m + 1) * w]
    }

    pub(crate) fn counts_mut(&mut self, m: usize) -> &mut [u64] {
        let w = self.items() + 1;
        &mut self.counts[m * w..(m + 1) * w]
    }

    /// Total transactions recorded in period `m`, no-purchase included.
    pub fn kappa(&self, m: usize) -> u64 {
        self.counts(m).iter().sum()
    }

    /// Total transactions over all periods.
    pub fn total_transactions(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn select(&self, periods: &[usize]) -> Self {
        let counts = periods
            .iter()
            .flat_map(|&m| self.counts(m).iter().copied())
            .collect();
        Self {
            availability: self.availability.select(periods),
            counts,
        }
    }

    /// Periods of `self` followed by periods of `other`.
    pub fn stacked(&self, other: &Self) -> Result<Self> {
        let availability = self.availability.stacked(&other.availability)?;
        let mut counts = self.counts.clone();
        counts.extend_from_slice(&other.counts);
        Ok(Self {
            availability,
            counts,
        })
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let report = validate_dataset(self);
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidDataset(report.violations))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every period/item where an unoffered item has a nonzero count.
pub fn validate_dataset(ds: &TransactionDataset) -> ValidationReport {
    let mut violations = Vec::new();
    for m in 0..ds.periods() {
        let row = ds.availability().row(m);
        let counts = ds.counts(m);
        for (j, &offered) in row.iter().enumerate() {
            let count = counts[j + 1];
            if !offered && count > 0 {
                violations.push(Violation {
                    period: m + 1,
                    item: j + 1,
                    count,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// Purchase probabilities for one offer set: slot 0 no-purchase, slot `j` item `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceDistribution {
    probs: Vec<f64>,
}

impl ChoiceDistribution {
    pub(crate) fn from_probs(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn prob(&self, outcome: usize) -> f64 {
        self.probs[outcome]
    }

    pub fn no_purchase(&self) -> f64 {
        self.probs[0]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    ClosedFormC1,
    ClosedFormC2,
    Numerical,
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::ClosedFormC1 => "closed-form-C1",
            FitMethod::ClosedFormC2 => "closed-form-C2",
            FitMethod::Numerical => "numerical",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: ParameterSet,
    /// Estimated parameters; everything else is exactly zero in `params`.
    pub mask: ParameterMask,
    pub loglik: f64,
    pub method: FitMethod,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    /// Number of estimated parameters.
    pub fn dof(&self) -> usize {
        self.mask.count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(rows: &[&[u8]]) -> AvailabilityMatrix {
        let rows: Vec<Vec<u8>> = rows.iter().map(|r| r.to_vec()).collect();
        AvailabilityMatrix::from_binary(rows[0].len(), &rows).unwrap()
    }

    #[test]
    fn rejects_nonzero_diagonal() {
        let err = ParameterSet::new(vec![0.0, 0.0], vec![vec![0.0, 1.0], vec![0.0, 0.5]]);
        assert!(matches!(err, Err(Error::InvalidParameters(_))));
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(ParameterSet::new(vec![f64::NAN], vec![vec![0.0]]).is_err());
        assert!(ParameterSet::new(vec![0.0, 0.0], vec![vec![0.0, 0.0]]).is_err());
        assert!(ParameterSet::new(vec![], vec![]).is_err());
    }

    #[test]
    fn violation_reports_coordinates() {
        let avail = q(&[&[1, 1], &[1, 1], &[1, 0], &[1, 0]]);
        let ds = TransactionDataset::new(
            avail,
            vec![vec![1, 1, 1], vec![0, 0, 0], vec![0, 0, 0], vec![3, 2, 5]],
        )
        .unwrap();
        let report = validate_dataset(&ds);
        assert_eq!(
            report.violations,
            vec![Violation {
                period: 4,
                item: 2,
                count: 5
            }]
        );
    }

    #[test]
    fn all_zero_counts_are_valid() {
        let ds = TransactionDataset::empty(q(&[&[0, 1, 0], &[1, 0, 1]]));
        assert!(validate_dataset(&ds).is_ok());
    }

    #[test]
    fn counts_on_offered_items_are_valid() {
        let ds = TransactionDataset::new(
            q(&[&[0, 1], &[1, 1]]),
            vec![vec![4, 0, 7], vec![1, 2, 3]],
        )
        .unwrap();
        assert!(validate_dataset(&ds).is_ok());
        assert_eq!(ds.kappa(0), 11);
        assert_eq!(ds.total_transactions(), 17);
    }

    #[test]
    fn availability_rejects_non_binary() {
        assert!(AvailabilityMatrix::from_binary(2, &[vec![0, 2]]).is_err());
    }

    #[test]
    fn mask_counts_and_active_order() {
        let n = 3;
        assert_eq!(ParameterMask::all(n).count(), 9);
        assert_eq!(ParameterMask::mnl(n).count(), 3);
        assert_eq!(ParameterMask::upper_triangular(n).count(), 6);
        let active = ParameterMask::upper_triangular(n).active();
        assert_eq!(active[3], ParamIndex::Alpha { absent: 1, affected: 2 });
        assert_eq!(active[5], ParamIndex::Alpha { absent: 2, affected: 3 });
    }

    #[test]
    fn leading_items_drops_trailing_index() {
        let p = ParameterSet::new(
            vec![0.1, 0.2, 0.0],
            vec![vec![0.0, 0.3, 0.0], vec![0.4, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
        )
        .unwrap();
        let k = p.leading_items(2).unwrap();
        assert_eq!(k.n(), 2);
        assert_eq!(k.alpha(1, 2), 0.3);
        assert_eq!(k.alpha(2, 1), 0.4);
    }
}
