//! Utilities, choice probabilities, log-likelihood and its gradient.
//!
//! Everything is evaluated in the log domain with a max shift, so
//! parameters of magnitude several hundred neither overflow nor underflow
//! to a zero denominator.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{ChoiceDistribution, ParameterMask, ParameterSet, TransactionDataset};

/// `ln(1 + sum(exp(v)))`: log-sum-exp with the no-purchase utility 0 included.
pub fn log_denominator(utilities: &[f64]) -> f64 {
    let max = utilities.iter().copied().fold(0.0_f64, f64::max);
    let mut sum = (-max).exp();
    for &v in utilities {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

/// `v_j = x_j mu_j + sum_i x_j (1 - x_i) alpha_ij`; zero when `j` is not offered.
pub fn effective_utility(params: &ParameterSet, availability: &[bool], j: usize) -> Result<f64> {
    let n = params.n();
    check_width(n, availability.len())?;
    if j == 0 || j > n {
        return Err(Error::ItemOutOfRange { index: j, n });
    }
    if !availability[j - 1] {
        return Ok(0.0);
    }
    Ok(utility0(params, availability, j - 1))
}

// 0-based item, assumed offered
fn utility0(params: &ParameterSet, availability: &[bool], j: usize) -> f64 {
    let n = params.n();
    let alpha = params.alpha_values();
    let shift: f64 = availability
        .iter()
        .enumerate()
        .filter(|(_, &x)| !x)
        .map(|(i, _)| alpha[i * n + j])
        .sum();
    params.mu_values()[j] + shift
}

pub fn choice_probabilities(
    params: &ParameterSet,
    availability: &[bool],
) -> Result<ChoiceDistribution> {
    let n = params.n();
    check_width(n, availability.len())?;
    let offered: Vec<usize> = (0..n).filter(|&j| availability[j]).collect();
    let utils: Vec<f64> = offered
        .iter()
        .map(|&j| utility0(params, availability, j))
        .collect();
    let lse = log_denominator(&utils);
    let mut probs = vec![0.0; n + 1];
    probs[0] = (-lse).exp();
    for (&j, &v) in offered.iter().zip(&utils) {
        probs[j + 1] = (v - lse).exp();
    }
    Ok(ChoiceDistribution::from_probs(probs))
}

/// Partial derivatives of the log-likelihood; `alpha` diagonal is identically 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    n: usize,
    d_mu: Vec<f64>,
    d_alpha: Vec<f64>,
}

impl GradientVector {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mu(&self, p: usize) -> f64 {
        self.d_mu[p - 1]
    }

    pub fn alpha(&self, i: usize, p: usize) -> f64 {
        self.d_alpha[(i - 1) * self.n + (p - 1)]
    }

    pub fn get(&self, index: crate::model::ParamIndex) -> f64 {
        match index {
            crate::model::ParamIndex::Mu(p) => self.mu(p),
            crate::model::ParamIndex::Alpha { absent, affected } => self.alpha(absent, affected),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.d_mu
            .iter()
            .chain(&self.d_alpha)
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    fn apply_mask(&mut self, mask: &ParameterMask) {
        for (g, &on) in self.d_mu.iter_mut().zip(mask.mu_flags()) {
            if !on {
                *g = 0.0;
            }
        }
        for (g, &on) in self.d_alpha.iter_mut().zip(mask.alpha_flags()) {
            if !on {
                *g = 0.0;
            }
        }
    }
}

/// Periods sharing an offer set, with their counts pooled.
#[derive(Clone, Debug)]
pub(crate) struct OfferPattern {
    pub offered: Vec<bool>,
    /// 0-based offered items, ascending.
    pub offered_items: Vec<usize>,
    /// 0-based absent items, ascending.
    pub absent_items: Vec<usize>,
    /// Pooled counts, slot 0 no-purchase.
    pub counts: Vec<f64>,
    pub kappa: f64,
}

impl OfferPattern {
    fn utilities(&self, params: &ParameterSet, out: &mut Vec<f64>) {
        let n = params.n();
        let mu = params.mu_values();
        let alpha = params.alpha_values();
        out.clear();
        for &j in &self.offered_items {
            let mut v = mu[j];
            for &i in &self.absent_items {
                v += alpha[i * n + j];
            }
            out.push(v);
        }
    }
}

/// The likelihood depends on the data only through per-offer-set count
/// totals; pooling in a fixed (sorted) order makes every evaluation
/// invariant to period order.
#[derive(Clone, Debug)]
pub(crate) struct PatternTable {
    pub n: usize,
    pub patterns: Vec<OfferPattern>,
}

impl PatternTable {
    /// `smoothing` is added to every outcome cell of every distinct offer set.
    pub fn new(ds: &TransactionDataset, smoothing: f64) -> Self {
        let n = ds.items();
        let mut groups: BTreeMap<Vec<bool>, Vec<u64>> = BTreeMap::new();
        for m in 0..ds.periods() {
            let entry = groups
                .entry(ds.availability().row(m).to_vec())
                .or_insert_with(|| vec![0; n + 1]);
            for (acc, &c) in entry.iter_mut().zip(ds.counts(m)) {
                *acc += c;
            }
        }
        let patterns = groups
            .into_iter()
            .map(|(offered, counts)| {
                let offered_items: Vec<usize> = (0..n).filter(|&j| offered[j]).collect();
                let absent_items: Vec<usize> = (0..n).filter(|&j| !offered[j]).collect();
                let mut counts: Vec<f64> = counts.into_iter().map(|c| c as f64).collect();
                if smoothing > 0.0 {
                    counts[0] += smoothing;
                    for &j in &offered_items {
                        counts[j + 1] += smoothing;
                    }
                }
                let kappa = counts.iter().sum();
                OfferPattern {
                    offered,
                    offered_items,
                    absent_items,
                    counts,
                    kappa,
                }
            })
            .collect();
        Self { n, patterns }
    }

    pub fn log_likelihood(&self, params: &ParameterSet) -> f64 {
        let mut utils = Vec::with_capacity(self.n);
        let mut total = 0.0;
        for pat in &self.patterns {
            if pat.kappa == 0.0 {
                continue;
            }
            pat.utilities(params, &mut utils);
            let lse = log_denominator(&utils);
            let mut term = -pat.kappa * lse;
            for (&j, &v) in pat.offered_items.iter().zip(&utils) {
                let z = pat.counts[j + 1];
                if z != 0.0 {
                    term += z * v;
                }
            }
            total += term;
        }
        total
    }

    /// Log-likelihood and full gradient in one pass.
    pub fn evaluate(&self, params: &ParameterSet) -> (f64, GradientVector) {
        let n = self.n;
        let mut d_mu = vec![0.0; n];
        let mut d_alpha = vec![0.0; n * n];
        let mut utils = Vec::with_capacity(n);
        let mut total = 0.0;
        for pat in &self.patterns {
            if pat.kappa == 0.0 {
                continue;
            }
            pat.utilities(params, &mut utils);
            let lse = log_denominator(&utils);
            let mut term = -pat.kappa * lse;
            for (&j, &v) in pat.offered_items.iter().zip(&utils) {
                let z = pat.counts[j + 1];
                if z != 0.0 {
                    term += z * v;
                }
                let resid = z - pat.kappa * (v - lse).exp();
                d_mu[j] += resid;
                for &i in &pat.absent_items {
                    d_alpha[i * n + j] += resid;
                }
            }
            total += term;
        }
        (total, GradientVector { n, d_mu, d_alpha })
    }
}

pub fn log_likelihood(params: &ParameterSet, ds: &TransactionDataset) -> Result<f64> {
    check_width(params.n(), ds.items())?;
    ds.ensure_valid()?;
    Ok(PatternTable::new(ds, 0.0).log_likelihood(params))
}

pub fn log_likelihood_gradient(
    params: &ParameterSet,
    ds: &TransactionDataset,
) -> Result<GradientVector> {
    check_width(params.n(), ds.items())?;
    ds.ensure_valid()?;
    Ok(PatternTable::new(ds, 0.0).evaluate(params).1)
}

/// Gradient with entries outside `mask` reported as 0.
pub fn masked_gradient(
    params: &ParameterSet,
    ds: &TransactionDataset,
    mask: &ParameterMask,
) -> Result<GradientVector> {
    check_width(params.n(), mask.n())?;
    let mut g = log_likelihood_gradient(params, ds)?;
    g.apply_mask(mask);
    Ok(g)
}

fn check_width(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: "item count",
            expected,
            found,
        })
    }
}
