//! Model scoring and comparison.
//!
//! BIC uses the total number of recorded transactions (no-purchase
//! included) as its sample size, and a fit's parameter count is the number
//! of estimated (masked) parameters.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimation::{fit_halo, fit_mnl, HaloMethod, OptimizerConfig};
use crate::identifiability::pattern_string;
use crate::model::{FitResult, ParamIndex, ParameterSet, TransactionDataset};
use crate::probability::{choice_probabilities, log_likelihood};
use crate::rng::substream;
use crate::simulation::{cyclic_c1_schedule, simulate_replicate, MixtureSpec, SimulationPlan};

pub fn aic(loglik: f64, d: usize) -> f64 {
    -2.0 * loglik + 2.0 * d as f64
}

pub fn bic(loglik: f64, d: usize, n: u64) -> f64 {
    -2.0 * loglik + d as f64 * (n as f64).ln()
}

/// Sum over transactions of `-ln P(chosen outcome)`; equal to the negative
/// log-likelihood. Lower is better.
pub fn reward_index(params: &ParameterSet, ds: &TransactionDataset) -> Result<f64> {
    let ll = log_likelihood(params, ds)?;
    if ll.is_finite() {
        return Ok(-ll);
    }
    for m in 0..ds.periods() {
        let probs = choice_probabilities(params, ds.availability().row(m))?;
        for (outcome, &c) in ds.counts(m).iter().enumerate() {
            if c > 0 && probs.prob(outcome) == 0.0 {
                return Err(Error::ZeroProbabilityChoice {
                    period: m + 1,
                    outcome,
                });
            }
        }
    }
    Err(Error::InvalidParameters(
        "log-likelihood is not finite for these parameters".into(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GofResult {
    /// Offer set as a 0/1 string over items `1..=n`.
    pub signature: String,
    pub matching_periods: usize,
    /// Pooled transactions over the matching periods.
    pub transactions: u64,
    /// Cells: no-purchase, then each offered item in ascending order.
    pub cells: Vec<usize>,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    pub statistic: f64,
    pub dof: usize,
    /// Every expected cell count exceeds 10.
    pub applicable: bool,
    pub p_value: Option<f64>,
    pub bootstrap_median_p: Option<f64>,
    pub bootstrap_resamples: Option<usize>,
}

fn chi_square(observed: &[u64], probs: &[f64]) -> (f64, Vec<f64>) {
    let total: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| total as f64 * p).collect();
    let stat = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| {
            if e > 0.0 {
                (o as f64 - e).powi(2) / e
            } else if o > 0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    (stat, expected)
}

fn tail_p(statistic: f64, dof: usize) -> f64 {
    if dof == 0 || statistic == 0.0 {
        return if statistic > 0.0 { 0.0 } else { 1.0 };
    }
    if !statistic.is_finite() {
        return 0.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    dist.sf(statistic).clamp(0.0, 1.0)
}

struct Pool {
    signature: String,
    matching: usize,
    cells: Vec<usize>,
    observed: Vec<u64>,
    probs: Vec<f64>,
}

fn pool(params: &ParameterSet, ds: &TransactionDataset, signature: &[bool]) -> Result<Pool> {
    let n = ds.items();
    if params.n() != n || signature.len() != n {
        return Err(Error::DimensionMismatch {
            what: "offer signature width",
            expected: n,
            found: if params.n() != n { params.n() } else { signature.len() },
        });
    }
    ds.ensure_valid()?;
    let cells: Vec<usize> = std::iter::once(0)
        .chain((1..=n).filter(|&j| signature[j - 1]))
        .collect();
    let mut observed = vec![0u64; cells.len()];
    let mut matching = 0;
    for m in 0..ds.periods() {
        if ds.availability().row(m) != signature {
            continue;
        }
        matching += 1;
        let counts = ds.counts(m);
        for (o, &j) in observed.iter_mut().zip(&cells) {
            *o += counts[j];
        }
    }
    if matching == 0 {
        return Err(Error::NoMatchingPeriods);
    }
    if observed.iter().all(|&c| c == 0) {
        return Err(Error::NoTransactions("the periods matching the offer set"));
    }
    let dist = choice_probabilities(params, signature)?;
    let probs = cells.iter().map(|&j| dist.prob(j)).collect();
    Ok(Pool {
        signature: pattern_string(signature),
        matching,
        cells,
        observed,
        probs,
    })
}

/// Pearson chi-square of the pooled counts over the periods offering exactly
/// `signature` against the model's multinomial.
pub fn chi_square_gof(params: &ParameterSet, ds: &TransactionDataset, signature: &[bool]) -> Result<GofResult> {
    let pool = pool(params, ds, signature)?;
    Ok(gof_from_pool(&pool))
}

fn gof_from_pool(pool: &Pool) -> GofResult {
    let (statistic, expected) = chi_square(&pool.observed, &pool.probs);
    let dof = pool.cells.len() - 1;
    let applicable = expected.iter().all(|&e| e > 10.0);
    GofResult {
        signature: pool.signature.clone(),
        matching_periods: pool.matching,
        transactions: pool.observed.iter().sum(),
        cells: pool.cells.clone(),
        observed: pool.observed.clone(),
        expected,
        statistic,
        dof,
        applicable,
        p_value: applicable.then(|| tail_p(statistic, dof)),
        bootstrap_median_p: None,
        bootstrap_resamples: None,
    }
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Bootstrap p-values of the pooled chi-square test.
///
/// Each of the `resamples` rounds draws the pooled number of transactions
/// with replacement from the pooled transactions (stream = round index) and
/// computes the chi-square tail probability against `params`; the result
/// carries the median over rounds.
pub fn bootstrap_pvalue(
    params: &ParameterSet,
    ds: &TransactionDataset,
    signature: &[bool],
    resamples: usize,
    seed: u64,
) -> Result<GofResult> {
    if resamples == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one resample".into()));
    }
    let pool = pool(params, ds, signature)?;
    let mut out = gof_from_pool(&pool);
    let total: u64 = pool.observed.iter().sum();
    let mut acc = 0u64;
    let cumulative: Vec<u64> = pool
        .observed
        .iter()
        .map(|&c| {
            acc += c;
            acc
        })
        .collect();
    let mut ps: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r);
            let mut counts = vec![0u64; pool.cells.len()];
            for _ in 0..total {
                let t = rand::Rng::random_range(&mut rng, 0..total);
                let cell = cumulative.partition_point(|&c| c <= t);
                counts[cell] += 1;
            }
            let (stat, _) = chi_square(&counts, &pool.probs);
            tail_p(stat, out.dof)
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    out.bootstrap_median_p = Some(median(&ps));
    out.bootstrap_resamples = Some(resamples);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelScore {
    pub name: String,
    pub loglik: f64,
    /// Number of estimated parameters.
    pub d: usize,
    pub aic: f64,
    pub bic: f64,
    pub reward_index: f64,
}

/// Differences `first - second`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDelta {
    pub first: String,
    pub second: String,
    pub delta_loglik: f64,
    pub delta_aic: f64,
    pub delta_bic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// BIC sample size: total transactions of the scored dataset.
    pub sample_size: u64,
    pub models: Vec<ModelScore>,
    /// One entry per unordered pair, in input order.
    pub deltas: Vec<PairDelta>,
}

impl ComparisonReport {
    /// Recomputes AIC, BIC, reward index and deltas from the stored fields.
    pub fn identities_hold(&self) -> bool {
        let scores = self.models.iter().all(|m| {
            m.aic == aic(m.loglik, m.d)
                && m.bic == bic(m.loglik, m.d, self.sample_size)
                && m.reward_index == -m.loglik
        });
        let deltas = self.deltas.iter().all(|d| {
            let find = |name: &str| self.models.iter().find(|m| m.name == name);
            match (find(&d.first), find(&d.second)) {
                (Some(a), Some(b)) => {
                    d.delta_loglik == a.loglik - b.loglik
                        && d.delta_aic == a.aic - b.aic
                        && d.delta_bic == a.bic - b.bic
                }
                _ => false,
            }
        });
        scores && deltas
    }
}

/// Scores each named fit on `ds`.
pub fn compare_models(fits: &[(String, FitResult)], ds: &TransactionDataset) -> Result<ComparisonReport> {
    let sample_size = ds.total_transactions();
    let models = fits
        .iter()
        .map(|(name, fit)| {
            let loglik = log_likelihood(&fit.params, ds)?;
            let d = fit.dof();
            Ok(ModelScore {
                name: name.clone(),
                loglik,
                d,
                aic: aic(loglik, d),
                bic: bic(loglik, d, sample_size),
                reward_index: reward_index(&fit.params, ds)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut deltas = Vec::new();
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            deltas.push(PairDelta {
                first: a.name.clone(),
                second: b.name.clone(),
                delta_loglik: a.loglik - b.loglik,
                delta_aic: a.aic - b.aic,
                delta_bic: a.bic - b.bic,
            });
        }
    }
    Ok(ComparisonReport {
        sample_size,
        models,
        deltas,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryError {
    pub index: ParamIndex,
    pub truth: f64,
    pub estimate: f64,
    /// `|estimate - truth| / |truth|`, or `|estimate|` when the truth is 0.
    pub error: f64,
    /// False when `error` is absolute because the truth is 0.
    pub relative: bool,
}

/// Per-parameter recovery error over every `mu` and off-diagonal `alpha`.
pub fn recovery_error(truth: &ParameterSet, fitted: &FitResult) -> Result<Vec<RecoveryError>> {
    let n = truth.n();
    if fitted.params.n() != n {
        return Err(Error::DimensionMismatch {
            what: "fitted item count",
            expected: n,
            found: fitted.params.n(),
        });
    }
    let indices = (1..=n).map(ParamIndex::Mu).chain((1..=n).flat_map(|i| {
        (1..=n)
            .filter(move |&p| p != i)
            .map(move |p| ParamIndex::Alpha { absent: i, affected: p })
    }));
    Ok(indices
        .map(|index| {
            let t = truth.get(index);
            let e = fitted.params.get(index);
            let relative = t != 0.0;
            RecoveryError {
                index,
                truth: t,
                estimate: e,
                error: if relative { (e - t).abs() / t.abs() } else { e.abs() },
                relative,
            }
        })
        .collect())
}

/// One cell of an MNL-versus-Halo-MNL grid: data drawn from `truth` on a
/// cyclic C1 schedule, both models fitted and scored in-sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub periods: usize,
    pub arrival_rate: f64,
    /// Simulation stream of this cell.
    pub stream: u64,
    pub transactions: u64,
    /// `MNL - Halo-MNL`.
    pub delta_loglik: f64,
    pub delta_aic: f64,
    pub delta_bic: f64,
    /// Why the cell has no deltas, when a fit failed.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub truth: MixtureSpec,
    pub periods: Vec<usize>,
    pub arrival_rates: Vec<f64>,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

/// Evaluates a single grid cell using simulation stream `stream`.
pub fn grid_cell(
    truth: &MixtureSpec,
    periods: usize,
    arrival_rate: f64,
    seed: u64,
    stream: u64,
    optimizer: &OptimizerConfig,
) -> Result<GridCell> {
    let plan = SimulationPlan {
        schedule: cyclic_c1_schedule(truth.n(), periods)?,
        arrival_rate,
        seed,
        replicates: 1,
    };
    let ds = simulate_replicate(truth, &plan, stream)?;
    let mut cell = GridCell {
        periods,
        arrival_rate,
        stream,
        transactions: ds.total_transactions(),
        delta_loglik: f64::NAN,
        delta_aic: f64::NAN,
        delta_bic: f64::NAN,
        error: None,
    };
    let fits = fit_mnl(&ds, optimizer).and_then(|mnl| {
        let halo = fit_halo(&ds, HaloMethod::Auto, optimizer)?;
        Ok(vec![("mnl".to_string(), mnl), ("halo".to_string(), halo)])
    });
    match fits.and_then(|f| compare_models(&f, &ds)) {
        Ok(report) => {
            let d = &report.deltas[0];
            cell.delta_loglik = d.delta_loglik;
            cell.delta_aic = d.delta_aic;
            cell.delta_bic = d.delta_bic;
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    Ok(cell)
}

/// Every `(periods, arrival_rate)` cell, row-major; cell `k` uses stream `k`.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<GridCell>> {
    spec.optimizer.validate()?;
    let jobs: Vec<(usize, f64)> = spec
        .periods
        .iter()
        .flat_map(|&t| spec.arrival_rates.iter().map(move |&a| (t, a)))
        .collect();
    jobs.par_iter()
        .enumerate()
        .map(|(k, &(t, a))| grid_cell(&spec.truth, t, a, spec.seed, k as u64, &spec.optimizer))
        .collect()
}

/// Renders grid cells as CSV: one row per period count and metric
/// (`dL`, `dAIC`, `dBIC`), one column per arrival rate.
pub fn grid_csv(cells: &[GridCell]) -> String {
    let mut periods: Vec<usize> = cells.iter().map(|c| c.periods).collect();
    periods.dedup();
    let mut rates: Vec<f64> = Vec::new();
    for c in cells {
        if !rates.contains(&c.arrival_rate) {
            rates.push(c.arrival_rate);
        }
    }
    let mut out = String::from("periods,metric");
    for r in &rates {
        out.push_str(&format!(",{r}"));
    }
    out.push('\n');
    type Metric = fn(&GridCell) -> f64;
    let metrics: [(&str, Metric); 3] = [
        ("dL", |c| c.delta_loglik),
        ("dAIC", |c| c.delta_aic),
        ("dBIC", |c| c.delta_bic),
    ];
    for t in &periods {
        for (name, get) in &metrics {
            out.push_str(&format!("{t},{name}"));
            for r in &rates {
                match cells.iter().find(|c| c.periods == *t && c.arrival_rate == *r) {
                    Some(c) if c.error.is_none() => out.push_str(&format!(",{:.4}", get(c))),
                    _ => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
    }
    out
}
