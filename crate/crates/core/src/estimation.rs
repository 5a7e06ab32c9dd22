//! Maximum-likelihood estimation.
//!
//! Under C1 and under C2 with a triangular absence matrix the likelihood
//! splits into saturated multinomials, one per offer-set group, so the
//! maximizer has a closed form built from log count ratios. Everything else
//! goes through [`fit_numerical`], an L-BFGS ascent over the estimated
//! coordinates of a [`ParameterMask`].

use crate::error::{Error, Result, ZeroCell};
use crate::identifiability::{classify_schedule, identifiable_mask, partition_periods, Classification};
use crate::model::{FitMethod, FitResult, ParamIndex, ParameterMask, ParameterSet, TransactionDataset};
use crate::optim::{self, LbfgsConfig, Termination};
use crate::probability::PatternTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    Zeros,
    /// Start from the closed-form estimate when the schedule admits one, else zeros.
    ClosedFormWarmStart,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub improvement_tolerance: f64,
    pub initialization: Initialization,
    /// Additive count `c >= 0`; see the module docs of the estimators.
    pub smoothing: f64,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            gradient_tolerance: 1e-8,
            improvement_tolerance: 1e-12,
            initialization: Initialization::ClosedFormWarmStart,
            smoothing: 0.0,
            memory: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.improvement_tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.smoothing >= 0.0) || !self.smoothing.is_finite() {
            return Err(Error::InvalidConfig("smoothing must be a finite c >= 0".into()));
        }
        Ok(())
    }
}

/// Log of the pooled `z_p / z_0` ratio over `periods` (1-based), plus `smoothing`.
fn log_odds(
    ds: &TransactionDataset,
    periods: &[usize],
    p: usize,
    smoothing: f64,
    group: impl Fn() -> String,
) -> Result<f64> {
    let (mut z0, mut zp) = (0u64, 0u64);
    for &m in periods {
        let c = ds.counts(m - 1);
        z0 += c[0];
        zp += c[p];
    }
    let (z0, zp) = (z0 as f64 + smoothing, zp as f64 + smoothing);
    if z0 == 0.0 {
        return Err(Error::ZeroCellCount {
            cell: ZeroCell { group: group(), outcome: 0 },
        });
    }
    if zp == 0.0 {
        return Err(Error::ZeroCellCount {
            cell: ZeroCell { group: group(), outcome: p },
        });
    }
    Ok((zp / z0).ln())
}

fn check_smoothing(smoothing: f64) -> Result<()> {
    if smoothing >= 0.0 && smoothing.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig("smoothing must be a finite c >= 0".into()))
    }
}

/// Closed-form maximizer under C1:
/// `mu_p = ln(sum_full z_p / sum_full z_0)` and
/// `alpha_ip = ln(sum_{S_i} z_p / sum_{S_i} z_0) - mu_p`, where `S_i` are the
/// periods missing exactly item `i`. Periods outside those groups are ignored.
///
/// `smoothing` is added to every `z_p` and `z_0` sum.
pub fn fit_closed_form_c1(ds: &TransactionDataset, smoothing: f64) -> Result<FitResult> {
    check_smoothing(smoothing)?;
    ds.ensure_valid()?;
    let report = classify_schedule(ds.availability(), false);
    if report.classification != Classification::C1 {
        return Err(Error::NotC1 {
            witness: report
                .witness
                .into_iter()
                .filter(|w| w.starts_with("C1"))
                .collect(),
        });
    }
    let n = ds.items();
    let part = &report.partition;
    let mu = (1..=n)
        .map(|p| log_odds(ds, &part.full_periods, p, smoothing, || "full offer set".into()))
        .collect::<Result<Vec<_>>>()?;
    let mut alpha = vec![0.0; n * n];
    for i in 1..=n {
        for p in (1..=n).filter(|&p| p != i) {
            let ratio = log_odds(ds, part.single(i), p, smoothing, || {
                format!("periods missing only item {i}")
            })?;
            alpha[(i - 1) * n + (p - 1)] = ratio - mu[p - 1];
        }
    }
    finish_closed_form(ds, n, mu, alpha, ParameterMask::all(n), FitMethod::ClosedFormC1)
}

/// Closed-form maximizer under C2 with `alpha(i, p) = 0` unless `i < p`:
/// with `S_i` the periods missing exactly items `1..=i` (`S_0` = full),
/// `alpha_ip = ln(sum_{S_i} z_p / sum_{S_i} z_0) - ln(sum_{S_{i-1}} z_p / sum_{S_{i-1}} z_0)`.
pub fn fit_closed_form_c2_triangular(ds: &TransactionDataset, smoothing: f64) -> Result<FitResult> {
    check_smoothing(smoothing)?;
    ds.ensure_valid()?;
    let n = ds.items();
    let part = partition_periods(ds.availability());
    let mut witness = Vec::new();
    if n < 2 {
        witness.push("C2: needs at least two items".to_string());
    }
    for i in 0..n {
        if part.prefix(i).len() < 2 {
            witness.push(format!(
                "C2: offer set missing items 1..={i} appears {} time(s), needs 2",
                part.prefix(i).len()
            ));
        }
    }
    if !witness.is_empty() {
        return Err(Error::NotC2 { witness });
    }
    let group_name = |i: usize| {
        if i == 0 {
            "full offer set".to_string()
        } else {
            format!("periods missing items 1..={i}")
        }
    };
    // ratios[i][p] = log odds of item p in S_i, defined for p > i
    let mut ratios = vec![vec![0.0; n + 1]; n];
    for (i, row) in ratios.iter_mut().enumerate() {
        for p in (i + 1)..=n {
            row[p] = log_odds(ds, part.prefix(i), p, smoothing, || group_name(i))?;
        }
    }
    let mu: Vec<f64> = (1..=n).map(|p| ratios[0][p]).collect();
    let mut alpha = vec![0.0; n * n];
    for i in 1..n {
        for p in (i + 1)..=n {
            alpha[(i - 1) * n + (p - 1)] = ratios[i][p] - ratios[i - 1][p];
        }
    }
    finish_closed_form(
        ds,
        n,
        mu,
        alpha,
        ParameterMask::upper_triangular(n),
        FitMethod::ClosedFormC2,
    )
}

fn finish_closed_form(
    ds: &TransactionDataset,
    n: usize,
    mu: Vec<f64>,
    alpha: Vec<f64>,
    mask: ParameterMask,
    method: FitMethod,
) -> Result<FitResult> {
    let params = ParameterSet::from_flat(n, mu, alpha)?;
    let loglik = PatternTable::new(ds, 0.0).log_likelihood(&params);
    Ok(FitResult {
        params,
        mask,
        loglik,
        method,
        converged: true,
        iterations: 0,
    })
}

/// Beyond this magnitude a coordinate is treated as running off to infinity.
const DIVERGENCE_BOUND: f64 = 40.0;

/// Estimable coordinates of `mask` given the data, plus the coordinates
/// whose likelihood is monotone (no finite maximizer).
fn supported_mask(table: &PatternTable, mask: &ParameterMask) -> (ParameterMask, Vec<ParamIndex>) {
    let n = table.n;
    let mut out = mask.clone();
    let mut diverging = Vec::new();
    for index in mask.active() {
        let (absent, p) = match index {
            ParamIndex::Mu(p) => (None, p - 1),
            ParamIndex::Alpha { absent, affected } => (Some(absent - 1), affected - 1),
        };
        let (mut kappa, mut chosen) = (0.0, 0.0);
        for pat in &table.patterns {
            if pat.offered[p] && absent.map_or(true, |i| !pat.offered[i]) {
                kappa += pat.kappa;
                chosen += pat.counts[p + 1];
            }
        }
        if kappa == 0.0 {
            out.set(index, false);
        } else if chosen == 0.0 || chosen == kappa {
            diverging.push(index);
        }
    }
    debug_assert_eq!(out.n(), n);
    (out, diverging)
}

fn warm_start(ds: &TransactionDataset, smoothing: f64) -> Option<ParameterSet> {
    match classify_schedule(ds.availability(), false).classification {
        Classification::C1 => fit_closed_form_c1(ds, smoothing).ok().map(|f| f.params),
        Classification::C2Triangular => fit_closed_form_c2_triangular(ds, smoothing)
            .ok()
            .map(|f| f.params),
        Classification::Neither => None,
    }
}

/// Numerical maximum likelihood over the coordinates in `mask`.
///
/// The mask is first intersected with the identifiable mask of the schedule
/// and with the coordinates that have transactions behind them; everything
/// else stays exactly 0. With `cfg.smoothing = c > 0`, `c` is added to
/// every outcome cell of every distinct offer set, which on pure C1/C2
/// schedules coincides with the closed-form smoothing.
pub fn fit_numerical(
    ds: &TransactionDataset,
    mask: &ParameterMask,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    ds.ensure_valid()?;
    let n = ds.items();
    if mask.n() != n {
        return Err(Error::DimensionMismatch {
            what: "mask width",
            expected: n,
            found: mask.n(),
        });
    }
    let table = PatternTable::new(ds, cfg.smoothing);
    let mask = mask.intersect(&identifiable_mask(ds.availability()));
    let (mask, diverging) = supported_mask(&table, &mask);
    if !diverging.is_empty() {
        return Err(Error::NonFiniteObjective {
            coordinates: diverging,
        });
    }
    let active = mask.active();

    let start = match cfg.initialization {
        Initialization::Zeros => None,
        Initialization::ClosedFormWarmStart => warm_start(ds, cfg.smoothing),
    };
    let x0: Vec<f64> = active
        .iter()
        .map(|&ix| start.as_ref().map_or(0.0, |p| p.get(ix)))
        .collect();

    let unpack = |x: &[f64]| -> ParameterSet {
        let mut mu = vec![0.0; n];
        let mut alpha = vec![0.0; n * n];
        for (&ix, &v) in active.iter().zip(x) {
            match ix {
                ParamIndex::Mu(p) => mu[p - 1] = v,
                ParamIndex::Alpha { absent, affected } => alpha[(absent - 1) * n + affected - 1] = v,
            }
        }
        ParameterSet::from_flat(n, mu, alpha).expect("finite coordinates off the diagonal")
    };

    let lbfgs = LbfgsConfig {
        max_iterations: cfg.max_iterations,
        gradient_tolerance: cfg.gradient_tolerance,
        improvement_tolerance: cfg.improvement_tolerance,
        memory: cfg.memory,
    };
    let outcome = optim::minimize(
        |x| {
            if x.iter().any(|v| !v.is_finite()) {
                return (f64::NAN, vec![f64::NAN; x.len()]);
            }
            let (ll, grad) = table.evaluate(&unpack(x));
            let g = active.iter().map(|&ix| -grad.get(ix)).collect();
            (-ll, g)
        },
        x0,
        &lbfgs,
    );

    let runaway: Vec<ParamIndex> = active
        .iter()
        .zip(&outcome.x)
        .filter(|(_, v)| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
        .map(|(&ix, _)| ix)
        .collect();
    if outcome.termination == Termination::NonFinite || !runaway.is_empty() {
        return Err(Error::NonFiniteObjective {
            coordinates: if runaway.is_empty() { active } else { runaway },
        });
    }

    let params = unpack(&outcome.x);
    let loglik = if cfg.smoothing > 0.0 {
        PatternTable::new(ds, 0.0).log_likelihood(&params)
    } else {
        -outcome.f
    };
    let fit = FitResult {
        params,
        mask,
        loglik,
        method: FitMethod::Numerical,
        converged: outcome.termination == Termination::Converged,
        iterations: outcome.iterations,
    };
    if outcome.termination == Termination::MaxIterations {
        return Err(Error::MaxIterationsExceeded { best: Box::new(fit) });
    }
    Ok(fit)
}

/// Classical MNL: [`fit_numerical`] with every `alpha` pinned at 0.
pub fn fit_mnl(ds: &TransactionDataset, cfg: &OptimizerConfig) -> Result<FitResult> {
    fit_numerical(ds, &ParameterMask::mnl(ds.items()), cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaloMethod {
    /// Closed form when the schedule is exactly a C1 or C2 template,
    /// otherwise numerical over the identifiable mask (warm-started).
    Auto,
    /// Closed form under lenient classification; errors otherwise.
    ClosedForm,
    Numerical,
}

/// Fits the full Halo-MNL, restricted to what the schedule identifies.
pub fn fit_halo(
    ds: &TransactionDataset,
    method: HaloMethod,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    let n = ds.items();
    let closed = |class: Classification| match class {
        Classification::C1 => Some(fit_closed_form_c1(ds, cfg.smoothing)),
        Classification::C2Triangular => Some(fit_closed_form_c2_triangular(ds, cfg.smoothing)),
        Classification::Neither => None,
    };
    match method {
        HaloMethod::Auto => {
            let strict = classify_schedule(ds.availability(), true).classification;
            match closed(strict) {
                Some(fit) => fit,
                None => fit_numerical(ds, &ParameterMask::all(n), cfg),
            }
        }
        HaloMethod::ClosedForm => {
            let report = classify_schedule(ds.availability(), false);
            closed(report.classification).unwrap_or(Err(Error::NotC1 {
                witness: report.witness,
            }))
        }
        HaloMethod::Numerical => fit_numerical(ds, &ParameterMask::all(n), cfg),
    }
}
