//! Command implementations behind the `halo-mnl` binary.
//!
//! Each command takes a resolved configuration, does its work through the
//! library, writes any data files, and returns a report. Every report
//! starts with a [`ReportHeader`] echoing the tool version, the full
//! configuration, the seed and the SHA-256 of every input file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{fit_halo, fit_mnl, HaloMethod, OptimizerConfig};
use crate::evaluation::{
    bootstrap_pvalue, chi_square_gof, compare_models, grid_csv, run_grid, ComparisonReport, GofResult, GridCell,
    GridSpec,
};
use crate::identifiability::{classify_schedule, pattern_multiplicities, pattern_string, Classification, PeriodPartition};
use crate::io::{
    file_sha256, load_choice_file, load_dataset, read_parameter_file, read_schedule, write_parameter_file,
    write_schedule, write_transactions, LoadedDataset,
};
use crate::model::{validate_dataset, AvailabilityMatrix, FitMethod, FitResult, ParameterMask, TransactionDataset};
use crate::rng::{substream, GENERATOR};
use crate::simulation::{
    appendix_fixture, cyclic_c1_schedule, make_c1_schedule, make_c2_schedule, mmnl_fixture, parse_mixture_document,
    simulate_mmnl, AppendixSet, MixtureSpec, SimulationPlan,
};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputChecksum {
    pub path: String,
    pub sha256: String,
}

fn checksum(path: &Path) -> Result<InputChecksum> {
    Ok(InputChecksum {
        path: path.display().to_string(),
        sha256: file_sha256(path)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportHeader {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub generator: Option<&'static str>,
    pub inputs: Vec<InputChecksum>,
}

impl ReportHeader {
    fn new<C: Serialize>(command: &'static str, config: &C, seed: Option<u64>, inputs: Vec<InputChecksum>) -> Result<Self> {
        Ok(Self {
            tool: TOOL,
            version: VERSION,
            command,
            config: serde_json::to_value(config)?,
            seed,
            generator: seed.map(|_| GENERATOR),
            inputs,
        })
    }
}

/// Where a dataset comes from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "format", rename_all = "kebab-case")]
pub enum DataSource {
    /// Schedule CSV plus transactions CSV.
    Split { schedule: PathBuf, transactions: PathBuf },
    /// One row per transaction with its offer set.
    Choices { path: PathBuf, items: Option<usize> },
}

impl DataSource {
    pub fn load(&self) -> Result<(LoadedDataset, Vec<InputChecksum>)> {
        match self {
            DataSource::Split { schedule, transactions } => Ok((
                load_dataset(schedule, transactions)?,
                vec![checksum(schedule)?, checksum(transactions)?],
            )),
            DataSource::Choices { path, items } => Ok((load_choice_file(path, *items)?, vec![checksum(path)?])),
        }
    }
}

/// Ground truth for simulation: a bundled fixture or a parameter/mixture file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSource {
    Appendix1,
    Appendix2,
    MixtureFixture,
    File(PathBuf),
}

impl std::str::FromStr for ParamSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "appendix:set1" => ParamSource::Appendix1,
            "appendix:set2" => ParamSource::Appendix2,
            "mmnl:three-segment" => ParamSource::MixtureFixture,
            _ if s.contains(':') && !Path::new(s).exists() => {
                return Err(format!(
                    "unknown fixture `{s}`; expected appendix:set1, appendix:set2, mmnl:three-segment or a file path"
                ))
            }
            _ => ParamSource::File(PathBuf::from(s)),
        })
    }
}

impl ParamSource {
    /// Loads the truth, keeping only the first `leading_items` items if given.
    pub fn load(&self, leading_items: Option<usize>) -> Result<(MixtureSpec, Vec<InputChecksum>)> {
        let (mix, inputs) = match self {
            ParamSource::Appendix1 => (MixtureSpec::new(vec![(1.0, appendix_fixture(AppendixSet::Set1))])?, vec![]),
            ParamSource::Appendix2 => (MixtureSpec::new(vec![(1.0, appendix_fixture(AppendixSet::Set2))])?, vec![]),
            ParamSource::MixtureFixture => (mmnl_fixture(), vec![]),
            ParamSource::File(path) => {
                let text = fs::read_to_string(path)?;
                let value: serde_json::Value = serde_json::from_str(&text)?;
                let mix = if value.get("segments").is_some() {
                    parse_mixture_document(&text)?
                } else {
                    MixtureSpec::new(vec![(1.0, read_parameter_file(path)?.0)])?
                };
                (mix, vec![checksum(path)?])
            }
        };
        let mix = match leading_items {
            None => mix,
            Some(k) => MixtureSpec::new(
                mix.segments()
                    .iter()
                    .map(|(f, p)| Ok((*f, p.leading_items(k)?)))
                    .collect::<Result<Vec<_>>>()?,
            )?,
        };
        Ok((mix, inputs))
    }
}

/// Offer-set schedule: generated from a template or read from a CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleSource {
    C1 { n: usize, full: usize, single: usize },
    C2 { n: usize, full: usize, prefix: usize },
    Cyclic { n: usize, periods: usize },
    File { path: PathBuf },
}

impl std::str::FromStr for ScheduleSource {
    type Err = String;

    /// `c1:n=10,full=2,single=2`, `c2:n=3,full=2,prefix=2`,
    /// `cyclic:n=9,periods=500`, or a schedule CSV path.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let Some((kind, args)) = s.split_once(':').filter(|(k, _)| ["c1", "c2", "cyclic"].contains(k)) else {
            return Ok(ScheduleSource::File { path: PathBuf::from(s) });
        };
        let mut kv = BTreeMap::new();
        for part in args.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value in `{part}`"))?;
            let v: usize = v.trim().parse().map_err(|_| format!("`{v}` is not a count"))?;
            kv.insert(k.trim().to_string(), v);
        }
        let mut take = |key: &str| kv.remove(key).ok_or_else(|| format!("schedule `{kind}` needs `{key}=`"));
        let out = match kind {
            "c1" => ScheduleSource::C1 {
                n: take("n")?,
                full: take("full")?,
                single: take("single")?,
            },
            "c2" => ScheduleSource::C2 {
                n: take("n")?,
                full: take("full")?,
                prefix: take("prefix")?,
            },
            _ => ScheduleSource::Cyclic {
                n: take("n")?,
                periods: take("periods")?,
            },
        };
        if let Some(extra) = kv.keys().next() {
            return Err(format!("unknown schedule key `{extra}`"));
        }
        Ok(out)
    }
}

impl ScheduleSource {
    pub fn build(&self) -> Result<(Vec<String>, AvailabilityMatrix, Vec<InputChecksum>)> {
        let q = match *self {
            ScheduleSource::C1 { n, full, single } => make_c1_schedule(n, full, single)?,
            ScheduleSource::C2 { n, full, prefix } => make_c2_schedule(n, full, prefix)?,
            ScheduleSource::Cyclic { n, periods } => cyclic_c1_schedule(n, periods)?,
            ScheduleSource::File { ref path } => {
                let file = fs::File::open(path)?;
                let (ids, q) = read_schedule(std::io::BufReader::new(file), &path.display().to_string())?;
                return Ok((ids, q, vec![checksum(path)?]));
            }
        };
        let ids = (1..=q.periods()).map(|m| m.to_string()).collect();
        Ok((ids, q, Vec::new()))
    }
}

fn mask_doc(mask: &ParameterMask) -> MaskDoc {
    MaskDoc {
        mu: mask.mu_flags().to_vec(),
        alpha: mask.alpha_rows(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaskDoc {
    pub mu: Vec<bool>,
    pub alpha: Vec<Vec<bool>>,
}

// ---------------------------------------------------------------- check

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckConfig {
    pub data: DataSource,
    pub strict: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub header: ReportHeader,
    pub classification: Classification,
    pub items: usize,
    pub periods: usize,
    pub transactions: u64,
    /// Offer-set multiplicities keyed by 0/1 string.
    pub patterns: BTreeMap<String, usize>,
    pub singletons: Vec<String>,
    pub witness: Vec<String>,
    pub partition: PeriodPartition,
    pub identifiable: MaskDoc,
    pub identifiable_count: usize,
    pub violations: Vec<crate::error::Violation>,
}

impl CheckReport {
    pub fn exit_code(&self) -> i32 {
        match self.classification {
            Classification::Neither => 2,
            _ => 0,
        }
    }

    pub fn render_text(&self) -> String {
        let mut s = format!(
            "classification: {}\nitems: {}  periods: {}  transactions: {}\n",
            self.classification, self.items, self.periods, self.transactions
        );
        s.push_str("offer sets (multiplicity):\n");
        for (p, c) in &self.patterns {
            s.push_str(&format!("  {p}  x{c}\n"));
        }
        for w in &self.witness {
            s.push_str(&format!("unmet: {w}\n"));
        }
        let total = self.items * self.items;
        s.push_str(&format!(
            "identifiable parameters: {} of {}\n  mu:    {}\n",
            self.identifiable_count,
            total,
            pattern_string(&self.identifiable.mu)
        ));
        for (i, row) in self.identifiable.alpha.iter().enumerate() {
            let marks: String = row
                .iter()
                .enumerate()
                .map(|(p, &b)| if p == i { '-' } else if b { '1' } else { '0' })
                .collect();
            s.push_str(&format!("  alpha[{}]: {marks}\n", i + 1));
        }
        for v in &self.violations {
            s.push_str(&format!("violation: {v}\n"));
        }
        s
    }
}

pub fn cmd_check(cfg: &CheckConfig) -> Result<CheckReport> {
    let (loaded, inputs) = cfg.data.load()?;
    let ds = &loaded.dataset;
    let report = classify_schedule(ds.availability(), cfg.strict);
    Ok(CheckReport {
        header: ReportHeader::new("check", cfg, None, inputs)?,
        classification: report.classification,
        items: ds.items(),
        periods: ds.periods(),
        transactions: ds.total_transactions(),
        patterns: pattern_multiplicities(ds.availability()),
        singletons: report.singletons,
        witness: report.witness,
        partition: report.partition,
        identifiable_count: report.mask.count(),
        identifiable: mask_doc(&report.mask),
        violations: validate_dataset(ds).violations,
    })
}

// ---------------------------------------------------------------- fit

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mnl,
    Halo,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mnl => "mnl",
            ModelKind::Halo => "halo",
        }
    }

    pub fn fit(self, ds: &TransactionDataset, method: HaloMethod, optimizer: &OptimizerConfig) -> Result<FitResult> {
        match self {
            ModelKind::Mnl => fit_mnl(ds, optimizer),
            ModelKind::Halo => fit_halo(ds, method, optimizer),
        }
    }

    /// Parameters the model has before any identifiability restriction.
    pub fn parameter_count(self, n: usize) -> usize {
        match self {
            ModelKind::Mnl => n,
            ModelKind::Halo => n * n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitConfig {
    pub data: DataSource,
    pub model: ModelKind,
    pub method: HaloMethod,
    pub optimizer: OptimizerConfig,
    /// Parameter file to write.
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSummary {
    pub header: ReportHeader,
    pub model: ModelKind,
    pub method: FitMethod,
    pub classification: Classification,
    pub loglik: f64,
    pub d: usize,
    pub aic: f64,
    pub bic: f64,
    pub sample_size: u64,
    /// Estimated parameters over the model's full parameter count.
    pub mask_coverage: f64,
    pub converged: bool,
    pub iterations: usize,
    pub params_file: String,
    pub params_sha256: String,
}

/// Fits, writes the parameter file, and summarizes. A fit that hit the
/// iteration limit is still written and summarized with `converged: false`.
pub fn cmd_fit(cfg: &FitConfig) -> Result<FitSummary> {
    let (loaded, inputs) = cfg.data.load()?;
    let ds = &loaded.dataset;
    let fit = match cfg.model.fit(ds, cfg.method, &cfg.optimizer) {
        Ok(fit) => fit,
        Err(Error::MaxIterationsExceeded { best }) => *best,
        Err(e) => return Err(e),
    };
    write_parameter_file(&cfg.out, &fit.params, Some(&fit.mask))?;
    let n = ds.total_transactions();
    let d = fit.dof();
    Ok(FitSummary {
        header: ReportHeader::new("fit", cfg, None, inputs)?,
        model: cfg.model,
        method: fit.method,
        classification: classify_schedule(ds.availability(), false).classification,
        loglik: fit.loglik,
        d,
        aic: crate::evaluation::aic(fit.loglik, d),
        bic: crate::evaluation::bic(fit.loglik, d, n),
        sample_size: n,
        mask_coverage: d as f64 / cfg.model.parameter_count(ds.items()) as f64,
        converged: fit.converged,
        iterations: fit.iterations,
        params_file: cfg.out.display().to_string(),
        params_sha256: file_sha256(&cfg.out)?,
    })
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub params: ParamSource,
    pub leading_items: Option<usize>,
    pub schedule: ScheduleSource,
    pub arrival_rate: f64,
    pub replicates: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateReport {
    pub header: ReportHeader,
    pub items: usize,
    pub periods: usize,
    pub segments: usize,
    pub schedule_file: String,
    /// Offer sets in period order, as 0/1 strings.
    pub schedule: Vec<String>,
    pub transaction_files: Vec<String>,
    pub transactions: Vec<u64>,
}

pub fn replicate_file_name(r: usize) -> String {
    format!("transactions_{:04}.csv", r + 1)
}

pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<SimulateReport> {
    let (mix, mut inputs) = cfg.params.load(cfg.leading_items)?;
    let (ids, q, schedule_inputs) = cfg.schedule.build()?;
    inputs.extend(schedule_inputs);
    let plan = SimulationPlan {
        schedule: q,
        arrival_rate: cfg.arrival_rate,
        seed: cfg.seed,
        replicates: cfg.replicates,
    };
    let sets = simulate_mmnl(&mix, &plan)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let schedule_path = cfg.out_dir.join("schedule.csv");
    write_schedule(fs::File::create(&schedule_path)?, &ids, &plan.schedule)?;
    let mut files = Vec::new();
    for (r, ds) in sets.iter().enumerate() {
        let path = cfg.out_dir.join(replicate_file_name(r));
        let mut buf = Vec::new();
        write_transactions(&mut buf, &ids, ds)?;
        fs::write(&path, buf)?;
        files.push(path.display().to_string());
    }
    Ok(SimulateReport {
        header: ReportHeader::new("simulate", cfg, Some(cfg.seed), inputs)?,
        items: mix.n(),
        periods: plan.schedule.periods(),
        segments: mix.segments().len(),
        schedule_file: schedule_path.display().to_string(),
        schedule: plan.schedule.rows().map(pattern_string).collect(),
        transaction_files: files,
        transactions: sets.iter().map(TransactionDataset::total_transactions).collect(),
    })
}

// ---------------------------------------------------------------- compare

/// How to form the training set when no separate test data is given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Train on everything and score on the same data.
    None,
    /// Fraction of periods, rounded to the nearest count.
    Fraction(f64),
    /// Exact number of training periods.
    TrainPeriods(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareConfig {
    pub train: DataSource,
    pub test: Option<DataSource>,
    pub split: Split,
    pub models: Vec<ModelKind>,
    pub method: HaloMethod,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub score_train: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitInfo {
    pub name: String,
    pub method: FitMethod,
    pub converged: bool,
    pub iterations: usize,
    pub d: usize,
    /// Parameters of the model left at 0 for lack of training support.
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub header: ReportHeader,
    pub train_periods: Vec<String>,
    pub test_periods: Vec<String>,
    pub fits: Vec<FitInfo>,
    pub test: ComparisonReport,
    pub train: Option<ComparisonReport>,
}

/// Seeded random split of period positions: the first `k` of a shuffle.
pub fn split_periods(periods: usize, train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..periods).collect();
    order.shuffle(&mut substream(seed, 0));
    let mut train_set = order[..train].to_vec();
    let mut test_set = order[train..].to_vec();
    train_set.sort_unstable();
    test_set.sort_unstable();
    (train_set, test_set)
}

pub fn cmd_compare(cfg: &CompareConfig) -> Result<CompareReport> {
    if cfg.models.is_empty() {
        return Err(Error::InvalidConfig("no models to compare".into()));
    }
    let (loaded, mut inputs) = cfg.train.load()?;
    let (train, test) = match &cfg.test {
        Some(source) => {
            if cfg.split != Split::None {
                return Err(Error::InvalidConfig("use either a test dataset or a split, not both".into()));
            }
            let (test, test_inputs) = source.load()?;
            inputs.extend(test_inputs);
            (loaded, test)
        }
        None => {
            let m = loaded.dataset.periods();
            let k = match cfg.split {
                Split::None => m,
                Split::Fraction(f) if (0.0..=1.0).contains(&f) => (f * m as f64).round() as usize,
                Split::Fraction(f) => return Err(Error::InvalidConfig(format!("split fraction {f} outside [0, 1]"))),
                Split::TrainPeriods(k) => k,
            };
            if cfg.split == Split::None {
                (loaded.clone(), loaded)
            } else {
                if k > m {
                    return Err(Error::InvalidConfig(format!("{k} training periods requested, only {m} available")));
                }
                let (tr, te) = split_periods(m, k, cfg.seed);
                (loaded.select(&tr), loaded.select(&te))
            }
        }
    };
    if train.dataset.periods() == 0 || train.dataset.total_transactions() == 0 {
        return Err(Error::NoTransactions("the training set"));
    }
    if test.dataset.periods() == 0 || test.dataset.total_transactions() == 0 {
        return Err(Error::NoTransactions("the test set"));
    }
    if train.dataset.items() != test.dataset.items() {
        return Err(Error::DimensionMismatch {
            what: "test item count",
            expected: train.dataset.items(),
            found: test.dataset.items(),
        });
    }
    let n = train.dataset.items();
    let mut fits = Vec::new();
    let mut info = Vec::new();
    for &model in &cfg.models {
        let fit = model.fit(&train.dataset, cfg.method, &cfg.optimizer)?;
        let mut name = model.name().to_string();
        let dup = fits.iter().filter(|(f, _): &&(String, FitResult)| f.starts_with(&name)).count();
        if dup > 0 {
            name = format!("{name}-{}", dup + 1);
        }
        info.push(FitInfo {
            name: name.clone(),
            method: fit.method,
            converged: fit.converged,
            iterations: fit.iterations,
            d: fit.dof(),
            dropped: model.parameter_count(n) - fit.dof(),
        });
        fits.push((name, fit));
    }
    Ok(CompareReport {
        header: ReportHeader::new("compare", cfg, Some(cfg.seed), inputs)?,
        train_periods: train.period_ids.clone(),
        test_periods: test.period_ids.clone(),
        test: compare_models(&fits, &test.dataset)?,
        train: if cfg.score_train {
            Some(compare_models(&fits, &train.dataset)?)
        } else {
            None
        },
        fits: info,
    })
}

// ---------------------------------------------------------------- gof

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GofConfig {
    pub params: PathBuf,
    pub data: DataSource,
    /// Offer sets as 0/1 strings; empty means every distinct offer set.
    pub signatures: Vec<String>,
    pub bootstrap: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Skipped {
    pub signature: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GofReport {
    pub header: ReportHeader,
    pub results: Vec<GofResult>,
    pub skipped: Vec<Skipped>,
}

fn parse_signature(s: &str, n: usize) -> Result<Vec<bool>> {
    if s.len() != n || !s.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::InvalidConfig(format!(
            "offer signature `{s}` must be {n} characters of 0/1"
        )));
    }
    Ok(s.chars().map(|c| c == '1').collect())
}

pub fn cmd_gof(cfg: &GofConfig) -> Result<GofReport> {
    let (params, _) = read_parameter_file(&cfg.params)?;
    let (loaded, mut inputs) = cfg.data.load()?;
    inputs.insert(0, checksum(&cfg.params)?);
    let ds = &loaded.dataset;
    let all = cfg.signatures.is_empty();
    let signatures: Vec<String> = if all {
        pattern_multiplicities(ds.availability()).into_keys().collect()
    } else {
        cfg.signatures.clone()
    };
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for s in signatures {
        let sig = parse_signature(&s, ds.items())?;
        let res = if cfg.bootstrap > 0 {
            bootstrap_pvalue(&params, ds, &sig, cfg.bootstrap, cfg.seed)
        } else {
            chi_square_gof(&params, ds, &sig)
        };
        match res {
            Ok(r) => results.push(r),
            Err(e @ (Error::NoMatchingPeriods | Error::NoTransactions(_))) => skipped.push(Skipped {
                signature: s,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(GofReport {
        header: ReportHeader::new("gof", cfg, Some(cfg.seed), inputs)?,
        results,
        skipped,
    })
}

// ---------------------------------------------------------------- grid

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridConfig {
    pub truth: ParamSource,
    pub leading_items: Option<usize>,
    pub periods: Vec<usize>,
    pub arrival_rates: Vec<f64>,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// CSV table to write.
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridReport {
    pub header: ReportHeader,
    pub table_file: String,
    pub cells: Vec<GridCell>,
}

pub fn cmd_grid(cfg: &GridConfig) -> Result<GridReport> {
    let (truth, inputs) = cfg.truth.load(cfg.leading_items)?;
    let cells = run_grid(&GridSpec {
        truth,
        periods: cfg.periods.clone(),
        arrival_rates: cfg.arrival_rates.clone(),
        seed: cfg.seed,
        optimizer: cfg.optimizer.clone(),
    })?;
    fs::write(&cfg.out, grid_csv(&cells))?;
    Ok(GridReport {
        header: ReportHeader::new("grid", cfg, Some(cfg.seed), inputs)?,
        table_file: cfg.out.display().to_string(),
        cells,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}
