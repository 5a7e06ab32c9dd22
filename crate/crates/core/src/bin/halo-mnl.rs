use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use halo_mnl::cli::{
    cmd_check, cmd_compare, cmd_fit, cmd_gof, cmd_grid, cmd_simulate, to_json, CheckConfig, CompareConfig,
    DataSource, FitConfig, GofConfig, GridConfig, ModelKind, ParamSource, ScheduleSource, SimulateConfig, Split,
};
use halo_mnl::{Error, HaloMethod, Initialization, OptimizerConfig};

/// Halo-MNL choice modeling: schedule checks, estimation, simulation and model comparison.
#[derive(Parser)]
#[command(name = "halo-mnl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify an offer-set schedule and show which parameters it identifies.
    Check {
        #[command(flatten)]
        data: DataArgs,
        /// Reject periods outside the condition templates.
        #[arg(long)]
        strict: bool,
        /// Also write the machine-readable report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit MNL or Halo-MNL and write a parameter file.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "halo")]
        model: ModelKind,
        #[arg(long, value_enum, default_value = "auto")]
        method: MethodArg,
        #[command(flatten)]
        optimizer: OptimizerArgs,
        /// Parameter file to write.
        #[arg(long)]
        out: PathBuf,
        /// Summary report path (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Simulate transaction data from Halo-MNL or a mixture.
    Simulate {
        /// Parameter or mixture file, or appendix:set1, appendix:set2, mmnl:three-segment.
        #[arg(long)]
        params: ParamSource,
        /// Keep only the first k items of the truth.
        #[arg(long)]
        leading_items: Option<usize>,
        /// Schedule CSV, or c1:n=..,full=..,single=.. / c2:n=..,full=..,prefix=.. / cyclic:n=..,periods=..
        #[arg(long)]
        schedule: ScheduleSource,
        /// Mean Poisson arrivals per period.
        #[arg(long)]
        arrivals: f64,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory for schedule.csv and transactions_NNNN.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit several models on training data and score them on test data.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        /// Test schedule CSV (with --test-transactions).
        #[arg(long, requires = "test_transactions")]
        test_schedule: Option<PathBuf>,
        #[arg(long, requires = "test_schedule")]
        test_transactions: Option<PathBuf>,
        /// Test data as a choice-rows CSV.
        #[arg(long, conflicts_with_all = ["test_schedule", "test_transactions"])]
        test_choices: Option<PathBuf>,
        /// Fraction of periods used for training in a random split.
        #[arg(long, conflicts_with = "train_periods")]
        split: Option<f64>,
        /// Exact number of training periods in a random split.
        #[arg(long)]
        train_periods: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "mnl,halo")]
        models: Vec<ModelKind>,
        #[arg(long, value_enum, default_value = "auto")]
        method: MethodArg,
        #[command(flatten)]
        optimizer: OptimizerArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also score on the training data.
        #[arg(long)]
        score_train: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Chi-square goodness of fit per offer set, with bootstrap median p-values.
    Gof {
        /// Parameter file.
        #[arg(long)]
        params: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Offer set as a 0/1 string; repeatable.
        #[arg(long = "signature", conflicts_with = "all")]
        signatures: Vec<String>,
        /// Every distinct offer set in the data.
        #[arg(long)]
        all: bool,
        /// Bootstrap resamples (0 disables).
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// MNL versus Halo-MNL deltas over a grid of period counts and arrival rates.
    Grid {
        /// Parameter or mixture file, or appendix:set1, appendix:set2, mmnl:three-segment.
        #[arg(long)]
        truth: ParamSource,
        #[arg(long)]
        leading_items: Option<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        periods: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        arrivals: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        optimizer: OptimizerArgs,
        /// CSV table to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Schedule CSV (period_id,a1..aN).
    #[arg(long, requires = "transactions", required_unless_present = "choices")]
    schedule: Option<PathBuf>,
    /// Transactions CSV (period_id,item_id,count).
    #[arg(long, requires = "schedule")]
    transactions: Option<PathBuf>,
    /// Choice-rows CSV (period_id,offered_items,chosen_item).
    #[arg(long, conflicts_with_all = ["schedule", "transactions"])]
    choices: Option<PathBuf>,
    /// Item count for choice-rows input (default: largest item id).
    #[arg(long, requires = "choices")]
    items: Option<usize>,
}

impl DataArgs {
    fn source(self) -> DataSource {
        match (self.schedule, self.transactions, self.choices) {
            (Some(schedule), Some(transactions), _) => DataSource::Split { schedule, transactions },
            (_, _, Some(path)) => DataSource::Choices { path, items: self.items },
            _ => unreachable!("clap enforces one data source"),
        }
    }
}

#[derive(Args)]
struct OptimizerArgs {
    /// Additive count c >= 0 for every outcome cell.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    gradient_tolerance: f64,
    /// Start the numerical fit from zeros instead of the closed form.
    #[arg(long)]
    cold_start: bool,
}

impl OptimizerArgs {
    fn config(self) -> OptimizerConfig {
        OptimizerConfig {
            smoothing: self.smoothing,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            initialization: if self.cold_start {
                Initialization::Zeros
            } else {
                Initialization::ClosedFormWarmStart
            },
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    ClosedForm,
    Numerical,
}

impl From<MethodArg> for HaloMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => HaloMethod::Auto,
            MethodArg::ClosedForm => HaloMethod::ClosedForm,
            MethodArg::Numerical => HaloMethod::Numerical,
        }
    }
}

fn emit(json: String, report: Option<PathBuf>, line: String) -> Result<(), Error> {
    match report {
        Some(path) => {
            std::fs::write(&path, json)?;
            println!("{line}");
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Check { data, strict, report } => {
            let cfg = CheckConfig {
                data: data.source(),
                strict,
            };
            let out = cmd_check(&cfg)?;
            print!("{}", out.render_text());
            if let Some(path) = report {
                std::fs::write(path, to_json(&out)?)?;
            }
            Ok(out.exit_code())
        }
        Command::Fit {
            data,
            model,
            method,
            optimizer,
            out,
            report,
        } => {
            let cfg = FitConfig {
                data: data.source(),
                model,
                method: method.into(),
                optimizer: optimizer.config(),
                out,
            };
            let summary = cmd_fit(&cfg)?;
            let line = format!(
                "{} fit ({}): loglik {:.6}, d {}, AIC {:.4}, BIC {:.4}",
                summary.model.name(),
                summary.method,
                summary.loglik,
                summary.d,
                summary.aic,
                summary.bic
            );
            let code = if summary.converged { 0 } else { 3 };
            emit(to_json(&summary)?, report, line)?;
            if code == 3 {
                eprintln!("warning: optimizer hit the iteration limit; wrote the best iterate");
            }
            Ok(code)
        }
        Command::Simulate {
            params,
            leading_items,
            schedule,
            arrivals,
            replicates,
            seed,
            out,
            report,
        } => {
            let cfg = SimulateConfig {
                params,
                leading_items,
                schedule,
                arrival_rate: arrivals,
                replicates,
                seed,
                out_dir: out,
            };
            let rep = cmd_simulate(&cfg)?;
            let line = format!(
                "wrote {} replicate(s) of {} periods to {}",
                rep.transaction_files.len(),
                rep.periods,
                cfg.out_dir.display()
            );
            emit(to_json(&rep)?, report, line)?;
            Ok(0)
        }
        Command::Compare {
            data,
            test_schedule,
            test_transactions,
            test_choices,
            split,
            train_periods,
            models,
            method,
            optimizer,
            seed,
            score_train,
            report,
        } => {
            let test = match (test_schedule, test_transactions, test_choices) {
                (Some(schedule), Some(transactions), _) => Some(DataSource::Split { schedule, transactions }),
                (_, _, Some(path)) => Some(DataSource::Choices { path, items: None }),
                _ => None,
            };
            let split = match (split, train_periods) {
                (Some(f), _) => Split::Fraction(f),
                (_, Some(k)) => Split::TrainPeriods(k),
                _ => Split::None,
            };
            let cfg = CompareConfig {
                train: data.source(),
                test,
                split,
                models,
                method: method.into(),
                optimizer: optimizer.config(),
                seed,
                score_train,
            };
            let rep = cmd_compare(&cfg)?;
            let mut line = String::new();
            for m in &rep.test.models {
                line.push_str(&format!(
                    "{}: loglik {:.4}, AIC {:.4}, BIC {:.4}, reward {:.4}\n",
                    m.name, m.loglik, m.aic, m.bic, m.reward_index
                ));
            }
            emit(to_json(&rep)?, report, line.trim_end().to_string())?;
            Ok(0)
        }
        Command::Gof {
            params,
            data,
            signatures,
            all: _,
            bootstrap,
            seed,
            report,
        } => {
            let cfg = GofConfig {
                params,
                data: data.source(),
                signatures,
                bootstrap,
                seed,
            };
            let rep = cmd_gof(&cfg)?;
            for s in &rep.skipped {
                eprintln!("warning: skipped offer set {}: {}", s.signature, s.reason);
            }
            let line = format!("{} offer set(s) tested, {} skipped", rep.results.len(), rep.skipped.len());
            emit(to_json(&rep)?, report, line)?;
            Ok(0)
        }
        Command::Grid {
            truth,
            leading_items,
            periods,
            arrivals,
            seed,
            optimizer,
            out,
            report,
        } => {
            let cfg = GridConfig {
                truth,
                leading_items,
                periods,
                arrival_rates: arrivals,
                seed,
                optimizer: optimizer.config(),
                out,
            };
            let rep = cmd_grid(&cfg)?;
            let line = format!("wrote {} cell(s) to {}", rep.cells.len(), rep.table_file);
            emit(to_json(&rep)?, report, line)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    if let Some(threads) = std::env::var("HALO_MNL_THREADS").ok().and_then(|v| v.parse().ok()) {
        // results never depend on the thread count
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::ZeroCellCount { .. }) {
                eprintln!("hint: pass --smoothing c (e.g. 0.5) to add c to every count cell");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
