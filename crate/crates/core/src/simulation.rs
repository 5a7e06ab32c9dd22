//! Synthetic demand: offer-set schedules, Halo-MNL and mixed-MNL choice
//! streams with Poisson arrivals, and the bundled ground-truth fixtures.
//!
//! Draw order per replicate (stream = replicate index): for each period in
//! row order, one Poisson draw for the arrival count, then for each arrival
//! one uniform for the segment (mixtures with two or more segments only)
//! and one uniform for the outcome.

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::{parse_parameter_document, sha256_hex};
use crate::model::{AvailabilityMatrix, ParameterSet, TransactionDataset};
use crate::probability::choice_probabilities;
use crate::rng::{categorical, poisson, substream, uniform};

/// Finite mixture of choice models with population fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    segments: Vec<(f64, ParameterSet)>,
}

impl MixtureSpec {
    pub fn new(segments: Vec<(f64, ParameterSet)>) -> Result<Self> {
        let Some((_, first)) = segments.first() else {
            return Err(Error::InvalidConfig("mixture needs at least one segment".into()));
        };
        let n = first.n();
        for (k, (f, p)) in segments.iter().enumerate() {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "segment {} fraction {f} outside (0, 1]",
                    k + 1
                )));
            }
            if p.n() != n {
                return Err(Error::DimensionMismatch {
                    what: "segment item count",
                    expected: n,
                    found: p.n(),
                });
            }
        }
        let total: f64 = segments.iter().map(|(f, _)| f).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "segment fractions sum to {total}, expected 1"
            )));
        }
        Ok(Self { segments })
    }

    pub fn n(&self) -> usize {
        self.segments[0].1.n()
    }

    pub fn segments(&self) -> &[(f64, ParameterSet)] {
        &self.segments
    }

    /// Fraction-weighted average of the segment choice probabilities.
    pub fn choice_probabilities(&self, availability: &[bool]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n() + 1];
        for (f, p) in &self.segments {
            let d = choice_probabilities(p, availability)?;
            for (o, q) in out.iter_mut().zip(d.probs()) {
                *o += f * q;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationPlan {
    pub schedule: AvailabilityMatrix,
    /// Mean Poisson arrivals per period.
    pub arrival_rate: f64,
    pub seed: u64,
    pub replicates: usize,
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "arrival rate must be positive, got {}",
                self.arrival_rate
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_reps(what: &str, reps: usize) -> Result<()> {
    if reps < 2 {
        return Err(Error::InvalidConfig(format!("{what} must be at least 2, got {reps}")));
    }
    Ok(())
}

fn single_missing_row(n: usize, i: usize) -> Vec<bool> {
    (1..=n).map(|j| j != i).collect()
}

/// `reps_full` all-ones rows, then `reps_single` copies of each row missing
/// exactly item `i`, for `i = 1..=n`.
pub fn make_c1_schedule(n: usize, reps_full: usize, reps_single: usize) -> Result<AvailabilityMatrix> {
    check_reps("reps_full", reps_full)?;
    check_reps("reps_single", reps_single)?;
    if n == 0 {
        return Err(Error::InvalidConfig("schedule needs at least one item".into()));
    }
    let mut rows = vec![vec![true; n]; reps_full];
    for i in 1..=n {
        rows.extend(std::iter::repeat_n(single_missing_row(n, i), reps_single));
    }
    AvailabilityMatrix::new(n, rows)
}

/// `reps_full` all-ones rows, then `reps_prefix` copies of each row missing
/// exactly items `1..=i`, for `i = 1..n`.
pub fn make_c2_schedule(n: usize, reps_full: usize, reps_prefix: usize) -> Result<AvailabilityMatrix> {
    check_reps("reps_full", reps_full)?;
    check_reps("reps_prefix", reps_prefix)?;
    if n < 2 {
        return Err(Error::InvalidConfig("nested schedule needs at least two items".into()));
    }
    let mut rows = vec![vec![true; n]; reps_full];
    for i in 1..n {
        let row: Vec<bool> = (1..=n).map(|j| j > i).collect();
        rows.extend(std::iter::repeat_n(row, reps_prefix));
    }
    AvailabilityMatrix::new(n, rows)
}

/// `periods` rows cycling through the full set and the `n` leave-one-out
/// sets; C1 once `periods >= 2 (n + 1)`.
pub fn cyclic_c1_schedule(n: usize, periods: usize) -> Result<AvailabilityMatrix> {
    if n == 0 || periods == 0 {
        return Err(Error::InvalidConfig("schedule needs items and periods".into()));
    }
    let rows = (0..periods)
        .map(|m| match m % (n + 1) {
            0 => vec![true; n],
            i => single_missing_row(n, i),
        })
        .collect();
    AvailabilityMatrix::new(n, rows)
}

/// Simulates every replicate of `plan`, in replicate order.
pub fn simulate_halo(params: &ParameterSet, plan: &SimulationPlan) -> Result<Vec<TransactionDataset>> {
    let mix = MixtureSpec {
        segments: vec![(1.0, params.clone())],
    };
    simulate_mmnl(&mix, plan)
}

/// Simulates every replicate of `plan`, in replicate order.
pub fn simulate_mmnl(mix: &MixtureSpec, plan: &SimulationPlan) -> Result<Vec<TransactionDataset>> {
    let tables = prepare(mix, plan)?;
    Ok((0..plan.replicates as u64)
        .into_par_iter()
        .map(|r| draw(&tables, plan, r))
        .collect())
}

/// A single replicate; equal to element `replicate` of [`simulate_mmnl`].
pub fn simulate_replicate(mix: &MixtureSpec, plan: &SimulationPlan, replicate: u64) -> Result<TransactionDataset> {
    let tables = prepare(mix, plan)?;
    Ok(draw(&tables, plan, replicate))
}

struct Tables {
    segment_cdf: Vec<f64>,
    // per period, per segment: cumulative outcome probabilities
    outcome_cdf: Vec<Vec<Vec<f64>>>,
}

fn cumulative(probs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let probs: Vec<f64> = probs.into_iter().collect();
    let mut acc = 0.0;
    let mut out: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    // the last outcome with positive mass absorbs round-off below 1
    if let Some(last) = probs.iter().rposition(|&p| p > 0.0) {
        out[last..].fill(f64::INFINITY);
    }
    out
}

fn prepare(mix: &MixtureSpec, plan: &SimulationPlan) -> Result<Tables> {
    plan.validate()?;
    let q = &plan.schedule;
    if q.items() != mix.n() {
        return Err(Error::DimensionMismatch {
            what: "schedule width",
            expected: mix.n(),
            found: q.items(),
        });
    }
    let segment_cdf = cumulative(mix.segments.iter().map(|(f, _)| *f));
    let outcome_cdf = q
        .rows()
        .map(|row| {
            mix.segments
                .iter()
                .map(|(_, p)| Ok(cumulative(choice_probabilities(p, row)?.probs().iter().copied())))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tables {
        segment_cdf,
        outcome_cdf,
    })
}

fn draw(tables: &Tables, plan: &SimulationPlan, replicate: u64) -> TransactionDataset {
    let mut rng = substream(plan.seed, replicate);
    let mut ds = TransactionDataset::empty(plan.schedule.clone());
    let mixed = tables.segment_cdf.len() > 1;
    for (m, per_segment) in tables.outcome_cdf.iter().enumerate() {
        let arrivals = poisson(&mut rng, plan.arrival_rate);
        let counts = ds.counts_mut(m);
        for _ in 0..arrivals {
            let seg = if mixed {
                categorical(&mut rng, &tables.segment_cdf)
            } else {
                0
            };
            let cdf = &per_segment[seg];
            let u = uniform(&mut rng);
            let outcome = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
            counts[outcome] += 1;
        }
    }
    ds
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AppendixSet {
    Set1,
    Set2,
}

const SET1: &str = include_str!("../fixtures/appendix_set1.json");
const SET1_SHA256: &str = "3be4a5e689b5a419977e316c8639f3e35bbb67c94a0ce6b7a8822a13b60bf479";
const SET2: &str = include_str!("../fixtures/appendix_set2.json");
const SET2_SHA256: &str = "40bb5e16d54f6af42d0fe9dea6813b9425b0e3592c4cc626d2ef89c0478e4367";
const MMNL: &str = include_str!("../fixtures/mmnl_three_segment.json");
const MMNL_SHA256: &str = "121555c4f78ebb891cd2b6a01fa005e12d47e1bb68aaf3bc338c0b02ee3c9a76";

fn verified(name: &'static str, text: &'static str, sha: &str) -> Result<&'static str> {
    if sha256_hex(text.as_bytes()) != sha {
        return Err(Error::FixtureChecksum { name });
    }
    Ok(text)
}

/// Bundled ground-truth parameters, 10 items as printed (the tenth item
/// carries all-zero parameters).
pub fn appendix_fixture(which: AppendixSet) -> ParameterSet {
    let text = match which {
        AppendixSet::Set1 => verified("appendix_set1", SET1, SET1_SHA256),
        AppendixSet::Set2 => verified("appendix_set2", SET2, SET2_SHA256),
    }
    .expect("bundled fixture checksum");
    parse_parameter_document(text).expect("bundled fixture parses").0
}

#[derive(Deserialize)]
struct MixtureDoc {
    segments: Vec<SegmentDoc>,
}

#[derive(Deserialize)]
struct SegmentDoc {
    fraction: f64,
    params: serde_json::Value,
}

/// Parses a mixture document: `{"segments": [{"fraction", "params"}]}`
/// where `params` is a parameter document.
pub fn parse_mixture_document(text: &str) -> Result<MixtureSpec> {
    let doc: MixtureDoc = serde_json::from_str(text)?;
    let segments = doc
        .segments
        .into_iter()
        .map(|s| Ok((s.fraction, parse_parameter_document(&s.params.to_string())?.0)))
        .collect::<Result<Vec<_>>>()?;
    MixtureSpec::new(segments)
}

/// Bundled three-segment MNL mixture over 9 items, fractions 0.2/0.5/0.3.
pub fn mmnl_fixture() -> MixtureSpec {
    let text = verified("mmnl_three_segment", MMNL, MMNL_SHA256).expect("bundled fixture checksum");
    parse_mixture_document(text).expect("bundled fixture parses")
}
