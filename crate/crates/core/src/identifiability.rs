//! Offer-set schedule analysis.
//!
//! Two sufficient conditions make every parameter estimable in closed form:
//!
//! * **C1**: the full offer set and every leave-one-out offer set each
//!   appear at least twice.
//! * **C2**: the full offer set and the nested sets missing items `1..i`
//!   (`i = 1..n-1`) each appear at least twice; paired with an absence
//!   matrix restricted to `alpha(i, p)`, `i < p`.
//!
//! Row order is irrelevant. In lenient mode extra rows are tolerated; strict
//! mode rejects rows outside the condition's templates. Independently of
//! the classification, the identifiable mask marks each parameter that has
//! at least one supporting observation pattern.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{AvailabilityMatrix, ParameterMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    C1,
    #[serde(rename = "C2-triangular")]
    C2Triangular,
    #[serde(rename = "neither")]
    Neither,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::C1 => "C1",
            Classification::C2Triangular => "C2-triangular",
            Classification::Neither => "neither",
        })
    }
}

/// Assignment of every period (1-based) to exactly one template group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PeriodPartition {
    pub full_periods: Vec<usize>,
    /// item `i` -> periods where exactly item `i` is missing.
    pub single_missing: BTreeMap<usize, Vec<usize>>,
    /// `i >= 2` -> periods where exactly items `1..=i` are missing.
    /// Missing only item 1 is filed under `single_missing[1]`.
    pub prefix_missing: BTreeMap<usize, Vec<usize>>,
    pub other: Vec<usize>,
}

impl PeriodPartition {
    pub fn single(&self, i: usize) -> &[usize] {
        self.single_missing.get(&i).map_or(&[], Vec::as_slice)
    }

    /// Periods missing exactly items `1..=i`; `i = 0` yields the full periods.
    pub fn prefix(&self, i: usize) -> &[usize] {
        match i {
            0 => &self.full_periods,
            1 => self.single(1),
            _ => self.prefix_missing.get(&i).map_or(&[], Vec::as_slice),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentifiabilityReport {
    pub classification: Classification,
    pub partition: PeriodPartition,
    pub mask: ParameterMask,
    /// One entry per requirement the schedule failed, for both conditions.
    pub witness: Vec<String>,
    /// Offer sets that appear exactly once.
    pub singletons: Vec<String>,
}

/// Renders an availability row as a 0/1 string, e.g. `0111`.
pub fn pattern_string(row: &[bool]) -> String {
    row.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

pub fn partition_periods(q: &AvailabilityMatrix) -> PeriodPartition {
    let n = q.items();
    let mut part = PeriodPartition::default();
    for (m, row) in q.rows().enumerate() {
        let period = m + 1;
        let missing: Vec<usize> = (0..n).filter(|&j| !row[j]).map(|j| j + 1).collect();
        match missing.len() {
            0 => part.full_periods.push(period),
            1 => part
                .single_missing
                .entry(missing[0])
                .or_default()
                .push(period),
            k if k < n && missing.iter().enumerate().all(|(idx, &item)| item == idx + 1) => {
                part.prefix_missing.entry(k).or_default().push(period)
            }
            _ => part.other.push(period),
        }
    }
    part
}

/// Which `mu`/`alpha` entries have at least one supporting observation:
/// `mu[p]` needs a period offering `p`; `alpha[i][p]` a period with `i`
/// absent and `p` offered.
pub fn identifiable_mask(q: &AvailabilityMatrix) -> ParameterMask {
    let n = q.items();
    let mut mu = vec![false; n];
    let mut alpha = vec![vec![false; n]; n];
    for row in q.rows() {
        for p in 0..n {
            if !row[p] {
                continue;
            }
            mu[p] = true;
            for i in 0..n {
                if !row[i] {
                    alpha[i][p] = true;
                }
            }
        }
    }
    ParameterMask::from_parts(n, mu, alpha).expect("mask shape")
}

const MIN_REPEATS: usize = 2;

pub fn classify_schedule(q: &AvailabilityMatrix, strict: bool) -> IdentifiabilityReport {
    let n = q.items();
    let partition = partition_periods(q);
    let mut c1_fail = Vec::new();
    let mut c2_fail = Vec::new();

    if partition.full_periods.len() < MIN_REPEATS {
        let msg = format!(
            "full offer set appears {} time(s), needs {MIN_REPEATS}",
            partition.full_periods.len()
        );
        c1_fail.push(format!("C1: {msg}"));
        c2_fail.push(format!("C2: {msg}"));
    }
    for i in 1..=n {
        let seen = partition.single(i).len();
        if seen < MIN_REPEATS {
            c1_fail.push(format!(
                "C1: offer set missing only item {i} appears {seen} time(s), needs {MIN_REPEATS}"
            ));
        }
    }
    if n < 2 {
        c2_fail.push("C2: needs at least two items".to_string());
    }
    for i in 1..n {
        let seen = partition.prefix(i).len();
        if seen < MIN_REPEATS {
            c2_fail.push(format!(
                "C2: offer set missing items 1..={i} appears {seen} time(s), needs {MIN_REPEATS}"
            ));
        }
    }
    if strict {
        let extra_c1 = partition.other.len()
            + partition.prefix_missing.values().map(Vec::len).sum::<usize>();
        if extra_c1 > 0 {
            c1_fail.push(format!(
                "C1 (strict): {extra_c1} period(s) outside the full/leave-one-out templates"
            ));
        }
        let extra_c2 = partition.other.len()
            + partition
                .single_missing
                .iter()
                .filter(|(&i, _)| i != 1)
                .map(|(_, v)| v.len())
                .sum::<usize>();
        if extra_c2 > 0 {
            c2_fail.push(format!(
                "C2 (strict): {extra_c2} period(s) outside the full/nested-prefix templates"
            ));
        }
    }

    let classification = if c1_fail.is_empty() {
        Classification::C1
    } else if c2_fail.is_empty() {
        Classification::C2Triangular
    } else {
        Classification::Neither
    };
    let witness = match classification {
        Classification::C1 => Vec::new(),
        Classification::C2Triangular => c1_fail,
        Classification::Neither => c1_fail.into_iter().chain(c2_fail).collect(),
    };

    let mut multiplicity: BTreeMap<String, usize> = BTreeMap::new();
    for row in q.rows() {
        *multiplicity.entry(pattern_string(row)).or_default() += 1;
    }
    let singletons = multiplicity
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|(p, _)| p)
        .collect();

    IdentifiabilityReport {
        classification,
        partition,
        mask: identifiable_mask(q),
        witness,
        singletons,
    }
}

/// Multiplicity of each distinct offer set, keyed by its 0/1 string.
pub fn pattern_multiplicities(q: &AvailabilityMatrix) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for row in q.rows() {
        *out.entry(pattern_string(row)).or_default() += 1;
    }
    out
}
