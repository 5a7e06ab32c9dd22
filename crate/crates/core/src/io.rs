//! File formats.
//!
//! * Schedule CSV: header `period_id,a1,...,aN`, one row per period, entries 0/1.
//! * Transactions CSV: header `period_id,item_id,count`; item 0 is no-purchase.
//!   Missing rows mean zero; repeated rows are summed.
//! * Choice CSV (transaction-shaped): header `period_id,offered_items,chosen_item`
//!   with semicolon-separated offered items; aggregated per period on load.
//! * Parameter document: JSON with `n`, `mu`, `alpha` and an optional
//!   `mask`, reals written with 17 significant digits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{AvailabilityMatrix, ParameterMask, ParameterSet, TransactionDataset};

/// A dataset together with the period labels it was read with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadedDataset {
    pub period_ids: Vec<String>,
    pub dataset: TransactionDataset,
}

impl LoadedDataset {
    pub fn select(&self, periods: &[usize]) -> Self {
        Self {
            period_ids: periods.iter().map(|&m| self.period_ids[m].clone()).collect(),
            dataset: self.dataset.select(periods),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader)
}

/// Yields `(line, record)` after checking the header against `expected`
/// (a prefix match when `prefix_only`).
fn records<R: Read>(
    reader: R,
    source: &str,
    expected: &[&str],
) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv_reader(reader);
    let mut out = Vec::new();
    let mut header_seen = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if !header_seen {
            let got: Vec<&str> = rec.iter().collect();
            if got != expected {
                return Err(parse_err(
                    source,
                    line,
                    format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
                ));
            }
            header_seen = true;
            continue;
        }
        out.push((line, rec));
    }
    if !header_seen {
        return Err(parse_err(source, 1, "missing header"));
    }
    Ok(out)
}

/// Reads a schedule CSV; the item count comes from the header.
pub fn read_schedule<R: Read>(reader: R, source: &str) -> Result<(Vec<String>, AvailabilityMatrix)> {
    let mut rdr = csv_reader(reader);
    let mut iter = rdr.records();
    let header = loop {
        match iter.next() {
            None => return Err(parse_err(source, 1, "missing header")),
            Some(rec) => {
                let rec = rec.map_err(|e| parse_err(source, 1, e.to_string()))?;
                if !rec.iter().all(str::is_empty) {
                    break rec;
                }
            }
        }
    };
    let header_line = header.position().map_or(1, |p| p.line() as usize);
    let n = header.len().saturating_sub(1);
    let well_formed = header.get(0) == Some("period_id")
        && n > 0
        && header
            .iter()
            .skip(1)
            .enumerate()
            .all(|(j, h)| h == format!("a{}", j + 1));
    if !well_formed {
        return Err(parse_err(
            source,
            header_line,
            "expected header `period_id,a1,...,aN`",
        ));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for rec in iter {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != n + 1 {
            return Err(parse_err(
                source,
                line,
                format!("expected {} fields, found {}", n + 1, rec.len()),
            ));
        }
        let id = rec[0].to_string();
        if seen.insert(id.clone(), line).is_some() {
            return Err(parse_err(source, line, format!("duplicate period_id `{id}`")));
        }
        let row = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, v)| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(parse_err(
                    source,
                    line,
                    format!("availability of item {} must be 0 or 1, found `{v}`", j + 1),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        ids.push(id);
        rows.push(row);
    }
    Ok((ids, AvailabilityMatrix::new(n, rows)?))
}

/// Reads transaction counts for the periods of an already-loaded schedule.
pub fn read_transactions<R: Read>(
    reader: R,
    source: &str,
    period_ids: &[String],
    availability: AvailabilityMatrix,
) -> Result<TransactionDataset> {
    let n = availability.items();
    let index: HashMap<&str, usize> = period_ids
        .iter()
        .enumerate()
        .map(|(m, id)| (id.as_str(), m))
        .collect();
    let mut ds = TransactionDataset::empty(availability);
    for (line, rec) in records(reader, source, &["period_id", "item_id", "count"])? {
        if rec.len() != 3 {
            return Err(parse_err(source, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let m = *index
            .get(&rec[0])
            .ok_or_else(|| parse_err(source, line, format!("unknown period_id `{}`", &rec[0])))?;
        let item: usize = rec[1]
            .parse()
            .map_err(|_| parse_err(source, line, format!("bad item_id `{}`", &rec[1])))?;
        if item > n {
            return Err(parse_err(source, line, format!("item_id {item} exceeds {n}")));
        }
        let count: u64 = rec[2]
            .parse()
            .map_err(|_| parse_err(source, line, format!("bad count `{}`", &rec[2])))?;
        ds.counts_mut(m)[item] += count;
    }
    Ok(ds)
}

pub fn load_dataset(schedule: &Path, transactions: &Path) -> Result<LoadedDataset> {
    let (ids, q) = read_schedule(
        BufReader::new(File::open(schedule)?),
        &schedule.display().to_string(),
    )?;
    let dataset = read_transactions(
        BufReader::new(File::open(transactions)?),
        &transactions.display().to_string(),
        &ids,
        q,
    )?;
    Ok(LoadedDataset {
        period_ids: ids,
        dataset,
    })
}

/// Reads one-row-per-transaction data. `items` fixes the item count;
/// otherwise it is the largest item id seen. Periods keep first-seen order.
pub fn read_choice_rows<R: Read>(reader: R, source: &str, items: Option<usize>) -> Result<LoadedDataset> {
    struct Period {
        offered: Vec<usize>,
        choices: Vec<usize>,
        line: usize,
    }
    let mut order: Vec<String> = Vec::new();
    let mut periods: HashMap<String, Period> = HashMap::new();
    let mut max_item = 0;
    for (line, rec) in records(reader, source, &["period_id", "offered_items", "chosen_item"])? {
        if rec.len() != 3 {
            return Err(parse_err(source, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let mut offered = rec[1]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&j| j > 0)
                    .ok_or_else(|| parse_err(source, line, format!("bad offered item `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        offered.sort_unstable();
        offered.dedup();
        let chosen: usize = rec[2]
            .parse()
            .map_err(|_| parse_err(source, line, format!("bad chosen_item `{}`", &rec[2])))?;
        if chosen != 0 && offered.binary_search(&chosen).is_err() {
            return Err(parse_err(
                source,
                line,
                format!("chosen item {chosen} is not in the offer set"),
            ));
        }
        max_item = max_item.max(offered.last().copied().unwrap_or(0)).max(chosen);
        let id = rec[0].to_string();
        match periods.get_mut(&id) {
            Some(p) => {
                if p.offered != offered {
                    return Err(parse_err(
                        source,
                        line,
                        format!(
                            "period `{id}` has a different offer set than on line {}",
                            p.line
                        ),
                    ));
                }
                p.choices.push(chosen);
            }
            None => {
                order.push(id.clone());
                periods.insert(
                    id,
                    Period {
                        offered,
                        choices: vec![chosen],
                        line,
                    },
                );
            }
        }
    }
    let n = match items {
        Some(n) if n < max_item => {
            return Err(parse_err(source, 0, format!("item id {max_item} exceeds --items {n}")))
        }
        Some(n) => n,
        None => max_item,
    };
    if n == 0 {
        return Err(parse_err(source, 0, "no items found"));
    }
    let rows = order
        .iter()
        .map(|id| {
            let mut row = vec![false; n];
            for &j in &periods[id].offered {
                row[j - 1] = true;
            }
            row
        })
        .collect();
    let mut ds = TransactionDataset::empty(AvailabilityMatrix::new(n, rows)?);
    for (m, id) in order.iter().enumerate() {
        for &c in &periods[id].choices {
            ds.counts_mut(m)[c] += 1;
        }
    }
    Ok(LoadedDataset {
        period_ids: order,
        dataset: ds,
    })
}

pub fn load_choice_file(path: &Path, items: Option<usize>) -> Result<LoadedDataset> {
    read_choice_rows(
        BufReader::new(File::open(path)?),
        &path.display().to_string(),
        items,
    )
}

pub fn write_schedule<W: Write>(mut w: W, period_ids: &[String], q: &AvailabilityMatrix) -> Result<()> {
    let mut header = String::from("period_id");
    for j in 1..=q.items() {
        write!(header, ",a{j}").unwrap();
    }
    writeln!(w, "{header}")?;
    for (id, row) in period_ids.iter().zip(q.rows()) {
        let mut line = id.clone();
        for &x in row {
            line.push_str(if x { ",1" } else { ",0" });
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// One row per period and outcome that can occur (no-purchase plus offered
/// items), zeros included, period-major then item ascending.
pub fn write_transactions<W: Write>(mut w: W, period_ids: &[String], ds: &TransactionDataset) -> Result<()> {
    writeln!(w, "period_id,item_id,count")?;
    for (m, id) in period_ids.iter().enumerate() {
        let row = ds.availability().row(m);
        let counts = ds.counts(m);
        writeln!(w, "{id},0,{}", counts[0])?;
        for j in 1..=ds.items() {
            if row[j - 1] {
                writeln!(w, "{id},{j},{}", counts[j])?;
            }
        }
    }
    Ok(())
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_reals(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|&v| fmt_real(v)).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_bools(values: &[bool]) -> String {
    let parts: Vec<&str> = values.iter().map(|&b| if b { "true" } else { "false" }).collect();
    format!("[{}]", parts.join(", "))
}

/// Renders a parameter document.
pub fn parameter_document(params: &ParameterSet, mask: Option<&ParameterMask>) -> String {
    let n = params.n();
    let mut s = String::new();
    writeln!(s, "{{").unwrap();
    writeln!(s, "  \"n\": {n},").unwrap();
    writeln!(s, "  \"mu\": {},", fmt_reals(params.mu_values())).unwrap();
    writeln!(s, "  \"alpha\": [").unwrap();
    for (i, row) in params.alpha_values().chunks(n).enumerate() {
        let sep = if i + 1 < n { "," } else { "" };
        writeln!(s, "    {}{sep}", fmt_reals(row)).unwrap();
    }
    match mask {
        None => writeln!(s, "  ]").unwrap(),
        Some(mask) => {
            writeln!(s, "  ],").unwrap();
            writeln!(s, "  \"mask\": {{").unwrap();
            writeln!(s, "    \"mu\": {},", fmt_bools(mask.mu_flags())).unwrap();
            writeln!(s, "    \"alpha\": [").unwrap();
            for (i, row) in mask.alpha_flags().chunks(n).enumerate() {
                let sep = if i + 1 < n { "," } else { "" };
                writeln!(s, "      {}{sep}", fmt_bools(row)).unwrap();
            }
            writeln!(s, "    ]").unwrap();
            writeln!(s, "  }}").unwrap();
        }
    }
    writeln!(s, "}}").unwrap();
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterDoc {
    n: usize,
    mu: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    #[serde(default)]
    mask: Option<MaskDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskDoc {
    mu: Vec<bool>,
    alpha: Vec<Vec<bool>>,
}

pub fn parse_parameter_document(text: &str) -> Result<(ParameterSet, Option<ParameterMask>)> {
    let doc: ParameterDoc = serde_json::from_str(text)?;
    if doc.mu.len() != doc.n {
        return Err(Error::DimensionMismatch {
            what: "mu",
            expected: doc.n,
            found: doc.mu.len(),
        });
    }
    let params = ParameterSet::new(doc.mu, doc.alpha)?;
    let mask = doc
        .mask
        .map(|m| ParameterMask::from_parts(doc.n, m.mu, m.alpha))
        .transpose()?;
    Ok((params, mask))
}

pub fn read_parameter_file(path: &Path) -> Result<(ParameterSet, Option<ParameterMask>)> {
    parse_parameter_document(&std::fs::read_to_string(path)?)
}

pub fn write_parameter_file(path: &Path, params: &ParameterSet, mask: Option<&ParameterMask>) -> Result<()> {
    std::fs::write(path, parameter_document(params, mask))?;
    Ok(())
}
