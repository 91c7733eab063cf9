//! Fold assignment strategies: random per hospital, and stratified by thresholding a
//! single value shared by all copies of a record.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::datagen::{Record, N_COVARIATES};
use crate::error::{invalid, Error, Result};
use crate::federation::{assign_hospitals, parse_usize, FederatedDataset};

/// Per-hospital fold indices, aligned with each hospital's record order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    folds: Vec<Vec<usize>>,
}

impl FoldAssignment {
    pub fn new(k: usize, folds: Vec<Vec<usize>>) -> Result<Self> {
        if k == 0 {
            return Err(invalid("fold count must be >= 1"));
        }
        if let Some(bad) = folds.iter().flatten().find(|&&f| f >= k) {
            return Err(invalid(format!(
                "fold index {bad} out of range for k = {k}"
            )));
        }
        Ok(Self { k, folds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn per_hospital(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn fold_of(&self, hospital: usize, ordinal: usize) -> usize {
        self.folds[hospital][ordinal]
    }

    /// Sizes of the merged (global) folds.
    pub fn global_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in self.folds.iter().flatten() {
            sizes[*f] += 1;
        }
        sizes
    }

    pub fn check_covers(&self, fed: &FederatedDataset) -> Result<()> {
        if self.folds.len() != fed.n_hospitals() {
            return Err(invalid(format!(
                "assignment covers {} hospitals, dataset has {}",
                self.folds.len(),
                fed.n_hospitals()
            )));
        }
        for (h, (f, recs)) in self.folds.iter().zip(&fed.hospitals).enumerate() {
            if f.len() != recs.len() {
                return Err(invalid(format!(
                    "hospital {h}: assignment has {} entries for {} records",
                    f.len(),
                    recs.len()
                )));
            }
        }
        Ok(())
    }
}

/// Shuffles each hospital and cuts it into `k` contiguous chunks whose sizes differ by
/// at most one, the remainder going to the lowest fold indices.
pub fn random_partition<R: Rng + ?Sized>(
    fed: &FederatedDataset,
    k: usize,
    rng: &mut R,
) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(invalid(format!("k must be >= 2, got {k}")));
    }
    let mut folds = Vec::with_capacity(fed.n_hospitals());
    for (h, recs) in fed.hospitals.iter().enumerate() {
        let n = recs.len();
        if n < k {
            log::warn!("hospital {h} holds {n} records for k = {k}; some of its folds are empty");
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let (base, rem) = (n / k, n % k);
        let mut assigned = vec![0; n];
        let mut pos = 0;
        for fold in 0..k {
            let size = base + usize::from(fold < rem);
            for &i in &order[pos..pos + size] {
                assigned[i] = fold;
            }
            pos += size;
        }
        folds.push(assigned);
    }
    FoldAssignment::new(k, folds)
}

/// Where the stratifying value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratSource {
    /// 1-based covariate index (`x1..x10`).
    Covariate(usize),
    /// A caller-supplied value per record (for instance a hash of an identifier).
    Derived,
}

/// Thresholds `t0 = -inf < t1 <= ... <= t(k-1) < tk = +inf`. A value `v` belongs to
/// fold `i` iff `t_i < v <= t_(i+1)`, so equal values never straddle folds.
#[derive(Debug, Clone, PartialEq)]
pub struct StratificationSpec {
    source: StratSource,
    thresholds: Vec<f64>,
}

impl StratificationSpec {
    pub fn new(source: StratSource, thresholds: Vec<f64>) -> Result<Self> {
        if let StratSource::Covariate(c) = source {
            check_covariate(c)?;
        }
        let n = thresholds.len();
        if n < 3 {
            return Err(invalid("need at least k + 1 = 3 thresholds"));
        }
        if thresholds[0] != f64::NEG_INFINITY || thresholds[n - 1] != f64::INFINITY {
            return Err(invalid("outer thresholds must be -inf and +inf"));
        }
        let inner = &thresholds[1..n - 1];
        if inner.iter().any(|t| !t.is_finite()) || inner.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid(
                "inner thresholds must be finite and non-decreasing",
            ));
        }
        Ok(Self { source, thresholds })
    }

    pub fn k(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn source(&self) -> StratSource {
        self.source
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn fold_for(&self, v: f64) -> usize {
        let inner = &self.thresholds[1..self.thresholds.len() - 1];
        inner.partition_point(|t| *t < v)
    }
}

fn check_covariate(c: usize) -> Result<()> {
    if (1..=N_COVARIATES).contains(&c) {
        Ok(())
    } else {
        Err(invalid(format!(
            "covariate index must be in 1..={N_COVARIATES}, got {c}"
        )))
    }
}

/// Rank thresholds on the pooled values of a covariate (duplicates included).
pub fn compute_thresholds(
    fed: &FederatedDataset,
    covariate: usize,
    k: usize,
) -> Result<StratificationSpec> {
    check_covariate(covariate)?;
    let spec = compute_thresholds_by(fed, k, |r| r.x[covariate - 1])?;
    StratificationSpec::new(StratSource::Covariate(covariate), spec.thresholds)
}

/// `t_i` (0 < i < k) is the pooled sorted value at 1-based rank `floor(i·n/k)`.
pub fn compute_thresholds_by<F>(
    fed: &FederatedDataset,
    k: usize,
    key: F,
) -> Result<StratificationSpec>
where
    F: Fn(&Record) -> f64,
{
    if k < 2 {
        return Err(invalid(format!("k must be >= 2, got {k}")));
    }
    let mut values: Vec<f64> = fed.records().map(&key).collect();
    if values.is_empty() {
        return Err(invalid("cannot stratify an empty dataset"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("stratifying value is NaN"));
    }
    values.sort_by(f64::total_cmp);
    let distinct = 1 + values.windows(2).filter(|w| w[0] != w[1]).count();
    if distinct < k {
        return Err(Error::DegenerateStratification { distinct, k });
    }
    let n = values.len();
    let mut thresholds = Vec::with_capacity(k + 1);
    thresholds.push(f64::NEG_INFINITY);
    for i in 1..k {
        thresholds.push(values[i * n / k - 1]);
    }
    thresholds.push(f64::INFINITY);
    StratificationSpec::new(StratSource::Derived, thresholds)
}

pub fn stratified_partition(
    fed: &FederatedDataset,
    spec: &StratificationSpec,
) -> Result<FoldAssignment> {
    match spec.source {
        StratSource::Covariate(c) => stratified_partition_by(fed, spec, |r| r.x[c - 1]),
        StratSource::Derived => Err(invalid(
            "spec was built from a derived value; use stratified_partition_by with the same key",
        )),
    }
}

pub fn stratified_partition_by<F>(
    fed: &FederatedDataset,
    spec: &StratificationSpec,
    key: F,
) -> Result<FoldAssignment>
where
    F: Fn(&Record) -> f64,
{
    let folds = fed
        .hospitals
        .iter()
        .map(|recs| recs.iter().map(|r| spec.fold_for(key(r))).collect())
        .collect();
    FoldAssignment::new(spec.k(), folds)
}

/// Hospital assignment followed by a random partition of the duplicate-free data.
pub fn unbiased_partition<R: Rng + ?Sized>(
    original: &[Record],
    n_h: usize,
    k: usize,
    rng: &mut R,
) -> Result<(FederatedDataset, FoldAssignment)> {
    let fed = assign_hospitals(original, n_h, rng)?;
    let folds = random_partition(&fed, k, rng)?;
    Ok((fed, folds))
}

/// CSV export: `hospital,record_ordinal,individual_id,fold`.
pub fn write_folds_csv<W: Write>(
    fed: &FederatedDataset,
    folds: &FoldAssignment,
    w: W,
) -> Result<()> {
    folds.check_covers(fed)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["hospital", "record_ordinal", "individual_id", "fold"])?;
    for (h, recs) in fed.hospitals.iter().enumerate() {
        for (i, r) in recs.iter().enumerate() {
            wtr.write_record([
                h.to_string(),
                i.to_string(),
                r.individual_id.to_string(),
                folds.fold_of(h, i).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a fold CSV and checks it against `fed` row by row. `k` is taken as
/// `max(fold) + 1` unless given.
pub fn read_folds_csv<R: Read>(
    r: R,
    fed: &FederatedDataset,
    k: Option<usize>,
) -> Result<FoldAssignment> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); fed.n_hospitals()];
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, got {}", row.len()),
            });
        }
        let h = parse_usize(&row[0], line)?;
        let ordinal = parse_usize(&row[1], line)?;
        let id: u64 = row[2].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad identifier {:?}", &row[2]),
        })?;
        let fold = parse_usize(&row[3], line)?;
        let expected = fed.hospitals.get(h).and_then(|recs| recs.get(ordinal));
        match expected {
            Some(rec) if rec.individual_id == id && folds[h].len() == ordinal => folds[h].push(fold),
            _ => {
                return Err(invalid(format!(
                    "line {line}: (hospital {h}, ordinal {ordinal}, id {id}) does not match the dataset"
                )))
            }
        }
    }
    let k = k.unwrap_or_else(|| folds.iter().flatten().max().map_or(1, |m| m + 1));
    let assignment = FoldAssignment::new(k, folds)?;
    assignment.check_covers(fed)?;
    Ok(assignment)
}
