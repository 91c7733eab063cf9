//! Hospital silos, duplicate injection and the ground-truth deduplication audit.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use rand::Rng;
use serde::Serialize;

use crate::datagen::{Record, N_COVARIATES};
use crate::error::{invalid, Error, Result};
use crate::partition::FoldAssignment;

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub hospitals: Vec<Vec<Record>>,
    pub n_original: usize,
    pub n_duplicates: usize,
}

impl FederatedDataset {
    pub fn n_hospitals(&self) -> usize {
        self.hospitals.len()
    }

    pub fn total_records(&self) -> usize {
        self.hospitals.iter().map(Vec::len).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.hospitals.iter().flatten()
    }
}

/// Places every record in a uniformly drawn hospital.
pub fn assign_hospitals<R: Rng + ?Sized>(
    records: &[Record],
    n_h: usize,
    rng: &mut R,
) -> Result<FederatedDataset> {
    if n_h == 0 {
        return Err(invalid("number of hospitals must be >= 1"));
    }
    let mut hospitals = vec![Vec::new(); n_h];
    for r in records {
        hospitals[rng.random_range(0..n_h)].push(*r);
    }
    Ok(FederatedDataset {
        hospitals,
        n_original: records.len(),
        n_duplicates: 0,
    })
}

/// Adds `n_dup` exact copies by rejection sampling: draw an individual and a hospital
/// uniformly, reject if that hospital already holds the individual.
pub fn inject_duplicates<R: Rng + ?Sized>(
    fed: &FederatedDataset,
    n_dup: usize,
    rng: &mut R,
) -> Result<FederatedDataset> {
    let n_h = fed.n_hospitals();
    let mut individuals: BTreeMap<u64, Record> = BTreeMap::new();
    let mut held: HashSet<(u64, usize)> = HashSet::new();
    for (h, recs) in fed.hospitals.iter().enumerate() {
        for r in recs {
            individuals.entry(r.individual_id).or_insert(*r);
            held.insert((r.individual_id, h));
        }
    }
    let capacity = individuals.len() * n_h - held.len();
    if n_dup > capacity {
        return Err(invalid(format!(
            "cannot place {n_dup} duplicates: only {capacity} free (individual, hospital) slots"
        )));
    }
    let individuals: Vec<Record> = individuals.into_values().collect();
    let mut out = fed.clone();
    let mut accepted = 0;
    while accepted < n_dup {
        let r = individuals[rng.random_range(0..individuals.len())];
        let h = rng.random_range(0..n_h);
        if held.insert((r.individual_id, h)) {
            out.hospitals[h].push(r);
            accepted += 1;
        }
    }
    out.n_duplicates += n_dup;
    Ok(out)
}

/// Position of one record: hospital and ordinal within that hospital.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Location {
    pub hospital: usize,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub individual_id: u64,
    pub locations: Vec<Location>,
}

/// Outcome of checking intra-hospital (1), inter-hospital (2) and inter-fold (3)
/// deduplication. `def3_violations` is `None` when no folds were supplied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DedupReport {
    pub def1_violations: Vec<Violation>,
    pub def2_violations: Vec<Violation>,
    pub def3_violations: Option<Vec<Violation>>,
}

impl DedupReport {
    pub fn def1_satisfied(&self) -> bool {
        self.def1_violations.is_empty()
    }

    pub fn def2_satisfied(&self) -> bool {
        self.def2_violations.is_empty()
    }

    pub fn def3_satisfied(&self) -> Option<bool> {
        self.def3_violations.as_ref().map(Vec::is_empty)
    }

    pub fn render(&self) -> String {
        fn line(name: &str, v: &[Violation]) -> String {
            if v.is_empty() {
                format!("{name}: satisfied\n")
            } else {
                let copies: usize = v.iter().map(|x| x.locations.len()).sum();
                format!(
                    "{name}: violated ({} individuals, {copies} records)\n",
                    v.len()
                )
            }
        }
        let mut s = line("def1", &self.def1_violations);
        s += &line("def2", &self.def2_violations);
        match &self.def3_violations {
            Some(v) => s += &line("def3", v),
            None => s += "def3: not checked (no folds)\n",
        }
        s
    }
}

pub fn audit(fed: &FederatedDataset, folds: Option<&FoldAssignment>) -> Result<DedupReport> {
    if let Some(f) = folds {
        f.check_covers(fed)?;
    }
    let mut by_id: BTreeMap<u64, Vec<Location>> = BTreeMap::new();
    for (hospital, recs) in fed.hospitals.iter().enumerate() {
        for (ordinal, r) in recs.iter().enumerate() {
            by_id
                .entry(r.individual_id)
                .or_default()
                .push(Location { hospital, ordinal });
        }
    }

    let mut def1 = Vec::new();
    let mut def2 = Vec::new();
    let mut def3 = folds.map(|_| Vec::new());
    for (id, locs) in by_id {
        if locs.len() < 2 {
            continue;
        }
        let mut per_hospital: HashMap<usize, usize> = HashMap::new();
        for l in &locs {
            *per_hospital.entry(l.hospital).or_default() += 1;
        }
        if per_hospital.values().any(|&c| c > 1) {
            let locations = locs
                .iter()
                .filter(|l| per_hospital[&l.hospital] > 1)
                .copied()
                .collect();
            def1.push(Violation {
                individual_id: id,
                locations,
            });
        }
        if per_hospital.len() > 1 {
            def2.push(Violation {
                individual_id: id,
                locations: locs.clone(),
            });
        }
        if let (Some(f), Some(v3)) = (folds, def3.as_mut()) {
            let first = f.fold_of(locs[0].hospital, locs[0].ordinal);
            if locs
                .iter()
                .any(|l| f.fold_of(l.hospital, l.ordinal) != first)
            {
                v3.push(Violation {
                    individual_id: id,
                    locations: locs,
                });
            }
        }
    }
    Ok(DedupReport {
        def1_violations: def1,
        def2_violations: def2,
        def3_violations: def3,
    })
}

/// Formats a float with 17 significant digits; parsing it back gives the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad number {s:?}"),
    })
}

pub(crate) fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad integer {s:?}"),
    })
}

fn dataset_header() -> Vec<String> {
    let mut h = vec!["hospital".to_string(), "individual_id".to_string()];
    h.extend((1..=N_COVARIATES).map(|i| format!("x{i}")));
    h.push("y".into());
    h
}

/// CSV dump: `hospital,individual_id,x1..x10,y`, one record per line, hospital order.
pub fn write_dataset_csv<W: Write>(fed: &FederatedDataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(dataset_header())?;
    for (h, recs) in fed.hospitals.iter().enumerate() {
        for r in recs {
            let mut row = vec![h.to_string(), r.individual_id.to_string()];
            row.extend(r.x.iter().map(|v| fmt_f64(*v)));
            row.push(r.y.to_string());
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Inverse of [`write_dataset_csv`]. The hospital count is `max(hospital) + 1` unless
/// `n_h` is given; duplicate counts are recovered from the identifiers.
pub fn read_dataset_csv<R: Read>(r: R, n_h: Option<usize>) -> Result<FederatedDataset> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != dataset_header() {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut hospitals: Vec<Vec<Record>> = vec![Vec::new(); n_h.unwrap_or(0)];
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let h = parse_usize(&row[0], line)?;
        let individual_id = row[1].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad identifier {:?}", &row[1]),
        })?;
        let mut x = [0.0; N_COVARIATES];
        for (j, v) in x.iter_mut().enumerate() {
            *v = parse_f64(&row[2 + j], line)?;
        }
        let y = match row[2 + N_COVARIATES].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("outcome must be 0 or 1, got {other:?}"),
                })
            }
        };
        if h >= hospitals.len() {
            if n_h.is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("hospital {h} out of range"),
                });
            }
            hospitals.resize(h + 1, Vec::new());
        }
        hospitals[h].push(Record {
            x,
            y,
            individual_id,
        });
    }
    let total: usize = hospitals.iter().map(Vec::len).sum();
    let distinct: HashSet<u64> = hospitals
        .iter()
        .flatten()
        .map(|r| r.individual_id)
        .collect();
    Ok(FederatedDataset {
        hospitals,
        n_original: distinct.len(),
        n_duplicates: total - distinct.len(),
    })
}
