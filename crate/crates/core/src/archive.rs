//! The archive of truly evaluated architectures and its file formats.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::moea::{non_dominated_sort, ObjectiveVector};
use crate::space::{Genome, SpaceError};

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error("line {line}: duplicate genome {genome}")]
    Duplicate { line: u64, genome: Genome },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Where an archived genome came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    InitP1,
    InitP2,
    EliteP1,
    EliteP2,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::InitP1 => "init_p1",
            Source::InitP2 => "init_p2",
            Source::EliteP1 => "elite_p1",
            Source::EliteP2 => "elite_p2",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "init_p1" => Ok(Source::InitP1),
            "init_p2" => Ok(Source::InitP2),
            "elite_p1" => Ok(Source::EliteP1),
            "elite_p2" => Ok(Source::EliteP2),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub genome: Genome,
    pub error_rate: f64,
    pub madds: f64,
    pub iteration: usize,
    pub source: Source,
}

impl ArchiveRecord {
    pub fn objectives(&self) -> ObjectiveVector {
        ObjectiveVector::new(self.error_rate, self.madds)
    }

    pub fn point(&self) -> [f64; 2] {
        [self.error_rate, self.madds]
    }
}

pub const ARCHIVE_HEADER: [&str; 5] = ["genome", "error_rate", "madds", "iteration", "source"];

/// Insertion-ordered set of records, unique by genome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    records: Vec<ArchiveRecord>,
    index: HashMap<Genome, usize>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a record; returns `false` (and drops it) if the genome is known.
    pub fn push(&mut self, record: ArchiveRecord) -> bool {
        if self.index.contains_key(&record.genome) {
            return false;
        }
        self.index.insert(record.genome.clone(), self.records.len());
        self.records.push(record);
        true
    }

    pub fn contains(&self, genome: &Genome) -> bool {
        self.index.contains_key(genome)
    }

    pub fn get(&self, genome: &Genome) -> Option<&ArchiveRecord> {
        self.index.get(genome).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[ArchiveRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(genome, error_rate)` pairs in insertion order, the surrogate's
    /// training view.
    pub fn error_pairs(&self) -> Vec<(Genome, f64)> {
        self.records
            .iter()
            .map(|r| (r.genome.clone(), r.error_rate))
            .collect()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.records.iter().map(ArchiveRecord::point).collect()
    }

    pub fn madds(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.madds).collect()
    }

    /// Rank-1 records by (error_rate, madds), in insertion order.
    pub fn pareto_front(&self) -> Vec<ArchiveRecord> {
        if self.records.is_empty() {
            return Vec::new();
        }
        let objs: Vec<ObjectiveVector> = self.records.iter().map(ArchiveRecord::objectives).collect();
        let fa = non_dominated_sort(&objs);
        fa.fronts[0].iter().map(|&i| self.records[i].clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ArchiveError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(ARCHIVE_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.genome.to_string(),
                r.error_rate.to_string(),
                r.madds.to_string(),
                r.iteration.to_string(),
                r.source.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ArchiveError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| ArchiveError::Format {
            line: 1,
            message: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>() != ARCHIVE_HEADER {
            return Err(ArchiveError::Format {
                line: 1,
                message: format!("expected header {}", ARCHIVE_HEADER.join(",")),
            });
        }
        let mut archive = Archive::new();
        for row in rdr.records() {
            let row = row.map_err(|e| ArchiveError::Format {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |message: String| ArchiveError::Format { line, message };
            if row.len() != ARCHIVE_HEADER.len() {
                return Err(bad(format!("expected 5 fields, found {}", row.len())));
            }
            let genome: Genome = row[0].parse().map_err(|e: SpaceError| bad(e.to_string()))?;
            let num = |k: usize| -> Result<f64, ArchiveError> {
                row[k]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("bad {} {:?}", ARCHIVE_HEADER[k], &row[k])))
            };
            let error_rate = num(1)?;
            let madds = num(2)?;
            let iteration: usize = row[3]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad iteration {:?}", &row[3])))?;
            let source: Source = row[4].trim().parse().map_err(bad)?;
            let record = ArchiveRecord {
                genome: genome.clone(),
                error_rate,
                madds,
                iteration,
                source,
            };
            if !archive.push(record) {
                return Err(ArchiveError::Duplicate { line, genome });
            }
        }
        Ok(archive)
    }

    pub fn from_records(records: impl IntoIterator<Item = ArchiveRecord>) -> Self {
        let mut a = Archive::new();
        for r in records {
            a.push(r);
        }
        a
    }
}

/// Writes records as a JSON array.
pub fn write_records_json<W: Write>(writer: W, records: &[ArchiveRecord]) -> Result<(), ArchiveError> {
    let mut w = writer;
    serde_json::to_writer_pretty(&mut w, records)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_records_json<R: Read>(reader: R) -> Result<Vec<ArchiveRecord>, ArchiveError> {
    Ok(serde_json::from_reader(reader)?)
}
