//! CSV and JSON-lines formats.
//!
//! Raw samples: `window_index,t_s,distance_m`, with `NO_ECHO` for missing
//! echoes. Filtered samples add `value_m`, `reduced_m` (empty when the
//! window was discarded), `discarded`, `no_echo` and the times of the
//! first and last in-range echo. Per-pass results and
//! events are JSON lines; aggregate tables are CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use roadside_core::filter::FilteredSample;
use roadside_core::sim::RangeSample;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::experiment::{CellStats, PassRecord, SweepRow};
use crate::Error;

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(dir.display().to_string(), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(path.display().to_string(), e))
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(path.display().to_string(), e))
}

pub fn write_csv<T: Serialize>(out: impl Write, rows: &[T]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Io("csv output".into(), e))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(input: impl Read) -> Result<Vec<T>, Error> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(Error::from)
}

pub fn write_jsonl<T: Serialize>(mut out: impl Write, rows: &[T]) -> Result<(), Error> {
    for r in rows {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Parse("json output".into(), e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::Io("json output".into(), e))?;
    }
    out.flush().map_err(|e| Error::Io("json output".into(), e))
}

pub fn read_jsonl<T: DeserializeOwned>(input: impl BufRead) -> Result<Vec<T>, Error> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            let l = l.map_err(|e| Error::Io("json input".into(), e))?;
            serde_json::from_str(&l)
                .map_err(|e| Error::Parse(format!("line {}", i + 1), e.to_string()))
        })
        .collect()
}

pub fn save_samples(path: &Path, samples: &[RangeSample]) -> Result<(), Error> {
    write_csv(create(path)?, samples)
}

pub fn load_samples(path: &Path) -> Result<Vec<RangeSample>, Error> {
    read_csv(open(path)?)
}

pub fn save_filtered(path: &Path, stream: &[FilteredSample]) -> Result<(), Error> {
    write_csv(create(path)?, stream)
}

pub fn load_filtered(path: &Path) -> Result<Vec<FilteredSample>, Error> {
    read_csv(open(path)?)
}

pub fn save_records(path: &Path, records: &[PassRecord]) -> Result<(), Error> {
    write_jsonl(create(path)?, records)
}

pub fn save_cells(path: &Path, cells: &[CellStats]) -> Result<(), Error> {
    write_csv(create(path)?, cells)
}

pub fn save_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), Error> {
    write_csv(create(path)?, rows)
}
