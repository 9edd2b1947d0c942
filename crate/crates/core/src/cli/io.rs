//! Dataset CSV, model JSON and band CSV formats.
//!
//! Dataset: `subject_id,time,event,<covariates...>` with `event` in {0,1}.
//! Bands: `stratum,time,mean,lower,upper,observed_km`, long format.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::estimators::{Dataset, StudyRecord};
use crate::survmodel::SurvivalFn;
use crate::vpc::{FittedModels, VpcResult};

const FIXED_COLUMNS: [&str; 3] = ["subject_id", "time", "event"];
pub const BAND_HEADER: &str = "stratum,time,mean,lower,upper,observed_km";

pub fn read_dataset(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, expected) in FIXED_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(expected) {
            return Err(Error::parse(
                "header",
                format!("column {} must be '{expected}', found '{}'", i + 1, headers.get(i).unwrap_or("")),
            ));
        }
    }
    let names: Vec<String> = headers.iter().skip(3).map(String::from).collect();
    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let line = format!("row {}", row + 2);
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::parse(&line, "missing field"));
        let num = |i: usize, col: &str| -> Result<f64> {
            let v = field(i)?;
            v.parse::<f64>()
                .map_err(|_| Error::parse(format!("{line}, column {col}"), format!("'{v}' is not a number")))
        };
        let event = match field(2)? {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(format!("{line}, column event"), format!("'{other}' is not 0 or 1"))),
        };
        let time = num(1, "time")?;
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::parse(format!("{line}, column time"), "time must be finite and >= 0"));
        }
        let covariates = names
            .iter()
            .enumerate()
            .map(|(k, n)| num(3 + k, n))
            .collect::<Result<Vec<_>>>()?;
        records.push(StudyRecord {
            subject_id: field(0)?.to_string(),
            time,
            event,
            covariates,
        });
    }
    Dataset::new(names, records)
}

pub fn write_dataset(data: &Dataset, mut out: impl Write) -> Result<()> {
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(data.covariate_names.iter().map(String::as_str));
    writeln!(out, "{}", header.join(","))?;
    for r in &data.records {
        write!(out, "{},{},{}", r.subject_id, r.time, u8::from(r.event))?;
        for v in &r.covariates {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_models(models: &FittedModels, out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, models)?;
    Ok(())
}

pub fn read_models(reader: impl Read) -> Result<FittedModels> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_bands(result: &VpcResult, mut out: impl Write) -> Result<()> {
    writeln!(out, "{BAND_HEADER}")?;
    for s in &result.strata {
        let b = &s.band;
        for g in 0..b.grid.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.label,
                b.grid[g],
                b.mean[g],
                b.lower[g],
                b.upper[g],
                s.observed.survival.survival(b.grid[g])
            )?;
        }
    }
    Ok(())
}

/// One stratum of a band CSV, as read back for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSeries {
    pub stratum: String,
    pub time: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub observed: Vec<f64>,
}

pub fn read_bands(reader: impl Read) -> Result<Vec<BandSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != BAND_HEADER {
        return Err(Error::parse("header", format!("expected '{BAND_HEADER}'")));
    }
    let mut out: Vec<BandSeries> = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(format!("row {}", row + 2), format!("field {} is not a number", i + 1)))
        };
        let stratum = rec.get(0).unwrap_or("").to_string();
        if out.last().map(|s| &s.stratum) != Some(&stratum) {
            out.push(BandSeries {
                stratum,
                time: vec![],
                mean: vec![],
                lower: vec![],
                upper: vec![],
                observed: vec![],
            });
        }
        let s = out.last_mut().expect("pushed above");
        s.time.push(num(1)?);
        s.mean.push(num(2)?);
        s.lower.push(num(3)?);
        s.upper.push(num(4)?);
        s.observed.push(num(5)?);
    }
    Ok(out)
}
