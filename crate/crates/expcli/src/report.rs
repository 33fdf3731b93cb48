//! Bit-error-rate reports as CSV, plus a `key = value` sidecar with the seeds
//! needed to reproduce each row.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use molim::codec::CodingScheme;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const CSV_HEADER: &str =
    "decoder,coding,w,t_b_s,molecules_per_bit,molecules_per_symbol,n_bits,bit_errors,ber,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decoder {
    #[serde(rename = "MCD")]
    Mcd,
    #[serde(rename = "MLE")]
    Mle,
    #[serde(rename = "CNN")]
    Cnn,
}

impl Decoder {
    pub const ALL: [Decoder; 3] = [Decoder::Mcd, Decoder::Mle, Decoder::Cnn];

    pub fn label(self) -> &'static str {
        match self {
            Decoder::Mcd => "MCD",
            Decoder::Mle => "MLE",
            Decoder::Cnn => "CNN",
        }
    }
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Decoder {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MCD" => Ok(Decoder::Mcd),
            "MLE" => Ok(Decoder::Mle),
            "CNN" => Ok(Decoder::Cnn),
            _ => bail!("unknown decoder `{s}` (expected mcd, mle or cnn)"),
        }
    }
}

fn ser_coding<S: Serializer>(c: &CodingScheme, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(c.label())
}

fn de_coding<'de, D: Deserializer<'de>>(d: D) -> Result<CodingScheme, D::Error> {
    let raw = String::deserialize(d)?;
    raw.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub decoder: Decoder,
    #[serde(serialize_with = "ser_coding", deserialize_with = "de_coding")]
    pub coding: CodingScheme,
    pub w: usize,
    pub t_b_s: f64,
    pub molecules_per_bit: f64,
    pub molecules_per_symbol: u64,
    pub n_bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Decoding wall time for the cell.
    pub seconds: f64,
}

impl BerRow {
    pub fn check(&self) -> Result<()> {
        if self.n_bits == 0 {
            bail!("row with zero evaluated bits");
        }
        if self.bit_errors > self.n_bits || self.ber != self.bit_errors as f64 / self.n_bits as f64 {
            bail!("row ber {} inconsistent with {}/{}", self.ber, self.bit_errors, self.n_bits);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BerReport {
    pub rows: Vec<BerRow>,
}

impl BerReport {
    pub fn find(&self, decoder: Decoder, coding: CodingScheme, w: usize, molecules_per_bit: f64) -> Option<&BerRow> {
        self.rows
            .iter()
            .find(|r| r.decoder == decoder && r.coding == coding && r.w == w && r.molecules_per_bit == molecules_per_bit)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            out.write_record(CSV_HEADER.split(','))?;
        }
        for row in &self.rows {
            row.check()?;
            out.serialize(row)?;
        }
        Ok(String::from_utf8(out.into_inner()?)?)
    }

    pub fn from_csv(text: &str) -> Result<BerReport> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != CSV_HEADER {
            bail!("unexpected report header `{}`", header.join(","));
        }
        let mut rows = Vec::new();
        for (i, row) in reader.deserialize::<BerRow>().enumerate() {
            let row = row.with_context(|| format!("report row {}", i + 1))?;
            row.check().with_context(|| format!("report row {}", i + 1))?;
            rows.push(row);
        }
        Ok(BerReport { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(path, self.to_csv()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<BerReport> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        BerReport::from_csv(&text).with_context(|| path.display().to_string())
    }
}

/// Seeds and settings that reproduce a report, one `key = value` per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportMeta {
    pub entries: Vec<(String, String)>,
}

impl ReportMeta {
    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> ReportMeta {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        ReportMeta { entries }
    }

    pub fn path_for(report: &Path) -> PathBuf {
        report.with_extension("meta.txt")
    }

    pub fn save(&self, report: &Path) -> Result<()> {
        let path = ReportMeta::path_for(report);
        fs::write(&path, self.to_text()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(report: &Path) -> Result<ReportMeta> {
        let path = ReportMeta::path_for(report);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(ReportMeta::parse(&text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(decoder: Decoder, errors: u64) -> BerRow {
        BerRow {
            decoder,
            coding: CodingScheme::Gray,
            w: 10,
            t_b_s: 5.0 / 30.0,
            molecules_per_bit: 1500.0,
            molecules_per_symbol: 2250,
            n_bits: 1200,
            bit_errors: errors,
            ber: errors as f64 / 1200.0,
            seconds: 0.012345,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let report = BerReport {
            rows: vec![row(Decoder::Mcd, 317), row(Decoder::Cnn, 0), row(Decoder::Mle, 1)],
        };
        let text = report.to_csv().unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.contains("MCD,GC,10,0.16666666666666666,1500.0,2250,1200,317,"));
        let back = BerReport::from_csv(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_csv().unwrap(), text);
        assert_eq!(BerReport::from_csv(&BerReport::default().to_csv().unwrap()).unwrap(), BerReport::default());
    }

    #[test]
    fn inconsistent_rows_are_rejected() {
        let mut bad = row(Decoder::Mcd, 5);
        bad.ber = 0.5;
        assert!(BerReport { rows: vec![bad] }.to_csv().is_err());
        let mut empty = row(Decoder::Mcd, 0);
        empty.n_bits = 0;
        assert!(empty.check().is_err());
        assert!(BerReport::from_csv("a,b\n1,2\n").is_err());
    }
}
