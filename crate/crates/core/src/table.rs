//! Plot-ready tables: time series and spectra as CSV or versioned JSON.
//!
//! Series CSV is long-format with header `t,site,axis,value`, one row per
//! sample. Floats use Rust's shortest round-trip formatting, so an import of
//! an export reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{ObservableId, Spectrum, TimeSeriesRecord};

pub const SERIES_SCHEMA: &str = "spinmeas.series";
pub const SPECTRUM_SCHEMA: &str = "spinmeas.spectrum";
pub const TABLE_SCHEMA_VERSION: u32 = 1;

pub const SERIES_HEADER: &str = "t,site,axis,value";
pub const SPECTRUM_HEADER: &str = "omega,magnitude";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }

    /// Guess from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => TableFormat::Json,
            _ => TableFormat::Csv,
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::Domain(format!("unknown table format {other:?}"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesDocument {
    schema: String,
    schema_version: u32,
    records: Vec<TimeSeriesRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpectrumDocument {
    schema: String,
    schema_version: u32,
    spectrum: Spectrum,
}

pub fn series_to_csv(records: &[TimeSeriesRecord]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for r in records {
        let (site, axis) = (r.id.site(), r.id.axis_label());
        for (t, v) in r.times.iter().zip(&r.values) {
            writeln!(out, "{t},{site},{axis},{v}").unwrap();
        }
    }
    out
}

/// Rows are grouped by `(site, axis)` in order of first appearance.
pub fn series_from_csv(text: &str) -> Result<Vec<TimeSeriesRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SERIES_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "expected header {SERIES_HEADER:?}, found {:?}",
                other.map(|(_, h)| h).unwrap_or("")
            )))
        }
    }
    let mut records: Vec<TimeSeriesRecord> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("line {}: {what}: {line:?}", lineno + 1));
        let fields: Vec<&str> = line.split(',').collect();
        let [t, site, axis, value] = fields[..] else {
            return Err(bad("expected 4 fields"));
        };
        let t: f64 = t.trim().parse().map_err(|_| bad("bad time"))?;
        let site: usize = site.trim().parse().map_err(|_| bad("bad site"))?;
        let value: f64 = value.trim().parse().map_err(|_| bad("bad value"))?;
        let id = ObservableId::from_columns(site, axis.trim())?;
        match records.iter_mut().find(|r| r.id == id) {
            Some(r) => r.push(t, value),
            None => {
                let mut r = TimeSeriesRecord::new(id);
                r.push(t, value);
                records.push(r);
            }
        }
    }
    Ok(records)
}

pub fn series_to_json(records: &[TimeSeriesRecord]) -> String {
    let doc = SeriesDocument {
        schema: SERIES_SCHEMA.into(),
        schema_version: TABLE_SCHEMA_VERSION,
        records: records.to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("series serialization cannot fail")
}

pub fn series_from_json(text: &str) -> Result<Vec<TimeSeriesRecord>> {
    let doc: SeriesDocument =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("series JSON: {e}")))?;
    if doc.schema != SERIES_SCHEMA || doc.schema_version != TABLE_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema {} v{} (expected {SERIES_SCHEMA} v{TABLE_SCHEMA_VERSION})",
            doc.schema, doc.schema_version
        )));
    }
    for r in &doc.records {
        r.check()?;
    }
    Ok(doc.records)
}

pub fn spectrum_to_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from(SPECTRUM_HEADER);
    out.push('\n');
    for (w, m) in spectrum.omegas.iter().zip(&spectrum.magnitudes) {
        writeln!(out, "{w},{m}").unwrap();
    }
    out
}

pub fn spectrum_to_json(spectrum: &Spectrum) -> String {
    let doc = SpectrumDocument {
        schema: SPECTRUM_SCHEMA.into(),
        schema_version: TABLE_SCHEMA_VERSION,
        spectrum: spectrum.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("spectrum serialization cannot fail")
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn export_table(records: &[TimeSeriesRecord], format: TableFormat, path: &Path) -> Result<()> {
    let text = match format {
        TableFormat::Csv => series_to_csv(records),
        TableFormat::Json => series_to_json(records),
    };
    write_file(path, text.as_bytes())
}

/// Format chosen by file extension (`.json`, anything else is CSV).
pub fn import_table(path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match TableFormat::from_path(path) {
        TableFormat::Csv => series_from_csv(&text),
        TableFormat::Json => series_from_json(&text),
    }
}

pub fn export_spectrum(spectrum: &Spectrum, format: TableFormat, path: &Path) -> Result<()> {
    let text = match format {
        TableFormat::Csv => spectrum_to_csv(spectrum),
        TableFormat::Json => spectrum_to_json(spectrum),
    };
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Axis;
    use proptest::prelude::*;

    fn sample_records() -> Vec<TimeSeriesRecord> {
        let mut a = TimeSeriesRecord::new(ObservableId::Magnetization { site: 3, axis: Axis::Z });
        a.push(0.0, 0.1);
        a.push(0.1, -1.0 / 3.0);
        a.push(0.1, 2.5e-17);
        let mut b = TimeSeriesRecord::new(ObservableId::Correlation {
            anchor: 1,
            site: 5,
            axis: Axis::X,
        });
        b.push(0.0, -0.0);
        b.push(0.1, f64::MIN_POSITIVE);
        let mut c = TimeSeriesRecord::new(ObservableId::Energy);
        c.push(0.0, -8.9);
        let mut d = TimeSeriesRecord::new(ObservableId::Staggered);
        d.push(0.0, 0.5);
        vec![a, b, c, d]
    }

    #[test]
    fn empty_set_is_header_only() {
        assert_eq!(series_to_csv(&[]), "t,site,axis,value\n");
        assert!(series_from_csv("t,site,axis,value\n").unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let records = sample_records();
        let text = series_to_csv(&records);
        assert!(text.starts_with("t,site,axis,value\n0,3,z,0.1\n"));
        assert!(text.contains(",5,xx@1,"));
        assert_eq!(series_from_csv(&text).unwrap(), records);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let records = sample_records();
        assert_eq!(series_from_json(&series_to_json(&records)).unwrap(), records);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(series_from_csv("time,value\n").is_err());
        assert!(series_from_csv("t,site,axis,value\n0,1,q,0.5\n").is_err());
        assert!(series_from_csv("t,site,axis,value\n0,1,z\n").is_err());
        let wrong = r#"{"schema":"other","schema_version":1,"records":[]}"#;
        assert!(series_from_json(wrong).is_err());
    }

    #[test]
    fn file_round_trip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let records = sample_records();
        for format in [TableFormat::Csv, TableFormat::Json] {
            let path = dir.path().join(format!("nested/series.{}", format.extension()));
            export_table(&records, format, &path).unwrap();
            assert_eq!(import_table(&path).unwrap(), records);
        }
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..40), site in 1usize..30) {
            let mut r = TimeSeriesRecord::new(ObservableId::Magnetization { site, axis: Axis::Y });
            for (k, v) in values.iter().enumerate() {
                r.push(k as f64 * 0.1, *v);
            }
            let records = vec![r];
            let back = series_from_csv(&series_to_csv(&records)).unwrap();
            if values.is_empty() {
                prop_assert!(back.is_empty());
            } else {
                for (a, b) in back[0].values.iter().zip(&values) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
                prop_assert_eq!(back[0].times.clone(), records[0].times.clone());
            }
        }
    }
}
