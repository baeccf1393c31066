use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{MpeError, Result};

/// One observation: `object_id` arrived at `location_id` at `timestamp`
/// (UTC epoch seconds).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub object_id: String,
    pub timestamp: i64,
    pub location_id: String,
}

/// A raw GPS fix; mapped to a location token with [`GridSpec::map_to_cell`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub object_id: String,
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    /// `object_id,timestamp,location_id`
    TripleCsv,
    /// `object_id,timestamp,lat,lon`
    GpsCsv,
}

impl FromStr for InputFormat {
    type Err = MpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triple-csv" => Ok(InputFormat::TripleCsv),
            "gps-csv" => Ok(InputFormat::GpsCsv),
            other => Err(MpeError::Config(format!(
                "unknown format '{other}' (expected triple-csv or gps-csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedRecords {
    Triples(Vec<Record>),
    Gps(Vec<GpsPoint>),
}

pub fn parse_records<R: Read>(reader: R, format: InputFormat) -> Result<ParsedRecords> {
    match format {
        InputFormat::TripleCsv => parse_triples(reader).map(ParsedRecords::Triples),
        InputFormat::GpsCsv => parse_gps(reader).map(ParsedRecords::Gps),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeEncoding {
    Epoch,
    Iso8601,
}

fn detect_encoding(field: &str) -> TimeEncoding {
    if field.parse::<i64>().is_ok() {
        TimeEncoding::Epoch
    } else {
        TimeEncoding::Iso8601
    }
}

fn parse_timestamp(field: &str, encoding: TimeEncoding) -> Option<i64> {
    let ts = match encoding {
        TimeEncoding::Epoch => field.parse::<i64>().ok()?,
        TimeEncoding::Iso8601 => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
                dt.timestamp()
            } else {
                [
                    "%Y-%m-%dT%H:%M:%S",
                    "%Y-%m-%d %H:%M:%S",
                    "%Y-%m-%dT%H:%M",
                    "%Y-%m-%d %H:%M",
                ]
                .iter()
                .find_map(|fmt| NaiveDateTime::parse_from_str(field, fmt).ok())?
                .and_utc()
                .timestamp()
            }
        }
    };
    (ts >= 0).then_some(ts)
}

fn is_header(row: &csv::StringRecord) -> bool {
    row.get(1)
        .map(|f| matches!(f.to_ascii_lowercase().as_str(), "timestamp" | "time"))
        .unwrap_or(false)
}

/// Shared row loop: skips an optional header, detects the timestamp encoding
/// from the first data row and hands `(line, fields, timestamp)` to `build`.
fn parse_rows<R, T, F>(reader: R, n_fields: usize, mut build: F) -> Result<Vec<T>>
where
    R: Read,
    F: FnMut(u64, &csv::StringRecord, i64) -> Result<T>,
{
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    let mut encoding = None;
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| MpeError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 && is_header(&row) {
            continue;
        }
        if row.len() != n_fields {
            return Err(MpeError::Parse {
                line,
                message: format!("expected {n_fields} fields, found {}", row.len()),
            });
        }
        let raw_ts = &row[1];
        let enc = *encoding.get_or_insert_with(|| detect_encoding(raw_ts));
        let timestamp = parse_timestamp(raw_ts, enc).ok_or_else(|| MpeError::Parse {
            line,
            message: format!("invalid timestamp '{raw_ts}'"),
        })?;
        if row[0].is_empty() {
            return Err(MpeError::Parse {
                line,
                message: "empty object id".into(),
            });
        }
        out.push(build(line, &row, timestamp)?);
    }
    Ok(out)
}

/// Parses `object_id,timestamp,location_id` rows. The header is optional and
/// timestamps are epoch seconds or ISO-8601, detected once per input.
pub fn parse_triples<R: Read>(reader: R) -> Result<Vec<Record>> {
    parse_rows(reader, 3, |line, row, timestamp| {
        if row[2].is_empty() {
            return Err(MpeError::Parse {
                line,
                message: "empty location id".into(),
            });
        }
        Ok(Record {
            object_id: row[0].to_string(),
            timestamp,
            location_id: row[2].to_string(),
        })
    })
}

/// Parses `object_id,timestamp,lat,lon` rows.
pub fn parse_gps<R: Read>(reader: R) -> Result<Vec<GpsPoint>> {
    parse_rows(reader, 4, |line, row, timestamp| {
        let coord = |idx: usize, name: &str| {
            row[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| MpeError::Parse {
                    line,
                    message: format!("invalid {name} '{}'", &row[idx]),
                })
        };
        Ok(GpsPoint {
            object_id: row[0].to_string(),
            timestamp,
            lat: coord(2, "latitude")?,
            lon: coord(3, "longitude")?,
        })
    })
}

/// Maps GPS fixes onto grid cells. Points outside the box are dropped; the
/// number dropped is returned alongside the records.
pub fn resolve_gps(points: &[GpsPoint], grid: &GridSpec) -> (Vec<Record>, usize) {
    let mut skipped = 0;
    let records = points
        .iter()
        .filter_map(|p| match grid.map_to_cell(p.lat, p.lon) {
            Ok(cell) => Some(Record {
                object_id: p.object_id.clone(),
                timestamp: p.timestamp,
                location_id: cell,
            }),
            Err(_) => {
                skipped += 1;
                None
            }
        })
        .collect();
    (records, skipped)
}

/// Writes records as headerless triple-csv with epoch timestamps.
pub fn write_records<W: Write>(writer: W, records: &[Record]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for r in records {
        w.write_record([
            r.object_id.as_str(),
            &r.timestamp.to_string(),
            r.location_id.as_str(),
        ])
        .map_err(|e| MpeError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_row() {
        let recs = parse_triples("v1,1452000000,L7".as_bytes()).unwrap();
        assert_eq!(
            recs,
            vec![Record {
                object_id: "v1".into(),
                timestamp: 1_452_000_000,
                location_id: "L7".into()
            }]
        );
    }

    #[test]
    fn bad_timestamp_reports_line() {
        match parse_triples("v1,notatime,L7".as_bytes()) {
            Err(MpeError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_triples("v1,10,A\nv1,11,B\nv2,x,C\n".as_bytes()) {
            Err(MpeError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_triples("".as_bytes()).unwrap().is_empty());
        assert!(parse_gps("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn header_is_optional() {
        let with = parse_triples("object_id,timestamp,location_id\nv1,5,A\n".as_bytes()).unwrap();
        let without = parse_triples("v1,5,A\n".as_bytes()).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn iso_timestamps() {
        let recs =
            parse_triples("v1,2016-01-01T07:00:00Z,A\nv1,2016-01-01 07:30:00,B\n".as_bytes())
                .unwrap();
        assert_eq!(recs[0].timestamp, 1_451_606_400 + 7 * 3600);
        assert_eq!(recs[1].timestamp, 1_451_606_400 + 7 * 3600 + 1800);
    }

    #[test]
    fn encoding_is_fixed_per_file() {
        assert!(parse_triples("v1,100,A\nv1,2016-01-01T07:00:00Z,B\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_negative_timestamps_and_empty_tokens() {
        assert!(parse_triples("v1,-5,A".as_bytes()).is_err());
        assert!(parse_triples(",5,A".as_bytes()).is_err());
        assert!(parse_triples("v1,5,".as_bytes()).is_err());
        assert!(parse_triples("v1,5".as_bytes()).is_err());
    }

    #[test]
    fn gps_rows_and_grid_resolution() {
        let pts = parse_gps("t1,100,41.15,-8.61\nt1,115,50.0,-8.61\n".as_bytes()).unwrap();
        assert_eq!(pts.len(), 2);
        let grid = GridSpec::new(41.1, 41.2, -8.7, -8.5, 0.05).unwrap();
        let (recs, skipped) = resolve_gps(&pts, &grid);
        assert_eq!(skipped, 1);
        assert_eq!(recs[0].location_id, grid.map_to_cell(41.15, -8.61).unwrap());
        assert!(parse_gps("t1,100,abc,-8.61".as_bytes()).is_err());
    }

    fn token() -> impl Strategy<Value = String> {
        // Includes separators and quotes that require CSV escaping.
        "[a-zA-Z0-9_ ,\"é-]{1,8}".prop_filter("no surrounding whitespace", |s| s.trim() == s)
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(rows in prop::collection::vec((token(), 0i64..4_000_000_000, token()), 0..40)) {
            let records: Vec<Record> = rows
                .into_iter()
                .map(|(o, t, l)| Record { object_id: o, timestamp: t, location_id: l })
                .collect();
            let mut buf = Vec::new();
            write_records(&mut buf, &records).unwrap();
            prop_assert_eq!(parse_triples(buf.as_slice()).unwrap(), records);
        }
    }
}
