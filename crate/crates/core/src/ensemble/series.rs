use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{SimConfig, SimError};
use crate::integrators::Scheme;

pub const CSV_HEADER: [&str; 6] = ["k", "t", "mean_square", "std_error", "surviving", "blown_up"];

/// Moments of the ensemble at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub k: u64,
    pub t: f64,
    /// Average of `|state|²` over surviving paths; NaN when none survive.
    pub mean_square: f64,
    pub std_error: f64,
    pub surviving: u64,
    pub blown_up: u64,
    /// Average over all paths of `min(|state|, cap)`, blown-up paths counting
    /// as the cap. Not part of the CSV format.
    #[serde(skip)]
    pub capped_mean_abs: f64,
}

impl CheckpointStats {
    /// With paths frozen at the cap the surviving mean understates the true
    /// moment.
    pub fn is_lower_bound(&self) -> bool {
        self.blown_up > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub path_id: u64,
    pub step: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSeries {
    pub problem: String,
    pub scheme: Scheme,
    pub config: SimConfig,
    pub checkpoints: Vec<CheckpointStats>,
    /// Paths whose step failed (solver or non-finite coefficients); they are
    /// frozen and counted as blown up.
    pub failures: Vec<PathFailure>,
}

impl MomentSeries {
    pub fn final_checkpoint(&self) -> &CheckpointStats {
        self.checkpoints.last().expect("series has at least one checkpoint")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        write_checkpoints_csv(&self.checkpoints, writer)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Pretty-printed echo of the configuration.
    pub fn config_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("config serialises")
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    k: u64,
    t: f64,
    mean_square: f64,
    std_error: f64,
    surviving: u64,
    blown_up: u64,
}

pub fn write_checkpoints_csv<W: Write>(rows: &[CheckpointStats], writer: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    for c in rows {
        w.serialize(CsvRow {
            k: c.k,
            t: c.t,
            mean_square: c.mean_square,
            std_error: c.std_error,
            surviving: c.surviving,
            blown_up: c.blown_up,
        })
        .map_err(|e| SimError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))
}

/// Parses the moment CSV; errors name the offending line.
pub fn read_checkpoints_csv<R: Read>(reader: R) -> Result<Vec<CheckpointStats>, SimError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(SimError::Parse {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| csv_error(e, i as u64 + 2))?;
        out.push(CheckpointStats {
            k: row.k,
            t: row.t,
            mean_square: row.mean_square,
            std_error: row.std_error,
            surviving: row.surviving,
            blown_up: row.blown_up,
            capped_mean_abs: f64::NAN,
        });
    }
    if out.is_empty() {
        return Err(SimError::Parse { line: 1, message: "no data rows".into() });
    }
    Ok(out)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> SimError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    SimError::Parse { line, message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: u64, m: f64) -> CheckpointStats {
        CheckpointStats {
            k,
            t: k as f64 * 0.1,
            mean_square: m,
            std_error: 0.01,
            surviving: 10,
            blown_up: 0,
            capped_mean_abs: 0.0,
        }
    }

    #[test]
    fn header_and_layout() {
        let mut buf = Vec::new();
        write_checkpoints_csv(&[row(0, 1.0), row(3, 0.5)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,t,mean_square,std_error,surviving,blown_up"));
        assert_eq!(lines.next(), Some("0,0.0,1.0,0.01,10,0"));
        assert_eq!(lines.next().unwrap().split(',').count(), 6);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "k,t,mean_square,std_error,surviving,blown_up\n0,0.0,1.0,0.0,5,0\n1,0.1,oops,0.0,5,0\n";
        match read_checkpoints_csv(text.as_bytes()) {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let wrong = "a,b\n1,2\n";
        assert!(matches!(read_checkpoints_csv(wrong.as_bytes()), Err(SimError::Parse { line: 1, .. })));
        let empty = "k,t,mean_square,std_error,surviving,blown_up\n";
        assert!(read_checkpoints_csv(empty.as_bytes()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip(
            ms in proptest::collection::vec((0u64..1_000_000, 0.0f64..1e6, 0.0f64..1e3, 0u64..1000), 1..20)
        ) {
            let rows: Vec<CheckpointStats> = ms
                .iter()
                .map(|&(k, m, se, b)| CheckpointStats {
                    k,
                    t: k as f64 * 0.3,
                    mean_square: m,
                    std_error: se,
                    surviving: 1000 - b,
                    blown_up: b,
                    capped_mean_abs: 0.0,
                })
                .collect();
            let mut buf = Vec::new();
            write_checkpoints_csv(&rows, &mut buf).unwrap();
            let back = read_checkpoints_csv(buf.as_slice()).unwrap();
            proptest::prop_assert_eq!(back.len(), rows.len());
            for (a, b) in back.iter().zip(&rows) {
                proptest::prop_assert_eq!((a.k, a.surviving, a.blown_up), (b.k, b.surviving, b.blown_up));
                proptest::prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
                proptest::prop_assert_eq!(a.mean_square.to_bits(), b.mean_square.to_bits());
                proptest::prop_assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
            }
        }
    }
}
