//! Result records and CSV serialization.
//!
//! Every externally visible number travels as an [`Estimate`]: value,
//! standard error (0 for deterministic methods), sample count, method tag,
//! and the seed and configuration fingerprint that produced it. CSV output
//! uses 17 significant digits, `.` as the decimal separator, and `\n` line
//! endings so files are stable fixtures for diff-based comparison.

use crate::util::{fmt_sig17, write_atomic};
use std::fmt::Write as _;
use std::path::Path;

/// CSV header shared by all tabular outputs.
pub const CSV_HEADER: &str = "spec_hash,n,t,value,stderr,samples,method,seed";

/// One computed quantity with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Fingerprint of the noise configuration block.
    pub spec_hash: String,
    /// Chaos order or other integer index (0 when not applicable).
    pub n: usize,
    /// Time parameter (0 when not applicable).
    pub t: f64,
    pub value: f64,
    /// Standard error of the value; exactly 0 for deterministic methods.
    pub stderr: f64,
    /// Monte Carlo sample count; 0 for deterministic methods.
    pub samples: u64,
    /// Short method tag, e.g. "closed_form", "fourier_mc".
    pub method: String,
    /// RNG seed; 0 for deterministic methods.
    pub seed: u64,
}

impl Estimate {
    pub fn deterministic(spec_hash: &str, n: usize, t: f64, value: f64, method: &str) -> Self {
        Self {
            spec_hash: spec_hash.to_string(),
            n,
            t,
            value,
            stderr: 0.0,
            samples: 0,
            method: method.to_string(),
            seed: 0,
        }
    }

    pub fn sampled(
        spec_hash: &str,
        n: usize,
        t: f64,
        value: f64,
        stderr: f64,
        samples: u64,
        method: &str,
        seed: u64,
    ) -> Self {
        Self {
            spec_hash: spec_hash.to_string(),
            n,
            t,
            value,
            stderr,
            samples,
            method: method.to_string(),
            seed,
        }
    }

    /// Two-sided z test at `sigmas` standard errors against another
    /// estimate; deterministic values contribute zero variance.
    pub fn consistent_with(&self, other: &Estimate, sigmas: f64) -> bool {
        let s = (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        if s == 0.0 {
            return self.value == other.value;
        }
        (self.value - other.value).abs() <= sigmas * s
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.spec_hash,
            self.n,
            fmt_sig17(self.t),
            fmt_sig17(self.value),
            fmt_sig17(self.stderr),
            self.samples,
            self.method,
            self.seed
        )
    }
}

/// Serialize a table of estimates with the fixed header.
pub fn to_csv(rows: &[Estimate]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_row());
        s.push('\n');
    }
    s
}

/// Write a CSV table atomically (temp file + rename).
pub fn write_csv(path: &Path, rows: &[Estimate]) -> std::io::Result<()> {
    write_atomic(path, to_csv(rows).as_bytes())
}

/// Render aligned human-readable rows, one estimate per line.
pub fn to_text(rows: &[Estimate]) -> String {
    let mut out = String::new();
    for r in rows {
        let unc = if r.stderr > 0.0 {
            format!(" +- {:.3e}", r.stderr)
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{:>12} n={:<2} t={:<8} {}{}",
            r.method,
            r.n,
            r.t,
            fmt_sig17(r.value),
            unc
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_value_digits() {
        let e = Estimate::sampled("abc123", 2, 1.5, std::f64::consts::PI, 1e-4, 100, "mc", 7);
        let row = e.to_csv_row();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[3].parse::<f64>().unwrap(), std::f64::consts::PI);
        assert!(!row.contains(';'));
    }

    #[test]
    fn header_and_line_endings() {
        let rows =
            vec![Estimate::deterministic("h", 1, 0.0, 0.125, "closed_form")];
        let csv = to_csv(&rows);
        let mut lines = csv.split('\n');
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert!(lines.next().unwrap().starts_with("h,1,"));
        assert!(!csv.contains('\r'));
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn consistency_test_behaviour() {
        let a = Estimate::sampled("h", 1, 1.0, 1.0, 0.1, 10, "mc", 1);
        let b = Estimate::deterministic("h", 1, 1.0, 1.25, "exact");
        assert!(a.consistent_with(&b, 3.0));
        assert!(!a.consistent_with(&b, 2.0));
        let c = Estimate::deterministic("h", 1, 1.0, 1.0, "exact");
        let d = Estimate::deterministic("h", 1, 1.0, 1.0, "other");
        assert!(c.consistent_with(&d, 3.0));
    }

    #[test]
    fn atomic_write_creates_file() {
        let dir = std::env::temp_dir().join(format!("wavechaos-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");
        let rows = vec![Estimate::deterministic("h", 1, 2.0, 0.5, "exact")];
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
