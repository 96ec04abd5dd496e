use std::io;

use dro_ci::experiments::CoverageReport;
use serde::Serialize;
use serde_json::ser::Formatter;

/// Compact JSON whose floats carry 17 significant digits.
struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", float(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// A finite float with 17 significant digits.
pub fn float(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.16e}")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser).expect("serializable");
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// Coverage table: method, level, coverage, half_width, mean_width, failures.
pub fn coverage_csv(report: &CoverageReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "level", "coverage", "half_width", "mean_width", "failures"]).expect("in-memory write");
    for c in &report.cells {
        w.write_record([
            c.method.label().to_string(),
            float(c.level),
            float(c.coverage),
            float(c.half_width),
            float(c.mean_width),
            c.failures.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flushed")).expect("CSV is UTF-8")
}
