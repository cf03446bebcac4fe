//! Bit-stable report files: sorted JSON keys, rationals as `"p/q"`, floats
//! at 17 significant digits, trailing newline.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `None` when the command asserts nothing.
    pub passed: Option<bool>,
    pub failures: Vec<String>,
}

impl Verdict {
    pub fn informational() -> Self {
        Self {
            passed: None,
            failures: Vec::new(),
        }
    }

    pub fn from_failures(failures: Vec<String>) -> Self {
        Self {
            passed: Some(failures.is_empty()),
            failures,
        }
    }

    pub fn ok(&self) -> bool {
        self.passed != Some(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub results: Value,
    pub verdict: Verdict,
}

impl Report {
    pub fn new<C: Serialize, R: Serialize>(command: &str, config: &C, seed: u64, results: &R, verdict: Verdict) -> Result<Self> {
        Ok(Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            results: serde_json::to_value(results)?,
            verdict,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Pretty printing with floats always in `d.dddddddddddddddde±x` form.
struct StableFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for StableFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes through `Value`, whose maps are ordered, so keys come out
/// sorted regardless of struct field order.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        StableFormatter {
            inner: PrettyFormatter::new(),
        },
    );
    v.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("json output is utf-8"))
}

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Two-column fallback for results without a natural table.
pub fn key_value_csv(value: &Value) -> Result<String> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, x, out);
                }
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), x, out);
                }
            }
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            Value::Number(n) => out.push((
                prefix.to_string(),
                match n.as_f64() {
                    Some(f) if n.is_f64() => format!("{f:.16e}"),
                    _ => n.to_string(),
                },
            )),
            Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
            Value::Null => out.push((prefix.to_string(), String::new())),
        }
    }
    let mut rows = Vec::new();
    walk("", value, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_linalg::{rat, RationalMatrix};
    use serde_json::json;

    fn sample() -> Report {
        let m = RationalMatrix::from_rows(vec![vec![rat(1, 3), rat(-2, 1)]]).unwrap();
        Report::new(
            "rank",
            &json!({"p": 1, "T": 3, "zeta": [0.1, 2.5e-12]}),
            7,
            &json!({"matrix": m, "x": 0.30000000000000004, "n": 3, "flag": true}),
            Verdict::from_failures(vec![]),
        )
        .unwrap()
    }

    #[test]
    fn keys_sorted_and_newline() {
        let s = sample().to_json().unwrap();
        assert!(s.ends_with("}\n"));
        let order: Vec<usize> = ["\"command\"", "\"config\"", "\"results\"", "\"seed\"", "\"verdict\"", "\"version\""]
            .iter()
            .map(|k| s.find(k).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        assert!(s.contains("\"1/3\"") && s.contains("\"-2/1\""));
        assert!(s.contains("3.0000000000000004e-1"));
    }

    #[test]
    fn parse_serialize_fixpoint() {
        let s = sample().to_json().unwrap();
        let back = Report::from_json(&s).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.to_json().unwrap(), s);
    }

    #[test]
    fn byte_identical_and_csv() {
        assert_eq!(sample().to_json().unwrap(), sample().to_json().unwrap());
        let csv = key_value_csv(&sample().results).unwrap();
        assert!(csv.starts_with("key,value\n"));
        assert!(csv.contains("matrix.0.0,1/3"));
    }

    #[test]
    fn empty_results() {
        let r = Report::new("dims", &json!({}), 0, &json!({"rows": []}), Verdict::from_failures(vec![])).unwrap();
        let s = r.to_json().unwrap();
        assert_eq!(Report::from_json(&s).unwrap(), r);
    }
}
