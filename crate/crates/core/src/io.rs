//! File formats: the feature dataset CSV and fixed-precision JSON output.
//!
//! Feature CSV layout:
//!
//! ```text
//! # free-form provenance comments
//! image_id,f_r_1,f_g_1,f_r_2,f_g_2,f_r_3,f_g_3,f_r_4,f_g_4[,f_r_sg,f_g_sg],r,g,b
//! img001,0.412...,...
//! ```
//!
//! Lines starting with `#` are comments. Values are written as decimals with
//! nine significant digits. The `r,g,b` ground-truth cells may be empty when
//! the truth is unknown.

use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::chroma::{normalize, Chromaticity};
use crate::error::{Error, Result};
use crate::tree::LabeledExample;

/// Significant digits for feature CSV values.
pub const CSV_DIGITS: usize = 9;
/// Significant digits for floats in JSON output; enough for exact round trips.
pub const JSON_DIGITS: usize = 17;

/// Formats `x` as a plain decimal with at least `digits` significant digits
/// (scientific notation for very small or very large magnitudes).
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0.0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let exp = x.abs().log10().floor() as i32;
    if !(-7..=20).contains(&exp) {
        return format!("{:.*e}", digits - 1, x);
    }
    let decimals = (digits as i32 - 1 - exp).max(1) as usize;
    format!("{x:.decimals$}")
}

/// Canonical names of the feature columns.
pub fn feature_names(include_sg: bool) -> Vec<String> {
    let mut names: Vec<String> = (1..=4)
        .flat_map(|i| [format!("f_r_{i}"), format!("f_g_{i}")])
        .collect();
    if include_sg {
        names.push("f_r_sg".into());
        names.push("f_g_sg".into());
    }
    names
}

/// One row of a feature dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub image_id: String,
    pub features: Vec<f64>,
    pub truth: Option<Chromaticity>,
}

/// A feature dataset as stored on disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub comments: Vec<String>,
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            comments: Vec::new(),
            feature_names,
            rows: Vec::new(),
        }
    }

    /// Training examples for every row that carries a ground truth.
    pub fn labeled(&self) -> Result<Vec<LabeledExample>> {
        self.rows
            .iter()
            .map(|row| {
                let truth = row
                    .truth
                    .ok_or_else(|| Error::Format(format!("row `{}` has no ground truth", row.image_id)))?;
                Ok(LabeledExample::new(row.features.clone(), truth))
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        let mut header = vec!["image_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.extend(["r", "g", "b"].map(String::from));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header)?;
        for row in &self.rows {
            if row.features.len() != self.feature_names.len() {
                return Err(Error::Dimension {
                    expected: self.feature_names.len(),
                    got: row.features.len(),
                });
            }
            let mut rec = vec![row.image_id.clone()];
            rec.extend(row.features.iter().map(|v| format_sig(*v, CSV_DIGITS)));
            match row.truth {
                Some(t) => rec.extend(t.as_array().iter().map(|v| format_sig(*v, CSV_DIGITS))),
                None => rec.extend(["", "", ""].map(String::from)),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let comments = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim().to_string())
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let n = cols.len();
        if n < 5 || cols[0] != "image_id" || cols[n - 3..] != ["r", "g", "b"] {
            return Err(Error::Format(
                "feature CSV header must be image_id,<features...>,r,g,b".into(),
            ));
        }
        let feature_names: Vec<String> = cols[1..n - 3].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!("row {}: column `{}` is not a number", line + 1, cols[i]))
                })
            };
            let features = (1..n - 3).map(parse).collect::<Result<Vec<_>>>()?;
            let truth = if (n - 3..n).all(|i| rec[i].trim().is_empty()) {
                None
            } else {
                Some(normalize([parse(n - 3)?, parse(n - 2)?, parse(n - 1)?])?)
            };
            rows.push(FeatureRow {
                image_id: rec[0].to_string(),
                features,
                truth,
            });
        }
        Ok(Self {
            comments,
            feature_names,
            rows,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(io::BufWriter::new(f))
    }
}

/// Pretty JSON formatter that writes floats with [`JSON_DIGITS`] significant
/// digits.
struct FixedFloats<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_sig(value, JSON_DIGITS).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as indented JSON with full-precision floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        FixedFloats(serde_json::ser::PrettyFormatter::with_indent(b"  ")),
    );
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}
