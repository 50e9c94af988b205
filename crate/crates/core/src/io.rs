//! Tab-separated text formats.
//!
//! Blank lines and lines starting with `#` are skipped everywhere. Numbers are
//! written with Rust's shortest round-trip formatting, so a file written here
//! reads back bit-for-bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::zpipeline::{ExpressionMatrix, Group};
use crate::zvector::ZVector;

struct Field<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

impl Field<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn number(&self) -> Result<f64> {
        let v: f64 = self
            .text
            .trim()
            .parse()
            .map_err(|_| self.error(format!("'{}' is not a number", self.text)))?;
        if !v.is_finite() {
            return Err(self.error(format!("'{}' is not finite", self.text)));
        }
        Ok(v)
    }
}

/// Data lines as (1-based line number, fields with 1-based character columns).
fn data_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, Vec<(usize, String)>)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut col = 1;
        let mut fields = Vec::new();
        for f in line.split('\t') {
            fields.push((col, f.to_string()));
            col += f.chars().count() + 1;
        }
        out.push((i + 1, fields));
    }
    Ok(out)
}

fn no_data(line: usize) -> Error {
    Error::Parse {
        line,
        column: 1,
        message: "no data rows".into(),
    }
}

fn expect_fields(line: usize, fields: &[(usize, String)], allowed: &[usize]) -> Result<()> {
    if allowed.contains(&fields.len()) {
        return Ok(());
    }
    let column = fields.last().map(|(c, _)| *c).unwrap_or(1);
    Err(Error::Parse {
        line,
        column,
        message: format!("expected {allowed:?} tab-separated fields, found {}", fields.len()),
    })
}

/// Rows of `label<TAB>z[<TAB>covariate]`. The covariate is all-or-nothing.
pub fn read_zvector<R: BufRead>(reader: R) -> Result<ZVector> {
    let rows = data_lines(reader)?;
    let Some((first_line, first)) = rows.first() else {
        return Err(no_data(1));
    };
    expect_fields(*first_line, first, &[2, 3])?;
    let width = first.len();
    let mut labels = Vec::with_capacity(rows.len());
    let mut z = Vec::with_capacity(rows.len());
    let mut cov = Vec::new();
    for (line, fields) in &rows {
        expect_fields(*line, fields, &[width])?;
        let field = |k: usize| Field {
            text: &fields[k].1,
            line: *line,
            column: fields[k].0,
        };
        labels.push(fields[0].1.clone());
        z.push(field(1).number()?);
        if width == 3 {
            cov.push(field(2).number()?);
        }
    }
    let zv = ZVector::new(z)?.with_labels(labels)?;
    if width == 3 {
        zv.with_covariate(cov)
    } else {
        Ok(zv)
    }
}

pub fn write_zvector<W: Write>(mut w: W, z: &ZVector) -> Result<()> {
    let cov = z.covariate();
    if cov.is_some() {
        writeln!(w, "# label\tz\tcovariate")?;
    } else {
        writeln!(w, "# label\tz")?;
    }
    for (i, v) in z.values().iter().enumerate() {
        match cov {
            Some(c) => writeln!(w, "{}\t{}\t{}", z.label(i), v, c[i])?,
            None => writeln!(w, "{}\t{}", z.label(i), v)?,
        }
    }
    Ok(())
}

/// One number per line.
pub fn read_values<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let rows = data_lines(reader)?;
    if rows.is_empty() {
        return Err(no_data(1));
    }
    rows.iter()
        .map(|(line, fields)| {
            expect_fields(*line, fields, &[1])?;
            Field {
                text: &fields[0].1,
                line: *line,
                column: fields[0].0,
            }
            .number()
        })
        .collect()
}

/// Pairs of `subject<TAB>group`, group being `control`/`treatment` or `0`/`1`.
pub fn read_groups<R: BufRead>(reader: R) -> Result<Vec<(String, Group)>> {
    let rows = data_lines(reader)?;
    if rows.is_empty() {
        return Err(no_data(1));
    }
    rows.iter()
        .map(|(line, fields)| {
            expect_fields(*line, fields, &[2])?;
            let g = match fields[1].1.trim().to_ascii_lowercase().as_str() {
                "control" | "0" => Group::Control,
                "treatment" | "1" => Group::Treatment,
                other => {
                    return Err(Error::Parse {
                        line: *line,
                        column: fields[1].0,
                        message: format!("unknown group '{other}'"),
                    })
                }
            };
            Ok((fields[0].1.trim().to_string(), g))
        })
        .collect()
}

/// Pairs of `key<TAB>value` text, e.g. case label and stratum name.
pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let rows = data_lines(reader)?;
    if rows.is_empty() {
        return Err(no_data(1));
    }
    rows.into_iter()
        .map(|(line, mut fields)| {
            expect_fields(line, &fields, &[2])?;
            let v = fields.pop().unwrap().1.trim().to_string();
            let k = fields.pop().unwrap().1.trim().to_string();
            Ok((k, v))
        })
        .collect()
}

/// Header of subject IDs (optionally preceded by a corner cell), then one
/// row per case: `label<TAB>value…`. Groups are matched to columns by subject.
pub fn read_matrix<R: BufRead>(reader: R, groups: &[(String, Group)]) -> Result<ExpressionMatrix> {
    let rows = data_lines(reader)?;
    let Some((header_line, header)) = rows.first() else {
        return Err(no_data(1));
    };
    let Some((_, first_row)) = rows.get(1) else {
        return Err(no_data(header_line + 1));
    };
    let n_cols = first_row.len().saturating_sub(1);
    let subjects: Vec<&str> = match header.len() {
        n if n == n_cols => header.iter().map(|(_, s)| s.trim()).collect(),
        n if n == n_cols + 1 => header[1..].iter().map(|(_, s)| s.trim()).collect(),
        _ => {
            return Err(Error::Parse {
                line: *header_line,
                column: 1,
                message: format!(
                    "header has {} fields but the first row has {n_cols} values",
                    header.len()
                ),
            })
        }
    };

    let lookup: HashMap<&str, Group> = groups.iter().map(|(s, g)| (s.as_str(), *g)).collect();
    let col_groups = subjects
        .iter()
        .enumerate()
        .map(|(k, s)| {
            lookup.get(s).copied().ok_or_else(|| Error::Parse {
                line: *header_line,
                column: header[header.len() - n_cols + k].0,
                message: format!("subject '{s}' has no group"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut labels = Vec::with_capacity(rows.len() - 1);
    let mut values = Vec::with_capacity(rows.len() - 1);
    for (line, fields) in &rows[1..] {
        expect_fields(*line, fields, &[n_cols + 1])?;
        labels.push(fields[0].1.clone());
        let row = fields[1..]
            .iter()
            .map(|(column, text)| {
                Field {
                    text,
                    line: *line,
                    column: *column,
                }
                .number()
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    ExpressionMatrix::new(values, labels, col_groups)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn read_zvector_file(path: &Path) -> Result<ZVector> {
    read_zvector(open(path)?)
}

pub fn read_values_file(path: &Path) -> Result<Vec<f64>> {
    read_values(open(path)?)
}

pub fn read_pairs_file(path: &Path) -> Result<Vec<(String, String)>> {
    read_pairs(open(path)?)
}

pub fn read_matrix_files(matrix: &Path, groups: &Path) -> Result<ExpressionMatrix> {
    let g = read_groups(open(groups)?)?;
    read_matrix(open(matrix)?, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_err(e: Error) -> (usize, usize) {
        match e {
            Error::Parse { line, column, .. } => (line, column),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn reads_zvector_with_comments() {
        let text = "# header\n\ng1\t1.5\ng2\t-0.25\n";
        let z = read_zvector(text.as_bytes()).unwrap();
        assert_eq!(z.values(), &[1.5, -0.25]);
        assert_eq!(z.label(1), "g2");
        assert!(z.covariate().is_none());
    }

    #[test]
    fn reads_covariate_column() {
        let z = read_zvector("a\t1\t10\nb\t2\t20\n".as_bytes()).unwrap();
        assert_eq!(z.covariate().unwrap(), &[10.0, 20.0]);
    }

    #[test]
    fn empty_file_is_parse_error() {
        let e = read_zvector("".as_bytes()).unwrap_err();
        assert_eq!(e.kind(), "parse");
        let e = read_zvector("# only a comment\n".as_bytes()).unwrap_err();
        assert_eq!(e.kind(), "parse");
    }

    #[test]
    fn bad_number_names_line_and_column() {
        let e = read_zvector("a\t1\ngene_b\tx2\n".as_bytes()).unwrap_err();
        assert_eq!(parse_err(e), (2, 8));
        let e = read_zvector("a\t1\nb\tNaN\n".as_bytes()).unwrap_err();
        assert_eq!(parse_err(e), (2, 3));
    }

    #[test]
    fn ragged_rows_rejected() {
        let e = read_zvector("a\t1\t3\nb\t2\n".as_bytes()).unwrap_err();
        assert_eq!(parse_err(e).0, 2);
    }

    #[test]
    fn matrix_with_groups() {
        let groups = read_groups("s1\tcontrol\ns2\t0\ns3\ttreatment\ns4\t1\n".as_bytes()).unwrap();
        let text = "gene\ts1\ts2\ts3\ts4\ng1\t1\t2\t3\t4\ng2\t0\t0.5\t1\t2\n";
        let m = read_matrix(text.as_bytes(), &groups).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(1), &[0.0, 0.5, 1.0, 2.0]);
        assert_eq!(m.groups()[2], Group::Treatment);

        // Header without a corner cell.
        let text = "s4\ts3\ts2\ts1\ng1\t1\t2\t3\t4\n";
        let m = read_matrix(text.as_bytes(), &groups).unwrap();
        assert_eq!(m.groups(), &[Group::Treatment, Group::Treatment, Group::Control, Group::Control]);
    }

    #[test]
    fn unknown_subject_and_group() {
        let groups = read_groups("s1\tcontrol\n".as_bytes()).unwrap();
        let e = read_matrix("g\ts1\ts9\nr\t1\t2\n".as_bytes(), &groups).unwrap_err();
        assert_eq!(parse_err(e), (1, 6));
        let e = read_groups("s1\tplacebo\n".as_bytes()).unwrap_err();
        assert_eq!(parse_err(e), (1, 4));
    }

    #[test]
    fn values_file() {
        assert_eq!(read_values("1\n# c\n2.5\n".as_bytes()).unwrap(), vec![1.0, 2.5]);
        assert!(read_values("1\t2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn zvector_round_trips(
            z in prop::collection::vec(-1e6f64..1e6, 1..50),
            with_cov in any::<bool>(),
        ) {
            let n = z.len();
            let mut zv = ZVector::new(z.clone()).unwrap()
                .with_labels((0..n).map(|i| format!("case{i}")).collect()).unwrap();
            if with_cov {
                zv = zv.with_covariate(z.iter().map(|v| v * 1e-3 + 0.1).collect()).unwrap();
            }
            let mut buf = Vec::new();
            write_zvector(&mut buf, &zv).unwrap();
            let back = read_zvector(buf.as_slice()).unwrap();
            prop_assert_eq!(back, zv);
        }
    }
}
