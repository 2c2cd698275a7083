//! CSV emission. Every number is written as C's `%.12e`, so reruns diff
//! byte for byte.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;

/// `x` formatted like C's `printf("%.12e", x)`.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Writes a header row and numeric rows.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> io::Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(|&x| sci(x)))?;
    }
    w.flush()
}

/// Columns of a numeric CSV file, by header name.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> io::Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut columns = vec![Vec::new(); header.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                let x = field.trim().parse().map_err(|_| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}: row {}: `{field}` is not a number", path.display(), line + 2),
                    )
                })?;
                col.push(x);
            }
        }
        Ok(Self { header, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }
}
