//! CSV and text formats: return panels, order profiles, scenario and
//! covariance matrices.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::aggregation::OrderProfile;
use crate::error::{Error, Result};
use crate::model::{ReturnsPanel, TotalOrder};

/// Column that carries a per-period risk-free rate in panel files.
pub const RF_COLUMN: &str = "rf";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PanelFormat {
    /// Cells are simple returns.
    #[default]
    Returns,
    /// Cells are total-return index levels.
    Levels,
}

fn reader<R: Read>(r: R, headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("{what}: cannot parse {s:?} as a number")))
}

/// Reads `date,<asset_1>,…,<asset_n>[,rf]`.
pub fn read_panel<R: Read>(r: R, format: PanelFormat) -> Result<ReturnsPanel> {
    let mut rdr = reader(r, true);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse("panel header needs a date column and at least one asset".into()));
    }
    let rf_col = header.iter().position(|h| h.eq_ignore_ascii_case(RF_COLUMN));
    let asset_cols: Vec<usize> = (1..header.len()).filter(|&c| Some(c) != rf_col).collect();
    let ids: Vec<String> = asset_cols.iter().map(|&c| header[c].to_string()).collect();
    let mut dates = Vec::new();
    let mut cells = Vec::new();
    let mut rf = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "panel row {} has {} fields, header has {}",
                line + 1,
                rec.len(),
                header.len()
            )));
        }
        dates.push(rec[0].to_string());
        for &c in &asset_cols {
            cells.push(parse_f64(&rec[c], &format!("panel row {}", line + 1))?);
        }
        if let Some(c) = rf_col {
            rf.push(parse_f64(&rec[c], &format!("panel row {} rf", line + 1))?);
        }
    }
    let t = dates.len();
    let m = DMatrix::from_row_slice(t, ids.len(), &cells);
    let panel = match format {
        PanelFormat::Returns => ReturnsPanel::new(dates, ids, m)?,
        PanelFormat::Levels => {
            if !rf.is_empty() {
                rf.remove(0);
            }
            ReturnsPanel::from_levels(dates, ids, m)?
        }
    };
    if rf_col.is_some() {
        panel.with_risk_free(rf)
    } else {
        Ok(panel)
    }
}

pub fn read_panel_file(path: &Path, format: PanelFormat) -> Result<ReturnsPanel> {
    read_panel(File::open(path)?, format)
}

/// Writes returns with shortest round-trip float formatting.
pub fn write_panel<W: Write>(panel: &ReturnsPanel, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(panel.asset_ids().iter().cloned());
    if panel.risk_free().is_some() {
        header.push(RF_COLUMN.to_string());
    }
    wtr.write_record(&header)?;
    for t in 0..panel.n_periods() {
        let mut row = vec![panel.dates()[t].clone()];
        row.extend(panel.period(t).iter().map(|x| x.to_string()));
        if let Some(rf) = panel.risk_free() {
            row.push(rf[t].to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_panel_file(panel: &ReturnsPanel, path: &Path) -> Result<()> {
    write_panel(panel, File::create(path)?)
}

/// Asset labels sorted numerically when all are integers, else
/// lexicographically.
fn canonical_labels(mut labels: Vec<String>) -> Vec<String> {
    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i64>().expect("checked"));
    } else {
        labels.sort();
    }
    labels
}

/// Reads one order per non-empty line, asset labels listed best first.
///
/// Without `asset_ids` the label set of the first line defines the assets,
/// indexed in canonical (numeric or lexicographic) label order.
pub fn read_profile<R: Read>(r: R, asset_ids: Option<&[String]>) -> Result<(Vec<String>, OrderProfile)> {
    let mut lines: Vec<Vec<String>> = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        lines.push(line.split(',').map(|s| s.trim().to_string()).collect());
    }
    let first = lines
        .first()
        .ok_or_else(|| Error::Parse("profile file contains no orders".into()))?;
    let ids = match asset_ids {
        Some(ids) => ids.to_vec(),
        None => canonical_labels(first.clone()),
    };
    let orders = lines
        .iter()
        .enumerate()
        .map(|(i, labels)| {
            let seq = labels
                .iter()
                .map(|l| {
                    ids.iter().position(|id| id == l).ok_or_else(|| {
                        Error::Parse(format!("order {}: unknown asset {l:?}", i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if seq.len() != ids.len() {
                return Err(Error::Parse(format!(
                    "order {} ranks {} assets, expected {}",
                    i + 1,
                    seq.len(),
                    ids.len()
                )));
            }
            TotalOrder::from_sequence(seq)
                .map_err(|e| Error::Parse(format!("order {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, OrderProfile::new(orders)?))
}

pub fn read_profile_file(path: &Path, asset_ids: Option<&[String]>) -> Result<(Vec<String>, OrderProfile)> {
    read_profile(File::open(path)?, asset_ids)
}

pub fn format_order(order: &TotalOrder, ids: &[String]) -> String {
    order
        .sequence()
        .iter()
        .map(|&a| ids[a].as_str())
        .collect::<Vec<_>>()
        .join(",")
}

/// Reads a numeric matrix; a first row that does not parse as numbers is
/// taken as a header of labels.
pub fn read_matrix<R: Read>(r: R) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let mut rdr = reader(r, false);
    let mut header = None;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => header = Some(rec.iter().map(str::to_string).collect()),
            Err(_) => {
                return Err(Error::Parse(format!("row {}: non-numeric cell", i + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("matrix file contains no numeric rows".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Parse("matrix rows differ in length".into()));
    }
    Ok((header, rows))
}

pub fn read_matrix_file(path: &Path) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    read_matrix(File::open(path)?)
}

/// Writes labelled rows of numbers.
pub fn write_rows<W: Write>(w: W, header: &[String], rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for (label, vals) in rows {
        let mut rec = vec![label.clone()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_round_trip_with_rf() {
        let text = "date,A,B,rf\n2000-01,0.01,-0.02,0.001\n2000-02,0.1234567890123,0.5,0.002\n";
        let p = read_panel(text.as_bytes(), PanelFormat::Returns).unwrap();
        assert_eq!(p.asset_ids(), &["A".to_string(), "B".to_string()]);
        assert_eq!(p.risk_free().unwrap(), &[0.001, 0.002]);
        let mut out = Vec::new();
        write_panel(&p, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn levels_become_returns() {
        let text = "date,A\n2000-01,100\n2000-02,110\n2000-03,99\n";
        let p = read_panel(text.as_bytes(), PanelFormat::Levels).unwrap();
        assert_eq!(p.dates(), &["2000-02".to_string(), "2000-03".to_string()]);
        assert!((p.returns()[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((p.returns()[(1, 0)] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn panel_rejects_bad_cells() {
        assert!(read_panel("date,A\n1,0.1\n2,x\n".as_bytes(), PanelFormat::Returns).is_err());
        assert!(read_panel("date,A\n1,0.1\n2,-1.5\n".as_bytes(), PanelFormat::Returns).is_err());
        assert!(read_panel("date,A\n1,0.1\n".as_bytes(), PanelFormat::Returns).is_err());
    }

    #[test]
    fn profile_parsing() {
        let (ids, p) = read_profile("b,a,c\n\na,b,c\n".as_bytes(), None).unwrap();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(p.n_orders(), 2);
        assert_eq!(p.orders()[0].sequence(), &[1, 0, 2]);
        assert_eq!(format_order(&p.orders()[0], &ids), "b,a,c");
        let (ids, _) = read_profile("10,2,1\n".as_bytes(), None).unwrap();
        assert_eq!(ids, vec!["1", "2", "10"]);
        assert!(read_profile("a,b\na,a\n".as_bytes(), None).is_err());
        assert!(read_profile("a,b\na,c\n".as_bytes(), None).is_err());
        assert!(read_profile("".as_bytes(), None).is_err());
    }

    #[test]
    fn matrix_with_and_without_header() {
        let (h, rows) = read_matrix("A,B\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(h.unwrap(), vec!["A", "B"]);
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let (h, rows) = read_matrix("0.5,0.25\n".as_bytes()).unwrap();
        assert!(h.is_none());
        assert_eq!(rows.len(), 1);
        assert!(read_matrix("1,2\n3\n".as_bytes()).is_err());
    }
}
