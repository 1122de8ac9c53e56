//! Long-format CSV ingestion and serialization.
//!
//! Header (extra covariate columns may follow):
//! `id,time,dN,A,xi,K1,K2,Y,A0,Y_final`. Empty cells are missing values.
//! Reals are written in shortest round-trip form.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Cohort, CohortBuilder, ColumnRoleMap, PanelError, CORE_COLUMNS};

const ID: &str = "id";
const TIME: &str = "time";
const XI: &str = "xi";
const A0: &str = "A0";
const Y_FINAL: &str = "Y_final";

/// Side information collected during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Rows with `A = 1, dN = 0` repaired to `dN = 1`.
    pub visit_repairs: usize,
    pub rows: usize,
}

struct RawRow {
    id: i64,
    time: usize,
    xi: bool,
    cells: Vec<Option<f64>>,
    a0: Option<f64>,
    y_final: Option<f64>,
}

fn parse_cell(s: &str, what: &str, line: u64) -> Result<Option<f64>, PanelError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| PanelError::Csv(format!("line {line}: bad value {s:?} in column {what}")))
}

/// Load and validate a cohort file.
pub fn load_cohort(path: &Path, roles: Option<&ColumnRoleMap>) -> Result<(Cohort, LoadReport), PanelError> {
    let (cohort, report) = read_cohort(File::open(path)?)?;
    if let Some(r) = roles {
        r.check(&cohort)?;
    }
    Ok((cohort, report))
}

pub fn read_cohort<R: Read>(reader: R) -> Result<(Cohort, LoadReport), PanelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| PanelError::Csv(e.to_string()))?.clone();
    let pos = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::Csv(format!("missing header column {name:?}")))
    };
    let id_col = pos(ID)?;
    let time_col = pos(TIME)?;
    let xi_col = pos(XI)?;
    let a0_col = pos(A0)?;
    let yf_col = pos(Y_FINAL)?;
    let core: Vec<usize> = CORE_COLUMNS.iter().map(|c| pos(c)).collect::<Result<_, _>>()?;
    let fixed = [ID, TIME, XI, A0, Y_FINAL];
    let extras: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !fixed.contains(h) && !CORE_COLUMNS.contains(h))
        .map(|(k, h)| (k, h.to_string()))
        .collect();
    let value_cols: Vec<(usize, String)> = core
        .iter()
        .zip(CORE_COLUMNS)
        .map(|(&k, n)| (k, n.to_string()))
        .chain(extras.iter().cloned())
        .collect();

    let mut report = LoadReport::default();
    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PanelError::Csv(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let int = |k: usize, what: &str| -> Result<i64, PanelError> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<i64>().ok())
                .ok_or_else(|| PanelError::Csv(format!("line {line}: bad integer in column {what}")))
        };
        let id = int(id_col, ID)?;
        let time = usize::try_from(int(time_col, TIME)?)
            .map_err(|_| PanelError::Csv(format!("line {line}: negative time")))?;
        let xi = match int(xi_col, XI)? {
            0 => false,
            1 => true,
            v => return Err(PanelError::Csv(format!("line {line}: xi must be 0 or 1, got {v}"))),
        };
        let mut cells = Vec::with_capacity(value_cols.len());
        for (k, name) in &value_cols {
            cells.push(parse_cell(rec.get(*k).unwrap_or(""), name, line)?);
        }
        if cells[1] == Some(1.0) && cells[0] == Some(0.0) {
            cells[0] = Some(1.0);
            report.visit_repairs += 1;
        }
        raw.push(RawRow {
            id,
            time,
            xi,
            cells,
            a0: parse_cell(rec.get(a0_col).unwrap_or(""), A0, line)?,
            y_final: parse_cell(rec.get(yf_col).unwrap_or(""), Y_FINAL, line)?,
        });
    }
    if report.visit_repairs > 0 {
        log::warn!("forced dN=1 on {} rows with A=1 and dN=0", report.visit_repairs);
    }
    report.rows = raw.len();
    raw.sort_by_key(|r| (r.id, r.time));
    let tau = raw.iter().map(|r| r.time).max().unwrap_or(0);

    let extra_names: Vec<&str> = extras.iter().map(|(_, n)| n.as_str()).collect();
    let mut builder = CohortBuilder::new(tau, &[A0], &extra_names);
    let mut start = 0;
    while start < raw.len() {
        let id = raw[start].id;
        let end = start + raw[start..].iter().take_while(|r| r.id == id).count();
        let rows = &raw[start..end];
        let mut last = None;
        for (k, r) in rows.iter().enumerate() {
            if k > 0 && r.time == rows[k - 1].time {
                return Err(PanelError::DuplicateRow { id, time: r.time });
            }
            if r.time != k {
                return Err(PanelError::Subject {
                    id,
                    msg: format!("time grid has a gap before time {}", r.time),
                });
            }
            if r.xi {
                if last.is_some_and(|l: usize| l + 1 != k) {
                    return Err(PanelError::NonMonotoneCensoring { id, time: r.time });
                }
                last = Some(k);
            }
        }
        let last = last.filter(|_| rows[0].xi).ok_or(PanelError::Subject {
            id,
            msg: "not in study at time 0".into(),
        })?;
        let a0 = rows[0].a0.ok_or(PanelError::Subject {
            id,
            msg: "baseline A0 missing".into(),
        })?;
        let outcome = if last == tau {
            Some(rows[tau].y_final.ok_or(PanelError::Subject {
                id,
                msg: "final outcome missing for a subject in study at tau".into(),
            })?)
        } else {
            None
        };
        let cells: Vec<Vec<Option<f64>>> = rows[..=last].iter().map(|r| r.cells.clone()).collect();
        builder.push(id, last, &[a0], &cells, outcome)?;
        start = end;
    }
    Ok((builder.build()?, report))
}

pub fn write_cohort(cohort: &Cohort, path: &Path) -> Result<(), PanelError> {
    let f = File::create(path)?;
    write_cohort_to(cohort, std::io::BufWriter::new(f))
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_cohort_to<W: Write>(cohort: &Cohort, writer: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    let extras: Vec<&str> = cohort.column_names().filter(|c| !CORE_COLUMNS.contains(c)).collect();
    let mut header = vec![ID, TIME, "dN", "A", XI, "K1", "K2", "Y", A0, Y_FINAL];
    header.extend(&extras);
    let csv_err = |e: csv::Error| PanelError::Csv(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    let tau = cohort.tau();
    for i in 0..cohort.n() {
        let a0 = cohort.value(A0, i, 0);
        for t in 0..=cohort.last_time(i) {
            let mut rec = vec![
                cohort.ids()[i].to_string(),
                t.to_string(),
                fmt(cohort.value("dN", i, t)),
                fmt(cohort.value("A", i, t)),
                "1".to_string(),
                fmt(cohort.value("K1", i, t)),
                fmt(cohort.value("K2", i, t)),
                fmt(cohort.value("Y", i, t)),
                fmt(a0),
                if t == tau { fmt(cohort.outcome(i)) } else { String::new() },
            ];
            rec.extend(extras.iter().map(|c| fmt(cohort.value(c, i, t))));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::CellState;

    const HEAD: &str = "id,time,dN,A,xi,K1,K2,Y,A0,Y_final\n";

    fn load(body: &str) -> Result<(Cohort, LoadReport), PanelError> {
        read_cohort(format!("{HEAD}{body}").as_bytes())
    }

    #[test]
    fn fully_observed_two_subjects() {
        let body = "\
1,0,,,1,1,2,120,0,
1,1,1,0,1,1.5,2,121,0,
1,2,0,0,1,1.7,2.5,122,0,
1,3,,,1,,,,0,200.5
2,0,,,1,3,1,110,1,
2,1,0,0,1,3,1,111,1,
2,2,1,1,1,3,1,112,1,
2,3,,,1,,,,1,190
";
        let (c, rep) = load(body).unwrap();
        assert_eq!((c.n(), c.tau()), (2, 3));
        assert_eq!(rep.visit_repairs, 0);
        for t in 0..3 {
            assert_eq!(c.count_cells("K1", t, CellState::Missing), 0);
        }
        assert_eq!(c.outcome(0), Some(200.5));
    }

    #[test]
    fn addon_without_visit_is_repaired() {
        let body = "1,0,,,1,1,2,120,0,\n1,1,0,1,1,1,2,121,0,\n1,2,0,0,1,1,2,122,0,\n1,3,,,1,,,,0,1\n";
        let (c, rep) = load(body).unwrap();
        assert_eq!(rep.visit_repairs, 1);
        assert_eq!(c.value("dN", 0, 1), Some(1.0));
    }

    #[test]
    fn non_monotone_censoring_rejected() {
        let body = "1,0,,,1,1,2,120,0,\n1,1,0,0,0,,,,0,\n1,2,0,0,1,1,2,122,0,\n1,3,,,1,,,,0,1\n";
        assert!(matches!(load(body), Err(PanelError::NonMonotoneCensoring { id: 1, time: 2 })));
    }

    #[test]
    fn duplicate_rows_rejected() {
        let body = "1,0,,,1,1,2,120,0,\n1,0,,,1,1,2,120,0,\n";
        assert!(matches!(load(body), Err(PanelError::DuplicateRow { id: 1, time: 0 })));
    }

    #[test]
    fn censored_tail_is_dropped_and_round_trips() {
        let body = "\
1,0,,,1,1,2,120,0,
1,1,1,1,1,,2,121,0,
1,2,0,0,0,,,,0,
1,3,,,0,,,,0,
2,0,,,1,0.1,0.2,110,1,
2,1,0,0,1,4,1,111,1,
2,2,1,0,1,3,1,112,1,
2,3,,,1,,,,1,190.25
";
        let (c, _) = load(body).unwrap();
        assert_eq!(c.last_time(0), 1);
        assert_eq!(c.value("K1", 0, 1), None);
        assert_eq!(c.cell("K1", 0, 1), Some(CellState::Missing));
        let mut buf = Vec::new();
        write_cohort_to(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count() - 1, 2 + 4);
        let (back, _) = read_cohort(buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn extra_columns_are_kept() {
        let h = "id,time,dN,A,xi,K1,K2,Y,A0,Y_final,Z\n";
        let body = "1,0,,,1,1,2,120,0,,5\n1,1,1,0,1,1,2,121,0,,6\n1,2,0,0,1,1,2,122,0,,\n1,3,,,1,,,,0,1,\n";
        let (c, _) = read_cohort(format!("{h}{body}").as_bytes()).unwrap();
        assert_eq!(c.value("Z", 0, 1), Some(6.0));
        assert_eq!(c.value("Z", 0, 2), None);
    }
}
