use std::path::Path;

use log::info;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::TimeNormalisation;
use crate::survival::SurvivalDataset;

/// A CSV survival table after cleaning and time normalisation.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: SurvivalDataset,
    pub features: Vec<String>,
    pub time: TimeNormalisation,
    pub dropped: usize,
}

fn missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan") || c.eq_ignore_ascii_case("null")
}

/// Reads a table with a `time` column, an `event` column of 0/1 and one or
/// more numeric feature columns. Rows with a missing cell are dropped and
/// times are min-max normalised over the remaining rows.
pub fn load_csv(path: &Path) -> Result<LoadedData> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |col: &str| headers.iter().position(|h| h == col);
    let (Some(ti), Some(ei)) = (find("time"), find("event")) else {
        return Err(Error::Csv {
            path: name,
            row: 0,
            reason: "header must contain `time` and `event`".into(),
        });
    };
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&c| c != ti && c != ei).collect();
    if feature_idx.is_empty() {
        return Err(Error::Csv {
            path: name,
            row: 0,
            reason: "no feature columns".into(),
        });
    }
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0;
    for (r, rec) in reader.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Csv {
                path: name,
                row,
                reason: format!("{} cells for {} columns", rec.len(), headers.len()),
            });
        }
        if rec.iter().any(missing) {
            dropped += 1;
            continue;
        }
        let num = |c: usize| -> Result<f64> {
            let cell = rec[c].trim();
            cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Csv {
                path: name.clone(),
                row,
                reason: format!("column `{}`: not a number: {cell:?}", headers[c]),
            })
        };
        let e = match rec[ei].trim() {
            "0" | "0.0" => false,
            "1" | "1.0" => true,
            other => {
                return Err(Error::Csv {
                    path: name,
                    row,
                    reason: format!("event must be 0 or 1, got {other:?}"),
                })
            }
        };
        let t = num(ti)?;
        if t < 0.0 {
            return Err(Error::Csv {
                path: name,
                row,
                reason: format!("negative time {t}"),
            });
        }
        for &c in &feature_idx {
            values.push(num(c)?);
        }
        times.push(t);
        events.push(e);
    }
    if dropped > 0 {
        info!("{name}: dropped {dropped} rows with missing cells");
    }
    if times.is_empty() {
        return Err(Error::Csv {
            path: name,
            row: 0,
            reason: "no complete rows".into(),
        });
    }
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Csv {
            path: name,
            row: 0,
            reason: format!("time range [{lo}, {hi}] is empty"),
        });
    }
    let time = TimeNormalisation { origin: lo, unit: hi - lo };
    let y: Vec<f64> = times.iter().map(|&t| time.to_model(t).clamp(0.0, 1.0)).collect();
    let x = Array2::from_shape_vec((y.len(), feature_idx.len()), values).expect("row-major fill");
    Ok(LoadedData {
        dataset: SurvivalDataset::new(x, y, events)?,
        features: feature_idx.iter().map(|&c| headers[c].clone()).collect(),
        time,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn drops_rows_with_missing_cells() {
        let f = write("a,time,event\n1.0,2,1\n,4,0\n3.0,6,1\n");
        let d = load_csv(f.path()).unwrap();
        assert_eq!(d.dropped, 1);
        assert_eq!(d.dataset.n(), 2);
        assert_eq!(d.features, vec!["a"]);
    }

    #[test]
    fn min_max_normalises_times() {
        let f = write("time,event,a,b\n2,1,0,0\n4,0,1,1\n6,1,2,NA\n6,1,2,5\n");
        let d = load_csv(f.path()).unwrap();
        assert_eq!(d.dataset.y(), &[0.0, 0.5, 1.0]);
        assert_eq!(d.time.to_raw(0.5), 4.0);
        assert_eq!(d.dataset.events(), &[true, false, true]);
    }

    #[test]
    fn rejects_non_binary_event_naming_the_row() {
        let f = write("time,event,a\n1,0,1\n2,1,1\n3,2,1\n");
        let err = load_csv(f.path()).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(err.contains("event"));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(load_csv(write("time,event\n1,1\n").path()).is_err());
        assert!(load_csv(write("t,event,a\n1,1,1\n").path()).is_err());
        assert!(load_csv(write("time,event,a\n1,1,1\n1,0,2\n").path()).is_err());
        assert!(load_csv(write("time,event,a\n1,1,x\n2,0,2\n").path()).is_err());
    }
}
