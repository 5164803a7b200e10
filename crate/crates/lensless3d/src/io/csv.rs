//! Experiment results CSV with deterministic row order and RFC 4180
//! quoting.

use std::path::Path;

use crate::{Error, Result};

use super::atomic_write;

pub const HEADER: &str =
    "scene,method,reg,snr_db,pixel_pitch_um,sensor_px,psnr_db,depth_rmse_mm,wall_s,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scene: String,
    pub method: String,
    pub reg: String,
    pub snr_db: Option<f64>,
    pub pixel_pitch_um: f64,
    pub sensor_px: usize,
    pub psnr_db: f64,
    pub depth_rmse_mm: f64,
    pub wall_s: f64,
    pub seed: u64,
}

impl ResultRow {
    /// Sort key over every key column (the non-metric columns).
    fn key(&self) -> (String, String, String, String, String, usize, u64) {
        (
            self.scene.clone(),
            self.method.clone(),
            self.reg.clone(),
            fmt_opt(self.snr_db),
            format!("{:.6}", self.pixel_pitch_um),
            self.sensor_px,
            self.seed,
        )
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') || field.contains('\r') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Write all rows sorted by their key columns.
pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            quote(&r.scene),
            quote(&r.method),
            quote(&r.reg),
            fmt_opt(r.snr_db),
            r.pixel_pitch_um,
            r.sensor_px,
            r.psnr_db,
            r.depth_rmse_mm,
            r.wall_s,
            r.seed
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Parse a results CSV back into rows (used for resume and verification).
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        other => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                offset: 0,
                msg: format!("bad CSV header: {other:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 10 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                offset: lineno as u64 + 2,
                msg: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                offset: lineno as u64 + 2,
                msg: format!("bad {what}: {s:?}"),
            })
        };
        rows.push(ResultRow {
            scene: fields[0].clone(),
            method: fields[1].clone(),
            reg: fields[2].clone(),
            snr_db: if fields[3].is_empty() { None } else { Some(parse(&fields[3], "snr_db")?) },
            pixel_pitch_um: parse(&fields[4], "pixel_pitch_um")?,
            sensor_px: parse(&fields[5], "sensor_px")? as usize,
            psnr_db: parse(&fields[6], "psnr_db")?,
            depth_rmse_mm: parse(&fields[7], "depth_rmse_mm")?,
            wall_s: parse(&fields[8], "wall_s")?,
            seed: parse(&fields[9], "seed")? as u64,
        });
    }
    Ok(rows)
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes => {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            }
            '"' => in_quotes = true,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut cur));
            }
            c => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn row(scene: &str, seed: u64) -> ResultRow {
        ResultRow {
            scene: scene.into(),
            method: "continuous".into(),
            reg: "wtv2".into(),
            snr_db: Some(30.0),
            pixel_pitch_um: 50.0,
            sensor_px: 128,
            psnr_db: 27.5,
            depth_rmse_mm: 18.25,
            wall_s: 1.5,
            seed,
        }
    }

    #[test]
    fn empty_run_writes_header_only() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_results_csv(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), format!("{HEADER}\n"));
        assert!(read_results_csv(&p).unwrap().is_empty());
    }

    #[test]
    fn rows_are_sorted_on_disk() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_results_csv(&p, &[row("zebra", 2), row("apple", 1), row("apple", 0)]).unwrap();
        let back = read_results_csv(&p).unwrap();
        assert_eq!(back[0].scene, "apple");
        assert_eq!(back[0].seed, 0);
        assert_eq!(back[1].seed, 1);
        assert_eq!(back[2].scene, "zebra");
    }

    #[test]
    fn values_round_trip_through_parser() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut odd = row("name, with \"quotes\"", 7);
        odd.snr_db = None;
        odd.psnr_db = 12.345678901234;
        let rows = vec![odd.clone(), row("plain", 3)];
        write_results_csv(&p, &rows).unwrap();
        let back = read_results_csv(&p).unwrap();
        assert_eq!(back.len(), 2);
        let found = back.iter().find(|r| r.seed == 7).unwrap();
        assert_eq!(*found, odd);
    }
}
