//! CSV records written by training and evaluation runs. Floats are emitted
//! with 17 significant digits so a write/read cycle is exact.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{input, AnalysisError, Psd, TimeSeries};
use crate::reward::ForceSample;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub t: f64,
    pub marl_id: usize,
    pub u_jet: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardCurveRow {
    pub step: usize,
    pub cfd_id: usize,
    pub marl_id: usize,
    pub mean_local_reward: f64,
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, line: u64) -> Result<f64, AnalysisError> {
    s.trim()
        .parse()
        .map_err(|_| input(format!("line {line}: cannot parse '{s}' as a number")))
}

fn parse_usize(s: &str, line: u64) -> Result<usize, AnalysisError> {
    s.trim()
        .parse()
        .map_err(|_| input(format!("line {line}: cannot parse '{s}' as an index")))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path, columns: usize) -> Result<Vec<(u64, csv::StringRecord)>, AnalysisError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != columns {
            return Err(input(format!(
                "line {line}: expected {columns} columns, found {}",
                rec.len()
            )));
        }
        out.push((line, rec));
    }
    Ok(out)
}

pub fn write_series_csv(path: &Path, value_name: &str, series: &TimeSeries<f64>) -> Result<(), AnalysisError> {
    let rows = series
        .t()
        .iter()
        .zip(series.values())
        .map(|(&t, &v)| vec![fmt(t), fmt(v)]);
    write_rows(path, &["t", value_name], rows)
}

pub fn read_series_csv(path: &Path) -> Result<TimeSeries<f64>, AnalysisError> {
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (line, rec) in read_rows(path, 2)? {
        t.push(parse_f64(&rec[0], line)?);
        v.push(parse_f64(&rec[1], line)?);
    }
    TimeSeries::new(t, v)
}

pub fn write_forces_csv(path: &Path, forces: &[ForceSample<f64>]) -> Result<(), AnalysisError> {
    let rows = forces.iter().map(|f| vec![fmt(f.t), fmt(f.c_l), fmt(f.c_d)]);
    write_rows(path, &["t", "C_l", "C_d"], rows)
}

pub fn read_forces_csv(path: &Path) -> Result<Vec<ForceSample<f64>>, AnalysisError> {
    read_rows(path, 3)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(ForceSample {
                t: parse_f64(&rec[0], line)?,
                c_l: parse_f64(&rec[1], line)?,
                c_d: parse_f64(&rec[2], line)?,
            })
        })
        .collect()
}

pub fn write_actions_csv(path: &Path, actions: &[ActionSample]) -> Result<(), AnalysisError> {
    let rows = actions
        .iter()
        .map(|a| vec![fmt(a.t), a.marl_id.to_string(), fmt(a.u_jet)]);
    write_rows(path, &["t", "marl_id", "U_jet"], rows)
}

pub fn read_actions_csv(path: &Path) -> Result<Vec<ActionSample>, AnalysisError> {
    read_rows(path, 3)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(ActionSample {
                t: parse_f64(&rec[0], line)?,
                marl_id: parse_usize(&rec[1], line)?,
                u_jet: parse_f64(&rec[2], line)?,
            })
        })
        .collect()
}

pub fn write_reward_curve_csv(path: &Path, rows: &[RewardCurveRow]) -> Result<(), AnalysisError> {
    let it = rows.iter().map(|r| {
        vec![
            r.step.to_string(),
            r.cfd_id.to_string(),
            r.marl_id.to_string(),
            fmt(r.mean_local_reward),
        ]
    });
    write_rows(path, &["step", "cfd_id", "marl_id", "mean_local_reward"], it)
}

pub fn read_reward_curve_csv(path: &Path) -> Result<Vec<RewardCurveRow>, AnalysisError> {
    read_rows(path, 4)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(RewardCurveRow {
                step: parse_usize(&rec[0], line)?,
                cfd_id: parse_usize(&rec[1], line)?,
                marl_id: parse_usize(&rec[2], line)?,
                mean_local_reward: parse_f64(&rec[3], line)?,
            })
        })
        .collect()
}

pub fn write_psd_csv(path: &Path, psd: &Psd<f64>) -> Result<(), AnalysisError> {
    let rows = psd.strouhal.iter().zip(&psd.power).map(|(&f, &p)| vec![fmt(f), fmt(p)]);
    write_rows(path, &["St", "power"], rows)
}
