//! Trajectory CSV: one row per MD step, `# key=value` comment lines first.

use std::path::Path;

use nalgebra::Vector3;

use crate::bomd::{MdState, Trajectory, TrajectoryFrame};
use crate::error::{Error, Result};
use crate::study::{csv_error, finish, header_lines};

/// Shortest representation that parses back to the same bits.
fn fmt(x: f64) -> String {
    format!("{x:e}")
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn columns(n_atoms: usize) -> Vec<String> {
    let mut cols = vec!["step".to_string(), "time".to_string()];
    for prefix in ["r", "f"] {
        for a in 0..n_atoms {
            for ax in AXES {
                cols.push(format!("{prefix}{a}_{ax}"));
            }
        }
    }
    cols.extend(
        ["l1", "l2", "theta_deg", "e_total", "e_ks", "iterations", "kinetic"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols
}

pub fn trajectory_to_csv(traj: &Trajectory, meta: &[(String, String)]) -> Result<String> {
    let n_atoms = traj.frames.first().map_or(0, |f| f.positions.len());
    let mut out = header_lines(meta);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns(n_atoms)).map_err(csv_error)?;
    for f in &traj.frames {
        if f.positions.len() != n_atoms || f.forces.len() != n_atoms {
            return Err(Error::LengthMismatch(f.positions.len(), n_atoms));
        }
        let mut row = vec![f.step.to_string(), fmt(f.time)];
        row.extend(f.positions.iter().chain(&f.forces).flatten().map(|&x| fmt(x)));
        row.extend([fmt(f.l1), fmt(f.l2), fmt(f.theta_deg), fmt(f.e_total), fmt(f.e_ks)]);
        row.push(f.iterations.to_string());
        row.push(fmt(f.kinetic));
        w.write_record(&row).map_err(csv_error)?;
    }
    out.push_str(&finish(w)?);
    Ok(out)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, meta: &[(String, String)]) -> Result<()> {
    super::write_file(path, trajectory_to_csv(traj, meta)?)?;
    Ok(())
}

/// Parsed trajectory file: frames plus the `# key=value` header.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFile {
    pub meta: Vec<(String, String)>,
    pub frames: Vec<TrajectoryFrame>,
}

impl TrajectoryFile {
    /// A trajectory whose final state sits at the last recorded positions
    /// with zero velocity. Enough for comparisons, not for restarting.
    pub fn into_trajectory(self) -> Trajectory {
        let positions: Vec<Vector3<f64>> = self
            .frames
            .last()
            .map(|f| f.positions.iter().map(|&p| Vector3::from(p)).collect())
            .unwrap_or_default();
        let zeros = vec![Vector3::zeros(); positions.len()];
        Trajectory {
            frames: self.frames,
            final_state: MdState::initial(positions, zeros),
        }
    }
}

fn parse<T: std::str::FromStr>(field: &str, name: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("column {name}: cannot parse {field:?}")))
}

pub fn trajectory_from_csv(text: &str) -> Result<TrajectoryFile> {
    let meta = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l[1..].trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column {name}")))
    };
    let n_atoms = headers.iter().filter(|h| h.starts_with('r') && h.ends_with("_x")).count();
    let pos_cols: Vec<[usize; 3]> = (0..n_atoms)
        .map(|a| Ok([col(&format!("r{a}_x"))?, col(&format!("r{a}_y"))?, col(&format!("r{a}_z"))?]))
        .collect::<Result<_>>()?;
    let force_cols: Vec<[usize; 3]> = (0..n_atoms)
        .map(|a| Ok([col(&format!("f{a}_x"))?, col(&format!("f{a}_y"))?, col(&format!("f{a}_z"))?]))
        .collect::<Result<_>>()?;
    let [step, time, l1, l2, theta, e_total, e_ks, iters] =
        ["step", "time", "l1", "l2", "theta_deg", "e_total", "e_ks", "iterations"].map(col);
    let (step, time, l1, l2, theta, e_total, e_ks, iters) =
        (step?, time?, l1?, l2?, theta?, e_total?, e_ks?, iters?);
    let kinetic = col("kinetic").ok();

    let mut frames = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let get = |i: usize| parse::<f64>(&rec[i], &headers[i]);
        let vec3 = |c: &[usize; 3]| -> Result<[f64; 3]> { Ok([get(c[0])?, get(c[1])?, get(c[2])?]) };
        let e_total_v = get(e_total)?;
        let e_ks_v = get(e_ks)?;
        frames.push(TrajectoryFrame {
            step: parse(&rec[step], "step")?,
            time: get(time)?,
            positions: pos_cols.iter().map(vec3).collect::<Result<_>>()?,
            forces: force_cols.iter().map(vec3).collect::<Result<_>>()?,
            l1: get(l1)?,
            l2: get(l2)?,
            theta_deg: get(theta)?,
            e_total: e_total_v,
            e_ks: e_ks_v,
            kinetic: match kinetic {
                Some(k) => get(k)?,
                None => e_total_v - e_ks_v,
            },
            iterations: parse(&rec[iters], "iterations")?,
        });
    }
    Ok(TrajectoryFile { meta, frames })
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile> {
    trajectory_from_csv(&super::read_text(path)?)
}
