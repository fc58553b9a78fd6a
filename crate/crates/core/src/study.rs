//! Force-accuracy and trajectory studies comparing the reduced model with
//! the full-order model.

use log::info;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::bomd::Trajectory;
use crate::error::{Error, Result};
use crate::fom::{ground_state, WavefunctionSet};
use crate::grid::SpectralOps;
use crate::par;
use crate::rom::{
    config_with_species, dm_solve, forces_from_outcome, DmParams, ReducedModel, SnapshotSettings,
    WaterParameters,
};

/// Number of uniform histogram bins in force reports.
pub const HISTOGRAM_BINS: usize = 20;

/// Marks each test point that appears in the training set.
pub fn classify_reproductive(training: &[WaterParameters], tests: &[WaterParameters]) -> Vec<bool> {
    tests
        .iter()
        .map(|t| training.iter().any(|s| s.matches(t)))
        .collect()
}

/// `n` distinct items drawn with a seeded generator, kept in input order.
pub fn random_subsample<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, items.len(), n.min(items.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

/// Uniform bins on [0, max]; the last bin is closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn uniform(values: &[f64], bins: usize) -> Self {
        let hi = values.iter().cloned().fold(0.0, f64::max);
        let width = if hi > 0.0 { hi / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|i| i as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomStats {
    pub mean: f64,
    pub max: f64,
    pub histogram: Histogram,
}

impl AtomStats {
    fn from_values(values: &[f64]) -> Self {
        Self {
            mean: if values.is_empty() { 0.0 } else { values.mean() },
            max: values.iter().cloned().fold(0.0, f64::max),
            histogram: Histogram::uniform(values, HISTOGRAM_BINS),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    pub h1: AtomStats,
    pub h2: AtomStats,
}

impl SplitStats {
    fn from_cases<'a>(cases: impl Iterator<Item = &'a ForceCase>) -> Self {
        let (h1, h2): (Vec<f64>, Vec<f64>) = cases.map(|c| (c.df_h1, c.df_h2)).unzip();
        Self {
            count: h1.len(),
            h1: AtomStats::from_values(&h1),
            h2: AtomStats::from_values(&h2),
        }
    }
}

/// One test configuration: ‖F_FOM − F_ROM‖ per hydrogen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceCase {
    pub params: WaterParameters,
    pub reproductive: bool,
    pub df_h1: f64,
    pub df_h2: f64,
    pub fom_energy: f64,
    pub rom_free_energy: f64,
    pub dm_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceStudyReport {
    pub cases: Vec<ForceCase>,
    pub reproductive: SplitStats,
    pub predictive: SplitStats,
    pub bins: usize,
}

impl ForceStudyReport {
    pub fn from_cases(cases: Vec<ForceCase>) -> Self {
        let reproductive = SplitStats::from_cases(cases.iter().filter(|c| c.reproductive));
        let predictive = SplitStats::from_cases(cases.iter().filter(|c| !c.reproductive));
        Self {
            cases,
            reproductive,
            predictive,
            bins: HISTOGRAM_BINS,
        }
    }

    /// Per-case table preceded by `# key=value` lines.
    pub fn to_csv(&self, meta: &[(String, String)]) -> Result<String> {
        let mut out = header_lines(meta);
        out.push_str(&format!("# histogram_bins={}\n", self.bins));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "s1", "s2", "s_theta", "reproductive", "df_h1", "df_h2", "e_fom", "a_rom", "dm_iterations",
        ])
        .map_err(csv_error)?;
        for c in &self.cases {
            w.write_record([
                fmt(c.params.s1),
                fmt(c.params.s2),
                fmt(c.params.s_theta),
                c.reproductive.to_string(),
                fmt(c.df_h1),
                fmt(c.df_h2),
                fmt(c.fom_energy),
                fmt(c.rom_free_energy),
                c.dm_iterations.to_string(),
            ])
            .map_err(csv_error)?;
        }
        out.push_str(&finish(w)?);
        Ok(out)
    }

    /// Summary (no per-case rows) as JSON.
    pub fn summary_json(&self, meta: &[(String, String)]) -> Result<String> {
        let meta: serde_json::Map<_, _> = meta
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        let v = serde_json::json!({
            "meta": meta,
            "bins": self.bins,
            "reproductive": self.reproductive,
            "predictive": self.predictive,
        });
        serde_json::to_string_pretty(&v).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// FOM and ROM forces at every test configuration, solved independently in
/// parallel and reported in input order.
pub fn force_difference_study(
    ops: &SpectralOps,
    model: &ReducedModel,
    training: &[WaterParameters],
    tests: &[WaterParameters],
    settings: &SnapshotSettings,
    dm: &DmParams,
) -> Result<ForceStudyReport> {
    let flags = classify_reproductive(training, tests);
    let grid = *ops.grid();
    let cases = par::try_map_range(tests.len(), |i| {
        let nu = tests[i];
        let attach = |e: Error| Error::AtParameters {
            s1: nu.s1,
            s2: nu.s2,
            s_theta: nu.s_theta,
            source: Box::new(e),
        };
        let cfg = config_with_species(&nu, settings.oxygen.clone(), settings.hydrogen.clone());
        let n = cfg.n_occupied().map_err(attach)?;
        let guess = WavefunctionSet::random(grid, n, settings.seed);
        let (fom, f_fom) = ground_state(ops, &cfg, &guess, &settings.scf).map_err(attach)?;
        let rom = dm_solve(model, ops, &cfg, dm, None).map_err(attach)?;
        let f_rom = forces_from_outcome(ops, &cfg, &rom);
        Ok::<_, Error>(ForceCase {
            params: nu,
            reproductive: flags[i],
            df_h1: (f_fom[1] - f_rom[1]).norm(),
            df_h2: (f_fom[2] - f_rom[2]).norm(),
            fom_energy: fom.energy.total,
            rom_free_energy: rom.state.free,
            dm_iterations: rom.iterations,
        })
    })?;
    let report = ForceStudyReport::from_cases(cases);
    info!(
        "force study: {} reproductive (max {:.3e}/{:.3e}), {} predictive (max {:.3e}/{:.3e})",
        report.reproductive.count,
        report.reproductive.h1.max,
        report.reproductive.h2.max,
        report.predictive.count,
        report.predictive.h1.max,
        report.predictive.h2.max
    );
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDelta {
    pub step: usize,
    pub time: f64,
    pub d_l1: f64,
    pub d_l2: f64,
    pub d_theta: f64,
    pub d_e_total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub max_abs: f64,
    pub mean_abs: f64,
}

impl DeltaSummary {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.map(f64::abs).collect();
        Self {
            max_abs: v.iter().cloned().fold(0.0, f64::max),
            mean_abs: if v.is_empty() { 0.0 } else { v.iter().mean() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryComparison {
    pub rows: Vec<TrajectoryDelta>,
    pub l1: DeltaSummary,
    pub l2: DeltaSummary,
    pub theta: DeltaSummary,
    pub e_total: DeltaSummary,
}

impl TrajectoryComparison {
    pub fn to_csv(&self, meta: &[(String, String)]) -> Result<String> {
        let mut out = header_lines(meta);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "time", "d_l1", "d_l2", "d_theta_deg", "d_e_total"])
            .map_err(csv_error)?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                fmt(r.time),
                fmt(r.d_l1),
                fmt(r.d_l2),
                fmt(r.d_theta),
                fmt(r.d_e_total),
            ])
            .map_err(csv_error)?;
        }
        out.push_str(&finish(w)?);
        Ok(out)
    }
}

/// Per-step differences a − b of bond observables and total energy.
pub fn trajectory_compare(a: &Trajectory, b: &Trajectory) -> Result<TrajectoryComparison> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let mut rows = Vec::with_capacity(a.len());
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        if fa.step != fb.step || (fa.time - fb.time).abs() > 1e-9 * fa.time.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "frames differ in step or time: ({}, {}) vs ({}, {})",
                fa.step, fa.time, fb.step, fb.time
            )));
        }
        rows.push(TrajectoryDelta {
            step: fa.step,
            time: fa.time,
            d_l1: fa.l1 - fb.l1,
            d_l2: fa.l2 - fb.l2,
            d_theta: fa.theta_deg - fb.theta_deg,
            d_e_total: fa.e_total - fb.e_total,
        });
    }
    Ok(TrajectoryComparison {
        l1: DeltaSummary::of(rows.iter().map(|r| r.d_l1)),
        l2: DeltaSummary::of(rows.iter().map(|r| r.d_l2)),
        theta: DeltaSummary::of(rows.iter().map(|r| r.d_theta)),
        e_total: DeltaSummary::of(rows.iter().map(|r| r.d_e_total)),
        rows,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyMetrics {
    /// max_t |E(t) − E(0)|.
    pub max_deviation: f64,
    /// Least-squares slope of E against time (Hartree per atomic time unit).
    pub drift_slope: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
}

pub fn energy_conservation_metrics(traj: &Trajectory) -> EnergyMetrics {
    let t: Vec<f64> = traj.frames.iter().map(|f| f.time).collect();
    let e: Vec<f64> = traj.frames.iter().map(|f| f.e_total).collect();
    energy_metrics(&t, &e)
}

pub fn energy_metrics(time: &[f64], energy: &[f64]) -> EnergyMetrics {
    if energy.is_empty() {
        return EnergyMetrics::default();
    }
    let e0 = energy[0];
    let max_deviation = energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
    let mean = energy.mean();
    let std_dev = if energy.len() > 1 { energy.population_std_dev() } else { 0.0 };
    let tm = time.mean();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, e) in time.iter().zip(energy) {
        sxy += (t - tm) * (e - mean);
        sxx += (t - tm) * (t - tm);
    }
    let drift_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    EnergyMetrics {
        max_deviation,
        drift_slope,
        mean,
        std_dev,
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

pub(crate) fn header_lines(meta: &[(String, String)]) -> String {
    meta.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bomd::{MdState, TrajectoryFrame};
    use nalgebra::Vector3;
    use crate::rom::{enumerate_training_set, SamplingPlan};

    #[test]
    fn reproductive_split_of_the_standard_plans() {
        let train = enumerate_training_set(&SamplingPlan::new(2, 2).unwrap()).unwrap();
        let test = enumerate_training_set(&SamplingPlan::new(10, 10).unwrap()).unwrap();
        let flags = classify_reproductive(&train, &test);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 18);
        assert_eq!(flags.iter().filter(|&&f| !f).count(), 708);
        assert!(classify_reproductive(&train, &train).iter().all(|&f| f));
    }

    #[test]
    fn histogram_counts_everything() {
        let v = [0.0, 0.1, 0.5, 0.99, 1.0];
        let h = Histogram::uniform(&v, 4);
        assert_eq!(h.counts, vec![2, 0, 1, 2]);
        assert_eq!(h.edges.len(), 5);
        assert_eq!(h.edges[4], 1.0);
        let z = Histogram::uniform(&[0.0, 0.0], 3);
        assert_eq!(z.counts, vec![2, 0, 0]);
    }

    fn case(r: bool, a: f64, b: f64) -> ForceCase {
        ForceCase {
            params: WaterParameters::new(1.0, 1.0, 0.0),
            reproductive: r,
            df_h1: a,
            df_h2: b,
            fom_energy: 0.0,
            rom_free_energy: 0.0,
            dm_iterations: 1,
        }
    }

    #[test]
    fn report_statistics() {
        let r = ForceStudyReport::from_cases(vec![
            case(true, 1e-5, 2e-5),
            case(false, 3e-5, 1e-5),
            case(true, 3e-5, 4e-5),
        ]);
        assert_eq!(r.reproductive.count + r.predictive.count, 3);
        assert!((r.reproductive.h1.mean - 2e-5).abs() < 1e-18);
        assert_eq!(r.reproductive.h2.max, 4e-5);
        assert_eq!(r.predictive.h1.histogram.counts.iter().sum::<usize>(), 1);
        let meta = vec![("config_hash".to_string(), "abc".to_string())];
        let csv = r.to_csv(&meta).unwrap();
        assert!(csv.starts_with("# config_hash=abc\n# histogram_bins=20\ns1,s2"));
        assert_eq!(csv.lines().count(), 6);
        assert_eq!(csv, r.to_csv(&meta).unwrap());
        let json: serde_json::Value = serde_json::from_str(&r.summary_json(&meta).unwrap()).unwrap();
        assert_eq!(json["reproductive"]["count"], 2);
    }

    #[test]
    fn subsample_is_seeded_and_ordered() {
        let v: Vec<usize> = (0..100).collect();
        let a = random_subsample(&v, 10, 3);
        assert_eq!(a, random_subsample(&v, 10, 3));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(random_subsample(&v, 500, 1).len(), 100);
    }

    fn traj(offset: f64, energy: impl Fn(f64) -> f64) -> Trajectory {
        let frames = (0..5)
            .map(|k| {
                let t = 40.0 * k as f64;
                TrajectoryFrame {
                    step: k,
                    time: t,
                    positions: vec![[0.0; 3]; 3],
                    forces: vec![[0.0; 3]; 3],
                    l1: 1.8 + 0.01 * k as f64 + offset,
                    l2: 1.7,
                    theta_deg: 104.0 - 2.0 * offset,
                    e_total: energy(t),
                    e_ks: 0.0,
                    kinetic: 0.0,
                    iterations: 1,
                }
            })
            .collect();
        Trajectory {
            frames,
            final_state: MdState::initial(vec![Vector3::zeros(); 3], vec![Vector3::zeros(); 3]),
        }
    }

    #[test]
    fn trajectory_differences() {
        let a = traj(0.0, |_| -17.0);
        let same = trajectory_compare(&a, &a).unwrap();
        assert!(same.rows.iter().all(|r| r.d_l1 == 0.0 && r.d_e_total == 0.0));
        let b = traj(0.25, |_| -17.5);
        let c = trajectory_compare(&a, &b).unwrap();
        assert!((c.l1.max_abs - 0.25).abs() < 1e-12 && (c.theta.mean_abs - 0.5).abs() < 1e-12);
        assert!((c.e_total.max_abs - 0.5).abs() < 1e-12 && c.l2.max_abs == 0.0);
        let mut short = b.clone();
        short.frames.pop();
        assert!(matches!(trajectory_compare(&a, &short), Err(Error::LengthMismatch(5, 4))));
    }

    #[test]
    fn energy_metric_oracles() {
        let flat = energy_conservation_metrics(&traj(0.0, |_| -17.165));
        assert_eq!(flat.max_deviation, 0.0);
        assert!(flat.drift_slope.abs() < 1e-15 && flat.std_dev < 1e-15);
        let c = 3.5e-6;
        let ramp = energy_conservation_metrics(&traj(0.0, |t| -17.0 + c * t));
        assert!((ramp.drift_slope - c).abs() < 1e-12);
        assert!((ramp.max_deviation - c * 160.0).abs() < 1e-12);
    }
}
