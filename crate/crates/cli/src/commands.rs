use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::Vector3;
use serde_json::{json, Value};

use romd::bomd::{bomd_run, bond_observables, FomForceProvider, Trajectory};
use romd::fom::potential::density_terms;
use romd::fom::{electron_density, forces_from_density, ground_state, IonicBackground, WavefunctionSet};
use romd::grid::{Grid3, SpectralOps};
use romd::io::{
    read_basis, read_sidecar, read_snapshots, read_trajectory, sidecar_path, write_basis,
    write_sidecar, write_snapshots, write_trajectory, RunConfig, Sidecar,
};
use romd::rom::{
    build_reduced_basis_from, collect_snapshots, config_with_species, enumerate_training_set,
    BasisProvenance, ReducedModel, RomForceProvider, SamplingPlan, WaterParameters,
};
use romd::study::{energy_conservation_metrics, force_difference_study, random_subsample, trajectory_compare};
use romd::{par, Error, Result};

use crate::{selftest, Command, GlobalArgs};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

struct Ctx {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
}

impl Ctx {
    fn load(global: &GlobalArgs) -> Result<Self> {
        let cfg = match &global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let out = global.out.clone().unwrap_or_else(|| cfg.paths.output_dir.clone());
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            out,
        })
    }

    /// Relative paths are taken inside the output directory.
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    fn meta(&self, extra: &[(&str, String)]) -> Vec<(String, String)> {
        let mut m = vec![
            ("romd_version".to_string(), VERSION.to_string()),
            ("config_hash".to_string(), self.hash.clone()),
        ];
        m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        m
    }

    fn write_json(&self, name: &str, mut value: Value) -> Result<PathBuf> {
        if let Value::Object(map) = &mut value {
            map.insert("romd_version".into(), VERSION.into());
            map.insert("config_hash".into(), self.hash.clone().into());
        }
        let path = self.out.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(&value).map_err(json_err)?)?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        std::fs::write(&path, text)?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn ops(&self) -> Result<SpectralOps> {
        Ok(SpectralOps::new(self.cfg.grid()?))
    }

    /// Basis file plus the provenance recorded in its sidecar.
    fn model(&self, grid: &Grid3) -> Result<ReducedModel> {
        let path = self.resolve(&self.cfg.paths.basis);
        let details = sidecar_details(&path, &self.hash);
        let n_occ = match details.get("n_occ").and_then(Value::as_u64) {
            Some(n) => n as usize,
            None => self.cfg.configuration()?.n_occupied()?,
        };
        let provenance = BasisProvenance {
            plan: details
                .get("plan")
                .and_then(|p| serde_json::from_value(p.clone()).ok()),
            delta_ef: details
                .get("delta_ef")
                .and_then(Value::as_f64)
                .unwrap_or(self.cfg.rom.delta_ef),
        };
        let basis = read_basis(&path, Some(grid), n_occ, provenance)?;
        info!("loaded basis {} (rank {})", path.display(), basis.rank());
        Ok(ReducedModel::new(basis))
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::InvalidInput(e.to_string())
}

/// Sidecar details, or `null` when the sidecar is missing or unreadable.
fn sidecar_details(path: &Path, hash: &str) -> Value {
    match read_sidecar(path) {
        Ok(s) => {
            if s.config_hash != hash {
                warn!(
                    "{} was produced with configuration {}, current is {}",
                    path.display(),
                    s.config_hash,
                    hash
                );
            }
            s.details
        }
        Err(_) => {
            warn!("no readable sidecar at {}", sidecar_path(path).display());
            Value::Null
        }
    }
}

fn parameters_from(details: &Value) -> Option<Vec<WaterParameters>> {
    details
        .get("parameters")
        .and_then(|p| serde_json::from_value::<Vec<[f64; 3]>>(p.clone()).ok())
        .map(|v| v.iter().map(|p| WaterParameters::new(p[0], p[1], p[2])).collect())
}

fn vec3(v: &Vector3<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn forces_json(forces: &[Vector3<f64>]) -> Value {
    forces.iter().map(vec3).collect::<Vec<_>>().into()
}

pub fn run(global: &GlobalArgs, command: &Command) -> Result<u8> {
    if let Command::Selftest = command {
        return selftest::run();
    }
    let ctx = Ctx::load(global)?;
    info!(
        "config {} on {} thread(s)",
        &ctx.hash[..12],
        par::current_threads()
    );
    match command {
        Command::FomScf => fom_scf(&ctx),
        Command::FomMd => fom_md(&ctx),
        Command::RomSample => rom_sample(&ctx),
        Command::RomBasis { delta_ef } => rom_basis(&ctx, *delta_ef),
        Command::RomMd => rom_md(&ctx),
        Command::CompareForces { test_plan, subsample } => compare_forces(&ctx, *test_plan, *subsample),
        Command::CompareTraj { a, b } => compare_traj(&ctx, a, b),
        Command::ForceFromWavefunctions { input, reference } => {
            force_from_wavefunctions(&ctx, input, reference.as_deref())
        }
        Command::Selftest => unreachable!(),
    }?;
    Ok(0)
}

fn fom_scf(ctx: &Ctx) -> Result<()> {
    let ops = ctx.ops()?;
    let cfg = ctx.cfg.configuration()?;
    let guess = WavefunctionSet::random(*ops.grid(), cfg.n_occupied()?, ctx.cfg.solver.seed);
    let (out, forces) = ground_state(&ops, &cfg, &guess, &ctx.cfg.scf_params())?;
    let geometry = bond_observables(&cfg.positions())
        .ok()
        .map(|(l1, l2, theta)| json!({ "l1": l1, "l2": l2, "theta_deg": theta }));
    let report = json!({
        "energy": out.energy,
        "iterations": out.iterations,
        "residual": out.residual,
        "forces": forces_json(&forces),
        "geometry": geometry,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(json_err)?);
    ctx.write_json("fom_scf.json", report)?;
    Ok(())
}

fn write_md(ctx: &Ctx, name: &str, traj: &Trajectory) -> Result<()> {
    let md = ctx.cfg.md_params();
    let meta = ctx.meta(&[("dt", md.dt.to_string()), ("steps", md.steps.to_string())]);
    let path = ctx.out.join(format!("{name}.csv"));
    write_trajectory(&path, traj, &meta)?;
    info!("wrote {}", path.display());
    let metrics = energy_conservation_metrics(traj);
    println!(
        "{name}: {} steps, max |E(t) - E(0)| = {:.3e} Ha, drift slope {:.3e} Ha/step",
        traj.len(),
        metrics.max_deviation,
        metrics.drift_slope
    );
    ctx.write_json(&format!("{name}_energy.json"), json!({ "energy": metrics }))?;
    Ok(())
}

fn fom_md(ctx: &Ctx) -> Result<()> {
    let ops = ctx.ops()?;
    let cfg = ctx.cfg.configuration()?;
    let mut provider = FomForceProvider::new(&ops, &cfg, ctx.cfg.scf_params(), ctx.cfg.solver.seed)?;
    let traj = bomd_run(&cfg, &ctx.cfg.md_params(), &mut provider)?;
    write_md(ctx, "fom_md", &traj)
}

fn rom_sample(ctx: &Ctx) -> Result<()> {
    let ops = ctx.ops()?;
    let plan = ctx.cfg.plan()?;
    let samples = enumerate_training_set(&plan)?;
    info!("solving {} training configurations", samples.len());
    let set = collect_snapshots(&ops, &samples, &ctx.cfg.snapshot_settings()?)?;
    let path = ctx.resolve(&ctx.cfg.paths.snapshots);
    write_snapshots(&path, &set.grid, &set.y)?;
    let params: Vec<[f64; 3]> = samples.iter().map(|p| [p.s1, p.s2, p.s_theta]).collect();
    let details = json!({ "n_occ": set.n_occ, "plan": plan, "parameters": params });
    write_sidecar(&path, &Sidecar::new("snapshots", &ctx.hash, details))?;
    println!(
        "wrote {} snapshots ({} configurations) to {}",
        set.n_snapshots(),
        samples.len(),
        path.display()
    );
    Ok(())
}

fn rom_basis(ctx: &Ctx, delta_override: Option<f64>) -> Result<()> {
    let grid = ctx.cfg.grid()?;
    let snap_path = ctx.resolve(&ctx.cfg.paths.snapshots);
    let (grid, y) = read_snapshots(&snap_path, Some(&grid))?;
    let details = sidecar_details(&snap_path, &ctx.hash);
    let n_occ = match details.get("n_occ").and_then(Value::as_u64) {
        Some(n) => n as usize,
        None => ctx.cfg.configuration()?.n_occupied()?,
    };
    let plan: Option<SamplingPlan> = details
        .get("plan")
        .and_then(|p| serde_json::from_value(p.clone()).ok());
    let delta_ef = delta_override.unwrap_or(ctx.cfg.rom.delta_ef);
    let basis = build_reduced_basis_from(&grid, &y, n_occ, delta_ef, plan)?;
    let path = ctx.resolve(&ctx.cfg.paths.basis);
    write_basis(&path, &basis)?;
    let details = json!({
        "n_occ": n_occ,
        "plan": plan,
        "delta_ef": delta_ef,
        "rank": basis.rank(),
        "snapshots": y.ncols(),
    });
    write_sidecar(&path, &Sidecar::new("basis", &ctx.hash, details))?;
    println!(
        "reduced basis rank r = {} of {} snapshots (delta_ef = {delta_ef:e}), written to {}",
        basis.rank(),
        y.ncols(),
        path.display()
    );
    Ok(())
}

fn rom_md(ctx: &Ctx) -> Result<()> {
    let ops = ctx.ops()?;
    let model = ctx.model(ops.grid())?;
    let cfg = ctx.cfg.configuration()?;
    let mut provider = RomForceProvider::new(&ops, &model, &cfg, ctx.cfg.dm_params());
    let traj = bomd_run(&cfg, &ctx.cfg.md_params(), &mut provider)?;
    write_md(ctx, "rom_md", &traj)
}

fn compare_forces(ctx: &Ctx, test_plan: (usize, usize), subsample: Option<usize>) -> Result<()> {
    let ops = ctx.ops()?;
    let model = ctx.model(ops.grid())?;
    let plan = model.basis.provenance.plan.unwrap_or(ctx.cfg.plan()?);
    let training = enumerate_training_set(&plan)?;
    let test_plan = SamplingPlan::new(test_plan.0, test_plan.1)?;
    let mut tests = enumerate_training_set(&test_plan)?;
    if let Some(n) = subsample {
        tests = random_subsample(&tests, n, ctx.cfg.solver.seed);
    }
    info!("comparing forces at {} test configurations", tests.len());
    let report = force_difference_study(
        &ops,
        &model,
        &training,
        &tests,
        &ctx.cfg.snapshot_settings()?,
        &ctx.cfg.dm_params(),
    )?;
    let delta_ef = model.basis.provenance.delta_ef;
    let stem = format!("force_study_kl{}_kt{}_def{delta_ef:e}", plan.k_l, plan.k_theta);
    let meta = ctx.meta(&[
        ("train_plan", format!("{},{}", plan.k_l, plan.k_theta)),
        ("test_plan", format!("{},{}", test_plan.k_l, test_plan.k_theta)),
        ("delta_ef", format!("{delta_ef:e}")),
        ("rank", model.rank().to_string()),
    ]);
    ctx.write_text(&format!("{stem}.csv"), &report.to_csv(&meta)?)?;
    let summary = report.summary_json(&meta)?;
    ctx.write_text(&format!("{stem}.json"), &summary)?;
    println!("{summary}");
    Ok(())
}

fn compare_traj(ctx: &Ctx, a: &Path, b: &Path) -> Result<()> {
    let ta = read_trajectory(a)?.into_trajectory();
    let tb = read_trajectory(b)?.into_trajectory();
    let cmp = trajectory_compare(&ta, &tb)?;
    let meta = ctx.meta(&[
        ("a", a.display().to_string()),
        ("b", b.display().to_string()),
    ]);
    ctx.write_text("traj_compare.csv", &cmp.to_csv(&meta)?)?;
    let summary = json!({
        "l1": cmp.l1,
        "l2": cmp.l2,
        "theta_deg": cmp.theta,
        "e_total": cmp.e_total,
        "energy_a": energy_conservation_metrics(&ta),
        "energy_b": energy_conservation_metrics(&tb),
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(json_err)?);
    ctx.write_json("traj_compare.json", summary)?;
    Ok(())
}

/// Hellmann-Feynman forces of every configuration block in a snapshot file,
/// with the density built from the Gram inverse.
fn forces_per_block(
    ops: &SpectralOps,
    y: &romd::grid::FieldMatrix,
    params: &[WaterParameters],
    n_occ: usize,
    ctx: &Ctx,
) -> Result<Vec<Vec<Vector3<f64>>>> {
    if y.ncols() != n_occ * params.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns for {} configurations of {} orbitals",
            y.ncols(),
            params.len(),
            n_occ
        )));
    }
    let settings = ctx.cfg.snapshot_settings()?;
    let grid = *ops.grid();
    par::try_map_range(params.len(), |i| {
        let block = y.columns(i * n_occ, n_occ).into_owned();
        let wf = WavefunctionSet::new(grid, block, n_occ)?;
        let rho = electron_density(&wf)?;
        let cfg = config_with_species(&params[i], settings.oxygen.clone(), settings.hydrogen.clone());
        let ions = IonicBackground::new(&grid, &cfg)?;
        let terms = density_terms(ops, &ions, &rho)?;
        Ok(forces_from_density(&grid, &cfg, &rho, &terms.electrostatic))
    })
}

fn force_from_wavefunctions(ctx: &Ctx, input: &Path, reference: Option<&Path>) -> Result<()> {
    let ops = ctx.ops()?;
    let (_, y) = read_snapshots(input, Some(ops.grid()))?;
    let ref_path = reference
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.resolve(&ctx.cfg.paths.snapshots));
    let input_details = sidecar_details(input, &ctx.hash);
    let ref_details = if ref_path.exists() {
        sidecar_details(&ref_path, &ctx.hash)
    } else {
        Value::Null
    };
    let params = match parameters_from(&input_details).or_else(|| parameters_from(&ref_details)) {
        Some(p) => p,
        None => enumerate_training_set(&ctx.cfg.plan()?)?,
    };
    let n_occ = ctx.cfg.configuration()?.n_occupied()?;
    let forces = forces_per_block(&ops, &y, &params, n_occ, ctx)?;
    let reference_forces = if ref_path.exists() {
        let (_, y_ref) = read_snapshots(&ref_path, Some(ops.grid()))?;
        Some(forces_per_block(&ops, &y_ref, &params, n_occ, ctx)?)
    } else {
        warn!("no reference snapshots at {}; reporting forces only", ref_path.display());
        None
    };

    let mut csv = String::new();
    for (k, v) in ctx.meta(&[("input", input.display().to_string())]) {
        csv.push_str(&format!("# {k}={v}\n"));
    }
    let mut header = vec!["s1", "s2", "s_theta"].into_iter().map(String::from).collect::<Vec<_>>();
    for a in 0..3 {
        for ax in ["x", "y", "z"] {
            header.push(format!("f{a}_{ax}"));
        }
    }
    header.extend(["df_h1".to_string(), "df_h2".to_string()]);
    csv.push_str(&header.join(","));
    csv.push('\n');
    let mut max_df: f64 = 0.0;
    for (i, (nu, f)) in params.iter().zip(&forces).enumerate() {
        let mut row = vec![format!("{:e}", nu.s1), format!("{:e}", nu.s2), format!("{:e}", nu.s_theta)];
        row.extend(f.iter().flat_map(|v| vec3(v)).map(|x| format!("{x:e}")));
        match &reference_forces {
            Some(r) => {
                let d1 = (f[1] - r[i][1]).norm();
                let d2 = (f[2] - r[i][2]).norm();
                max_df = max_df.max(d1).max(d2);
                row.extend([format!("{d1:e}"), format!("{d2:e}")]);
            }
            None => row.extend(["".to_string(), "".to_string()]),
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    ctx.write_text("forces_from_wavefunctions.csv", &csv)?;
    match reference_forces {
        Some(_) => println!(
            "{} configurations; max hydrogen force difference {max_df:.3e} Ha/Bohr",
            params.len()
        ),
        None => println!("{} configurations", params.len()),
    }
    Ok(())
}
