//! Invariant checks that run in seconds on small grids.

use nalgebra::{DMatrix, Vector3};

use romd::fom::{abpg_solve, hellmann_feynman_forces, ScfParams, Species, WavefunctionSet};
use romd::grid::{laplacian_apply, Grid3, ScalarField, SpectralOps};
use romd::io::{decode_basis, decode_snapshots, encode_basis, encode_snapshots, RunConfig};
use romd::rom::{build_reduced_basis_from, config_with_species, rom_forces, ReducedModel, WaterParameters};
use romd::{par, Result};

type Check = fn() -> Result<(bool, String)>;

fn laplacian_plane_wave() -> Result<(bool, String)> {
    let g = Grid3::cubic(16, 8.0)?;
    let k = 2.0 * std::f64::consts::PI / 8.0;
    let f = ScalarField::from_fn(g, |r| (k * r.x).cos());
    let lap = laplacian_apply(&f);
    let err = lap
        .values
        .iter()
        .zip(&f.values)
        .map(|(l, v)| (l + k * k * v).abs())
        .fold(0.0, f64::max)
        / (k * k);
    Ok((err < 1e-3, format!("relative error {err:.2e}")))
}

fn poisson_inverts_laplacian() -> Result<(bool, String)> {
    let g = Grid3::cubic(16, 8.0)?;
    let ops = SpectralOps::new(g);
    let src = ScalarField::from_fn(g, |r| (0.8 * r.x).sin() * (0.8 * r.y).cos() + (1.6 * r.z).cos());
    let src = src.add(&ScalarField::constant(g, -src.mean()));
    let v = ops.poisson(&src)?;
    let lap = laplacian_apply(&v);
    let err = lap
        .values
        .iter()
        .zip(&src.values)
        .map(|(l, s)| (l + 4.0 * std::f64::consts::PI * s).abs())
        .fold(0.0, f64::max);
    Ok((err < 1e-9, format!("max residual {err:.2e}")))
}

fn thread_count_invariance() -> Result<(bool, String)> {
    let g = Grid3::cubic(24, 8.0)?;
    let ops = SpectralOps::new(g);
    let src = ScalarField::from_fn(g, |r| (r.x - 4.0) * (-(r - Vector3::repeat(4.0)).norm_squared()).exp());
    let src = src.add(&ScalarField::constant(g, -src.mean()));
    let run = || -> Result<(u64, u64)> {
        let v = ops.poisson(&src)?;
        Ok((v.integrate().to_bits(), romd::grid::inner_product(&v, &src).to_bits()))
    };
    let one = par::with_threads(Some(1), run)?;
    let many = par::with_threads(Some(4), run)?;
    Ok((one == many, "poisson solve and reductions, 1 vs 4 threads".into()))
}

fn scf_and_rom_forces() -> Result<(bool, String)> {
    let g = Grid3::cubic(20, 12.0)?;
    let ops = SpectralOps::new(g);
    let o = Species { rc: 1.3, ..Species::oxygen() };
    let h = Species { rc: 1.3, ..Species::hydrogen() };
    let cfg = config_with_species(&WaterParameters::new(1.0, 1.0, 0.0), o, h);
    let params = ScfParams { tol: 1e-9, max_iter: 2000, ..ScfParams::default() };
    let out = abpg_solve(&ops, &cfg, &WavefunctionSet::random(g, 4, 3), &params)?;
    let fom = hellmann_feynman_forces(&ops, &cfg, &out);
    let basis = build_reduced_basis_from(&g, &out.wavefunctions.phi, 4, 0.0, None)?;
    let model = ReducedModel::new(basis);
    let rom = rom_forces(&model, &ops, &cfg, &DMatrix::identity(4, 4))?;
    let df = fom.iter().zip(&rom).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let mirror = (fom[1].x - fom[2].x).abs() + (fom[1].y + fom[2].y).abs();
    Ok((
        out.residual < 1e-9 && df < 1e-10 && mirror < 1e-6,
        format!(
            "{} iterations, residual {:.2e}; ROM vs FOM {df:.2e}; mirror {mirror:.2e}",
            out.iterations, out.residual
        ),
    ))
}

fn binary_round_trip() -> Result<(bool, String)> {
    let g = Grid3::cubic(8, 4.0)?;
    let y = DMatrix::from_fn(g.len(), 5, |i, j| ((i * 7 + j * 13) as f64).sin());
    let (_, back) = decode_snapshots(&encode_snapshots(&g, &y)?, Some(&g))?;
    let bitwise = y.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
    let basis = build_reduced_basis_from(&g, &y, 2, 0.0, None)?;
    let prov = basis.provenance.clone();
    let read = decode_basis(&encode_basis(&basis)?, Some(&g), 2, prov)?;
    let ortho = read.orthonormality_error();
    Ok((bitwise && ortho <= 1e-10, format!("snapshots bitwise, basis orthonormality {ortho:.2e}")))
}

fn config_round_trip() -> Result<(bool, String)> {
    let cfg = RunConfig::default();
    let back = RunConfig::from_json(&cfg.to_pretty_json())?;
    let bad = RunConfig::from_json(r#"{"gird": {}}"#).is_err();
    Ok((back == cfg && back.hash() == cfg.hash() && bad, format!("hash {}", &cfg.hash()[..12])))
}

/// Prints one line per check; exit status 1 if any fails.
pub fn run() -> Result<u8> {
    let checks: [(&str, Check); 6] = [
        ("laplacian plane wave", laplacian_plane_wave),
        ("poisson inverts laplacian", poisson_inverts_laplacian),
        ("thread-count invariance", thread_count_invariance),
        ("scf and rom forces", scf_and_rom_forces),
        ("binary round trip", binary_round_trip),
        ("config round trip", config_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, e.to_string()),
        };
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(u8::from(failed > 0))
}
