use nalgebra::{DMatrix, Rotation3, Unit, Vector3};
use proptest::prelude::*;

use romd::fom::{density_from_matrix, electron_density, gram_inverse, WavefunctionSet};
use romd::grid::{inner_product, laplacian_apply, Grid3, ScalarField, SpectralOps};
use romd::io::{decode_snapshots, encode_snapshots, RunConfig};
use romd::rom::{
    canonical_frame_transform, canonical_positions, entropy, enumerate_training_set,
    fermi_occupations, truncation_rank, SamplingPlan, WaterParameters,
};
use romd::study::{classify_reproductive, random_subsample, Histogram};

fn grid8() -> Grid3 {
    Grid3::new([8, 8, 10], [4.0, 4.5, 5.0]).unwrap()
}

fn field(values: Vec<f64>) -> ScalarField {
    ScalarField::from_values(grid8(), values).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, grid8().len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_is_symmetric_and_nonpositive(a in values(), b in values()) {
        let (f, g) = (field(a), field(b));
        let lhs = inner_product(&laplacian_apply(&f), &g);
        let rhs = inner_product(&f, &laplacian_apply(&g));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        prop_assert!(inner_product(&laplacian_apply(&f), &f) <= 1e-10);
    }

    #[test]
    fn poisson_inverts_laplacian_on_neutral_sources(a in values()) {
        let src = field(a);
        let src = src.add(&ScalarField::constant(src.grid, -src.mean()));
        let v = SpectralOps::new(grid8()).poisson(&src).unwrap();
        prop_assert!(v.mean().abs() < 1e-12);
        let lap = laplacian_apply(&v);
        for (l, s) in lap.values.iter().zip(&src.values) {
            prop_assert!((l + 4.0 * std::f64::consts::PI * s).abs() < 1e-9);
        }
    }

    #[test]
    fn density_is_invariant_under_orbital_mixing(
        phi in prop::collection::vec(-1.0..1.0f64, grid8().len() * 3),
        mix in prop::collection::vec(-1.0..1.0f64, 9),
    ) {
        let g = grid8();
        let phi = DMatrix::from_vec(g.len(), 3, phi);
        let a = DMatrix::from_vec(3, 3, mix) + DMatrix::identity(3, 3) * 3.0;
        let rho = electron_density(&WavefunctionSet::new(g, phi.clone(), 3).unwrap()).unwrap();
        let mixed = electron_density(&WavefunctionSet::new(g, &phi * a, 3).unwrap()).unwrap();
        let scale = rho.max_abs();
        for (x, y) in rho.values.iter().zip(&mixed.values) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
        // twice the number of orbitals in electrons
        prop_assert!((rho.integrate() - 6.0).abs() < 1e-9);
        let s_inv = gram_inverse(&WavefunctionSet::new(g, phi.clone(), 3).unwrap().gram()).unwrap();
        let direct = density_from_matrix(&g, &phi, &s_inv);
        prop_assert_eq!(direct.values, rho.values);
    }

    #[test]
    fn fermi_occupations_fill_exactly(
        eigs in prop::collection::vec(-2.0..2.0f64, 4..40),
        kt in 1e-4..0.1f64,
        frac in 0.05..0.95f64,
    ) {
        let n_occ = ((eigs.len() as f64 * frac) as usize).max(1);
        let (f, mu) = fermi_occupations(&eigs, kt, n_occ).unwrap();
        let sum: f64 = f.iter().sum();
        prop_assert!((sum - n_occ as f64).abs() <= 1e-12 * (1.0 + n_occ as f64));
        prop_assert!(f.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for (i, j) in (0..eigs.len()).flat_map(|i| (0..eigs.len()).map(move |j| (i, j))) {
            if eigs[i] < eigs[j] {
                prop_assert!(f[i] >= f[j]);
            }
        }
        prop_assert!(mu.is_finite());
        prop_assert!(entropy(&f) >= 0.0);
    }

    #[test]
    fn truncation_rank_is_monotone_and_bounded(
        mut sv in prop::collection::vec(0.0..10.0f64, 1..30),
        n_occ in 1usize..4,
        d1 in 0.0..0.5f64,
        d2 in 0.0..0.5f64,
    ) {
        sv.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sv[0] > 0.0);
        let k = sv.len();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let r_lo = truncation_rank(&sv, lo, n_occ, k);
        let r_hi = truncation_rank(&sv, hi, n_occ, k);
        prop_assert!(r_lo >= r_hi);
        prop_assert!(r_hi >= n_occ.min(k).max(n_occ));
        prop_assert!(r_lo <= k.max(n_occ));
        let total: f64 = sv.iter().map(|s| s * s).sum();
        if r_hi > n_occ {
            let tail: f64 = sv[r_hi..].iter().map(|s| s * s).sum();
            prop_assert!(tail <= hi * total * (1.0 + 1e-12));
        }
    }

    #[test]
    fn canonical_frame_removes_rigid_motion(
        s1 in 0.95..1.05f64,
        s2 in 0.95..1.05f64,
        st in -5.0..5.0f64,
        axis in prop::array::uniform3(-1.0..1.0f64),
        angle in -3.0..3.0f64,
        shift in prop::array::uniform3(-2.0..2.0f64),
        swap in any::<bool>(),
    ) {
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 0.1);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        let base = canonical_positions(&WaterParameters::new(s1, s2, st));
        let t = Vector3::from(shift);
        let mut lab: Vec<Vector3<f64>> = base.iter().map(|p| rot * p + t).collect();
        if swap {
            lab.swap(1, 2);
        }
        let f0 = canonical_frame_transform(&base).unwrap();
        let f1 = canonical_frame_transform(&lab).unwrap();
        let c0 = f0.to_canonical(&base);
        let c1 = f1.to_canonical(&lab);
        for (a, b) in c0.iter().zip(&c1) {
            prop_assert!((a - b).norm() < 1e-9);
        }
        // canonical positions map back to lab displacements from O
        let back = f1.vectors_to_lab(&c1);
        for (a, r) in back.iter().zip(&lab) {
            prop_assert!((a - (r - lab[0])).norm() < 1e-9);
        }
    }

    #[test]
    fn water_parameters_round_trip(s1 in 0.8..1.2f64, s2 in 0.8..1.2f64, st in -20.0..20.0f64) {
        let nu = WaterParameters::new(s1, s2, st);
        let (l1, l2) = nu.bond_lengths();
        let back = WaterParameters::from_observables(l1, l2, nu.angle_deg());
        prop_assert!(back.matches(&nu));
    }

    #[test]
    fn training_set_size_and_self_classification(k_l in 1usize..6, k_theta in 1usize..6) {
        let plan = SamplingPlan::new(k_l, k_theta).unwrap();
        let set = enumerate_training_set(&plan).unwrap();
        prop_assert_eq!(set.len(), (k_l + 1) * (k_l + 2) / 2 * (k_theta + 1));
        prop_assert_eq!(set.len(), plan.n_configurations());
        prop_assert!(set.iter().all(|p| p.in_domain()));
        prop_assert!(classify_reproductive(&set, &set).into_iter().all(|f| f));
    }

    #[test]
    fn subsample_is_sorted_subset(n_items in 0usize..200, n in 0usize..250, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n_items).collect();
        let sub = random_subsample(&items, n, seed);
        prop_assert_eq!(sub.len(), n.min(n_items));
        prop_assert!(sub.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(sub, random_subsample(&items, n, seed));
    }

    #[test]
    fn histogram_counts_every_value(v in prop::collection::vec(0.0..1.0f64, 0..100), bins in 1usize..30) {
        let h = Histogram::uniform(&v, bins);
        prop_assert_eq!(h.counts.iter().sum::<usize>(), v.len());
        prop_assert_eq!(h.edges.len(), bins + 1);
    }

    #[test]
    fn snapshot_encoding_round_trips(cols in 1usize..4, seed in any::<u64>()) {
        let g = grid8();
        let y = DMatrix::from_fn(g.len(), cols, |i, j| ((seed as f64) * 1e-19 + (i * 31 + j * 17) as f64).sin());
        let (g2, back) = decode_snapshots(&encode_snapshots(&g, &y).unwrap(), Some(&g)).unwrap();
        prop_assert_eq!(g2, g);
        prop_assert!(y.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn config_round_trip_keeps_hash(tol in 1e-12..1e-4f64, dt in 1.0..80.0f64, n in 32usize..64) {
        let mut cfg = RunConfig::default();
        cfg.solver.tol = tol;
        cfg.md.dt = dt;
        cfg.grid.n = n;
        let back = RunConfig::from_json(&cfg.to_pretty_json()).unwrap();
        prop_assert_eq!(back.canonical_json(), cfg.canonical_json());
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
