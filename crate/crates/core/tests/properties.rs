//! Property tests over randomized inputs: structural invariants that must
//! hold for any well-formed space, state, or circuit.

use kerrconv_core::fock::{DensityOperator, FockSpace, IsomorphismMap, Mode, StateVector};
use kerrconv_core::linalg::{
    self, dagger, max_diff, random_density, random_state_vector, random_unitary, C64,
};
use kerrconv_core::optics::{polar_decompose, synthesize_mesh, MultiportUnitary};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_is_a_bijection(
        n_modes in 1usize..4,
        cutoff in 0u32..4,
        use_sector in any::<bool>(),
    ) {
        let modes: Vec<Mode> = (0..n_modes).map(Mode::b).collect();
        let cutoffs = vec![cutoff; n_modes];
        let max_total: u32 = cutoffs.iter().sum();
        let sector = if use_sector && max_total > 0 { Some(max_total / 2) } else { None };
        let space = FockSpace::build(modes, cutoffs, sector).unwrap();
        prop_assert!(space.dim() > 0);
        for i in 0..space.dim() {
            prop_assert_eq!(space.index_of(space.occupation(i)), Some(i));
        }
        if sector.is_none() {
            let expect: usize = (0..n_modes).map(|_| cutoff as usize + 1).product();
            prop_assert_eq!(space.dim(), expect);
        }
    }

    #[test]
    fn tensor_norm_multiplies(seed in any::<u64>(), da in 2usize..5, db in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sa = FockSpace::single_mode(Mode::a(), da as u32 - 1);
        let sb = FockSpace::single_mode(Mode::b(0), db as u32 - 1);
        let scale = C64::new(0.3 + (seed % 7) as f64 * 0.2, 0.0);
        let va = random_state_vector(da, &mut rng).mapv(|z| z * scale);
        let vb = random_state_vector(db, &mut rng);
        let a = StateVector::new_unnormalized(sa, va);
        let b = StateVector::new_unnormalized(sb, vb);
        let prod = a.tensor(&b).unwrap();
        prop_assert!((prod.norm() - a.norm() * b.norm()).abs() < 1e-12);
    }

    #[test]
    fn lift_preserves_inner_products(seed in any::<u64>(), n in 1u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = IsomorphismMap::canonical(n);
        let d = n as usize + 1;
        let x = StateVector::new(map.source().clone(), random_state_vector(d, &mut rng)).unwrap();
        let y = StateVector::new(map.source().clone(), random_state_vector(d, &mut rng)).unwrap();
        let direct = x.inner(&y).unwrap();
        let lifted = map.lift_state(&x).unwrap().inner(&map.lift_state(&y).unwrap()).unwrap();
        prop_assert!((direct - lifted).norm() < 1e-13);
        let back = map.lower_state(&map.lift_state(&x).unwrap()).unwrap();
        let fid = back.inner(&x).unwrap().norm();
        prop_assert!((fid - 1.0).abs() < 1e-13);
    }

    #[test]
    fn partial_trace_preserves_trace_and_hermiticity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sa = FockSpace::single_mode(Mode::a(), 2);
        let sb = FockSpace::build(vec![Mode::b(0), Mode::b(1)], vec![1, 1], None).unwrap();
        let ra = DensityOperator::new(sa, random_density(3, &mut rng)).unwrap();
        let rb = DensityOperator::new(sb, random_density(4, &mut rng)).unwrap();
        let joint = ra.tensor(&rb).unwrap();
        for keep in [vec![Mode::a()], vec![Mode::b(0)], vec![Mode::a(), Mode::b(1)]] {
            let marginal = joint.partial_trace(&keep).unwrap();
            prop_assert!((marginal.trace().re - 1.0).abs() < 1e-12);
            prop_assert!(linalg::hermiticity_defect(marginal.matrix()) < 1e-12);
        }
        // tracing either factor of the product returns the exact factor
        let back = joint.partial_trace(&[Mode::a()]).unwrap();
        prop_assert!(max_diff(back.matrix(), ra.matrix()) < 1e-12);
    }

    #[test]
    fn mesh_recomposition_roundtrip(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mat = random_unitary(n, &mut rng);
        let modes: Vec<Mode> = (0..n).map(Mode::b).collect();
        let u = MultiportUnitary::new(modes, mat.clone()).unwrap();
        let mesh = synthesize_mesh(&u).unwrap();
        prop_assert!(mesh.splitters.len() <= n * (n - 1) / 2);
        prop_assert!(max_diff(&mesh.recompose(), &mat) < 1e-10);
    }

    #[test]
    fn polar_factors_reconstruct(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = C64::new(
                    rand::Rng::random_range(&mut rng, -1.0..1.0),
                    rand::Rng::random_range(&mut rng, -1.0..1.0),
                );
            }
        }
        if linalg::max_norm(&a) < 1e-6 {
            return Ok(());
        }
        let f = polar_decompose(&a).unwrap();
        prop_assert!(max_diff(&f.unitary.dot(&f.positive), &a) < 1e-10);
        prop_assert!(linalg::unitarity_defect(&f.unitary) < 1e-10);
        prop_assert!((f.det_phase.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn conversion_probability_input_independent(seed in any::<u64>(), n in 1u32..4) {
        use kerrconv_core::converter::{convert_a_to_b, ConverterConfig};
        use kerrconv_core::fock::QuantumState;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ConverterConfig::canonical(n, 0.37);
        let d = n as usize + 1;
        let p1 = convert_a_to_b(
            &QuantumState::Pure(StateVector::new(cfg.source_space(), random_state_vector(d, &mut rng)).unwrap()),
            &cfg,
        ).unwrap().probability;
        let p2 = convert_a_to_b(
            &QuantumState::Pure(StateVector::new(cfg.source_space(), random_state_vector(d, &mut rng)).unwrap()),
            &cfg,
        ).unwrap().probability;
        prop_assert!((p1 - p2).abs() < 1e-12);
        prop_assert!((p1 - 1.0 / d as f64).abs() < 1e-12);
    }

    #[test]
    fn lifted_operators_keep_spectra(seed in any::<u64>(), n in 1u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = n as usize + 1;
        let map = IsomorphismMap::canonical(n);
        let h = random_density(d, &mut rng).mapv(|z| z * 2.0);
        let lifted = map.lift_operator(&h);
        let (v1, _) = linalg::hermitian_eig(&h).unwrap();
        let (v2, _) = linalg::hermitian_eig(&lifted).unwrap();
        for (a, b) in v1.iter().zip(v2.iter()) {
            prop_assert!((a - b).abs() < 1e-11);
        }
        // and the isometry property of the map itself
        let p = map.matrix();
        prop_assert!(max_diff(&dagger(p).dot(p), &linalg::identity(d)) < 1e-14);
    }
}
