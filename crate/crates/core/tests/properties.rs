use proptest::prelude::*;
use rand::Rng;

use qcorr::classical::{
    gram_extract, synth_from_psd, synthesized_purification, DistMatrix, PsdFactorization,
};
use qcorr::general::{factor_from_purification, reconstruct_from_factors, Purification};
use qcorr::linalg::{fidelity, svd, CMatrix, DensityMatrix};
use qcorr::pure::{ceil_log2, rank_eps, schmidt_decompose, srank_eps, vec_inv, PureState};
use qcorr::random::{random_matrix, random_psd, random_unit_vector, rng};

fn pure(seed: u64, da: usize, db: usize) -> PureState {
    let mut g = rng(seed);
    PureState::new(da, db, random_unit_vector(&mut g, da * db)).unwrap()
}

fn mixed(seed: u64, d: usize, rank: usize) -> CMatrix {
    let mut g = rng(seed);
    let x = random_matrix(&mut g, d, rank);
    let m = x.matmul(&x.adjoint());
    m.scale(1.0 / m.trace().re).hermitian_part()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7) {
        let a = random_matrix(&mut rng(seed), rows, cols);
        let dec = svd(&a).unwrap();
        prop_assert!(dec.reconstruct().max_abs_diff(&a) < 1e-10);
        prop_assert!(dec.singulars.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn schmidt_form_reassembles(seed in any::<u64>(), da in 1usize..7, db in 1usize..7) {
        let psi = pure(seed, da, db);
        let form = schmidt_decompose(&psi);
        let total: f64 = form.coeffs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        let back = form.reassemble();
        for (x, y) in back.iter().zip(psi.amps()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn approximate_ranks_agree(seed in any::<u64>(), da in 2usize..7, db in 2usize..7, eps in 0.0f64..0.6) {
        let psi = pure(seed, da, db);
        let s = srank_eps(&psi, eps).unwrap();
        let r = rank_eps(&vec_inv(&psi), 2.0 * eps - eps * eps).unwrap();
        prop_assert_eq!(ceil_log2(s), ceil_log2(r));
        prop_assert!(srank_eps(&psi, eps + 0.05).unwrap() <= s);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(seed in any::<u64>(), d in 2usize..5, r1 in 1usize..5, r2 in 1usize..5) {
        let a = DensityMatrix::new(mixed(seed, d, r1), d, 1).unwrap();
        let b = DensityMatrix::new(mixed(seed.wrapping_add(1), d, r2), d, 1).unwrap();
        let f_ab = fidelity(&a, &b).unwrap();
        let f_ba = fidelity(&b, &a).unwrap();
        prop_assert!((f_ab - f_ba).abs() < 1e-8);
        prop_assert!((-1e-12..=1.0 + 1e-9).contains(&f_ab));
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn general_round_trip(seed in any::<u64>(), da in 1usize..5, ka in 1usize..4, db in 1usize..5, kb in 1usize..4) {
        let amps = random_unit_vector(&mut rng(seed), da * ka * db * kb);
        let pur = Purification::new(amps, da, ka, db, kb).unwrap();
        let f = factor_from_purification(&pur).unwrap();
        let rho = reconstruct_from_factors(&f).unwrap();
        let direct = pur.reduced_state().unwrap();
        prop_assert!(rho.matrix().max_abs_diff(direct.matrix()) < 1e-8);
        prop_assert_eq!(f.r, pur.schmidt_rank());
    }

    #[test]
    fn extraction_paths_agree_on_classical_inputs(seed in any::<u64>(), n in 1usize..4, m in 1usize..4, r in 1usize..4) {
        let mut g = rng(seed);
        let cs: Vec<CMatrix> = (0..n).map(|_| { let k = g.random_range(1..=r); random_psd(&mut g, r, k) }).collect();
        let ds: Vec<CMatrix> = (0..m).map(|_| { let k = g.random_range(1..=r); random_psd(&mut g, r, k) }).collect();
        let mut probs = Vec::new();
        for c in &cs {
            for d in &ds {
                probs.push(c.matmul(d).trace().re);
            }
        }
        let total: f64 = probs.iter().sum();
        let cs: Vec<CMatrix> = cs.iter().map(|c| c.scale(1.0 / total).hermitian_part()).collect();
        let p = DistMatrix::from_rows(n, m, &probs, true).unwrap();
        let f = PsdFactorization { r, cs, ds, residual: 0.0 };

        let pur = synthesized_purification(&synth_from_psd(&p, &f).unwrap()).unwrap();
        prop_assert!(pur.schmidt_rank() <= r);
        let gram = gram_extract(&pur).unwrap().products();
        let rho = reconstruct_from_factors(&factor_from_purification(&pur).unwrap()).unwrap();
        for (k, g) in gram.iter().enumerate() {
            prop_assert!((rho.diagonal()[k] - g).abs() < 1e-8);
            prop_assert!((p.entries()[k] - g).abs() < 1e-8);
        }
    }
}
