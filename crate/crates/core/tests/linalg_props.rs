use greedylore::compressors::{compress, random_lowrank_projector};
use greedylore::projector::{project, reconstruct};
use greedylore::svd::svd_full;
use greedylore::{DenseMatrix, Projector, RngStream, StreamKey};
use proptest::prelude::*;

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(m, n)| {
        proptest::collection::vec(-10.0f64..10.0, m * n)
            .prop_map(move |data| DenseMatrix::from_vec(m, n, data))
    })
}

fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_contract(g in matrix_strategy(9)) {
        let s = svd_full(&g).unwrap();
        prop_assert!(s.u.orthonormality_defect() < 1e-10);
        prop_assert!(s.v.orthonormality_defect() < 1e-10);
        prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.sigma.iter().all(|x| *x >= 0.0));
        if g.frobenius_norm() > 0.0 {
            prop_assert!(rel_diff(&s.reconstruct(), &g) < 1e-8);
        }
        let again = svd_full(&g).unwrap();
        prop_assert!(again.u.bit_eq(&s.u) && again.v.bit_eq(&s.v));
    }

    #[test]
    fn pythagoras_and_idempotence(g in matrix_strategy(8), seed in any::<u64>(), r_frac in 0.0f64..1.0) {
        let m = g.rows();
        let r = 1 + ((m - 1) as f64 * r_frac) as usize;
        let mut rng = RngStream::derive(seed, StreamKey::Trial { id: 0 });
        let p = random_lowrank_projector(m, r, &mut rng).unwrap();
        let total = g.frobenius_norm_sq();
        let kept = project(&p, &g).unwrap().frobenius_norm_sq();
        let once = reconstruct(&p, &project(&p, &g).unwrap()).unwrap();
        let resid = g.sub(&once).unwrap().frobenius_norm_sq();
        prop_assert!((kept + resid - total).abs() <= 1e-8 * total.max(1e-12));
        let twice = reconstruct(&p, &project(&p, &once).unwrap()).unwrap();
        prop_assert!(twice.sub(&once).unwrap().max_abs() <= 1e-10 * (1.0 + g.max_abs()));
    }
}

#[test]
fn rank_deficient_svd_still_orthogonal() {
    // rank one, repeated columns, plus a zero row
    let g = DenseMatrix::from_fn(6, 4, |i, _| if i == 5 { 0.0 } else { i as f64 + 1.0 });
    let s = svd_full(&g).unwrap();
    assert!(s.u.orthonormality_defect() < 1e-10);
    assert!(s.v.orthonormality_defect() < 1e-10);
    assert!(rel_diff(&s.reconstruct(), &g) < 1e-8);
    assert!(s.sigma[1..].iter().all(|x| *x < 1e-10));
}

#[test]
fn random_projector_second_moment_is_isotropic() {
    // Rotational invariance: E[P Pᵀ] = (r/m) I.
    let (m, r, draws) = (6, 2, 100_000);
    let mut acc = DenseMatrix::zeros(m, m);
    let mut rng = RngStream::derive(7, StreamKey::Trial { id: 3 });
    for _ in 0..draws {
        let p = random_lowrank_projector(m, r, &mut rng).unwrap();
        let b = p.basis();
        acc.add_assign(&b.matmul(&b.transpose()).unwrap()).unwrap();
    }
    acc.scale_in_place(1.0 / draws as f64);
    let target = DenseMatrix::identity(m).scale(r as f64 / m as f64);
    assert!(acc.sub(&target).unwrap().max_abs() < 0.01);
}

#[test]
fn full_rank_random_projector_is_lossless() {
    let mut rng = RngStream::derive(1, StreamKey::Trial { id: 0 });
    let p = random_lowrank_projector(5, 5, &mut rng).unwrap();
    let g = RngStream::derive(2, StreamKey::Trial { id: 0 }).normal_matrix(5, 3);
    assert!(compress(&p, &g).unwrap().bit_eq(&g));
    let q = Projector::new(p.basis().clone());
    assert!(rel_diff(&reconstruct(&q, &project(&q, &g).unwrap()).unwrap(), &g) < 1e-12);
}
