use proptest::prelude::*;
use xmreid_core::linalg::{cholesky, eigh, gen_eigh, Matrix};
use xmreid_core::rng::{CounterRng, RngExt};

fn random_symmetric(n: usize, rng: &mut CounterRng) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.normal()).symmetric_part()
}

fn random_spd(n: usize, rng: &mut CounterRng) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.normal());
    let mut b = g.t_matmul(&g);
    b.add_diag(0.1 * n as f64);
    b.symmetric_part()
}

fn check_eigh(a: &Matrix) {
    let r = eigh(a).unwrap();
    let n = a.rows();
    let lam = Matrix::diag(&r.values);
    let resid = a.matmul(&r.vectors).sub(&r.vectors.matmul(&lam)).frobenius();
    assert!(resid <= 1e-10 * a.frobenius().max(f64::MIN_POSITIVE), "residual {resid}");
    let orth = r.vectors.t_matmul(&r.vectors).sub(&Matrix::identity(n)).frobenius();
    assert!(orth <= 1e-10, "orthogonality {orth}");
    assert!(r.values.windows(2).all(|w| w[0] >= w[1]));
    let sum: f64 = r.values.iter().sum();
    assert!((sum - a.trace()).abs() <= 1e-10 * a.frobenius().max(1.0));
}

fn check_gen_eigh(a: &Matrix, b: &Matrix) {
    let r = gen_eigh(a, b).unwrap();
    let n = a.rows();
    let lam = Matrix::diag(&r.values);
    let resid = a.matmul(&r.vectors).sub(&b.matmul(&r.vectors).matmul(&lam)).frobenius();
    assert!(resid <= 1e-9 * a.frobenius(), "residual {resid}");
    let orth = r.vectors.t_matmul(&b.matmul(&r.vectors)).sub(&Matrix::identity(n)).frobenius();
    assert!(orth <= 1e-9, "B-orthogonality {orth}");
    assert!(r.values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn hundred_random_symmetric_matrices() {
    let mut rng = CounterRng::new(2024);
    for i in 0..100 {
        let n = 1 + i % 12;
        check_eigh(&random_symmetric(n, &mut rng));
    }
}

#[test]
fn fifty_random_definite_pairs() {
    let mut rng = CounterRng::new(77);
    for i in 0..50 {
        let n = 1 + i % 12;
        let a = random_symmetric(n, &mut rng);
        let b = random_spd(n, &mut rng);
        check_gen_eigh(&a, &b);
    }
}

#[test]
fn repeated_eigenvalues_keep_an_orthonormal_basis() {
    check_eigh(&Matrix::identity(6));
    let mut a = Matrix::diag(&[2.0, 2.0, 2.0, -1.0]);
    a.add_diag(0.0);
    check_eigh(&a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigh_invariants(seed in any::<u64>(), n in 1usize..=12, scale in 1e-3f64..1e3) {
        let mut rng = CounterRng::new(seed);
        let a = random_symmetric(n, &mut rng).scale(scale);
        check_eigh(&a);
    }

    #[test]
    fn gen_eigh_invariants(seed in any::<u64>(), n in 1usize..=10) {
        let mut rng = CounterRng::new(seed);
        let a = random_symmetric(n, &mut rng);
        let b = random_spd(n, &mut rng);
        check_gen_eigh(&a, &b);
    }

    #[test]
    fn cholesky_recovers_its_factor(seed in any::<u64>(), n in 1usize..=12) {
        let mut rng = CounterRng::new(seed);
        let l = Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            core::cmp::Ordering::Greater => rng.normal(),
            core::cmp::Ordering::Equal => 0.5 + rng.unit_f64(),
            core::cmp::Ordering::Less => 0.0,
        });
        let a = l.matmul(&l.transpose());
        let back = cholesky(&a).unwrap();
        prop_assert!(back.sub(&l).frobenius() <= 1e-10 * l.frobenius().max(1.0) * n as f64);
    }

    #[test]
    fn small_asymmetry_is_absorbed(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = CounterRng::new(seed);
        let a = random_symmetric(n, &mut rng);
        let nudged = Matrix::from_fn(n, n, |i, j| a[(i, j)] + if i < j { 1e-13 } else { 0.0 });
        let r = eigh(&nudged).unwrap();
        let s = eigh(&a).unwrap();
        for (x, y) in r.values.iter().zip(&s.values) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}
