use acp_core::contact::{sample_non_pinching_model, sample_pinching_model, ContactModel, DEFAULT_TOL};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Containment of the row cone in its dual, checked by brute force: every
/// nonnegative combination of rows must have nonnegative inner product with
/// every row. Tries every generator and many random combinations.
fn brute_force_pinching(j: &DMatrix<f64>, tol: f64, rng: &mut ChaCha8Rng) -> bool {
    let rows: Vec<DVector<f64>> = (0..j.nrows()).map(|i| j.row(i).transpose()).collect();
    let violates = |z: &DVector<f64>| rows.iter().any(|r| r.dot(z) < -tol);
    if rows.iter().any(violates) {
        return true;
    }
    for _ in 0..200 {
        let mut z = DVector::zeros(j.ncols());
        for r in &rows {
            if rng.random_bool(0.5) {
                z += r * rng.random_range(0.0..1.0);
            }
        }
        if violates(&z) {
            return true;
        }
    }
    false
}

fn random_unit_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(n, dim);
    for i in 0..n {
        loop {
            let row: DVector<f64> = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            if row.norm() > 1e-3 {
                j.set_row(i, &(&row / row.norm()).transpose());
                break;
            }
        }
    }
    j
}

#[test]
fn pinching_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut pos, mut neg) = (0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=5);
        let dim = rng.random_range(1..=4);
        let j = random_unit_rows(&mut rng, n, dim);
        let model = ContactModel::new(j.clone(), DVector::from_element(n, 1.0)).unwrap();
        let expected = brute_force_pinching(&j, DEFAULT_TOL, &mut rng);
        assert_eq!(model.is_pinching(DEFAULT_TOL), expected, "{j}");
        if expected {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    assert!(pos > 50 && neg > 50, "unbalanced sample: {pos} pinching, {neg} not");
}

#[test]
fn escape_velocity_is_feasible_and_minimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let n = rng.random_range(1..=5);
        let dim = rng.random_range(1..=4);
        let (model, _) = sample_non_pinching_model(&mut rng, n, dim);
        let v0 = DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
        let cert = model.escape_velocity(&v0, DEFAULT_TOL).unwrap();
        assert!(model.violates_constraints(&cert.v, DEFAULT_TOL).is_empty());
        let force = model.generalized_force();
        if cert.k > 1e-9 {
            // Any smaller scale leaves some constraint violated.
            let v = &v0 + &force * (cert.k * (1.0 - 1e-6));
            assert!(!model.violates_constraints(&v, 0.0).is_empty());
        } else {
            assert!(model.violates_constraints(&v0, DEFAULT_TOL).is_empty());
        }
        // Agrees with a direct interval search along the ray.
        let search = model.escape_along_force(&v0, 0.0).unwrap();
        assert!((search.k - cert.k).abs() <= 1e-9 * (1.0 + cert.k));
    }
}

#[test]
fn pinching_samples_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let (n, dim) = (rng.random_range(2..=5), rng.random_range(1..=4));
        let m = sample_pinching_model(&mut rng, n, dim);
        assert!(m.is_pinching(DEFAULT_TOL));
        let v0 = DVector::from_element(m.dim(), 0.1);
        assert!(m.escape_velocity(&v0, DEFAULT_TOL).is_err());
    }
}

proptest! {
    #[test]
    fn generalized_force_is_jt_lambda(
        rows in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 1..5),
        scale in 0.1..3.0f64,
    ) {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .filter_map(|r| {
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                (n > 1e-3).then(|| r.iter().map(|v| v / n).collect())
            })
            .collect();
        prop_assume!(!rows.is_empty());
        let lambda: Vec<f64> = (0..rows.len()).map(|i| scale * (i + 1) as f64).collect();
        let m = ContactModel::from_rows(&rows, &lambda).unwrap();
        let mut expected = DVector::zeros(3);
        for (r, l) in rows.iter().zip(&lambda) {
            expected += DVector::from_column_slice(r) * *l;
        }
        prop_assert!((m.generalized_force() - expected).norm() < 1e-12);
        // Gram matrix entries are pairwise row products.
        let g = m.gram();
        for a in 0..rows.len() {
            for b in 0..rows.len() {
                let d: f64 = rows[a].iter().zip(&rows[b]).map(|(x, y)| x * y).sum();
                prop_assert!((g[(a, b)] - d).abs() < 1e-12);
            }
        }
    }
}
