use std::sync::Arc;

use approx::assert_relative_eq;
use goed::bip::Design;
use goed::criteria::{cv, quad_variance};
use goed::design::{exhaustive_minimize, greedy_minimize};
use goed::goal::QuadraticForm;
use goed::linop::{DenseOperator, MassMatrix};
use goed::prior::GaussianMeasure;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
}

fn vector(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-2.0f64..2.0, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Var[½⟨As,s⟩_M + ⟨b,s⟩_M] = ‖A m + b‖²_C + ½ tr((CA)²)
    #[test]
    fn quadratic_variance_closed_form(
        l in matrix(3), a in matrix(3), mw in vector(3), b in vector(3), m0 in vector(3),
    ) {
        let n = 3;
        let w = DVector::from_iterator(n, mw.iter().map(|x| 1.0 + x.abs()));
        let wm = DMatrix::from_diagonal(&w);
        let mass = Arc::new(MassMatrix::from_dense(&wm).unwrap());
        let winv = DMatrix::from_diagonal(&w.map(|x| 1.0 / x));
        let sqrt = &l + DMatrix::identity(n, n) * 2.0;
        let cov = &sqrt * &winv * sqrt.transpose() * &wm;
        let asym = &winv * (&a + a.transpose());
        let measure = GaussianMeasure::new(
            m0.clone(),
            Arc::new(DenseOperator::self_adjoint(cov.clone(), mass.clone()).unwrap()),
            None,
            mass.clone(),
        ).unwrap();
        let q = QuadraticForm::new(
            Arc::new(DenseOperator::self_adjoint(asym.clone(), mass.clone()).unwrap()),
            b.clone(), 0.0, mass.clone(),
        ).unwrap();
        let g = &asym * &m0 + &b;
        let ca = &cov * &asym;
        let expected = g.dot(&(&wm * &cov * &g)) + 0.5 * (&ca * &ca).trace();
        let got = quad_variance(&measure, &q).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-9, epsilon = 1e-12);
    }

    #[test]
    fn cv_is_scale_invariant(xs in prop::collection::vec(1.0f64..2.0, 2..40), s in 0.1f64..10.0) {
        prop_assume!(xs.iter().any(|&x| x != xs[0]));
        let scaled: Vec<f64> = xs.iter().map(|x| x * s).collect();
        assert_relative_eq!(cv(&xs).unwrap(), cv(&scaled).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn greedy_is_exact_for_additive_criteria(costs in prop::collection::vec(-5.0f64..5.0, 4..9), k in 1usize..4) {
        let d = costs.len();
        let f = |w: &Design| Ok(w.active_indices().iter().map(|&i| costs[i]).sum::<f64>());
        let g = greedy_minimize(d, 1.0, k, f).unwrap();
        let (_, best) = exhaustive_minimize(d, 1.0, k, f).unwrap();
        assert_relative_eq!(*g.trace.last().unwrap(), best, epsilon = 1e-12);
    }

    #[test]
    fn design_index_round_trip(mask in prop::collection::vec(any::<bool>(), 1..30)) {
        let d = mask.len();
        let idx: Vec<usize> = (0..d).filter(|&i| mask[i]).collect();
        let design = Design::from_indices(d, &idx, 0.5).unwrap();
        prop_assert_eq!(design.active_indices(), idx.clone());
        prop_assert_eq!(design.count(), idx.len());
        prop_assert_eq!(design.hash(), Design::new(mask, 0.5).unwrap().hash());
    }
}
