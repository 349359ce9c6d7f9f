mod common;

use std::sync::Arc;

use common::*;
use cvtrack::dataio::{dataset_stats, parse_libsvm_str, synth_problem, write_libsvm, Dataset, SynthKind};
use cvtrack::glm::{GlmObjective, LinkKind};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const LINKS: [LinkKind; 2] = [LinkKind::Logistic, LinkKind::Squared];

fn fd_gradient(obj: &GlmObjective, i: Option<usize>, theta: &DVector<f64>) -> DVector<f64> {
    let h = 1e-6;
    let f = |t: &DVector<f64>| match i {
        Some(i) => obj.value_sample(i, t).unwrap(),
        None => obj.value(t).unwrap(),
    };
    DVector::from_fn(theta.len(), |j, _| {
        let mut p = theta.clone();
        let mut m = theta.clone();
        p[j] += h;
        m[j] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

#[test]
fn gradients_match_central_differences() {
    for (s, link) in LINKS.iter().enumerate() {
        let obj = random_objective(10 + s as u64, 12, 5, *link, 0.3);
        let theta = gaussian_vector(&mut rng(99), 5);
        for i in 0..obj.n() {
            let g = obj.grad_sample(i, &theta).unwrap();
            assert!(rel_err(&fd_gradient(&obj, Some(i), &theta), &g) < 1e-6, "{link:?} sample {i}");
        }
        let g = obj.grad_full(&theta).unwrap();
        assert!(rel_err(&fd_gradient(&obj, None, &theta), &g) < 1e-6);
    }
}

#[test]
fn hessian_products_match_gradient_differences() {
    for (s, link) in LINKS.iter().enumerate() {
        let obj = random_objective(20 + s as u64, 9, 4, *link, 0.1);
        let mut r = rng(7);
        let theta = gaussian_vector(&mut r, 4);
        let v = gaussian_vector(&mut r, 4);
        let h = 1e-6;
        for i in 0..obj.n() {
            let fd = (obj.grad_sample(i, &(&theta + &v * h)).unwrap() - obj.grad_sample(i, &(&theta - &v * h)).unwrap())
                / (2.0 * h);
            let hv = obj.hess_vec_sample(i, &theta, &v).unwrap();
            assert!(rel_err(&fd, &hv) < 1e-6);
            let dense = obj.hess_dense_sample(i, &theta).unwrap();
            assert!(rel_err(&(&dense * &v), &hv) < 1e-12);
            assert!(rel_err(&dense.diagonal(), &obj.hess_diag_sample(i, &theta).unwrap()) < 1e-12);
        }
        let full = obj.hess_dense_full(&theta).unwrap();
        assert!(rel_err(&(&full * &v), &obj.hess_vec_full(&theta, &v).unwrap()) < 1e-12);
    }
}

#[test]
fn hessian_action_is_columnwise_product() {
    let obj = random_objective(3, 15, 6, LinkKind::Logistic, 0.05);
    let mut r = rng(4);
    let theta = gaussian_vector(&mut r, 6);
    let s = gaussian_matrix(&mut r, 6, 3);
    let a = obj.hess_action_full(&theta, &s).unwrap();
    let h = obj.hess_dense_full(&theta).unwrap();
    assert!(mat_rel_err(&a, &(&h * &s)) < 1e-12);
    let ai = obj.hess_action_sample(2, &theta, &s).unwrap();
    assert!(mat_rel_err(&ai, &(obj.hess_dense_sample(2, &theta).unwrap() * &s)) < 1e-12);
}

#[test]
fn parallel_and_sequential_reductions_agree() {
    let ds = synth_problem(SynthKind::Logistic, 5000, 20, 10.0, 3).unwrap();
    let par = GlmObjective::new(Arc::new(ds), LinkKind::Logistic, 1e-3).unwrap();
    let seq = par.clone().with_deterministic(true);
    let theta = gaussian_vector(&mut rng(5), 20) * 0.1;
    assert!(rel_err(&par.grad_full(&theta).unwrap(), &seq.grad_full(&theta).unwrap()) < 1e-12);
    assert!((par.value(&theta).unwrap() - seq.value(&theta).unwrap()).abs() < 1e-12);
    // Fixed chunking makes repeated parallel reductions bitwise identical.
    assert_eq!(par.grad_full(&theta).unwrap(), par.grad_full(&theta).unwrap());
}

#[test]
fn smoothness_bounds() {
    for seed in 0..5 {
        let obj = random_objective(seed, 30, 6, LinkKind::Squared, 0.2);
        let sm = obj.smoothness_constants(&DVector::zeros(6)).unwrap();
        let st = dataset_stats(obj.data(), obj.lambda());
        assert!(sm.l <= st.l_max * (1.0 + 1e-12));
        assert!(sm.mu_lower >= 0.2 - 1e-12 && sm.mu_lower <= sm.l);
    }
    // Equal-norm rows: L >= L_max / d.
    let x = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    let ds = Dataset::from_dense(&x, vec![1.0; 4]).unwrap();
    let obj = GlmObjective::new(Arc::new(ds), LinkKind::Squared, 0.0).unwrap();
    let sm = obj.smoothness_constants(&DVector::zeros(3)).unwrap();
    assert!(sm.l >= dataset_stats(obj.data(), 0.0).l_max / 3.0);
}

#[test]
fn power_iteration_agrees_with_dense_eigenvalues() {
    let obj = random_objective(8, 40, 12, LinkKind::Logistic, 0.01);
    let theta = gaussian_vector(&mut rng(1), 12) * 0.3;
    let dense = obj.smoothness_constants(&theta).unwrap();
    let power = obj.clone().with_dense_cap(4).smoothness_constants(&theta).unwrap();
    assert!((dense.l - power.l).abs() <= 1e-6 * dense.l);
}

fn sparse_dataset() -> impl Strategy<Value = (Vec<Vec<(usize, f64)>>, Vec<f64>)> {
    let row = prop::collection::btree_map(0usize..30, -1e3f64..1e3, 0..6)
        .prop_map(|m| m.into_iter().filter(|(_, v)| *v != 0.0).collect::<Vec<_>>());
    prop::collection::vec((row, prop::sample::select(vec![-1.0, 1.0])), 1..20)
        .prop_map(|rows| rows.into_iter().unzip())
}

proptest! {
    #[test]
    fn libsvm_round_trip((rows, labels) in sparse_dataset()) {
        let ds = Dataset::from_rows(rows, labels, 30).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&ds, &mut buf).unwrap();
        let back = parse_libsvm_str(std::str::from_utf8(&buf).unwrap(), Some(30)).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn stats_ignore_row_order((rows, labels) in sparse_dataset(), shift in 0usize..20) {
        let n = rows.len();
        let k = shift % n;
        let mut r2 = rows.clone();
        let mut l2 = labels.clone();
        r2.rotate_left(k);
        l2.rotate_left(k);
        let a = dataset_stats(&Dataset::from_rows(rows, labels, 30).unwrap(), 0.5);
        let b = dataset_stats(&Dataset::from_rows(r2, l2, 30).unwrap(), 0.5);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn logistic_value_is_finite_for_extreme_margins(z in -1e6f64..1e6) {
        let v = LinkKind::Logistic.phi(1.0, z);
        prop_assert!(v.is_finite() && v >= 0.0);
        let g = LinkKind::Logistic.dphi(1.0, z);
        prop_assert!((-1.0..=0.0).contains(&g));
    }
}
