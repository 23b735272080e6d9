mod common;

use graspmeta::autodiff::{finite_difference_check, Graph, Tensor};

#[test]
fn random_mlp_gradients_match_central_differences() {
    let worst = common::mlp_gradient_worst(100);
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn quadratic_meta_gradients_match_closed_form() {
    let (second, first) = common::quadratic_meta_gradient_errors();
    assert!(second < 1e-10, "second-order error {second:e}");
    assert!(first < 1e-10, "first-order error {first:e}");
}

#[test]
fn full_meta_loss_matches_finite_differences() {
    let worst = common::meta_loss_gradient_worst();
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn hessian_vector_product_of_cubic() {
    // f(x) = Σ x_i³; ∇f = 3x², and ∇(∇f · v) = 6 x ⊙ v.
    let x = Tensor::matrix(1, 3, vec![0.5, -1.5, 2.0]).unwrap();
    let v = Tensor::matrix(1, 3, vec![1.0, 2.0, -0.5]).unwrap();
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let sq = g.square(xv).unwrap();
    let cube = g.mul(sq, xv).unwrap();
    let f = g.sum(cube).unwrap();
    let grad = g.backward(f, &[xv], true).unwrap()[0];
    let vv = g.leaf(v.clone());
    let dot = g.mul(grad, vv).unwrap();
    let s = g.sum(dot).unwrap();
    let hv = g.backward(s, &[xv], false).unwrap()[0];
    for i in 0..3 {
        let expected = 6.0 * x.data()[i] * v.data()[i];
        assert!((g.value(hv).data()[i] - expected).abs() < 1e-12);
    }
}

#[test]
fn checker_flags_a_wrong_gradient() {
    // relu'(0) is taken as 0, so a kink at the evaluation point must show up.
    let at_kink = Tensor::matrix(1, 1, vec![0.0]).unwrap();
    let err = finite_difference_check(
        |g, v| {
            let r = g.relu(v[0])?;
            g.sum(r)
        },
        &[at_kink],
        1e-6,
    )
    .unwrap();
    assert!(err > 0.1);
}
