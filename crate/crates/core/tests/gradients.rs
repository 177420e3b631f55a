//! Central finite-difference checks of every hand-written backward pass.

use dualproj_core::nn::{Activation, LinearBlock, Mlp, Mode, Trainable};
use dualproj_core::projection::{contrastive_loss, CouplingLayer, Inn};
use dualproj_core::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Norm-wise relative error between two gradient vectors.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn param_count<M: Trainable<f64>>(m: &mut M) -> Vec<usize> {
    let mut sizes = Vec::new();
    m.visit_params("", &mut |_, p, _| sizes.push(p.len()));
    sizes
}

fn nudge<M: Trainable<f64>>(m: &mut M, tensor: usize, elem: usize, delta: f64) {
    let mut t = 0;
    m.visit_params("", &mut |_, p, _| {
        if t == tensor {
            p[elem] += delta;
        }
        t += 1;
    });
}

fn analytic_grads<M: Trainable<f64>>(m: &mut M) -> Vec<f64> {
    let mut out = Vec::new();
    m.visit_params("", &mut |_, _, g| out.extend_from_slice(g));
    out
}

/// Checks parameter and input gradients of `loss = <coef, f(x)>`.
///
/// A central difference that straddles a ReLU kink is wrong by O(1), so a
/// failing step is retried at two smaller steps before reporting.
fn check<M: Trainable<f64>>(
    model: &mut M,
    x: &Matrix,
    coef: &Matrix,
    mut fwd: impl FnMut(&mut M, &Matrix) -> Matrix,
    mut bwd: impl FnMut(&mut M, &Matrix) -> Matrix,
) -> (f64, f64) {
    model.zero_grad();
    fwd(model, x);
    let gx = bwd(model, coef);
    let analytic = analytic_grads(model);
    let (mut best_p, mut best_x) = (f64::INFINITY, f64::INFINITY);
    for h in [H, H / 10.0, H / 100.0] {
        let (p, q) = numeric_errors(model, x, coef, &mut fwd, &analytic, &gx, h);
        best_p = best_p.min(p);
        best_x = best_x.min(q);
        if best_p < TOL && best_x < TOL {
            break;
        }
    }
    (best_p, best_x)
}

fn numeric_errors<M: Trainable<f64>>(
    model: &mut M,
    x: &Matrix,
    coef: &Matrix,
    fwd: &mut impl FnMut(&mut M, &Matrix) -> Matrix,
    analytic: &[f64],
    gx: &Matrix,
    h: f64,
) -> (f64, f64) {
    let mut numeric = Vec::with_capacity(analytic.len());
    for (t, &len) in param_count(model).iter().enumerate() {
        for e in 0..len {
            nudge(model, t, e, h);
            let up = dot(&fwd(model, x), coef);
            nudge(model, t, e, -2.0 * h);
            let down = dot(&fwd(model, x), coef);
            nudge(model, t, e, h);
            numeric.push((up - down) / (2.0 * h));
        }
    }
    let mut numeric_x = Vec::with_capacity(x.as_slice().len());
    for i in 0..x.as_slice().len() {
        let mut xp = x.clone();
        xp.as_mut_slice()[i] += h;
        let up = dot(&fwd(model, &xp), coef);
        xp.as_mut_slice()[i] -= 2.0 * h;
        let down = dot(&fwd(model, &xp), coef);
        numeric_x.push((up - down) / (2.0 * h));
    }
    (rel_err(analytic, &numeric), rel_err(gx.as_slice(), &numeric_x))
}

#[test]
fn sum_of_output_gradient_for_4x3_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut block = LinearBlock::<f64>::init(4, 3, true, Activation::Relu, &mut rng);
    let x = random_matrix(6, 4, &mut rng);
    let ones = Matrix::filled(6, 3, 1.0);
    let (gp, gx) = check(
        &mut block,
        &x,
        &ones,
        |m, x| m.forward(x, Mode::Train).unwrap(),
        |m, g| m.backward(g).unwrap(),
    );
    assert!(gp < TOL, "param rel err {gp}");
    assert!(gx < TOL, "input rel err {gx}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_block_matches_finite_differences(
        seed in 0u64..10_000,
        inp in 1usize..=8,
        out in 1usize..=8,
        batch in 2usize..=8,
        normalize in any::<bool>(),
        relu in any::<bool>(),
        train in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let act = if relu { Activation::Relu } else { Activation::None };
        let mut block = LinearBlock::<f64>::init(inp, out, normalize, act, &mut rng);
        // give the normalization non-trivial running statistics and affine terms
        if let Some(n) = block.norm.as_mut() {
            for j in 0..out {
                n.gamma[j] = rng.random_range(0.5..1.5);
                n.beta[j] = rng.random_range(-0.5..0.5);
                n.running_mean[j] = rng.random_range(-0.5..0.5);
                n.running_var[j] = rng.random_range(0.5..1.5);
            }
        }
        let mode = if train { Mode::Train } else { Mode::Infer };
        let x = random_matrix(batch, inp, &mut rng);
        let coef = random_matrix(batch, out, &mut rng);
        let (gp, gx) = check(
            &mut block,
            &x,
            &coef,
            |m, x| m.forward(x, mode).unwrap(),
            |m, g| m.backward(g).unwrap(),
        );
        prop_assert!(gp < TOL, "param rel err {}", gp);
        prop_assert!(gx < TOL, "input rel err {}", gx);
    }

    #[test]
    fn mlp_matches_finite_differences(seed in 0u64..10_000, inp in 1usize..=6, out in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mlp = Mlp::<f64>::new(&[inp, 5, 5, 5, out], false, &mut rng);
        let x = random_matrix(7, inp, &mut rng);
        let coef = random_matrix(7, out, &mut rng);
        let (gp, gx) = check(
            &mut mlp,
            &x,
            &coef,
            |m, x| m.forward(x, Mode::Train).unwrap(),
            |m, g| m.backward(g).unwrap(),
        );
        prop_assert!(gp < TOL, "param rel err {}", gp);
        prop_assert!(gx < TOL, "input rel err {}", gx);
    }

    #[test]
    fn coupling_matches_finite_differences(seed in 0u64..10_000, z1 in 2usize..=4, z2 in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = CouplingLayer::<f64>::new(z1, z2, 5, 2.0, &mut rng);
        // replace the zero-initialized output layers so every path carries gradient
        for mlp in [&mut layer.t1, &mut layer.s, &mut layer.t2] {
            let last = mlp.layers.len() - 1;
            let (i, o) = (mlp.layers[last].input_dim(), mlp.layers[last].output_dim());
            mlp.layers[last] = LinearBlock::init(i, o, false, Activation::None, &mut rng);
        }
        let x = random_matrix(8, z1 + z2, &mut rng);
        let coef = random_matrix(8, z1 + z2, &mut rng);
        let (gp, gx) = check(
            &mut layer,
            &x,
            &coef,
            |m, x| m.forward_train(x, Mode::Train).unwrap(),
            |m, g| m.backward(g).unwrap(),
        );
        prop_assert!(gp < TOL, "param rel err {}", gp);
        prop_assert!(gx < TOL, "input rel err {}", gx);
    }

    #[test]
    fn contrastive_loss_matches_finite_differences(seed in 0u64..10_000, b in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_matrix(2 * b, 2, &mut rng);
        let tau = 0.5;
        let (_, g) = contrastive_loss(&y, b, tau).unwrap();
        let mut numeric = Vec::new();
        for i in 0..y.as_slice().len() {
            let mut yp = y.clone();
            yp.as_mut_slice()[i] += H;
            let up = contrastive_loss(&yp, b, tau).unwrap().0;
            yp.as_mut_slice()[i] -= 2.0 * H;
            let down = contrastive_loss(&yp, b, tau).unwrap().0;
            numeric.push((up - down) / (2.0 * H));
        }
        let e = rel_err(g.as_slice(), &numeric);
        prop_assert!(e < TOL, "rel err {}", e);
    }
}

#[test]
fn inn_stack_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut inn = Inn::<f64>::new(6, 4, 2.0, &mut rng).unwrap();
    for st in &mut inn.stages {
        for mlp in [&mut st.coupling.t1, &mut st.coupling.s, &mut st.coupling.t2] {
            let last = mlp.layers.len() - 1;
            let (i, o) = (mlp.layers[last].input_dim(), mlp.layers[last].output_dim());
            mlp.layers[last] = LinearBlock::init(i, o, false, Activation::None, &mut rng);
        }
    }
    let x = random_matrix(5, 6, &mut rng);
    let coef = random_matrix(5, 6, &mut rng);
    let (gp, gx) = check(
        &mut inn,
        &x,
        &coef,
        |m, x| m.forward_train(x, Mode::Train).unwrap(),
        |m, g| m.backward(g).unwrap(),
    );
    assert!(gp < TOL, "param rel err {gp}");
    assert!(gx < TOL, "input rel err {gx}");
}
