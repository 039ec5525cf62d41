use std::sync::Arc;

use downscale_autograd::{grad, PadMode, Padding, Shape, Tensor, Var};

fn pseudo(shape: Shape, seed: u32) -> Tensor {
    let mut s = seed.wrapping_mul(2654435761).wrapping_add(12345);
    let data = (0..shape.len())
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 17;
            s ^= s << 5;
            (s as f32 / u32::MAX as f32) * 2.0 - 1.0
        })
        .collect();
    Tensor::from_vec(shape, data)
}

/// Small critic touching most ops: pad, strided conv, bias, activations,
/// upsampling, channel concat, pooling and per-sample sums.
/// The leaky rectifier is swapped for `tanh` in the second-order check: the
/// penalty jumps where a rectifier changes branch, which finite differences
/// cannot follow.
fn critic_with(x: &Var, w1: &Var, b1: &Var, w2: &Var, smooth: bool) -> Var {
    let p = Padding::uniform(1, PadMode::Reflect);
    let h = x.pad(p).conv2d(w1, 2);
    let h = h.add(&b1.broadcast_channel(h.shape()));
    let h = if smooth { h.tanh() } else { h.leaky_relu(0.2) };
    let u = h.upsample2(false).tanh();
    let cat = Var::cat_channels(&[u.clone(), u.sigmoid()]);
    let y = cat.pad(Padding::uniform(1, PadMode::Circular)).conv2d(w2, 1);
    y.spatial_mean().sum_per_sample(2)
}

fn critic(x: &Var, w1: &Var, b1: &Var, w2: &Var) -> Var {
    critic_with(x, w1, b1, w2, false)
}

fn setup() -> (Tensor, Tensor, Tensor, Tensor) {
    (
        pseudo(Shape::new(4, 2, 6, 6), 1),
        pseudo(Shape::new(3, 2, 3, 3), 2).map(|v| v * 0.5),
        pseudo(Shape::new(1, 3, 1, 1), 3).map(|v| v * 0.1),
        pseudo(Shape::new(1, 6, 3, 3), 4).map(|v| v * 0.5),
    )
}

fn f64_fd(f: impl Fn(&Tensor) -> f64, t: &Tensor, idx: usize, h: f32) -> f64 {
    let mut p = t.clone();
    p.data_mut()[idx] += h;
    let mut m = t.clone();
    m.data_mut()[idx] -= h;
    (f(&p) - f(&m)) / (2.0 * h as f64)
}

#[test]
fn first_order_gradients_match_finite_differences() {
    let (x, w1, b1, w2) = setup();
    let eval = |x: &Tensor| {
        critic(
            &Var::constant(x.clone()),
            &Var::constant(w1.clone()),
            &Var::constant(b1.clone()),
            &Var::constant(w2.clone()),
        )
        .sum_all()
        .item() as f64
    };
    let xv = Var::param(x.clone());
    let out = critic(
        &xv,
        &Var::constant(w1.clone()),
        &Var::constant(b1.clone()),
        &Var::constant(w2.clone()),
    )
    .sum_all();
    let gx = grad(&out, &[&xv], false).remove(0);
    for idx in (0..x.len()).step_by(7) {
        let fd = f64_fd(eval, &x, idx, 1e-2);
        let ad = gx.value().data()[idx] as f64;
        assert!((fd - ad).abs() < 2e-3 + 2e-2 * ad.abs(), "idx {idx}: fd {fd} ad {ad}");
    }
}

#[test]
fn second_order_penalty_gradient_matches_finite_differences() {
    // P(w) = Σ_samples (‖∂critic/∂x‖ - 1)²; its gradient needs double backprop.
    let (x, w1, b1, w2) = setup();
    let penalty = |w1t: &Tensor, keep: bool| -> (Var, Var) {
        let xv = Var::param(x.clone());
        let w1v = Var::param(w1t.clone());
        let out = critic_with(
            &xv,
            &w1v,
            &Var::constant(b1.clone()),
            &Var::constant(w2.clone()),
            true,
        );
        let gx = grad(&out.sum_all(), &[&xv], keep).remove(0);
        let norm = gx.square().sum_per_sample(2).add_scalar(1e-12).sqrt();
        (norm.add_scalar(-1.0).square().sum_all(), w1v)
    };
    let (p, w1v) = penalty(&w1, true);
    let gw = grad(&p, &[&w1v], false).remove(0);
    assert!(gw.value().sum_sq() > 0.0);
    let eval = |t: &Tensor| penalty(t, false).0.item() as f64;
    for idx in 0..w1.len() {
        let fd = f64_fd(eval, &w1, idx, 5e-3);
        let ad = gw.value().data()[idx] as f64;
        assert!((fd - ad).abs() < 5e-3 + 3e-2 * ad.abs(), "idx {idx}: fd {fd} ad {ad}");
    }
}

#[test]
fn detached_first_order_pass_builds_no_graph() {
    let (x, w1, b1, w2) = setup();
    let xv = Var::param(x);
    let out = critic(
        &xv,
        &Var::constant(w1),
        &Var::constant(b1),
        &Var::constant(w2),
    )
    .sum_all();
    let gx = grad(&out, &[&xv], false).remove(0);
    assert!(!gx.requires_grad());
}

#[test]
fn constants_build_no_graph() {
    let a = Var::constant(Tensor::ones(Shape::new(1, 1, 2, 2)));
    let b = a.mul(&a).sigmoid().mul_const(Arc::new(Tensor::ones(Shape::new(1, 1, 2, 2))));
    assert!(!b.requires_grad());
}

#[test]
fn unreachable_inputs_get_zero_gradient() {
    let a = Var::param(Tensor::ones(Shape::new(1, 1, 2, 2)));
    let b = Var::param(Tensor::ones(Shape::new(1, 1, 1, 3)));
    let g = grad(&a.sum_all(), &[&b], false).remove(0);
    assert_eq!(g.value().data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn long_chain_drops_without_overflow() {
    let mut v = Var::param(Tensor::ones(Shape::new(1, 1, 1, 1)));
    for _ in 0..200_000 {
        v = v.scale(1.0);
    }
    drop(v);
}

/// For a linear map `f`, `⟨∇ₓ⟨f(x), y⟩, x⟩ = ⟨f(x), y⟩` exactly; the same
/// holds for the kernel. Sizes are large enough to take the row-copy and
/// multi-chunk paths.
#[test]
fn conv_adjoints_on_large_inputs() {
    for (n, c, hw, co, k, stride, mode) in [
        (3, 5, 40, 4, 3, 1, PadMode::Reflect),
        (3, 5, 40, 4, 3, 2, PadMode::Reflect),
        (2, 3, 33, 6, 3, 2, PadMode::Circular),
        (40, 16, 64, 8, 3, 1, PadMode::Zero),
        (2, 2, 70, 3, 1, 1, PadMode::Reflect),
        (2, 4, 36, 5, 1, 2, PadMode::Reflect),
    ] {
        let x = pseudo(Shape::new(n, c, hw, hw), 7);
        let w = pseudo(Shape::new(co, c, k, k), 8);
        let p = Padding::uniform(k / 2, mode);
        let xv = Var::param(x.clone());
        let wv = Var::param(w.clone());
        let out = xv.pad(p).conv2d(&wv, stride);
        let y = pseudo(out.shape(), 9);
        let dot = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(p, q)| *p as f64 * *q as f64).sum::<f64>();
        let total = dot(out.value().data(), y.data());
        let l = out.mul(&Var::constant(y)).sum_all();
        let g = grad(&l, &[&xv, &wv], false);
        let gx = dot(g[0].value().data(), x.data());
        let gw = dot(g[1].value().data(), w.data());
        let tol = 1e-4 * total.abs().max(1.0);
        assert!((gx - total).abs() < tol, "input {n} {c} {hw} s{stride}: {gx} vs {total}");
        assert!((gw - total).abs() < tol, "kernel {n} {c} {hw} s{stride}: {gw} vs {total}");
    }
}

#[test]
fn pad_and_upsample_adjoints() {
    for mode in [PadMode::Reflect, PadMode::Circular, PadMode::Zero] {
        for hw in [5, 20, 37] {
            let x = pseudo(Shape::new(2, 3, hw, hw), 11);
            let xv = Var::param(x.clone());
            for out in [xv.pad(Padding::uniform(2, mode)), xv.upsample2(mode == PadMode::Circular)] {
                let y = pseudo(out.shape(), 12);
                let dot = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(p, q)| *p as f64 * *q as f64).sum::<f64>();
                let total = dot(out.value().data(), y.data());
                let g = grad(&out.mul(&Var::constant(y)).sum_all(), &[&xv], false).remove(0);
                let gx = dot(g.value().data(), x.data());
                assert!((gx - total).abs() < 1e-4 * total.abs().max(1.0), "{mode:?} {hw}: {gx} vs {total}");
            }
        }
    }
}
