use downscale_autograd::{PadMode, Padding, Var};

use super::weights::{Binder, Layout};

/// What every layer needs besides its input.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub binder: &'a Binder,
    pub pad: PadMode,
    pub slope: f32,
}

impl<'a> Ctx<'a> {
    /// `same`-padded convolution with bias.
    pub fn conv(&self, name: &str, x: &Var, stride: usize) -> Var {
        let w = self.binder.w(&format!("{name}/w"));
        let b = self.binder.w(&format!("{name}/b"));
        let k = w.shape().h;
        let xp = x.pad(Padding::uniform(k / 2, self.pad));
        let y = xp.conv2d(w, stride);
        y.add(&b.broadcast_channel(y.shape()))
    }

    fn act(&self, x: &Var, leaky: bool) -> Var {
        x.leaky_relu(if leaky { self.slope } else { 0.0 })
    }

    /// `shortcut(x) + conv2(act(conv1(act(x))))`; the shortcut is a 1×1
    /// projection when channels or resolution change.
    pub fn residual_block(&self, name: &str, x: &Var, strided: bool, leaky: bool) -> Var {
        let stride = if strided { 2 } else { 1 };
        let h = self.conv(&format!("{name}/conv1"), &self.act(x, leaky), stride);
        let h = self.conv(&format!("{name}/conv2"), &self.act(&h, leaky), 1);
        let proj = format!("{name}/skip");
        let skip = if self.binder.has(&format!("{proj}/w")) {
            self.conv(&proj, x, stride)
        } else {
            x.clone()
        };
        skip.add(&h)
    }

    /// One ConvGRU update:
    /// `z, r = σ(conv[x, h])`, `c = tanh(conv[x, r⊙h])`, `h' = (1−z)⊙h + z⊙c`.
    pub fn convgru_step(&self, name: &str, h: &Var, x: &Var) -> Var {
        let c = h.shape().c;
        let gates = self
            .conv(&format!("{name}/gates"), &Var::cat_channels(&[x.clone(), h.clone()]), 1)
            .sigmoid();
        let z = gates.slice_channels(0, c);
        let r = gates.slice_channels(c, c);
        let cand = self
            .conv(&format!("{name}/cand"), &Var::cat_channels(&[x.clone(), r.mul(h)]), 1)
            .tanh();
        gru_mix(h, &z, &cand)
    }
}

/// `(1−z)⊙h + z⊙c`, written as `h + z⊙(c − h)`.
pub fn gru_mix(h: &Var, z: &Var, cand: &Var) -> Var {
    h.add(&z.mul(&cand.sub(h)))
}

pub fn layout_residual(l: &mut Layout, name: &str, cin: usize, cout: usize, k: usize, strided: bool) {
    l.conv(&format!("{name}/conv1"), cin, cout, k);
    l.conv(&format!("{name}/conv2"), cout, cout, k);
    if strided || cin != cout {
        l.conv(&format!("{name}/skip"), cin, cout, 1);
    }
}

pub fn layout_convgru(l: &mut Layout, name: &str, cin: usize, c: usize, k: usize) {
    l.conv(&format!("{name}/gates"), cin + c, 2 * c, k);
    l.conv(&format!("{name}/cand"), cin + c, c, k);
}

#[cfg(test)]
mod tests {
    use super::*;
    use downscale_autograd::{Shape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, seed: u64) -> Tensor {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_weight_block_is_identity() {
        let mut l = Layout::default();
        layout_residual(&mut l, "rb", 5, 5, 3, false);
        let ws = l.init(&mut ChaCha8Rng::seed_from_u64(1)).zeros_like();
        let b = Binder::new(&ws, false);
        let ctx = Ctx { binder: &b, pad: PadMode::Reflect, slope: 0.2 };
        let x = Var::constant(random(Shape::new(2, 5, 6, 7), 2));
        let y = ctx.residual_block("rb", &x, false, true);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(y.value()), bits(x.value()));
    }

    #[test]
    fn strided_block_halves() {
        let mut l = Layout::default();
        layout_residual(&mut l, "rb", 3, 4, 3, true);
        let ws = l.init(&mut ChaCha8Rng::seed_from_u64(1));
        let b = Binder::new(&ws, false);
        let ctx = Ctx { binder: &b, pad: PadMode::Reflect, slope: 0.2 };
        let y = ctx.residual_block("rb", &Var::constant(random(Shape::new(1, 3, 8, 6), 3)), true, true);
        assert_eq!(y.shape(), Shape::new(1, 4, 4, 3));
        assert!(y.value().all_finite());
    }

    #[test]
    fn gate_extremes() {
        let s = Shape::new(1, 2, 3, 3);
        let h = Var::constant(random(s, 4));
        let c = Var::constant(random(s, 5));
        let zero = Var::constant(Tensor::zeros(s));
        let one = Var::constant(Tensor::ones(s));
        assert_eq!(gru_mix(&h, &zero, &c).value(), h.value());
        assert!(gru_mix(&h, &one, &c).value().max_abs_diff(c.value()) < 1e-6);
    }

    #[test]
    fn gru_state_keeps_shape_and_range() {
        let mut l = Layout::default();
        layout_convgru(&mut l, "gru", 3, 4, 3);
        let ws = l.init(&mut ChaCha8Rng::seed_from_u64(6));
        let b = Binder::new(&ws, false);
        let ctx = Ctx { binder: &b, pad: PadMode::Zero, slope: 0.2 };
        let h = Var::constant(random(Shape::new(2, 4, 5, 5), 7));
        let x = Var::constant(random(Shape::new(2, 3, 5, 5), 8));
        let h2 = ctx.convgru_step("gru", &h, &x);
        assert_eq!(h2.shape(), h.shape());
        assert!(h2.value().data().iter().all(|v| v.abs() <= 1.0));
    }
}
