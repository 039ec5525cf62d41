use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use downscale_autograd::{grad, Shape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Named trainable arrays of one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightSet {
    pub tensors: BTreeMap<String, Tensor>,
}

impl WeightSet {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Same names, every array zero.
    pub fn zeros_like(&self) -> WeightSet {
        WeightSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// Names carrying convolution kernels (as opposed to biases).
    pub fn is_kernel(name: &str) -> bool {
        name.ends_with("/w")
    }
}

/// Exact number of scalar weights.
pub fn count_parameters(ws: &WeightSet) -> usize {
    ws.tensors.values().map(Tensor::len).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// He-normal with the given fan-in.
    Kernel(usize),
    Zero,
}

/// Declared shapes of a network's weights.
#[derive(Clone, Debug, Default)]
pub struct Layout {
    pub entries: Vec<(String, Shape, Init)>,
}

impl Layout {
    /// Kernel `[cout, cin, k, k]` and bias `[1, cout, 1, 1]`.
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) {
        self.entries.push((
            format!("{name}/w"),
            Shape::new(cout, cin, k, k),
            Init::Kernel(cin * k * k),
        ));
        self.entries
            .push((format!("{name}/b"), Shape::new(1, cout, 1, 1), Init::Zero));
    }

    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, s, _)| s.len()).sum()
    }

    pub fn init(&self, rng: &mut impl Rng) -> WeightSet {
        let mut ws = WeightSet::default();
        for (name, shape, init) in &self.entries {
            let t = match init {
                Init::Zero => Tensor::zeros(*shape),
                Init::Kernel(fan_in) => {
                    let std = (2.0 / *fan_in as f64).sqrt();
                    let data = (0..shape.len())
                        .map(|_| (Distribution::<f64>::sample(&StandardNormal, rng) * std) as f32)
                        .collect();
                    Tensor::from_vec(*shape, data)
                }
            };
            ws.insert(name.clone(), t);
        }
        ws
    }

    /// Checks that `ws` holds exactly these names and shapes.
    pub fn matches(&self, ws: &WeightSet) -> Result<(), String> {
        if ws.len() != self.entries.len() {
            return Err(format!(
                "{} arrays, layout declares {}",
                ws.len(),
                self.entries.len()
            ));
        }
        for (name, shape, _) in &self.entries {
            match ws.get(name) {
                None => return Err(format!("missing array {name}")),
                Some(t) if t.shape() != *shape => {
                    return Err(format!("{name} has shape {}, expected {shape}", t.shape()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Persistent power-iteration vectors, one per normalized kernel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectralState {
    pub u: BTreeMap<String, Vec<f32>>,
}

impl SpectralState {
    pub fn init(ws: &WeightSet, rng: &mut impl Rng) -> Self {
        let mut u = BTreeMap::new();
        for (name, t) in ws.iter().filter(|(n, _)| WeightSet::is_kernel(n)) {
            let mut v: Vec<f64> = (0..t.shape().n).map(|_| StandardNormal.sample(rng)).collect();
            normalize(&mut v);
            u.insert(name.clone(), v.into_iter().map(|x| x as f32).collect());
        }
        Self { u }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= n);
    n
}

/// One power-iteration step on the `[out, rest]` unfolding of `w`. Returns
/// `(σ, u', v)`.
pub fn power_iteration(w: &Tensor, u: &[f32]) -> (f64, Vec<f64>, Vec<f64>) {
    let rows = w.shape().n;
    let cols = w.len() / rows;
    let m = w.data();
    let mut v = vec![0.0f64; cols];
    for (r, &ur) in u.iter().enumerate() {
        for (c, vc) in v.iter_mut().enumerate() {
            *vc += m[r * cols + c] as f64 * ur as f64;
        }
    }
    normalize(&mut v);
    let mut u2: Vec<f64> = (0..rows)
        .map(|r| (0..cols).map(|c| m[r * cols + c] as f64 * v[c]).sum())
        .collect();
    let sigma = normalize(&mut u2);
    (sigma, u2, v)
}

/// Weights bound into a computation graph.
pub struct Binder {
    leaves: BTreeMap<String, Var>,
    effective: HashMap<String, Var>,
}

impl Binder {
    /// `trainable` leaves take part in differentiation; otherwise constants.
    pub fn new(ws: &WeightSet, trainable: bool) -> Binder {
        let leaves: BTreeMap<String, Var> = ws
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    Var::param(t.clone())
                } else {
                    Var::constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        let effective = leaves.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        Binder { leaves, effective }
    }

    /// Binds `ws` with every kernel divided by its spectral-norm estimate
    /// after one power-iteration step from `state`. Returns the advanced state.
    pub fn spectral(ws: &WeightSet, state: &SpectralState, trainable: bool) -> (Binder, SpectralState) {
        let mut b = Binder::new(ws, trainable);
        let mut next = SpectralState::default();
        for (name, leaf) in &b.leaves {
            if !WeightSet::is_kernel(name) {
                continue;
            }
            let w = leaf.value();
            let u = state
                .u
                .get(name)
                .unwrap_or_else(|| panic!("no spectral vector for {name}"));
            let (sigma, u2, v) = power_iteration(w, u);
            let cols = v.len();
            let outer: Vec<f32> = u2
                .iter()
                .flat_map(|&a| v.iter().map(move |&b| (a * b) as f32))
                .collect();
            debug_assert_eq!(outer.len(), cols * u2.len());
            // σ = uᵀ W v as a differentiable function of W
            let sigma_var = leaf
                .mul_const(Arc::new(Tensor::from_vec(w.shape(), outer)))
                .sum_all();
            debug_assert!((sigma_var.item() as f64 - sigma).abs() <= 1e-3 * sigma.max(1.0));
            let normalized = leaf.mul(&sigma_var.recip().broadcast_scalar(w.shape()));
            b.effective.insert(name.clone(), normalized);
            next.u.insert(name.clone(), u2.iter().map(|&x| x as f32).collect());
        }
        (b, next)
    }

    pub fn has(&self, name: &str) -> bool {
        self.effective.contains_key(name)
    }

    pub fn w(&self, name: &str) -> &Var {
        self.effective
            .get(name)
            .unwrap_or_else(|| panic!("weight {name} not bound"))
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.leaves.iter()
    }

    /// Gradient of `loss` with respect to every leaf.
    pub fn gradients(&self, loss: &Var) -> WeightSet {
        let names: Vec<&String> = self.leaves.keys().collect();
        let vars: Vec<&Var> = self.leaves.values().collect();
        let gs = grad(loss, &vars, false);
        WeightSet {
            tensors: names
                .into_iter()
                .zip(gs)
                .map(|(n, g)| (n.clone(), g.value().clone()))
                .collect(),
        }
    }

    /// `Σ w²` over kernels (biases excluded).
    pub fn kernel_square_sum(&self) -> Option<Var> {
        self.leaves
            .iter()
            .filter(|(n, _)| WeightSet::is_kernel(n))
            .map(|(_, v)| v.square().sum_all())
            .reduce(|a, b| a.add(&b))
    }
}
