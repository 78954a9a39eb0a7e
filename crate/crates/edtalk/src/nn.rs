//! Parameter storage, layer initializers/forwards, and the Adam optimizer.
//!
//! Parameters live in a flat name -> tensor map. Values are snapped to f32
//! precision on every write so that the in-memory state is always exactly
//! representable in the 32-bit checkpoint blob format; computation stays f64.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use ndarray::{Array, ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{EdTalkError, Result};
use crate::tape::{Tape, Var};

fn snap32(x: f64) -> f64 {
    x as f32 as f64
}

pub fn snap_array(a: &mut ArrayD<f64>) {
    a.mapv_inplace(snap32);
}

#[derive(Default, Clone)]
pub struct ParamStore {
    map: IndexMap<String, ArrayD<f64>>,
    frozen: HashSet<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, mut value: ArrayD<f64>) {
        snap_array(&mut value);
        self.map.insert(name.to_string(), value);
    }

    /// Raw insert without the f32 snap; only for exact test fixtures.
    pub fn insert_raw(&mut self, name: &str, value: ArrayD<f64>) {
        self.map.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.map.get(name)
    }

    pub fn set(&mut self, name: &str, mut value: ArrayD<f64>) {
        snap_array(&mut value);
        *self
            .map
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}")) = value;
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn freeze(&mut self, name: &str) {
        self.frozen.insert(name.to_string());
    }

    pub fn freeze_prefix(&mut self, prefix: &str) {
        let names: Vec<String> = self
            .map
            .keys()
            .filter(|n| n.starts_with(prefix))
            .cloned()
            .collect();
        for n in names {
            self.frozen.insert(n);
        }
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.clear();
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.frozen.iter().cloned().collect();
        v.sort();
        v
    }

    pub fn set_frozen_names(&mut self, names: &[String]) {
        self.frozen = names.iter().cloned().collect();
    }

    pub fn blob_f32(&self, name: &str) -> Vec<u8> {
        let a = self.get(name);
        let mut out = Vec::with_capacity(a.len() * 4);
        for &v in a.as_standard_layout().iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn param_hash(&self, name: &str) -> String {
        hex::encode(Sha256::digest(self.blob_f32(name)))
    }

    /// Hash over all parameters matching a prefix, in insertion order.
    pub fn prefix_hash(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        for (name, _) in self.map.iter().filter(|(n, _)| n.starts_with(prefix)) {
            h.update(name.as_bytes());
            h.update(self.blob_f32(name));
        }
        hex::encode(h.finalize())
    }
}

/// A tape plus memoized parameter leaves, so each parameter is one node and
/// gradient contributions from multiple uses accumulate correctly.
pub struct Graph<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    vars: HashMap<String, Var>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            tape: Tape::new(),
            store,
            vars: HashMap::new(),
        }
    }

    /// Fetch a parameter as a (memoized) leaf node.
    pub fn p(&mut self, name: &str) -> Var {
        if let Some(v) = self.vars.get(name) {
            return *v;
        }
        let v = self.tape.leaf(self.store.get(name).clone());
        self.vars.insert(name.to_string(), v);
        v
    }

    pub fn constant(&mut self, value: ArrayD<f64>) -> Var {
        self.tape.leaf(value)
    }

    /// Collect gradients for every parameter touched by this graph.
    pub fn param_grads(&self, grads: &crate::tape::Gradients) -> HashMap<String, ArrayD<f64>> {
        let mut out = HashMap::new();
        for (name, var) in &self.vars {
            if let Some(g) = grads.wrt(*var) {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }
}

// ----- initializers -----

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> ArrayD<f64> {
    use rand_distr::{Distribution, Normal};
    let dist = Normal::new(0.0, std).expect("normal");
    Array::from_shape_fn(IxDyn(shape), |_| dist.sample(rng))
}

pub fn init_linear(store: &mut ParamStore, name: &str, out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) {
    let std = (2.0 / in_dim as f64).sqrt();
    store.insert(&format!("{name}.w"), randn(rng, &[out_dim, in_dim], std));
    store.insert(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[out_dim])));
}

pub fn init_conv(store: &mut ParamStore, name: &str, oc: usize, ic: usize, k: usize, rng: &mut ChaCha8Rng) {
    let std = (2.0 / (ic * k * k) as f64).sqrt();
    store.insert(&format!("{name}.w"), randn(rng, &[oc, ic, k, k], std));
    store.insert(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[oc])));
}

// ----- forwards -----

pub fn linear_fwd(g: &mut Graph, name: &str, x: Var) -> Var {
    let w = g.p(&format!("{name}.w"));
    let b = g.p(&format!("{name}.b"));
    g.tape.linear(x, w, b)
}

pub fn conv_fwd(g: &mut Graph, name: &str, x: Var, stride: usize, pad: usize) -> Var {
    let w = g.p(&format!("{name}.w"));
    let b = g.p(&format!("{name}.b"));
    let oc = g.tape.value(b).len();
    let y = g.tape.conv2d(x, w, stride, pad, pad);
    let b4 = g.tape.reshape(b, &[1, oc, 1, 1]);
    g.tape.add(y, b4)
}

/// Two 3x3 convs with a residual skip; channel-preserving.
pub fn init_resblock(store: &mut ParamStore, name: &str, c: usize, rng: &mut ChaCha8Rng) {
    init_conv(store, &format!("{name}.c1"), c, c, 3, rng);
    init_conv(store, &format!("{name}.c2"), c, c, 3, rng);
}

pub fn resblock_fwd(g: &mut Graph, name: &str, x: Var) -> Var {
    let h = conv_fwd(g, &format!("{name}.c1"), x, 1, 1);
    let h = g.tape.leaky_relu(h, 0.2);
    let h = conv_fwd(g, &format!("{name}.c2"), h, 1, 1);
    let h = g.tape.scale(h, 0.5);
    let s = g.tape.add(x, h);
    g.tape.leaky_relu(s, 0.2)
}

// ----- optimizer -----

pub struct Adam {
    m: HashMap<String, ArrayD<f64>>,
    v: HashMap<String, ArrayD<f64>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new() -> Self {
        Self {
            m: HashMap::new(),
            v: HashMap::new(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update over the provided gradients; frozen parameters are skipped.
    /// `row_masks` optionally zeroes gradient rows (first-axis indices) of a
    /// parameter before the update, for partially frozen tensors.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &HashMap<String, ArrayD<f64>>,
        lr: f64,
        row_masks: &HashMap<String, Vec<bool>>,
    ) -> Result<()> {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        let mut names: Vec<&String> = grads.keys().collect();
        names.sort();
        for name in names {
            if store.is_frozen(name) {
                continue;
            }
            let mut grad = grads[name].clone();
            if !grad.iter().all(|v| v.is_finite()) {
                return Err(EdTalkError::Numerical(format!(
                    "non-finite gradient for {name}"
                )));
            }
            if let Some(mask) = row_masks.get(name) {
                for (i, keep) in mask.iter().enumerate() {
                    if !keep {
                        grad.index_axis_mut(ndarray::Axis(0), i).fill(0.0);
                    }
                }
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
            *m = &*m * self.beta1 + &grad * (1.0 - self.beta1);
            *v = &*v * self.beta2 + &(&grad * &grad) * (1.0 - self.beta2);
            let mh = &*m / b1t;
            let vh = &*v / b2t;
            let update = &mh / &(vh.mapv(f64::sqrt) + self.eps);
            let mut value = store.get(name).clone();
            value = value - update * lr;
            store.set(name, value);
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn adam_descends_quadratic() {
        let mut store = ParamStore::new();
        store.insert("x", ndarray::arr1(&[5.0, -3.0]).into_dyn());
        let mut opt = Adam::new();
        for _ in 0..500 {
            let g = store.get("x").clone() * 2.0;
            let mut grads = HashMap::new();
            grads.insert("x".to_string(), g);
            opt.step(&mut store, &grads, 0.05, &HashMap::new()).unwrap();
        }
        assert!(store.get("x").iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn frozen_params_do_not_move() {
        let mut store = ParamStore::new();
        store.insert("a", ndarray::arr1(&[1.0]).into_dyn());
        store.insert("b", ndarray::arr1(&[1.0]).into_dyn());
        store.freeze("a");
        let mut opt = Adam::new();
        let mut grads = HashMap::new();
        grads.insert("a".to_string(), ndarray::arr1(&[1.0]).into_dyn());
        grads.insert("b".to_string(), ndarray::arr1(&[1.0]).into_dyn());
        opt.step(&mut store, &grads, 0.1, &HashMap::new()).unwrap();
        assert_eq!(store.get("a")[[0]], 1.0);
        assert!(store.get("b")[[0]] < 1.0);
    }

    #[test]
    fn row_mask_freezes_rows() {
        let mut store = ParamStore::new();
        store.insert("m", ndarray::arr2(&[[1.0, 1.0], [1.0, 1.0]]).into_dyn());
        let mut opt = Adam::new();
        let mut grads = HashMap::new();
        grads.insert("m".to_string(), ndarray::Array::ones(IxDyn(&[2, 2])));
        let mut masks = HashMap::new();
        masks.insert("m".to_string(), vec![false, true]);
        opt.step(&mut store, &grads, 0.1, &masks).unwrap();
        let m = store.get("m");
        assert_eq!(m[[0, 0]], 1.0);
        assert!(m[[1, 0]] < 1.0);
    }

    #[test]
    fn values_are_f32_representable() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        store.insert("w", randn(&mut rng, &[4, 4], 1.0));
        for v in store.get("w").iter() {
            assert_eq!(*v, *v as f32 as f64);
        }
    }

    #[test]
    fn graph_memoizes_parameter_leaves() {
        let mut store = ParamStore::new();
        store.insert("w", ndarray::arr1(&[2.0]).into_dyn());
        let mut g = Graph::new(&store);
        let a = g.p("w");
        let b = g.p("w");
        assert_eq!(a, b);
        // y = w*w + w : dy/dw = 2w + 1 = 5
        let prod = g.tape.mul(a, b);
        let y = g.tape.add(prod, a);
        let s = g.tape.sum(y);
        let grads = g.tape.backward(s);
        let pg = g.param_grads(&grads);
        assert!((pg["w"][[0]] - 5.0).abs() < 1e-12);
    }
}
