use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::numeric::{Gradients, Graph, Tensor, Var};

pub type ParamId = usize;

/// Trainability class of a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Token/position embeddings, attention and feed-forward weights.
    Backbone,
    LayerNorm,
    Adapter,
    Generator,
    Annotator,
    /// BiLSTM, MLP and CRF.
    Task,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub group: ParamGroup,
}

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Tensor, group: ParamGroup) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            group,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect()
    }
}

/// Lazily places parameters into a graph as leaves (or constants when
/// frozen), remembering the handle for gradient collection.
pub struct Binder<'a> {
    store: &'a ParamStore,
    trainable: Option<&'a dyn Fn(ParamGroup) -> bool>,
    vars: Vec<Option<Var>>,
}

impl<'a> Binder<'a> {
    /// Every parameter bound as a differentiable leaf.
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            trainable: None,
            vars: vec![None; store.len()],
        }
    }

    /// Parameters of groups rejected by `trainable` are bound as constants.
    pub fn with_filter(store: &'a ParamStore, trainable: &'a dyn Fn(ParamGroup) -> bool) -> Self {
        Self {
            store,
            trainable: Some(trainable),
            vars: vec![None; store.len()],
        }
    }

    /// All parameters bound as constants.
    pub fn frozen(store: &'a ParamStore) -> Self {
        static NONE: fn(ParamGroup) -> bool = |_| false;
        Self {
            store,
            trainable: Some(&NONE),
            vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn var(&mut self, g: &mut Graph, id: ParamId) -> Var {
        if let Some(v) = self.vars[id] {
            return v;
        }
        let p = self.store.get(id);
        let v = match self.trainable {
            Some(f) if !f(p.group) => g.constant(p.value.clone()),
            _ => g.leaf(p.value.clone()),
        };
        self.vars[id] = Some(v);
        v
    }

    /// Adds this graph's parameter gradients into `acc`, scaled by `weight`.
    pub fn collect(&self, grads: &mut Gradients, acc: &mut [Tensor], weight: f64) {
        for (id, var) in self.vars.iter().enumerate() {
            if let Some(g) = var.and_then(|v| grads.take(v)) {
                for (a, b) in acc[id].data_mut().iter_mut().zip(g.data()) {
                    *a += weight * b;
                }
            }
        }
    }
}

/// Normal draws rejected outside two standard deviations.
pub fn truncated_normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Glorot-uniform `fan_in x fan_out` matrix.
pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches")
}

/// Square matrix with orthonormal rows (Gram-Schmidt on Gaussian draws).
pub fn orthogonal(size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(size);
    while rows.len() < size {
        let mut v: Vec<f64> = (0..size).map(|_| normal.sample(rng)).collect();
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
    }
    rows.concat()
}
