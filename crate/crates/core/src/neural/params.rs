use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::tape::Gradients;

/// A trainable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    pub(crate) m: Array2<f64>,
    pub(crate) v: Array2<f64>,
}

impl Parameter {
    pub fn new(value: Array2<f64>) -> Self {
        let z = Array2::zeros(value.raw_dim());
        Self {
            grad: z.clone(),
            m: z.clone(),
            v: z,
            value,
        }
    }
}

/// Named parameters of one network, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    params: IndexMap<String, Parameter>,
    pub(crate) step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let name = name.into();
        assert!(
            !self.params.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        self.params.insert(name, Parameter::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub(crate) fn entry(&self, name: &str) -> Option<(&str, &Array2<f64>)> {
        self.params
            .get_key_value(name)
            .map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Optimizer steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Adds every gradient whose name belongs to this store; returns how
    /// many were applied.
    pub fn accumulate(&mut self, grads: &Gradients) -> usize {
        let mut hit = 0;
        for (name, g) in grads.iter() {
            if let Some(p) = self.params.get_mut(name) {
                p.grad += g;
                hit += 1;
            }
        }
        hit
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .map(|p| p.grad.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `±sqrt(3 / fan_in)`, i.e. variance `1 / fan_in`.
    FanIn(usize),
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: (usize, usize),
    pub init: Init,
}

pub fn init_parameters<R: Rng + ?Sized>(rng: &mut R, layout: &[ParamSpec]) -> ParameterStore {
    let mut store = ParameterStore::new();
    for spec in layout {
        let value = match spec.init {
            Init::Zeros => Array2::zeros(spec.shape),
            Init::FanIn(fan_in) => {
                let a = (3.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
                Array2::from_shape_simple_fn(spec.shape, || dist.sample(rng))
            }
        };
        store.insert(spec.name.clone(), value);
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> Vec<ParamSpec> {
        vec![
            ParamSpec {
                name: "w".into(),
                shape: (100, 100),
                init: Init::FanIn(100),
            },
            ParamSpec {
                name: "b".into(),
                shape: (1, 100),
                init: Init::Zeros,
            },
        ]
    }

    #[test]
    fn same_seed_same_store() {
        let a = init_parameters(&mut ChaCha8Rng::seed_from_u64(9), &layout());
        let b = init_parameters(&mut ChaCha8Rng::seed_from_u64(9), &layout());
        assert_eq!(a, b);
        let c = init_parameters(&mut ChaCha8Rng::seed_from_u64(10), &layout());
        assert_ne!(a, c);
    }

    #[test]
    fn biases_zero_and_weight_variance_matches_fan_in() {
        let s = init_parameters(&mut ChaCha8Rng::seed_from_u64(1), &layout());
        assert!(s.get("b").unwrap().iter().all(|&v| v == 0.0));
        let w = s.get("w").unwrap();
        assert_eq!(w.len(), 10_000);
        let mean = w.mean().unwrap();
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 1.0 / 100.0;
        assert!((var - target).abs() < 0.2 * target, "variance {var}");
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_rejected() {
        let mut s = ParameterStore::new();
        s.insert("a", Array2::zeros((1, 1)));
        s.insert("a", Array2::zeros((1, 1)));
    }
}
