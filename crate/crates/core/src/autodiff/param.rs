use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a parameter inside one [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub(crate) store: u64,
    pub(crate) index: usize,
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named trainable tensors with accumulated gradients.
///
/// Gradients accumulate across [`crate::autodiff::Graph::backward_into`]
/// calls until [`ParamStore::zero_grad`].
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    /// The clone is a distinct store: handles from the original do not
    /// resolve against it.
    fn clone(&self) -> Self {
        ParamStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
            by_name: self.by_name.clone(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub(crate) fn store_id(&self) -> u64 {
        self.id
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::contract(
                "ParamStore::add",
                format!("duplicate parameter name {name:?}"),
            ));
        }
        let index = self.params.len();
        self.by_name.insert(name.clone(), index);
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name, value, grad });
        Ok(ParamId {
            store: self.id,
            index,
        })
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        assert_eq!(id.store, self.id, "parameter handle from another store");
        &self.params[id.index]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        assert_eq!(id.store, self.id, "parameter handle from another store");
        &mut self.params[id.index]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&index| ParamId {
            store: self.id,
            index,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(|index| ParamId {
            store: self.id,
            index,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, index: usize, grad: &Tensor) {
        self.params[index].grad.add_assign(grad);
    }

    /// Replaces parameter values from `(name, tensor)` records. Every stored
    /// parameter must be present with a matching shape; extra records are
    /// ignored so one checkpoint can serve several stores.
    pub fn load(&mut self, records: &[(String, Tensor)]) -> Result<()> {
        let lookup: HashMap<&str, &Tensor> = records.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for p in &mut self.params {
            let t = lookup.get(p.name.as_str()).ok_or_else(|| {
                Error::Checkpoint(format!("parameter {:?} missing from checkpoint", p.name))
            })?;
            if t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?}: model expects shape {:?}, checkpoint has {:?}",
                    p.name,
                    p.value.shape(),
                    t.shape()
                )));
            }
            p.value = (*t).clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over every parameter of one store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = |p: &Parameter| vec![0.0; p.value.len()];
        Adam {
            config,
            step: 0,
            m: store.iter().map(zeros).collect(),
            v: store.iter().map(zeros).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients. Gradients are left
    /// in place; call [`ParamStore::zero_grad`] before the next accumulation.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        assert_eq!(store.len(), self.m.len(), "optimizer built for another store");
        if let Some(bad) = store.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::Training {
                iteration: self.step as usize + 1,
                msg: format!("non-finite gradient for parameter {:?}", bad.name),
            });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in store.params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let values = p.value.data_mut();
            for (i, &g) in p.grad.data().iter().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::zeros(&[2])).unwrap();
        assert!(s.add("a", Tensor::zeros(&[3])).is_err());
        assert_eq!(s.id_of("a").map(|id| s.get(id).value.len()), Some(2));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        s.get_mut(id).grad = Tensor::new(&[3], vec![0.3, -7.0, 1e-3]).unwrap();
        let mut adam = Adam::new(&s, AdamConfig { lr: 0.01, ..AdamConfig::default() });
        adam.step(&mut s).unwrap();
        let moved: Vec<f64> = s.get(id).value.data().iter().zip([1.0, -2.0, 0.5]).map(|(a, b)| a - b).collect();
        assert!((moved[0] + 0.01).abs() < 1e-6);
        assert!((moved[1] - 0.01).abs() < 1e-6);
        assert!((moved[2] + 0.01).abs() < 1e-4);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::new(&[2], vec![0.7, -0.1]).unwrap()).unwrap();
        let mut adam = Adam::new(&s, AdamConfig::default());
        for _ in 0..50 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.get(id).value.data(), &[0.7, -0.1]);
    }

    #[test]
    fn scalar_quadratic_converges() {
        // f(p) = p², gradient 2p, from p = 1.
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::scalar(1.0)).unwrap();
        let mut adam = Adam::new(&s, AdamConfig { lr: 0.1, ..AdamConfig::default() });
        for _ in 0..100 {
            let p = s.get(id).value.item();
            s.get_mut(id).grad = Tensor::scalar(2.0 * p);
            adam.step(&mut s).unwrap();
        }
        assert!(s.get(id).value.item().abs() < 0.1);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(1.0)).unwrap();
        s.get_mut(id).grad.data_mut()[0] = f64::NAN;
        let mut adam = Adam::new(&s, AdamConfig::default());
        let err = adam.step(&mut s).unwrap_err();
        assert!(err.to_string().contains("\"w\""));
    }
}
