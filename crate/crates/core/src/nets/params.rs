//! Named, seeded parameter storage shared by every network.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Owns all trainable variables and non-trainable buffers (batch-norm
/// running statistics), keyed by dotted names such as `disp.enc3.conv1.w`.
///
/// The first path component is the parameter group (`encoder`, `lstm`,
/// `disp`, `pose`, `critic`, `patch`); optimizers select by group.
pub struct ParamStore {
    dtype: DType,
    device: Device,
    vars: BTreeMap<String, Var>,
    buffers: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            dtype,
            device: Device::Cpu,
            vars: BTreeMap::new(),
            buffers: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, values: Vec<f64>, dims: &[usize]) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        let t = Tensor::from_vec(values, dims, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let handle = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(handle)
    }

    /// Uniform `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier_uniform(
        &mut self,
        name: &str,
        dims: &[usize],
        fan_in: usize,
        fan_out: usize,
    ) -> Result<Tensor> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.uniform(name, dims, bound)
    }

    pub fn uniform(&mut self, name: &str, dims: &[usize], bound: f64) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        let values = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.insert(name, values, dims)
    }

    pub fn constant(&mut self, name: &str, dims: &[usize], value: f64) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        self.insert(name, vec![value; n], dims)
    }

    pub fn buffer(&mut self, name: &str, dims: &[usize], value: f64) -> Result<Var> {
        let n: usize = dims.iter().product();
        let t = Tensor::from_vec(vec![value; n], dims, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.buffers.insert(name.to_string(), var.clone());
        Ok(var)
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn buffers(&self) -> &BTreeMap<String, Var> {
        &self.buffers
    }

    /// Trainable variables whose group (first name component) is in `groups`.
    pub fn group_vars(&self, groups: &[&str]) -> Vec<(String, Var)> {
        self.vars
            .iter()
            .filter(|(name, _)| groups.contains(&group_of(name)))
            .map(|(n, v)| (n.clone(), v.clone()))
            .collect()
    }

    /// Distinct groups present, sorted.
    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = self.vars.keys().map(|n| group_of(n).to_string()).collect();
        g.dedup();
        g
    }

    pub fn num_parameters(&self, groups: &[&str]) -> usize {
        self.group_vars(groups)
            .iter()
            .map(|(_, v)| v.as_tensor().elem_count())
            .sum()
    }

    /// Overwrites a variable's value, checking the shape.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .or_else(|| self.buffers.get(name))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))?;
        if var.dims() != value.dims() {
            return Err(Error::Shape(format!(
                "parameter {name} has shape {:?}, value has {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }
}

pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_variance_matches_theory() {
        let mut store = ParamStore::new(7, DType::F64);
        // 64 x 32 x 3 x 3 conv: fan_in = 288, fan_out = 576.
        let w = store.xavier_uniform("g.w", &[64, 32, 3, 3], 288, 576).unwrap();
        let v: Vec<f64> = w.flatten_all().unwrap().to_vec1().unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let expected = 2.0 / (288.0 + 576.0);
        assert!((var / expected - 1.0).abs() < 0.2, "{var} vs {expected}");
    }

    #[test]
    fn seeding_is_reproducible_and_groups_are_sorted() {
        let mk = || {
            let mut s = ParamStore::new(3, DType::F32);
            s.uniform("pose.a", &[4], 1.0).unwrap();
            s.uniform("disp.b", &[4], 1.0).unwrap();
            s
        };
        let (a, b) = (mk(), mk());
        let va: Vec<f32> = a.var("disp.b").unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let vb: Vec<f32> = b.var("disp.b").unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(va, vb);
        assert_eq!(a.groups(), vec!["disp".to_string(), "pose".to_string()]);
        assert_eq!(a.group_vars(&["pose"]).len(), 1);
        assert!(a.set("pose.a", &Tensor::zeros(3, DType::F32, &Device::Cpu).unwrap()).is_err());
    }
}
