//! Adam and plain SGD over named variables, with state that can be stored in
//! a checkpoint.

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::{Error, Result};
use crate::nets::Block;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    params: AdamParams,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(params: AdamParams) -> Self {
        Self {
            params,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Updates every variable in `vars` that has a gradient.
    pub fn step(&mut self, vars: &[(String, Var)], grads: &GradStore) -> Result<()> {
        self.t += 1;
        let p = self.params;
        let bc1 = 1.0 - p.beta1.powi(self.t as i32);
        let bc2 = 1.0 - p.beta2.powi(self.t as i32);
        for (name, var) in vars {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            // Gradients can carry the graph that produced them.
            let g = &g.detach();
            let m = match self.m.get(name) {
                Some(m) => ((m * p.beta1)? + (g * (1.0 - p.beta1))?)?,
                None => (g * (1.0 - p.beta1))?,
            };
            let v = match self.v.get(name) {
                Some(v) => ((v * p.beta2)? + (g.sqr()? * (1.0 - p.beta2))?)?,
                None => (g.sqr()? * (1.0 - p.beta2))?,
            };
            let denom = ((&v / bc2)?.sqrt()? + p.eps)?;
            let update = ((&m / bc1)? / denom)?;
            var.set(&(var.as_tensor().detach() - (update * p.lr)?)?)?;
            self.m.insert(name.clone(), m);
            self.v.insert(name.clone(), v);
        }
        Ok(())
    }

    /// State as checkpoint blocks under `prefix`.
    pub fn export(&self, prefix: &str) -> Result<BTreeMap<String, Block>> {
        let mut out = BTreeMap::new();
        out.insert(format!("{prefix}/t"), Block::scalar(self.t as f64));
        for (n, m) in &self.m {
            out.insert(format!("{prefix}/m/{n}"), Block::from_tensor(m)?);
        }
        for (n, v) in &self.v {
            out.insert(format!("{prefix}/v/{n}"), Block::from_tensor(v)?);
        }
        Ok(out)
    }

    /// Restores state written by [`Adam::export`]; moment shapes must match
    /// the variables they belong to.
    pub fn import(&mut self, prefix: &str, blocks: &BTreeMap<String, Block>, vars: &[(String, Var)]) -> Result<()> {
        let t = blocks
            .get(&format!("{prefix}/t"))
            .and_then(Block::as_scalar)
            .ok_or_else(|| Error::Config(format!("checkpoint has no {prefix}/t")))?;
        self.t = t as u64;
        self.m.clear();
        self.v.clear();
        for (name, var) in vars {
            for (kind, map) in [("m", &mut self.m), ("v", &mut self.v)] {
                if let Some(b) = blocks.get(&format!("{prefix}/{kind}/{name}")) {
                    if b.dims != var.dims() {
                        return Err(Error::Shape(format!(
                            "{prefix}/{kind}/{name}: {:?} vs parameter {:?}",
                            b.dims,
                            var.dims()
                        )));
                    }
                    map.insert(name.clone(), b.to_tensor(var.dtype(), var.device())?);
                }
            }
        }
        Ok(())
    }
}

pub struct Sgd {
    pub lr: f64,
    t: u64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self { lr, t: 0 }
    }

    pub fn step(&mut self, vars: &[(String, Var)], grads: &GradStore) -> Result<()> {
        self.t += 1;
        for (_, var) in vars {
            if let Some(g) = grads.get(var.as_tensor()) {
                var.set(&(var.as_tensor().detach() - (g.detach() * self.lr)?)?)?;
            }
        }
        Ok(())
    }

    pub fn export(&self, prefix: &str) -> BTreeMap<String, Block> {
        BTreeMap::from([(format!("{prefix}/t"), Block::scalar(self.t as f64))])
    }

    pub fn import(&mut self, prefix: &str, blocks: &BTreeMap<String, Block>) -> Result<()> {
        self.t = blocks
            .get(&format!("{prefix}/t"))
            .and_then(Block::as_scalar)
            .ok_or_else(|| Error::Config(format!("checkpoint has no {prefix}/t")))? as u64;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let x = Var::from_slice(&[1.0f64, -2.0], 2, &Device::Cpu).unwrap();
        let vars = vec![("x".to_string(), x.clone())];
        let grads = x.as_tensor().sqr().unwrap().sum_all().unwrap().backward().unwrap();
        let mut opt = Adam::new(AdamParams {
            lr: 0.1,
            ..Default::default()
        });
        opt.step(&vars, &grads).unwrap();
        let v: Vec<f64> = x.as_tensor().to_vec1().unwrap();
        assert!((v[0] - 0.9).abs() < 1e-6 && (v[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_a_quadratic_and_state_round_trips() {
        let x = Var::from_slice(&[3.0f64], 1, &Device::Cpu).unwrap();
        let vars = vec![("x".to_string(), x.clone())];
        let mut opt = Adam::new(AdamParams {
            lr: 0.05,
            ..Default::default()
        });
        for _ in 0..400 {
            let g = x.as_tensor().sqr().unwrap().sum_all().unwrap().backward().unwrap();
            opt.step(&vars, &g).unwrap();
        }
        assert!(x.as_tensor().to_vec1::<f64>().unwrap()[0].abs() < 1e-2);
        let blocks = opt.export("opt").unwrap();
        let mut other = Adam::new(AdamParams::default());
        other.import("opt", &blocks, &vars).unwrap();
        assert_eq!(other.steps_taken(), 400);
        assert_eq!(other.export("opt").unwrap(), blocks);
    }

    #[test]
    fn sgd_step() {
        let x = Var::from_slice(&[1.0f64], 1, &Device::Cpu).unwrap();
        let g = x.as_tensor().sqr().unwrap().sum_all().unwrap().backward().unwrap();
        Sgd::new(0.25).step(&[("x".into(), x.clone())], &g).unwrap();
        assert_eq!(x.as_tensor().to_vec1::<f64>().unwrap(), vec![0.5]);
    }
}
