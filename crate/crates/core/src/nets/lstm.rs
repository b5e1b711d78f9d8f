use candle_core::{DType, Device, Tensor};

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::ops;

/// Hidden and cell state, each `(B, hidden)`.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize, dtype: DType, device: &Device) -> Result<Self> {
        Ok(Self {
            h: Tensor::zeros((batch, hidden), dtype, device)?,
            c: Tensor::zeros((batch, hidden), dtype, device)?,
        })
    }
}

/// Single-layer LSTM cell with gate order (input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct Lstm {
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
    hidden: usize,
}

impl Lstm {
    /// Weights and biases drawn from `U(-1/sqrt(hidden), 1/sqrt(hidden))`.
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let k = 1.0 / (hidden as f64).sqrt();
        Ok(Self {
            w_ih: store.uniform(&format!("{name}.w_ih"), &[4 * hidden, input], k)?,
            w_hh: store.uniform(&format!("{name}.w_hh"), &[4 * hidden, hidden], k)?,
            b_ih: store.uniform(&format!("{name}.b_ih"), &[4 * hidden], k)?,
            b_hh: store.uniform(&format!("{name}.b_hh"), &[4 * hidden], k)?,
            hidden,
        })
    }

    /// Builds a cell from explicit tensors (`w_ih: (4H, I)`, `w_hh: (4H, H)`).
    pub fn from_tensors(w_ih: Tensor, w_hh: Tensor, b_ih: Tensor, b_hh: Tensor) -> Result<Self> {
        let hidden = w_hh.dim(1)?;
        if w_ih.dim(0)? != 4 * hidden || w_hh.dim(0)? != 4 * hidden {
            return Err(Error::Shape("LSTM weights must have 4 * hidden rows".into()));
        }
        Ok(Self {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            hidden,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// One step: returns the new state and its hidden output `h`.
    pub fn step(&self, state: &LstmState, x: &Tensor) -> Result<(LstmState, Tensor)> {
        if state.h.dim(1)? != self.hidden || state.c.dim(1)? != self.hidden {
            return Err(Error::Shape(format!(
                "state width {} does not match hidden size {}",
                state.h.dim(1)?,
                self.hidden
            )));
        }
        let gates = x
            .matmul(&self.w_ih.t()?)?
            .broadcast_add(&self.b_ih)?
            .add(&state.h.matmul(&self.w_hh.t()?)?.broadcast_add(&self.b_hh)?)?;
        let hs = self.hidden;
        let i = ops::sigmoid(&gates.narrow(1, 0, hs)?)?;
        let f = ops::sigmoid(&gates.narrow(1, hs, hs)?)?;
        let g = gates.narrow(1, 2 * hs, hs)?.tanh()?;
        let o = ops::sigmoid(&gates.narrow(1, 3 * hs, hs)?)?;
        let c = ((f * &state.c)? + (i * g)?)?;
        let h = (o * c.tanh()?)?;
        Ok((LstmState { h: h.clone(), c }, h))
    }

    /// Runs over `(T, B, I)` from `state`, returning `(T, B, hidden)` outputs.
    pub fn sequence(&self, xs: &Tensor, state: LstmState) -> Result<(LstmState, Tensor)> {
        let t = xs.dim(0)?;
        let mut state = state;
        let mut outs = Vec::with_capacity(t);
        for step in 0..t {
            let (s, h) = self.step(&state, &xs.get(step)?)?;
            state = s;
            outs.push(h);
        }
        Ok((state, Tensor::stack(&outs, 0)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_cell(vals: [f64; 16]) -> Lstm {
        let t = |s: &[f64], r: usize, c: usize| {
            Tensor::from_vec(s.to_vec(), (r, c), &Device::Cpu).unwrap()
        };
        Lstm::from_tensors(
            t(&vals[0..4], 4, 1),
            t(&vals[4..8], 4, 1),
            Tensor::from_vec(vals[8..12].to_vec(), 4, &Device::Cpu).unwrap(),
            Tensor::from_vec(vals[12..16].to_vec(), 4, &Device::Cpu).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let cell = scalar_cell([0.0; 16]);
        let s = LstmState::zeros(1, 1, DType::F64, &Device::Cpu).unwrap();
        let x = Tensor::zeros((1, 1), DType::F64, &Device::Cpu).unwrap();
        let (_, h) = cell.step(&s, &x).unwrap();
        assert_eq!(h.flatten_all().unwrap().to_vec1::<f64>().unwrap(), vec![0.0]);
    }

    #[test]
    fn hand_computed_cell() {
        let vals = [
            0.5, -0.3, 0.8, 0.1, // w_ih (i, f, g, o)
            0.2, 0.4, -0.6, 0.7, // w_hh
            0.05, -0.1, 0.2, 0.0, // b_ih
            0.1, 0.3, -0.05, 0.2, // b_hh
        ];
        let cell = scalar_cell(vals);
        let (x, h0, c0) = (0.9, -0.4, 0.25);
        let state = LstmState {
            h: Tensor::from_vec(vec![h0], (1, 1), &Device::Cpu).unwrap(),
            c: Tensor::from_vec(vec![c0], (1, 1), &Device::Cpu).unwrap(),
        };
        let xt = Tensor::from_vec(vec![x], (1, 1), &Device::Cpu).unwrap();
        let (s, h) = cell.step(&state, &xt).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |k: usize| vals[k] * x + vals[4 + k] * h0 + vals[8 + k] + vals[12 + k];
        let (i, f, g, o) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
        let c1 = f * c0 + i * g;
        let h1 = o * c1.tanh();
        let got_h = h.flatten_all().unwrap().to_vec1::<f64>().unwrap()[0];
        let got_c = s.c.flatten_all().unwrap().to_vec1::<f64>().unwrap()[0];
        assert!((got_h - h1).abs() < 1e-9 && (got_c - c1).abs() < 1e-9);
    }

    #[test]
    fn long_rollout_stays_finite_and_deterministic() {
        let mut store = ParamStore::new(5, DType::F32);
        let cell = Lstm::new(&mut store, "lstm", 8, 16).unwrap();
        let x = Tensor::ones((100, 1, 8), DType::F32, &Device::Cpu).unwrap();
        let run = || {
            let s = LstmState::zeros(1, 16, DType::F32, &Device::Cpu).unwrap();
            cell.sequence(&x, s).unwrap().1.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite() && v.abs() < 1.0));
    }
}
