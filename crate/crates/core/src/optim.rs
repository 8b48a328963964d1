//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::nn::{Grads, TensorRef};

pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Adam over the given parameter tensors with zeroed moments.
pub fn build_optimizer(params: &[TensorRef<'_>], lr: f64, beta1: f64) -> Result<Adam> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be > 0, got {lr}"
        )));
    }
    if !(0.0..1.0).contains(&beta1) {
        return Err(Error::Config(format!(
            "beta1 must be in [0, 1), got {beta1}"
        )));
    }
    let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
    Ok(Adam {
        lr,
        beta1,
        beta2: DEFAULT_BETA2,
        eps: DEFAULT_EPS,
        t: 0,
        m: zeros.clone(),
        v: zeros,
    })
}

impl Adam {
    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Overrides the step size. Zero freezes the parameters while the moment
    /// estimates keep accumulating.
    pub fn set_learning_rate(&mut self, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be >= 0, got {lr}"
            )));
        }
        self.lr = lr;
        Ok(())
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub(crate) fn restore(&mut self, t: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<()> {
        let same = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
        };
        if !same(&m, &self.m) || !same(&v, &self.v) {
            return Err(Error::Checkpoint(
                "optimizer moments do not match the parameter layout".into(),
            ));
        }
        self.t = t;
        self.m = m;
        self.v = v;
        Ok(())
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &Grads) -> Result<()> {
        if params.len() != self.m.len() || grads.0.len() != self.m.len() {
            return Err(Error::shape(
                "Adam::step tensors",
                self.m.len(),
                format!("{} params / {} grads", params.len(), grads.0.len()),
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if p.len() != g.len() {
                return Err(Error::shape("Adam::step tensor", p.len(), g.len()));
            }
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
