use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Real;

/// Optimizer hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<T>> = sizes.into_iter().map(|n| vec![T::zero(); n]).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update:
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
/// ```
pub fn adam_step<T: Real>(
    params: &mut [&mut [T]],
    grads: &[Vec<T>],
    st: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != st.m.len() || st.m.len() != st.v.len() {
        return Err(Error::Shape(format!(
            "adam: {} parameter tensors, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            st.m.len()
        )));
    }
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&st.m).enumerate() {
        if p.len() != g.len() || p.len() != m.len() || p.len() != st.v[i].len() {
            return Err(Error::Shape(format!(
                "adam: tensor {i} has {} values but gradient {} and moments {}",
                p.len(),
                g.len(),
                m.len()
            )));
        }
    }
    st.t += 1;
    let t = st.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let step = T::from_f64_lossy(cfg.lr / c1);
    let inv_c2 = T::from_f64_lossy(1.0 / c2);
    let eps = T::from_f64_lossy(cfg.eps);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(st.m.iter_mut().zip(st.v.iter_mut()))
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let v_hat = (v[i] * inv_c2).max(T::zero());
            p[i] -= step * m[i] / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
