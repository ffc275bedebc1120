use ndarray::Array2;

use super::loss::Grads;
use super::model::{Arch, Model};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    m_eps: f64,
    v_eps: f64,
}

impl AdamState {
    pub fn new(model: &Model) -> AdamState {
        let zeros = || model.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        AdamState {
            step: 0,
            m: zeros(),
            v: zeros(),
            m_eps: 0.0,
            v_eps: 0.0,
        }
    }
}

#[inline]
fn update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, c1: f64, c2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
}

/// One bias-corrected Adam update. Epsilon is trained only for GIN.
pub fn adam_step(model: &mut Model, grads: &Grads, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let c1 = 1.0 - BETA1.powi(state.step as i32);
    let c2 = 1.0 - BETA2.powi(state.step as i32);
    for (l, w) in model.weights.iter_mut().enumerate() {
        let g = &grads.weights[l];
        let (m, v) = (&mut state.m[l], &mut state.v[l]);
        for (((p, &gi), mi), vi) in w.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            update(p, gi, mi, vi, lr, c1, c2);
        }
    }
    if model.arch == Arch::Gin {
        update(&mut model.epsilon, grads.epsilon, &mut state.m_eps, &mut state.v_eps, lr, c1, c2);
    }
}
