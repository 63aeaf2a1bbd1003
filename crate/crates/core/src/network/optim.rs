use super::model::{FnnModel, Gradients};

/// Plain gradient step `a ← a − γ·ā` on every parameter.
pub fn sgd_step(model: &mut FnnModel, grads: &Gradients, learning_rate: f64) {
    sgd_update(&mut model.param_slices_mut(), &grads.slices(), learning_rate);
}

pub fn sgd_update(params: &mut [&mut [f64]], grads: &[&[f64]], learning_rate: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        for (a, d) in p.iter_mut().zip(g.iter()) {
            *a -= learning_rate * d;
        }
    }
}

/// First and second moment estimates for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed state shaped like `shapes` (one entry per parameter slice).
    pub fn new(shapes: &[usize], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn for_model(model: &FnnModel, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let shapes: Vec<usize> = model
            .layers()
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Self::new(&shapes, beta1, beta2, epsilon)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], learning_rate: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

pub fn adam_step(model: &mut FnnModel, grads: &Gradients, state: &mut AdamState, learning_rate: f64) {
    state.update(&mut model.param_slices_mut(), &grads.slices(), learning_rate);
}
