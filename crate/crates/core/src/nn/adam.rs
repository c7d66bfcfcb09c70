use super::Real;

/// Adam with bias correction. Moment buffers are created lazily on the
/// first step and keyed by parameter position.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first: Vec::new(), second: Vec::new() }
    }

    /// Applies one update; every gradient is multiplied by `grad_scale`
    /// first (e.g. `1 / batch`).
    pub fn step(&mut self, params: Vec<&mut [T]>, grads: &[Vec<T>], grad_scale: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let corr1 = T::of(1.0 - self.beta1.powi(self.step as i32));
        let corr2 = T::of(1.0 - self.beta2.powi(self.step as i32));
        let lr = T::of(self.learning_rate);
        let eps = T::of(self.eps);
        let scale = T::of(grad_scale);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for j in 0..p.len() {
                let gj = g[j] * scale;
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let mhat = m[j] / corr1;
                let vhat = v[j] / corr2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
