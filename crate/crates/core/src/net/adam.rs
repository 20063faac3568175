use super::{GradTape, Layer, NetError, NetParams};

/// Adaptive-moment optimizer state for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub(crate) m: Vec<Layer>,
    pub(crate) v: Vec<Layer>,
}

impl Adam {
    pub fn new(params: &NetParams, lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &NetParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = GradTape::zeros_like(params).layers;
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step_count: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one bias-corrected update. A non-finite gradient leaves both
    /// parameters and moments untouched.
    pub fn step(&mut self, params: &mut NetParams, grads: &GradTape) -> Result<(), NetError> {
        if grads.layers.len() != params.layers.len()
            || grads
                .layers
                .iter()
                .zip(&params.layers)
                .any(|(g, p)| g.w.dim() != p.w.dim() || g.b.dim() != p.b.dim())
        {
            return Err(NetError::ShapeMismatch);
        }
        if !grads.is_finite() {
            return Err(NetError::NonFiniteGradient);
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            };
            ndarray::Zip::from(&mut p.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut p.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}
