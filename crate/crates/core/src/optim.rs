/// Classical momentum SGD with L2 weight decay folded into the gradient:
/// `v <- mu v + (g + wd theta)`, `theta <- theta - lr v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(len: usize, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: vec![0.0; len],
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(theta.len(), grad.len());
        for ((t, g), v) in theta.iter_mut().zip(grad).zip(self.velocity.iter_mut()) {
            *v = self.momentum * *v + (g + self.weight_decay * *t);
            *t -= lr * *v;
        }
    }
}
