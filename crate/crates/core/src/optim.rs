//! Adam with decoupled weight decay.

use crate::autograd::Matrix;

#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamW {
    pub fn new(shapes: &[&Matrix], weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: shapes.iter().map(|p| Matrix::zeros(p.dim())).collect(),
            second: shapes.iter().map(|p| Matrix::zeros(p.dim())).collect(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Applies one update. `params` and `grads` must line up with the shapes
    /// the optimiser was built with.
    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix], lr: f64) {
        assert_eq!(params.len(), self.first.len(), "parameter count changed");
        assert_eq!(grads.len(), self.first.len(), "gradient count mismatch");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    *p -= lr * (update + wd * *p);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Matrix::from_elem((1, 2), 1.0);
        let mut opt = AdamW::new(&[&p], 0.0);
        let g = Matrix::from_shape_vec((1, 2), vec![0.5, -3.0]).unwrap();
        opt.step(vec![&mut p], &[g], 0.1);
        assert!((p[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((p[[0, 1]] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn decay_shrinks_parameters_without_gradient() {
        let mut p = Matrix::from_elem((1, 1), 2.0);
        let mut opt = AdamW::new(&[&p], 0.5);
        opt.step(vec![&mut p], &[Matrix::zeros((1, 1))], 0.1);
        assert!((p[[0, 0]] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn minimises_quadratic() {
        let mut p = Matrix::from_elem((1, 1), 5.0);
        let mut opt = AdamW::new(&[&p], 0.0);
        for _ in 0..2000 {
            let g = p.mapv(|x| 2.0 * (x - 1.5));
            opt.step(vec![&mut p], &[g], 0.05);
        }
        assert!((p[[0, 0]] - 1.5).abs() < 1e-3);
    }
}
