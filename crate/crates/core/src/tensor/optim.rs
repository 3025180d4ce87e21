use super::Matrix;
use crate::error::{Error, Result};

/// Trainable matrix with its gradient accumulator and optimizer state.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Option<Matrix>,
    moments: Option<Moments>,
}

#[derive(Clone, Debug)]
struct Moments {
    first: Matrix,
    second: Matrix,
    steps: u32,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        Parameter {
            name: name.into(),
            value,
            grad: None,
            moments: None,
        }
    }

    pub fn accumulate_grad(&mut self, g: &Matrix) -> Result<()> {
        match &mut self.grad {
            Some(acc) => acc.add_assign(g),
            None => {
                self.value.check_same_shape("accumulate_grad", g)?;
                self.grad = Some(g.clone());
                Ok(())
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    fn take_grad(&mut self) -> Result<Matrix> {
        self.grad
            .take()
            .ok_or_else(|| Error::contract(format!("parameter `{}` has no gradient", self.name)))
    }
}

/// Plain gradient step `p ← p − lr·∇p`; gradients are cleared afterwards.
pub fn sgd_step(params: &mut [&mut Parameter], lr: f64) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
        return Err(Error::contract(format!("parameter `{}` has no gradient", p.name)));
    }
    for p in params.iter_mut() {
        let g = p.take_grad()?;
        for (v, d) in p.value.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *v -= lr * d;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(AdamConfig),
}

impl Optimizer {
    pub fn step(&self, params: &mut [&mut Parameter]) -> Result<()> {
        match *self {
            Optimizer::Sgd { lr } => sgd_step(params, lr),
            Optimizer::Adam(cfg) => adam_step(params, cfg),
        }
    }
}

fn adam_step(params: &mut [&mut Parameter], cfg: AdamConfig) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
        return Err(Error::contract(format!("parameter `{}` has no gradient", p.name)));
    }
    for p in params.iter_mut() {
        let g = p.take_grad()?;
        let (rows, cols) = p.value.shape();
        let m = p.moments.get_or_insert_with(|| Moments {
            first: Matrix::zeros(rows, cols),
            second: Matrix::zeros(rows, cols),
            steps: 0,
        });
        m.steps += 1;
        let bias1 = 1.0 - cfg.beta1.powi(m.steps as i32);
        let bias2 = 1.0 - cfg.beta2.powi(m.steps as i32);
        let values = p.value.as_mut_slice();
        let first = m.first.as_mut_slice();
        let second = m.second.as_mut_slice();
        for (k, &d) in g.as_slice().iter().enumerate() {
            first[k] = cfg.beta1 * first[k] + (1.0 - cfg.beta1) * d;
            second[k] = cfg.beta2 * second[k] + (1.0 - cfg.beta2) * d * d;
            let m_hat = first[k] / bias1;
            let v_hat = second[k] / bias2;
            values[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Parameter {
        let mut p = Parameter::new("p", Matrix::filled(1, 1, v));
        p.grad = Some(Matrix::filled(1, 1, g));
        p
    }

    #[test]
    fn sgd_definition() {
        let mut p = scalar_param(1.0, 0.5);
        sgd_step(&mut [&mut p], 0.01).unwrap();
        assert!((p.value.get(0, 0) - 0.995).abs() < 1e-15);
        assert!(p.grad.is_none());
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut p = scalar_param(1.25, 3.0);
        sgd_step(&mut [&mut p], 0.0).unwrap();
        assert_eq!(p.value.get(0, 0), 1.25);
    }

    #[test]
    fn sgd_two_steps_are_linear() {
        let (lr, g) = (0.1, 0.3);
        let mut p = scalar_param(2.0, g);
        sgd_step(&mut [&mut p], lr).unwrap();
        p.grad = Some(Matrix::filled(1, 1, g));
        sgd_step(&mut [&mut p], lr).unwrap();
        assert!((p.value.get(0, 0) - (2.0 - 2.0 * lr * g)).abs() < 1e-15);
    }

    #[test]
    fn missing_grad_is_contract_error() {
        let mut p = Parameter::new("w", Matrix::zeros(2, 2));
        assert!(matches!(sgd_step(&mut [&mut p], 0.1), Err(Error::Contract(_))));
        let adam = Optimizer::Adam(AdamConfig::with_lr(0.1));
        assert!(matches!(adam.step(&mut [&mut p]), Err(Error::Contract(_))));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = scalar_param(1.0, 4.0);
        Optimizer::Adam(AdamConfig::with_lr(0.01)).step(&mut [&mut p]).unwrap();
        // bias-corrected first step is lr * g / (|g| + eps)
        assert!((p.value.get(0, 0) - (1.0 - 0.01)).abs() < 1e-9);
        let m = p.moments.as_ref().unwrap();
        assert_eq!(m.first.shape(), p.value.shape());
        assert_eq!(m.second.shape(), p.value.shape());
    }
}
