use crate::error::{Error, Result};
use crate::nn::{ParamRole, ParamTensor};

/// AdaDelta hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaDeltaConfig {
    pub rho: f32,
    pub epsilon: f32,
    /// L2 coefficient added to the gradient of non-bias parameters.
    pub weight_decay: f32,
}

/// Running averages of squared gradients and squared updates, one buffer
/// per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub sq_grad: Vec<Vec<f32>>,
    pub sq_update: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(params: &[ParamTensor]) -> Self {
        Self {
            sq_grad: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            sq_update: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }
}

/// First element index that the optimizer may touch: the empty-space row of
/// an embedding table is frozen.
fn first_trainable(p: &ParamTensor) -> usize {
    match p.role {
        ParamRole::Embedding => p.value.row_width(),
        _ => 0,
    }
}

/// One AdaDelta update using each parameter's `grad` buffer:
///
/// ```text
/// g      = grad + weight_decay * x        (bias-free parameters only)
/// E[g²]  = rho E[g²] + (1 - rho) g²
/// dx     = -sqrt(E[dx²] + eps) / sqrt(E[g²] + eps) * g
/// E[dx²] = rho E[dx²] + (1 - rho) dx²
/// x      = x + dx
/// ```
///
/// Nothing is modified if any gradient entry is non-finite.
pub fn adadelta_step(params: &mut [ParamTensor], state: &mut OptimizerState, cfg: &AdaDeltaConfig) -> Result<()> {
    for p in params.iter() {
        let decay = if p.role == ParamRole::Bias { 0.0 } else { cfg.weight_decay };
        let start = first_trainable(p);
        let bad = p.grad.data()[start..]
            .iter()
            .zip(&p.value.data()[start..])
            .any(|(&g, &x)| !(if decay != 0.0 { g + decay * x } else { g }).is_finite());
        if bad {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    let (rho, eps) = (cfg.rho, cfg.epsilon);
    for (i, p) in params.iter_mut().enumerate() {
        let decay = if p.role == ParamRole::Bias { 0.0 } else { cfg.weight_decay };
        let start = first_trainable(p);
        let sq_g = &mut state.sq_grad[i][start..];
        let sq_dx = &mut state.sq_update[i][start..];
        let grad = &p.grad.data()[start..];
        let value = &mut p.value.data_mut()[start..];
        for j in 0..value.len() {
            let mut g = grad[j];
            if decay != 0.0 {
                g += decay * value[j];
            }
            sq_g[j] = rho * sq_g[j] + (1.0 - rho) * g * g;
            let dx = -(sq_dx[j] + eps).sqrt() / (sq_g[j] + eps).sqrt() * g;
            sq_dx[j] = rho * sq_dx[j] + (1.0 - rho) * dx * dx;
            value[j] += dx;
        }
    }
    Ok(())
}
