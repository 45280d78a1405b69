//! Adam and the step-decay learning-rate schedule.

use crate::error::{Error, Result};
use crate::segnet::{ParamSet, Real};
use crate::trainer::TrainConfig;

/// `base_lr / decay_factor ^ floor(epoch / decay_every)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::InvalidInput(format!(
            "epoch {epoch} outside 0..{}",
            cfg.epochs
        )));
    }
    let steps = (epoch / cfg.lr_decay_every) as i32;
    Ok(cfg.base_lr / cfg.lr_decay_factor.powi(steps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates mirroring a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub step: u64,
    pub hyper: AdamHyper,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self::with_hyper(params, AdamHyper::default())
    }

    pub fn with_hyper(params: &ParamSet<T>, hyper: AdamHyper) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    params.check_compatible(grads)?;
    params.check_compatible(&state.m)?;
    for t in grads.tensors() {
        if let Some(k) = t.data.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {}[{k}] is {} at Adam step {}",
                t.name,
                t.data[k],
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let AdamHyper { beta1, beta2, eps } = state.hyper;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
    let (lr_t, c1_t, c2_t, eps_t) = (T::of(lr), T::of(c1), T::of(c2), T::of(eps));

    let values = params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut().zip(state.v.values_mut()));
    for ((p, g), (m, v)) in values {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        let m_hat = *m / c1_t;
        let v_hat = *v / c2_t;
        *p -= lr_t * m_hat / (v_hat.sqrt() + eps_t);
    }
    Ok(())
}
