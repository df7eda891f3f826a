use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::{ops, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// The learning rate halves every this many iterations.
    pub halve_every: u64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr0: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, halve_every: 200_000 }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |b: f64| b > 0.0 && b < 1.0;
        let positive = |x: f64| x > 0.0;
        if !positive(self.lr0) || !open_unit(self.beta1) || !open_unit(self.beta2) {
            return Err(Error::Config(format!(
                "Adam needs lr0 > 0 and betas in (0, 1), got lr0 {} betas ({}, {})",
                self.lr0, self.beta1, self.beta2
            )));
        }
        if !positive(self.eps) || self.halve_every == 0 {
            return Err(Error::Config("Adam needs eps > 0 and halve_every > 0".into()));
        }
        Ok(())
    }
}

/// `lr0 · 0.5^floor(iter / halve_every)`.
pub fn lr_schedule(iter: u64, hyper: &AdamHyper) -> f64 {
    let halvings = (iter / hyper.halve_every).min(i32::MAX as u64) as i32;
    hyper.lr0 * 0.5f64.powi(halvings)
}

/// First and second moments per parameter plus the update counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub m: BTreeMap<String, Tensor<F>>,
    pub v: BTreeMap<String, Tensor<F>>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ParamStore<F>) -> Self {
        let zeros = || params.iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape()))).collect();
        AdamState { m: zeros(), v: zeros(), step: 0 }
    }
}

/// One bias-corrected Adam update at learning rate `lr_schedule(iter)`.
///
/// A parameter without an entry in `grads` is updated as if its gradient
/// were zero, so its moments still decay. Gradients for unknown names are
/// an error.
pub fn adam_step<F: Real>(
    params: &mut ParamStore<F>,
    grads: &BTreeMap<String, Tensor<F>>,
    state: &mut AdamState<F>,
    hyper: &AdamHyper,
    iter: u64,
) -> Result<()> {
    if let Some(extra) = grads.keys().find(|k| params.get(k).is_none()) {
        return Err(Error::MissingParam(extra.clone()));
    }
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let lr = lr_schedule(iter, hyper);
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    let (b1, b2) = (F::lit(hyper.beta1), F::lit(hyper.beta2));
    let (one, eps) = (F::one(), F::lit(hyper.eps));
    let (step_size, c2_sqrt) = (F::lit(lr / c1), F::lit(c2.sqrt()));

    for (name, p) in params.iter_mut() {
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape()));
        ops::check_same("adam", p.shape(), m.shape())?;
        let g = grads.get(name);
        if let Some(g) = g {
            ops::check_same("adam", p.shape(), g.shape())?;
        }
        let pd = p.data_mut();
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.map_or(F::zero(), |g| g.data()[i]);
            md[i] = b1 * md[i] + (one - b1) * gi;
            vd[i] = b2 * vd[i] + (one - b2) * gi * gi;
            // lr·m̂/(√v̂ + eps) with both corrections folded into scalars
            pd[i] -= step_size * md[i] / (vd[i].sqrt() / c2_sqrt + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves() {
        let h = AdamHyper::default();
        assert_eq!(lr_schedule(0, &h), 2e-4);
        assert_eq!(lr_schedule(199_999, &h), 2e-4);
        assert_eq!(lr_schedule(200_000, &h), 1e-4);
        assert_eq!(lr_schedule(400_000, &h), 5e-5);
    }

    #[test]
    fn hyper_validation() {
        assert!(AdamHyper::default().validate().is_ok());
        assert!(AdamHyper { beta1: 1.0, ..AdamHyper::default() }.validate().is_err());
        assert!(AdamHyper { lr0: 0.0, ..AdamHyper::default() }.validate().is_err());
    }
}
