use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Backend, Real};

/// Which time steps contribute to the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossMode {
    /// Mean of the per-step L1 losses.
    #[default]
    AllSteps,
    /// L1 on the final step only; earlier steps are trained solely through
    /// the feedback connections.
    LastStepOnly,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::AllSteps => "all_steps",
            LossMode::LastStepOnly => "last_step_only",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_steps" => Ok(LossMode::AllSteps),
            "last_step_only" => Ok(LossMode::LastStepOnly),
            other => Err(Error::Config(format!("unknown loss mode `{other}`"))),
        }
    }
}

fn l1<F: Real, B: Backend<F>>(be: &mut B, sr: &B::Value, hr: &B::Value) -> Result<B::Value> {
    let d = be.sub(hr, sr)?;
    let a = be.abs(&d);
    Ok(be.mean(&a))
}

/// `(1/T) Σ_t mean|HR_t − SR_t|`, or the last term alone.
pub fn loss_multi_step<F: Real, B: Backend<F>>(
    be: &mut B,
    srs: &[B::Value],
    hrs: &[B::Value],
    mode: LossMode,
) -> Result<B::Value> {
    if srs.len() != hrs.len() || srs.is_empty() {
        return Err(Error::shape("loss", format!("{} outputs against {} targets", srs.len(), hrs.len())));
    }
    match mode {
        LossMode::LastStepOnly => l1(be, srs.last().expect("non-empty"), hrs.last().expect("non-empty")),
        LossMode::AllSteps => {
            let mut total = l1(be, &srs[0], &hrs[0])?;
            for (sr, hr) in srs.iter().zip(hrs).skip(1) {
                let term = l1(be, sr, hr)?;
                total = be.add(&total, &term)?;
            }
            Ok(be.scale(&total, F::lit(1.0 / srs.len() as f64)))
        }
    }
}
