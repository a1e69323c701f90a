//! Detection costs expressed through the outbreak probability `P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduced::ReducedState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Penalty paid when announcing before Pool 2 is infected.
    pub c_fa: f64,
    /// Cost per period of an undetected outbreak.
    pub c_delay: f64,
}

impl CostParams {
    pub fn new(c_fa: f64, c_delay: f64) -> Result<Self> {
        let costs = Self { c_fa, c_delay };
        costs.validate()?;
        Ok(costs)
    }

    /// `C_FA = 20`, `C_Delay = 1`.
    pub fn case_study() -> Self {
        Self {
            c_fa: 20.0,
            c_delay: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_fa > 0.0 && self.c_fa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "c_fa must be positive, got {}",
                self.c_fa
            )));
        }
        if !(self.c_delay > 0.0 && self.c_delay.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "c_delay must be positive, got {}",
                self.c_delay
            )));
        }
        Ok(())
    }
}

/// Expected false-alarm cost of announcing at probability `p`.
#[inline]
pub fn immediate_cost_at(p: f64, costs: &CostParams) -> f64 {
    costs.c_fa * (1.0 - p)
}

/// `C_FA (1 - P)` for the state `x`.
#[inline]
pub fn immediate_cost(x: &ReducedState, costs: &CostParams) -> f64 {
    immediate_cost_at(x.p, costs)
}

/// Delay costs accrued on `[0, tau)` plus the false-alarm cost at `tau`.
pub fn pathwise_cost(p_path: &[f64], tau: usize, costs: &CostParams) -> Result<f64> {
    if tau >= p_path.len() {
        return Err(Error::StoppingTimeOutOfRange {
            tau,
            len: p_path.len(),
        });
    }
    let delay: f64 = p_path[..tau].iter().map(|p| costs.c_delay * p).sum();
    Ok(delay + immediate_cost_at(p_path[tau], costs))
}
