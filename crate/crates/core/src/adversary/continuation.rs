//! RAMP continuation from the inverse law to the linear law.

use super::{Adversary, InnerSolution};
use crate::error::{Error, Result};
use crate::material::MaterialLaw;

#[derive(Debug, Clone)]
pub struct ContinuationStage {
    pub q: f64,
    pub solution: InnerSolution,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub stages: Vec<ContinuationStage>,
    /// Linear-law compliance at the last stage's field.
    pub lower_bound: f64,
    /// Inverse-law worst-case compliance of the first stage.
    pub upper_bound: f64,
}

impl ContinuationResult {
    pub fn last(&self) -> &InnerSolution {
        &self.stages.last().expect("at least two stages").solution
    }

    pub fn total_newton_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.solution.newton_iterations).sum()
    }
}

/// Solve the adversary for `q` from `(E0 − E_D)/E_D` down to `0` in `steps`
/// evenly spaced values, warm-starting each stage from the previous one.
///
/// `inverse` may supply an already computed inverse-law solution for the
/// same design, which then serves as the first stage.
pub fn ramp_continuation(
    adversary: &Adversary,
    rho_tilde: &[f64],
    steps: usize,
    inverse: Option<&InnerSolution>,
) -> Result<ContinuationResult> {
    if steps < 2 {
        return Err(Error::param("continuation steps", steps, "at least 2"));
    }
    let q_inv = adversary.params.q_inverse();
    let first = match inverse {
        Some(s) if s.law == MaterialLaw::Inverse && s.rho_tilde == rho_tilde => s.clone(),
        _ => adversary
            .clone()
            .with_law(MaterialLaw::Inverse)
            .solve(rho_tilde, None)?,
    };
    let upper_bound = first.compliance;
    let mut stages = vec![ContinuationStage {
        q: q_inv,
        solution: first,
    }];
    for k in 1..steps {
        let q = if k + 1 == steps {
            0.0
        } else {
            q_inv * (1.0 - k as f64 / (steps - 1) as f64)
        };
        let prev = &stages.last().expect("nonempty").solution;
        let sol = adversary
            .clone()
            .with_law(MaterialLaw::Ramp(q))
            .solve(rho_tilde, Some(prev))?;
        stages.push(ContinuationStage { q, solution: sol });
    }
    let lower_bound = stages.last().expect("nonempty").solution.compliance;
    Ok(ContinuationResult {
        stages,
        lower_bound,
        upper_bound,
    })
}
