//! Outer design loop.
//!
//! [`nominal_solve`] runs plain SIMP compliance minimization, which gives
//! the reference topology and compliance. [`optimize`] then alternates a
//! warm-started adversary solve, the closed-form gradient of the worst-case
//! compliance and an MMA update. [`evaluate_report`] compares the two
//! topologies under reference and worst-case degradation.

mod mma;

#[cfg(test)]
mod tests;

pub use mma::{mma_step, LinearConstraint, MmaSettings, MmaState};

use crate::adversary::{
    ramp_continuation, Adversary, BarrierConfig, InnerSolution, InnerStatus, TIKHONOV_MU_FLOOR,
};
use crate::error::{check_len, Error, Result};
use crate::fe::FeModel;
use crate::filter::DensityFilter;
use crate::material::{young, MaterialLaw, MaterialParams};
use crate::uncertainty::UncertaintySet;

/// Stopping rule and MMA parameters of both design loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterSettings {
    pub max_iter: usize,
    /// Stop once `max |Δρ|` falls below this.
    pub change_tol: f64,
    pub mma: MmaSettings,
}

impl Default for OuterSettings {
    fn default() -> Self {
        OuterSettings {
            max_iter: 500,
            change_tol: 1e-3,
            mma: MmaSettings::default(),
        }
    }
}

impl OuterSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", 0, "at least 1"));
        }
        if !(self.change_tol > 0.0) {
            return Err(Error::param("change_tol", self.change_tol, "positive"));
        }
        self.mma.validate()
    }
}

/// Pseudo-densities with their filtered image.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignField {
    pub rho: Vec<f64>,
    pub rho_tilde: Vec<f64>,
    pub rho_min: f64,
    pub volume_fraction: f64,
}

/// Filtered densities of a field in `[rho_min, 1]`, with the roundoff of
/// the weighted average clipped back into that range.
pub fn filtered(filter: &DensityFilter, rho: &[f64], rho_min: f64) -> Result<Vec<f64>> {
    let mut rt = filter.apply(rho)?;
    for r in &mut rt {
        *r = r.clamp(rho_min, 1.0);
    }
    Ok(rt)
}

impl DesignField {
    pub fn new(filter: &DensityFilter, rho: Vec<f64>, rho_min: f64, volume_fraction: f64) -> Result<Self> {
        if !(rho_min > 0.0 && rho_min < 1.0) {
            return Err(Error::param("rho_min", rho_min, "in (0, 1)"));
        }
        if !(volume_fraction > 0.0 && volume_fraction <= 1.0) {
            return Err(Error::param("volume_fraction", volume_fraction, "in (0, 1]"));
        }
        if rho.iter().any(|&r| !(r >= rho_min && r <= 1.0)) {
            return Err(Error::param("rho", "out of range", "in [rho_min, 1]"));
        }
        let rho_tilde = filtered(filter, &rho, rho_min)?;
        Ok(DesignField {
            rho,
            rho_tilde,
            rho_min,
            volume_fraction,
        })
    }

    /// Constant field at the volume bound.
    pub fn uniform(filter: &DensityFilter, rho_min: f64, volume_fraction: f64) -> Result<Self> {
        let r = volume_fraction.max(rho_min);
        Self::new(filter, vec![r; filter.len()], rho_min, volume_fraction)
    }

    pub fn set_rho(&mut self, filter: &DensityFilter, rho: Vec<f64>) -> Result<()> {
        check_len("density vector", self.rho.len(), rho.len())?;
        self.rho_tilde = filtered(filter, &rho, self.rho_min)?;
        self.rho = rho;
        Ok(())
    }

    /// `Σ v_e ρ_e / |Ω|`.
    pub fn volume(&self, shares: &[f64]) -> f64 {
        self.rho.iter().zip(shares).map(|(r, s)| r * s).sum()
    }
}

/// Everything that defines one robust optimization run.
#[derive(Debug, Clone)]
pub struct RobustProblem {
    pub model: FeModel,
    pub filter: DensityFilter,
    pub params: MaterialParams,
    pub set: UncertaintySet,
    pub volume_fraction: f64,
    pub rho_min: f64,
    pub barrier: BarrierConfig,
    pub outer: OuterSettings,
    /// Tikhonov weight of the adversary; zero disables it.
    pub tikhonov: f64,
}

impl RobustProblem {
    pub fn validate(&self) -> Result<()> {
        check_len("filter", self.model.n_elements(), self.filter.len())?;
        self.params.validate()?;
        self.set.validate()?;
        self.barrier.validate()?;
        self.outer.validate()?;
        if !(self.volume_fraction > 0.0 && self.volume_fraction <= 1.0) {
            return Err(Error::param("volume_fraction", self.volume_fraction, "in (0, 1]"));
        }
        if !(self.rho_min > 0.0 && self.rho_min < 1.0) {
            return Err(Error::param("rho_min", self.rho_min, "in (0, 1)"));
        }
        if !(self.tikhonov >= 0.0 && self.tikhonov.is_finite()) {
            return Err(Error::param("tikhonov", self.tikhonov, "nonnegative"));
        }
        Ok(())
    }

    pub fn adversary(&self) -> Adversary<'_> {
        let adversary = Adversary::new(&self.model, self.params, self.set).with_config(self.barrier);
        if self.tikhonov > 0.0 {
            let barrier = BarrierConfig {
                mu_target: self.barrier.mu_target.min(TIKHONOV_MU_FLOOR),
                ..self.barrier
            };
            adversary.with_tikhonov(self.tikhonov).with_config(barrier)
        } else {
            adversary
        }
    }

    pub fn with_set(&self, set: UncertaintySet) -> Self {
        RobustProblem { set, ..self.clone() }
    }

    fn shares(&self) -> Vec<f64> {
        self.model.mesh().volume_shares()
    }
}

/// One line of an optimization history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Compliance at the start of the iteration (worst case in the robust loop).
    pub objective: f64,
    pub volume: f64,
    /// `max |Δρ|` of the update taken in this iteration.
    pub change: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct NominalResult {
    pub design: DesignField,
    pub compliance: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub nominal: NominalResult,
    pub design: DesignField,
    /// Worst case of the final design.
    pub inner: InnerSolution,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn volume_step(
    problem: &RobustProblem,
    state: &mut MmaState,
    design: &DesignField,
    grad: &[f64],
    shares: &[f64],
) -> Result<Vec<f64>> {
    let n = design.rho.len();
    let value = design.volume(shares) - design.volume_fraction;
    mma_step(
        state,
        &design.rho,
        grad,
        LinearConstraint {
            value,
            gradient: shares,
        },
        &vec![problem.rho_min; n],
        &vec![1.0; n],
    )
}

/// Compliance and its filtered-density gradient with undegraded material.
fn nominal_compliance(problem: &RobustProblem, rho_tilde: &[f64]) -> Result<(f64, Vec<f64>)> {
    let model = &problem.model;
    let e0 = problem.params.e0;
    let moduli: Vec<f64> = rho_tilde.iter().map(|&r| problem.params.simp(r) * e0).collect();
    let k = model.assemble(&moduli)?;
    let u = model.solve_state(&k)?;
    let energies = model.element_energies(&u);
    let grad = rho_tilde
        .iter()
        .zip(&energies)
        .map(|(&r, q)| -problem.params.simp_derivative(r) * e0 * q)
        .collect();
    Ok((crate::fe::compliance(model.force(), &u), grad))
}

/// Standard SIMP compliance minimization, started from the uniform field
/// and run until `max |Δρ|` drops below the tolerance.
pub fn nominal_solve(problem: &RobustProblem) -> Result<NominalResult> {
    problem.validate()?;
    let shares = problem.shares();
    let mut design = DesignField::uniform(&problem.filter, problem.rho_min, problem.volume_fraction)?;
    let mut state = MmaState::new(design.rho.len(), problem.outer.mma);
    let mut history = Vec::new();
    let mut converged = false;
    for iteration in 1..=problem.outer.max_iter {
        let (compliance, grad_filtered) = nominal_compliance(problem, &design.rho_tilde)?;
        let grad = problem.filter.chain_transpose(&grad_filtered)?;
        let next = volume_step(problem, &mut state, &design, &grad, &shares)?;
        let change = max_change(&next, &design.rho);
        history.push(IterationRecord {
            iteration,
            objective: compliance,
            volume: design.volume(&shares),
            change,
            newton_iterations: 0,
        });
        design.set_rho(&problem.filter, next)?;
        if change < problem.outer.change_tol {
            converged = true;
            break;
        }
    }
    let (compliance, _) = nominal_compliance(problem, &design.rho_tilde)?;
    Ok(NominalResult {
        design,
        compliance,
        history,
        converged,
    })
}

/// Gradient of the worst-case value with respect to the filtered densities:
/// `−p ρ̃^{p−1} E(δ) u_eᵀK̂u_e − λ ∂g/∂ρ̃ − ν ∂h/∂ρ̃`, evaluated at the
/// maximizer. No adjoint solve is needed because the inner problem is
/// solved to stationarity.
pub fn marginal_gradient_filtered(adversary: &Adversary, rho_tilde: &[f64], inner: &InnerSolution) -> Result<Vec<f64>> {
    let model = adversary.model;
    check_len("filtered densities", model.n_elements(), rho_tilde.len())?;
    if inner.rho_tilde != rho_tilde {
        return Err(Error::StaleInnerSolution("computed for a different design".into()));
    }
    if inner.law != adversary.law {
        return Err(Error::StaleInnerSolution("computed with a different material law".into()));
    }
    match inner.status {
        InnerStatus::Converged | InnerStatus::Trivial => {}
        InnerStatus::Stagnated => {
            return Err(Error::StaleInnerSolution(format!(
                "inner solve stopped early (stationarity {:e})",
                inner.residuals.stationarity
            )))
        }
    }
    let r = &inner.residuals;
    let cfg = &adversary.config;
    if inner.status == InnerStatus::Converged
        && (r.stationarity > cfg.tol || r.state > cfg.constr_viol_tol || r.feasibility > cfg.constr_viol_tol)
    {
        return Err(Error::StaleInnerSolution(format!(
            "residuals above tolerance (stationarity {:e}, state {:e}, feasibility {:e})",
            r.stationarity, r.state, r.feasibility
        )));
    }
    let params = &adversary.params;
    let energies = model.element_energies(&inner.u);
    let ctx = adversary.context(rho_tilde)?;
    let budget = adversary.set.grad_rho(&ctx, &inner.delta)?;
    let mut grad: Vec<f64> = (0..rho_tilde.len())
        .map(|e| {
            let modulus = young(inner.delta[e], inner.law, params);
            -params.simp_derivative(rho_tilde[e]) * modulus * energies[e] - inner.lambda * budget.eq[e]
        })
        .collect();
    if let Some(h) = budget.ineq {
        for (g, dh) in grad.iter_mut().zip(h) {
            *g -= inner.nu * dh;
        }
    }
    Ok(grad)
}

/// [`marginal_gradient_filtered`] mapped back to the unfiltered densities.
pub fn marginal_gradient(
    adversary: &Adversary,
    filter: &DensityFilter,
    design: &DesignField,
    inner: &InnerSolution,
) -> Result<Vec<f64>> {
    let g = marginal_gradient_filtered(adversary, &design.rho_tilde, inner)?;
    filter.chain_transpose(&g)
}

/// Robust loop without progress reporting.
pub fn optimize(problem: &RobustProblem) -> Result<RunResult> {
    optimize_with(problem, None, |_, _| {})
}

/// Robust loop: nominal SIMP, then `{adversary, marginal gradient, MMA}`
/// until `max |Δρ|` is below the tolerance or the iteration limit is hit.
///
/// `nominal` may supply a precomputed nominal result (a budget sweep shares
/// one). `observer` sees every accepted iteration together with the design
/// it was evaluated at, so a caller can persist the last good iterate.
/// Errors carry the failing stage.
pub fn optimize_with(
    problem: &RobustProblem,
    nominal: Option<NominalResult>,
    mut observer: impl FnMut(&IterationRecord, &DesignField),
) -> Result<RunResult> {
    problem.validate()?;
    let nominal = match nominal {
        Some(n) => n,
        None => nominal_solve(problem).map_err(|e| e.in_stage("nominal"))?,
    };
    let adversary = problem.adversary();
    let shares = problem.shares();
    let mut design = nominal.design.clone();
    let mut history = Vec::new();
    if problem.set.is_trivial() {
        let inner = adversary
            .solve(&design.rho_tilde, None)
            .map_err(|e| e.in_stage("adversary"))?;
        return Ok(RunResult {
            nominal,
            design,
            inner,
            history,
            converged: true,
        });
    }
    let mut state = MmaState::new(design.rho.len(), problem.outer.mma);
    let mut warm: Option<InnerSolution> = None;
    let mut converged = false;
    for iteration in 1..=problem.outer.max_iter {
        let inner = adversary
            .solve(&design.rho_tilde, warm.as_ref())
            .map_err(|e| e.in_stage("adversary"))?;
        let grad = marginal_gradient(&adversary, &problem.filter, &design, &inner)
            .map_err(|e| e.in_stage("gradient"))?;
        let next = volume_step(problem, &mut state, &design, &grad, &shares).map_err(|e| e.in_stage("mma"))?;
        let change = max_change(&next, &design.rho);
        let record = IterationRecord {
            iteration,
            objective: inner.compliance,
            volume: design.volume(&shares),
            change,
            newton_iterations: inner.newton_iterations,
        };
        observer(&record, &design);
        history.push(record);
        design.set_rho(&problem.filter, next)?;
        warm = Some(inner);
        if change < problem.outer.change_tol {
            converged = true;
            break;
        }
    }
    let inner = adversary
        .solve(&design.rho_tilde, warm.as_ref())
        .map_err(|e| e.in_stage("adversary"))?;
    Ok(RunResult {
        nominal,
        design,
        inner,
        history,
        converged,
    })
}

/// Worst-case compliances of one topology under the three linear-law
/// estimates.
#[derive(Debug, Clone)]
pub struct ContinuationSummary {
    /// Last stage (`q = 0`) of the RAMP continuation.
    pub contin: f64,
    /// Linear law solved directly from the canonical interior point.
    pub direct: f64,
    /// Inverse-law worst case, an upper bound on both.
    pub inverse: f64,
    /// Degradation field at the end of the continuation.
    pub delta: Vec<f64>,
    /// Share of solid elements (`ρ̃ > 0.5`) with `δ ∈ (0.05, 0.95)` in `delta`.
    pub intermediate_fraction: f64,
    pub newton_iterations: usize,
}

/// Percent increases over the reference compliance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationColumns {
    pub contin: f64,
    pub direct: f64,
    pub inverse: f64,
}

/// One table row; all but `budget` and `compliance_reference` are percent
/// increases over `compliance_reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub budget: f64,
    /// Nominal topology under the reference degradation.
    pub compliance_reference: f64,
    pub wc_topo_reference_delta: f64,
    pub nom_topo_worst_delta: f64,
    pub wc_topo_worst_delta: f64,
    /// Nominal and robust topology, in that order.
    pub continuation: Option<[ContinuationColumns; 2]>,
}

#[derive(Debug, Clone)]
pub struct ReportEvaluation {
    pub row: ReportRow,
    pub robust_reference: f64,
    pub nominal_worst: InnerSolution,
    pub robust_worst: InnerSolution,
    pub nominal_continuation: Option<ContinuationSummary>,
    pub robust_continuation: Option<ContinuationSummary>,
}

pub fn percent_increase(value: f64, reference: f64) -> f64 {
    100.0 * (value / reference - 1.0)
}

/// Solid elements (`ρ̃ > 0.5`) whose degradation is not close to 0 or 1, as
/// a fraction of all solid elements.
pub fn intermediate_fraction(rho_tilde: &[f64], delta: &[f64]) -> f64 {
    let solid: Vec<f64> = rho_tilde
        .iter()
        .zip(delta)
        .filter(|(&r, _)| r > 0.5)
        .map(|(_, &d)| d)
        .collect();
    if solid.is_empty() {
        return 0.0;
    }
    solid.iter().filter(|&&d| d > 0.05 && d < 0.95).count() as f64 / solid.len() as f64
}

fn continuation_summary(
    adversary: &Adversary,
    rho_tilde: &[f64],
    inverse: &InnerSolution,
    steps: usize,
) -> Result<ContinuationSummary> {
    let path = ramp_continuation(adversary, rho_tilde, steps, Some(inverse))?;
    let direct = adversary
        .clone()
        .with_law(MaterialLaw::Ramp(0.0))
        .solve(rho_tilde, None)?;
    let last = path.last();
    Ok(ContinuationSummary {
        contin: path.lower_bound,
        direct: direct.compliance,
        inverse: path.upper_bound,
        intermediate_fraction: intermediate_fraction(rho_tilde, &last.delta),
        delta: last.delta.clone(),
        newton_iterations: path.total_newton_iterations() + direct.newton_iterations,
    })
}

/// Evaluate both topologies for the problem's uncertainty set.
///
/// `robust_worst` may pass the already computed worst case of the robust
/// design. With `continuation = Some(steps)` the linear-law estimates are
/// added for both topologies.
pub fn evaluate_report(
    problem: &RobustProblem,
    nominal: &DesignField,
    robust: &DesignField,
    robust_worst: Option<&InnerSolution>,
    continuation: Option<usize>,
) -> Result<ReportEvaluation> {
    problem.validate()?;
    let adversary = problem.adversary();
    let n = problem.model.n_elements();
    let reference = vec![problem.set.reference_delta(); n];
    let compliance_reference = adversary.compliance_at(&nominal.rho_tilde, &reference)?;
    let robust_reference = adversary.compliance_at(&robust.rho_tilde, &reference)?;
    let nominal_worst = adversary.solve(&nominal.rho_tilde, None)?;
    let robust_worst = match robust_worst {
        Some(s) if s.rho_tilde == robust.rho_tilde && s.law == MaterialLaw::Inverse => s.clone(),
        _ => adversary.solve(&robust.rho_tilde, None)?,
    };
    let pct = |c: f64| percent_increase(c, compliance_reference);
    let (nominal_continuation, robust_continuation) = match continuation {
        Some(steps) if !problem.set.is_trivial() => (
            Some(continuation_summary(&adversary, &nominal.rho_tilde, &nominal_worst, steps)?),
            Some(continuation_summary(&adversary, &robust.rho_tilde, &robust_worst, steps)?),
        ),
        _ => (None, None),
    };
    let columns = |s: &ContinuationSummary| ContinuationColumns {
        contin: pct(s.contin),
        direct: pct(s.direct),
        inverse: pct(s.inverse),
    };
    let row = ReportRow {
        budget: problem.set.target(),
        compliance_reference,
        wc_topo_reference_delta: pct(robust_reference),
        nom_topo_worst_delta: pct(nominal_worst.compliance),
        wc_topo_worst_delta: pct(robust_worst.compliance),
        continuation: match (&nominal_continuation, &robust_continuation) {
            (Some(a), Some(b)) => Some([columns(a), columns(b)]),
            _ => None,
        },
    };
    Ok(ReportEvaluation {
        row,
        robust_reference,
        nominal_worst,
        robust_worst,
        nominal_continuation,
        robust_continuation,
    })
}
