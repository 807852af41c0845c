//! The inner worst-case problem.
//!
//! For a fixed filtered design `ρ̃` the adversary maximizes
//!
//! ```text
//! Φ(u, δ) = 2 fᵀu − Σ ρ̃_e^p E(δ_e) u_eᵀ K̂ u_e + μ Σ (ln δ_e + ln(1 − δ_e)) [+ μ ln(−h(δ))] [− ε/2 ‖δ‖²]
//! ```
//!
//! subject to the linear budget `g(δ) = 0`. Maximizing over `u` alone
//! recovers `fᵀu` at equilibrium, so the optimal value is the barrier-
//! perturbed worst-case compliance. Multipliers follow the Lagrangian
//! `Φ − λ g − ν h`, which makes the design sensitivity
//! `−uᵀ ∂K/∂ρ u − λ ∂g/∂ρ − ν ∂h/∂ρ`.

mod continuation;
mod newton;
mod probe;

#[cfg(test)]
mod tests;

pub use continuation::{ramp_continuation, ContinuationResult, ContinuationStage};
pub use probe::{concavity_probe, ProbeReport};

use crate::error::{check_len, Error, Result};
use crate::fe::FeModel;
use crate::material::{young_derivs, MaterialLaw, MaterialParams};
use crate::uncertainty::{BudgetContext, UncertaintySet};

/// Path-following settings. Defaults are the interior-point settings the
/// method was validated with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    pub mu_init: f64,
    pub mu_target: f64,
    pub mu_decrease: f64,
    /// Largest barrier a warm start restarts from; scaled down with the
    /// size of the design change.
    pub mu_warm: f64,
    pub tol: f64,
    pub constr_viol_tol: f64,
    pub compl_inf_tol: f64,
    pub max_newton: usize,
    /// Fraction-to-boundary factor.
    pub tau: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig {
            mu_init: 0.1,
            mu_target: 1e-7,
            mu_decrease: 0.2,
            mu_warm: 1e-3,
            tol: 1e-10,
            constr_viol_tol: 1e-10,
            compl_inf_tol: 1e-4,
            max_newton: 500,
            tau: 0.995,
        }
    }
}

impl BarrierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_target > 0.0 && self.mu_target <= self.mu_init && self.mu_init.is_finite()) {
            return Err(Error::param("mu_target", self.mu_target, "in (0, mu_init]"));
        }
        if !(self.mu_decrease > 0.0 && self.mu_decrease < 1.0) {
            return Err(Error::param("mu_decrease", self.mu_decrease, "in (0, 1)"));
        }
        if !(self.mu_warm > 0.0 && self.mu_warm.is_finite()) {
            return Err(Error::param("mu_warm", self.mu_warm, "positive"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::param("tau", self.tau, "in (0, 1)"));
        }
        for (name, v) in [
            ("tol", self.tol),
            ("constr_viol_tol", self.constr_viol_tol),
            ("compl_inf_tol", self.compl_inf_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::param(name, v, "positive"));
            }
        }
        if self.max_newton == 0 {
            return Err(Error::param("max_newton", 0, "at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    Converged,
    /// Line search stalled before the tolerances were met. Only returned
    /// for non-concave laws, where a local maximum is the best available.
    Stagnated,
    /// Zero budget: the only admissible field is `δ ≡ 0`.
    Trivial,
}

/// Infinity norms of the barrier KKT blocks.
///
/// Dual quantities are compared against the tolerances after dividing by
/// `dual_scale = max(100, mean |multiplier|) / 100`, the usual
/// interior-point convention. Without it, duals of order `μ/δ ≈ 1e7` at
/// nearly untouched elements put the round-off floor above `1e-10`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktNorms {
    /// Scaled stationarity in `δ`, box duals as independent variables.
    pub stationarity: f64,
    /// Unscaled version of `stationarity`.
    pub stationarity_raw: f64,
    /// Same with the duals replaced by `μ/δ` and `μ/(1−δ)`.
    pub stationarity_primal: f64,
    /// `‖f − Ku‖∞` over free dofs.
    pub state: f64,
    /// `|g(δ)|`.
    pub feasibility: f64,
    /// `max |δ z⁻ − μ|, |(1−δ) z⁺ − μ|`.
    pub complementarity: f64,
    pub dual_scale: f64,
    pub complementarity_scale: f64,
}

/// Maximizer of the barrier problem together with its multipliers.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub delta: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: f64,
    /// Multiplier of the dispersion bound, `μ / (−h)`; zero without one.
    pub nu: f64,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub compliance: f64,
    /// Value of the barrier objective at the solution.
    pub objective: f64,
    pub mu: f64,
    pub residuals: KktNorms,
    pub newton_iterations: usize,
    pub status: InnerStatus,
    pub law: MaterialLaw,
    /// Filtered design the solution belongs to.
    pub rho_tilde: Vec<f64>,
    /// Smallest distance of any `δ_e` to the box; tiny values flag a
    /// near-binary field exhausting the budget.
    pub min_box_distance: f64,
}

/// Residual vectors of the primal barrier KKT system.
#[derive(Debug, Clone)]
pub struct KktResidual {
    pub r_delta: Vec<f64>,
    /// `f − Ku` (zero on fixed dofs).
    pub r_u: Vec<f64>,
    pub r_g: f64,
    /// Dispersion constraint value when present.
    pub r_h: Option<f64>,
}

impl KktResidual {
    pub fn max_norm(&self) -> f64 {
        let a = self.r_delta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let b = self.r_u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        a.max(b).max(self.r_g.abs())
    }
}

/// Everything that defines one inner problem except the design.
#[derive(Debug, Clone)]
pub struct Adversary<'a> {
    pub model: &'a FeModel,
    pub params: MaterialParams,
    pub set: UncertaintySet,
    pub law: MaterialLaw,
    /// Tikhonov weight `ε`; zero disables the term.
    pub tikhonov: f64,
    pub config: BarrierConfig,
}

impl<'a> Adversary<'a> {
    pub fn new(model: &'a FeModel, params: MaterialParams, set: UncertaintySet) -> Self {
        Adversary {
            model,
            params,
            set,
            law: MaterialLaw::Inverse,
            tikhonov: 0.0,
            config: BarrierConfig::default(),
        }
    }

    pub fn with_law(mut self, law: MaterialLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_config(mut self, config: BarrierConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_tikhonov(mut self, eps: f64) -> Self {
        self.tikhonov = eps;
        self
    }

    pub fn with_set(mut self, set: UncertaintySet) -> Self {
        self.set = set;
        self
    }

    pub fn context(&self, rho_tilde: &[f64]) -> Result<BudgetContext> {
        BudgetContext::new(
            self.model.mesh().volume_shares(),
            rho_tilde.to_vec(),
            self.params.p,
        )
    }

    fn validate(&self, rho_tilde: &[f64]) -> Result<()> {
        check_len("filtered densities", self.model.n_elements(), rho_tilde.len())?;
        self.params.validate()?;
        self.set.validate()?;
        self.law.validate()?;
        self.config.validate()?;
        if !(self.tikhonov >= 0.0 && self.tikhonov.is_finite()) {
            return Err(Error::param("tikhonov", self.tikhonov, "nonnegative"));
        }
        if rho_tilde.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::param("rho_tilde", "out of range", "in (0, 1]"));
        }
        Ok(())
    }

    /// Solve for the worst case, optionally warm-starting from `warm`.
    pub fn solve(&self, rho_tilde: &[f64], warm: Option<&InnerSolution>) -> Result<InnerSolution> {
        self.validate(rho_tilde)?;
        if self.set.is_trivial() {
            return self.trivial(rho_tilde);
        }
        newton::solve(self, rho_tilde, warm)
    }

    fn trivial(&self, rho_tilde: &[f64]) -> Result<InnerSolution> {
        let n = self.model.n_elements();
        let moduli: Vec<f64> = rho_tilde.iter().map(|&r| self.params.simp(r) * self.params.e0).collect();
        let k = self.model.assemble(&moduli)?;
        let u = self.model.solve_state(&k)?;
        let ku = k.mul_full(&u);
        let state = residual_norm(self.model, &ku);
        let compliance = crate::fe::compliance(self.model.force(), &u);
        Ok(InnerSolution {
            delta: vec![0.0; n],
            u,
            lambda: 0.0,
            nu: 0.0,
            z_lower: vec![0.0; n],
            z_upper: vec![0.0; n],
            compliance,
            objective: compliance,
            mu: 0.0,
            residuals: KktNorms {
                state,
                ..KktNorms::default()
            },
            newton_iterations: 0,
            status: InnerStatus::Trivial,
            law: self.law,
            rho_tilde: rho_tilde.to_vec(),
            min_box_distance: 0.0,
        })
    }

    /// Primal barrier KKT residual at an arbitrary interior point.
    pub fn kkt_residual(
        &self,
        rho_tilde: &[f64],
        delta: &[f64],
        u: &[f64],
        lambda: f64,
        mu: f64,
    ) -> Result<KktResidual> {
        self.validate(rho_tilde)?;
        let n = self.model.n_elements();
        check_len("degradation field", n, delta.len())?;
        check_len("displacement", self.model.mesh().n_dofs(), u.len())?;
        if let Some((element, &value)) = delta
            .iter()
            .enumerate()
            .find(|(_, &d)| !(d > 0.0 && d < 1.0))
        {
            return Err(Error::BarrierDomain { element, value });
        }
        let ctx = self.context(rho_tilde)?;
        let row = self.set.equality_row(&ctx);
        let value = self.set.budget_value(&ctx, delta)?;
        let grad = self.set.grad_delta(&ctx, delta)?;
        let kh = &self.model.element_stiffness().matrix;
        let mut ku = vec![0.0; u.len()];
        let mut r_delta = Vec::with_capacity(n);
        for e in 0..n {
            let a = self.params.simp(rho_tilde[e]);
            let (ev, e1, _) = young_derivs(delta[e], self.law, &self.params);
            let ue = self.model.element_deformation(e, u);
            let kue = kh * ue;
            let q = ue.dot(&kue);
            for (k, &dof) in self.model.mesh().element_dofs(e).iter().enumerate() {
                ku[dof] += a * ev * kue[k];
            }
            let d = delta[e];
            let mut r = -a * e1 * q + mu * (1.0 / d - 1.0 / (1.0 - d)) - self.tikhonov * d - lambda * row[e];
            if let (Some(h), Some(b)) = (value.ineq, grad.ineq.as_ref()) {
                r += mu * b[e] / h;
            }
            r_delta.push(r);
        }
        let mut r_u: Vec<f64> = self.model.force().iter().zip(&ku).map(|(f, k)| f - k).collect();
        for &d in &self.model.load().fixed {
            r_u[d] = 0.0;
        }
        Ok(KktResidual {
            r_delta,
            r_u,
            r_g: value.eq,
            r_h: value.ineq,
        })
    }

    /// Compliance of the design under a prescribed degradation field.
    pub fn compliance_at(&self, rho_tilde: &[f64], delta: &[f64]) -> Result<f64> {
        check_len("degradation field", rho_tilde.len(), delta.len())?;
        let moduli: Vec<f64> = rho_tilde
            .iter()
            .zip(delta)
            .map(|(&r, &d)| crate::material::effective_modulus(r, d, &self.params, self.law))
            .collect();
        self.model.compliance_for(&moduli)
    }
}

pub(crate) fn residual_norm(model: &FeModel, ku: &[f64]) -> f64 {
    model
        .force()
        .iter()
        .zip(ku)
        .enumerate()
        .filter(|(d, _)| model.layout().is_free(*d))
        .fold(0.0f64, |m, (_, (f, k))| m.max((f - k).abs()))
}

/// Worst case under the inverse law.
pub fn solve_worst_case(
    model: &FeModel,
    rho_tilde: &[f64],
    set: &UncertaintySet,
    params: &MaterialParams,
    cfg: &BarrierConfig,
    warm: Option<&InnerSolution>,
) -> Result<InnerSolution> {
    Adversary::new(model, *params, *set)
        .with_config(*cfg)
        .solve(rho_tilde, warm)
}

/// Barrier floor used by the Tikhonov variant.
pub const TIKHONOV_MU_FLOOR: f64 = 1e-12;

/// Worst case of the `ε`-regularized objective `Φ − ε/2 ‖δ‖²`.
pub fn solve_worst_case_tikhonov(
    model: &FeModel,
    rho_tilde: &[f64],
    set: &UncertaintySet,
    params: &MaterialParams,
    eps: f64,
    cfg: &BarrierConfig,
) -> Result<InnerSolution> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("tikhonov", eps, "positive"));
    }
    let cfg = BarrierConfig {
        mu_target: TIKHONOV_MU_FLOOR.min(cfg.mu_target),
        ..*cfg
    };
    Adversary::new(model, *params, *set)
        .with_config(cfg)
        .with_tikhonov(eps)
        .solve(rho_tilde, None)
}
