//! Admissible degradation sets and their budget constraints.
//!
//! Every set is a box `[0, 1]^n` intersected with one linear equality
//! `Σ s_e w_e δ_e = D`, where `s_e = v_e / |Ω|` and `w_e` is either 1 or
//! `ρ̃_e^p`. The averaged-quadratic set adds the convex dispersion bound
//! `Σ s_e (w_e δ_e - m)^2 ≤ D2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Per-element weights used by the averaged-quadratic set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Plain,
    Rho,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UncertaintySet {
    /// `Σ s_e δ_e = D`.
    Linear { budget: f64 },
    /// `Σ s_e ρ̃_e^p δ_e = D`.
    RhoWeighted { budget: f64 },
    /// `Σ s_e w_e δ_e = D1` and `Σ s_e (w_e δ_e - m)^2 ≤ D2`.
    AvgQuad {
        mean: f64,
        dispersion: f64,
        anchor: f64,
        weighting: Weighting,
    },
}

/// Geometry and design data the constraint functions depend on.
#[derive(Debug, Clone)]
pub struct BudgetContext {
    shares: Vec<f64>,
    rho_tilde: Vec<f64>,
    p: f64,
}

impl BudgetContext {
    /// `shares` are `v_e / |Ω|`; `rho_tilde` the filtered densities.
    pub fn new(shares: Vec<f64>, rho_tilde: Vec<f64>, p: f64) -> Result<Self> {
        check_len("filtered densities", shares.len(), rho_tilde.len())?;
        if rho_tilde.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::param("rho_tilde", "out of range", "in [0, 1]"));
        }
        Ok(BudgetContext { shares, rho_tilde, p })
    }

    /// Uniform grid with `n` equal elements.
    pub fn uniform(rho_tilde: Vec<f64>, p: f64) -> Result<Self> {
        let n = rho_tilde.len();
        Self::new(vec![1.0 / n as f64; n], rho_tilde, p)
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn rho_tilde(&self) -> &[f64] {
        &self.rho_tilde
    }

    pub fn penalty(&self) -> f64 {
        self.p
    }

    fn simp(&self, e: usize) -> f64 {
        self.rho_tilde[e].powf(self.p)
    }

    fn simp_derivative(&self, e: usize) -> f64 {
        self.p * self.rho_tilde[e].powf(self.p - 1.0)
    }
}

/// Constraint values; `ineq` is present only for the averaged-quadratic set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetValue {
    pub eq: f64,
    pub ineq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetGradient {
    pub eq: Vec<f64>,
    pub ineq: Option<Vec<f64>>,
}

const INTERIOR_LO: f64 = 0.01;
const INTERIOR_HI: f64 = 0.99;

impl UncertaintySet {
    pub fn validate(&self) -> Result<()> {
        match *self {
            UncertaintySet::Linear { budget } | UncertaintySet::RhoWeighted { budget } => {
                if !(0.0..1.0).contains(&budget) {
                    return Err(Error::param("D", budget, "in [0, 1)"));
                }
            }
            UncertaintySet::AvgQuad {
                mean,
                dispersion,
                anchor,
                ..
            } => {
                if !(mean > 0.0 && mean < 1.0) {
                    return Err(Error::param("D1", mean, "in (0, 1)"));
                }
                if !(dispersion >= 0.0 && dispersion.is_finite()) {
                    return Err(Error::param("D2", dispersion, "nonnegative"));
                }
                if !anchor.is_finite() {
                    return Err(Error::param("m", anchor, "finite"));
                }
            }
        }
        Ok(())
    }

    /// Right-hand side of the equality budget.
    pub fn target(&self) -> f64 {
        match *self {
            UncertaintySet::Linear { budget } | UncertaintySet::RhoWeighted { budget } => budget,
            UncertaintySet::AvgQuad { mean, .. } => mean,
        }
    }

    pub fn has_inequality(&self) -> bool {
        matches!(self, UncertaintySet::AvgQuad { .. })
    }

    /// The adversary has nothing to spend.
    pub fn is_trivial(&self) -> bool {
        !self.has_inequality() && self.target() == 0.0
    }

    /// Constant degradation the report compares against.
    pub fn reference_delta(&self) -> f64 {
        match *self {
            UncertaintySet::AvgQuad { anchor, .. } => anchor,
            _ => 0.0,
        }
    }

    /// Same set with a different equality budget.
    pub fn with_target(&self, target: f64) -> Self {
        match *self {
            UncertaintySet::Linear { .. } => UncertaintySet::Linear { budget: target },
            UncertaintySet::RhoWeighted { .. } => UncertaintySet::RhoWeighted { budget: target },
            UncertaintySet::AvgQuad {
                dispersion,
                anchor,
                weighting,
                ..
            } => UncertaintySet::AvgQuad {
                mean: target,
                dispersion,
                anchor,
                weighting,
            },
        }
    }

    fn uses_rho(&self) -> bool {
        matches!(
            self,
            UncertaintySet::RhoWeighted { .. }
                | UncertaintySet::AvgQuad {
                    weighting: Weighting::Rho,
                    ..
                }
        )
    }

    /// Element weights `w_e` of the equality row.
    pub fn weights(&self, ctx: &BudgetContext) -> Vec<f64> {
        if self.uses_rho() {
            (0..ctx.len()).map(|e| ctx.simp(e)).collect()
        } else {
            vec![1.0; ctx.len()]
        }
    }

    /// Coefficients `s_e w_e` of the (linear) equality row.
    pub fn equality_row(&self, ctx: &BudgetContext) -> Vec<f64> {
        self.weights(ctx)
            .iter()
            .zip(&ctx.shares)
            .map(|(w, s)| w * s)
            .collect()
    }

    pub fn budget_value(&self, ctx: &BudgetContext, delta: &[f64]) -> Result<BudgetValue> {
        check_len("degradation field", ctx.len(), delta.len())?;
        let w = self.weights(ctx);
        let mass: f64 = (0..ctx.len()).map(|e| ctx.shares[e] * w[e] * delta[e]).sum();
        let ineq = match *self {
            UncertaintySet::AvgQuad {
                dispersion, anchor, ..
            } => Some(
                (0..ctx.len())
                    .map(|e| ctx.shares[e] * (w[e] * delta[e] - anchor).powi(2))
                    .sum::<f64>()
                    - dispersion,
            ),
            _ => None,
        };
        Ok(BudgetValue {
            eq: mass - self.target(),
            ineq,
        })
    }

    pub fn grad_delta(&self, ctx: &BudgetContext, delta: &[f64]) -> Result<BudgetGradient> {
        check_len("degradation field", ctx.len(), delta.len())?;
        let w = self.weights(ctx);
        let eq = self.equality_row(ctx);
        let ineq = match *self {
            UncertaintySet::AvgQuad { anchor, .. } => Some(
                (0..ctx.len())
                    .map(|e| 2.0 * ctx.shares[e] * w[e] * (w[e] * delta[e] - anchor))
                    .collect(),
            ),
            _ => None,
        };
        Ok(BudgetGradient { eq, ineq })
    }

    /// Diagonal of the inequality Hessian in `δ` (zero vector for the linear sets).
    pub fn ineq_hessian_diag(&self, ctx: &BudgetContext) -> Vec<f64> {
        match self {
            UncertaintySet::AvgQuad { .. } => self
                .weights(ctx)
                .iter()
                .zip(&ctx.shares)
                .map(|(w, s)| 2.0 * s * w * w)
                .collect(),
            _ => vec![0.0; ctx.len()],
        }
    }

    /// Gradients with respect to the filtered densities `ρ̃`.
    pub fn grad_rho(&self, ctx: &BudgetContext, delta: &[f64]) -> Result<BudgetGradient> {
        check_len("degradation field", ctx.len(), delta.len())?;
        let n = ctx.len();
        if !self.uses_rho() {
            return Ok(BudgetGradient {
                eq: vec![0.0; n],
                ineq: self.has_inequality().then(|| vec![0.0; n]),
            });
        }
        let eq = (0..n)
            .map(|e| ctx.shares[e] * ctx.simp_derivative(e) * delta[e])
            .collect();
        let ineq = match *self {
            UncertaintySet::AvgQuad { anchor, .. } => Some(
                (0..n)
                    .map(|e| {
                        let r = ctx.simp(e) * delta[e] - anchor;
                        2.0 * ctx.shares[e] * r * ctx.simp_derivative(e) * delta[e]
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(BudgetGradient { eq, ineq })
    }

    /// Deterministic strictly interior point.
    ///
    /// Linear budgets use the constant field `D / Σ s_e w_e`; the averaged
    /// set uses the minimum-dispersion point clipped to `[0.01, 0.99]`.
    pub fn canonical_point(&self, ctx: &BudgetContext) -> Result<Vec<f64>> {
        self.validate()?;
        let row = self.equality_row(ctx);
        let capacity: f64 = row.iter().sum();
        let target = self.target();
        if target <= 0.0 {
            return Err(Error::InfeasibleSet(
                "zero budget has no interior point".into(),
            ));
        }
        if target >= capacity {
            return Err(Error::InfeasibleSet(format!(
                "budget {target} is not below the attainable mass {capacity}"
            )));
        }
        match *self {
            UncertaintySet::AvgQuad { .. } => {
                let w = self.weights(ctx);
                if w.iter().any(|&x| x <= 0.0) {
                    return Err(Error::InfeasibleSet("zero weight in dispersion set".into()));
                }
                let field = |t: f64| -> Vec<f64> {
                    w.iter()
                        .map(|&we| (t / we).clamp(INTERIOR_LO, INTERIOR_HI))
                        .collect()
                };
                let mass = |d: &[f64]| -> f64 { d.iter().zip(&row).map(|(a, b)| a * b).sum() };
                let lo_mass = INTERIOR_LO * capacity;
                let hi_mass = INTERIOR_HI * capacity;
                if target <= lo_mass || target >= hi_mass {
                    return Err(Error::InfeasibleSet(format!(
                        "mean budget {target} outside the clipped range ({lo_mass}, {hi_mass})"
                    )));
                }
                let wmax = w.iter().cloned().fold(0.0, f64::max);
                let (mut a, mut b) = (0.0, wmax);
                for _ in 0..200 {
                    let t = 0.5 * (a + b);
                    if mass(&field(t)) < target {
                        a = t;
                    } else {
                        b = t;
                    }
                }
                let delta = field(0.5 * (a + b));
                let v = self.budget_value(ctx, &delta)?;
                if v.ineq.unwrap_or(-1.0) >= 0.0 {
                    return Err(Error::InfeasibleSet(format!(
                        "dispersion bound is not strictly attainable (excess {:e})",
                        v.ineq.unwrap_or(0.0)
                    )));
                }
                Ok(delta)
            }
            _ => Ok(vec![target / capacity; ctx.len()]),
        }
    }

    /// Random strictly interior point satisfying the equality to round-off.
    pub fn sample_feasible(&self, ctx: &BudgetContext, seed: u64) -> Result<Vec<f64>> {
        let canonical = self.canonical_point(ctx)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..ctx.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let sample = fit_logits(&self.equality_row(ctx), self.target(), &logits)?;
        self.pull_inside(ctx, sample, &canonical)
    }

    /// Move `delta` onto this set's equality budget, keeping its shape.
    ///
    /// Used to warm-start the adversary after the design or budget changed.
    pub fn project_interior(&self, ctx: &BudgetContext, delta: &[f64]) -> Result<Vec<f64>> {
        check_len("degradation field", ctx.len(), delta.len())?;
        let canonical = self.canonical_point(ctx)?;
        let logits: Vec<f64> = delta
            .iter()
            .map(|&d| {
                let d = d.clamp(1e-12, 1.0 - 1e-12);
                (d / (1.0 - d)).ln()
            })
            .collect();
        let fitted = fit_logits(&self.equality_row(ctx), self.target(), &logits)?;
        self.pull_inside(ctx, fitted, &canonical)
    }

    /// Blend toward the canonical point until the dispersion bound is strict.
    /// The blend keeps the linear equality because both ends satisfy it.
    fn pull_inside(&self, ctx: &BudgetContext, delta: Vec<f64>, canonical: &[f64]) -> Result<Vec<f64>> {
        if !self.has_inequality() {
            return Ok(delta);
        }
        let mut theta = 1.0;
        for _ in 0..60 {
            let trial: Vec<f64> = delta
                .iter()
                .zip(canonical)
                .map(|(d, c)| theta * d + (1.0 - theta) * c)
                .collect();
            if self.budget_value(ctx, &trial)?.ineq.unwrap_or(-1.0) < 0.0 {
                return Ok(trial);
            }
            theta *= 0.5;
        }
        Ok(canonical.to_vec())
    }
}

const LOGIT_CAP: f64 = 27.6;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Find the shift `t` with `Σ row_e σ(logit_e + t) = target` and return the field.
fn fit_logits(row: &[f64], target: f64, logits: &[f64]) -> Result<Vec<f64>> {
    let capacity: f64 = row.iter().sum();
    if !(target > 0.0 && target < capacity) {
        return Err(Error::InfeasibleSet(format!(
            "budget {target} outside (0, {capacity})"
        )));
    }
    // saturating the shifted logits keeps every entry at least ~1e-12 from the box
    let field = |l: f64, t: f64| sigmoid((l + t).clamp(-LOGIT_CAP, LOGIT_CAP));
    let mass = |t: f64| -> f64 { row.iter().zip(logits).map(|(r, l)| r * field(*l, t)).sum() };
    let (mut a, mut b) = (-1.0, 1.0);
    let lo = row.iter().map(|r| r * sigmoid(-LOGIT_CAP)).sum::<f64>();
    let hi = row.iter().map(|r| r * sigmoid(LOGIT_CAP)).sum::<f64>();
    if !(target > lo && target < hi) {
        return Err(Error::InfeasibleSet(format!(
            "budget {target} too close to the box limits ({lo}, {hi})"
        )));
    }
    while mass(a) > target {
        a *= 2.0;
        if a < -1e4 {
            return Err(Error::InfeasibleSet("budget too small to represent".into()));
        }
    }
    while mass(b) < target {
        b *= 2.0;
        if b > 1e4 {
            return Err(Error::InfeasibleSet("budget too large to represent".into()));
        }
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if mass(m) < target {
            a = m;
        } else {
            b = m;
        }
    }
    let t = 0.5 * (a + b);
    let mut delta: Vec<f64> = logits.iter().map(|&l| field(l, t)).collect();
    // absorb the residual bisection error into the least saturated entry
    let r = target - delta.iter().zip(row).map(|(d, w)| d * w).sum::<f64>();
    if let Some((k, _)) = delta
        .iter()
        .enumerate()
        .filter(|(e, _)| row[*e] > 0.0)
        .max_by(|x, y| {
            let sx = x.1 * (1.0 - x.1) * row[x.0];
            let sy = y.1 * (1.0 - y.1) * row[y.0];
            sx.total_cmp(&sy)
        })
    {
        let moved = delta[k] + r / row[k];
        if moved > 0.0 && moved < 1.0 {
            delta[k] = moved;
        }
    }
    Ok(delta)
}
