//! Method of moving asymptotes for one linear inequality constraint.
//!
//! Each step replaces the objective by the separable convex approximation
//! `Σ p_j/(U_j−x_j) + q_j/(x_j−L_j)` and solves that subproblem through its
//! one-dimensional dual in the constraint multiplier. The constraint is
//! linear and enters the subproblem exactly, so it is active to round-off
//! whenever its multiplier is positive.

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaSettings {
    /// Initial asymptote distance as a fraction of the variable range.
    pub asymptote_init: f64,
    /// Contraction applied when a variable oscillates.
    pub asymptote_shrink: f64,
    /// Expansion applied when a variable moves monotonically.
    pub asymptote_grow: f64,
    /// Move limit as a fraction of the variable range.
    pub move_limit: f64,
    /// Keeps the subproblem bounds away from the asymptotes.
    pub albefa: f64,
}

impl Default for MmaSettings {
    fn default() -> Self {
        MmaSettings {
            asymptote_init: 0.5,
            asymptote_shrink: 0.7,
            asymptote_grow: 1.2,
            move_limit: 0.2,
            albefa: 0.1,
        }
    }
}

impl MmaSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.asymptote_init > 0.0 && self.asymptote_init <= 10.0) {
            return Err(Error::param("asymptote_init", self.asymptote_init, "in (0, 10]"));
        }
        if !(self.asymptote_shrink > 0.0 && self.asymptote_shrink < 1.0) {
            return Err(Error::param("asymptote_shrink", self.asymptote_shrink, "in (0, 1)"));
        }
        if !(self.asymptote_grow >= 1.0 && self.asymptote_grow.is_finite()) {
            return Err(Error::param("asymptote_grow", self.asymptote_grow, "at least 1"));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return Err(Error::param("move_limit", self.move_limit, "in (0, 1]"));
        }
        if !(self.albefa > 0.0 && self.albefa < 1.0) {
            return Err(Error::param("albefa", self.albefa, "in (0, 1)"));
        }
        Ok(())
    }
}

/// Asymptotes and iterate history carried between steps.
#[derive(Debug, Clone)]
pub struct MmaState {
    pub settings: MmaSettings,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Iterates of the previous two steps, most recent first.
    pub history: [Vec<f64>; 2],
    pub iteration: usize,
    /// Constraint multiplier of the last subproblem.
    pub multiplier: f64,
}

/// Linear constraint `value + gradient·(x − x_k) ≤ 0`.
#[derive(Debug, Clone, Copy)]
pub struct LinearConstraint<'a> {
    pub value: f64,
    pub gradient: &'a [f64],
}

impl MmaState {
    pub fn new(n: usize, settings: MmaSettings) -> Self {
        MmaState {
            settings,
            lower: vec![0.0; n],
            upper: vec![0.0; n],
            history: [Vec::new(), Vec::new()],
            iteration: 0,
            multiplier: 0.0,
        }
    }

    fn update_asymptotes(&mut self, x: &[f64], xmin: &[f64], xmax: &[f64]) {
        let s = &self.settings;
        let [x1, x2] = &self.history;
        for j in 0..x.len() {
            let range = xmax[j] - xmin[j];
            if self.iteration < 2 {
                self.lower[j] = x[j] - s.asymptote_init * range;
                self.upper[j] = x[j] + s.asymptote_init * range;
                continue;
            }
            let trend = (x[j] - x1[j]) * (x1[j] - x2[j]);
            let gamma = if trend < 0.0 {
                s.asymptote_shrink
            } else if trend > 0.0 {
                s.asymptote_grow
            } else {
                1.0
            };
            let lo = x[j] - gamma * (x1[j] - self.lower[j]);
            let hi = x[j] + gamma * (self.upper[j] - x1[j]);
            self.lower[j] = lo.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
            self.upper[j] = hi.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
        }
    }
}

/// One MMA step minimizing an objective with gradient `df` subject to a
/// linear constraint, within `[xmin, xmax]`.
///
/// The current point must satisfy the constraint, which makes the dual
/// subproblem always solvable.
pub fn mma_step(
    state: &mut MmaState,
    x: &[f64],
    df: &[f64],
    constraint: LinearConstraint,
    xmin: &[f64],
    xmax: &[f64],
) -> Result<Vec<f64>> {
    let n = x.len();
    check_len("objective gradient", n, df.len())?;
    check_len("constraint gradient", n, constraint.gradient.len())?;
    check_len("lower bounds", n, xmin.len())?;
    check_len("upper bounds", n, xmax.len())?;
    check_len("asymptotes", n, state.lower.len())?;
    state.settings.validate()?;
    if df.iter().chain(constraint.gradient).any(|g| !g.is_finite()) {
        return Err(Error::param("gradient", "non-finite entry", "finite"));
    }
    for j in 0..n {
        if !(xmin[j] < xmax[j]) || !(x[j] >= xmin[j] && x[j] <= xmax[j]) {
            return Err(Error::param("design variable", format!("{} at {j}", x[j]), "inside its bounds"));
        }
    }

    state.update_asymptotes(x, xmin, xmax);
    let s = state.settings;
    let (low, upp) = (&state.lower, &state.upper);
    let dg = constraint.gradient;

    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    let mut p0 = Vec::with_capacity(n);
    let mut q0 = Vec::with_capacity(n);
    for j in 0..n {
        let range = xmax[j] - xmin[j];
        alpha.push(
            xmin[j]
                .max(low[j] + s.albefa * (x[j] - low[j]))
                .max(x[j] - s.move_limit * range),
        );
        beta.push(
            xmax[j]
                .min(upp[j] - s.albefa * (upp[j] - x[j]))
                .min(x[j] + s.move_limit * range),
        );
        p0.push((upp[j] - x[j]).powi(2) * df[j].max(0.0));
        q0.push((x[j] - low[j]).powi(2) * (-df[j]).max(0.0));
    }

    let primal = |lambda: f64| -> Vec<f64> {
        (0..n)
            .map(|j| separable_minimizer(p0[j], q0[j], lambda * dg[j], low[j], upp[j], alpha[j], beta[j], x[j]))
            .collect()
    };
    let violation = |y: &[f64]| -> f64 {
        constraint.value + (0..n).map(|j| dg[j] * (y[j] - x[j])).sum::<f64>()
    };

    let candidate = primal(0.0);
    if violation(&candidate) <= 0.0 {
        state.multiplier = 0.0;
        return Ok(finish(state, x, candidate));
    }
    let mut hi = 1.0;
    while violation(&primal(hi)) > 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::InfeasibleSet(
                "MMA subproblem has no point satisfying the constraint".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if violation(&primal(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    state.multiplier = hi;
    Ok(finish(state, x, primal(hi)))
}

/// Minimizer over `[a, b]` of `p/(U−x) + q/(x−L) + c x`.
#[allow(clippy::too_many_arguments)]
fn separable_minimizer(p: f64, q: f64, c: f64, l: f64, u: f64, a: f64, b: f64, current: f64) -> f64 {
    let slope = |x: f64| p / (u - x).powi(2) - q / (x - l).powi(2) + c;
    if p == 0.0 && q == 0.0 {
        return if c > 0.0 {
            a
        } else if c < 0.0 {
            b
        } else {
            current.clamp(a, b)
        };
    }
    if p == 0.0 && c > 0.0 {
        return (l + (q / c).sqrt()).clamp(a, b);
    }
    if q == 0.0 && c < 0.0 {
        return (u - (p / -c).sqrt()).clamp(a, b);
    }
    if slope(a) >= 0.0 {
        return a;
    }
    if slope(b) <= 0.0 {
        return b;
    }
    // The slope is increasing on (L, U); safeguarded Newton on [a, b].
    let (mut lo, mut hi) = (a, b);
    let mut x = 0.5 * (a + b);
    for _ in 0..100 {
        let f = slope(x);
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let df = 2.0 * p / (u - x).powi(3) + 2.0 * q / (x - l).powi(3);
        let mut next = x - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

fn finish(state: &mut MmaState, x: &[f64], next: Vec<f64>) -> Vec<f64> {
    let prev = std::mem::replace(&mut state.history[0], x.to_vec());
    state.history[1] = prev;
    state.iteration += 1;
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(n: usize) -> MmaState {
        MmaState::new(n, MmaSettings::default())
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let x = vec![0.3, 0.5, 0.7];
        let g = vec![1.0; 3];
        let next = mma_step(
            &mut state(3),
            &x,
            &[0.0; 3],
            LinearConstraint {
                value: -0.1,
                gradient: &g,
            },
            &[0.0; 3],
            &[1.0; 3],
        )
        .unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn negative_gradient_without_constraint_hits_move_limit() {
        let x = vec![0.2, 0.5, 0.9];
        let next = mma_step(
            &mut state(3),
            &x,
            &[-1.0, -2.0, -3.0],
            LinearConstraint {
                value: -10.0,
                gradient: &[1.0; 3],
            },
            &[0.0; 3],
            &[1.0; 3],
        )
        .unwrap();
        assert!((next[0] - 0.4).abs() < 1e-15);
        assert!((next[1] - 0.7).abs() < 1e-15);
        assert!((next[2] - 1.0).abs() < 1e-15);
    }

    // x = (½, ½), bounds [0, 1], first step so L = 0 and U = 1; objective
    // gradient (−1, −4), so q = (¼, 1) and p = 0, with constraint
    // x₁ + x₂ − 1 ≤ 0 at equality. Stationarity gives x_j = √(q_j/λ), and
    // x₁ + x₂ = 1 then gives λ = 9/4 and x = (1/3, 2/3).
    #[test]
    fn two_variable_subproblem_matches_hand_solution() {
        let mut st = state(2);
        let next = mma_step(
            &mut st,
            &[0.5, 0.5],
            &[-1.0, -4.0],
            LinearConstraint {
                value: 0.0,
                gradient: &[1.0, 1.0],
            },
            &[0.0; 2],
            &[1.0; 2],
        )
        .unwrap();
        assert!((next[0] - 1.0 / 3.0).abs() < 1e-10, "{next:?}");
        assert!((next[1] - 2.0 / 3.0).abs() < 1e-10, "{next:?}");
        assert!((st.multiplier - 2.25).abs() < 1e-8);
    }

    #[test]
    fn asymptotes_contract_on_oscillation() {
        let mut st = state(1);
        let c = LinearConstraint {
            value: -1.0,
            gradient: &[1.0],
        };
        let mut x = vec![0.5];
        for g in [-1.0, 1.0, -1.0] {
            x = mma_step(&mut st, &x, &[g], c, &[0.0], &[1.0]).unwrap();
        }
        let width = st.upper[0] - st.lower[0];
        assert!(width < 1.0 - 1e-12, "{width}");
    }

    #[test]
    fn rejects_point_outside_bounds() {
        let r = mma_step(
            &mut state(1),
            &[1.5],
            &[1.0],
            LinearConstraint {
                value: 0.0,
                gradient: &[1.0],
            },
            &[0.0],
            &[1.0],
        );
        assert!(r.is_err());
    }
}
