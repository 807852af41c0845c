//! Primal-dual barrier Newton iteration with block elimination.
//!
//! Unknowns are `(u, δ, λ)` plus box duals `z⁻, z⁺`. The `δδ` block of the
//! Hessian is diagonal, so `δ` is eliminated element by element; what is
//! left is the SPD matrix `M = 2K + Σ h_e h_eᵀ / D_e` (same sparsity as `K`)
//! bordered by one or two dense budget rows.

use nalgebra::{DMatrix, DVector};

use super::{residual_norm, Adversary, BarrierConfig, InnerSolution, InnerStatus, KktNorms};
use crate::error::{Error, Result};
use crate::fe::{Matrix8, Vector8};
use crate::material::young_derivs;
use crate::uncertainty::BudgetContext;

/// Dual safeguard: `z⁻ ∈ [μ/(κδ), κμ/δ]`.
const KAPPA_SIGMA: f64 = 1e10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const S_MAX: f64 = 100.0;
/// Design change at which a warm start restarts from the full `mu_warm`.
const WARM_REFERENCE_SHIFT: f64 = 0.2;

struct Problem<'p, 'a> {
    adv: &'p Adversary<'a>,
    rho_tilde: &'p [f64],
    ctx: BudgetContext,
    simp: Vec<f64>,
    row: Vec<f64>,
    ineq_hess: Vec<f64>,
}

#[derive(Clone)]
struct Iterate {
    delta: Vec<f64>,
    u: Vec<f64>,
    lambda: f64,
    zl: Vec<f64>,
    zu: Vec<f64>,
    /// Slack of the dispersion bound, `h(δ) + s = 0`. Carrying it as an
    /// unknown keeps the cancellation in `h` out of the barrier term.
    s: f64,
    nu: f64,
}

struct Eval {
    e0: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    kue: Vec<Vector8>,
    ku: Vec<f64>,
    h: Option<f64>,
    b: Option<Vec<f64>>,
    phi: f64,
    g: f64,
}

struct Residuals {
    r_u: Vec<f64>,
    /// Barrier (primal) form of the `δ` gradient of the Lagrangian.
    grad: Vec<f64>,
    /// `grad` with the slack infeasibility folded in; the Newton right-hand side.
    rhs: Vec<f64>,
    norms: KktNorms,
}

impl<'p, 'a> Problem<'p, 'a> {
    fn new(adv: &'p Adversary<'a>, rho_tilde: &'p [f64]) -> Result<Self> {
        let ctx = adv.context(rho_tilde)?;
        let simp = rho_tilde.iter().map(|&r| adv.params.simp(r)).collect();
        let row = adv.set.equality_row(&ctx);
        let ineq_hess = adv.set.ineq_hessian_diag(&ctx);
        Ok(Problem {
            adv,
            rho_tilde,
            ctx,
            simp,
            row,
            ineq_hess,
        })
    }

    fn n(&self) -> usize {
        self.simp.len()
    }

    /// `None` if the point leaves the barrier domain.
    fn evaluate(&self, delta: &[f64], u: &[f64], mu: f64) -> Result<Option<Eval>> {
        let model = self.adv.model;
        let n = self.n();
        if delta.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Ok(None);
        }
        let value = self.adv.set.budget_value(&self.ctx, delta)?;
        let b = match value.ineq {
            Some(_) => self.adv.set.grad_delta(&self.ctx, delta)?.ineq,
            None => None,
        };
        let kh = &model.element_stiffness().matrix;
        let mut ev = Eval {
            e0: Vec::with_capacity(n),
            e1: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            kue: Vec::with_capacity(n),
            ku: vec![0.0; u.len()],
            h: value.ineq,
            b,
            phi: 0.0,
            g: value.eq,
        };
        let mut energy = 0.0;
        let mut barrier = 0.0;
        let mut ridge = 0.0;
        for e in 0..n {
            let (e0, e1, e2) = young_derivs(delta[e], self.adv.law, &self.adv.params);
            let ue = model.element_deformation(e, u);
            let kue = kh * ue;
            let q = ue.dot(&kue);
            let scale = self.simp[e] * e0;
            for (k, &dof) in model.mesh().element_dofs(e).iter().enumerate() {
                ev.ku[dof] += scale * kue[k];
            }
            energy += scale * q;
            barrier += delta[e].ln() + (1.0 - delta[e]).ln();
            ridge += delta[e] * delta[e];
            ev.e0.push(e0);
            ev.e1.push(e1);
            ev.e2.push(e2);
            ev.q.push(q);
            ev.kue.push(kue);
        }
        let work: f64 = crate::fe::compliance(model.force(), u);
        ev.phi = 2.0 * work - energy + mu * barrier - 0.5 * self.adv.tikhonov * ridge;
        Ok(Some(ev))
    }

    fn residuals(&self, it: &Iterate, ev: &Eval, mu: f64) -> Residuals {
        let model = self.adv.model;
        let n = self.n();
        let mut r_u: Vec<f64> = model.force().iter().zip(&ev.ku).map(|(f, k)| f - k).collect();
        for &d in &model.load().fixed {
            r_u[d] = 0.0;
        }
        let mut grad = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        let mut grad_z = Vec::with_capacity(n);
        let mut compl = 0.0f64;
        for e in 0..n {
            let d = it.delta[e];
            let base = -self.simp[e] * ev.e1[e] * ev.q[e] - self.adv.tikhonov * d - it.lambda * self.row[e];
            let (primal_ineq, shift, dual_ineq) = match (ev.h, ev.b.as_ref()) {
                (Some(h), Some(b)) => (-mu * b[e] / it.s, -it.nu * b[e] * (h + it.s) / it.s, -it.nu * b[e]),
                _ => (0.0, 0.0, 0.0),
            };
            let g = base + mu / d - mu / (1.0 - d) + primal_ineq;
            grad.push(g);
            rhs.push(g + shift);
            grad_z.push(base + it.zl[e] - it.zu[e] + dual_ineq);
            compl = compl
                .max((d * it.zl[e] - mu).abs())
                .max(((1.0 - d) * it.zu[e] - mu).abs());
        }
        let mut feasibility = ev.g.abs();
        if let Some(h) = ev.h {
            compl = compl.max((it.s * it.nu - mu).abs());
            feasibility = feasibility.max((h + it.s).abs());
        }
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let zsum: f64 = it.zl.iter().chain(&it.zu).map(|z| z.abs()).sum();
        let nu = it.nu;
        let n_mult = (2 * n + 1 + usize::from(ev.h.is_some())) as f64;
        let dual_scale = ((zsum + it.lambda.abs() + nu) / n_mult).max(S_MAX) / S_MAX;
        let complementarity_scale = (zsum / (2 * n) as f64).max(S_MAX) / S_MAX;
        let raw = inf(&grad_z);
        let norms = KktNorms {
            stationarity: raw / dual_scale,
            stationarity_raw: raw,
            stationarity_primal: inf(&grad),
            state: residual_norm(model, &ev.ku),
            feasibility,
            complementarity: compl,
            dual_scale,
            complementarity_scale,
        };
        Residuals { r_u, grad, rhs, norms }
    }

    /// Least-squares budget multiplier for the current point.
    fn estimate_lambda(&self, it: &Iterate, ev: &Eval, mu: f64) -> f64 {
        let probe = Iterate {
            lambda: 0.0,
            ..it.clone()
        };
        let r = self.residuals(&probe, ev, mu);
        let num: f64 = r.grad.iter().zip(&self.row).map(|(g, a)| g * a).sum();
        let den: f64 = self.row.iter().map(|a| a * a).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

struct Step {
    du: Vec<f64>,
    dd: Vec<f64>,
    dl: f64,
    ds: f64,
    dnu: f64,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

fn newton_step(pb: &Problem, it: &Iterate, ev: &Eval, res: &Residuals, mu: f64) -> Result<Step> {
    let model = pb.adv.model;
    let mesh = model.mesh();
    let n = pb.n();
    let ndof = mesh.n_dofs();
    let eps = pb.adv.tikhonov;
    let kh = model.element_stiffness().matrix;

    // Diagonal δδ block. Where 1/E is not convex (RAMP below the inverse
    // parameter) the material curvature is raised to 2E'²/E, which keeps
    // every element block negative semidefinite: a modified Newton step
    // that is still an ascent direction.
    let mut diag = Vec::with_capacity(n);
    for e in 0..n {
        let d = it.delta[e];
        let curv = ev.e2[e].max(2.0 * ev.e1[e] * ev.e1[e] / ev.e0[e]);
        let mut de = -pb.simp[e] * curv * ev.q[e] - it.zl[e] / d - it.zu[e] / (1.0 - d) - eps;
        if ev.h.is_some() {
            de -= it.nu * pb.ineq_hess[e];
        }
        diag.push(de);
    }
    let hloc = |e: usize| -> Vector8 { ev.kue[e] * (-2.0 * pb.simp[e] * ev.e1[e]) };

    // Round-off can still break the factorization when a block is exactly
    // singular; stiffening the δδ block then gives a damped step.
    let mut damping = 1.0;
    let chol = loop {
        let m = model.assemble_with(|e| {
            let h = hloc(e);
            let mut ke: Matrix8 = kh * (2.0 * pb.simp[e] * ev.e0[e]);
            ke += h * h.transpose() / diag[e];
            ke
        });
        match m.factor() {
            Ok(c) => break c,
            Err(Error::NotPositiveDefinite { .. }) if damping < 1e8 => {
                damping *= 4.0;
                for v in diag.iter_mut() {
                    *v *= 4.0;
                }
            }
            Err(e) => return Err(e),
        }
    };

    // Border columns: the equality row and, for the dispersion set, the
    // inequality gradient whose rank-one Hessian term −c b bᵀ is carried
    // by an auxiliary multiplier.
    let mut cols: Vec<&[f64]> = vec![&pb.row];
    let mut cdiag = vec![0.0];
    if let Some(b) = ev.b.as_ref() {
        cols.push(b);
        cdiag.push(it.s / it.nu);
    }
    let k = cols.len();

    let scatter = |out: &mut Vec<f64>, e: usize, v: &Vector8| {
        for (j, &dof) in mesh.element_dofs(e).iter().enumerate() {
            out[dof] += v[j];
        }
    };
    let mut rhs1: Vec<f64> = res.r_u.iter().map(|r| 2.0 * r).collect();
    let mut gcols = vec![vec![0.0; ndof]; k];
    for e in 0..n {
        let h = hloc(e);
        scatter(&mut rhs1, e, &(h * (-res.rhs[e] / diag[e])));
        for j in 0..k {
            scatter(&mut gcols[j], e, &(h * (cols[j][e] / diag[e])));
        }
    }
    let y0 = chol.solve(&rhs1);
    let ys: Vec<Vec<f64>> = gcols.iter().map(|g| chol.solve(g)).collect();

    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut s = DMatrix::<f64>::zeros(k, k);
    let mut rs = DVector::<f64>::zeros(k);
    for i in 0..k {
        for j in 0..k {
            let adia: f64 = (0..n).map(|e| cols[i][e] * cols[j][e] / diag[e]).sum();
            s[(i, j)] = adia - dot(&gcols[i], &ys[j]);
        }
        s[(i, i)] -= cdiag[i];
        let rc = if i == 0 { -ev.g } else { 0.0 };
        let agrad: f64 = (0..n).map(|e| cols[i][e] * res.rhs[e] / diag[e]).sum();
        rs[i] = rc + agrad + dot(&gcols[i], &y0);
    }
    let xi = s
        .lu()
        .solve(&rs)
        .ok_or_else(|| Error::InfeasibleSet("budget rows are degenerate".into()))?;

    let mut du = y0;
    for j in 0..k {
        for (d, y) in du.iter_mut().zip(&ys[j]) {
            *d += xi[j] * y;
        }
    }
    let mut dd = Vec::with_capacity(n);
    let mut dzl = Vec::with_capacity(n);
    let mut dzu = Vec::with_capacity(n);
    for e in 0..n {
        let due = model.element_displacement(e, &du);
        let mut r = -res.rhs[e] - hloc(e).dot(&due);
        for j in 0..k {
            r += cols[j][e] * xi[j];
        }
        let step = r / diag[e];
        let d = it.delta[e];
        dzl.push(mu / d - it.zl[e] - it.zl[e] / d * step);
        dzu.push(mu / (1.0 - d) - it.zu[e] + it.zu[e] / (1.0 - d) * step);
        dd.push(step);
    }
    let (ds, dnu) = match (ev.h, ev.b.as_ref()) {
        (Some(h), Some(b)) => {
            let bd: f64 = b.iter().zip(&dd).map(|(x, y)| x * y).sum();
            let ds = -(h + it.s) - bd;
            (ds, (mu - it.s * it.nu - it.nu * ds) / it.s)
        }
        _ => (0.0, 0.0),
    };
    Ok(Step {
        du,
        dd,
        dl: xi[0],
        ds,
        dnu,
        dzl,
        dzu,
    })
}

fn max_step(x: &[f64], dx: &[f64], tau: f64) -> f64 {
    let mut alpha = 1.0f64;
    for (&v, &d) in x.iter().zip(dx) {
        if d < 0.0 {
            alpha = alpha.min(-tau * v / d);
        }
    }
    alpha
}

fn clamp_duals(it: &mut Iterate, mu: f64, slack: bool) {
    if slack {
        let s = it.s;
        it.nu = it.nu.clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
    }
    for e in 0..it.delta.len() {
        let d = it.delta[e];
        it.zl[e] = it.zl[e].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
        let c = 1.0 - d;
        it.zu[e] = it.zu[e].clamp(mu / (KAPPA_SIGMA * c), KAPPA_SIGMA * mu / c);
    }
}

fn stage_done(r: &KktNorms, mu: f64, final_stage: bool, adv: &Adversary) -> bool {
    let cfg = &adv.config;
    if final_stage {
        r.stationarity <= cfg.tol
            && r.state <= cfg.constr_viol_tol
            && r.feasibility <= cfg.constr_viol_tol
            && r.complementarity <= cfg.compl_inf_tol.min(cfg.tol * r.complementarity_scale)
    } else {
        let t = cfg.tol.max(0.1 * mu);
        r.stationarity <= t
            && r.state <= t
            && r.feasibility <= t
            && r.complementarity <= t * r.complementarity_scale
    }
}

/// Barrier parameter to restart from after the design moved by `shift`
/// (max-norm of the change in filtered density).
///
/// Restarting at the target barrier makes the iterate crawl along the box
/// when the worst-case field has to move far; a larger barrier lets it
/// cross the interior first. Tiny changes restart close to the target.
fn warm_barrier(cfg: &BarrierConfig, shift: f64) -> f64 {
    let r = (shift / WARM_REFERENCE_SHIFT).min(1.0);
    (cfg.mu_warm * r * r).max(cfg.mu_target)
}

pub(super) fn solve(adv: &Adversary, rho_tilde: &[f64], warm: Option<&InnerSolution>) -> Result<InnerSolution> {
    let pb = Problem::new(adv, rho_tilde)?;
    let cfg = adv.config;
    let model = adv.model;
    let concave = adv.law.is_concave(&adv.params);
    let warm = warm.filter(|w| w.status != InnerStatus::Trivial && w.delta.len() == pb.n());

    let (mut it, mut mu) = match warm {
        Some(w) => {
            let delta = adv.set.project_interior(&pb.ctx, &w.delta)?;
            let mut it = Iterate {
                delta,
                u: w.u.clone(),
                lambda: w.lambda,
                zl: w.z_lower.clone(),
                zu: w.z_upper.clone(),
                s: 0.0,
                nu: w.nu,
            };
            let shift = w.rho_tilde.iter().zip(rho_tilde).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let mu_w = warm_barrier(&cfg, shift);
            clamp_duals(&mut it, mu_w, false);
            (it, mu_w)
        }
        None => {
            let delta = adv.set.canonical_point(&pb.ctx)?;
            let moduli: Vec<f64> = (0..pb.n())
                .map(|e| pb.simp[e] * crate::material::young(delta[e], adv.law, &adv.params))
                .collect();
            let k = model.assemble(&moduli)?;
            let u = model.solve_state(&k)?;
            let mu = cfg.mu_init;
            let zl = delta.iter().map(|d| mu / d).collect();
            let zu = delta.iter().map(|d| mu / (1.0 - d)).collect();
            (
                Iterate {
                    delta,
                    u,
                    lambda: 0.0,
                    zl,
                    zu,
                    s: 0.0,
                    nu: 0.0,
                },
                mu,
            )
        }
    };

    let mut ev = pb
        .evaluate(&it.delta, &it.u, mu)?
        .ok_or_else(|| Error::InfeasibleSet("starting point is not interior".into()))?;
    if let Some(h) = ev.h {
        it.s = (-h).max(mu);
        if warm.is_none() || !(it.nu > 0.0) {
            it.nu = mu / it.s;
        }
        clamp_duals(&mut it, mu, ev.h.is_some());
    }
    if warm.is_none() {
        it.lambda = pb.estimate_lambda(&it, &ev, mu);
    }

    let mut penalty = 0.0f64;
    let mut iterations = 0usize;
    let mut status = InnerStatus::Converged;
    'stages: loop {
        let final_stage = mu <= cfg.mu_target;
        loop {
            let res = pb.residuals(&it, &ev, mu);
            if stage_done(&res.norms, mu, final_stage, adv) {
                break;
            }
            if iterations >= cfg.max_newton {
                if concave {
                    return Err(Error::NonConvergence {
                        iterations,
                        mu,
                        residual: res.norms.stationarity,
                    });
                }
                status = InnerStatus::Stagnated;
                break 'stages;
            }
            iterations += 1;

            let step = newton_step(&pb, &it, &ev, &res, mu)?;
            let mut alpha_max = max_step(&it.delta, &step.dd, cfg.tau).min(max_step(
                &it.delta.iter().map(|d| 1.0 - d).collect::<Vec<_>>(),
                &step.dd.iter().map(|d| -d).collect::<Vec<_>>(),
                cfg.tau,
            ));
            if ev.h.is_some() {
                alpha_max = alpha_max.min(max_step(&[it.s], &[step.ds], cfg.tau));
                penalty = penalty.max(2.0 * (it.nu + step.dnu).abs());
            }
            let merit = |ev: &Eval, s: f64| match ev.h {
                Some(h) => ev.phi + mu * s.ln() - penalty * (h + s).abs(),
                None => ev.phi,
            };
            let current = merit(&ev, it.s);
            let alpha_z = max_step(&it.zl, &step.dzl, cfg.tau)
                .min(max_step(&it.zu, &step.dzu, cfg.tau))
                .min(if ev.h.is_some() { max_step(&[it.nu], &[step.dnu], cfg.tau) } else { 1.0 });

            let mut slope: f64 = res.r_u.iter().zip(&step.du).map(|(r, d)| 2.0 * r * d).sum::<f64>()
                + (0..pb.n())
                    .map(|e| (res.grad[e] + it.lambda * pb.row[e]) * step.dd[e])
                    .sum::<f64>();
            if let (Some(h), Some(b)) = (ev.h, ev.b.as_ref()) {
                let bd: f64 = b.iter().zip(&step.dd).map(|(x, y)| x * y).sum();
                slope += mu * (bd + step.ds) / it.s + penalty * (h + it.s).abs();
            }
            let negligible = slope.abs() <= 1e-13 * (1.0 + current.abs());

            let mut alpha = alpha_max;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let delta: Vec<f64> = it.delta.iter().zip(&step.dd).map(|(d, s)| d + alpha * s).collect();
                let u: Vec<f64> = it.u.iter().zip(&step.du).map(|(d, s)| d + alpha * s).collect();
                if let Some(trial) = pb.evaluate(&delta, &u, mu)? {
                    let s = it.s + alpha * step.ds;
                    if negligible || merit(&trial, s) >= current + ARMIJO * alpha * slope {
                        accepted = Some((delta, u, s, trial));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((delta, u, s, trial)) = accepted else {
                if concave && res.norms.stationarity > 1e3 * cfg.tol.max(0.1 * mu) {
                    return Err(Error::NonConvergence {
                        iterations,
                        mu,
                        residual: res.norms.stationarity,
                    });
                }
                if concave {
                    break;
                }
                status = InnerStatus::Stagnated;
                break 'stages;
            };
            it.delta = delta;
            it.u = u;
            it.s = s;
            it.lambda += alpha * step.dl;
            for e in 0..pb.n() {
                it.zl[e] += alpha_z * step.dzl[e];
                it.zu[e] += alpha_z * step.dzu[e];
            }
            it.nu += alpha_z * step.dnu;
            clamp_duals(&mut it, mu, trial.h.is_some());
            ev = trial;
        }
        if final_stage {
            break;
        }
        mu = (mu * cfg.mu_decrease).max(cfg.mu_target);
        ev = pb
            .evaluate(&it.delta, &it.u, mu)?
            .ok_or_else(|| Error::InfeasibleSet("iterate left the interior".into()))?;
        clamp_duals(&mut it, mu, ev.h.is_some());
    }

    let res = pb.residuals(&it, &ev, mu);
    let compliance = crate::fe::compliance(model.force(), &it.u);
    let nu = it.nu;
    let min_box_distance = it
        .delta
        .iter()
        .fold(f64::INFINITY, |m, &d| m.min(d).min(1.0 - d));
    Ok(InnerSolution {
        delta: it.delta,
        u: it.u,
        lambda: it.lambda,
        nu,
        z_lower: it.zl,
        z_upper: it.zu,
        compliance,
        objective: if ev.h.is_some() { ev.phi + mu * it.s.ln() } else { ev.phi },
        mu,
        residuals: res.norms,
        newton_iterations: iterations,
        status,
        law: adv.law,
        rho_tilde: pb.rho_tilde.to_vec(),
        min_box_distance,
    })
}
