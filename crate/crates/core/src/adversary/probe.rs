//! Direct evaluation of the inner Hessian quadratic form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::fe::FeModel;
use crate::material::{young_derivs, MaterialLaw, MaterialParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    /// Largest `(x, y)ᵀ ∇²J (x, y)` over the unit directions tried.
    pub max_form: f64,
    /// Largest `(x, y)ᵀ ∇²J (x, y) + ε ‖x‖²`, i.e. the form without the ridge.
    pub max_form_without_ridge: f64,
    /// Largest form over directions with `y = 0`.
    pub max_delta_only: f64,
    /// Largest relative gap between the direct product and the
    /// completed-square expression `−2 Σ ρ̃^p E (y−v)ᵀK̂(y−v) − ε‖x‖²`.
    /// `None` unless the law is the inverse law, where the identity holds.
    pub identity_error: Option<f64>,
}

/// Sample `n_dirs` random unit directions in `(δ, u)` space and evaluate
/// the Hessian of `J = 2fᵀu − Σ ρ̃^p E(δ) uᵀK̂u − ε/2 ‖δ‖²` along each.
#[allow(clippy::too_many_arguments)]
pub fn concavity_probe(
    model: &FeModel,
    rho_tilde: &[f64],
    delta: &[f64],
    u: &[f64],
    params: &MaterialParams,
    law: MaterialLaw,
    eps: f64,
    n_dirs: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let n = model.n_elements();
    check_len("filtered densities", n, rho_tilde.len())?;
    check_len("degradation field", n, delta.len())?;
    check_len("displacement", model.mesh().n_dofs(), u.len())?;
    if let Some((element, &value)) = delta.iter().enumerate().find(|(_, &d)| !(d > 0.0 && d < 1.0)) {
        return Err(Error::BarrierDomain { element, value });
    }
    let kh = model.element_stiffness().matrix;
    let free: Vec<bool> = (0..u.len()).map(|d| model.layout().is_free(d)).collect();
    let c = params.softening();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut report = ProbeReport {
        max_form: f64::NEG_INFINITY,
        max_form_without_ridge: f64::NEG_INFINITY,
        max_delta_only: f64::NEG_INFINITY,
        identity_error: matches!(law, MaterialLaw::Inverse).then_some(0.0),
    };
    for k in 0..n_dirs {
        let delta_only = k % 4 == 3;
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y: Vec<f64> = (0..u.len())
            .map(|d| if free[d] && !delta_only { rng.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let norm = (x.iter().chain(&y).map(|v| v * v).sum::<f64>()).sqrt();
        x.iter_mut().chain(y.iter_mut()).for_each(|v| *v /= norm);
        let xx: f64 = x.iter().map(|v| v * v).sum();

        let mut direct = -eps * xx;
        let mut square = -eps * xx;
        for e in 0..n {
            let a = params.simp(rho_tilde[e]);
            let (ev, e1, e2) = young_derivs(delta[e], law, params);
            let ue = model.element_deformation(e, u);
            let ye = model.element_displacement(e, &y);
            let kue = kh * ue;
            let q = ue.dot(&kue);
            direct += -2.0 * a * ev * ye.dot(&(kh * ye)) - 4.0 * a * e1 * x[e] * kue.dot(&ye)
                - a * e2 * q * x[e] * x[e];
            let w = ye - ue * (x[e] * ev * c);
            square += -2.0 * a * ev * w.dot(&(kh * w));
        }
        report.max_form = report.max_form.max(direct);
        report.max_form_without_ridge = report.max_form_without_ridge.max(direct + eps * xx);
        if delta_only {
            report.max_delta_only = report.max_delta_only.max(direct);
        }
        if let Some(err) = report.identity_error.as_mut() {
            let scale = direct.abs().max(square.abs()).max(f64::MIN_POSITIVE);
            *err = err.max((direct - square).abs() / scale);
        }
    }
    Ok(report)
}
