use super::mesh::Mesh;
use crate::error::{check_len, Error, Result};

/// Global load vector with the Dirichlet dofs it is paired with.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCase {
    pub force: Vec<f64>,
    pub fixed: Vec<usize>,
}

impl LoadCase {
    pub fn new(mesh: &Mesh, force: Vec<f64>, mut fixed: Vec<usize>) -> Result<Self> {
        check_len("load vector", mesh.n_dofs(), force.len())?;
        fixed.sort_unstable();
        fixed.dedup();
        if let Some(&d) = fixed.last() {
            if d >= mesh.n_dofs() {
                return Err(Error::param("fixed dof", d, "a valid dof index"));
            }
        }
        let mut force = force;
        for &d in &fixed {
            force[d] = 0.0;
        }
        Ok(LoadCase { force, fixed })
    }

    /// Cantilever clamped along `x = 0` and loaded by a uniform line load on
    /// the bottom edge over `[x0, x1]`, with resultant `total * direction`.
    ///
    /// Nodal forces are the consistent (exactly integrated) loads of the
    /// linear edge shape functions.
    pub fn cantilever(
        mesh: &Mesh,
        x0: f64,
        x1: f64,
        total: f64,
        direction: [f64; 2],
    ) -> Result<Self> {
        if !(x0 >= 0.0 && x1 <= mesh.width() && x0 < x1) {
            return Err(Error::InvalidParameter {
                name: "load interval",
                value: format!("[{x0}, {x1}]"),
                bound: "a nonempty subinterval of [0, width]",
            });
        }
        let norm = direction[0].hypot(direction[1]);
        if !(norm > 0.0) {
            return Err(Error::param("load direction", format!("{direction:?}"), "nonzero"));
        }
        let dir = [direction[0] / norm, direction[1] / norm];
        let traction = total / (x1 - x0);
        let h = mesh.dx();
        let mut force = vec![0.0; mesh.n_dofs()];
        for i in 0..mesh.nx() {
            let xa = i as f64 * h;
            let xb = xa + h;
            let s0 = xa.max(x0);
            let s1 = xb.min(x1);
            if s1 <= s0 {
                continue;
            }
            // ∫ N dx over the overlap for the two linear edge shape functions
            let right = ((s1 - xa).powi(2) - (s0 - xa).powi(2)) / (2.0 * h);
            let left = (s1 - s0) - right;
            for (node, share) in [(mesh.node_index(i, 0), left), (mesh.node_index(i + 1, 0), right)] {
                force[2 * node] += traction * share * dir[0];
                force[2 * node + 1] += traction * share * dir[1];
            }
        }
        let fixed = (0..=mesh.ny())
            .flat_map(|j| {
                let n = mesh.node_index(0, j);
                [2 * n, 2 * n + 1]
            })
            .collect();
        LoadCase::new(mesh, force, fixed)
    }
}
