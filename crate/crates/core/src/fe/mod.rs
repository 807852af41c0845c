//! Finite element model of the plane-strain state problem.

mod element;
mod load;
mod mesh;
mod sparse;

use std::sync::Arc;

pub use element::{
    element_stiffness, unit_plane_strain_tensor, Matrix8, StrainDisplacement,
    UnitElementStiffness, Vector8,
};
pub use load::LoadCase;
pub use mesh::{build_mesh, Mesh};
pub use sparse::{Cholesky, SymmetricMatrix, SystemLayout};

use crate::error::{check_len, Error, Result};

/// Mesh, unit element stiffness, load case and the reduced system layout.
#[derive(Debug, Clone)]
pub struct FeModel {
    mesh: Mesh,
    stiffness: UnitElementStiffness,
    load: LoadCase,
    layout: Arc<SystemLayout>,
    nu: f64,
}

impl FeModel {
    pub fn new(mesh: Mesh, nu: f64, load: LoadCase) -> Result<Self> {
        check_len("load vector", mesh.n_dofs(), load.force.len())?;
        let stiffness = element_stiffness(&mesh, nu)?;
        let layout = SystemLayout::new(&mesh, &load.fixed)?;
        Ok(FeModel {
            mesh,
            stiffness,
            load,
            layout,
            nu,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn element_stiffness(&self) -> &UnitElementStiffness {
        &self.stiffness
    }

    pub fn load(&self) -> &LoadCase {
        &self.load
    }

    pub fn force(&self) -> &[f64] {
        &self.load.force
    }

    pub fn layout(&self) -> &Arc<SystemLayout> {
        &self.layout
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.nu
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    /// `K = Σ_e E_e K̂_e` over the free dofs.
    pub fn assemble(&self, moduli: &[f64]) -> Result<SymmetricMatrix> {
        check_len("moduli", self.n_elements(), moduli.len())?;
        if let Some((e, &m)) = moduli
            .iter()
            .enumerate()
            .find(|(_, &m)| !(m > 0.0 && m.is_finite()))
        {
            return Err(Error::InvalidParameter {
                name: "effective modulus",
                value: format!("{m} at element {e}"),
                bound: "positive and finite",
            });
        }
        Ok(self.assemble_with(|e| self.stiffness.matrix * moduli[e]))
    }

    /// Assembles arbitrary symmetric element matrices into the shared layout.
    pub fn assemble_with(&self, mut element_matrix: impl FnMut(usize) -> Matrix8) -> SymmetricMatrix {
        let mut k = SymmetricMatrix::zeros(Arc::clone(&self.layout));
        for e in 0..self.n_elements() {
            k.add_element(e, &element_matrix(e));
        }
        k
    }

    /// Displacements for the model's own load.
    pub fn solve_state(&self, k: &SymmetricMatrix) -> Result<Vec<f64>> {
        Ok(k.factor()?.solve(&self.load.force))
    }

    pub fn element_displacement(&self, e: usize, u: &[f64]) -> Vector8 {
        let dofs = self.mesh.element_dofs(e);
        Vector8::from_fn(|r, _| u[dofs[r]])
    }

    /// Element displacement with its rigid-body part removed.
    pub fn element_deformation(&self, e: usize, u: &[f64]) -> Vector8 {
        self.stiffness.deformation(&self.element_displacement(e, u))
    }

    /// `u_eᵀ K̂_e u_e` for every element.
    pub fn element_energies(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n_elements())
            .map(|e| self.stiffness.energy(&self.element_displacement(e, u)))
            .collect()
    }

    /// Compliance of the model load for the given moduli.
    pub fn compliance_for(&self, moduli: &[f64]) -> Result<f64> {
        let k = self.assemble(moduli)?;
        let u = self.solve_state(&k)?;
        Ok(compliance(&self.load.force, &u))
    }
}

/// Solves `K u = f` for an arbitrary load case on the layout of `k`.
pub fn solve_state(k: &SymmetricMatrix, load: &LoadCase) -> Result<Vec<f64>> {
    check_len("load vector", k.layout().n_full(), load.force.len())?;
    Ok(k.factor()?.solve(&load.force))
}

/// `fᵀu`.
pub fn compliance(force: &[f64], u: &[f64]) -> f64 {
    force.iter().zip(u).map(|(f, u)| f * u).sum()
}
