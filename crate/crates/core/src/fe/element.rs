//! Bilinear plane-strain quadrilateral with 2x2 Gauss quadrature.

use nalgebra::{Matrix3, SMatrix, SVector};

use super::mesh::Mesh;
use crate::error::{Error, Result};

pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Vector8 = SVector<f64, 8>;
pub type StrainDisplacement = SMatrix<f64, 3, 8>;

/// Isotropic plane-strain tensor for a unit Young's modulus, Voigt order
/// `(xx, yy, xy)` with engineering shear strain.
pub fn unit_plane_strain_tensor(nu: f64) -> Result<Matrix3<f64>> {
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::param("nu", nu, "in [0, 0.5)"));
    }
    let s = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok(Matrix3::new(
        s * (1.0 - nu),
        s * nu,
        0.0,
        s * nu,
        s * (1.0 - nu),
        0.0,
        0.0,
        0.0,
        s * (1.0 - 2.0 * nu) / 2.0,
    ))
}

/// Element stiffness for unit modulus, `Σ_l B_lᵀ C B_l w_l`.
///
/// Every element of a uniform grid shares the same geometry, so one instance
/// serves the whole mesh.
#[derive(Debug, Clone)]
pub struct UnitElementStiffness {
    pub matrix: Matrix8,
    /// Strain-displacement matrices at the four Gauss points.
    pub strain_displacement: [StrainDisplacement; 4],
    /// Quadrature weights including the Jacobian determinant.
    pub weights: [f64; 4],
    pub material: Matrix3<f64>,
    /// Orthonormal basis of the rigid-body modes (two translations and the
    /// infinitesimal rotation about the element center).
    pub rigid_modes: [Vector8; 3],
}

impl UnitElementStiffness {
    pub const INTEGRATION_POINTS: usize = 4;

    /// `u_eᵀ K̂ u_e` for an element-local displacement vector.
    pub fn energy(&self, ue: &Vector8) -> f64 {
        let w = self.deformation(ue);
        w.dot(&(self.matrix * w))
    }

    /// Remove the rigid-body part of `ue`.
    ///
    /// `K̂` annihilates rigid motion, so this leaves `K̂ ue` unchanged in
    /// exact arithmetic. In floating point it avoids cancellation when large
    /// rigid displacements carry small strains, as in a cantilever tip.
    pub fn deformation(&self, ue: &Vector8) -> Vector8 {
        let mut w = *ue;
        for r in &self.rigid_modes {
            w -= r * r.dot(ue);
        }
        w
    }
}

pub fn element_stiffness(mesh: &Mesh, nu: f64) -> Result<UnitElementStiffness> {
    let c = unit_plane_strain_tensor(nu)?;
    let (dx, dy) = (mesh.dx(), mesh.dy());
    let g = 1.0 / 3f64.sqrt();
    let points = [(-g, -g), (g, -g), (g, g), (-g, g)];
    // natural coordinates of the corner nodes, counter-clockwise from lower left
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let det_j = dx * dy / 4.0;

    let mut matrix = Matrix8::zeros();
    let mut bs = [StrainDisplacement::zeros(); 4];
    for (l, &(xi, eta)) in points.iter().enumerate() {
        let mut b = StrainDisplacement::zeros();
        for (a, &(xa, ea)) in corners.iter().enumerate() {
            let dn_dxi = 0.25 * xa * (1.0 + ea * eta);
            let dn_deta = 0.25 * ea * (1.0 + xa * xi);
            let dn_dx = dn_dxi * 2.0 / dx;
            let dn_dy = dn_deta * 2.0 / dy;
            b[(0, 2 * a)] = dn_dx;
            b[(1, 2 * a + 1)] = dn_dy;
            b[(2, 2 * a)] = dn_dy;
            b[(2, 2 * a + 1)] = dn_dx;
        }
        matrix += b.transpose() * c * b * det_j;
        bs[l] = b;
    }
    // symmetrize away rounding differences between (r, c) and (c, r)
    let matrix = (matrix + matrix.transpose()) * 0.5;

    let mut tx = Vector8::zeros();
    let mut ty = Vector8::zeros();
    let mut rot = Vector8::zeros();
    for (a, &(xa, ea)) in corners.iter().enumerate() {
        tx[2 * a] = 1.0;
        ty[2 * a + 1] = 1.0;
        rot[2 * a] = -ea * dy / 2.0;
        rot[2 * a + 1] = xa * dx / 2.0;
    }
    let rigid_modes = [tx.normalize(), ty.normalize(), rot.normalize()];
    Ok(UnitElementStiffness {
        matrix,
        strain_displacement: bs,
        weights: [det_j; 4],
        material: c,
        rigid_modes,
    })
}
