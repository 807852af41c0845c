//! Linear-decay density filter on a structured grid.

use crate::error::{check_len, Error, Result};
use crate::fe::Mesh;

/// Sparse row-normalized convolution `ρ̃ = F ρ`.
///
/// Rows are stored in CSR form; `weights` are already divided by the row
/// sum so that `apply` is a plain sparse product.
#[derive(Debug, Clone)]
pub struct DensityFilter {
    radius: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    normalizers: Vec<f64>,
}

impl DensityFilter {
    /// Build the filter with kernel `max(0, R - d) * v_j` evaluated at element centers.
    pub fn new(mesh: &Mesh, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("R", radius, "positive and finite"));
        }
        let (nx, ny) = (mesh.nx(), mesh.ny());
        let (dx, dy) = (mesh.dx(), mesh.dy());
        let v = mesh.element_volume();
        let wx = (radius / dx).ceil() as usize;
        let wy = (radius / dy).ceil() as usize;

        let n = mesh.n_elements();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut normalizers = Vec::with_capacity(n);
        row_ptr.push(0);
        for e in 0..n {
            let (i, j) = mesh.element_position(e);
            let start = cols.len();
            let mut sum = 0.0;
            for ii in i.saturating_sub(wx)..(i + wx + 1).min(nx) {
                for jj in j.saturating_sub(wy)..(j + wy + 1).min(ny) {
                    let ox = (ii as f64 - i as f64) * dx;
                    let oy = (jj as f64 - j as f64) * dy;
                    let d = ox.hypot(oy);
                    if d < radius {
                        let w = (radius - d) * v;
                        cols.push(mesh.element_index(ii, jj));
                        weights.push(w);
                        sum += w;
                    }
                }
            }
            for w in &mut weights[start..] {
                *w /= sum;
            }
            normalizers.push(sum);
            row_ptr.push(cols.len());
        }
        Ok(DensityFilter {
            radius,
            row_ptr,
            cols,
            weights,
            normalizers,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.normalizers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalizers.is_empty()
    }

    /// Unnormalized row sums `Σ_j F_ej`.
    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    /// Normalized neighbor weights of element `e` as `(j, F_ej / Σ_k F_ek)`.
    pub fn row(&self, e: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[e]..self.row_ptr[e + 1];
        self.cols[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    pub fn apply(&self, rho: &[f64]) -> Result<Vec<f64>> {
        check_len("density vector", self.len(), rho.len())?;
        Ok((0..self.len())
            .map(|e| self.row(e).map(|(j, w)| w * rho[j]).sum())
            .collect())
    }

    /// Transpose map for sensitivities: `∂/∂ρ_j = Σ_e g̃_e F_ej / Σ_k F_ek`.
    pub fn chain_transpose(&self, grad_filtered: &[f64]) -> Result<Vec<f64>> {
        check_len("filtered gradient", self.len(), grad_filtered.len())?;
        let mut out = vec![0.0; self.len()];
        for (e, &g) in grad_filtered.iter().enumerate() {
            for (j, w) in self.row(e) {
                out[j] += w * g;
            }
        }
        Ok(out)
    }
}

pub fn build_filter(mesh: &Mesh, radius: f64) -> Result<DensityFilter> {
    DensityFilter::new(mesh, radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::build_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(f: &DensityFilter) -> Vec<Vec<f64>> {
        let n = f.len();
        let mut m = vec![vec![0.0; n]; n];
        for (e, row) in m.iter_mut().enumerate() {
            for (j, w) in f.row(e) {
                row[j] = w;
            }
        }
        m
    }

    #[test]
    fn small_radius_is_identity() {
        let mesh = build_mesh(5, 4, 1.0, 1.0).unwrap();
        let f = build_filter(&mesh, 0.1).unwrap();
        let rho: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        assert_eq!(f.apply(&rho).unwrap(), rho);
        assert_eq!(f.chain_transpose(&rho).unwrap(), rho);
    }

    #[test]
    fn three_element_row() {
        let mesh = build_mesh(3, 1, 3.0, 1.0).unwrap();
        let f = build_filter(&mesh, 1.5).unwrap();
        let w: Vec<(usize, f64)> = f.row(1).collect();
        assert_eq!(w.len(), 3);
        for (j, wj) in w {
            // raw weights (0.5, 1.5, 0.5) * v before normalization
            let expected = if j == 1 { 0.6 } else { 0.2 };
            assert!((wj - expected).abs() < 1e-15);
        }
        let out = f.apply(&[4.0, 8.0, 12.0]).unwrap();
        assert!((out[1] - 8.0).abs() < 1e-14);
        let out = f.apply(&[1.0, 0.0, 0.0]).unwrap();
        assert!((out[1] - 0.2).abs() < 1e-15);
        // edge elements see one neighbor: (1.5, 0.5) -> (0.75, 0.25)
        assert!((out[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn interior_weights_radially_symmetric() {
        let mesh = build_mesh(11, 11, 1.0, 1.0).unwrap();
        let f = build_filter(&mesh, 0.35).unwrap();
        let c = mesh.element_index(5, 5);
        let w: std::collections::HashMap<usize, f64> = f.row(c).collect();
        for (a, b) in [((4, 5), (6, 5)), ((5, 4), (5, 6)), ((4, 5), (5, 4)), ((3, 3), (7, 7))] {
            let wa = w[&mesh.element_index(a.0, a.1)];
            let wb = w[&mesh.element_index(b.0, b.1)];
            assert!((wa - wb).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_dense_oracle() {
        let mesh = build_mesh(4, 4, 1.0, 1.0).unwrap();
        let f = build_filter(&mesh, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
        // independent evaluation straight from the kernel definition
        let mut expected = vec![0.0; 16];
        for (e, out) in expected.iter_mut().enumerate() {
            let ce = mesh.element_center(e);
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..16 {
                let cj = mesh.element_center(j);
                let d = ((ce[0] - cj[0]).powi(2) + (ce[1] - cj[1]).powi(2)).sqrt();
                let w = (0.6 - d).max(0.0) * mesh.element_volume();
                num += w * rho[j];
                den += w;
            }
            *out = num / den;
        }
        let got = f.apply(&rho).unwrap();
        let m = dense(&f);
        for e in 0..16 {
            assert!((got[e] - expected[e]).abs() < 1e-14);
            let mv: f64 = m[e].iter().zip(&rho).map(|(a, b)| a * b).sum();
            assert!((mv - got[e]).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_vector_transpose_is_column() {
        let mesh = build_mesh(6, 3, 2.0, 1.0).unwrap();
        let f = build_filter(&mesh, 0.5).unwrap();
        let m = dense(&f);
        let mut g = vec![0.0; 18];
        g[7] = 1.0;
        let col = f.chain_transpose(&g).unwrap();
        for j in 0..18 {
            assert_eq!(col[j], m[7][j]);
        }
    }

    #[test]
    fn rejects_nonpositive_radius() {
        let mesh = build_mesh(2, 2, 1.0, 1.0).unwrap();
        assert!(build_filter(&mesh, 0.0).is_err());
        assert!(build_filter(&mesh, -1.0).is_err());
        assert!(build_filter(&mesh, f64::NAN).is_err());
    }
}
