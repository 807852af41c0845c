//! Structured rectangular grid of bilinear quadrilaterals.
//!
//! Nodes are numbered column by column, `node = i * (ny + 1) + j`, where `i`
//! runs along x and `j` along y. Elements use the same column-major layout,
//! `e = i * ny + j`. Each node carries two dofs `(2 * node, 2 * node + 1)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
}

impl Mesh {
    pub fn new(nx: usize, ny: usize, width: f64, height: f64) -> Result<Self> {
        if nx == 0 {
            return Err(Error::param("nx", nx, "at least 1"));
        }
        if ny == 0 {
            return Err(Error::param("ny", ny, "at least 1"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::param("width", width, "positive and finite"));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::param("height", height, "positive and finite"));
        }
        Ok(Mesh {
            nx,
            ny,
            width,
            height,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Element pitch along x.
    pub fn dx(&self) -> f64 {
        self.width / self.nx as f64
    }

    /// Element pitch along y.
    pub fn dy(&self) -> f64 {
        self.height / self.ny as f64
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn element_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        i * self.ny + j
    }

    /// Grid position `(i, j)` of element `e`.
    pub fn element_position(&self, e: usize) -> (usize, usize) {
        (e / self.ny, e % self.ny)
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        i * (self.ny + 1) + j
    }

    pub fn node_position(&self, node: usize) -> (usize, usize) {
        (node / (self.ny + 1), node % (self.ny + 1))
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.node_position(node);
        [i as f64 * self.dx(), j as f64 * self.dy()]
    }

    /// Counter-clockwise corner nodes starting at the lower left.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.element_position(e);
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let (i, j) = self.element_position(e);
        [(i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy()]
    }

    /// Element area times unit thickness; identical for every element.
    pub fn element_volume(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn element_volumes(&self) -> Vec<f64> {
        vec![self.element_volume(); self.n_elements()]
    }

    /// Measure of the whole domain, `|Ω|`.
    pub fn total_volume(&self) -> f64 {
        self.width * self.height
    }

    /// `v_e / |Ω|` for every element.
    pub fn volume_shares(&self) -> Vec<f64> {
        vec![1.0 / self.n_elements() as f64; self.n_elements()]
    }
}

/// Uniform mesh over `[0, width] x [0, height]`.
pub fn build_mesh(nx: usize, ny: usize, width: f64, height: f64) -> Result<Mesh> {
    Mesh::new(nx, ny, width, height)
}
