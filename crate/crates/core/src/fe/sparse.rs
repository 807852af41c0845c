//! Reduced sparse symmetric systems and their Cholesky factorization.
//!
//! Fixed dofs are eliminated up front. The remaining free dofs are permuted
//! with a geometric nested-dissection order of the node grid, the upper
//! triangle of the permuted matrix is stored column-wise, and the symbolic
//! Cholesky structure (elimination tree, supernodes, front patterns) is
//! computed once per layout. The numeric factorization is multifrontal:
//! each supernode assembles a dense front, factors its leading columns and
//! passes the Schur complement up the tree.

use std::sync::Arc;

use super::element::Matrix8;
use super::mesh::Mesh;
use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

/// Sparsity layout of the reduced stiffness system, shared by every matrix
/// assembled on the same mesh and boundary conditions.
#[derive(Debug)]
pub struct SystemLayout {
    n_full: usize,
    /// Full dof -> permuted reduced index, `NONE` when fixed.
    full_to_reduced: Vec<u32>,
    reduced_to_full: Vec<u32>,
    /// Upper-triangular CSC pattern; row indices sorted, diagonal last.
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    /// Per element, the value slot of each local entry `(r, c)` in row-major
    /// order. Each off-diagonal pair is mapped once; the mirror slot is `NONE`.
    scatter: Vec<[u32; 64]>,
    symbolic: Symbolic,
}

#[derive(Debug)]
struct Symbolic {
    /// Supernode `s` owns columns `sn_col[s]..sn_col[s + 1]`.
    sn_col: Vec<usize>,
    /// Front rows of each supernode: its own columns, then the rows below.
    sn_row_ptr: Vec<usize>,
    sn_rows: Vec<u32>,
    /// Offset of each dense column-major panel (`rows × columns`).
    sn_val_ptr: Vec<usize>,
    sn_child_ptr: Vec<usize>,
    sn_children: Vec<u32>,
    /// Lower-triangle entries of each column as `(row, value slot)`.
    low_ptr: Vec<usize>,
    low_row: Vec<u32>,
    low_slot: Vec<u32>,
    factor_nnz: usize,
    max_front: usize,
}

impl SystemLayout {
    pub fn new(mesh: &Mesh, fixed: &[usize]) -> Result<Arc<Self>> {
        let n_full = mesh.n_dofs();
        let mut is_fixed = vec![false; n_full];
        for &d in fixed {
            if d >= n_full {
                return Err(Error::param("fixed dof", d, "a valid dof index"));
            }
            is_fixed[d] = true;
        }

        let mut full_to_reduced = vec![NONE; n_full];
        let mut reduced_to_full = Vec::with_capacity(n_full);
        for node in nested_dissection(mesh.nx() + 1, mesh.ny() + 1) {
            for d in [2 * node, 2 * node + 1] {
                if !is_fixed[d] {
                    full_to_reduced[d] = reduced_to_full.len() as u32;
                    reduced_to_full.push(d as u32);
                }
            }
        }
        let n = reduced_to_full.len();
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "fixed dofs",
                value: format!("{} of {}", fixed.len(), n_full),
                bound: "leaving at least one free dof",
            });
        }

        // upper pattern: rows <= col
        let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n];
        for e in 0..mesh.n_elements() {
            let dofs = mesh.element_dofs(e).map(|d| full_to_reduced[d]);
            for &a in &dofs {
                for &b in &dofs {
                    if a != NONE && b != NONE && a <= b {
                        cols[b as usize].push(a);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }

        let slot = |row: u32, col: u32| -> u32 {
            let rows = &row_idx[col_ptr[col as usize]..col_ptr[col as usize + 1]];
            let k = rows.binary_search(&row).expect("entry is in the pattern");
            (col_ptr[col as usize] + k) as u32
        };
        let scatter = (0..mesh.n_elements())
            .map(|e| {
                let dofs = mesh.element_dofs(e).map(|d| full_to_reduced[d]);
                let mut map = [NONE; 64];
                for r in 0..8 {
                    for c in 0..8 {
                        let (a, b) = (dofs[r], dofs[c]);
                        if a == NONE || b == NONE {
                            continue;
                        }
                        if a < b || r == c {
                            map[8 * r + c] = slot(a, b);
                        }
                    }
                }
                map
            })
            .collect();

        let symbolic = Symbolic::analyze(n, &col_ptr, &row_idx);
        Ok(Arc::new(SystemLayout {
            n_full,
            full_to_reduced,
            reduced_to_full,
            col_ptr,
            row_idx,
            scatter,
            symbolic,
        }))
    }

    /// Number of free (reduced) dofs.
    pub fn n_free(&self) -> usize {
        self.reduced_to_full.len()
    }

    pub fn n_full(&self) -> usize {
        self.n_full
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.full_to_reduced[dof] != NONE
    }

    /// Stored entries of the upper triangle.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Stored entries of the Cholesky factor, including fill.
    pub fn factor_nnz(&self) -> usize {
        self.symbolic.factor_nnz
    }

    fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.reduced_to_full
            .iter()
            .map(|&d| full[d as usize])
            .collect()
    }

    fn scatter_full(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_full];
        for (k, &d) in self.reduced_to_full.iter().enumerate() {
            full[d as usize] = reduced[k];
        }
        full
    }
}

/// Symmetric matrix over the free dofs of a [`SystemLayout`].
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    layout: Arc<SystemLayout>,
    values: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(layout: Arc<SystemLayout>) -> Self {
        let values = vec![0.0; layout.nnz()];
        SymmetricMatrix { layout, values }
    }

    pub fn layout(&self) -> &Arc<SystemLayout> {
        &self.layout
    }

    /// Adds a symmetric element matrix; rows and columns of fixed dofs are dropped.
    pub fn add_element(&mut self, e: usize, ke: &Matrix8) {
        let map = &self.layout.scatter[e];
        for r in 0..8 {
            for c in 0..8 {
                let s = map[8 * r + c];
                if s != NONE {
                    self.values[s as usize] += ke[(r, c)];
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `K w` for a full-length vector; fixed rows of the result are zero and
    /// fixed entries of `w` are ignored.
    pub fn mul_full(&self, w: &[f64]) -> Vec<f64> {
        let x = self.layout.gather(w);
        let y = self.mul_reduced(&x);
        self.layout.scatter_full(&y)
    }

    fn mul_reduced(&self, x: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let mut y = vec![0.0; x.len()];
        for col in 0..x.len() {
            for p in l.col_ptr[col]..l.col_ptr[col + 1] {
                let row = l.row_idx[p] as usize;
                let v = self.values[p];
                y[row] += v * x[col];
                if row != col {
                    y[col] += v * x[row];
                }
            }
        }
        y
    }

    /// Dense copy indexed by free dofs in ascending full-dof order.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let l = &self.layout;
        let n = l.n_free();
        let mut natural: Vec<usize> = l.reduced_to_full.iter().map(|&d| d as usize).collect();
        natural.sort_unstable();
        let pos_of = |reduced: usize| -> usize {
            natural
                .binary_search(&(l.reduced_to_full[reduced] as usize))
                .unwrap()
        };
        let mut dense = vec![vec![0.0; n]; n];
        for col in 0..n {
            for p in l.col_ptr[col]..l.col_ptr[col + 1] {
                let row = l.row_idx[p] as usize;
                let (a, b) = (pos_of(row), pos_of(col));
                dense[a][b] = self.values[p];
                dense[b][a] = self.values[p];
            }
        }
        dense
    }

    pub fn factor(&self) -> Result<Cholesky> {
        Cholesky::new(self)
    }
}

/// Numeric Cholesky factor `P K Pᵀ = L Lᵀ`, stored as dense supernode panels.
#[derive(Debug, Clone)]
pub struct Cholesky {
    layout: Arc<SystemLayout>,
    l_val: Vec<f64>,
}

/// Below this many multiply-adds the Schur update uses a plain loop.
const GEMM_MIN_WORK: usize = 4096;

impl Cholesky {
    fn new(matrix: &SymmetricMatrix) -> Result<Self> {
        let layout = Arc::clone(&matrix.layout);
        let sym = &layout.symbolic;
        let n = layout.n_free();
        let n_sn = sym.sn_col.len() - 1;
        let mut l_val = vec![0.0; *sym.sn_val_ptr.last().unwrap()];
        let mut pos = vec![0usize; n];
        let mut front = vec![0.0; sym.max_front * sym.max_front];
        let mut diag = Vec::new();
        let mut updates: Vec<Vec<f64>> = vec![Vec::new(); n_sn];

        for sn in 0..n_sn {
            let (f, l) = (sym.sn_col[sn], sym.sn_col[sn + 1]);
            let w = l - f;
            let rows = &sym.sn_rows[sym.sn_row_ptr[sn]..sym.sn_row_ptr[sn + 1]];
            let m = rows.len();
            for (t, &r) in rows.iter().enumerate() {
                pos[r as usize] = t;
            }
            let fr = &mut front[..m * m];
            fr.fill(0.0);
            for c in 0..w {
                let k = f + c;
                for idx in sym.low_ptr[k]..sym.low_ptr[k + 1] {
                    fr[c * m + pos[sym.low_row[idx] as usize]] += matrix.values[sym.low_slot[idx] as usize];
                }
            }
            diag.clear();
            diag.extend((0..w).map(|c| fr[c * m + c]));

            for &child in &sym.sn_children[sym.sn_child_ptr[sn]..sym.sn_child_ptr[sn + 1]] {
                let child = child as usize;
                let u = std::mem::take(&mut updates[child]);
                let cw = sym.sn_col[child + 1] - sym.sn_col[child];
                let crows = &sym.sn_rows[sym.sn_row_ptr[child] + cw..sym.sn_row_ptr[child + 1]];
                let cm = crows.len();
                for b in 0..cm {
                    let col = pos[crows[b] as usize] * m;
                    for a in b..cm {
                        fr[col + pos[crows[a] as usize]] += u[b * cm + a];
                    }
                }
            }

            // Left-looking dense factorization of the leading w columns.
            for c in 0..w {
                let (done, rest) = fr.split_at_mut(c * m);
                let col = &mut rest[c..m];
                for j in 0..c {
                    let lj = &done[j * m + c..j * m + m];
                    let lcj = lj[0];
                    if lcj != 0.0 {
                        for (x, y) in col.iter_mut().zip(lj) {
                            *x -= lcj * y;
                        }
                    }
                }
                let d = col[0];
                if !(d > 1e-14 * diag[c].abs()) || !d.is_finite() {
                    return Err(Error::NotPositiveDefinite {
                        row: layout.reduced_to_full[f + c] as usize,
                        pivot: d,
                    });
                }
                let sq = d.sqrt();
                col[0] = sq;
                for x in &mut col[1..] {
                    *x /= sq;
                }
            }

            let cm = m - w;
            if cm > 0 {
                if w * cm * cm >= GEMM_MIN_WORK {
                    let (panel, trailing) = fr.split_at_mut(w * m);
                    // SAFETY: `panel` holds the w factored columns and
                    // `trailing` the rest of the front; the strides keep every
                    // access inside those two disjoint slices.
                    unsafe {
                        matrixmultiply::dgemm(
                            cm,
                            w,
                            cm,
                            -1.0,
                            panel.as_ptr().add(w),
                            1,
                            m as isize,
                            panel.as_ptr().add(w),
                            m as isize,
                            1,
                            1.0,
                            trailing.as_mut_ptr().add(w),
                            1,
                            m as isize,
                        );
                    }
                } else {
                    for b in 0..cm {
                        for j in 0..w {
                            let lbj = fr[j * m + w + b];
                            if lbj == 0.0 {
                                continue;
                            }
                            for a in b..cm {
                                fr[(w + b) * m + w + a] -= fr[j * m + w + a] * lbj;
                            }
                        }
                    }
                }
                let mut u = vec![0.0; cm * cm];
                for b in 0..cm {
                    let src = (w + b) * m + w;
                    u[b * cm + b..b * cm + cm].copy_from_slice(&fr[src + b..src + cm]);
                }
                updates[sn] = u;
            }
            l_val[sym.sn_val_ptr[sn]..sym.sn_val_ptr[sn + 1]].copy_from_slice(&fr[..w * m]);
        }
        Ok(Cholesky { layout, l_val })
    }

    /// Solves `K x = b` for a full-length right-hand side. Entries of `b` on
    /// fixed dofs are ignored and the returned `x` is zero there.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = self.layout.gather(b);
        self.solve_reduced_in_place(&mut y);
        self.layout.scatter_full(&y)
    }

    fn solve_reduced_in_place(&self, y: &mut [f64]) {
        let sym = &self.layout.symbolic;
        let n_sn = sym.sn_col.len() - 1;
        for sn in 0..n_sn {
            let f = sym.sn_col[sn];
            let w = sym.sn_col[sn + 1] - f;
            let rows = &sym.sn_rows[sym.sn_row_ptr[sn]..sym.sn_row_ptr[sn + 1]];
            let m = rows.len();
            let panel = &self.l_val[sym.sn_val_ptr[sn]..sym.sn_val_ptr[sn + 1]];
            for c in 0..w {
                let col = &panel[c * m..c * m + m];
                let yc = y[f + c] / col[c];
                y[f + c] = yc;
                for r in c + 1..m {
                    y[rows[r] as usize] -= col[r] * yc;
                }
            }
        }
        for sn in (0..n_sn).rev() {
            let f = sym.sn_col[sn];
            let w = sym.sn_col[sn + 1] - f;
            let rows = &sym.sn_rows[sym.sn_row_ptr[sn]..sym.sn_row_ptr[sn + 1]];
            let m = rows.len();
            let panel = &self.l_val[sym.sn_val_ptr[sn]..sym.sn_val_ptr[sn + 1]];
            for c in (0..w).rev() {
                let col = &panel[c * m..c * m + m];
                let mut acc = y[f + c];
                for r in c + 1..m {
                    acc -= col[r] * y[rows[r] as usize];
                }
                y[f + c] = acc / col[c];
            }
        }
    }
}

impl Symbolic {
    fn analyze(n: usize, col_ptr: &[usize], row_idx: &[u32]) -> Self {
        // elimination tree of the upper pattern
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &r in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
                let mut i = r;
                while i != NONE && (i as usize) < k {
                    let next = ancestor[i as usize];
                    ancestor[i as usize] = k as u32;
                    if next == NONE {
                        parent[i as usize] = k as u32;
                    }
                    i = next;
                }
            }
        }

        // column patterns of L: row k of L is the etree reach of A(:, k)
        let mut cols: Vec<Vec<u32>> = (0..n as u32).map(|k| vec![k]).collect();
        let mut mark = vec![NONE; n];
        for k in 0..n {
            mark[k] = k as u32;
            for &r in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
                let mut i = r;
                while mark[i as usize] != k as u32 {
                    mark[i as usize] = k as u32;
                    cols[i as usize].push(k as u32);
                    i = parent[i as usize];
                }
            }
        }

        // fundamental supernodes: chains where each column's pattern is its
        // parent's plus itself
        let mut fundamental = vec![0];
        for j in 1..n {
            let chain = parent[j - 1] == j as u32 && cols[j - 1].len() == cols[j].len() + 1;
            if !chain {
                fundamental.push(j);
            }
        }
        fundamental.push(n);

        // Relaxed amalgamation: absorb a supernode into the one right after
        // it when that one is its parent and the merged panel stays mostly
        // nonzero. Narrow panels waste more time than explicit zeros.
        let mut sn_col = vec![0];
        let mut true_nnz = 0usize;
        for t in 0..fundamental.len() - 1 {
            let (f, l) = (fundamental[t], fundamental[t + 1]);
            let w = l - f;
            true_nnz += cols[f].len() * w - w * (w - 1) / 2;
            let next_is_parent = l < n && parent[l - 1] == l as u32;
            if next_is_parent {
                let (nf, nl) = (l, fundamental[t + 2]);
                let start = *sn_col.last().unwrap();
                let mw = nl - start;
                let m = mw + cols[nf].len() - (nl - nf);
                let panel = m * mw - mw * (mw - 1) / 2;
                let next_w = nl - nf;
                let next_nnz = cols[nf].len() * next_w - next_w * (next_w - 1) / 2;
                let zeros = panel - (true_nnz + next_nnz);
                if mw <= 8 || (mw <= 64 && 10 * zeros <= panel) {
                    continue;
                }
            }
            sn_col.push(l);
            true_nnz = 0;
        }
        let n_sn = sn_col.len() - 1;
        let mut sn_of = vec![0u32; n];
        for sn in 0..n_sn {
            for j in sn_col[sn]..sn_col[sn + 1] {
                sn_of[j] = sn as u32;
            }
        }

        let mut sn_row_ptr = vec![0];
        let mut sn_rows = Vec::new();
        let mut sn_val_ptr = vec![0];
        let mut sn_parent = vec![NONE; n_sn];
        let mut factor_nnz = 0;
        let mut max_front = 0;
        for sn in 0..n_sn {
            let (f, l) = (sn_col[sn], sn_col[sn + 1]);
            let w = l - f;
            // own columns, then the rows below the last column
            sn_rows.extend((f..l).map(|j| j as u32));
            sn_rows.extend_from_slice(&cols[l - 1][1..]);
            let m = sn_rows.len() - sn_row_ptr[sn];
            sn_row_ptr.push(sn_rows.len());
            sn_val_ptr.push(sn_val_ptr[sn] + m * w);
            factor_nnz += m * w - w * (w - 1) / 2;
            max_front = max_front.max(m);
            let p = parent[l - 1];
            if p != NONE {
                sn_parent[sn] = sn_of[p as usize];
            }
        }
        let mut counts = vec![0usize; n_sn + 1];
        for &p in &sn_parent {
            if p != NONE {
                counts[p as usize + 1] += 1;
            }
        }
        for s in 0..n_sn {
            counts[s + 1] += counts[s];
        }
        let sn_child_ptr = counts.clone();
        let mut sn_children = vec![0u32; counts[n_sn]];
        for (s, &p) in sn_parent.iter().enumerate() {
            if p != NONE {
                sn_children[counts[p as usize]] = s as u32;
                counts[p as usize] += 1;
            }
        }

        // transpose the upper pattern: entry (r, c), r <= c, is row c of
        // lower column r
        let mut low_ptr = vec![0usize; n + 1];
        for &r in row_idx {
            low_ptr[r as usize + 1] += 1;
        }
        for k in 0..n {
            low_ptr[k + 1] += low_ptr[k];
        }
        let mut next = low_ptr.clone();
        let mut low_row = vec![0u32; row_idx.len()];
        let mut low_slot = vec![0u32; row_idx.len()];
        for c in 0..n {
            for p in col_ptr[c]..col_ptr[c + 1] {
                let r = row_idx[p] as usize;
                low_row[next[r]] = c as u32;
                low_slot[next[r]] = p as u32;
                next[r] += 1;
            }
        }

        Symbolic {
            sn_col,
            sn_row_ptr,
            sn_rows,
            sn_val_ptr,
            sn_child_ptr,
            sn_children,
            low_ptr,
            low_row,
            low_slot,
            factor_nnz,
            max_front,
        }
    }
}

/// Nested-dissection order of an `ni x nj` node grid (column-major node ids).
///
/// Boxes are split across their longer side by a single grid line, which
/// separates the two halves for bilinear quadrilaterals.
fn nested_dissection(ni: usize, nj: usize) -> Vec<usize> {
    fn recurse(i0: usize, i1: usize, j0: usize, j1: usize, nj: usize, out: &mut Vec<usize>) {
        let (wi, wj) = (i1 - i0, j1 - j0);
        if wi == 0 || wj == 0 {
            return;
        }
        if wi.max(wj) < 3 || wi * wj <= 16 {
            for i in i0..i1 {
                for j in j0..j1 {
                    out.push(i * nj + j);
                }
            }
            return;
        }
        if wi >= wj {
            let mid = (i0 + i1) / 2;
            recurse(i0, mid, j0, j1, nj, out);
            recurse(mid + 1, i1, j0, j1, nj, out);
            out.extend((j0..j1).map(|j| mid * nj + j));
        } else {
            let mid = (j0 + j1) / 2;
            recurse(i0, i1, j0, mid, nj, out);
            recurse(i0, i1, mid + 1, j1, nj, out);
            out.extend((i0..i1).map(|i| i * nj + mid));
        }
    }
    let mut out = Vec::with_capacity(ni * nj);
    recurse(0, ni, 0, nj, nj, &mut out);
    out
}
