//! Auxiliary forms of the two preconditioning stages.
//!
//! The first stage uses a diagonal form on the broken LGL layout. The second
//! uses a form on the continuous space built from the piecewise multilinear
//! interpolant on each LGL lattice: on cells that are strongly anisotropic in
//! direction `k` the directional derivative is integrated exactly along `k`,
//! elsewhere an inverse estimate replaces it by a lumped diagonal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{pattern_code, Mesh};
use crate::space::{BrokenLayout, ConformingSpace};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::tensor::{linear_index, multi_index};

/// Constants of the first-stage diagonal form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOneWeights {
    pub beta1: f64,
    pub rho1: f64,
    pub c1sq: f64,
    pub gamma: f64,
}

impl Default for StageOneWeights {
    fn default() -> Self {
        Self { beta1: 0.15, rho1: 1.25, c1sq: 10.0, gamma: 3.0 }
    }
}

/// `W_xi = sum_k w_k^{-1} prod_{j != k} w_j` for the per-direction weights of a node.
pub fn node_weight(w: &[f64]) -> f64 {
    (0..w.len()).map(|k| (0..w.len()).filter(|&j| j != k).map(|j| w[j]).product::<f64>() / w[k]).sum()
}

/// Diagonal of the first-stage form on the broken LGL layout:
/// `beta1 c1^2 W_xi` plus `beta1 gamma rho1 omega_F w_F(xi)` for every face
/// `F` of the patch containing `xi` (boundary faces included).
pub fn assemble_b1(mesh: &Mesh, layout: &BrokenLayout, w: &StageOneWeights) -> Result<Vec<f64>> {
    if !(w.beta1 > 0.0) || !(w.rho1 >= 0.0) || !(w.c1sq > 0.0) || !(w.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("stage-one weights must be positive: {w:?}")));
    }
    let d = mesh.dim();
    let rules = crate::assembly::patch_rules(mesh)?;
    let mut diag = Vec::with_capacity(layout.dim());
    for r in 0..mesh.patches().len() {
        let counts = layout.counts(r);
        if counts.len() != d || (0..d).any(|k| counts[k] != rules[r][k].nodes().len()) {
            return Err(Error::DimensionMismatch { expected: rules[r].iter().map(|q| q.nodes().len()).product(), got: layout.patch_len(r) });
        }
        // face weight of the lower and upper face in each direction
        let omega: Vec<[f64; 2]> = (0..d)
            .map(|k| {
                let code = |digit: u8| {
                    let mut digits = vec![1u8; d];
                    digits[k] = digit;
                    pattern_code(&digits)
                };
                [mesh.face_weight(mesh.patch_facet(r, code(0))), mesh.face_weight(mesh.patch_facet(r, code(2)))]
            })
            .collect();
        for local in 0..layout.patch_len(r) {
            let m = multi_index(counts, local);
            let wk: Vec<f64> = (0..d).map(|k| rules[r][k].weights()[m[k]]).collect();
            let mut v = w.c1sq * node_weight(&wk);
            for k in 0..d {
                let wf: f64 = (0..d).filter(|&j| j != k).map(|j| wk[j]).product();
                if m[k] == 0 {
                    v += w.gamma * w.rho1 * omega[k][0] * wf;
                }
                if m[k] + 1 == counts[k] {
                    v += w.gamma * w.rho1 * omega[k][1] * wf;
                }
            }
            diag.push(w.beta1 * v);
        }
    }
    Ok(diag)
}

/// Per patch and direction `k`, which LGL cells are strongly anisotropic in `k`:
/// `max_{l != k} h_l / h_k > c_aspect`.
#[derive(Clone, Debug)]
pub struct AnisotropyClassification {
    c_aspect: f64,
    /// `[patch][direction][cell]`, cells indexed with direction 0 fastest.
    strong: Vec<Vec<Vec<bool>>>,
    cell_counts: Vec<Vec<usize>>,
}

impl AnisotropyClassification {
    pub fn new(layout: &BrokenLayout, c_aspect: f64) -> Result<Self> {
        if !(c_aspect > 0.0) {
            return Err(Error::InvalidParameter(format!("aspect bound must be positive, got {c_aspect}")));
        }
        let mut strong = Vec::new();
        let mut cell_counts = Vec::new();
        for r in 0..layout.patch_count() {
            let counts = layout.counts(r);
            let d = counts.len();
            let cc: Vec<usize> = counts.iter().map(|n| n - 1).collect();
            let h: Vec<Vec<f64>> = (0..d).map(|k| layout.grid(r, k).windows(2).map(|w| w[1] - w[0]).collect()).collect();
            let ncells: usize = cc.iter().product();
            let per_dir = (0..d)
                .map(|k| {
                    (0..ncells)
                        .map(|c| {
                            let m = multi_index(&cc, c);
                            let other = (0..d).filter(|&l| l != k).map(|l| h[l][m[l]]).fold(0.0, f64::max);
                            other / h[k][m[k]] > c_aspect
                        })
                        .collect()
                })
                .collect();
            strong.push(per_dir);
            cell_counts.push(cc);
        }
        Ok(Self { c_aspect, strong, cell_counts })
    }

    pub fn c_aspect(&self) -> f64 {
        self.c_aspect
    }

    pub fn is_strong(&self, r: usize, k: usize, cell: &[usize]) -> bool {
        self.strong[r][k][linear_index(&self.cell_counts[r], cell)]
    }

    pub fn cell_counts(&self, r: usize) -> &[usize] {
        &self.cell_counts[r]
    }

    /// Number of strongly anisotropic cells per direction of patch `r`.
    pub fn strong_counts(&self, r: usize) -> Vec<usize> {
        self.strong[r].iter().map(|v| v.iter().filter(|&&b| b).count()).collect()
    }
}

/// The second-stage form on the LGL lattice of patch `r`.
pub fn patch_b2(layout: &BrokenLayout, class: &AnisotropyClassification, r: usize, c_tune: f64) -> CsrMatrix {
    let counts = layout.counts(r);
    let d = counts.len();
    let cc = class.cell_counts(r);
    let h: Vec<Vec<f64>> = (0..d).map(|k| layout.grid(r, k).windows(2).map(|w| w[1] - w[0]).collect()).collect();
    let n = layout.patch_len(r);
    let mut b = TripletBuilder::new(n, n);
    let ncells: usize = cc.iter().product();
    for c in 0..ncells {
        let cell = multi_index(cc, c);
        for k in 0..d {
            let hk = h[k][cell[k]];
            let wprime: f64 = (0..d).filter(|&l| l != k).map(|l| h[l][cell[l]]).product();
            let strong = class.is_strong(r, k, &cell);
            // vertices of the cell face orthogonal to k
            for corner in 0..1usize << (d - 1) {
                let mut node = cell.clone();
                let mut bit = 0;
                for l in 0..d {
                    if l != k {
                        node[l] += (corner >> bit) & 1;
                        bit += 1;
                    }
                }
                let a = linear_index(counts, &node);
                node[k] += 1;
                let e = linear_index(counts, &node);
                if strong {
                    let s = wprime / hk;
                    b.push(a, a, s);
                    b.push(e, e, s);
                    b.push(a, e, -s);
                    b.push(e, a, -s);
                } else {
                    let s = c_tune * wprime / hk;
                    b.push(a, a, s);
                    b.push(e, e, s);
                }
            }
        }
    }
    b.build()
}

/// The second-stage form on the conforming LGL space: `P^T diag_R(B_R) P`.
pub fn assemble_b2(space: &ConformingSpace, class: &AnisotropyClassification, c_tune: f64) -> Result<CsrMatrix> {
    if !(c_tune > 0.0) {
        return Err(Error::InvalidParameter(format!("tuning constant must be positive, got {c_tune}")));
    }
    let layout = space.layout();
    let mut b = TripletBuilder::new(layout.dim(), layout.dim());
    for r in 0..layout.patch_count() {
        let off = layout.offset(r);
        for (i, j, v) in patch_b2(layout, class, r, c_tune).triplets() {
            b.push(off + i, off + j, v);
        }
    }
    Ok(b.build().galerkin(space.prolongation()))
}

/// Node lists of the interior lattice of patch `r`, split by the lowest
/// direction `k >= 1` in which the node is a vertex of a strongly anisotropic
/// cell (group `k`), or group 0 otherwise.
pub fn interior_groups(layout: &BrokenLayout, class: &AnisotropyClassification, r: usize) -> Vec<Vec<usize>> {
    let counts = layout.counts(r);
    let d = counts.len();
    let cc = class.cell_counts(r);
    let mut group = vec![0usize; layout.patch_len(r)];
    for k in (1..d).rev() {
        let ncells: usize = cc.iter().product();
        for c in 0..ncells {
            let cell = multi_index(cc, c);
            if !class.is_strong(r, k, &cell) {
                continue;
            }
            for corner in 0..1usize << d {
                let node: Vec<usize> = (0..d).map(|l| cell[l] + ((corner >> l) & 1)).collect();
                group[linear_index(counts, &node)] = k;
            }
        }
    }
    let mut out = vec![Vec::new(); d.max(1)];
    for local in 0..layout.patch_len(r) {
        let m = multi_index(counts, local);
        if m.iter().zip(counts).all(|(&i, &n)| i > 0 && i + 1 < n) {
            out[group[local]].push(local);
        }
    }
    // group k is ordered line by line along direction k
    for (k, nodes) in out.iter_mut().enumerate().skip(1) {
        nodes.sort_by_key(|&local| {
            let m = multi_index(counts, local);
            let mut key: Vec<usize> = m.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, &i)| i).rev().collect();
            key.push(m[k]);
            key
        });
    }
    out
}
