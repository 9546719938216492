//! Conforming meshes of axis-parallel patches with per-direction degrees.
//!
//! Every patch is a box `R = prod_k [lower_k, upper_k]`. Its closed facets are
//! enumerated by patterns with one digit per direction: `0` (fixed at the
//! lower end), `1` (free) or `2` (fixed at the upper end). A facet shared by
//! several patches is stored once, with the list of incident patches.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lgl::Interval;

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub id: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub degrees: Vec<usize>,
}

impl Patch {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn size(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    pub fn interval(&self, k: usize) -> Interval {
        Interval { lo: self.lower[k], hi: self.upper[k] }
    }

    /// Number of LGL nodes per direction.
    pub fn node_counts(&self) -> Vec<usize> {
        self.degrees.iter().map(|p| p + 1).collect()
    }
}

/// A closed facet of the patch complex.
#[derive(Clone, Debug)]
pub struct Facet {
    pub id: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Directions along which the facet extends, ascending.
    pub free: Vec<usize>,
    /// Incident patches with the local pattern of the facet in each, by patch id.
    pub incidence: Vec<(usize, usize)>,
    pub boundary: bool,
    /// The incident patch whose grid carries the facet's degrees of freedom.
    pub sharp: usize,
}

impl Facet {
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn patches(&self) -> impl Iterator<Item = usize> + '_ {
        self.incidence.iter().map(|&(r, _)| r)
    }

    /// Local pattern of this facet in patch `r`.
    pub fn pattern_in(&self, r: usize) -> Option<usize> {
        self.incidence.iter().find(|&&(q, _)| q == r).map(|&(_, c)| c)
    }

    /// The normal direction of a face.
    pub fn normal(&self) -> Option<usize> {
        let d = self.lower.len();
        if self.free.len() + 1 != d {
            return None;
        }
        (0..d).find(|k| !self.free.contains(k))
    }
}

/// Per-direction pattern digits of a facet code.
pub fn pattern_digits(mut code: usize, d: usize) -> Vec<u8> {
    (0..d)
        .map(|_| {
            let digit = (code % 3) as u8;
            code /= 3;
            digit
        })
        .collect()
}

pub fn pattern_code(digits: &[u8]) -> usize {
    digits.iter().rev().fold(0, |acc, &g| 3 * acc + g as usize)
}

/// Code of the facet consisting of the whole patch.
pub fn interior_code(d: usize) -> usize {
    pattern_code(&vec![1; d])
}

/// Grading limits checked by [`Mesh::validate_grading`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GradingBounds {
    /// Largest `max_k H_k / min_k H_k` within a patch.
    pub aspect: f64,
    /// Largest `max_k p_k / min_k p_k` within a patch.
    pub degree_within: f64,
    /// Largest ratio of degrees (per direction) across a face.
    pub degree_across: f64,
    /// Largest ratio of patch sizes (per direction) across a face.
    pub size_across: f64,
}

impl Default for GradingBounds {
    fn default() -> Self {
        Self { aspect: 2.0, degree_within: 2.0, degree_across: 2.0, size_across: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GradingReport {
    pub aspect: f64,
    pub degree_within: f64,
    pub degree_across: f64,
    pub size_across: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    patches: Vec<Patch>,
    facets: Vec<Facet>,
    patch_facets: Vec<Vec<usize>>,
    lookup: HashMap<Vec<u64>, usize>,
}

fn facet_key(lower: &[f64], upper: &[f64]) -> Vec<u64> {
    lower.iter().chain(upper).map(|x| (x + 0.0).to_bits()).collect()
}

impl Mesh {
    /// Builds the facet complex and checks conformity.
    pub fn new(patches: Vec<Patch>) -> Result<Self> {
        let dim = patches.first().map(Patch::dim).ok_or_else(|| Error::NonConforming("mesh has no patches".into()))?;
        if dim == 0 {
            return Err(Error::NonConforming("zero-dimensional patches".into()));
        }
        for (i, r) in patches.iter().enumerate() {
            if r.id != i {
                return Err(Error::NonConforming(format!("patch at position {i} has id {}", r.id)));
            }
            if r.upper.len() != dim || r.degrees.len() != dim {
                return Err(Error::NonConforming(format!("patch {i} has inconsistent dimension")));
            }
            if let Some(&p) = r.degrees.iter().find(|&&p| p == 0) {
                return Err(Error::InvalidDegree(p));
            }
            for k in 0..dim {
                Interval::new(r.lower[k], r.upper[k])?;
            }
        }
        check_conformity(&patches)?;

        let ncodes = 3usize.pow(dim as u32);
        let mut facets: Vec<Facet> = Vec::new();
        let mut lookup = HashMap::new();
        let mut patch_facets = Vec::with_capacity(patches.len());
        for r in &patches {
            let mut ids = Vec::with_capacity(ncodes);
            for code in 0..ncodes {
                let digits = pattern_digits(code, dim);
                let mut lower = r.lower.clone();
                let mut upper = r.upper.clone();
                let mut free = Vec::new();
                for k in 0..dim {
                    match digits[k] {
                        0 => upper[k] = r.lower[k],
                        2 => lower[k] = r.upper[k],
                        _ => free.push(k),
                    }
                }
                let key = facet_key(&lower, &upper);
                let id = *lookup.entry(key).or_insert_with(|| {
                    facets.push(Facet {
                        id: facets.len(),
                        lower,
                        upper,
                        free,
                        incidence: Vec::new(),
                        boundary: false,
                        sharp: r.id,
                    });
                    facets.len() - 1
                });
                facets[id].incidence.push((r.id, code));
                ids.push(id);
            }
            patch_facets.push(ids);
        }

        // faces with a single incident patch lie on the boundary; so does
        // every facet contained in such a face
        for f in facets.iter_mut() {
            if f.dim() + 1 == dim && f.incidence.len() == 1 {
                f.boundary = true;
            }
        }
        let mut on_boundary = vec![false; facets.len()];
        for ids in &patch_facets {
            for code in 0..ncodes {
                let face = ids[code];
                if !(facets[face].boundary && facets[face].dim() + 1 == dim) {
                    continue;
                }
                let fd = pattern_digits(code, dim);
                for (sub, &g) in ids.iter().enumerate() {
                    let sd = pattern_digits(sub, dim);
                    if (0..dim).all(|k| fd[k] == 1 || sd[k] == fd[k]) {
                        on_boundary[g] = true;
                    }
                }
            }
        }
        for (f, b) in facets.iter_mut().zip(on_boundary) {
            f.boundary = b;
        }

        for f in facets.iter_mut() {
            f.sharp = select_sharp(f, &patches)?;
        }
        Ok(Self { dim, patches, facets, patch_facets, lookup })
    }

    /// Tensor mesh of `counts[k]` equal patches per direction on `domain`.
    /// Patches are numbered with direction 0 fastest.
    pub fn tensor(domain: &[Interval], counts: &[usize], degrees: impl Fn(&[usize]) -> Vec<usize>) -> Result<Self> {
        let d = domain.len();
        if counts.len() != d || counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidParameter("patch counts must be positive, one per direction".into()));
        }
        let total: usize = counts.iter().product();
        let mut patches = Vec::with_capacity(total);
        for id in 0..total {
            let mut rem = id;
            let idx: Vec<usize> = counts
                .iter()
                .map(|&c| {
                    let i = rem % c;
                    rem /= c;
                    i
                })
                .collect();
            let lower = (0..d).map(|k| grid_coord(domain[k], counts[k], idx[k])).collect();
            let upper = (0..d).map(|k| grid_coord(domain[k], counts[k], idx[k] + 1)).collect();
            patches.push(Patch { id, lower, upper, degrees: degrees(&idx) });
        }
        Self::new(patches)
    }

    pub fn from_spec(spec: &MeshSpec) -> Result<Self> {
        let d = spec.domain.len();
        let domain: Vec<Interval> = spec.domain.iter().map(|&[a, b]| Interval::new(a, b)).collect::<Result<_>>()?;
        let total: usize = spec.patches.iter().product();
        if spec.degrees.len() != total {
            return Err(Error::Config(format!("expected {total} degree entries, got {}", spec.degrees.len())));
        }
        let counts = spec.patches.clone();
        let table = spec.degrees.clone();
        for row in &table {
            if row.len() != 1 && row.len() != d {
                return Err(Error::Config(format!("degree entry {row:?} must have 1 or {d} components")));
            }
        }
        Self::tensor(&domain, &spec.patches, move |idx| {
            let row = &table[crate::tensor::linear_index(&counts, idx)];
            if row.len() == 1 {
                vec![row[0]; d]
            } else {
                row.clone()
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch(&self, r: usize) -> &Patch {
        &self.patches[r]
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet(&self, id: usize) -> &Facet {
        &self.facets[id]
    }

    /// Global id of the facet with local pattern `code` in patch `r`.
    pub fn patch_facet(&self, r: usize, code: usize) -> usize {
        self.patch_facets[r][code]
    }

    pub fn find_facet(&self, lower: &[f64], upper: &[f64]) -> Option<usize> {
        self.lookup.get(&facet_key(lower, upper)).copied()
    }

    pub fn faces(&self) -> impl Iterator<Item = &Facet> {
        self.facets.iter().filter(move |f| f.dim() + 1 == self.dim)
    }

    /// `omega_F = max_R (p_k(R) + 1)^2 / H_k(R)` over patches incident to the
    /// face, `k` the normal direction.
    pub fn face_weight(&self, face: usize) -> f64 {
        let f = &self.facets[face];
        let k = f.normal().expect("face_weight called on a facet that is not a face");
        f.patches()
            .map(|r| {
                let p = &self.patches[r];
                let q = (p.degrees[k] + 1) as f64;
                q * q / p.size(k)
            })
            .fold(0.0, f64::max)
    }

    /// Degrees of patch `r` in the free directions of `facet`.
    pub fn facet_degrees(&self, facet: usize, r: usize) -> Vec<usize> {
        self.facets[facet].free.iter().map(|&k| self.patches[r].degrees[k]).collect()
    }

    pub fn validate_grading(&self, bounds: &GradingBounds) -> Result<GradingReport> {
        let mut rep = GradingReport { aspect: 1.0, degree_within: 1.0, degree_across: 1.0, size_across: 1.0 };
        let ratio = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
            hi / lo
        };
        for r in &self.patches {
            let a = ratio(&mut (0..self.dim).map(|k| r.size(k)));
            if a > bounds.aspect {
                return Err(Error::AssumptionViolation(format!("patch {} has aspect ratio {a}", r.id)));
            }
            let g = ratio(&mut r.degrees.iter().map(|&p| p as f64));
            if g > bounds.degree_within {
                return Err(Error::AssumptionViolation(format!("patch {} has degree ratio {g}", r.id)));
            }
            rep.aspect = rep.aspect.max(a);
            rep.degree_within = rep.degree_within.max(g);
        }
        for f in self.faces().filter(|f| f.incidence.len() == 2) {
            let (a, b) = (&self.patches[f.incidence[0].0], &self.patches[f.incidence[1].0]);
            for k in 0..self.dim {
                let dp = (a.degrees[k] as f64 / b.degrees[k] as f64).max(b.degrees[k] as f64 / a.degrees[k] as f64);
                if dp > bounds.degree_across {
                    return Err(Error::AssumptionViolation(format!(
                        "face {} between patches {} and {} has degree ratio {dp}",
                        f.id, a.id, b.id
                    )));
                }
                let ds = (a.size(k) / b.size(k)).max(b.size(k) / a.size(k));
                if ds > bounds.size_across {
                    return Err(Error::AssumptionViolation(format!(
                        "face {} between patches {} and {} has size ratio {ds}",
                        f.id, a.id, b.id
                    )));
                }
                rep.degree_across = rep.degree_across.max(dp);
                rep.size_across = rep.size_across.max(ds);
            }
        }
        Ok(rep)
    }
}

fn grid_coord(iv: Interval, count: usize, i: usize) -> f64 {
    if i == count {
        iv.hi
    } else {
        iv.lo + iv.len() * i as f64 / count as f64
    }
}

/// Every pair of patches must meet in a common facet of both, or not at all.
fn check_conformity(patches: &[Patch]) -> Result<()> {
    let d = patches[0].dim();
    for (i, a) in patches.iter().enumerate() {
        for b in &patches[i + 1..] {
            let lo: Vec<f64> = (0..d).map(|k| a.lower[k].max(b.lower[k])).collect();
            let hi: Vec<f64> = (0..d).map(|k| a.upper[k].min(b.upper[k])).collect();
            if (0..d).any(|k| lo[k] > hi[k]) {
                continue;
            }
            if (0..d).all(|k| lo[k] < hi[k]) {
                return Err(Error::NonConforming(format!("patches {} and {} overlap", a.id, b.id)));
            }
            for r in [a, b] {
                let is_facet = (0..d).all(|k| {
                    (lo[k] == r.lower[k] && hi[k] == r.upper[k])
                        || (lo[k] == hi[k] && (lo[k] == r.lower[k] || lo[k] == r.upper[k]))
                });
                if !is_facet {
                    return Err(Error::NonConforming(format!(
                        "patches {} and {} meet in a set that is not a facet of patch {}",
                        a.id, b.id, r.id
                    )));
                }
            }
        }
    }
    Ok(())
}

/// The incident patch with componentwise minimal degrees along the facet,
/// lowest id on ties. Vertices take the patch of least total degree.
fn select_sharp(f: &Facet, patches: &[Patch]) -> Result<usize> {
    let mut ids: Vec<usize> = f.patches().collect();
    ids.sort_unstable();
    if f.free.is_empty() {
        return Ok(*ids
            .iter()
            .min_by_key(|&&r| (patches[r].degrees.iter().sum::<usize>(), r))
            .expect("facet without patches"));
    }
    let deg = |r: usize| -> Vec<usize> { f.free.iter().map(|&k| patches[r].degrees[k]).collect() };
    for &r in &ids {
        let dr = deg(r);
        if ids.iter().all(|&q| dr.iter().zip(deg(q)).all(|(a, b)| *a <= b)) {
            return Ok(r);
        }
    }
    if f.boundary {
        return Ok(ids[0]);
    }
    Err(Error::AssumptionViolation(format!(
        "facet {} has no incident patch with componentwise minimal degrees (patches {:?})",
        f.id, ids
    )))
}

/// JSON description of a tensor patch mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    /// `[lo, hi]` per direction.
    pub domain: Vec<[f64; 2]>,
    /// Number of patches per direction.
    pub patches: Vec<usize>,
    /// Degrees per patch, direction 0 fastest; one entry means isotropic.
    pub degrees: Vec<Vec<usize>>,
}
