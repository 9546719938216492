//! Dyadic partitions locally equivalent to a given grid.
//!
//! A dyadic cell is `[k 2^-l, (k + 1) 2^-l]` relative to a fixed interval.
//! [`dyadic_generate`] bisects cells of a seed partition until every cell `D`
//! satisfies `|D| <= alpha * max |I|`, the maximum taken over grid cells `I`
//! overlapping `D` in a set of positive measure. Splitting is monotone, so the
//! fixed point does not depend on the order in which cells are visited.
//!
//! Breakpoints are kept as exact `(numerator, level)` pairs. The generator is
//! scale invariant, so the nested family built over LGL grids is computed once
//! on `[-1, 1]` per threshold and mapped to each patch.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::lgl::{reference_lgl, Interval};

/// Deepest bisection level; keeps numerators inside `u64`.
pub const MAX_LEVEL: u32 = 60;

/// Strictly increasing points `x_0 < ... < x_n` with `n >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderedGrid {
    points: Vec<f64>,
}

impl OrderedGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("a grid needs at least two points".into()));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid(format!("points not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn cell_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn interval(&self) -> Interval {
        Interval { lo: self.points[0], hi: self.points[self.points.len() - 1] }
    }

    pub fn cell_lengths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Length of the largest cell meeting `(lo, hi)`.
    fn largest_overlapping(&self, lo: f64, hi: f64) -> f64 {
        let pts = &self.points;
        // first cell whose right end lies beyond lo
        let start = pts.partition_point(|&x| x <= lo).saturating_sub(1);
        let mut best: f64 = 0.0;
        for i in start..pts.len() - 1 {
            if pts[i] >= hi {
                break;
            }
            if pts[i + 1] > lo {
                best = best.max(pts[i + 1] - pts[i]);
            }
        }
        best
    }
}

/// The cell `[index 2^-level, (index + 1) 2^-level]` of the unit interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCell {
    pub level: u32,
    pub index: u64,
}

impl DyadicCell {
    pub const ROOT: DyadicCell = DyadicCell { level: 0, index: 0 };

    pub fn children(self) -> [DyadicCell; 2] {
        let level = self.level + 1;
        [DyadicCell { level, index: 2 * self.index }, DyadicCell { level, index: 2 * self.index + 1 }]
    }

    pub fn left(self) -> DyadicPoint {
        DyadicPoint::new(self.index, self.level)
    }

    pub fn right(self) -> DyadicPoint {
        DyadicPoint::new(self.index + 1, self.level)
    }

    /// Relative length `2^-level`.
    pub fn width(self) -> f64 {
        (-(self.level as f64)).exp2()
    }
}

/// The dyadic rational `numerator / 2^level` in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicPoint {
    pub numerator: u64,
    pub level: u32,
}

impl DyadicPoint {
    pub fn new(mut numerator: u64, mut level: u32) -> Self {
        if numerator == 0 {
            return Self { numerator: 0, level: 0 };
        }
        while level > 0 && numerator % 2 == 0 {
            numerator /= 2;
            level -= 1;
        }
        Self { numerator, level }
    }

    pub fn value(self) -> f64 {
        self.numerator as f64 * (-(self.level as f64)).exp2()
    }
}

/// A partition of an interval into dyadic cells, ordered left to right.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicPartition {
    interval: Interval,
    cells: Vec<DyadicCell>,
}

impl DyadicPartition {
    /// The trivial partition `{interval}`.
    pub fn trivial(interval: Interval) -> Self {
        Self { interval, cells: vec![DyadicCell::ROOT] }
    }

    pub fn uniform(interval: Interval, level: u32) -> Self {
        let cells = (0..1u64 << level).map(|index| DyadicCell { level, index }).collect();
        Self { interval, cells }
    }

    /// Builds a partition from cells, checking that they tile the interval.
    pub fn from_cells(interval: Interval, cells: Vec<DyadicCell>) -> Result<Self> {
        let mut at = DyadicPoint::new(0, 0);
        for c in &cells {
            if c.left() != at {
                return Err(Error::InvalidGrid(format!("dyadic cells do not tile: gap at {at:?}")));
            }
            at = c.right();
        }
        if at != DyadicPoint::new(1, 0) {
            return Err(Error::InvalidGrid("dyadic cells do not reach the right end".into()));
        }
        Ok(Self { interval, cells })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn cells(&self) -> &[DyadicCell] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn breakpoints(&self) -> Vec<DyadicPoint> {
        let mut pts = Vec::with_capacity(self.cells.len() + 1);
        pts.push(DyadicPoint::new(0, 0));
        pts.extend(self.cells.iter().map(|c| c.right()));
        pts
    }

    fn position(&self, t: DyadicPoint) -> f64 {
        if t == DyadicPoint::new(1, 0) {
            return self.interval.hi;
        }
        self.interval.lo + self.interval.len() * t.value()
    }

    /// Breakpoints mapped into the interval.
    pub fn nodes(&self) -> Vec<f64> {
        self.breakpoints().into_iter().map(|t| self.position(t)).collect()
    }

    /// Same relative partition on another interval.
    pub fn mapped(&self, interval: Interval) -> Self {
        Self { interval, cells: self.cells.clone() }
    }

    pub fn grid(&self) -> OrderedGrid {
        OrderedGrid { points: self.nodes() }
    }

    /// True when every breakpoint of `coarse` is a breakpoint of `self`.
    pub fn refines(&self, coarse: &DyadicPartition) -> bool {
        let mine: std::collections::HashSet<DyadicPoint> = self.breakpoints().into_iter().collect();
        coarse.breakpoints().iter().all(|p| mine.contains(p))
    }

    /// One `numerator level` pair per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for p in self.breakpoints() {
            let _ = writeln!(out, "{} {}", p.numerator, p.level);
        }
        out
    }

    fn cell_bounds(&self, c: DyadicCell) -> (f64, f64) {
        (self.position(c.left()), self.position(c.right()))
    }
}

/// Refines `seed` until no cell exceeds `alpha` times the largest cell of
/// `grid` it overlaps.
pub fn dyadic_generate(grid: &OrderedGrid, seed: &DyadicPartition, alpha: f64) -> Result<DyadicPartition> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidAlpha(alpha));
    }
    let giv = grid.interval();
    let siv = seed.interval();
    let tol = 1e-12 * giv.len();
    if (giv.lo - siv.lo).abs() > tol || (giv.hi - siv.hi).abs() > tol {
        return Err(Error::InvalidGrid(format!(
            "seed covers [{}, {}] but grid covers [{}, {}]",
            siv.lo, siv.hi, giv.lo, giv.hi
        )));
    }
    let mut out = DyadicPartition { interval: siv, cells: Vec::with_capacity(seed.cells.len()) };
    // depth-first bisection keeps the output ordered left to right
    let mut stack: Vec<DyadicCell> = Vec::new();
    for &root in &seed.cells {
        stack.push(root);
        while let Some(c) = stack.pop() {
            let (lo, hi) = out.cell_bounds(c);
            if hi - lo > alpha * grid.largest_overlapping(lo, hi) {
                if c.level >= MAX_LEVEL {
                    return Err(Error::InvalidGrid(format!("dyadic refinement exceeded level {MAX_LEVEL}")));
                }
                let [l, r] = c.children();
                stack.push(r);
                stack.push(l);
            } else {
                out.cells.push(c);
            }
        }
    }
    Ok(out)
}

/// The nested family `D_1, ..., D_pmax` on `[-1, 1]` with
/// `D_p = Dyadic[G_p, D_{p-1}, alpha]` and `G_p` the LGL grid of degree `p`.
#[derive(Clone, Debug)]
pub struct DyadicFamily {
    alpha: f64,
    partitions: Vec<Arc<DyadicPartition>>,
}

impl DyadicFamily {
    pub fn build(pmax: usize, alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidAlpha(alpha));
        }
        let mut fam = Self { alpha, partitions: Vec::new() };
        fam.extend_to(pmax)?;
        Ok(fam)
    }

    fn extend_to(&mut self, pmax: usize) -> Result<()> {
        while self.partitions.len() < pmax {
            let p = self.partitions.len() + 1;
            let seed = match self.partitions.last() {
                Some(prev) => (**prev).clone(),
                None => DyadicPartition::trivial(Interval::reference()),
            };
            let grid = OrderedGrid::new(reference_lgl(p)?.0)?;
            self.partitions.push(Arc::new(dyadic_generate(&grid, &seed, self.alpha)?));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_degree(&self) -> usize {
        self.partitions.len()
    }

    /// `D_p` on `[-1, 1]`.
    pub fn get(&self, p: usize) -> Result<&DyadicPartition> {
        if p == 0 || p > self.partitions.len() {
            return Err(Error::InvalidDegree(p));
        }
        Ok(&self.partitions[p - 1])
    }
}

fn family_cache() -> &'static Mutex<HashMap<u64, DyadicFamily>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, DyadicFamily>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `D_p` on `[-1, 1]` from a process-wide cache of nested families.
pub fn family_member(p: usize, alpha: f64) -> Result<Arc<DyadicPartition>> {
    if p == 0 {
        return Err(Error::InvalidDegree(p));
    }
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidAlpha(alpha));
    }
    let mut cache = family_cache().lock().unwrap_or_else(|e| e.into_inner());
    let fam = match cache.entry(alpha.to_bits()) {
        std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
        std::collections::hash_map::Entry::Vacant(e) => e.insert(DyadicFamily::build(0, alpha)?),
    };
    fam.extend_to(p)?;
    Ok(fam.partitions[p - 1].clone())
}

/// Observed constants `(A, B)` with `A <= |I| / |J| <= B` over all pairs of
/// cells `I` of `g1` and `J` of `g2` that overlap in a set of positive measure.
pub fn check_local_equivalence(g1: &OrderedGrid, g2: &OrderedGrid) -> (f64, f64) {
    let (a, b) = (g1.points(), g2.points());
    let (mut i, mut j) = (0, 0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    while i + 1 < a.len() && j + 1 < b.len() {
        let overlap = a[i + 1].min(b[j + 1]) - a[i].max(b[j]);
        if overlap > 0.0 {
            let r = (a[i + 1] - a[i]) / (b[j + 1] - b[j]);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if a[i + 1] < b[j + 1] {
            i += 1;
        } else if b[j + 1] < a[i + 1] {
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    (lo, hi)
}

/// Largest ratio of adjacent cell lengths, in either order.
pub fn check_quasiuniform(g: &OrderedGrid) -> f64 {
    g.cell_lengths().windows(2).map(|h| (h[1] / h[0]).max(h[0] / h[1])).fold(1.0, f64::max)
}
