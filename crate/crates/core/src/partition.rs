//! Checkerboard partition of the interior domain.
//!
//! Subdomain indices are zero-based `[i, j, k]` (k = 0 in 2D). Breakpoints
//! sit on grid nodes; subdomain `i` along an axis spans the nodes
//! `breaks[i]..=breaks[i+1]`. Boundary subdomains extend to the edge of the
//! grid, so sources in the global PML collar belong to them.
//!
//! The cutoff ramp towards the neighbour `i+1` starts one node past the
//! breakpoint: `β_{+1,i}(x) = β̂((x − ξ_{i+1} − h)/(d − h))`. It is 1 on the
//! box and its first outside layer and vanishes `d` past the breakpoint.
//! Combined with the open truncation intervals this keeps the discrete
//! transferred sources consistent on breakpoint nodes.

use crate::grid::{Grid, IndexBox};
use crate::{Error, Result};

/// Direction with components in {−1, 0, +1}; unused axes are 0.
pub type Dir = [i8; 3];
/// Zero-based subdomain index.
pub type SubIdx = [usize; 3];

/// Complementary quintic smoothstep: 1 for t ≤ 0, 0 for t ≥ 1.
pub fn beta_hat(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    grid: Grid,
    counts: [usize; 3],
    interior: IndexBox,
    breaks: [Vec<usize>; 3],
    overlap: usize,
    pml: usize,
}

/// Splits `interior` into `counts` boxes per axis with overlap `d` and PML
/// width given in grid points.
pub fn make_partition(
    grid: &Grid,
    interior: IndexBox,
    counts: &[usize],
    overlap_points: usize,
    pml_points: usize,
) -> Result<Partition> {
    let dim = grid.dim();
    if counts.len() != dim {
        return Err(Error::Config(format!("partition needs {dim} counts, got {}", counts.len())));
    }
    if !grid.full_box().contains_box(&interior) || interior.is_empty() {
        return Err(Error::Config("interior box does not fit the grid".into()));
    }
    if overlap_points < 2 {
        return Err(Error::Config(format!("overlap must be at least 2 points, got {overlap_points}")));
    }
    let names = ["x", "y", "z"];
    let mut c = [1usize; 3];
    let mut breaks: [Vec<usize>; 3] = [vec![0, 0], vec![0, 0], vec![0, 0]];
    for a in 0..dim {
        let n = counts[a];
        if n == 0 {
            return Err(Error::Config(format!("axis {}: zero subdomains", names[a])));
        }
        let cells = interior.hi[a] - interior.lo[a];
        if cells == 0 || cells % n != 0 {
            return Err(Error::Config(format!(
                "axis {}: {cells} interior cells cannot be split evenly into {n} subdomains",
                names[a]
            )));
        }
        let w = cells / n;
        if n > 1 && w < overlap_points {
            return Err(Error::Config(format!(
                "axis {}: subdomains of {w} cells are narrower than the overlap of {overlap_points}",
                names[a]
            )));
        }
        c[a] = n;
        breaks[a] = (0..=n).map(|i| interior.lo[a] + i * w).collect();
    }
    Ok(Partition { grid: *grid, counts: c, interior, breaks, overlap: overlap_points, pml: pml_points })
}

impl Partition {
    /// Partition whose interior leaves `collar` nodes on every side of the grid.
    pub fn with_collar(grid: &Grid, collar: usize, counts: &[usize], overlap: usize, pml: usize) -> Result<Partition> {
        let mut interior = grid.full_box();
        for a in 0..grid.dim() {
            if grid.n(a) <= 2 * collar + 1 {
                return Err(Error::Config(format!("axis {a}: collar of {collar} leaves no interior")));
            }
            interior.lo[a] = collar;
            interior.hi[a] = grid.n(a) - 1 - collar;
        }
        make_partition(grid, interior, counts, overlap, pml)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }
    pub fn interior(&self) -> &IndexBox {
        &self.interior
    }
    pub fn overlap(&self) -> usize {
        self.overlap
    }
    pub fn pml(&self) -> usize {
        self.pml
    }
    pub fn breaks(&self, axis: usize) -> &[usize] {
        &self.breaks[axis]
    }
    /// Physical coordinate of breakpoint `i` along `axis`.
    pub fn breakpoint(&self, axis: usize, i: usize) -> f64 {
        self.grid.coord(axis, self.breaks[axis][i])
    }
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn linear(&self, idx: SubIdx) -> usize {
        idx[0] + self.counts[0] * (idx[1] + self.counts[1] * idx[2])
    }
    pub fn from_linear(&self, l: usize) -> SubIdx {
        [l % self.counts[0], (l / self.counts[0]) % self.counts[1], l / (self.counts[0] * self.counts[1])]
    }
    pub fn subdomains(&self) -> Vec<SubIdx> {
        (0..self.len()).map(|l| self.from_linear(l)).collect()
    }
    /// Neighbour in direction `dir`, if it exists.
    pub fn neighbor(&self, idx: SubIdx, dir: Dir) -> Option<SubIdx> {
        let mut out = idx;
        for a in 0..3 {
            let t = idx[a] as i64 + dir[a] as i64;
            if t < 0 || t >= self.counts[a] as i64 {
                return None;
            }
            out[a] = t as usize;
        }
        Some(out)
    }

    /// Nonoverlapping box Ω of a subdomain, in nodes.
    pub fn box_of(&self, idx: SubIdx) -> IndexBox {
        let mut b = IndexBox::new([0; 3], [0; 3]);
        for a in 0..self.dim() {
            b.lo[a] = self.breaks[a][idx[a]];
            b.hi[a] = self.breaks[a][idx[a] + 1];
        }
        b
    }

    /// Box plus overlap and PML collar, clipped to the grid.
    pub fn window_of(&self, idx: SubIdx) -> IndexBox {
        let b = self.box_of(idx);
        let ext = self.overlap + self.pml;
        let mut w = b;
        for a in 0..self.dim() {
            w.lo[a] = b.lo[a].saturating_sub(ext);
            w.hi[a] = (b.hi[a] + ext).min(self.grid.n(a) - 1);
        }
        w
    }

    /// Subdomain owning a node; breakpoint nodes go to the lower index and
    /// collar nodes to the adjacent boundary subdomain.
    pub fn owner(&self, p: [usize; 3]) -> SubIdx {
        let mut idx = [0usize; 3];
        for a in 0..self.dim() {
            let br = &self.breaks[a];
            let n = self.counts[a];
            idx[a] = (0..n).find(|&i| i == n - 1 || p[a] <= br[i + 1]).unwrap();
        }
        idx
    }

    /// One-dimensional cutoff at node position `g` (may be fractional).
    fn beta_pos(&self, axis: usize, sign: i8, i: usize, g: f64) -> f64 {
        let d = self.overlap as f64;
        let br = &self.breaks[axis];
        match sign {
            -1 if i != 0 => beta_hat((br[i] as f64 - g - 1.0) / (d - 1.0)),
            1 if i + 1 != self.counts[axis] => beta_hat((g - br[i + 1] as f64 - 1.0) / (d - 1.0)),
            _ => 1.0,
        }
    }

    /// `β^{(axis)}_{sign,i}` at a physical coordinate.
    pub fn beta_1d(&self, axis: usize, sign: i8, i: usize, x: f64) -> f64 {
        let mut g = (x - self.grid.lower(axis)) / self.grid.h(axis);
        if (g - g.round()).abs() < 1e-9 {
            g = g.round();
        }
        self.beta_pos(axis, sign, i, g)
    }

    /// `β_{dir;idx}` at a node.
    pub fn beta_dir(&self, dir: Dir, idx: SubIdx, p: [usize; 3]) -> f64 {
        (0..self.dim()).map(|a| self.beta_pos(a, dir[a], idx[a], p[a] as f64)).product()
    }

    /// `β_{0,0;idx}`: 1 on the box, 0 at `d` points outside it.
    pub fn beta_00(&self, idx: SubIdx, p: [usize; 3]) -> f64 {
        (0..self.dim())
            .map(|a| {
                let g = p[a] as f64;
                self.beta_pos(a, -1, idx[a], g) * self.beta_pos(a, 1, idx[a], g)
            })
            .product()
    }

    /// Box holding every node where `β_{0,0;idx}` is nonzero.
    pub fn beta_00_support(&self, idx: SubIdx) -> IndexBox {
        let w = self.window_of(idx);
        let b = self.box_of(idx);
        let r = self.overlap - 1;
        let mut s = w;
        for a in 0..self.dim() {
            if idx[a] > 0 {
                s.lo[a] = b.lo[a] - r;
            }
            if idx[a] + 1 < self.counts[a] {
                s.hi[a] = b.hi[a] + r;
            }
        }
        s
    }

    /// Truncation `χ_{dir;idx}` at a node: open half, quarter or eighth space.
    pub fn chi(&self, dir: Dir, idx: SubIdx, p: [usize; 3]) -> bool {
        (0..self.dim()).all(|a| match dir[a] {
            -1 => p[a] < self.breaks[a][idx[a]],
            1 => p[a] > self.breaks[a][idx[a] + 1],
            _ => true,
        })
    }
}

/// Step (1-based) at which a sweep along `dir` reaches subdomain `idx`.
pub fn sweep_step_of(idx: SubIdx, dir: Dir, counts: [usize; 3], dim: usize) -> usize {
    1 + (0..dim).map(|a| if dir[a] > 0 { idx[a] } else { counts[a] - 1 - idx[a] }).sum::<usize>()
}

/// Number of steps in one sweep.
pub fn steps_per_sweep(counts: [usize; 3], dim: usize) -> usize {
    1 + (0..dim).map(|a| counts[a] - 1).sum::<usize>()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OctantRegion {
    pub direction: Dir,
    pub origin: SubIdx,
    pub indices: Vec<SubIdx>,
}

/// Subdomains on the `dir` side of `origin` along every axis; the `+1` side
/// includes the origin itself.
pub fn octant_region(dir: Dir, origin: SubIdx, counts: [usize; 3], dim: usize) -> OctantRegion {
    let ranges: Vec<std::ops::Range<usize>> = (0..3)
        .map(|a| if a >= dim { 0..1 } else if dir[a] > 0 { origin[a]..counts[a] } else { 0..origin[a] })
        .collect();
    let mut indices = Vec::new();
    for k in ranges[2].clone() {
        for j in ranges[1].clone() {
            for i in ranges[0].clone() {
                indices.push([i, j, k]);
            }
        }
    }
    OctantRegion { direction: dir, origin, indices }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(cells: usize) -> Grid {
        Grid::new(&[(0.0, 1.0), (0.0, 1.0)], &[cells + 1, cells + 1]).unwrap()
    }

    #[test]
    fn beta_hat_values() {
        assert_eq!(beta_hat(-0.5), 1.0);
        assert_eq!(beta_hat(1.0), 0.0);
        assert!((beta_hat(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = beta_hat(i as f64 / 100.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn spec_window_example() {
        let g = grid2(600);
        let p = make_partition(&g, g.full_box(), &[2, 2], 10, 30).unwrap();
        assert_eq!(p.breakpoint(0, 1), 0.5);
        let w = p.window_of([0, 0, 0]);
        assert_eq!((w.lo, w.hi), ([0, 0, 0], [340, 340, 0]));
    }

    #[test]
    fn table_one_boxes() {
        let g = Grid::new(&[(-0.5, 0.5), (-0.5, 0.5)], &[561, 561]).unwrap();
        let p = Partition::with_collar(&g, 30, &[5, 5], 10, 20).unwrap();
        for idx in p.subdomains() {
            let b = p.box_of(idx);
            assert_eq!(b.extent(0) - 1, 100);
            assert_eq!(b.extent(1) - 1, 100);
        }
        let full = make_partition(&g, g.full_box(), &[5, 5], 10, 20).unwrap();
        assert_eq!(full.box_of([2, 2, 0]).extent(0) - 1, 112);
    }

    #[test]
    fn divisibility_is_checked() {
        let g = Grid::new(&[(0.0, 1.0); 3], &[81, 81, 81]).unwrap();
        let e = make_partition(&g, g.full_box(), &[3, 3, 3], 4, 6).unwrap_err();
        assert!(e.to_string().contains("axis x"), "{e}");
        let g = Grid::new(&[(0.0, 1.0); 3], &[82, 82, 82]).unwrap();
        assert!(make_partition(&g, g.full_box(), &[3, 3, 3], 4, 6).is_ok());
    }

    #[test]
    fn beta_boundary_branches() {
        let g = grid2(120);
        let p = make_partition(&g, g.full_box(), &[3, 3], 6, 10).unwrap();
        let h = g.h(0);
        for x in [0.0, 0.3, 0.9] {
            assert_eq!(p.beta_1d(0, -1, 0, x), 1.0);
            assert_eq!(p.beta_1d(0, 1, 2, x), 1.0);
        }
        let xi = p.breakpoint(0, 1);
        assert_eq!(p.beta_1d(0, -1, 1, xi), 1.0);
        assert_eq!(p.beta_1d(0, -1, 1, xi - 6.0 * h), 0.0);
        assert_eq!(p.beta_1d(0, 1, 0, xi + h), 1.0);
        assert_eq!(p.beta_1d(0, 1, 0, xi + 6.0 * h), 0.0);
    }

    #[test]
    fn beta00_is_one_on_box_zero_outside() {
        let g = Grid::new(&[(0.0, 1.0); 3], &[31, 31, 31]).unwrap();
        let p = Partition::with_collar(&g, 3, &[3, 3, 3], 3, 0).unwrap();
        for idx in p.subdomains() {
            let b = p.box_of(idx);
            let s = p.beta_00_support(idx);
            for q in g.full_box().nodes() {
                let v = p.beta_00(idx, q);
                if b.contains(q) {
                    assert_eq!(v, 1.0);
                }
                if !s.contains(q) {
                    assert_eq!(v, 0.0, "{idx:?} {q:?}");
                }
            }
        }
    }

    #[test]
    fn chi_is_open() {
        let g = grid2(120);
        let p = make_partition(&g, g.full_box(), &[3, 3], 6, 10).unwrap();
        let xi = p.breaks(0)[1];
        assert!(!p.chi([1, 0, 0], [0, 0, 0], [xi, 5, 0]));
        assert!(p.chi([1, 0, 0], [0, 0, 0], [xi + 1, 5, 0]));
        assert!(!p.chi([-1, 0, 0], [1, 0, 0], [xi, 5, 0]));
        assert!(p.chi([-1, 0, 0], [1, 0, 0], [xi - 1, 5, 0]));
        let g3 = Grid::new(&[(0.0, 1.0); 3], &[31, 31, 31]).unwrap();
        let p3 = make_partition(&g3, g3.full_box(), &[3, 3, 3], 3, 2).unwrap();
        let z = p3.breaks(2)[2];
        assert!(p3.chi([0, 0, 1], [1, 1, 1], [0, 30, z + 1]));
        assert!(!p3.chi([0, 0, 1], [1, 1, 1], [0, 30, z]));
    }

    #[test]
    fn owner_prefers_lower_index() {
        let g = grid2(120);
        let p = Partition::with_collar(&g, 15, &[3, 3], 6, 9).unwrap();
        let xi = p.breaks(0)[1];
        assert_eq!(p.owner([xi, 20, 0]), [0, 0, 0]);
        assert_eq!(p.owner([xi + 1, 20, 0]), [1, 0, 0]);
        assert_eq!(p.owner([0, 120, 0]), [0, 2, 0]);
    }

    #[test]
    fn step_examples() {
        let n = [5, 5, 5];
        assert_eq!(sweep_step_of([2, 2, 0], [1, 1, 0], n, 2), 5);
        assert_eq!(sweep_step_of([1, 2, 0], [-1, 1, 0], n, 2), 6);
        assert_eq!(sweep_step_of([2, 2, 2], [1, 1, 1], n, 3), 7);
        assert_eq!(steps_per_sweep(n, 3), 13);
    }

    #[test]
    fn octant_examples() {
        let n = [5, 5, 5];
        let r = octant_region([1, 1, 1], [2, 2, 2], n, 3);
        assert_eq!(r.indices.len(), 27);
        assert!(r.indices.iter().all(|i| i.iter().all(|&c| (2..5).contains(&c))));
        let r = octant_region([-1, 1, 0], [2, 2, 0], n, 2);
        assert_eq!(r.indices.len(), 6);
        assert!(r.indices.iter().all(|i| i[0] < 2 && i[1] >= 2));
        assert!(octant_region([-1, -1, -1], [0, 0, 0], n, 3).indices.is_empty());
    }
}
