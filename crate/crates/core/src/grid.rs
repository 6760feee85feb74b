//! Structured node-centred grids, complex nodal fields and discrete norms.
//!
//! Nodes are numbered with the x index running fastest. A 2D grid keeps a
//! dummy third axis with a single node so that index arithmetic is shared.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    lower: [f64; 3],
    upper: [f64; 3],
    n: [usize; 3],
    h: [f64; 3],
}

impl Grid {
    /// Builds a grid from per-axis extents and node counts.
    pub fn new(extents: &[(f64, f64)], counts: &[usize]) -> Result<Grid> {
        let dim = extents.len();
        if !(dim == 2 || dim == 3) || counts.len() != dim {
            return Err(Error::Config(format!(
                "grid needs 2 or 3 axes with matching counts, got {} extents and {} counts",
                dim,
                counts.len()
            )));
        }
        let mut g = Grid { dim, lower: [0.0; 3], upper: [0.0; 3], n: [1; 3], h: [1.0; 3] };
        for a in 0..dim {
            let (lo, hi) = extents[a];
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::Config(format!("axis {a}: degenerate extent [{lo}, {hi}]")));
            }
            if counts[a] < 2 {
                return Err(Error::Config(format!("axis {a}: need at least 2 nodes, got {}", counts[a])));
            }
            g.lower[a] = lo;
            g.upper[a] = hi;
            g.n[a] = counts[a];
            g.h[a] = (hi - lo) / (counts[a] - 1) as f64;
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }
    pub fn counts(&self) -> [usize; 3] {
        self.n
    }
    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.h
    }
    pub fn lower(&self, axis: usize) -> f64 {
        self.lower[axis]
    }
    pub fn upper(&self, axis: usize) -> f64 {
        self.upper[axis]
    }
    pub fn extents(&self) -> Vec<(f64, f64)> {
        (0..self.dim).map(|a| (self.lower[a], self.upper[a])).collect()
    }
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Product of the spacings: the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).product()
    }
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + i as f64 * self.h[axis]
    }
    pub fn point(&self, p: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coord(a, p[a]);
        }
        x
    }
    pub fn index(&self, p: [usize; 3]) -> usize {
        p[0] + self.n[0] * (p[1] + self.n[1] * p[2])
    }
    pub fn node(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let r = idx / self.n[0];
        [i, r % self.n[1], r / self.n[1]]
    }
    /// Nearest node index along one axis, clamped to the grid.
    pub fn nearest(&self, axis: usize, x: f64) -> usize {
        let t = ((x - self.lower[axis]) / self.h[axis]).round();
        t.clamp(0.0, (self.n[axis] - 1) as f64) as usize
    }
    pub fn full_box(&self) -> IndexBox {
        IndexBox { lo: [0; 3], hi: [self.n[0] - 1, self.n[1] - 1, self.n[2] - 1] }
    }
}

/// Inclusive box of node indices. Unused axes hold `lo = hi = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IndexBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl IndexBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> IndexBox {
        IndexBox { lo, hi }
    }
    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] < self.lo[a])
    }
    pub fn extent(&self, axis: usize) -> usize {
        if self.hi[axis] < self.lo[axis] {
            0
        } else {
            self.hi[axis] - self.lo[axis] + 1
        }
    }
    pub fn dims(&self) -> [usize; 3] {
        [self.extent(0), self.extent(1), self.extent(2)]
    }
    pub fn len(&self) -> usize {
        self.extent(0) * self.extent(1) * self.extent(2)
    }
    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }
    pub fn contains_box(&self, other: &IndexBox) -> bool {
        other.is_empty() || (self.contains(other.lo) && self.contains(other.hi))
    }
    pub fn intersect(&self, other: &IndexBox) -> IndexBox {
        let mut b = *self;
        for a in 0..3 {
            b.lo[a] = self.lo[a].max(other.lo[a]);
            b.hi[a] = self.hi[a].min(other.hi[a]);
        }
        b
    }
    /// Linear index of a global node inside this box (x fastest).
    pub fn local_index(&self, p: [usize; 3]) -> usize {
        let d = self.dims();
        (p[0] - self.lo[0]) + d[0] * ((p[1] - self.lo[1]) + d[1] * (p[2] - self.lo[2]))
    }
    pub fn local_node(&self, idx: usize) -> [usize; 3] {
        let d = self.dims();
        let i = idx % d[0];
        let r = idx / d[0];
        [self.lo[0] + i, self.lo[1] + r % d[1], self.lo[2] + r / d[1]]
    }
    /// Iterates the nodes in x-fastest order.
    pub fn nodes(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let b = *self;
        let n = if b.is_empty() { 0 } else { b.len() };
        (0..n).map(move |i| b.local_node(i))
    }
}

/// Complex values on every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub values: Vec<C64>,
}

impl ComplexField {
    pub fn zeros(grid: Grid) -> ComplexField {
        ComplexField { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 3]) -> C64) -> ComplexField {
        let values = (0..grid.len()).map(|i| f(grid.point(grid.node(i)))).collect();
        ComplexField { grid, values }
    }
    pub fn from_values(grid: Grid, values: Vec<C64>) -> Result<ComplexField> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        Ok(ComplexField { grid, values })
    }
    pub fn at(&self, p: [usize; 3]) -> C64 {
        self.values[self.grid.index(p)]
    }
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
    pub fn scale(&mut self, c: C64) {
        for v in &mut self.values {
            *v *= c;
        }
    }
    /// `self += c * other`
    pub fn axpy(&mut self, c: C64, other: &ComplexField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("grid mismatch in axpy".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L2,
    /// Full discrete H1 norm.
    H1,
    /// Forward-difference gradient part of the H1 norm only.
    H1Semi,
}

fn norm_parts(grid: &Grid, values: &dyn Fn(usize) -> C64, region: &IndexBox) -> (f64, f64) {
    let w = grid.cell_volume();
    let mut l2 = 0.0;
    let mut grad = 0.0;
    for p in region.nodes() {
        let i = grid.index(p);
        let v = values(i);
        let mut wt = 1.0;
        for a in 0..grid.dim() {
            if region.extent(a) > 1 && (p[a] == region.lo[a] || p[a] == region.hi[a]) {
                wt *= 0.5;
            }
        }
        l2 += wt * v.norm_sqr();
        for a in 0..grid.dim() {
            if p[a] < region.hi[a] {
                let mut q = p;
                q[a] += 1;
                let dv = (values(grid.index(q)) - v) / grid.h(a);
                grad += dv.norm_sqr();
            }
        }
    }
    (l2 * w, grad * w)
}

fn combine(kind: NormKind, (l2, grad): (f64, f64)) -> f64 {
    match kind {
        NormKind::L2 => l2.sqrt(),
        NormKind::H1 => (l2 + grad).sqrt(),
        NormKind::H1Semi => grad.sqrt(),
    }
}

/// Norm over every node of the grid. The L2 part uses trapezoid weights
/// (halved on the faces of the region) so that constants integrate exactly.
pub fn field_norm(u: &ComplexField, kind: NormKind) -> f64 {
    norm_on(u, &u.grid.full_box(), kind)
}

/// Norm restricted to the nodes of `region`.
pub fn norm_on(u: &ComplexField, region: &IndexBox, kind: NormKind) -> f64 {
    let vals = |i: usize| u.values[i];
    combine(kind, norm_parts(&u.grid, &vals, region))
}

/// Norm of `u - reference` over the nodes of `region`.
pub fn field_error(u: &ComplexField, reference: &ComplexField, kind: NormKind, region: &IndexBox) -> Result<f64> {
    if u.grid != reference.grid {
        return Err(Error::Mismatch("field_error: grids differ".into()));
    }
    if !u.grid.full_box().contains_box(region) {
        return Err(Error::Mismatch("field_error: region outside grid".into()));
    }
    let vals = |i: usize| u.values[i] - reference.values[i];
    Ok(combine(kind, norm_parts(&u.grid, &vals, region)))
}

/// Relative L2 difference on a region, `‖u − r‖ / ‖r‖`.
pub fn relative_error(u: &ComplexField, reference: &ComplexField, region: &IndexBox) -> Result<f64> {
    let e = field_error(u, reference, NormKind::L2, region)?;
    let r = norm_on(reference, region, NormKind::L2);
    Ok(if r == 0.0 { e } else { e / r })
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct FieldHeader {
    pub dims: usize,
    pub extents: Vec<[f64; 2]>,
    pub counts: Vec<usize>,
}

/// Path of the JSON sidecar that accompanies a raw data file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes interleaved little-endian `(re, im)` doubles plus a JSON sidecar.
pub fn write_field(path: &Path, u: &ComplexField) -> Result<()> {
    let mut buf = Vec::with_capacity(u.values.len() * 16);
    for z in &u.values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, buf)?;
    let g = &u.grid;
    let header = FieldHeader {
        dims: g.dim(),
        extents: (0..g.dim()).map(|a| [g.lower(a), g.upper(a)]).collect(),
        counts: (0..g.dim()).map(|a| g.n(a)).collect(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ComplexField> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let extents: Vec<(f64, f64)> = header.extents.iter().map(|e| (e[0], e[1])).collect();
    let grid = Grid::new(&extents, &header.counts)?;
    let raw = fs::read(path)?;
    if raw.len() != grid.len() * 16 {
        return Err(Error::Format(format!("{}: expected {} bytes, found {}", path.display(), grid.len() * 16, raw.len())));
    }
    let values = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    ComplexField::from_values(grid, values)
}

/// Binary PGM of the real part, linearly scaled to [0, 255]. For 3D fields
/// the middle z-slice is written. Row 0 of the image is the top (largest y).
pub fn write_pgm(path: &Path, u: &ComplexField) -> Result<()> {
    let g = &u.grid;
    let (nx, ny) = (g.n(0), g.n(1));
    let k = g.n(2) / 2;
    let slice: Vec<f64> = (0..nx * ny).map(|i| u.at([i % nx, i / nx, k]).re).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &slice {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{nx} {ny}\n255\n")?;
    let mut bytes = Vec::with_capacity(nx * ny);
    for j in (0..ny).rev() {
        for i in 0..nx {
            bytes.push((255.0 * (slice[i + nx * j] - lo) / span).round() as u8);
        }
    }
    f.write_all(&bytes)?;
    Ok(())
}
