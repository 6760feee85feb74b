//! Multifrontal sparse LU for operators on box windows.
//!
//! The window is ordered by geometric nested dissection: a box is split by
//! a one-node-thick plane normal to its longest axis, recursively, down to
//! small leaf boxes. Every tree node owns a dense front made of its
//! separator (or leaf) nodes followed by the face-adjacent nodes outside its
//! box. Fronts are factorized with partial pivoting inside the fully summed
//! block and their Schur complements are extend-added into the parent.

use std::sync::Arc;

use crate::dense::{apply_pivots, backward_panel, forward_panel, partial_lu};
use crate::grid::IndexBox;
use crate::pml::{stride, DiscreteOperator};
use crate::{Error, Result, C64};

const LEAF_2D: usize = 96;
const LEAF_3D: usize = 128;
const PARALLEL_MIN: usize = 4096;

struct Front {
    /// Window-local node indices: `s` pivot variables, then the boundary.
    vars: Vec<u32>,
    s: usize,
    piv: Vec<u32>,
    /// `n × s` panel holding `L11\U11` over `L21`.
    panel: Vec<C64>,
    /// `s × (n − s)` block `U12`.
    u12: Vec<C64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FillStats {
    /// Stored complex factor entries.
    pub factor_entries: usize,
    /// Nonzeros of the assembled matrix.
    pub matrix_entries: usize,
    pub max_front: usize,
    pub fronts: usize,
}

impl FillStats {
    pub fn bytes(&self) -> usize {
        self.factor_entries * std::mem::size_of::<C64>()
    }
}

/// LU factors of `S = J·L` for one operator window.
pub struct Factorization {
    n: usize,
    fronts: Vec<Front>,
    stats: FillStats,
}

struct Sub {
    fronts: Vec<Front>,
    update: Vec<C64>,
    boundary: Vec<u32>,
}

fn box_nodes(dims: &[usize; 3], lo: [usize; 3], hi: [usize; 3], out: &mut Vec<u32>) {
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                out.push((i + dims[0] * (j + dims[1] * k)) as u32);
            }
        }
    }
}

/// Face-adjacent nodes outside the local box `lo..=hi`, sorted.
fn box_boundary(dims: &[usize; 3], dim: usize, lo: [usize; 3], hi: [usize; 3]) -> Vec<u32> {
    let mut out = Vec::new();
    for a in 0..dim {
        if lo[a] > 0 {
            let (mut l, mut h) = (lo, hi);
            l[a] = lo[a] - 1;
            h[a] = lo[a] - 1;
            box_nodes(dims, l, h, &mut out);
        }
        if hi[a] + 1 < dims[a] {
            let (mut l, mut h) = (lo, hi);
            l[a] = hi[a] + 1;
            h[a] = hi[a] + 1;
            box_nodes(dims, l, h, &mut out);
        }
    }
    out.sort_unstable();
    out
}

fn position(front_s: &[u32], front_b: &[u32], v: u32) -> Option<usize> {
    if let Ok(i) = front_s.binary_search(&v) {
        return Some(i);
    }
    front_b.binary_search(&v).ok().map(|i| front_s.len() + i)
}

struct Ctx<'a> {
    op: &'a DiscreteOperator,
    dims: [usize; 3],
    dim: usize,
    leaf: usize,
}

impl Ctx<'_> {
    fn factor_box(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<Sub> {
        let ext: Vec<usize> = (0..3).map(|a| hi[a] + 1 - lo[a]).collect();
        let vol: usize = ext.iter().product();
        let axis = (0..self.dim).max_by_key(|&a| (ext[a], usize::MAX - a)).unwrap();
        let mut sep = Vec::new();
        let mut children = Vec::new();
        if vol <= self.leaf || ext[axis] < 3 {
            box_nodes(&self.dims, lo, hi, &mut sep);
        } else {
            let m = lo[axis] + ext[axis] / 2;
            let (mut h1, mut l2) = (hi, lo);
            h1[axis] = m - 1;
            l2[axis] = m + 1;
            let (mut sl, mut sh) = (lo, hi);
            sl[axis] = m;
            sh[axis] = m;
            box_nodes(&self.dims, sl, sh, &mut sep);
            if vol >= PARALLEL_MIN {
                let (a, b) = rayon::join(|| self.factor_box(lo, h1), || self.factor_box(l2, hi));
                children.push(a?);
                children.push(b?);
            } else {
                children.push(self.factor_box(lo, h1)?);
                children.push(self.factor_box(l2, hi)?);
            }
        }
        sep.sort_unstable();
        let boundary = box_boundary(&self.dims, self.dim, lo, hi);
        let s = sep.len();
        let nf = s + boundary.len();
        let mut f = vec![C64::new(0.0, 0.0); nf * nf];

        // Original matrix entries in the separator rows and columns.
        for (ls, &v) in sep.iter().enumerate() {
            let i = v as usize;
            f[ls + ls * nf] += self.op.s_diag(i);
            let p = [i % self.dims[0], (i / self.dims[0]) % self.dims[1], i / (self.dims[0] * self.dims[1])];
            for a in 0..self.dim {
                let st = stride(&self.dims, a);
                let mut nb = [None, None];
                if p[a] > 0 {
                    nb[0] = Some((i - st, self.op.s_off(a, i - st)));
                }
                if p[a] + 1 < self.dims[a] {
                    nb[1] = Some((i + st, self.op.s_off(a, i)));
                }
                for (q, c) in nb.into_iter().flatten() {
                    if let Some(lq) = position(&sep, &boundary, q as u32) {
                        f[ls + lq * nf] += c;
                        if lq >= s {
                            f[lq + ls * nf] += c;
                        }
                    }
                }
            }
        }
        // Extend-add of the children's Schur complements.
        let mut fronts = Vec::new();
        for child in children {
            let map: Vec<usize> = child
                .boundary
                .iter()
                .map(|&v| position(&sep, &boundary, v).expect("child boundary inside parent front"))
                .collect();
            let cb = map.len();
            for (cc, &pc) in map.iter().enumerate() {
                let src = &child.update[cc * cb..cc * cb + cb];
                let dst = pc * nf;
                for (rr, &pr) in map.iter().enumerate() {
                    f[dst + pr] += src[rr];
                }
            }
            fronts.extend(child.fronts);
        }

        let mut piv = vec![0u32; s];
        partial_lu(&mut f, nf, s, &mut piv)?;
        let b = nf - s;
        let panel = f[..nf * s].to_vec();
        let mut u12 = Vec::with_capacity(s * b);
        let mut update = Vec::with_capacity(b * b);
        for c in s..nf {
            u12.extend_from_slice(&f[c * nf..c * nf + s]);
            update.extend_from_slice(&f[c * nf + s..c * nf + nf]);
        }
        drop(f);
        let mut vars = sep;
        vars.extend_from_slice(&boundary);
        fronts.push(Front { vars, s, piv, panel, u12 });
        Ok(Sub { fronts, update, boundary })
    }
}

/// Factorizes `S = J·L` of an operator.
pub fn factorize(op: &DiscreteOperator) -> Result<Factorization> {
    if op.is_empty() {
        return Err(Error::Mismatch("cannot factorize an empty window".into()));
    }
    let w: &IndexBox = op.window();
    let dims = w.dims();
    let dim = op.dim();
    let ctx = Ctx { op, dims, dim, leaf: if dim == 2 { LEAF_2D } else { LEAF_3D } };
    let hi = [dims[0] - 1, dims[1] - 1, dims[2] - 1];
    let top = ctx.factor_box([0; 3], hi)?;
    debug_assert!(top.boundary.is_empty());
    let mut stats = FillStats { fronts: top.fronts.len(), ..Default::default() };
    for fr in &top.fronts {
        stats.factor_entries += fr.panel.len() + fr.u12.len();
        stats.max_front = stats.max_front.max(fr.vars.len());
    }
    stats.matrix_entries = op.len() + 2 * (0..dim).map(|a| op.len() - op.len() / dims[a]).sum::<usize>();
    Ok(Factorization { n: op.len(), fronts: top.fronts, stats })
}

impl Factorization {
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn stats(&self) -> FillStats {
        self.stats
    }

    /// Solves `S x = b` in place.
    pub fn solve_in_place(&self, x: &mut [C64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Mismatch(format!("rhs of length {} for a factorization of size {}", x.len(), self.n)));
        }
        let mut t = Vec::new();
        for fr in &self.fronts {
            let n = fr.vars.len();
            t.clear();
            t.extend(fr.vars.iter().map(|&v| x[v as usize]));
            apply_pivots(&mut t[..fr.s], &fr.piv);
            forward_panel(&fr.panel, n, fr.s, &mut t);
            for (k, &v) in fr.vars.iter().enumerate() {
                x[v as usize] = t[k];
            }
        }
        for fr in self.fronts.iter().rev() {
            let n = fr.vars.len();
            t.clear();
            t.extend(fr.vars.iter().map(|&v| x[v as usize]));
            backward_panel(&fr.panel, &fr.u12, n, fr.s, &mut t);
            for (k, &v) in fr.vars[..fr.s].iter().enumerate() {
                x[v as usize] = t[k];
            }
        }
        Ok(())
    }

    /// Bitwise comparison of two factorizations.
    pub fn bitwise_eq(&self, other: &Factorization) -> bool {
        let eq = |a: &[C64], b: &[C64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
        };
        self.n == other.n
            && self.fronts.len() == other.fronts.len()
            && self.fronts.iter().zip(&other.fronts).all(|(a, b)| {
                a.vars == b.vars && a.piv == b.piv && eq(&a.panel, &b.panel) && eq(&a.u12, &b.u12)
            })
    }
}

/// An operator together with its factors: solves `L u = r`.
#[derive(Clone)]
pub struct LocalSolver {
    pub op: Arc<DiscreteOperator>,
    pub fact: Arc<Factorization>,
}

impl LocalSolver {
    /// Returns `u` with `L u = r` on the operator window.
    pub fn solve(&self, r: &[C64]) -> Result<Vec<C64>> {
        let mut x = r.to_vec();
        self.op.scale_rhs(&mut x);
        self.fact.solve_in_place(&mut x)?;
        Ok(x)
    }
}

struct CacheEntry {
    key: u64,
    op: Arc<DiscreteOperator>,
    fact: Arc<Factorization>,
}

/// Reuses factorizations across operators with identical coefficients.
#[derive(Default)]
pub struct FactorCache {
    entries: Vec<CacheEntry>,
    hits: usize,
    misses: usize,
}

impl FactorCache {
    pub fn new() -> FactorCache {
        FactorCache::default()
    }

    pub fn get_or_factor(&mut self, op: Arc<DiscreteOperator>) -> Result<LocalSolver> {
        let key = op.fingerprint();
        if let Some(e) = self.entries.iter().find(|e| e.key == key && e.op.same_coefficients(&op)) {
            self.hits += 1;
            return Ok(LocalSolver { op, fact: e.fact.clone() });
        }
        self.misses += 1;
        let fact = Arc::new(factorize(&op)?);
        self.entries.push(CacheEntry { key, op: op.clone(), fact: fact.clone() });
        Ok(LocalSolver { op, fact })
    }

    pub fn hits(&self) -> usize {
        self.hits
    }
    pub fn misses(&self) -> usize {
        self.misses
    }
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }
    /// Bytes held by all cached factors.
    pub fn factor_bytes(&self) -> usize {
        self.entries.iter().map(|e| e.fact.stats().bytes()).sum()
    }
}
