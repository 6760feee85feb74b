//! Source transfer between neighbouring subdomains and the sweep
//! admissibility rules.
//!
//! A local solution `v` of subdomain `i` produces, for every direction `d`
//! towards an existing neighbour, the source `−L_{i+d}(β_{d;i} v) χ_{d;i}`.
//! The source is routed to the first sweep (at or after the generating one)
//! whose direction admits it.

use std::io::Write;

use crate::grid::IndexBox;
use crate::partition::{Dir, Partition, SubIdx};
use crate::pml::DiscreteOperator;
use crate::{Error, Result, C64};

fn dot(a: Dir, b: Dir) -> i32 {
    (0..3).map(|k| a[k] as i32 * b[k] as i32).sum()
}

/// `d₁ · d₂ > 0`, and in 3D additionally no componentwise sign conflict.
pub fn similar_direction(d1: Dir, d2: Dir, dim: usize) -> bool {
    if dot(d1, d2) <= 0 {
        return false;
    }
    dim == 2 || (0..3).all(|k| d1[k] as i32 * d2[k] as i32 >= 0)
}

fn exactly_one_zero(a: i8, b: i8) -> bool {
    (a == 0) != (b == 0)
}

/// Whether a source with direction `src`, generated in the sweep `gen`, may
/// be consumed by the sweep `usage`.
pub fn rule_allows(src: Dir, gen: Dir, usage: Dir, dim: usize) -> bool {
    if !similar_direction(src, usage, dim) {
        return false;
    }
    if dim == 2 {
        return !(exactly_one_zero(src[0], src[1]) && gen[0] == -usage[0] && gen[1] == -usage[1]);
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        if exactly_one_zero(src[a], src[b]) && gen[a] == -usage[a] && gen[b] == -usage[b] {
            return false;
        }
    }
    true
}

/// Order in which the diagonal directions are swept.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepPlan {
    dim: usize,
    dirs: Vec<Dir>,
}

impl SweepPlan {
    pub fn default_for(dim: usize) -> SweepPlan {
        let dirs = if dim == 2 {
            vec![[1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0]]
        } else {
            vec![[1, 1, 1], [-1, 1, 1], [1, -1, 1], [-1, -1, 1], [1, 1, -1], [-1, 1, -1], [1, -1, -1], [-1, -1, -1]]
        };
        SweepPlan { dim, dirs }
    }

    /// 3D order in which the L1 distance to the first direction never decreases.
    pub fn distance_ordered_3d() -> SweepPlan {
        let dirs = vec![[1, 1, 1], [-1, 1, 1], [1, -1, 1], [1, 1, -1], [-1, -1, 1], [-1, 1, -1], [1, -1, -1], [-1, -1, -1]];
        SweepPlan { dim: 3, dirs }
    }

    /// Validated custom plan covering every diagonal direction once.
    pub fn new(dim: usize, dirs: Vec<Dir>) -> Result<SweepPlan> {
        let want = 1usize << dim;
        let valid = |d: &Dir| (0..3).all(|k| if k < dim { d[k] == 1 || d[k] == -1 } else { d[k] == 0 });
        let mut seen = dirs.clone();
        seen.sort();
        seen.dedup();
        if dirs.len() != want || seen.len() != want || !dirs.iter().all(valid) {
            return Err(Error::Config(format!("a {dim}D sweep plan needs the {want} diagonal directions exactly once")));
        }
        Ok(SweepPlan { dim, dirs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.dirs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
    /// Direction of sweep `l` (zero-based).
    pub fn dir(&self, l: usize) -> Dir {
        self.dirs[l]
    }
    pub fn dirs(&self) -> &[Dir] {
        &self.dirs
    }

    /// Smallest zero-based sweep `l′ ≥ l` that admits a source generated in
    /// sweep `l`.
    pub fn next_usable_sweep(&self, src: Dir, l: usize) -> Option<usize> {
        let gen = self.dirs[l];
        (l..self.dirs.len()).find(|&m| rule_allows(src, gen, self.dirs[m], self.dim))
    }
}

/// All `3^dim − 1` source directions in a fixed order.
pub fn source_directions(dim: usize) -> Vec<Dir> {
    let zr: &[i8] = if dim == 3 { &[-1, 0, 1] } else { &[0] };
    let mut out = Vec::new();
    for &k in zr {
        for j in [-1i8, 0, 1] {
            for i in [-1i8, 0, 1] {
                if (i, j, k) != (0, 0, 0) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// A residual source queued for a neighbouring subdomain.
#[derive(Clone, Debug)]
pub struct TransferredSource {
    pub target: SubIdx,
    pub direction: Dir,
    /// Zero-based sweep that generated the source.
    pub generated_in: usize,
    /// Global node box carrying the payload.
    pub band: IndexBox,
    /// Payload on `band`, x fastest.
    pub values: Vec<C64>,
}

impl TransferredSource {
    /// Adds the payload into a right-hand side laid out on `window`.
    pub fn add_into(&self, window: &IndexBox, rhs: &mut [C64]) {
        for (v, p) in self.values.iter().zip(self.band.nodes()) {
            rhs[window.local_index(p)] += v;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == C64::new(0.0, 0.0))
    }
}

/// Nodes where the source `Ψ_{dir;idx}` can be nonzero.
pub fn psi_band(part: &Partition, idx: SubIdx, dir: Dir) -> Option<IndexBox> {
    let target = part.neighbor(idx, dir)?;
    let tw = part.window_of(target);
    let d = part.overlap();
    let b = part.box_of(idx);
    let mut band = tw;
    for a in 0..part.dim() {
        match dir[a] {
            1 => {
                band.lo[a] = b.hi[a] + 1;
                band.hi[a] = b.hi[a] + d;
            }
            -1 => {
                band.lo[a] = b.lo[a] - d;
                band.hi[a] = b.lo[a] - 1;
            }
            _ => {}
        }
    }
    Some(band.intersect(&tw))
}

/// `Ψ_{dir;idx}(v) = −L_{idx+dir}(β_{dir;idx} v) χ_{dir;idx}` for `v` given
/// on the window of `idx` (and zero outside it). Returns `None` when the
/// neighbour lies outside the partition.
pub fn psi(
    part: &Partition,
    idx: SubIdx,
    dir: Dir,
    v: &[C64],
    target_op: &DiscreteOperator,
    generated_in: usize,
) -> Result<Option<TransferredSource>> {
    let Some(target) = part.neighbor(idx, dir) else {
        return Ok(None);
    };
    let sw = part.window_of(idx);
    if v.len() != sw.len() {
        return Err(Error::Mismatch(format!("local solution has {} values, window {}", v.len(), sw.len())));
    }
    if *target_op.window() != part.window_of(target) {
        return Err(Error::Mismatch("operator window does not belong to the target subdomain".into()));
    }
    let band = psi_band(part, idx, dir).expect("neighbour exists");
    let bv = |q: [usize; 3]| {
        if sw.contains(q) {
            v[sw.local_index(q)] * part.beta_dir(dir, idx, q)
        } else {
            C64::new(0.0, 0.0)
        }
    };
    let values = band
        .nodes()
        .map(|p| if part.chi(dir, idx, p) { -target_op.apply_at(p, &bv) } else { C64::new(0.0, 0.0) })
        .collect();
    Ok(Some(TransferredSource { target, direction: dir, generated_in, band, values }))
}

/// Routing decision for one generated source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferRecord {
    pub generated_in: usize,
    pub direction: Dir,
    pub source: SubIdx,
    pub target: SubIdx,
    pub consumed_in: Option<usize>,
}

/// Writes routing records as CSV (sweeps one-based, subdomains one-based).
pub fn write_transfer_csv<W: Write>(mut w: W, dim: usize, records: &[TransferRecord]) -> Result<()> {
    writeln!(w, "gen_sweep,src_dir,source,target,consumed_in")?;
    let fmt_dir = |d: Dir| d[..dim].iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
    let fmt_idx = |s: SubIdx| s[..dim].iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(" ");
    for r in records {
        let used = r.consumed_in.map_or("discarded".to_string(), |l| (l + 1).to_string());
        writeln!(w, "{},{},{},{},{}", r.generated_in + 1, fmt_dir(r.direction), fmt_idx(r.source), fmt_idx(r.target), used)?;
    }
    Ok(())
}
