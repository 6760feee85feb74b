//! Additive and diagonal sweeping domain decomposition engines.
//!
//! Both engines solve every subdomain problem with its cached factorization,
//! turn each local solution into transferred sources for the neighbours and
//! accumulate `Σ β_{0;i} u_i` on the global grid. The diagonal engine walks
//! the `2^dim` sweeps of a [`SweepPlan`]; inside a sweep the subdomains of
//! one step are independent and are solved in parallel, while the merge of
//! their sources happens in a fixed order so results are reproducible.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{ComplexField, IndexBox};
use crate::partition::{octant_region, steps_per_sweep, sweep_step_of, Partition, SubIdx};
use crate::pml::DiscreteOperator;
use crate::solver::LocalSolver;
use crate::transfer::{psi, source_directions, SweepPlan, TransferRecord, TransferredSource};
use crate::{Error, Result, C64};

/// Partition plus one factorized solver per subdomain (linear order).
#[derive(Clone, Copy)]
pub struct DdmSystem<'a> {
    pub partition: &'a Partition,
    pub solvers: &'a [LocalSolver],
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SweepOptions {
    /// Keep a copy of the combined solution after every sweep.
    pub keep_partials: bool,
    /// Record solve events and source routing.
    pub record: bool,
}

/// One local solve, as written to the JSON-lines event log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SolveEvent {
    /// Position in the execution order.
    pub seq: usize,
    /// One-based sweep (or 1 for the additive engine).
    pub sweep: usize,
    pub step: usize,
    /// One-based subdomain index.
    pub subdomain: Vec<usize>,
    pub sources_consumed: usize,
    pub sources_emitted: usize,
    pub nonzero: bool,
}

/// Routing of one transferred source together with when it was produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutedSource {
    pub record: TransferRecord,
    /// One-based step that generated it.
    pub gen_step: usize,
    /// `seq` of the generating solve.
    pub gen_seq: usize,
}

#[derive(Clone, Debug)]
pub struct DdmOutcome {
    pub solution: ComplexField,
    /// Combined solution after each sweep (when requested).
    pub partials: Vec<ComplexField>,
    pub events: Vec<SolveEvent>,
    pub routes: Vec<RoutedSource>,
    /// Nonzero sources no later sweep could use.
    pub discarded: usize,
    pub local_solves: usize,
}

impl DdmOutcome {
    /// Writes the event log as JSON lines.
    pub fn write_events<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Splits `f` into per-subdomain sources on each window: every node goes to
/// its owner.
pub fn restrict_source(f: &ComplexField, part: &Partition) -> Result<Vec<Vec<C64>>> {
    if f.grid != *part.grid() {
        return Err(Error::Mismatch("source grid differs from the partition grid".into()));
    }
    let mut out: Vec<Vec<C64>> = part.subdomains().iter().map(|&i| vec![C64::new(0.0, 0.0); part.window_of(i).len()]).collect();
    let mut leaked = 0usize;
    let interior = part.interior();
    for (i, v) in f.values.iter().enumerate() {
        if *v == C64::new(0.0, 0.0) {
            continue;
        }
        let p = f.grid.node(i);
        if !interior.contains(p) {
            leaked += 1;
        }
        let o = part.owner(p);
        let w = part.window_of(o);
        out[part.linear(o)][w.local_index(p)] = *v;
    }
    if leaked > 0 {
        log::debug!("source has {leaked} nonzero nodes in the PML collar");
    }
    Ok(out)
}

struct Solved {
    u: Vec<C64>,
    sources: Vec<TransferredSource>,
    /// Directions and targets of sources no sweep can use.
    dropped: Vec<([i8; 3], SubIdx)>,
}

fn is_zero(v: &[C64]) -> bool {
    v.iter().all(|x| *x == C64::new(0.0, 0.0))
}

fn one_based(idx: SubIdx, dim: usize) -> Vec<usize> {
    idx[..dim].iter().map(|i| i + 1).collect()
}

impl DdmSystem<'_> {
    fn check(&self) -> Result<()> {
        if self.solvers.len() != self.partition.len() {
            return Err(Error::Mismatch(format!("{} solvers for {} subdomains", self.solvers.len(), self.partition.len())));
        }
        Ok(())
    }

    fn op(&self, idx: SubIdx) -> &DiscreteOperator {
        &self.solvers[self.partition.linear(idx)].op
    }

    /// Solves one subdomain and evaluates all its outgoing sources.
    fn solve_and_transfer(
        &self,
        idx: SubIdx,
        rhs: &[C64],
        gen: usize,
        admit: &(dyn Fn([i8; 3]) -> bool + Sync),
    ) -> Result<Solved> {
        let u = self.solvers[self.partition.linear(idx)].solve(rhs)?;
        let mut out = Vec::new();
        let mut dropped = Vec::new();
        if !is_zero(&u) {
            for d in source_directions(self.partition.dim()) {
                if let Some(t) = self.partition.neighbor(idx, d) {
                    if !admit(d) {
                        dropped.push((d, t));
                        continue;
                    }
                    if let Some(s) = psi(self.partition, idx, d, &u, self.op(t), gen)? {
                        if !s.is_zero() {
                            out.push(s);
                        }
                    }
                }
            }
        }
        Ok(Solved { u, sources: out, dropped })
    }

    fn combine(&self, idx: SubIdx, u: &[C64], acc: &mut ComplexField) {
        let part = self.partition;
        let w = part.window_of(idx);
        let sup = part.beta_00_support(idx).intersect(&w);
        for p in sup.nodes() {
            let b = part.beta_00(idx, p);
            if b != 0.0 {
                acc.values[acc.grid.index(p)] += u[w.local_index(p)] * b;
            }
        }
    }

    fn zeros(&self, idx: SubIdx) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.partition.window_of(idx).len()]
    }

    /// Diagonal sweeping solve of `L u = f`.
    pub fn diagonal_sweep(&self, f: &ComplexField, plan: &SweepPlan, opts: SweepOptions) -> Result<DdmOutcome> {
        self.check()?;
        let part = self.partition;
        let dim = part.dim();
        if plan.dim() != dim {
            return Err(Error::Mismatch("sweep plan dimension differs from the partition".into()));
        }
        let n = part.len();
        let counts = part.counts();
        let subs = part.subdomains();
        let mut pending: Vec<Vec<Option<Vec<C64>>>> = vec![vec![None; n]; plan.len()];
        let mut consumed = vec![vec![0usize; n]; plan.len()];
        for (i, r) in restrict_source(f, part)?.into_iter().enumerate() {
            if !is_zero(&r) {
                consumed[0][i] = 1;
                pending[0][i] = Some(r);
            }
        }
        let mut out = DdmOutcome {
            solution: ComplexField::zeros(f.grid),
            partials: Vec::new(),
            events: Vec::new(),
            routes: Vec::new(),
            discarded: 0,
            local_solves: 0,
        };
        for l in 0..plan.len() {
            let dir = plan.dir(l);
            for s in 1..=steps_per_sweep(counts, dim) {
                let members: Vec<SubIdx> = subs.iter().copied().filter(|&i| sweep_step_of(i, dir, counts, dim) == s).collect();
                let rhs: Vec<Vec<C64>> = members
                    .iter()
                    .map(|&i| pending[l][part.linear(i)].take().unwrap_or_else(|| self.zeros(i)))
                    .collect();
                let admit = |d: [i8; 3]| plan.next_usable_sweep(d, l).is_some();
                let results: Vec<Result<Solved>> =
                    members.par_iter().zip(rhs.par_iter()).map(|(&i, r)| self.solve_and_transfer(i, r, l, &admit)).collect();
                for (&idx, res) in members.iter().zip(results) {
                    let Solved { u, sources, dropped } = res?;
                    out.local_solves += 1;
                    let seq = out.local_solves - 1;
                    let lin = part.linear(idx);
                    let nonzero = !is_zero(&u);
                    if nonzero {
                        self.combine(idx, &u, &mut out.solution);
                    }
                    let emitted = sources.len() + dropped.len();
                    out.discarded += dropped.len();
                    if opts.record {
                        for (d, t) in dropped {
                            out.routes.push(RoutedSource {
                                record: TransferRecord { generated_in: l, direction: d, source: idx, target: t, consumed_in: None },
                                gen_step: s,
                                gen_seq: seq,
                            });
                        }
                    }
                    for src in sources {
                        let next = plan.next_usable_sweep(src.direction, l);
                        if opts.record {
                            out.routes.push(RoutedSource {
                                record: TransferRecord {
                                    generated_in: l,
                                    direction: src.direction,
                                    source: idx,
                                    target: src.target,
                                    consumed_in: next,
                                },
                                gen_step: s,
                                gen_seq: seq,
                            });
                        }
                        let Some(m) = next else {
                            out.discarded += 1;
                            continue;
                        };
                        let t = part.linear(src.target);
                        debug_assert!(m > l || sweep_step_of(src.target, dir, counts, dim) > s);
                        let w = part.window_of(src.target);
                        let slot = pending[m][t].get_or_insert_with(|| vec![C64::new(0.0, 0.0); w.len()]);
                        src.add_into(&w, slot);
                        consumed[m][t] += 1;
                    }
                    if opts.record {
                        out.events.push(SolveEvent {
                            seq,
                            sweep: l + 1,
                            step: s,
                            subdomain: one_based(idx, dim),
                            sources_consumed: consumed[l][lin],
                            sources_emitted: emitted,
                            nonzero,
                        });
                    }
                }
            }
            debug_assert!(pending[l].iter().all(|p| p.is_none()));
            if opts.keep_partials {
                out.partials.push(out.solution.clone());
            }
        }
        Ok(out)
    }

    /// Additive overlapping solve: step `s` collects the sources produced
    /// `|d|₁` steps earlier.
    pub fn additive(&self, f: &ComplexField, opts: SweepOptions) -> Result<DdmOutcome> {
        self.check()?;
        let part = self.partition;
        let dim = part.dim();
        let n = part.len();
        let steps = steps_per_sweep(part.counts(), dim);
        let subs = part.subdomains();
        let mut pending: Vec<Vec<Option<Vec<C64>>>> = vec![vec![None; n]; steps + 1];
        let mut consumed = vec![vec![0usize; n]; steps + 1];
        for (i, r) in restrict_source(f, part)?.into_iter().enumerate() {
            if !is_zero(&r) {
                consumed[1][i] = 1;
                pending[1][i] = Some(r);
            }
        }
        let mut out = DdmOutcome {
            solution: ComplexField::zeros(f.grid),
            partials: Vec::new(),
            events: Vec::new(),
            routes: Vec::new(),
            discarded: 0,
            local_solves: 0,
        };
        for s in 1..=steps {
            let rhs: Vec<Vec<C64>> = subs.iter().map(|&i| pending[s][part.linear(i)].take().unwrap_or_else(|| self.zeros(i))).collect();
            let admit = |_: [i8; 3]| true;
            let results: Vec<_> = subs.par_iter().zip(rhs.par_iter()).map(|(&i, r)| self.solve_and_transfer(i, r, 0, &admit)).collect();
            for (&idx, res) in subs.iter().zip(results) {
                let Solved { u, sources, .. } = res?;
                out.local_solves += 1;
                let seq = out.local_solves - 1;
                let nonzero = !is_zero(&u);
                if nonzero {
                    self.combine(idx, &u, &mut out.solution);
                }
                let emitted = sources.len();
                for src in sources {
                    let lag: usize = src.direction.iter().map(|c| c.unsigned_abs() as usize).sum();
                    if s + lag > steps {
                        out.discarded += 1;
                        continue;
                    }
                    let t = part.linear(src.target);
                    let w = part.window_of(src.target);
                    let slot = pending[s + lag][t].get_or_insert_with(|| vec![C64::new(0.0, 0.0); w.len()]);
                    src.add_into(&w, slot);
                    consumed[s + lag][t] += 1;
                }
                if opts.record {
                    out.events.push(SolveEvent {
                        seq,
                        sweep: 1,
                        step: s,
                        subdomain: one_based(idx, dim),
                        sources_consumed: consumed[s][part.linear(idx)],
                        sources_emitted: emitted,
                        nonzero,
                    });
                }
            }
            if opts.keep_partials {
                out.partials.push(out.solution.clone());
            }
        }
        Ok(out)
    }
}

/// One right-hand-side application of the diagonal sweeping method, usable
/// as a preconditioner.
pub struct SweepPreconditioner<'a> {
    pub system: DdmSystem<'a>,
    pub plan: SweepPlan,
}

impl SweepPreconditioner<'_> {
    pub fn apply(&self, r: &[C64]) -> Result<Vec<C64>> {
        let grid = *self.system.partition.grid();
        let f = ComplexField::from_values(grid, r.to_vec())?;
        Ok(self.system.diagonal_sweep(&f, &self.plan, SweepOptions::default())?.solution.values)
    }
}

/// Stationary iteration `u ← u + M(f − L u)` with the sweep preconditioner.
/// Returns the iterate and the relative residual after each update.
pub fn iterate(pre: &SweepPreconditioner, op: &DiscreteOperator, f: &[C64], iterations: usize) -> Result<(Vec<C64>, Vec<f64>)> {
    let norm = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let fnorm = norm(f);
    let mut u = vec![C64::new(0.0, 0.0); f.len()];
    let mut r = f.to_vec();
    let mut hist = Vec::with_capacity(iterations);
    let mut lu = vec![C64::new(0.0, 0.0); f.len()];
    for _ in 0..iterations {
        let du = pre.apply(&r)?;
        for (a, b) in u.iter_mut().zip(&du) {
            *a += b;
        }
        op.apply(&u, &mut lu)?;
        for ((ri, fi), li) in r.iter_mut().zip(f).zip(&lu) {
            *ri = fi - li;
        }
        hist.push(if fnorm > 0.0 { norm(&r) / fnorm } else { 0.0 });
    }
    Ok((u, hist))
}

/// Per-sweep comparison of the partial solutions with a reference.
#[derive(Clone, Debug, PartialEq)]
pub struct OctantReport {
    /// One-based sweep.
    pub sweep: usize,
    /// Relative L2 difference on the boxes of the region completed by this sweep.
    pub region_error: f64,
    /// Largest partial-sum magnitude outside the cutoff supports of all
    /// regions completed so far.
    pub outside_max: f64,
}

/// Checks the octant-wise construction for a source supported in `origin`.
pub fn octant_check(part: &Partition, plan: &SweepPlan, origin: SubIdx, partials: &[ComplexField], reference: &ComplexField) -> Result<Vec<OctantReport>> {
    if partials.len() != plan.len() {
        return Err(Error::Mismatch(format!("{} partial sums for {} sweeps", partials.len(), plan.len())));
    }
    let grid = *part.grid();
    let dim = part.dim();
    let mut covered = vec![false; grid.len()];
    let mut reports = Vec::new();
    for (l, partial) in partials.iter().enumerate() {
        let region = octant_region(plan.dir(l), origin, part.counts(), dim);
        let mut inside = vec![false; grid.len()];
        for &idx in &region.indices {
            for p in part.box_of(idx).nodes() {
                inside[grid.index(p)] = true;
            }
            for p in part.beta_00_support(idx).nodes() {
                covered[grid.index(p)] = true;
            }
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..grid.len() {
            if inside[i] {
                num += (partial.values[i] - reference.values[i]).norm_sqr();
                den += reference.values[i].norm_sqr();
            }
        }
        let outside_max = (0..grid.len()).filter(|&i| !covered[i]).map(|i| partial.values[i].norm()).fold(0.0, f64::max);
        let region_error = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
        reports.push(OctantReport { sweep: l + 1, region_error, outside_max });
    }
    Ok(reports)
}

/// Relative L2 difference over a node box, unweighted.
pub fn relative_difference(a: &ComplexField, b: &ComplexField, region: &IndexBox) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in region.nodes() {
        let i = a.grid.index(p);
        num += (a.values[i] - b.values[i]).norm_sqr();
        den += b.values[i].norm_sqr();
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}
