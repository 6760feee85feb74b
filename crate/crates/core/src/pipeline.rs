//! Timing model for pipelined multi-right-hand-side sweeps.
//!
//! One core per subdomain. In every sweep each core handles the mirror image
//! of its home subdomain, so a core always sits at the same step of every
//! sweep. A right-hand side runs `n_iter` preconditioner applications of
//! `2^dim` sweeps each; different right-hand sides are staggered through the
//! steps.

use serde::Serialize;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PipelineSpec {
    pub dim: usize,
    pub counts: [usize; 3],
    pub n_rhs: usize,
    pub n_iter: usize,
    /// Seconds per subdomain solve.
    pub t0: f64,
    /// Extra delay on every hand-off between consecutive steps.
    pub transfer_cost: f64,
}

impl PipelineSpec {
    pub fn new(counts: &[usize], n_rhs: usize, n_iter: usize, t0: f64) -> Result<PipelineSpec> {
        let dim = counts.len();
        if !(dim == 2 || dim == 3) || counts.contains(&0) || n_rhs == 0 || n_iter == 0 || !(t0 > 0.0) {
            return Err(Error::Config("pipeline needs 2 or 3 positive counts and positive n_rhs, n_iter, t0".into()));
        }
        let mut c = [1usize; 3];
        c[..dim].copy_from_slice(counts);
        Ok(PipelineSpec { dim, counts: c, n_rhs, n_iter, t0, transfer_cost: 0.0 })
    }

    pub fn sweeps(&self) -> usize {
        1 << self.dim
    }
    /// Steps of one sweep: `Σ N_a − dim + 1`.
    pub fn steps(&self) -> usize {
        self.counts[..self.dim].iter().sum::<usize>() + 1 - self.dim
    }
    pub fn cores(&self) -> usize {
        self.counts[..self.dim].iter().product()
    }
    fn busy_per_rhs(&self) -> f64 {
        (self.sweeps() * self.n_iter) as f64 * self.t0
    }
}

/// `2^dim n_iter T₀ + (steps / N_RHS) T₀`.
pub fn average_time_diagonal(s: &PipelineSpec) -> f64 {
    s.busy_per_rhs() + s.steps() as f64 / s.n_rhs as f64 * s.t0
}

/// `2^dim n_iter T₀ + (Π N_a / N_RHS) T₀`.
pub fn average_time_recursive(s: &PipelineSpec) -> f64 {
    s.busy_per_rhs() + s.cores() as f64 / s.n_rhs as f64 * s.t0
}

/// Relative increase of the diagonal average time over `2^dim n_iter T₀`.
pub fn overhead_fraction(s: &PipelineSpec) -> f64 {
    average_time_diagonal(s) / s.busy_per_rhs() - 1.0
}

/// Core rank of a zero-based home subdomain, x slowest as in
/// `((i−1) N_y + j − 1) N_z + k`.
pub fn core_rank(s: &PipelineSpec, idx: [usize; 3]) -> usize {
    (idx[0] * s.counts[1] + idx[1]) * s.counts[2] + idx[2]
}

/// Subdomain handled by the core with home `home` during a sweep along `dir`.
pub fn assigned_subdomain(s: &PipelineSpec, home: [usize; 3], dir: [i8; 3]) -> [usize; 3] {
    let mut out = home;
    for a in 0..s.dim {
        if dir[a] < 0 {
            out[a] = s.counts[a] - 1 - home[a];
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Task {
    pub core: usize,
    pub rhs: usize,
    /// Sweep application counter over all iterations (zero-based).
    pub round: usize,
    /// One-based step of the core in every sweep.
    pub step: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub makespan: f64,
    pub avg_per_rhs: f64,
    pub utilization: Vec<f64>,
    pub formula_avg: f64,
    #[serde(skip)]
    pub tasks: Vec<Task>,
}

/// Event simulation with unit solve cost `T₀`. A core processes its tasks in
/// (round, rhs) order; a task waits for the cores one step earlier in the
/// same round, and step 1 of a round waits for the last step of the previous
/// round of the same right-hand side.
pub fn simulate_pipeline(s: &PipelineSpec) -> Schedule {
    let steps = s.steps();
    let rounds = s.sweeps() * s.n_iter;
    let nr = s.n_rhs;
    let mut homes = Vec::new();
    for i in 0..s.counts[0] {
        for j in 0..s.counts[1] {
            for k in 0..s.counts[2] {
                homes.push([i, j, k]);
            }
        }
    }
    let step_of = |h: [usize; 3]| 1 + h[..s.dim].iter().sum::<usize>();
    // Finish time of (round, rhs) at each step; all cores at one step share it.
    let mut finish = vec![vec![0.0f64; nr]; steps + 1];
    let mut prev_round_end = vec![0.0f64; nr];
    let mut core_free = vec![0.0f64; homes.len()];
    let mut tasks = Vec::with_capacity(rounds * nr * homes.len());
    let mut by_step: Vec<Vec<usize>> = vec![Vec::new(); steps + 1];
    for (c, &h) in homes.iter().enumerate() {
        by_step[step_of(h)].push(c);
    }
    for q in 0..rounds {
        for r in 0..nr {
            for st in 1..=steps {
                let ready = if st == 1 {
                    if q == 0 {
                        0.0
                    } else {
                        prev_round_end[r] + s.transfer_cost
                    }
                } else {
                    finish[st - 1][r] + s.transfer_cost
                };
                let mut last: f64 = 0.0;
                for &c in &by_step[st] {
                    let start = ready.max(core_free[c]);
                    let end = start + s.t0;
                    core_free[c] = end;
                    last = last.max(end);
                    tasks.push(Task { core: core_rank(s, homes[c]), rhs: r, round: q, step: st, start, end });
                }
                finish[st][r] = last;
            }
            prev_round_end[r] = finish[steps][r];
        }
    }
    let makespan = tasks.iter().map(|t| t.end).fold(0.0, f64::max);
    let mut busy = vec![0.0; homes.len()];
    for t in &tasks {
        busy[t.core] += t.end - t.start;
    }
    Schedule {
        makespan,
        avg_per_rhs: makespan / nr as f64,
        utilization: busy.iter().map(|b| b / makespan).collect(),
        formula_avg: average_time_diagonal(s),
        tasks,
    }
}
