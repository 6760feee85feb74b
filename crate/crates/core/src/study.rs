//! Experiment drivers shared by the command-line tool and the acceptance
//! suite: GMRES with the sweep preconditioner, mesh refinement against the
//! free-space reference and residual decay fits.

use std::time::Instant;

use serde::Serialize;

use crate::analytic::gaussian_reference;
use crate::ddm::{iterate, DdmSystem, SweepOptions, SweepPreconditioner};
use crate::grid::{field_error, ComplexField, NormKind};
use crate::krylov::{gmres, GmresOptions, SolveReport};
use crate::media::gaussian_source;
use crate::pml::DiscreteOperator;
use crate::problem::{Problem, ProblemSpec};
use crate::solver::{FactorCache, LocalSolver};
use crate::transfer::SweepPlan;
use crate::{Error, Result, C64};

/// A problem with its global operator and factorized local solvers.
pub struct Prepared {
    pub problem: Problem,
    pub op: DiscreteOperator,
    pub solvers: Vec<LocalSolver>,
    pub factor_seconds: f64,
    /// Distinct factorizations computed.
    pub factorizations: usize,
}

impl Prepared {
    pub fn new(problem: Problem) -> Result<Prepared> {
        let t = Instant::now();
        let mut cache = FactorCache::new();
        let solvers = problem.local_solvers(&mut cache)?;
        let op = problem.global_operator()?;
        Ok(Prepared { problem, op, solvers, factor_seconds: t.elapsed().as_secs_f64(), factorizations: cache.misses() })
    }

    pub fn system(&self) -> DdmSystem<'_> {
        DdmSystem { partition: &self.problem.partition, solvers: &self.solvers }
    }

    fn preconditioner(&self, plan: &SweepPlan) -> SweepPreconditioner<'_> {
        SweepPreconditioner { system: self.system(), plan: plan.clone() }
    }

    /// One application of the diagonal sweeping method.
    pub fn sweep(&self, f: &ComplexField, plan: &SweepPlan) -> Result<ComplexField> {
        Ok(self.system().diagonal_sweep(f, plan, SweepOptions::default())?.solution)
    }

    /// GMRES on the global system, right-preconditioned by one diagonal sweep
    /// per iteration.
    pub fn gmres(&self, f: &ComplexField, plan: &SweepPlan, opts: GmresOptions) -> Result<(ComplexField, SolveReport)> {
        let pre = self.preconditioner(plan);
        let apply_a = |v: &[C64]| {
            let mut out = vec![C64::new(0.0, 0.0); v.len()];
            self.op.apply(v, &mut out)?;
            Ok(out)
        };
        let (x, rep) = gmres(apply_a, |v: &[C64]| pre.apply(v), &f.values, opts)?;
        Ok((ComplexField::from_values(f.grid, x)?, rep))
    }

    /// Stationary sweep iteration; returns the iterate and the residual history.
    pub fn iterate(&self, f: &ComplexField, plan: &SweepPlan, iterations: usize) -> Result<(ComplexField, Vec<f64>)> {
        let (u, hist) = iterate(&self.preconditioner(plan), &self.op, &f.values, iterations)?;
        Ok((ComplexField::from_values(f.grid, u)?, hist))
    }
}

/// One mesh of a refinement study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    /// Cells per axis of the whole grid, PML collar included.
    pub mesh: usize,
    pub h: f64,
    pub l2: f64,
    pub h1: f64,
    pub l2_rate: Option<f64>,
    pub h1_rate: Option<f64>,
    pub iterations: usize,
    pub seconds: f64,
}

/// Fills in `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` for consecutive rows.
pub fn convergence_rates(rows: &mut [ConvergenceRow]) {
    for k in 1..rows.len() {
        let r = (rows[k - 1].h / rows[k].h).ln();
        rows[k].l2_rate = Some((rows[k - 1].l2 / rows[k].l2).ln() / r);
        rows[k].h1_rate = Some((rows[k - 1].h1 / rows[k].h1).ln() / r);
    }
}

/// Solves the Gaussian-source problem on every mesh with preconditioned
/// GMRES and measures the interior L2 and H1 errors against the free-space
/// solution.
pub fn gaussian_convergence(specs: &[ProblemSpec], center: &[f64], opts: GmresOptions) -> Result<Vec<ConvergenceRow>> {
    if specs.len() < 2 {
        return Err(Error::Config("a convergence study needs at least two meshes".into()));
    }
    let mut rows = Vec::new();
    for spec in specs {
        if !matches!(spec.model, crate::media::VelocityModel::Constant(_)) {
            return Err(Error::Config("the free-space reference needs a constant medium".into()));
        }
        let t = Instant::now();
        let prep = Prepared::new(Problem::new(spec.clone())?)?;
        let p = &prep.problem;
        let kappa = p.kappa[0];
        let f = gaussian_source(&p.grid, p.interior(), center, kappa)?;
        let plan = SweepPlan::default_for(p.dim());
        let (u, rep) = prep.gmres(&f, &plan, opts)?;
        let reference = gaussian_reference(&p.grid, center, kappa);
        rows.push(ConvergenceRow {
            mesh: p.grid.n(0) - 1,
            h: p.grid.h(0),
            l2: field_error(&u, &reference, NormKind::L2, p.interior())?,
            h1: field_error(&u, &reference, NormKind::H1, p.interior())?,
            l2_rate: None,
            h1_rate: None,
            iterations: rep.iterations,
            seconds: t.elapsed().as_secs_f64(),
        });
        log::info!("mesh {} done in {:.1}s", rows.last().unwrap().mesh, t.elapsed().as_secs_f64());
    }
    convergence_rates(&mut rows);
    Ok(rows)
}

/// Least-squares slope of `log10(residual)` per iteration over the tail of a
/// history, ignoring the first `skip` entries and anything below `floor`.
pub fn decay_slope(history: &[f64], skip: usize, floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .skip(skip)
        .take_while(|(_, r)| **r > floor)
        .map(|(k, r)| (k as f64, r.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_of_exact_power_law() {
        let mut rows: Vec<ConvergenceRow> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| ConvergenceRow { mesh: 0, h, l2: 3.0 * h * h, h1: h, l2_rate: None, h1_rate: None, iterations: 0, seconds: 0.0 })
            .collect();
        convergence_rates(&mut rows);
        assert!((rows[2].l2_rate.unwrap() - 2.0).abs() < 1e-12);
        assert!((rows[1].h1_rate.unwrap() - 1.0).abs() < 1e-12);
        assert!(rows[0].l2_rate.is_none());
    }

    #[test]
    fn slope_of_geometric_decay() {
        let h: Vec<f64> = (0..12).map(|k| 0.3f64.powi(k)).collect();
        let s = decay_slope(&h, 2, 1e-8).unwrap();
        assert!((s - 0.3f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn gmres_with_sweeps_solves_a_small_problem() {
        let spec = ProblemSpec::constant(2, 0.0, 1.0, 60, 3, 3, 8, 4.0);
        let prep = Prepared::new(Problem::new(spec).unwrap()).unwrap();
        assert_eq!(prep.factorizations, 1);
        let p = &prep.problem;
        let f = gaussian_source(&p.grid, p.interior(), &[0.4, 0.55], p.kappa[0]).unwrap();
        let (_, rep) = prep.gmres(&f, &SweepPlan::default_for(2), GmresOptions::default()).unwrap();
        assert!(rep.converged && rep.iterations <= 4, "{rep:?}");
    }
}
