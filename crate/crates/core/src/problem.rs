//! Assembly of a complete Helmholtz problem: grid with PML collar, partition,
//! wavenumber field, operators and factorized local solvers.

use std::sync::Arc;

use crate::grid::{ComplexField, Grid, IndexBox};
use crate::media::{wavenumber_field, VelocityModel};
use crate::partition::{make_partition, Partition, SubIdx};
use crate::pml::{assemble_operator, DiscreteOperator, PmlProfile, DEFAULT_STRENGTH};
use crate::solver::{factorize, FactorCache, LocalSolver};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    /// Physical interior domain (without PML) per axis.
    pub interior: Vec<(f64, f64)>,
    /// Cells across the interior per axis.
    pub cells: Vec<usize>,
    /// Subdomains per axis.
    pub counts: Vec<usize>,
    /// Overlap `d` in grid points.
    pub overlap: usize,
    /// PML width in grid points.
    pub pml: usize,
    /// Angular frequency ω.
    pub omega: f64,
    pub model: VelocityModel,
    /// `σ_max · κ_min · L_pml`.
    pub strength: f64,
    pub exponent: i32,
}

impl ProblemSpec {
    /// Square/cube interior `[a, b]^dim` with `cells` cells per axis, unit
    /// velocity and frequency `κ/2π = freq`.
    pub fn constant(dim: usize, a: f64, b: f64, cells: usize, counts: usize, overlap: usize, pml: usize, freq: f64) -> ProblemSpec {
        ProblemSpec {
            interior: vec![(a, b); dim],
            cells: vec![cells; dim],
            counts: vec![counts; dim],
            overlap,
            pml,
            omega: 2.0 * std::f64::consts::PI * freq,
            model: VelocityModel::Constant(1.0),
            strength: DEFAULT_STRENGTH,
            exponent: 2,
        }
    }

    pub fn dim(&self) -> usize {
        self.interior.len()
    }
}

/// Grid, partition and wavenumber of one problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub grid: Grid,
    pub partition: Partition,
    pub kappa: Vec<f64>,
    pub profile: PmlProfile,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Problem> {
        let dim = spec.dim();
        if !(dim == 2 || dim == 3) || spec.cells.len() != dim || spec.counts.len() != dim {
            return Err(Error::Config("interior, cells and counts must all have 2 or 3 entries".into()));
        }
        let collar = spec.overlap + spec.pml;
        let mut extents = Vec::with_capacity(dim);
        let mut nodes = Vec::with_capacity(dim);
        for a in 0..dim {
            let (lo, hi) = spec.interior[a];
            if !(hi > lo) || spec.cells[a] == 0 {
                return Err(Error::Config(format!("axis {a}: degenerate interior [{lo}, {hi}] with {} cells", spec.cells[a])));
            }
            let h = (hi - lo) / spec.cells[a] as f64;
            extents.push((lo - collar as f64 * h, hi + collar as f64 * h));
            nodes.push(spec.cells[a] + 2 * collar + 1);
        }
        let grid = Grid::new(&extents, &nodes)?;
        let mut interior = grid.full_box();
        for a in 0..dim {
            interior.lo[a] = collar;
            interior.hi[a] = collar + spec.cells[a];
        }
        let partition = make_partition(&grid, interior, &spec.counts, spec.overlap, spec.pml)?;
        let kappa = wavenumber_field(&grid, &spec.model, spec.omega, &interior)?;
        let kmin = kappa.iter().cloned().fold(f64::INFINITY, f64::min);
        let width = spec.pml as f64 * grid.h(0);
        let profile = PmlProfile::new(spec.pml, spec.overlap, spec.strength / (kmin * width), spec.exponent)?;
        Ok(Problem { spec, grid, partition, kappa, profile })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn interior(&self) -> &IndexBox {
        self.partition.interior()
    }

    /// Operator on the whole grid with the PML attached to the interior box.
    pub fn global_operator(&self) -> Result<DiscreteOperator> {
        assemble_operator(&self.grid, self.grid.full_box(), *self.interior(), &self.profile, &self.kappa)
    }

    /// Local operator of a subdomain on its window.
    pub fn local_operator(&self, idx: SubIdx) -> Result<DiscreteOperator> {
        let p = &self.partition;
        assemble_operator(&self.grid, p.window_of(idx), p.box_of(idx), &self.profile, &self.kappa)
    }

    /// Factorized local solvers in linear subdomain order.
    pub fn local_solvers(&self, cache: &mut FactorCache) -> Result<Vec<LocalSolver>> {
        let mut out = Vec::with_capacity(self.partition.len());
        for idx in self.partition.subdomains() {
            out.push(cache.get_or_factor(Arc::new(self.local_operator(idx)?))?);
        }
        Ok(out)
    }

    /// Direct solve of the global system.
    pub fn global_solve(&self, f: &ComplexField) -> Result<ComplexField> {
        let op = Arc::new(self.global_operator()?);
        let ls = LocalSolver { fact: Arc::new(factorize(&op)?), op };
        global_solve_with(&ls, f)
    }
}

/// Solves `L u = f` on the whole grid with a factorized global operator.
pub fn global_solve_with(solver: &LocalSolver, f: &ComplexField) -> Result<ComplexField> {
    if f.grid != *solver.op.grid() || *solver.op.window() != f.grid.full_box() {
        return Err(Error::Mismatch("global solve needs an operator on the full grid".into()));
    }
    let u = solver.solve(&f.values)?;
    ComplexField::from_values(f.grid, u)
}

/// `f − L u` for the global operator.
pub fn residual(op: &DiscreteOperator, u: &[C64], f: &[C64]) -> Result<Vec<C64>> {
    let mut r = vec![C64::new(0.0, 0.0); u.len()];
    op.apply(u, &mut r)?;
    for (a, b) in r.iter_mut().zip(f) {
        *a = b - *a;
    }
    Ok(r)
}
