//! Command implementations and output writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sweepddm::ddm::SweepOptions;
use sweepddm::grid::{field_norm, write_field, write_pgm, ComplexField, NormKind};
use sweepddm::krylov::GmresOptions;
use sweepddm::media::{gaussian_source, layered_model, load_velocity, point_shots, VelocityModel};
use sweepddm::pipeline::{average_time_diagonal, average_time_recursive, overhead_fraction, simulate_pipeline, PipelineSpec};
use sweepddm::problem::{residual, Problem, ProblemSpec};
use sweepddm::study::{decay_slope, gaussian_convergence, Prepared};
use sweepddm::transfer::{write_transfer_csv, SweepPlan};

use crate::config::{config_hash, locate, Loaded, MediumKind, RunConfig, SolveMode, SourceKind};
use crate::CliError;

pub struct Context {
    pub cfg: RunConfig,
    text: String,
    origin: String,
    hash: String,
    base: PathBuf,
}

impl Context {
    pub fn new(loaded: Loaded, origin: String) -> Result<Context, CliError> {
        let base = Path::new(&origin).parent().map(Path::to_path_buf).unwrap_or_default();
        let hash = config_hash(&loaded.config);
        let ctx = Context { cfg: loaded.config, text: loaded.text, origin, hash, base };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Error message pointing at `section.key` in the file when it is there.
    fn at(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> CliError {
        match locate(&self.text, section, key) {
            Some(l) => CliError::Config(format!("{}, line {l} ({section}.{key}): {msg}", self.origin)),
            None => CliError::Config(format!("{} ({section}.{key}): {msg}", self.origin)),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.cfg;
        let dim = c.problem.dim;
        if dim != 2 && dim != 3 {
            return Err(self.at("problem", "dim", format!("dimension must be 2 or 3, got {dim}")));
        }
        if !(c.problem.extent[1] > c.problem.extent[0]) {
            return Err(self.at("problem", "extent", "upper bound must exceed lower bound"));
        }
        if !(c.problem.frequency > 0.0) {
            return Err(self.at("problem", "frequency", "must be positive"));
        }
        if c.partition.counts.len() != dim {
            return Err(self.at("partition", "counts", format!("needs {dim} entries, got {}", c.partition.counts.len())));
        }
        if c.discretization.cells == 0 {
            return Err(self.at("discretization", "cells", "must be positive"));
        }
        if !(c.solver.tol > 0.0) || c.solver.restart == 0 || c.solver.max_iter == 0 {
            return Err(CliError::Config(format!("{}: solver tol, restart and max_iter must be positive", self.origin)));
        }
        Ok(())
    }

    fn model(&self) -> Result<VelocityModel, CliError> {
        let m = &self.cfg.medium;
        Ok(match m.kind {
            MediumKind::Constant => {
                if !(m.speed > 0.0) {
                    return Err(self.at("medium", "speed", "must be positive"));
                }
                VelocityModel::Constant(m.speed)
            }
            MediumKind::Layered => layered_model(&m.interfaces, &m.speeds).map_err(|e| self.at("medium", "speeds", e))?,
            MediumKind::Raster => {
                let p = m.path.as_ref().ok_or_else(|| self.at("medium", "kind", "raster medium needs a path"))?;
                load_velocity(&self.base.join(p))?
            }
        })
    }

    /// Problem with the configured discretization and the given overrides.
    fn spec(&self, cells: usize, counts: &[usize], freq: f64, overlap: usize, pml: usize) -> Result<ProblemSpec, CliError> {
        let c = &self.cfg;
        let dim = c.problem.dim;
        Ok(ProblemSpec {
            interior: vec![(c.problem.extent[0], c.problem.extent[1]); dim],
            cells: vec![cells; dim],
            counts: counts.to_vec(),
            overlap,
            pml,
            omega: 2.0 * std::f64::consts::PI * freq,
            model: self.model()?,
            strength: c.discretization.strength,
            exponent: c.discretization.exponent,
        })
    }

    fn base_spec(&self) -> Result<ProblemSpec, CliError> {
        let d = &self.cfg.discretization;
        self.spec(d.cells, &self.cfg.partition.counts, self.cfg.problem.frequency, d.overlap, d.pml)
    }

    fn problem(&self, spec: ProblemSpec) -> Result<Problem, CliError> {
        Problem::new(spec).map_err(|e| match e {
            sweepddm::Error::Config(m) if m.starts_with("axis") => self.at("partition", "counts", m),
            sweepddm::Error::Config(m) if m.contains("overlap") => self.at("discretization", "overlap", m),
            other => other.into(),
        })
    }

    fn prepared(&self, spec: ProblemSpec) -> Result<Prepared, CliError> {
        Ok(Prepared::new(self.problem(spec)?)?)
    }

    fn plan(&self) -> Result<SweepPlan, CliError> {
        let dim = self.cfg.problem.dim;
        match self.cfg.solver.plan.as_str() {
            "default" => Ok(SweepPlan::default_for(dim)),
            "distance" if dim == 3 => Ok(SweepPlan::distance_ordered_3d()),
            other => Err(self.at("solver", "plan", format!("unknown plan {other:?} for dimension {dim}"))),
        }
    }

    fn gmres_options(&self) -> GmresOptions {
        let s = &self.cfg.solver;
        GmresOptions { tol: s.tol, restart: s.restart, max_iter: s.max_iter }
    }

    /// Shot locations from the source section, drawing random ones from the seed.
    fn shot_locations(&self) -> Result<Vec<Vec<f64>>, CliError> {
        let s = &self.cfg.source;
        let dim = self.cfg.problem.dim;
        let [lo, hi] = self.cfg.problem.extent;
        match s.kind {
            SourceKind::Shots => {
                if s.locations.is_empty() {
                    return Err(self.at("source", "locations", "at least one shot location is needed"));
                }
                if let Some(bad) = s.locations.iter().find(|l| l.len() != dim) {
                    return Err(self.at("source", "locations", format!("{bad:?} does not have {dim} coordinates")));
                }
                Ok(s.locations.clone())
            }
            SourceKind::RandomShots => {
                if s.count == 0 {
                    return Err(self.at("source", "count", "must be positive"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                Ok((0..s.count).map(|_| (0..dim).map(|_| rng.gen_range(lo..hi)).collect()).collect())
            }
            SourceKind::Gaussian => Err(self.at("source", "kind", "this command needs point shots")),
        }
    }

    fn source(&self, p: &Problem) -> Result<ComplexField, CliError> {
        let s = &self.cfg.source;
        match s.kind {
            SourceKind::Gaussian => {
                if s.center.len() != p.dim() {
                    return Err(self.at("source", "center", format!("needs {} coordinates", p.dim())));
                }
                gaussian_source(&p.grid, p.interior(), &s.center, p.kappa[0]).map_err(|e| self.at("source", "center", e))
            }
            _ => point_shots(&p.grid, p.interior(), &self.shot_locations()?).map_err(|e| self.at("source", "locations", e)),
        }
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let d = &self.cfg.output.dir;
        fs::create_dir_all(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
        Ok(d)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out_dir()?.join(name);
        let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    /// CSV file whose first line records the configuration hash.
    fn csv(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let mut w = self.create(name)?;
        writeln!(w, "# config-hash: {}", self.hash)?;
        Ok(w)
    }

    fn json(&self, name: &str, mut value: serde_json::Value) -> Result<(), CliError> {
        value["config_hash"] = json!(self.hash);
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &value).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    fn write_solution(&self, u: &ComplexField) -> Result<(), CliError> {
        let dir = self.out_dir()?;
        if self.cfg.output.field {
            write_field(&dir.join("solution.field"), u)?;
        }
        if self.cfg.output.pgm {
            write_pgm(&dir.join("solution.pgm"), u)?;
        }
        Ok(())
    }
}

fn relative_residual(p: &Problem, u: &ComplexField, f: &ComplexField) -> Result<f64, CliError> {
    let op = p.global_operator()?;
    let r = residual(&op, &u.values, &f.values)?;
    let rn = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let fnorm = f.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(if fnorm > 0.0 { rn / fnorm } else { rn })
}

pub fn solve(ctx: &Context) -> Result<(), CliError> {
    let spec = ctx.base_spec()?;
    let mode = ctx.cfg.solver.mode;
    let plan = ctx.plan()?;
    let t = Instant::now();
    let mut report = json!({ "mode": mode, "dim": spec.dim(), "subdomains": spec.counts });
    let mut failure = None;
    let (u, problem, f) = if mode == SolveMode::GlobalDirect {
        let p = ctx.problem(spec)?;
        let f = ctx.source(&p)?;
        let u = p.global_solve(&f)?;
        (u, p, f)
    } else {
        let prep = ctx.prepared(spec)?;
        let f = ctx.source(&prep.problem)?;
        report["factor_seconds"] = json!(prep.factor_seconds);
        report["factorizations"] = json!(prep.factorizations);
        let opts = SweepOptions { keep_partials: false, record: ctx.cfg.output.events };
        let u = match mode {
            SolveMode::GmresDdm => {
                let (u, rep) = prep.gmres(&f, &plan, ctx.gmres_options())?;
                rep.write_csv(ctx.csv("residuals.csv")?)?;
                if !rep.converged {
                    failure = Some(format!(
                        "GMRES reached {:.3e} after {} iterations (tol {:.1e})",
                        rep.residuals.last().copied().unwrap_or(f64::NAN),
                        rep.iterations,
                        ctx.cfg.solver.tol
                    ));
                }
                report["gmres"] = serde_json::to_value(&rep).map_err(|e| CliError::Io(e.to_string()))?;
                u
            }
            _ => {
                let sys = prep.system();
                let out = if mode == SolveMode::DirectDdm { sys.diagonal_sweep(&f, &plan, opts)? } else { sys.additive(&f, opts)? };
                report["local_solves"] = json!(out.local_solves);
                report["discarded_sources"] = json!(out.discarded);
                if ctx.cfg.output.events {
                    out.write_events(ctx.create("events.jsonl")?)?;
                    let records: Vec<_> = out.routes.iter().map(|r| r.record.clone()).collect();
                    write_transfer_csv(ctx.csv("transfers.csv")?, prep.problem.dim(), &records)?;
                }
                out.solution
            }
        };
        (u, prep.problem, f)
    };
    report["seconds"] = json!(t.elapsed().as_secs_f64());
    report["relative_residual"] = json!(relative_residual(&problem, &u, &f)?);
    report["nodes"] = json!(problem.grid.len());
    report["solution_l2"] = json!(field_norm(&u, NormKind::L2));
    ctx.write_solution(&u)?;
    ctx.json("report.json", report)?;
    log::info!("solve finished in {:.2}s", t.elapsed().as_secs_f64());
    match failure {
        Some(m) => Err(CliError::NoConvergence(m)),
        None => Ok(()),
    }
}

pub fn convergence(ctx: &Context) -> Result<(), CliError> {
    let sec = ctx.cfg.convergence.as_ref().ok_or_else(|| CliError::Config(format!("{}: missing [convergence] section", ctx.origin)))?;
    if sec.factors.len() < 2 {
        return Err(ctx.at("convergence", "factors", "a refinement study needs at least two meshes"));
    }
    if ctx.cfg.source.kind != SourceKind::Gaussian {
        return Err(ctx.at("source", "kind", "the refinement study uses the Gaussian source"));
    }
    if ctx.cfg.medium.kind != MediumKind::Constant {
        return Err(ctx.at("medium", "kind", "the free-space reference needs a constant medium"));
    }
    let d = &ctx.cfg.discretization;
    let mut specs = Vec::new();
    for &k in &sec.factors {
        let spec = ctx.spec(d.cells * k, &ctx.cfg.partition.counts, ctx.cfg.problem.frequency, d.overlap * k, d.pml * k)?;
        // Validate the partition up front so bad factors fail before any solve.
        ctx.problem(spec.clone())?;
        specs.push(spec);
    }
    let rows = gaussian_convergence(&specs, &ctx.cfg.source.center, ctx.gmres_options())?;
    let mut w = ctx.csv("convergence.csv")?;
    writeln!(w, "mesh,h,l2_error,l2_rate,h1_error,h1_rate,iterations,seconds")?;
    let rate = |r: Option<f64>| r.map(|v| format!("{v:.4}")).unwrap_or_default();
    for r in &rows {
        writeln!(w, "{},{:.6e},{:.6e},{},{:.6e},{},{},{:.3}", r.mesh, r.h, r.l2, rate(r.l2_rate), r.h1, rate(r.h1_rate), r.iterations, r.seconds)?;
    }
    w.flush()?;
    ctx.json("convergence.json", json!({ "center": ctx.cfg.source.center, "rows": rows }))
}

pub fn decay(ctx: &Context) -> Result<(), CliError> {
    let sec = ctx.cfg.decay.as_ref().ok_or_else(|| CliError::Config(format!("{}: missing [decay] section", ctx.origin)))?;
    if sec.partitions.is_empty() || sec.iterations == 0 {
        return Err(ctx.at("decay", "partitions", "needs at least one partition and one iteration"));
    }
    let shots = ctx.shot_locations()?;
    let plan = ctx.plan()?;
    let d = &ctx.cfg.discretization;
    let mut histories = Vec::new();
    let mut entries = Vec::new();
    for counts in &sec.partitions {
        if counts.len() != ctx.cfg.problem.dim {
            return Err(ctx.at("decay", "partitions", format!("{counts:?} does not have {} entries", ctx.cfg.problem.dim)));
        }
        let prep = ctx.prepared(ctx.spec(d.cells, counts, ctx.cfg.problem.frequency, d.overlap, d.pml)?)?;
        let f = point_shots(&prep.problem.grid, prep.problem.interior(), &shots).map_err(|e| ctx.at("source", "locations", e))?;
        let (_, hist) = prep.iterate(&f, &plan, sec.iterations)?;
        let slope = decay_slope(&hist, sec.skip, sec.floor);
        log::info!("partition {counts:?}: slope {slope:?}");
        entries.push(json!({ "counts": counts, "slope": slope, "factor_per_iteration": slope.map(|s| 10f64.powf(s)) }));
        histories.push(hist);
    }
    let mut w = ctx.csv("decay.csv")?;
    let labels: Vec<String> =
        sec.partitions.iter().map(|c| format!("residual_{}", c.iter().map(usize::to_string).collect::<Vec<_>>().join("x"))).collect();
    writeln!(w, "iteration,{}", labels.join(","))?;
    for k in 0..=sec.iterations {
        let cols: Vec<String> = histories.iter().map(|h| h.get(k).map(|r| format!("{r:.6e}")).unwrap_or_default()).collect();
        writeln!(w, "{k},{}", cols.join(","))?;
    }
    w.flush()?;
    let slopes: Vec<Option<f64>> = entries.iter().map(|e| e["slope"].as_f64()).collect();
    let ratio = match (slopes.first().copied().flatten(), slopes.last().copied().flatten()) {
        (Some(a), Some(b)) if slopes.len() > 1 && a != 0.0 => Some(b / a),
        _ => None,
    };
    ctx.json("decay.json", json!({ "shots": shots, "seed": ctx.cfg.seed, "skip": sec.skip, "partitions": entries, "slope_ratio": ratio }))
}

pub fn pipeline(ctx: &Context) -> Result<(), CliError> {
    let sec = ctx.cfg.pipeline.as_ref().ok_or_else(|| CliError::Config(format!("{}: missing [pipeline] section", ctx.origin)))?;
    let counts = if sec.counts.is_empty() { ctx.cfg.partition.counts.clone() } else { sec.counts.clone() };
    if sec.n_rhs.is_empty() {
        return Err(ctx.at("pipeline", "n_rhs", "needs at least one value"));
    }
    let mut runs = Vec::new();
    let mut w = ctx.csv("pipeline.csv")?;
    writeln!(w, "n_rhs,makespan,avg_per_rhs,formula_avg,recursive_avg,overhead_fraction,mean_utilization")?;
    for (k, &n) in sec.n_rhs.iter().enumerate() {
        let mut spec = PipelineSpec::new(&counts, n, sec.n_iter, sec.t0).map_err(|e| ctx.at("pipeline", "n_iter", e))?;
        spec.transfer_cost = sec.transfer_cost;
        let s = simulate_pipeline(&spec);
        let mean_util = s.utilization.iter().sum::<f64>() / s.utilization.len() as f64;
        let (formula, recursive, overhead) = (average_time_diagonal(&spec), average_time_recursive(&spec), overhead_fraction(&spec));
        writeln!(w, "{n},{:.6},{:.6},{:.6},{:.6},{:.6e},{:.6}", s.makespan, s.avg_per_rhs, formula, recursive, overhead, mean_util)?;
        if k == 0 && sec.gantt {
            let mut g = ctx.csv("gantt.csv")?;
            writeln!(g, "core,rhs,round,step,start,end")?;
            for t in &s.tasks {
                writeln!(g, "{},{},{},{},{},{}", t.core, t.rhs, t.round, t.step, t.start, t.end)?;
            }
            g.flush()?;
        }
        runs.push(json!({
            "spec": spec,
            "makespan": s.makespan,
            "avg_per_rhs": s.avg_per_rhs,
            "utilization": s.utilization,
            "formula_avg": formula,
            "recursive_avg": recursive,
            "overhead_fraction": overhead,
        }));
    }
    w.flush()?;
    ctx.json("pipeline.json", json!({ "runs": runs }))
}

pub fn precond_study(ctx: &Context) -> Result<(), CliError> {
    let sec = ctx.cfg.precond.as_ref().ok_or_else(|| CliError::Config(format!("{}: missing [precond] section", ctx.origin)))?;
    if sec.rows.is_empty() {
        return Err(ctx.at("precond", "rows", "needs at least one row"));
    }
    let plan = ctx.plan()?;
    let d = &ctx.cfg.discretization;
    let dim = ctx.cfg.problem.dim;
    let mut w = ctx.csv("precond.csv")?;
    writeln!(w, "cells,subdomains,frequency,iterations,converged,final_residual,factor_seconds,solve_seconds")?;
    let mut failed = Vec::new();
    for &(cells, n, freq) in &sec.rows {
        let prep = ctx.prepared(ctx.spec(cells, &vec![n; dim], freq, d.overlap, d.pml)?)?;
        let f = ctx.source(&prep.problem)?;
        let t = Instant::now();
        let (_, rep) = prep.gmres(&f, &plan, ctx.gmres_options())?;
        let last = rep.residuals.last().copied().unwrap_or(f64::NAN);
        writeln!(w, "{cells},{n},{freq},{},{},{last:.3e},{:.3},{:.3}", rep.iterations, rep.converged, prep.factor_seconds, t.elapsed().as_secs_f64())?;
        log::info!("{cells} cells, {n} per axis, frequency {freq}: {} iterations", rep.iterations);
        if !rep.converged {
            failed.push(format!("{cells}/{n}/{freq}"));
        }
    }
    w.flush()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::NoConvergence(format!("rows {} did not reach tol {:.1e}", failed.join(", "), ctx.cfg.solver.tol)))
    }
}
