//! Restarted right-preconditioned GMRES.
//!
//! The preconditioned directions `z_j = M v_j` are kept (flexible variant),
//! so the preconditioner may be any linear or nonlinear map. The true
//! relative residual `‖b − A x_k‖ / ‖b‖` is evaluated at every iterate.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { tol: 1e-6, restart: 30, max_iter: 200 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// True relative residual, starting with the initial guess.
    pub residuals: Vec<f64>,
    /// Cumulative wall time at each entry of `residuals`.
    pub seconds: Vec<f64>,
    /// Preconditioner time of each iteration.
    pub precond_seconds: Vec<f64>,
    /// Largest `|V^H V − I|` entry seen in any restart cycle.
    pub orthogonality_loss: f64,
}

impl SolveReport {
    /// Residual history CSV: iteration, relative residual, cumulative seconds.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,relative_residual,seconds")?;
        for (k, (r, t)) in self.residuals.iter().zip(&self.seconds).enumerate() {
            writeln!(w, "{k},{r:.6e},{t:.6}")?;
        }
        Ok(())
    }
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves `A x = b` starting from zero. `apply_a` and `apply_m` map a vector
/// to a new vector of the same length.
pub fn gmres<A, M>(mut apply_a: A, mut apply_m: M, b: &[C64], opts: GmresOptions) -> Result<(Vec<C64>, SolveReport)>
where
    A: FnMut(&[C64]) -> Result<Vec<C64>>,
    M: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    if opts.restart == 0 || !(opts.tol > 0.0) {
        return Err(Error::Config("gmres needs restart >= 1 and a positive tolerance".into()));
    }
    let n = b.len();
    let start = Instant::now();
    let bnorm = norm(b);
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut rep = SolveReport { residuals: vec![1.0], seconds: vec![0.0], ..Default::default() };
    if bnorm == 0.0 {
        rep.residuals[0] = 0.0;
        rep.converged = true;
        return Ok((x, rep));
    }
    let mut r = b.to_vec();
    let mut best = (1.0, x.clone());
    while rep.iterations < opts.max_iter {
        let beta = norm(&r);
        let m = opts.restart.min(opts.max_iter - rep.iterations);
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|c| c / beta).collect()];
        let mut z: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut h = vec![vec![C64::new(0.0, 0.0); m + 1]; m];
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let x0 = x.clone();
        let mut done = false;
        for j in 0..m {
            let t = Instant::now();
            let zj = apply_m(&v[j])?;
            rep.precond_seconds.push(t.elapsed().as_secs_f64());
            let mut w = apply_a(&zj)?;
            if zj.len() != n || w.len() != n {
                return Err(Error::Mismatch("operator returned a vector of the wrong length".into()));
            }
            z.push(zj);
            let before = norm(&w);
            for (i, vi) in v.iter().enumerate() {
                let c = dotc(vi, &w);
                h[j][i] = c;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= c * b);
            }
            let mut hn = norm(&w);
            if hn < 0.7 * before {
                for (i, vi) in v.iter().enumerate() {
                    let c = dotc(vi, &w);
                    h[j][i] += c;
                    w.iter_mut().zip(vi).for_each(|(a, b)| *a -= c * b);
                }
                hn = norm(&w);
            }
            h[j][j + 1] = C64::new(hn, 0.0);
            for i in 0..j {
                let (a, bb) = (h[j][i], h[j][i + 1]);
                h[j][i] = cs[i].conj() * a + sn[i].conj() * bb;
                h[j][i + 1] = -sn[i] * a + cs[i] * bb;
            }
            let (a, bb) = (h[j][j], h[j][j + 1]);
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if rho == 0.0 {
                return Err(Error::Singular("gmres: zero column in the Hessenberg matrix".into()));
            }
            cs[j] = a / rho;
            sn[j] = bb / rho;
            h[j][j] = C64::new(rho, 0.0);
            h[j][j + 1] = C64::new(0.0, 0.0);
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            rep.iterations += 1;

            // Current iterate and its true residual.
            let mut y = vec![C64::new(0.0, 0.0); j + 1];
            for i in (0..=j).rev() {
                let mut s = g[i];
                for k in i + 1..=j {
                    s -= h[k][i] * y[k];
                }
                y[i] = s / h[i][i];
            }
            x.copy_from_slice(&x0);
            for (yi, zi) in y.iter().zip(&z) {
                x.iter_mut().zip(zi).for_each(|(a, b)| *a += yi * b);
            }
            let ax = apply_a(&x)?;
            r.iter_mut().zip(b.iter().zip(&ax)).for_each(|(ri, (bi, ai))| *ri = bi - ai);
            let rel = norm(&r) / bnorm;
            rep.residuals.push(rel);
            rep.seconds.push(start.elapsed().as_secs_f64());
            if rel < best.0 {
                best = (rel, x.clone());
            }
            if rel <= opts.tol {
                rep.converged = true;
                done = true;
            }
            let happy = hn <= 1e-14 * beta;
            if !done && !happy {
                v.push(w.iter().map(|c| c / hn).collect());
            }
            if done || happy || rep.iterations >= opts.max_iter {
                break;
            }
        }
        let k = v.len();
        for a in 0..k {
            for bidx in 0..k {
                let e = dotc(&v[a], &v[bidx]) - if a == bidx { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                rep.orthogonality_loss = rep.orthogonality_loss.max(e.norm());
            }
        }
        if done {
            break;
        }
    }
    if !rep.converged {
        x = best.1;
    }
    Ok((x, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_converges_in_one_iteration() {
        let b: Vec<C64> = (0..10).map(|i| C64::new(i as f64, 1.0)).collect();
        let id = |v: &[C64]| Ok(v.to_vec());
        let (x, rep) = gmres(id, id, &b, GmresOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert!(x.iter().zip(&b).all(|(a, c)| (a - c).norm() < 1e-12));
    }

    fn random_system(n: usize) -> (Vec<C64>, Vec<C64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = vec![C64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                a[r * n + c] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.1;
            }
            a[r * n + r] += C64::new(3.0, 0.5);
        }
        let b = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        (a, b)
    }

    #[test]
    fn matches_dense_solution() {
        let n = 30;
        let (a, b) = random_system(n);
        let mv = |x: &[C64]| Ok((0..n).map(|r| (0..n).map(|c| a[r * n + c] * x[c]).sum()).collect());
        let (x, rep) = gmres(mv, |v: &[C64]| Ok(v.to_vec()), &b, GmresOptions { tol: 1e-13, restart: 30, max_iter: 60 }).unwrap();
        let mut f: Vec<C64> = (0..n * n).map(|k| a[(k % n) * n + k / n]).collect();
        let mut piv = vec![0u32; n];
        crate::dense::partial_lu(&mut f, n, n, &mut piv).unwrap();
        let mut xs = b.clone();
        crate::dense::apply_pivots(&mut xs, &piv);
        crate::dense::forward_panel(&f, n, n, &mut xs);
        crate::dense::backward_panel(&f, &[], n, n, &mut xs);
        let err = norm(&x.iter().zip(&xs).map(|(p, q)| p - q).collect::<Vec<_>>()) / norm(&xs);
        assert!(err <= 1e-8, "{err}");
        assert!(rep.orthogonality_loss <= 1e-8);
        assert!(rep.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn restarts_still_converge() {
        let n = 30;
        let (a, b) = random_system(n);
        let mv = |x: &[C64]| Ok((0..n).map(|r| (0..n).map(|c| a[r * n + c] * x[c]).sum()).collect());
        let (_, rep) = gmres(mv, |v: &[C64]| Ok(v.to_vec()), &b, GmresOptions { tol: 1e-10, restart: 3, max_iter: 200 }).unwrap();
        assert!(rep.converged && rep.iterations > 3);
    }

    #[test]
    fn zero_rhs() {
        let (x, rep) = gmres(|v: &[C64]| Ok(v.to_vec()), |v: &[C64]| Ok(v.to_vec()), &[C64::new(0.0, 0.0); 4], GmresOptions::default()).unwrap();
        assert!(rep.converged && x.iter().all(|c| c.norm() == 0.0));
    }
}
