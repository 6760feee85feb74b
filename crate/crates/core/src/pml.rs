//! Uniaxial PML stretching and the discrete stretched Helmholtz operator.
//!
//! Along each axis the stretching factor is `α_j = 1 + iσ_j`, where `σ_j`
//! vanishes inside the stretch box and follows a shifted polynomial profile
//! outside it. With `A = diag(Π_{k≠j} α_k / α_j)` and `J = Π α_j` the
//! operator is
//!
//! ```text
//! L u = J⁻¹ ∇·(A ∇u) + κ² u
//! ```
//!
//! and is discretised in flux form with `A` sampled at face midpoints. The
//! symmetric matrix `S = J·L` is what gets factorized. Nodes outside the
//! operator window are treated as homogeneous Dirichlet values.

use std::hash::{Hash, Hasher};

use rayon::prelude::*;

use crate::grid::{Grid, IndexBox};
use crate::{Error, Result, C64};

/// Strength constant `σ_max · κ · L_pml` used by [`PmlProfile::tuned`].
pub const DEFAULT_STRENGTH: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmlProfile {
    /// Grid points in the absorbing layer.
    pub width_points: usize,
    /// Shift `d` in grid points: the profile is zero for the first `d` points.
    pub overlap_points: usize,
    /// Dimensionless profile amplitude.
    pub sigma_max: f64,
    pub exponent: i32,
}

impl PmlProfile {
    pub fn new(width_points: usize, overlap_points: usize, sigma_max: f64, exponent: i32) -> Result<PmlProfile> {
        if width_points < 1 || overlap_points < 1 {
            return Err(Error::Config(format!(
                "pml width ({width_points}) and overlap ({overlap_points}) must be at least one point"
            )));
        }
        if !(sigma_max >= 0.0 && sigma_max.is_finite()) {
            return Err(Error::Config(format!("sigma_max must be nonnegative, got {sigma_max}")));
        }
        if exponent < 1 {
            return Err(Error::Config(format!("pml exponent must be >= 1, got {exponent}")));
        }
        Ok(PmlProfile { width_points, overlap_points, sigma_max, exponent })
    }

    /// Quadratic profile with `σ_max = DEFAULT_STRENGTH / (κ · L_pml)`.
    pub fn tuned(width_points: usize, overlap_points: usize, kappa: f64, h: f64) -> Result<PmlProfile> {
        let l = width_points as f64 * h;
        PmlProfile::new(width_points, overlap_points, DEFAULT_STRENGTH / (kappa * l), 2)
    }

    /// Profile value for a distance measured in grid cells past the box face.
    pub fn sigma_cells(&self, s: f64) -> f64 {
        let d = self.overlap_points as f64;
        if s <= d + 1e-9 {
            return 0.0;
        }
        let r = ((s - d) / self.width_points as f64).min(1.0);
        self.sigma_max * r.powi(self.exponent)
    }

    /// Shifted profile for a physical distance `t` past the box face.
    pub fn sigma_hat(&self, t: f64, h: f64) -> f64 {
        self.sigma_cells(t / h)
    }

    /// Stretching factor at coordinate `x` for the box face interval `[a, b]`.
    pub fn alpha(&self, x: f64, a: f64, b: f64, h: f64) -> C64 {
        let t = if x >= b {
            x - b
        } else if x <= a {
            a - x
        } else {
            0.0
        };
        C64::new(1.0, self.sigma_hat(t, h))
    }

    /// Stretching factor at grid position `g` (possibly a half-integer face
    /// position) along an axis whose box spans nodes `lo..=hi`.
    fn alpha_at(&self, g: f64, lo: usize, hi: usize) -> C64 {
        let s = if g < lo as f64 {
            lo as f64 - g
        } else if g > hi as f64 {
            g - hi as f64
        } else {
            0.0
        };
        C64::new(1.0, self.sigma_cells(s))
    }
}

/// Discrete `L = J⁻¹∇·(A∇) + κ²` on a window of the global grid.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: Grid,
    window: IndexBox,
    stretch: IndexBox,
    /// Diagonal of `S = J·L`.
    diag: Vec<C64>,
    /// `off[a][p]` couples local node `p` with `p + e_a` in `S`.
    off: [Vec<C64>; 3],
    jac: Vec<C64>,
    inv_jac: Vec<C64>,
}

/// Assembles the operator on `window` with the PML attached to the faces of
/// `stretch`. `kappa` holds the wavenumber on every node of the global grid.
pub fn assemble_operator(
    grid: &Grid,
    window: IndexBox,
    stretch: IndexBox,
    profile: &PmlProfile,
    kappa: &[f64],
) -> Result<DiscreteOperator> {
    if kappa.len() != grid.len() {
        return Err(Error::Mismatch(format!("wavenumber field has {} values, grid {}", kappa.len(), grid.len())));
    }
    if window.is_empty() || !grid.full_box().contains_box(&window) {
        return Err(Error::Mismatch(format!("window {window:?} does not fit the grid")));
    }
    let dim = grid.dim();
    let n = window.len();
    let h2: Vec<f64> = (0..3).map(|a| grid.h(a) * grid.h(a)).collect();
    let alpha = |a: usize, g: f64| profile.alpha_at(g, stretch.lo[a], stretch.hi[a]);

    let mut diag = vec![C64::new(0.0, 0.0); n];
    let mut off: [Vec<C64>; 3] = Default::default();
    for v in off.iter_mut().take(dim) {
        *v = vec![C64::new(0.0, 0.0); n];
    }
    let mut jac = vec![C64::new(0.0, 0.0); n];

    // Face coefficient A_aa / h_a² between p and p + e_a.
    let face = |a: usize, p: [usize; 3]| -> C64 {
        let mut num = C64::new(1.0, 0.0);
        for b in 0..dim {
            if b != a {
                num *= alpha(b, p[b] as f64);
            }
        }
        num / alpha(a, p[a] as f64 + 0.5) / h2[a]
    };

    for (i, p) in window.nodes().enumerate() {
        let mut j = C64::new(1.0, 0.0);
        for a in 0..dim {
            j *= alpha(a, p[a] as f64);
        }
        jac[i] = j;
        let mut d = C64::new(0.0, 0.0);
        for a in 0..dim {
            let cp = face(a, p);
            let mut q = p;
            // Face p − ½ e_a, evaluated through the coefficient of node p − e_a.
            let cm = if p[a] > 0 {
                q[a] -= 1;
                face(a, q)
            } else {
                // Lower grid edge: the face sits at position −½.
                let mut num = C64::new(1.0, 0.0);
                for b in 0..dim {
                    if b != a {
                        num *= alpha(b, p[b] as f64);
                    }
                }
                num / alpha(a, -0.5) / h2[a]
            };
            d -= cp + cm;
            if p[a] < window.hi[a] {
                off[a][i] = cp;
            }
        }
        let k = kappa[grid.index(p)];
        diag[i] = d + j * k * k;
    }
    let inv_jac = jac.iter().map(|j| j.inv()).collect();
    Ok(DiscreteOperator { grid: *grid, window, stretch, diag, off, jac, inv_jac })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn window(&self) -> &IndexBox {
        &self.window
    }
    pub fn stretch_box(&self) -> &IndexBox {
        &self.stretch
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn len(&self) -> usize {
        self.diag.len()
    }
    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
    /// Diagonal entry of `S` at local node `i`.
    pub fn s_diag(&self, i: usize) -> C64 {
        self.diag[i]
    }
    /// Entry of `S` between local node `i` and `i + e_axis`.
    pub fn s_off(&self, axis: usize, i: usize) -> C64 {
        self.off[axis][i]
    }
    pub fn jacobian(&self, i: usize) -> C64 {
        self.jac[i]
    }

    /// Local stencil of `L` at a window node: `(diagonal, [(neighbour, coefficient)])`
    /// with neighbours given as global node indices inside the window.
    pub fn stencil(&self, p: [usize; 3]) -> (C64, Vec<([usize; 3], C64)>) {
        let w = &self.window;
        let i = w.local_index(p);
        let dims = w.dims();
        let inv = self.inv_jac[i];
        let mut nb = Vec::new();
        for a in 0..self.dim() {
            let stride = stride(&dims, a);
            if p[a] > w.lo[a] {
                let mut q = p;
                q[a] -= 1;
                nb.push((q, self.off[a][i - stride] * inv));
            }
            if p[a] < w.hi[a] {
                let mut q = p;
                q[a] += 1;
                nb.push((q, self.off[a][i] * inv));
            }
        }
        (self.diag[i] * inv, nb)
    }

    fn s_row(&self, i: usize, v: &[C64], dims: &[usize; 3]) -> C64 {
        let w = &self.window;
        let p = w.local_node(i);
        let mut acc = self.diag[i] * v[i];
        for a in 0..self.dim() {
            let s = stride(dims, a);
            if p[a] > w.lo[a] {
                acc += self.off[a][i - s] * v[i - s];
            }
            if p[a] < w.hi[a] {
                acc += self.off[a][i] * v[i + s];
            }
        }
        acc
    }

    /// `out = S v` on window-local arrays.
    pub fn apply_s(&self, v: &[C64], out: &mut [C64]) -> Result<()> {
        self.check_len(v.len())?;
        self.check_len(out.len())?;
        let dims = self.window.dims();
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = self.s_row(i, v, &dims));
        Ok(())
    }

    /// `out = L v` on window-local arrays.
    pub fn apply(&self, v: &[C64], out: &mut [C64]) -> Result<()> {
        self.check_len(v.len())?;
        self.check_len(out.len())?;
        let dims = self.window.dims();
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = self.s_row(i, v, &dims) * self.inv_jac[i]);
        Ok(())
    }

    /// `(L v)(p)` at a global node `p` of the window, with `v` given as a
    /// function of global nodes. Values outside the window are never read.
    pub fn apply_at(&self, p: [usize; 3], v: &impl Fn([usize; 3]) -> C64) -> C64 {
        let w = &self.window;
        let i = w.local_index(p);
        let dims = w.dims();
        let mut acc = self.diag[i] * v(p);
        for a in 0..self.dim() {
            let s = stride(&dims, a);
            if p[a] > w.lo[a] {
                let mut q = p;
                q[a] -= 1;
                acc += self.off[a][i - s] * v(q);
            }
            if p[a] < w.hi[a] {
                let mut q = p;
                q[a] += 1;
                acc += self.off[a][i] * v(q);
            }
        }
        acc * self.inv_jac[i]
    }

    /// Multiplies a right-hand side of `L u = f` by `J` so that `S u = J f`.
    pub fn scale_rhs(&self, f: &mut [C64]) {
        for (x, j) in f.iter_mut().zip(&self.jac) {
            *x *= j;
        }
    }

    /// Hash of the window shape and every coefficient bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.window.dims().hash(&mut h);
        self.dim().hash(&mut h);
        for v in self.diag.iter().chain(self.off.iter().flatten()).chain(self.jac.iter()) {
            v.re.to_bits().hash(&mut h);
            v.im.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// True when both operators have identical shapes and coefficients.
    pub fn same_coefficients(&self, other: &DiscreteOperator) -> bool {
        self.window.dims() == other.window.dims()
            && self.dim() == other.dim()
            && bits_eq(&self.diag, &other.diag)
            && (0..3).all(|a| bits_eq(&self.off[a], &other.off[a]))
            && bits_eq(&self.jac, &other.jac)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::Mismatch(format!("vector of length {n} for an operator window of {}", self.len())));
        }
        Ok(())
    }
}

fn bits_eq(a: &[C64], b: &[C64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
}

pub(crate) fn stride(dims: &[usize; 3], axis: usize) -> usize {
    match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    }
}
