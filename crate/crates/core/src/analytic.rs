//! Free-space solutions of `Δu + κ²u = f` for the normalised Gaussian source.
//!
//! For a radial source the convolution with the outgoing Green's function
//! reduces to one-dimensional integrals. In 2D, with `G = −(i/4) H₀⁽¹⁾(κr)`,
//!
//! ```text
//! u(r) = −(iπ/2) [ H₀(κr) ∫₀ʳ J₀(κs) f(s) s ds + J₀(κr) ∫ᵣ^∞ H₀(κs) f(s) s ds ]
//! ```
//!
//! and in 3D, with `G = −e^{iκr}/(4πr)`,
//!
//! ```text
//! u(r) = −1/(κr) [ e^{iκr} ∫₀ʳ sin(κs) f(s) s ds + sin(κr) ∫ᵣ^∞ e^{iκs} f(s) s ds ]
//! ```

use crate::grid::{ComplexField, Grid};
use crate::media::gaussian_peak;
use crate::C64;

// 8-point Gauss–Legendre rule on [−1, 1].
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];
const PANELS: usize = 24;
/// Radius, in Gaussian widths, beyond which the source is treated as zero.
const CUTOFF_WIDTHS: f64 = 7.0;

fn integrate(a: f64, b: f64, f: impl Fn(f64) -> C64) -> C64 {
    if b <= a {
        return C64::new(0.0, 0.0);
    }
    let w = (b - a) / PANELS as f64;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..PANELS {
        let c = a + (k as f64 + 0.5) * w;
        for (x, wt) in GL_X.iter().zip(&GL_W) {
            acc += f(c + 0.5 * w * x) * (0.5 * w * wt);
        }
    }
    acc
}

fn hankel0(x: f64) -> C64 {
    C64::new(libm::j0(x), libm::y0(x))
}

/// `exp(−π²/64)`: Fourier transform of the normalised Gaussian at `|ξ| = κ`.
pub fn gaussian_transform_at_kappa() -> f64 {
    (-std::f64::consts::PI.powi(2) / 64.0).exp()
}

/// Radial profile of the free-space solution for the Gaussian source of
/// wavenumber `kappa`, at distance `r` from its centre.
pub fn gaussian_response(dim: usize, kappa: f64, r: f64) -> C64 {
    let pi = std::f64::consts::PI;
    let a2 = (4.0 * kappa / pi).powi(2);
    let width = 1.0 / a2.sqrt();
    let rmax = CUTOFF_WIDTHS * width;
    let peak = gaussian_peak(dim, kappa);
    let f = |s: f64| peak * (-a2 * s * s).exp();
    let i = C64::new(0.0, 1.0);
    let rc = r.min(rmax);
    if dim == 2 {
        let inner = if r >= rmax {
            C64::new(gaussian_transform_at_kappa() / (2.0 * pi), 0.0)
        } else {
            integrate(0.0, rc, |s| C64::new(libm::j0(kappa * s) * f(s) * s, 0.0))
        };
        let outer = integrate(rc, rmax, |s| hankel0(kappa * s) * f(s) * s);
        let first = if r > 0.0 { hankel0(kappa * r) * inner } else { C64::new(0.0, 0.0) };
        -i * (pi / 2.0) * (first + libm::j0(kappa * r) * outer)
    } else {
        let inner = if r >= rmax {
            C64::new(gaussian_transform_at_kappa() * kappa / (4.0 * pi), 0.0)
        } else {
            integrate(0.0, rc, |s| C64::new((kappa * s).sin() * f(s) * s, 0.0))
        };
        let outer = integrate(rc, rmax, |s| C64::from_polar(f(s) * s, kappa * s));
        if r == 0.0 {
            // Limit r → 0: sin(κr)/(κr) → 1 and the first term vanishes.
            return -integrate(0.0, rmax, |s| C64::from_polar(f(s) * s, kappa * s));
        }
        -(C64::from_polar(1.0, kappa * r) * inner + (kappa * r).sin() * outer) / (kappa * r)
    }
}

/// Samples the free-space Gaussian response on every node of `grid`.
pub fn gaussian_reference(grid: &Grid, center: &[f64], kappa: f64) -> ComplexField {
    use rayon::prelude::*;
    let dim = grid.dim();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(grid.node(i));
            let r = (0..dim).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>().sqrt();
            gaussian_response(dim, kappa, r)
        })
        .collect();
    ComplexField::from_values(*grid, values).expect("length matches grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    // Far from the source the response is the Green's function times the
    // transform of the source at κ.
    #[test]
    fn far_field_matches_green_function() {
        let kappa = 2.0 * std::f64::consts::PI * 10.0;
        let r = 0.3;
        let t = gaussian_transform_at_kappa();
        let g2 = -C64::new(0.0, 0.25) * hankel0(kappa * r) * t;
        assert!((gaussian_response(2, kappa, r) - g2).norm() < 1e-10 * g2.norm());
        let g3 = -C64::from_polar(1.0, kappa * r) / (4.0 * std::f64::consts::PI * r) * t;
        assert!((gaussian_response(3, kappa, r) - g3).norm() < 1e-10 * g3.norm());
    }

    #[test]
    fn continuous_across_cutoff_and_at_origin() {
        let pi = std::f64::consts::PI;
        for dim in [2, 3] {
            let kappa = 2.0 * pi * 25.0;
            let rmax = CUTOFF_WIDTHS * pi / (4.0 * kappa);
            let a = gaussian_response(dim, kappa, rmax * (1.0 - 1e-9));
            let b = gaussian_response(dim, kappa, rmax * (1.0 + 1e-9));
            assert!((a - b).norm() < 1e-6 * a.norm());
            let z = gaussian_response(dim, kappa, 0.0);
            let e = gaussian_response(dim, kappa, 1e-7);
            assert!(z.is_finite() && (z - e).norm() < 1e-3 * z.norm(), "{dim} {z} {e}");
        }
    }

    // Radial Helmholtz residual by finite differences inside the source.
    #[test]
    fn satisfies_the_equation() {
        let pi = std::f64::consts::PI;
        let kappa = 2.0 * pi * 5.0;
        let a2 = (4.0 * kappa / pi).powi(2);
        for dim in [2, 3] {
            let r = 0.4 / a2.sqrt();
            let h = 1e-4 / a2.sqrt();
            let u = |s: f64| gaussian_response(dim, kappa, s);
            let d2 = (u(r + h) - 2.0 * u(r) + u(r - h)) / (h * h);
            let d1 = (u(r + h) - u(r - h)) / (2.0 * h);
            let lap = d2 + d1 * ((dim - 1) as f64 / r);
            let f = gaussian_peak(dim, kappa) * (-a2 * r * r).exp();
            let res = lap + u(r) * kappa * kappa - f;
            assert!(res.norm() < 1e-4 * f, "{dim}: {res}");
        }
    }
}
