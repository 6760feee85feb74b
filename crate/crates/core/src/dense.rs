//! Dense complex kernels for frontal matrices (column-major storage).

use gemm::Parallelism;

use crate::{Error, Result, C64};

const BLOCK: usize = 48;

/// `c[0..m, 0..n] -= a[0..m, 0..k] * b[0..k, 0..n]` on raw column-major
/// blocks with column strides `lda`, `ldb`, `ldc`.
///
/// # Safety
/// The three blocks must be valid for the given shapes and `c` must not
/// overlap `a` or `b` element-wise.
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_sub(m: usize, n: usize, k: usize, c: *mut C64, ldc: usize, a: *const C64, lda: usize, b: *const C64, ldb: usize) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    gemm::gemm(
        m,
        n,
        k,
        c,
        ldc as isize,
        1,
        true,
        a,
        lda as isize,
        1,
        b,
        ldb as isize,
        1,
        C64::new(1.0, 0.0),
        C64::new(-1.0, 0.0),
        false,
        false,
        false,
        Parallelism::None,
    );
}

#[inline]
fn magnitude(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Partial LU of an `n × n` column-major matrix: eliminates the first `s`
/// columns with row pivoting restricted to rows `0..s`. On return the
/// leading `n × s` panel holds `L11\U11` over `L21`, rows `0..s` of the
/// trailing columns hold `U12`, and the trailing `(n−s) × (n−s)` block holds
/// the Schur complement. `piv[j]` is the row swapped with row `j`.
pub fn partial_lu(f: &mut [C64], n: usize, s: usize, piv: &mut [u32]) -> Result<()> {
    assert!(f.len() >= n * n && s <= n && piv.len() >= s);
    let mut scale = 0.0f64;
    for c in 0..s {
        for r in 0..s {
            scale = scale.max(magnitude(f[r + c * n]));
        }
    }
    let tiny = scale * 1e-300;
    let mut k0 = 0;
    while k0 < s {
        let k1 = (k0 + BLOCK).min(s);
        for j in k0..k1 {
            let col = j * n;
            let mut p = j;
            let mut best = magnitude(f[col + j]);
            for r in j + 1..s {
                let m = magnitude(f[col + r]);
                if m > best {
                    best = m;
                    p = r;
                }
            }
            if !(best > tiny) || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {j} of a {n}x{n} front")));
            }
            piv[j] = p as u32;
            if p != j {
                for c in 0..n {
                    f.swap(j + c * n, p + c * n);
                }
            }
            let inv = f[col + j].inv();
            for v in &mut f[col + j + 1..col + n] {
                *v *= inv;
            }
            for c in j + 1..k1 {
                let (left, right) = f.split_at_mut(c * n);
                let lj = &left[col..col + n];
                let cc = &mut right[..n];
                let u = cc[j];
                if u != C64::new(0.0, 0.0) {
                    for r in j + 1..n {
                        cc[r] -= lj[r] * u;
                    }
                }
            }
        }
        // U12 rows of this block: unit lower solve against the panel.
        for c in k1..n {
            let (left, right) = f.split_at_mut(c * n);
            let cc = &mut right[..n];
            for j in k0..k1 {
                let x = cc[j];
                if x != C64::new(0.0, 0.0) {
                    let lj = &left[j * n..j * n + n];
                    for r in j + 1..k1 {
                        cc[r] -= lj[r] * x;
                    }
                }
            }
        }
        // Trailing update of the remaining fully summed and Schur parts.
        let rest = n - k1;
        if rest > 0 {
            let base = f.as_mut_ptr();
            unsafe {
                gemm_sub(rest, rest, k1 - k0, base.add(k1 + k1 * n), n, base.add(k1 + k0 * n), n, base.add(k0 + k1 * n), n);
            }
        }
        k0 = k1;
    }
    Ok(())
}

/// Applies the row interchanges of [`partial_lu`] to a vector.
pub fn apply_pivots(x: &mut [C64], piv: &[u32]) {
    for (j, &p) in piv.iter().enumerate() {
        let p = p as usize;
        if p != j {
            x.swap(j, p);
        }
    }
}

/// Forward elimination with the `n × s` panel: unit lower `L11` over `L21`.
pub fn forward_panel(panel: &[C64], n: usize, s: usize, x: &mut [C64]) {
    for j in 0..s {
        let xj = x[j];
        if xj == C64::new(0.0, 0.0) {
            continue;
        }
        let col = &panel[j * n..j * n + n];
        for r in j + 1..n {
            x[r] -= col[r] * xj;
        }
    }
}

/// Back substitution: `x[0..s] = U11⁻¹ (x[0..s] − U12 x[s..n])`.
pub fn backward_panel(panel: &[C64], u12: &[C64], n: usize, s: usize, x: &mut [C64]) {
    let b = n - s;
    let (xs, xb) = x.split_at_mut(s);
    for c in 0..b {
        let v = xb[c];
        if v == C64::new(0.0, 0.0) {
            continue;
        }
        let col = &u12[c * s..c * s + s];
        for r in 0..s {
            xs[r] -= col[r] * v;
        }
    }
    for j in (0..s).rev() {
        let col = &panel[j * n..j * n + n];
        let xj = xs[j] / col[j];
        xs[j] = xj;
        if xj == C64::new(0.0, 0.0) {
            continue;
        }
        for r in 0..j {
            xs[r] -= col[r] * xj;
        }
    }
}
