//! Bracketing root finder used for hedge strikes.

use crate::error::{Error, Result};

/// All roots of `f` on `(lo, hi]` found by sign changes on a uniform grid of
/// `grid` intervals, each refined by bisection to width `tol`.
///
/// Grid points where `f` is exactly zero are reported as roots. Roots closer
/// together than one grid cell can be missed.
pub fn bracket_roots(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    grid: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    assert!(grid > 0 && hi > lo && tol > 0.0);
    let step = (hi - lo) / grid as f64;
    let mut roots = Vec::new();
    let mut a = lo;
    let mut fa = f(a);
    if fa == 0.0 {
        roots.push(a);
    }
    for i in 1..=grid {
        let b = if i == grid { hi } else { lo + step * i as f64 };
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            roots.push(bisect(&f, a, b, fa, tol));
        }
        a = b;
        fa = fb;
    }
    if roots.is_empty() {
        return Err(Error::NoRoot { lo, hi });
    }
    Ok(roots)
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
