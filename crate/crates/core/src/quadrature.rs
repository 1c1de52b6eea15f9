//! Adaptive one-dimensional quadrature.

const MAX_DEPTH: u32 = 60;

/// Adaptive Simpson rule with absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

// Five-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_08,
    0.236_926_885_056_189_08,
];

fn gauss5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(x, w)| w * f(c + h * x))
        .sum::<f64>()
}

/// Adaptive five-point Gauss-Legendre, used as an independent check on
/// [`adaptive_simpson`].
pub fn adaptive_gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = gauss5(&f, a, b);
    gauss_rec(&f, a, b, whole, tol, MAX_DEPTH)
}

fn gauss_rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (left, right) = (gauss5(f, a, m), gauss5(f, m, b));
    if depth == 0 || (left + right - whole).abs() <= tol {
        return left + right;
    }
    gauss_rec(f, a, m, left, 0.5 * tol, depth - 1) + gauss_rec(f, m, b, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_transcendentals() {
        let cubic = |x: f64| 3.0 * x * x * x - x + 2.0;
        // integral over [-1, 2] = 3/4 (16 - 1) - (4 - 1)/2 + 6
        let exact = 0.75 * 15.0 - 1.5 + 6.0;
        assert!((adaptive_simpson(cubic, -1.0, 2.0, 1e-12) - exact).abs() < 1e-12);
        assert!((adaptive_gauss(cubic, -1.0, 2.0, 1e-12) - exact).abs() < 1e-12);

        let s = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-10);
        assert!((s - 2.0).abs() < 1e-10);
        let g = adaptive_gauss(|x| 1.0 / x, 1.0, 10.0, 1e-12);
        assert!((g - 10f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn reversed_and_empty_intervals() {
        assert_eq!(adaptive_simpson(f64::exp, 1.0, 1.0, 1e-10), 0.0);
        let fwd = adaptive_simpson(f64::exp, 0.0, 1.0, 1e-12);
        let rev = adaptive_simpson(f64::exp, 1.0, 0.0, 1e-12);
        assert!((fwd + rev).abs() < 1e-12);
        assert!((fwd - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn square_root_endpoint() {
        // integral of sqrt(x) on [0, 1] = 2/3; derivative singular at 0.
        let s = adaptive_simpson(f64::sqrt, 0.0, 1.0, 1e-10);
        let g = adaptive_gauss(f64::sqrt, 0.0, 1.0, 1e-10);
        assert!((s - 2.0 / 3.0).abs() < 1e-9, "{s}");
        assert!((g - 2.0 / 3.0).abs() < 1e-9, "{g}");
    }
}
