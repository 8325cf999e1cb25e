//! One-dimensional quadrature and scalar optimization helpers.

use crate::ext::ExtReal;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 7/15 rule on `[a, b]`: returns (Kronrod estimate, error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive Gauss–Kronrod integration with recursive bisection.
pub fn integrate<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    fn rec<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
        let (v, e) = gk15(f, a, b);
        if e <= tol || depth == 0 || (b - a) <= 1e-15 * (1.0 + a.abs()) {
            return (v, e);
        }
        let m = 0.5 * (a + b);
        let (v1, e1) = rec(f, a, m, 0.5 * tol, depth - 1);
        let (v2, e2) = rec(f, m, b, 0.5 * tol, depth - 1);
        (v1 + v2, e1 + e2)
    }
    if a == b {
        return (0.0, 0.0);
    }
    rec(f, a, b, tol, 48)
}

/// Adaptive integration over consecutive breakpoints.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(f: &mut F, breaks: &[f64], tol: f64) -> (f64, f64) {
    let n = breaks.len().saturating_sub(1).max(1);
    let mut total = 0.0;
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = integrate(f, w[0], w[1], tol / n as f64);
        total += v;
        err += e;
    }
    (total, err)
}

/// Globally adaptive Gauss–Kronrod integration over consecutive breakpoints:
/// the panel with the largest error estimate is bisected until the total
/// estimate meets `max(abs_tol, rel_tol·|I|)` or `max_panels` is reached.
pub fn integrate_global<F: FnMut(f64) -> f64>(f: &mut F, breaks: &[f64], abs_tol: f64, rel_tol: f64, max_panels: usize) -> (f64, f64) {
    let mut panels: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || panels.len() >= max_panels {
            return (total, err);
        }
        let (worst, _) = panels.iter().enumerate().fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (a, b, _, _) = panels[worst];
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            return (total, err);
        }
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        panels[worst] = (a, m, v1, e1);
        panels.push((m, b, v2, e2));
    }
}

/// Composite trapezoid rule on given abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` equispaced points from `lo` to `hi` inclusive.
pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn as_obj(v: ExtReal) -> f64 {
    match v {
        ExtReal::Finite(x) if x.is_nan() => f64::NEG_INFINITY,
        ExtReal::Finite(x) => x,
        ExtReal::PosInf => f64::INFINITY,
    }
}

/// Result of a bracketed scalar maximization.
#[derive(Debug, Clone, Copy)]
pub struct Argmax {
    pub x: f64,
    pub value: f64,
    /// Index of the best grid point in the initial scan.
    pub scan_index: usize,
}

/// Maximizes a unimodal function: a scan over `grid` locates the best
/// bracket, which is then refined by golden-section search.
pub fn maximize_on_grid<F: FnMut(f64) -> ExtReal>(f: &mut F, grid: &[f64], xtol: f64) -> Argmax {
    let vals: Vec<f64> = grid.iter().map(|&x| as_obj(f(x))).collect();
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[best] {
            best = i;
        }
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (x, v) = golden_max(f, lo, hi, xtol);
    if v >= vals[best] {
        Argmax { x, value: v, scan_index: best }
    } else {
        Argmax { x: grid[best], value: vals[best], scan_index: best }
    }
}

/// Golden-section maximization on `[lo, hi]`.
pub fn golden_max<F: FnMut(f64) -> ExtReal>(f: &mut F, mut lo: f64, mut hi: f64, xtol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = as_obj(f(x1));
    let mut f2 = as_obj(f(x2));
    let mut iter = 0;
    while (hi - lo) > xtol * (1.0 + x1.abs()) && iter < 300 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = as_obj(f(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = as_obj(f(x2));
        }
        iter += 1;
    }
    let (mut bx, mut bv) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let v = as_obj(f(x));
        if v > bv {
            bx = x;
            bv = v;
        }
    }
    (bx, bv)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_is_exact_on_polynomials() {
        let (v, _) = gk15(&mut |x: f64| x.powi(10), 0.0, 1.0);
        assert!((v - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let (v, _) = integrate(&mut |x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-13);
        assert!((v - (0.045 + 0.245)).abs() < 1e-12);
    }

    #[test]
    fn golden_finds_interior_max() {
        let (x, v) = golden_max(&mut |x: f64| ExtReal::Finite(-(x - 0.7).powi(2)), 0.0, 2.0, 1e-12);
        assert!((x - 0.7).abs() < 1e-6);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn loglog_recovers_order() {
        let x = [0.1, 0.01, 0.001];
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t * t).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
    }
}
