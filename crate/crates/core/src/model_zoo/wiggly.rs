//! The wiggly energy `½u² + ε^α cos(u/ε)` and its periodic cell problem.

use crate::energies::{Differential, Energy};
use crate::error::{GflError, Result};
use crate::ext::{ExtReal, Finite};
use crate::linalg::SymMatrix;
use crate::mms_solver::GradientSystem;
use crate::potentials::{numeric_conjugate_fn, ConjugateOptions, DissipationPotential};
use crate::quad;
use crate::StateVec;
use nalgebra::DVector;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WigglyEnergy {
    pub eps: f64,
    pub alpha: f64,
}

impl WigglyEnergy {
    fn amp(&self) -> f64 {
        self.eps.powf(self.alpha)
    }
}

impl Energy for WigglyEnergy {
    fn name(&self) -> String {
        "wiggly".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        Finite(0.5 * u[0] * u[0] + self.amp() * (u[0] / self.eps).cos())
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        Ok(Differential::Smooth(DVector::from_element(1, u[0] - self.amp() / self.eps * (u[0] / self.eps).sin())))
    }
    fn lambda(&self) -> Option<f64> {
        Some(1.0 - self.eps.powf(self.alpha - 2.0))
    }
    fn hessian(&self, _t: f64, u: &StateVec) -> Option<SymMatrix> {
        Some(SymMatrix::Diag(vec![1.0 - self.amp() / (self.eps * self.eps) * (u[0] / self.eps).cos()]))
    }
}

/// Euclidean gradient system of the wiggly energy.
pub fn wiggly_system(eps: f64, alpha: f64) -> Result<GradientSystem> {
    if !(eps > 0.0 && alpha > 0.0) {
        return Err(GflError::InvalidParameter("wiggly needs ε > 0 and α > 0".into()));
    }
    Ok(GradientSystem::banach("wiggly", Arc::new(WigglyEnergy { eps, alpha }), DissipationPotential::quadratic_euclidean(1)).with_metric_weight(vec![1.0]))
}

/// Qualitative limit behaviour from `u⁰`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WigglyRegime {
    /// Pinned within `4πε` of the initial value.
    Stuck { radius: f64 },
    /// Tracks the limit flow `e^{−t}u⁰`.
    Tracking,
}

pub fn wiggly_regime(eps: f64, alpha: f64) -> WigglyRegime {
    if alpha <= 1.0 {
        WigglyRegime::Stuck { radius: 4.0 * PI * eps }
    } else {
        WigglyRegime::Tracking
    }
}

/// Cell problem `M(v, ξ) = inf ∫₀¹ v²/2 z'² + ½(ξ + A sin 2πz)² ds`,
/// `z(1) = z(0) + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WigglyCellProblem {
    pub amplitude: f64,
    /// Nodes of the discretized action used by [`WigglyCellProblem::brute_force`].
    pub m: usize,
}

impl WigglyCellProblem {
    pub fn new(amplitude: f64, m: usize) -> Result<Self> {
        if !(amplitude > 0.0) || m < 64 {
            return Err(GflError::InvalidParameter("cell problem needs A > 0 and m ≥ 64".into()));
        }
        Ok(WigglyCellProblem { amplitude, m })
    }

    fn g(&self, xi: f64, z: f64) -> f64 {
        xi + self.amplitude * (2.0 * PI * z).sin()
    }

    /// `max(|ξ| − A, 0)`: the smallest value of `|g|`.
    fn floor(&self, xi: f64) -> f64 {
        (xi.abs() - self.amplitude).max(0.0)
    }

    /// Where `g²` attains its minimum (wrapped into `[0, 1)`), with `k` such
    /// that `g² − min g² ≈ k² sin²(π(z − z*))` there.
    fn minima(&self, xi: f64) -> Vec<(f64, f64)> {
        let a = self.amplitude;
        let m0 = self.floor(xi);
        if m0 > 0.0 {
            let zm = if xi > 0.0 { 0.75 } else { 0.25 };
            return vec![(zm, (4.0 * a * m0).sqrt())];
        }
        let z0 = (-xi / a).clamp(-1.0, 1.0).asin() / (2.0 * PI);
        let z1 = 0.5 - z0;
        let k = 2.0 * a * (PI * (z1 - z0)).sin().abs();
        vec![(z0.rem_euclid(1.0), k), (z1.rem_euclid(1.0), k)]
    }

    /// `g² − min g²`, written through `z − z*` so that it keeps full
    /// relative precision next to the minima.
    fn excess(&self, xi: f64, z: f64) -> f64 {
        let a = self.amplitude;
        let m0 = self.floor(xi);
        let mins = self.minima(xi);
        if m0 == 0.0 {
            // ξ + A sin 2πz = ±2A sin(π(z − z₀)) sin(π(z − z₁)).
            let g = 2.0 * a * (PI * (z - mins[0].0)).sin() * (PI * (z - mins[1].0)).sin();
            return g * g;
        }
        // |g| − m0 = A(1 ± sin 2πz) = 2A sin²(π(z − z*)).
        let d = 2.0 * a * (PI * (z - mins[0].0)).sin().powi(2);
        d * (d + 2.0 * m0)
    }

    fn breaks(&self, xi: f64) -> Vec<f64> {
        let mut b = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        for (z, _) in self.minima(xi) {
            b.push(z);
        }
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        b
    }

    fn integral(&self, xi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mut f = f;
        quad::integrate_global(&mut f, &self.breaks(xi), 1e-15, 1e-13, 4000).0
    }

    /// `∫₀¹ (g² − min g² + 2δ)^{−1/2} dz`. The logarithmic peaks at the
    /// minima are removed by subtracting `(k² sin²(π(z − z*)) + 2δ)^{−1/2}`,
    /// whose integral is `1/agm(√(2δ), √(k² + 2δ))`.
    fn inverse_speed_integral(&self, xi: f64, delta: f64) -> f64 {
        let models: Vec<(f64, f64)> = self.minima(xi).into_iter().filter(|(_, k)| *k > 1e-8).collect();
        let exact: f64 = models.iter().map(|(_, k)| 1.0 / agm((2.0 * delta).sqrt(), (k * k + 2.0 * delta).sqrt())).sum();
        let rest = self.integral(xi, |z| {
            let mut f = 1.0 / (self.excess(xi, z) + 2.0 * delta).sqrt();
            for (zs, k) in &models {
                f -= 1.0 / (k * k * (PI * (z - zs)).sin().powi(2) + 2.0 * delta).sqrt();
            }
            f
        });
        rest + exact
    }

    /// `M₀(ξ) = M(0, ξ) = ½ max(|ξ| − A, 0)²`.
    pub fn m0(&self, xi: f64) -> f64 {
        0.5 * self.floor(xi).powi(2)
    }

    /// Slope `M₁(ξ) = ∫₀¹ (g² − 2M₀)^{1/2} dz` of `M` at `v = 0`.
    pub fn m1(&self, xi: f64) -> f64 {
        self.integral(xi, |z| self.excess(xi, z).sqrt())
    }

    /// `M(v, ξ)` via the conserved quantity of the Euler–Lagrange equation:
    /// with `δ = μ + M₀` chosen so that `|v| ∫ (g² + 2μ)^{−1/2} = 1`,
    /// `M = |v| ∫ (g² + 2μ)^{1/2} − μ`.
    pub fn m(&self, v: f64, xi: f64) -> Result<f64> {
        let v = v.abs();
        if !v.is_finite() || !xi.is_finite() {
            return Err(GflError::CellSolveFailed("non-finite argument".into()));
        }
        let m0 = self.m0(xi);
        if v == 0.0 {
            return Ok(m0);
        }
        let value = |delta: f64| v * self.integral(xi, |z| (self.excess(xi, z) + 2.0 * delta).sqrt()) + m0 - delta;
        let traverse = |log_delta: f64| v * self.inverse_speed_integral(xi, log_delta.exp()) - 1.0;
        let (mut lo, mut hi) = (-690.0f64, 0.0f64);
        while traverse(hi) > 0.0 {
            hi += 2.0;
            if hi > 700.0 {
                return Err(GflError::CellSolveFailed("no upper bracket for the multiplier".into()));
            }
        }
        if traverse(lo) <= 0.0 {
            // δ is below the smallest normal scale; its contribution vanishes.
            return Ok(value(0.0));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if traverse(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        Ok(value((0.5 * (lo + hi)).exp()))
    }

    /// Discretized action minimized by damped Newton on a uniform grid in `s`,
    /// refined so that the transits between wells (duration `~ 1/(2πA)` in
    /// real time) span many nodes. Several shifted starts guard against
    /// spurious local minima.
    pub fn brute_force(&self, v: f64, xi: f64) -> Result<f64> {
        if v == 0.0 {
            return Ok(self.m0(xi));
        }
        let a = self.amplitude;
        let scale = 2.0 * PI * (a + xi.abs());
        let m = self.m.max(((32.0 * scale / v.abs()).ceil() as usize).min(1 << 20));
        let ds = 1.0 / m as f64;
        let w = v * v / ds;
        let action = |z: &[f64]| -> f64 {
            let mut s = 0.0;
            for k in 0..m {
                let next = if k + 1 == m { z[0] + 1.0 } else { z[k + 1] };
                s += 0.5 * w * (next - z[k]).powi(2) + 0.5 * ds * self.g(xi, z[k]).powi(2);
            }
            s
        };
        let mut best = f64::INFINITY;
        for start in 0..8 {
            let z0 = start as f64 / 8.0;
            let mut z: Vec<f64> = (0..m).map(|k| z0 + k as f64 * ds).collect();
            let mut val = action(&z);
            let mut lm = 1e-8 * w.max(ds);
            let mut done = false;
            let mut grad = vec![0.0; m];
            let mut diag = vec![0.0; m];
            for _ in 0..500 {
                for k in 0..m {
                    let g = self.g(xi, z[k]);
                    let gp = 2.0 * PI * a * (2.0 * PI * z[k]).cos();
                    let gpp = -4.0 * PI * PI * a * (2.0 * PI * z[k]).sin();
                    let next = if k + 1 == m { z[0] + 1.0 } else { z[k + 1] };
                    let prev = if k == 0 { z[m - 1] - 1.0 } else { z[k - 1] };
                    grad[k] = ds * g * gp + w * (2.0 * z[k] - next - prev);
                    diag[k] = ds * (gp * gp + g * gpp) + 2.0 * w;
                }
                let gnorm = grad.iter().fold(0.0f64, |x, y| x.max(y.abs()));
                let decrement = cyclic_tridiag_solve(&diag, -w, 0.0, &grad)
                    .map(|p| grad.iter().zip(&p).map(|(g, p)| g * p).sum::<f64>());
                if gnorm <= 1e-14 || decrement.is_some_and(|d| d >= 0.0 && d <= 1e-14 * val.abs()) {
                    done = true;
                    break;
                }
                let mut stepped = false;
                while lm < 1e12 * w.max(1.0) {
                    if let Some(p) = cyclic_tridiag_solve(&diag, -w, lm, &grad) {
                        let trial: Vec<f64> = z.iter().zip(&p).map(|(z, p)| z - p).collect();
                        let tv = action(&trial);
                        if tv <= val {
                            z = trial;
                            val = tv;
                            lm = (lm * 0.1).max(1e-14 * w.max(ds));
                            stepped = true;
                            break;
                        }
                    }
                    lm *= 10.0;
                }
                if !stepped {
                    done = decrement.is_some_and(|d| d.abs() <= 1e-10 * val.abs());
                    break;
                }
            }
            if done {
                best = best.min(val);
            }
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(GflError::CellSolveFailed(format!("no start converged at v = {v}, ξ = {xi}")))
        }
    }

    /// `R̄_eff(u, v) = M(v, φ'(u)) − M(0, φ'(u))`.
    pub fn effective_potential(&self, u: f64, v: f64, dphi: &dyn Fn(f64) -> f64) -> Result<f64> {
        let xi = dphi(u);
        Ok(self.m(v, xi)? - self.m0(xi))
    }

    /// `M(v, ξ) − R̄(v) − R̄*(−ξ)` with the conjugate computed numerically.
    pub fn representation_residual(&self, v: f64, xi: f64) -> Result<f64> {
        let m0 = self.m0(xi);
        let opts = ConjugateOptions { r_max: 20.0, ceiling: 1e12, scan_points: 121, xtol: 1e-12 };
        let r_star = numeric_conjugate_fn(|r| self.m(r, xi).map(|x| Finite(x - m0)), xi.abs(), &opts)?.value();
        let m = self.m(v, xi)?;
        let r_bar = m - m0;
        Ok(m - r_bar - r_star)
    }
}

/// Arithmetic–geometric mean.
fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a.max(b) {
            break;
        }
        let (x, y) = (0.5 * (a + b), (a * b).sqrt());
        a = x;
        b = y;
    }
    0.5 * (a + b)
}

/// Solves `(T + μI) x = b` for the periodic tridiagonal `T` with diagonal
/// `diag` and constant off-diagonal `off` (including the corner entries).
/// Returns `None` when a pivot is not positive.
fn cyclic_tridiag_solve(diag: &[f64], off: f64, mu: f64, b: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let gamma = -(diag[0] + mu);
    let mut d: Vec<f64> = diag.iter().map(|x| x + mu).collect();
    d[0] -= gamma;
    d[n - 1] -= off * off / gamma;
    let thomas = |rhs: &[f64]| -> Option<Vec<f64>> {
        let mut c = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut piv = d[0];
        if !(piv > 0.0) {
            return None;
        }
        c[0] = off / piv;
        y[0] = rhs[0] / piv;
        for i in 1..n {
            piv = d[i] - off * c[i - 1];
            if !(piv > 0.0) {
                return None;
            }
            c[i] = off / piv;
            y[i] = (rhs[i] - off * y[i - 1]) / piv;
        }
        for i in (0..n - 1).rev() {
            y[i] -= c[i] * y[i + 1];
        }
        Some(y)
    };
    let y = thomas(b)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = off;
    let q = thomas(&u)?;
    let fac = (y[0] + off / gamma * y[n - 1]) / (1.0 + q[0] + off / gamma * q[n - 1]);
    let x: Vec<f64> = y.iter().zip(&q).map(|(y, q)| y - fac * q).collect();
    x.iter().all(|x| x.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_constants() {
        let f = WigglyEnergy { eps: 0.01, alpha: 0.5 };
        assert!((f.lambda().unwrap() - (1.0 - 1000.0)).abs() < 1e-9);
        assert!(crate::energies::fd_consistency(&f, 0.0, &DVector::from_element(1, 0.3), 1e-7).unwrap() < 1e-6);
        assert_eq!(wiggly_regime(0.01, 0.5), WigglyRegime::Stuck { radius: 4.0 * PI * 0.01 });
    }

    #[test]
    fn cell_lower_bound_and_symmetry() {
        let cp = WigglyCellProblem::new(1.0, 256).unwrap();
        for &(v, xi) in &[(0.3, 0.0), (1.0, 1.2), (2.0, -0.7), (0.05, 2.5)] {
            let m = cp.m(v, xi).unwrap();
            assert!(m - xi * v >= -1e-9);
            assert!((cp.m(-v, xi).unwrap() - m).abs() < 1e-9);
            assert!((cp.m(v, -xi).unwrap() - m).abs() < 1e-8);
        }
    }

    #[test]
    fn dual_form_matches_discretized_action() {
        let cp = WigglyCellProblem::new(1.0, 256).unwrap();
        for &(v, xi) in &[(1.0, 0.0), (0.5, 0.4), (1.5, 1.5)] {
            let a = cp.m(v, xi).unwrap();
            let b = cp.brute_force(v, xi).unwrap();
            assert!((a - b).abs() < 1e-3 * (1.0 + a), "v={v} ξ={xi}: {a} vs {b}");
        }
    }

    #[test]
    fn slope_at_zero() {
        let cp = WigglyCellProblem::new(1.0, 256).unwrap();
        assert!((cp.m1(0.0) - 2.0 / PI).abs() < 1e-12);
        let v = 1e-3;
        let s = |v: f64| (cp.m(v, 0.0).unwrap() - cp.m0(0.0)) / v;
        assert!((s(v) - 2.0 / PI).abs() < 0.01 * 2.0 / PI);
        for xi in [0.5, 2.0] {
            let s = (cp.m(v, xi).unwrap() - cp.m0(xi)) / v;
            assert!((s - cp.m1(xi)).abs() < 0.01 * cp.m1(xi), "ξ={xi}");
        }
    }

    #[test]
    fn optimal_velocity() {
        let cp = WigglyCellProblem::new(1.0, 256).unwrap();
        let xi = 2f64.sqrt();
        let (v, val) = quad::golden_max(&mut |v| Finite(-(cp.m(v, xi).unwrap() - xi * v)), 0.3, 3.0, 1e-10);
        assert!((-val).abs() < 1e-3 && (v - 1.0).abs() < 1e-3, "v={v} val={val}");
    }

    #[test]
    fn effective_potential_representation() {
        let cp = WigglyCellProblem::new(1.0, 256).unwrap();
        let dphi = |u: f64| u;
        assert_eq!(cp.effective_potential(1.5, 0.0, &dphi).unwrap(), 0.0);
        let r = cp.effective_potential(1.5, 0.7, &dphi).unwrap();
        assert!((r - cp.effective_potential(1.5, -0.7, &dphi).unwrap()).abs() < 1e-9);
        assert!(cp.representation_residual(0.7, 1.5).unwrap().abs() < 1e-4);
    }
}
