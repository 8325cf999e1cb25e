//! Certificates along trajectories: energy-dissipation balance, discrete
//! EDI, chain rule, Young and modulus bounds, curves of maximal slope and
//! De Giorgi's identity.

use crate::error::{GflError, Result};
use crate::ext::{ExtReal, Finite, PosInf};
use crate::mms_solver::{de_giorgi_interpolant, probe_radius, step_defect, Dissipation, GradientSystem, InterpolantKind, MmsOptions, Trajectory};
use crate::potentials::{eval_conjugate, ConjugatePair, DissipationPotential, ScalarPotential};
use crate::quad;
use crate::StateVec;
use serde::Serialize;

/// Energy-dissipation balance on `[s, t]`.
#[derive(Debug, Clone, Serialize)]
pub struct EdbReport {
    pub s: f64,
    pub t: f64,
    pub energy_drop: f64,
    pub rate_integral: f64,
    pub slope_integral: f64,
    pub work_integral: f64,
    /// `energy_drop + work_integral − rate_integral − slope_integral`.
    pub residual: f64,
    pub quad_nodes: usize,
    pub rule: String,
    pub quadrature_error: f64,
    /// Admissible negative residual: solver floor, λ-defect of the discrete
    /// scheme and quadrature error.
    pub lower_tolerance: f64,
}

impl EdbReport {
    /// EDI direction: `residual ≥ −lower_tolerance`.
    pub fn edi_holds(&self) -> bool {
        self.residual >= -self.lower_tolerance
    }
}

fn node_index(traj: &Trajectory, t: f64) -> Option<usize> {
    let tol = 1e-12 * (1.0 + t.abs());
    traj.times.iter().position(|&x| (x - t).abs() <= tol)
}

fn energy_at(sys: &GradientSystem, t: f64, u: &StateVec) -> Result<f64> {
    sys.energy.eval(t, u).finite().filter(|x| x.is_finite()).ok_or(GflError::OutsideDomain)
}

/// Force on the interpolated path: DF if smooth, else the registered selector.
fn path_force(sys: &GradientSystem, t: f64, u: &StateVec) -> Result<StateVec> {
    match sys.energy.differential(t, u)?.smooth() {
        Some(g) => Ok(g),
        None => sys.energy.selector(t, u).ok_or(GflError::MissingForces),
    }
}

fn integrate_power(sys: &GradientSystem, u: &StateVec, a: f64, b: f64) -> Result<f64> {
    if sys.energy.is_autonomous() {
        return Ok(0.0);
    }
    let mut err = None;
    let (v, _) = quad::integrate(
        &mut |r| match sys.energy.power(r, u) {
            Ok(p) => p,
            Err(e) => {
                err = Some(e);
                0.0
            }
        },
        a,
        b,
        1e-13 * (b - a),
    );
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

fn dual_rate_scalar(sys: &GradientSystem, frozen: &StateVec, u: &StateVec, t: f64, xi: &StateVec) -> Result<ExtReal> {
    match &sys.dissipation {
        Dissipation::Banach(_) => sys.dual_rate(frozen, &(-xi)),
        Dissipation::Metric { psi, .. } => {
            let s = sys.slope_at(t, u, frozen).ok_or(GflError::SlopeUnavailable)?;
            eval_conjugate(&ConjugatePair::new(psi.clone()), s)
        }
    }
}

fn increment_rate(sys: &GradientSystem, frozen: &StateVec, u_prev: &StateVec, u_next: &StateVec, dt: f64) -> Result<ExtReal> {
    match &sys.dissipation {
        Dissipation::Banach(r) => r.eval(frozen, &((u_next - u_prev) / dt)),
        Dissipation::Metric { dist, psi } => psi.eval(dist.dist(u_prev, u_next).value() / dt),
    }
}

/// Σ‖u_k − u_{k−1}‖² over the steps inside `[i0, i1]`, in the fixed norm.
fn squared_increments(sys: &GradientSystem, traj: &Trajectory, i0: usize, i1: usize) -> f64 {
    let nrm = sys.fixed_norm();
    (i0 + 1..=i1).map(|k| nrm.norm(&(&traj.states[k] - &traj.states[k - 1])).powi(2)).sum()
}

/// Energy-dissipation balance in R⊕R* form on `[s, t]`.
///
/// When `[s, t]` is spanned by trajectory nodes and forces are recorded, the
/// step-wise form with ξ̄ piecewise constant and R frozen at u_{k−1} is
/// used. Otherwise the balance is integrated on the affine interpolant with
/// `quad_nodes` trapezoid nodes, using DF (or the registered selector).
pub fn edb_report(sys: &GradientSystem, traj: &Trajectory, s: f64, t: f64, quad_nodes: usize) -> Result<EdbReport> {
    if !(s < t) {
        return Err(GflError::InvalidParameter(format!("empty interval [{s}, {t}]")));
    }
    traj.segment(s)?;
    traj.segment(t)?;
    let u_s = traj.interpolate(InterpolantKind::Affine, s)?;
    let u_t = traj.interpolate(InterpolantKind::Affine, t)?;
    let f_s = energy_at(sys, s, &u_s)?;
    let f_t = energy_at(sys, t, &u_t)?;
    let drop = f_s - f_t;
    let lambda_defect = |i0: usize, i1: usize| match sys.lambda() {
        Some(l) if l < 0.0 => -0.5 * l * squared_increments(sys, traj, i0, i1),
        _ => 0.0,
    };
    let floor = 1e-8 * (1.0 + f_s.abs());

    if let (Some(i0), Some(i1)) = (node_index(traj, s), node_index(traj, t)) {
        if (i0 + 1..=i1).all(|k| traj.forces[k].is_some()) && !traj.records.is_empty() {
            let (mut rate, mut slope, mut work) = (0.0, 0.0, 0.0);
            for k in i0 + 1..=i1 {
                let (a, b) = (traj.times[k - 1], traj.times[k]);
                let dt = b - a;
                let prev = &traj.states[k - 1];
                let xi = traj.forces[k].as_ref().unwrap();
                rate += dt * increment_rate(sys, prev, prev, &traj.states[k], dt)?.value();
                slope += dt * dual_rate_scalar(sys, prev, &traj.states[k], b, xi)?.value();
                work += integrate_power(sys, prev, a, b)?;
            }
            let residual = drop + work - rate - slope;
            return Ok(EdbReport {
                s,
                t,
                energy_drop: drop,
                rate_integral: rate,
                slope_integral: slope,
                work_integral: work,
                residual,
                quad_nodes: i1 - i0,
                rule: "piecewise-constant forces, dissipation frozen at u_{k-1}".into(),
                quadrature_error: 0.0,
                lower_tolerance: floor + lambda_defect(i0, i1),
            });
        }
    }

    let pass = |nodes: usize| -> Result<(f64, f64, f64)> {
        let k0 = traj.segment(s)?;
        let k1 = traj.segment(t)?;
        let segs = k1 - k0 + 1;
        let per = nodes.div_ceil(segs).max(1);
        let (mut rate, mut slope, mut work) = (0.0, 0.0, 0.0);
        for k in k0..=k1 {
            let a = traj.times[k].max(s);
            let b = traj.times[(k + 1).min(traj.len() - 1)].min(t);
            if b <= a {
                continue;
            }
            let (ua, ub) = (&traj.states[k], &traj.states[(k + 1).min(traj.len() - 1)]);
            let seg_len = traj.times[(k + 1).min(traj.len() - 1)] - traj.times[k];
            let v = if seg_len > 0.0 { (ub - ua) / seg_len } else { StateVec::zeros(ua.len()) };
            let xs = quad::lin_grid(a, b, per + 1);
            let mut fr = Vec::with_capacity(xs.len());
            let mut fs = Vec::with_capacity(xs.len());
            let mut fw = Vec::with_capacity(xs.len());
            for &x in &xs {
                let u = traj.interpolate(InterpolantKind::Affine, x)?;
                let xi = path_force(sys, x, &u)?;
                match &sys.dissipation {
                    Dissipation::Banach(r) => {
                        fr.push(r.eval(&u, &v)?.value());
                        fs.push(r.eval_dual(&u, &(-&xi))?.value());
                    }
                    Dissipation::Metric { dist, psi } => {
                        let speed = if seg_len > 0.0 { dist.dist(ua, ub).value() / seg_len } else { 0.0 };
                        fr.push(psi.eval(speed)?.value());
                        let sl = sys.slope(x, &u).ok_or(GflError::SlopeUnavailable)?;
                        fs.push(eval_conjugate(&ConjugatePair::new(psi.clone()), sl)?.value());
                    }
                }
                fw.push(if sys.energy.is_autonomous() { 0.0 } else { sys.energy.power(x, &u)? });
            }
            rate += quad::trapezoid(&xs, &fr);
            slope += quad::trapezoid(&xs, &fs);
            work += quad::trapezoid(&xs, &fw);
        }
        Ok((rate, slope, work))
    };
    let nodes = quad_nodes.max(traj.len() - 1).max(1);
    let (rate, slope, work) = pass(nodes)?;
    let (r2, s2, w2) = pass(2 * nodes)?;
    let qerr = ((r2 + s2 - w2) - (rate + slope - work)).abs() / 3.0;
    let i0 = traj.segment(s)?;
    let i1 = traj.segment(t)?.min(traj.len() - 1);
    Ok(EdbReport {
        s,
        t,
        energy_drop: drop,
        rate_integral: r2,
        slope_integral: s2,
        work_integral: w2,
        residual: drop + w2 - r2 - s2,
        quad_nodes: 2 * nodes,
        rule: "composite trapezoid on the affine interpolant".into(),
        quadrature_error: qerr,
        lower_tolerance: floor + qerr + lambda_defect(i0, (i1 + 1).min(traj.len() - 1)),
    })
}

/// Per-step discrete EDI residuals
/// `F(u_{k−1}) − F(u_k) − (λ/2)‖Δ‖² − τ[R(u_{k−1}, Δ/τ) + R*(u_{k−1}, −ξ_k)]`,
/// with F evaluated at the step time t_k.
pub fn discrete_edi_check(sys: &GradientSystem, traj: &Trajectory) -> Result<Vec<f64>> {
    let lambda = sys.lambda().ok_or(GflError::UnknownLambda)?;
    let nrm = sys.fixed_norm();
    let mut out = Vec::with_capacity(traj.len().saturating_sub(1));
    for k in 1..traj.len() {
        let tk = traj.times[k];
        let tau = tk - traj.times[k - 1];
        let (prev, cur) = (&traj.states[k - 1], &traj.states[k]);
        let xi = match &traj.forces[k] {
            Some(x) => x.clone(),
            None => path_force(sys, tk, cur)?,
        };
        let drop = energy_at(sys, tk, prev)? - energy_at(sys, tk, cur)?;
        let d = nrm.norm(&(cur - prev));
        let rate = increment_rate(sys, prev, prev, cur, tau)?.value();
        let dual = dual_rate_scalar(sys, prev, cur, tk, &xi)?.value();
        out.push(drop - 0.5 * lambda * d * d - tau * (rate + dual));
    }
    Ok(out)
}

/// Chain-rule residual for an explicit curve and force selector:
/// `|d/dt F(t, u(t)) − ⟨ξ(t), u̇(t)⟩ − ∂ₜF(t, u(t))|` by central differences.
pub fn chain_rule_residual_with(
    sys: &GradientSystem,
    curve: &dyn Fn(f64) -> StateVec,
    force: &dyn Fn(f64) -> StateVec,
    t: f64,
    h: f64,
) -> Result<f64> {
    let (up, um, u) = (curve(t + h), curve(t - h), curve(t));
    let dfdt = (energy_at(sys, t + h, &up)? - energy_at(sys, t - h, &um)?) / (2.0 * h);
    let udot = (up - um) / (2.0 * h);
    let power = if sys.energy.is_autonomous() { 0.0 } else { sys.energy.power(t, &u)? };
    Ok((dfdt - force(t).dot(&udot) - power).abs())
}

/// Chain-rule residual along the affine interpolant of `traj` at interior `t`.
pub fn chain_rule_residual(sys: &GradientSystem, traj: &Trajectory, t: f64, h: f64) -> Result<f64> {
    if t - h < traj.t0() || t + h > traj.t_end() {
        return Err(GflError::OutOfRange(t));
    }
    let curve = |r: f64| traj.interpolate(InterpolantKind::Affine, r).expect("inside span");
    let u = curve(t);
    let xi = path_force(sys, t, &u)?;
    chain_rule_residual_with(sys, &curve, &|_| xi.clone(), t, h)
}

/// `R(u, v) + R*(u, ξ) ≥ c_Y‖v‖‖ξ‖_* − C_Y`, up to roundoff.
pub fn quantitative_young_check(r: &DissipationPotential, u: &StateVec, v: &StateVec, xi: &StateVec, c_y: f64, big_c_y: f64) -> Result<bool> {
    let lhs = r.eval(u, v)? + r.eval_dual(u, xi)?;
    let (Some(nv), Some(nx)) = (r.norm(u, v), r.dual_norm(u, xi)) else {
        return Ok(true);
    };
    let rhs = c_y * nv.value() * nx - big_c_y;
    Ok(match lhs {
        PosInf => true,
        Finite(l) => l >= rhs - 1e-12 * (1.0 + l.abs() + rhs.abs()),
    })
}

/// Modulus of continuity `ω_ψ^B(r) = inf_{μ>0} (rψ*(μ) + B)/μ`.
pub fn modulus_bound(psi: &ScalarPotential, b: f64, r: f64) -> f64 {
    if r <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let pair = ConjugatePair::new(psi.clone());
    let mut obj = |lm: f64| -> ExtReal {
        let mu = lm.exp();
        match eval_conjugate(&pair, mu) {
            Ok(Finite(c)) => Finite(-(r * c + b) / mu),
            _ => Finite(f64::NEG_INFINITY),
        }
    };
    let grid = quad::lin_grid((1e-8f64).ln(), (1e8f64).ln(), 321);
    let best = quad::maximize_on_grid(&mut obj, &grid, 1e-12);
    (-best.value).max(0.0)
}

/// Metric speeds (symmetric difference quotients) and slopes at the nodes.
#[derive(Debug, Clone, Serialize)]
pub struct SpeedAndSlopeSeries {
    pub times: Vec<f64>,
    pub speed: Vec<f64>,
    pub slope: Vec<Option<f64>>,
}

pub fn speed_and_slope_series(sys: &GradientSystem, traj: &Trajectory) -> SpeedAndSlopeSeries {
    let n = traj.len();
    let mut speed = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = if n == 1 {
            (0, 0)
        } else if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        speed.push(if a == b { 0.0 } else { sys.distance(&traj.states[a], &traj.states[b]).value() / (traj.times[b] - traj.times[a]) });
    }
    let slope = (0..n).map(|i| sys.slope(traj.times[i], &traj.states[i])).collect();
    SpeedAndSlopeSeries { times: traj.times.clone(), speed, slope }
}

/// `F(u(t)) + ∫_s^t [ψ(|u̇|) + ψ*(|∂F|(u))] − F(u(s))` by the trapezoid rule
/// on the nodes inside `[s, t]`.
pub fn cms_residual(sys: &GradientSystem, traj: &Trajectory, s: f64, t: f64) -> Result<f64> {
    let psi = sys.psi().ok_or(GflError::InvalidParameter("dissipation has no scalar potential".into()))?;
    let pair = ConjugatePair::new(psi.clone());
    let series = speed_and_slope_series(sys, traj);
    let idx: Vec<usize> = (0..traj.len()).filter(|&i| traj.times[i] >= s - 1e-12 && traj.times[i] <= t + 1e-12).collect();
    if idx.len() < 2 {
        return Err(GflError::InvalidParameter("fewer than two nodes in the interval".into()));
    }
    let mut xs = Vec::with_capacity(idx.len());
    let mut ys = Vec::with_capacity(idx.len());
    for &i in &idx {
        let sl = series.slope[i].ok_or(GflError::SlopeUnavailable)?;
        xs.push(traj.times[i]);
        ys.push((psi.eval(series.speed[i])? + eval_conjugate(&pair, sl)?).value());
    }
    let (i0, i1) = (idx[0], *idx.last().unwrap());
    Ok(energy_at(sys, traj.times[i1], &traj.states[i1])? + quad::trapezoid(&xs, &ys) - energy_at(sys, traj.times[i0], &traj.states[i0])?)
}

/// Outcome of the De Giorgi identity check.
#[derive(Debug, Clone, Serialize)]
pub struct DeGiorgiReport {
    pub phi: f64,
    pub integral: f64,
    pub energy: f64,
    /// `φ(τ) + ∫ − F(u*)`.
    pub residual: f64,
    pub quadrature_error: f64,
}

/// Geometric panel nodes from `τ·2⁻²⁰` to `τ`.
pub fn de_giorgi_nodes(tau: f64, count: usize) -> Vec<f64> {
    quad::log_grid(tau * 2f64.powi(-20), tau, count)
}

/// ∫₀^τ g(r) dr: globally adaptive Gauss–Kronrod on geometric panels plus a
/// rectangle on `[0, r₀]`. The panel budget keeps jumps of `g` affordable.
fn panel_integral(nodes: &[f64], g: &mut dyn FnMut(f64) -> f64) -> (f64, f64) {
    let head = nodes[0] * g(nodes[0]);
    let span = nodes[nodes.len() - 1] - nodes[0];
    let (v, e) = quad::integrate_global(&mut |r| g(r), nodes, 1e-10 * span, 1e-12, 4000);
    (head + v, e)
}

fn strict_psi(sys: &GradientSystem) -> Result<ScalarPotential> {
    let psi = sys.psi().ok_or(GflError::InvalidParameter("dissipation has no scalar potential".into()))?;
    if !psi.is_strictly_convex_c1() {
        return Err(GflError::InvalidParameter("De Giorgi checks need a strictly convex C¹ ψ".into()));
    }
    Ok(psi)
}

/// Signed residual of `φ(τ, u*) + ∫₀^τ ψ*(ψ'(d⁺(r)/r)) dr = F(u*)`.
pub fn de_giorgi_identity_residual(sys: &GradientSystem, u_base: &StateVec, t_base: f64, tau: f64, opts: &MmsOptions) -> Result<DeGiorgiReport> {
    let psi = strict_psi(sys)?;
    let pair = ConjugatePair::new(psi.clone());
    let energy = energy_at(sys, t_base, u_base)?;
    let (_, phi) = de_giorgi_interpolant(sys, u_base, t_base, tau, opts)?;
    let mut failure = None;
    let mut g = |r: f64| -> f64 {
        match probe_radius(sys, u_base, t_base, r, opts) {
            Ok((_, dp, _)) => eval_conjugate(&pair, psi.derivative(dp / r)).map(|v| v.value()).unwrap_or(f64::INFINITY),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let (integral, qerr) = panel_integral(&de_giorgi_nodes(tau, 64), &mut g);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(DeGiorgiReport { phi, integral, energy, residual: phi + integral - energy, quadrature_error: qerr })
}

/// `F(u*) − τψ(D(u*, ũ(τ))/τ) − F(ũ(τ)) − ∫₀^τ ψ*(|∂F|(ũ(r))) dr`,
/// expected ≥ −tol.
pub fn discrete_de_giorgi_edi(sys: &GradientSystem, u_base: &StateVec, t_base: f64, tau: f64, opts: &MmsOptions) -> Result<f64> {
    let psi = strict_psi(sys)?;
    let pair = ConjugatePair::new(psi.clone());
    let energy = energy_at(sys, t_base, u_base)?;
    let (u_tau, _) = de_giorgi_interpolant(sys, u_base, t_base, tau, opts)?;
    let step = tau * psi.eval(sys.distance(u_base, &u_tau).value() / tau)?.value() + energy_at(sys, t_base, &u_tau)?;
    let mut failure = None;
    let mut g = |r: f64| -> f64 {
        let res = de_giorgi_interpolant(sys, u_base, t_base, r, opts).and_then(|(u, _)| {
            let s = sys.slope_at(t_base, &u, u_base).ok_or(GflError::SlopeUnavailable)?;
            eval_conjugate(&pair, s).map(|v| v.value())
        });
        match res {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let (integral, _) = panel_integral(&de_giorgi_nodes(tau, 64), &mut g);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(energy - step - integral)
}

/// Worst violation of the slope estimate `|∂F|(u_k) ≤ ψ'(D(u_{k−1}, u_k)/τ)`
/// along an MMS trajectory (dissipation frozen at u_{k−1}); nonpositive
/// values mean the estimate holds.
pub fn slope_estimate_violation(sys: &GradientSystem, traj: &Trajectory) -> Result<f64> {
    let psi = sys.psi().ok_or(GflError::InvalidParameter("dissipation has no scalar potential".into()))?;
    let mut worst = f64::NEG_INFINITY;
    for k in 1..traj.len() {
        let tau = traj.times[k] - traj.times[k - 1];
        let (prev, cur) = (&traj.states[k - 1], &traj.states[k]);
        let slope = sys.slope_at(traj.times[k], cur, prev).ok_or(GflError::SlopeUnavailable)?;
        let bound = psi.derivative(sys.distance(prev, cur).value() / tau);
        let el = step_defect(sys, prev, cur, traj.times[k], tau).unwrap_or_else(|| traj.records.get(k - 1).map_or(0.0, |r| r.el_residual));
        let tol = 1e-9 * (1.0 + bound.abs()) + el;
        worst = worst.max(slope - bound - tol);
    }
    Ok(worst)
}

/// Worst violation of `Σ_{j<i≤k} D(u_{i−1}, u_i) ≤ ω_ψ^B(t_k − t_j)` with
/// `B = Σ τψ(D/τ)`; nonpositive values mean the bound holds.
pub fn modulus_violation(sys: &GradientSystem, traj: &Trajectory) -> Result<f64> {
    let psi = sys.psi().ok_or(GflError::InvalidParameter("dissipation has no scalar potential".into()))?;
    let n = traj.len();
    let mut d = vec![0.0; n];
    let mut b = 0.0;
    for k in 1..n {
        let tau = traj.times[k] - traj.times[k - 1];
        d[k] = sys.distance(&traj.states[k - 1], &traj.states[k]).value();
        b += tau * psi.eval(d[k] / tau)?.value();
    }
    let mut prefix = vec![0.0; n];
    for k in 1..n {
        prefix[k] = prefix[k - 1] + d[k];
    }
    let uniform = traj.times.windows(2).all(|w| ((w[1] - w[0]) - (traj.times[1] - traj.times[0])).abs() <= 1e-12 * (1.0 + traj.t_end().abs()));
    let mut worst = f64::NEG_INFINITY;
    if uniform {
        for lag in 1..n {
            let omega = modulus_bound(&psi, b, traj.times[lag] - traj.times[0]);
            let mut chained = 0.0f64;
            for j in 0..n - lag {
                chained = chained.max(prefix[j + lag] - prefix[j]);
            }
            worst = worst.max(chained - omega - 1e-9 * (1.0 + omega));
        }
    } else {
        let stride = ((n * n) / 10_000).max(1);
        let mut count = 0usize;
        for j in 0..n {
            for k in j + 1..n {
                count += 1;
                if count % stride != 0 {
                    continue;
                }
                let omega = modulus_bound(&psi, b, traj.times[k] - traj.times[j]);
                worst = worst.max(prefix[k] - prefix[j] - omega - 1e-9 * (1.0 + omega));
            }
        }
    }
    Ok(worst)
}
