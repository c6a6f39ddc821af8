//! Linear scalar DDEs `y' = K0 y(t - tau)`: characteristic roots through the
//! Lambert W function, the exact piecewise-polynomial solution, and how fast
//! solutions are attracted to the one-dimensional special solution when the
//! delay is small.

use std::f64::consts::E;
use std::sync::Arc;

use serde::Serialize;

use crate::dde_core::{euler_solve, History, InitialData, TimeGrid, VectorField};
use crate::delay_lib::Delay;
use crate::error::{Error, Result};
use crate::fields::{FieldDescriptor, LinearDelay};

const INV_E: f64 = 0.367_879_441_171_442_33;
const HALLEY_MAX_ITER: usize = 50;
const RESIDUAL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// `W0`, values `>= -1`.
    Principal,
    /// `W-1`, values `<= -1`.
    Lower,
}

impl Branch {
    pub fn from_index(k: i32) -> Result<Self> {
        match k {
            0 => Ok(Branch::Principal),
            -1 => Ok(Branch::Lower),
            _ => Err(Error::invalid(format!("real branches are 0 and -1, got {k}"))),
        }
    }
}

fn initial_guess(branch: Branch, x: f64) -> f64 {
    let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
    match branch {
        Branch::Principal if x < -0.25 => -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p,
        Branch::Principal => {
            let l = x.ln_1p();
            l * (1.0 - (1.0 + l).ln() / (2.0 + l))
        }
        Branch::Lower if x < -0.25 => -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p,
        Branch::Lower => {
            let l1 = (-x).ln();
            let l2 = (-l1).ln();
            l1 - l2 + l2 / l1
        }
    }
}

/// Real branches of the Lambert W function, by Halley iteration.
pub fn lambert_w(branch: Branch, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("W of non-finite {x}")));
    }
    if x < -INV_E {
        // -1/e itself is not representable; values within rounding of it
        // are the branch point.
        if x >= -INV_E * (1.0 + 4.0 * f64::EPSILON) {
            return Ok(-1.0);
        }
        return Err(Error::NoRealRoot(format!("W({x}) is complex for x < -1/e")));
    }
    if branch == Branch::Lower && x >= 0.0 {
        return Err(Error::NoRealRoot(format!("W-1({x}) needs -1/e <= x < 0")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut w = initial_guess(branch, x);
    for _ in 0..HALLEY_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if f == 0.0 || wp1 == 0.0 {
            break;
        }
        let dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    w = match branch {
        Branch::Principal => w.max(-1.0),
        Branch::Lower => w.min(-1.0),
    };
    let res = (w * w.exp() - x).abs();
    if !(res <= RESIDUAL_TOL * x.abs().max(1.0)) {
        return Err(Error::Convergence(format!("W({x}) residual {res}")));
    }
    Ok(w)
}

/// Real roots of `lambda = K0 e^{-lambda tau}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicRoots {
    pub lambda1: f64,
    /// Second real root, present iff `-1/e <= K0 tau < 0`.
    pub lambda2: Option<f64>,
}

pub fn characteristic_roots(k0: f64, tau: f64) -> Result<CharacteristicRoots> {
    if !(k0.is_finite() && tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid("characteristic roots need finite K0 and tau >= 0"));
    }
    if tau == 0.0 {
        return Ok(CharacteristicRoots { lambda1: k0, lambda2: None });
    }
    let x = k0 * tau;
    let lambda1 = lambert_w(Branch::Principal, x)? / tau;
    let lambda2 = if x < 0.0 { Some(lambert_w(Branch::Lower, x)? / tau) } else { None };
    Ok(CharacteristicRoots { lambda1, lambda2 })
}

/// Exact solution from the constant history `y0`, built by the method of
/// steps: on the `k`-th interval, in the local variable `s = t - (k-1) tau`,
/// `p_k(s) = p_{k-1}(tau) + K0 * integral_0^s p_{k-1}`.
#[derive(Debug, Clone)]
pub struct LinearClosedForm {
    pub k0: f64,
    pub tau: f64,
    pieces: Vec<Vec<f64>>,
}

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * s + a)
}

impl LinearClosedForm {
    pub fn new(k0: f64, tau: f64, y0: f64, horizon: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid("closed form needs tau > 0"));
        }
        let n = (horizon.max(0.0) / tau).ceil() as usize + 1;
        let mut pieces = vec![vec![y0]];
        for k in 1..=n {
            let prev = &pieces[k - 1];
            let mut next = vec![horner(prev, tau)];
            next.extend(prev.iter().enumerate().map(|(j, c)| k0 * c / (j + 1) as f64));
            pieces.push(next);
        }
        Ok(Self { k0, tau, pieces })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(self.pieces[0][0]);
        }
        let k = ((t / self.tau).ceil() as usize).max(1);
        let piece = self
            .pieces
            .get(k)
            .ok_or_else(|| Error::invalid(format!("t={t} beyond the prepared horizon")))?;
        Ok(horner(piece, t - (k - 1) as f64 * self.tau))
    }
}

/// `y(t)` for `y' = K0 y(t - tau)` with constant history `y0`.
pub fn linear_dde_closed_form(k0: f64, tau: f64, y0: f64, t: f64) -> Result<f64> {
    LinearClosedForm::new(k0, tau, y0, t)?.eval(t)
}

/// `y0 e^{lambda1 (t - t0)}`.
pub fn special_solution_linear(k0: f64, tau: f64, t0: f64, y0: f64, t: f64) -> Result<f64> {
    let r = characteristic_roots(k0, tau)?;
    Ok(y0 * (r.lambda1 * (t - t0)).exp())
}

/// Coefficient of the scalar ODE `z' = lambda1 z` carrying the special solution.
pub fn special_ode_field_linear(k0: f64, tau: f64) -> Result<f64> {
    Ok(characteristic_roots(k0, tau)?.lambda1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Smallness {
    pub ok: bool,
    /// `1 - K tau e`.
    pub margin: f64,
}

pub fn smallness_check(k: f64, tau: f64) -> Smallness {
    let margin = 1.0 - k * tau * E;
    Smallness { ok: margin > 0.0, margin }
}

/// `F(min(max(t, 0), T), y_t)`: a field on `[0, T]` extended to all times.
#[derive(Clone)]
pub struct ClampedTimeField {
    inner: Arc<dyn VectorField>,
    horizon: f64,
}

pub fn extend_field_weakly_nonlinear(field: Arc<dyn VectorField>, horizon: f64) -> ClampedTimeField {
    ClampedTimeField { inner: field, horizon }
}

impl VectorField for ClampedTimeField {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn max_delay(&self) -> f64 {
        self.inner.max_delay()
    }
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }
    fn zero_bound(&self) -> f64 {
        self.inner.zero_bound()
    }
    fn delays(&self) -> Vec<Delay> {
        self.inner.delays()
    }
    fn eval(&self, t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        self.inner.eval(t.clamp(0.0, self.horizon), hist, out)
    }
    fn descriptor(&self) -> Option<FieldDescriptor> {
        self.inner.descriptor()
    }
}

/// Dominant real root `mu` of `mu^{R+1} - mu^R - delta K0 = 0`, the
/// characteristic equation of the Euler scheme for `y' = K0 y(t - R delta)`.
pub fn discrete_dominant_root(k0: f64, delta: f64, r: usize) -> Result<f64> {
    if r == 0 {
        return Ok(1.0 + delta * k0);
    }
    let tau = r as f64 * delta;
    let guess = (characteristic_roots(k0, tau)?.lambda1 * delta).exp();
    let ri = i32::try_from(r).map_err(|_| Error::invalid("history too long"))?;
    let mut mu = guess;
    for _ in 0..100 {
        let p = mu.powi(ri - 1);
        let g = p * mu * (mu - 1.0) - delta * k0;
        let dg = p * ((r + 1) as f64 * mu - r as f64);
        let step = g / dg;
        mu -= step;
        if step.abs() <= 2.0 * f64::EPSILON * mu.abs() {
            return Ok(mu);
        }
    }
    Err(Error::Convergence(format!("discrete root for K0={k0}, delta={delta}, R={r}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AttractionHistory {
    /// `y = y0` on `[-tau, 0]`.
    Constant,
    /// The history of the special solution through `y0`.
    OnSpecialSolution,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AttractionSample {
    pub t: f64,
    pub y: f64,
    pub ybar: f64,
    pub gap: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttractionReport {
    pub lambda1: f64,
    pub lambda2: Option<f64>,
    /// `ln(mu) / delta` for the scheme's dominant root `mu`.
    pub lambda1_discrete: f64,
    pub ybar0: f64,
    /// Same estimate from the midpoint of the run.
    pub ybar0_half: f64,
    pub ybar0_converged: bool,
    /// `max_t e^{t/tau} |y(t) - ybar(t)|`.
    pub c_u: f64,
    /// Least-squares slope of `ln gap` over the second half of the run.
    pub fitted_rate: Option<f64>,
    pub fit_points: usize,
    pub samples: Vec<AttractionSample>,
}

impl AttractionReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,y,ybar,gap,envelope")?;
        for s in &self.samples {
            let row = [s.t, s.y, s.ybar, s.gap, s.envelope].map(crate::fmt_f64);
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Gaps below this (relative to the data) are rounding noise and are left
/// out of the rate fit.
const GAP_FLOOR: f64 = 1e-13;

/// Integrates `y' = K0 y(t - tau)` with Euler and measures the distance to
/// the special solution `ybar(t) = ybar0 mu^l`, with `mu` the scheme's own
/// dominant root and `ybar0` read off the end of the run.
pub fn measure_attraction(
    k0: f64,
    tau: f64,
    y0: f64,
    horizon: f64,
    steps: usize,
    history: AttractionHistory,
) -> Result<AttractionReport> {
    if !(tau > 0.0) {
        return Err(Error::invalid("attraction needs tau > 0"));
    }
    let roots = characteristic_roots(k0, tau)?;
    let grid = TimeGrid::from_horizon(0.0, horizon, steps, tau)?;
    let mu = discrete_dominant_root(k0, grid.delta, grid.history)?;
    let ln_mu = (mu - 1.0).ln_1p();
    let pow = |l: isize| (l as f64 * ln_mu).exp();
    let init = match history {
        AttractionHistory::Constant => InitialData::Constant(vec![y0]),
        AttractionHistory::OnSpecialSolution => {
            let r = grid.history as isize;
            InitialData::Sampled((-r..=0).map(|l| vec![y0 * pow(l)]).collect())
        }
    };
    let tr = euler_solve(&LinearDelay::new(1, k0, tau), &init, &grid)?;
    let big_l = steps as isize;
    let ybar0 = tr.state(big_l)[0] / pow(big_l);
    let half = big_l / 2;
    let ybar0_half = tr.state(half)[0] / pow(half);
    let ybar0_converged = (ybar0 - ybar0_half).abs() <= 1e-6 * ybar0.abs().max(f64::MIN_POSITIVE);

    let mut samples = Vec::with_capacity(steps + 1);
    let mut c_u: f64 = 0.0;
    for l in 0..=big_l {
        let t = grid.time(l);
        let y = tr.state(l)[0];
        let ybar = ybar0 * pow(l);
        let gap = (y - ybar).abs();
        let envelope = (t / tau).exp() * gap;
        c_u = c_u.max(envelope);
        samples.push(AttractionSample { t, y, ybar, gap, envelope });
    }

    let floor = GAP_FLOOR * y0.abs().max(ybar0.abs()).max(1.0);
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.t >= horizon / 2.0 && s.gap > floor)
        .map(|s| (s.t, s.gap.ln()))
        .collect();
    let fitted_rate = (pts.len() >= 10).then(|| slope(&pts));

    Ok(AttractionReport {
        lambda1: roots.lambda1,
        lambda2: roots.lambda2,
        lambda1_discrete: ln_mu / grid.delta,
        ybar0,
        ybar0_half,
        ybar0_converged,
        c_u,
        fitted_rate,
        fit_points: pts.len(),
        samples,
    })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `y0 cos(K0 (t - t0)) + c sin(K0 (t - t0))`, which solves
/// `y' = K0 y(t - tau)` whenever `K0 tau = -pi/2`.
pub fn oscillating_solution(k0: f64, t0: f64, y0: f64, c: f64, t: f64) -> f64 {
    let p = k0 * (t - t0);
    y0 * p.cos() + c * p.sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        // mpmath reference values
        let cases = [
            (Branch::Principal, -0.2, -0.259_171_101_819_073_76),
            (Branch::Lower, -0.2, -2.542_641_357_773_526_3),
            (Branch::Principal, 1.0, 0.567_143_290_409_783_87),
            (Branch::Principal, 10.0, 1.745_528_002_740_699_4),
            (Branch::Lower, -0.01, -6.472_775_124_394_004_7),
        ];
        for (b, x, w) in cases {
            let got = lambert_w(b, x).unwrap();
            assert!((got - w).abs() < 1e-14, "{b:?} {x}: {got}");
        }
    }

    #[test]
    fn branch_point_and_domain() {
        let x = -(-1.0f64).exp();
        assert!((lambert_w(Branch::Principal, x).unwrap() + 1.0).abs() < 1e-7);
        assert!((lambert_w(Branch::Lower, x).unwrap() + 1.0).abs() < 1e-7);
        assert!(matches!(lambert_w(Branch::Principal, -0.4), Err(Error::NoRealRoot(_))));
        assert!(matches!(lambert_w(Branch::Lower, 0.1), Err(Error::NoRealRoot(_))));
        assert!(Branch::from_index(1).is_err());
    }

    proptest! {
        #[test]
        fn principal_residual(x in -0.367_879_441_171_442f64..50.0) {
            let w = lambert_w(Branch::Principal, x).unwrap();
            prop_assert!((w * w.exp() - x).abs() <= 1e-14 * x.abs().max(1.0));
            prop_assert!(w >= -1.0);
        }

        #[test]
        fn lower_residual(x in -0.367_879_441_171_442f64..-1e-12) {
            let w = lambert_w(Branch::Lower, x).unwrap();
            prop_assert!((w * w.exp() - x).abs() <= 1e-14);
            prop_assert!(w <= -1.0);
        }

        #[test]
        fn roots_satisfy_characteristic_equation(k0 in -1.4f64..3.0, tau in 0.01f64..0.25) {
            let r = characteristic_roots(k0, tau).unwrap();
            for l in std::iter::once(r.lambda1).chain(r.lambda2) {
                prop_assert!((l * tau * (l * tau).exp() - k0 * tau).abs() < 1e-12);
            }
            prop_assert!(r.lambda1.abs() <= k0.abs() * E + 1e-12);
        }
    }

    #[test]
    fn roots_for_reference_delays() {
        let r = characteristic_roots(-1.0, 0.3).unwrap();
        assert!((r.lambda1 + 1.631_340_757_267_383).abs() < 1e-12);
        assert!((r.lambda2.unwrap() + 5.937_790_078_072_093).abs() < 1e-11);
        let r = characteristic_roots(0.5, 0.2).unwrap();
        assert!(r.lambda2.is_none());
        assert!(characteristic_roots(-2.0, 1.0).is_err());
    }

    /// Series form of the same solution, summed term by term.
    fn series(k0: f64, tau: f64, y0: f64, t: f64) -> f64 {
        let k = (t / tau).floor() as i32 + 1;
        let mut s = 0.0;
        let mut fact = 1.0;
        for j in 0..=k {
            if j > 0 {
                fact *= j as f64;
            }
            s += k0.powi(j) * (t - (j - 1) as f64 * tau).powi(j) / fact;
        }
        y0 * s
    }

    #[test]
    fn closed_form_agrees_with_series() {
        // mpmath: series(-1, 0.3, 1, 0.7)
        let v = linear_dde_closed_form(-1.0, 0.3, 1.0, 0.7).unwrap();
        assert!((v - series(-1.0, 0.3, 1.0, 0.7)).abs() < 1e-14);
        for t in [0.05, 0.3, 0.61, 1.0, 2.0, 2.95] {
            let a = linear_dde_closed_form(-1.0, 0.3, 1.0, t).unwrap();
            assert!((a - series(-1.0, 0.3, 1.0, t)).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn closed_form_is_continuous_at_breaks() {
        let cf = LinearClosedForm::new(-1.0, 0.3, 1.0, 3.0).unwrap();
        for k in 1..10 {
            let t = k as f64 * 0.3;
            let left = horner(&cf.pieces[k], 0.3);
            let right = horner(&cf.pieces[k + 1], 0.0);
            assert_eq!(left, right, "break at {t}");
        }
    }

    #[test]
    fn euler_converges_to_closed_form() {
        let mut errs = Vec::new();
        for steps in [300usize, 600, 1200] {
            let g = TimeGrid::from_horizon(0.0, 3.0, steps, 0.3).unwrap();
            let tr = euler_solve(&LinearDelay::new(1, -1.0, 0.3), &InitialData::Constant(vec![1.0]), &g).unwrap();
            errs.push((tr.final_state()[0] - linear_dde_closed_form(-1.0, 0.3, 1.0, 3.0).unwrap()).abs());
        }
        assert!(errs[0] < 1e-2);
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 1.0).abs() < 0.2, "order {order}");
        }
    }

    #[test]
    fn special_solution_and_ode() {
        let l1 = special_ode_field_linear(-1.0, 0.3).unwrap();
        assert!(l1.abs() <= E);
        let v = special_solution_linear(-1.0, 0.3, 0.5, 2.0, 1.5).unwrap();
        assert!((v - 2.0 * l1.exp()).abs() < 1e-15);
        // Euler on z' = lambda1 z tracks the special solution to O(delta).
        let mut z: f64 = 1.0;
        let n = 1000;
        for _ in 0..n {
            z += l1 / n as f64 * z;
        }
        assert!((z - l1.exp()).abs() < 1e-3);
    }

    #[test]
    fn smallness() {
        assert!(smallness_check(1.0, 0.3).ok);
        assert!(!smallness_check(1.0, 0.4).ok);
        assert!((smallness_check(1.0, 0.3).margin - (1.0 - 0.3 * E)).abs() < 1e-15);
    }

    #[test]
    fn clamped_field_freezes_time() {
        let base: Arc<dyn VectorField> = Arc::new(crate::fields::ForcedField::scalar(
            Arc::new(crate::fields::ZeroField::new(1, 0.0)),
            |t| t,
            1.0,
        ));
        let f = extend_field_weakly_nonlinear(base, 1.0);
        let mut out = [0.0];
        f.eval(5.0, &History::constant(&[0.0]), &mut out).unwrap();
        assert_eq!(out[0], 1.0);
        f.eval(-2.0, &History::constant(&[0.0]), &mut out).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn discrete_root_matches_reference() {
        // mpmath bisection on mu^1001 - mu^1000 + 1/4000
        let mu = discrete_dominant_root(-1.0, 1.0 / 4000.0, 1000).unwrap();
        assert!((mu - 0.999_642_561_502_856_56).abs() < 1e-15);
        let lam = (mu - 1.0).ln_1p() * 4000.0;
        assert!((lam + 1.430_009_574_038_113_3).abs() < 1e-10);
    }

    #[test]
    fn special_history_has_no_gap() {
        let rep = measure_attraction(-1.0, 0.25, 1.0, 2.0, 800, AttractionHistory::OnSpecialSolution).unwrap();
        let worst = rep.samples.iter().map(|s| s.gap).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{worst}");
        assert!((rep.ybar0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unstable_case_still_attracts() {
        let rep = measure_attraction(0.5, 0.2, 1.0, 4.0, 2000, AttractionHistory::Constant).unwrap();
        assert!(rep.c_u.is_finite());
        assert!(rep.ybar0_converged);
        let early = rep.samples[100].gap;
        let late = rep.samples[1500].gap;
        assert!(late < early * 1e-3);
    }

    #[test]
    fn oscillating_family_solves_the_equation() {
        let k0 = -1.0;
        let tau = std::f64::consts::FRAC_PI_2;
        for c in [-1.0, 0.0, 0.7] {
            for t in [0.0, 0.4, 2.0, 5.0] {
                let h = 1e-6;
                let d = (oscillating_solution(k0, 0.0, 1.0, c, t + h) - oscillating_solution(k0, 0.0, 1.0, c, t - h)) / (2.0 * h);
                let rhs = k0 * oscillating_solution(k0, 0.0, 1.0, c, t - tau);
                assert!((d - rhs).abs() < 1e-8);
            }
        }
    }
}
