//! Morse-theoretic ingredients for separating small-delay networks from
//! arbitrary targets: critical point classification, the constant ledger
//! that fixes the admissible delay `tau0`, and rank-deficiency witnesses.

use std::f64::consts::E;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dde_core::{euler_solve, InitialData, TimeGrid};
use crate::error::{Error, Result};
use crate::fields::LinearDelay;
use crate::linalg;
use crate::rng;
use crate::small_delay::{measure_attraction, AttractionHistory};

/// `Psi(p) - sum_{j <= r} u_j^2 + sum_{j > r} u_j^2`.
pub fn normal_form_eval(psi_p: f64, r: usize, u: &[f64]) -> f64 {
    u.iter()
        .enumerate()
        .fold(psi_p, |acc, (j, x)| if j < r { acc - x * x } else { acc + x * x })
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub value: f64,
    pub gradient_norm: f64,
    pub eigenvalues: Vec<f64>,
    pub is_critical: bool,
    pub nondegenerate: bool,
    /// Number of negative Hessian eigenvalues.
    pub index: usize,
}

const EIGEN_TOL: f64 = 1e-6;

/// Gradient and Hessian of `psi` at `p` by central differences with step `h`.
pub fn classify_critical_point(psi: &dyn Fn(&[f64]) -> f64, p: &[f64], h: f64) -> CriticalPoint {
    let n = p.len();
    let f0 = psi(p);
    let at = |shifts: &[(usize, f64)]| {
        let mut x = p.to_vec();
        for &(i, s) in shifts {
            x[i] += s;
        }
        psi(&x)
    };
    let mut grad = vec![0.0; n];
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let (fp, fm) = (at(&[(i, h)]), at(&[(i, -h)]));
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(hess).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    CriticalPoint {
        value: f0,
        gradient_norm,
        is_critical: gradient_norm <= 1e-6 * (1.0 + f0.abs()),
        nondegenerate: eigenvalues.iter().all(|l| l.abs() > EIGEN_TOL),
        index: eigenvalues.iter().filter(|l| **l < -EIGEN_TOL).count(),
        eigenvalues,
    }
}

/// Largest candidate radius `r` on which `psi(p + u)` agrees with the
/// quadratic normal form of index `index` (identity chart) at random points
/// of the ball, to within `tol`.
pub fn probe_radius(
    psi: &dyn Fn(&[f64]) -> f64,
    p: &[f64],
    index: usize,
    candidates: &[f64],
    samples: usize,
    tol: f64,
    seed: u64,
) -> Option<f64> {
    let f0 = psi(p);
    let mut r = rng::stream(seed, 0x5241_4449);
    let mut best = None;
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    for &rad in &sorted {
        let ok = (0..samples).all(|_| {
            let u: Vec<f64> = (0..p.len()).map(|_| r.gen_range(-1.0..=1.0)).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
            let u: Vec<f64> = u.iter().map(|x| x / norm * rad).collect();
            let x: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + b).collect();
            (psi(&x) - normal_form_eval(f0, index, &u)).abs() <= tol
        });
        if !ok {
            break;
        }
        best = Some(rad);
    }
    best
}

/// Inputs of the constant ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationInputs {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub m_bound: f64,
    pub r0: f64,
    pub r1: f64,
    pub eps: f64,
    pub w: f64,
    pub wt: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationConstants {
    pub inputs: SeparationInputs,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub delta_star: f64,
    pub tau3: f64,
    /// `tau3` hit the cap `T` because its logarithm was not positive.
    pub tau3_capped: bool,
    pub kappa: f64,
    pub beta: f64,
    pub tau1: f64,
    pub tau0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// `1 - K tau0 e`.
    pub smallness_margin: f64,
}

pub fn separation_constants(inp: &SeparationInputs) -> Result<SeparationConstants> {
    let SeparationInputs { k, a, horizon: t, m_bound, r0, r1, eps, w, wt, c2 } = *inp;
    let all = [k, a, t, m_bound, r0, r1, eps, w, wt, c2];
    if all.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("constants must be finite"));
    }
    if !(k > 0.0 && t > 0.0 && r0 > 0.0 && r1 > 0.0 && wt > 0.0 && w > 0.0) {
        return Err(Error::invalid("K, T, r0, r1, w, w~ must be positive"));
    }
    if a < 0.0 || m_bound < 0.0 || eps < 0.0 {
        return Err(Error::invalid("A, M and eps must be non-negative"));
    }
    if 2.0 * eps >= r0 * r0 {
        return Err(Error::Precondition(format!("2 eps = {} must be below r0^2 = {}", 2.0 * eps, r0 * r0)));
    }
    if c2 < r1 / 2.0 {
        return Err(Error::Precondition(format!("C2 = {c2} must be at least r1/2 = {}", r1 / 2.0)));
    }
    let c1 = (k * m_bound + a) * (k * t).exp();
    let delta_star = (r0 * r0 - 2.0 * eps) / 2.0;
    let l3 = (2.0 * c2 / (r0 * r0 - 2.0 * eps - delta_star)).ln();
    let (tau3, tau3_capped) = if l3 > 0.0 { (t / l3, false) } else { (t, true) };
    let kappa = (delta_star / (wt * (k * E * t).exp())).min(r1);
    let beta = (2.0 * c2 / kappa).ln();
    let (tau1, t_over_beta) = if beta > 0.0 && c1 > 0.0 {
        (kappa / (2.0 * c1 * beta), t / beta)
    } else if beta > 0.0 {
        (f64::INFINITY, t / beta)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let tau0 = tau1.min(1.0 / (k * E)).min(t_over_beta).min(tau3);
    let margin = 1.0 - k * tau0 * E;
    if !(margin > 0.0) {
        return Err(Error::Precondition(format!("K tau0 e = {} is not below 1", k * tau0 * E)));
    }
    Ok(SeparationConstants {
        inputs: *inp,
        c1,
        delta_star,
        tau3,
        tau3_capped,
        kappa,
        beta,
        tau1,
        tau0,
        delta1: c1 * beta * tau0,
        delta2: c2 * (-beta).exp(),
        delta3: c2 * (-t / tau3).exp(),
        smallness_margin: margin,
    })
}

/// A point `s` at distance `r0` from `p` with `W s = W p`.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub s: Vec<f64>,
    /// `|W s - W p|`.
    pub image_gap: f64,
    /// `| |s - p| - r0 |`.
    pub distance_error: f64,
}

impl Witness {
    pub fn valid(&self) -> bool {
        self.image_gap <= 1e-10 && self.distance_error <= 1e-12
    }
}

/// For a `W` with dependent columns, moves `p` by `r0` along a kernel
/// direction. `None` when `W` has full column rank.
pub fn rank_deficient_witness(w: &DMatrix<f64>, p: &[f64], r0: f64) -> Result<Option<Witness>> {
    if p.len() != w.ncols() {
        return Err(Error::invalid(format!("point has length {}, W has {} columns", p.len(), w.ncols())));
    }
    if !(r0 > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let Some(x) = linalg::kernel_vector(w) else {
        return Ok(None);
    };
    let pv = DVector::from_column_slice(p);
    let s = &pv + x.normalize() * r0;
    let image_gap = (w * &s - w * &pv).amax();
    let distance_error = ((&s - &pv).norm() - r0).abs();
    Ok(Some(Witness { s: s.iter().copied().collect(), image_gap, distance_error }))
}

/// Attraction constant `C2` for `y' = K0 y(t - tau)` over initial values
/// with `|y1| <= r1`, with a 1.5 safety factor, floored at `r1/2`.
pub fn estimate_c2(k0: f64, tau: f64, r1: f64, horizon: f64, steps: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y1 in [r1, -r1, 0.5 * r1] {
        let rep = measure_attraction(k0, tau, y1, horizon, steps, AttractionHistory::Constant)?;
        worst = worst.max(rep.c_u);
    }
    Ok((1.5 * worst).max(r1 / 2.0))
}

/// `|G(y1) - y1|` where `G` runs `y' = -K y(t - tau)` for time `beta tau`
/// from the constant history `y1`.
pub fn map_g_displacement(k: f64, tau: f64, beta: f64, y1: f64, steps: usize) -> Result<f64> {
    let grid = TimeGrid::from_horizon(0.0, beta * tau, steps, tau)?;
    let tr = euler_solve(&LinearDelay::new(1, -k, tau), &InitialData::Constant(vec![y1]), &grid)?;
    Ok((tr.final_state()[0] - y1).abs())
}
