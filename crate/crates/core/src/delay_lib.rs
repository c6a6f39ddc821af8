//! Smooth bump functions and the three delay families on a step-`delta` grid.
//!
//! Each family is built so that `t_l - tau(t_l)` lands on a grid point for
//! every grid time `t_l`, which is what lets the Euler scheme read delayed
//! states without interpolation.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dde_core::{TimeGrid, LAG_TOL};
use crate::error::{Error, Result};

fn e_plus(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth step on `[0, 1]`: 0 for `x <= 0`, 1 for `x >= 1`, 1/2 at `x = 1/2`.
pub fn smooth_step(x: f64) -> f64 {
    let a = e_plus(x);
    let b = e_plus(1.0 - x);
    a / (a + b)
}

/// Smooth transition from 0 at `r1` to 1 at `r2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub r1: f64,
    pub r2: f64,
}

impl Bump {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1.is_finite() && r2.is_finite() && r1 < r2) {
            return Err(Error::invalid(format!("bump needs r1 < r2, got [{r1}, {r2}]")));
        }
        Ok(Self { r1, r2 })
    }

    pub fn eval(&self, t: f64) -> f64 {
        smooth_step((t - self.r1) / (self.r2 - self.r1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayKind {
    A,
    B,
    C,
}

/// Member `j` of one of the families A, B, C on the grid with step `delta`,
/// maximal delay `tau = R * delta` and horizon `T = L * delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayFunction {
    pub kind: DelayKind,
    pub j: usize,
    pub delta: f64,
    pub tau: f64,
    pub horizon: f64,
}

fn whole_steps(x: f64, delta: f64, what: &str) -> Result<usize> {
    let r = x / delta;
    let rr = r.round();
    if (r - rr).abs() > LAG_TOL * r.max(1.0) || rr < 0.0 {
        return Err(Error::GridAlignment(format!("{what}={x} is not a multiple of {delta}")));
    }
    Ok(rr as usize)
}

impl DelayFunction {
    pub fn new(kind: DelayKind, j: usize, delta: f64, tau: f64, horizon: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("delay step must be positive"));
        }
        let r = whole_steps(tau, delta, "tau")?;
        let l = whole_steps(horizon, delta, "T")?;
        match kind {
            DelayKind::A | DelayKind::B => {
                if j < 1 || j > r {
                    return Err(Error::invalid(format!("{kind:?} delays need 1 <= j <= R={r}, got {j}")));
                }
            }
            DelayKind::C => {
                if r < 3 {
                    return Err(Error::invalid(format!("C delays need R >= 3, got {r}")));
                }
                if l == 0 || j > l - 1 {
                    return Err(Error::invalid(format!("C delays need j <= L-1={}, got {j}", l.saturating_sub(1))));
                }
            }
        }
        Ok(Self { kind, j, delta, tau, horizon })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let slack = LAG_TOL * self.delta;
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::invalid(format!("delay evaluated at t={t} outside [0, {}]", self.horizon)));
        }
        let d = self.delta;
        let jd = self.j as f64 * d;
        Ok(match self.kind {
            DelayKind::A => jd,
            DelayKind::B => Bump { r1: jd - d, r2: jd }.eval(t) * jd,
            DelayKind::C => {
                if t <= jd + d {
                    Bump { r1: jd, r2: jd + d }.eval(t) * (t - jd)
                } else {
                    let g = Bump { r1: jd - d + self.tau, r2: jd + self.tau }.eval(t);
                    (1.0 - g) * (t - jd - self.tau) + self.tau
                }
            }
        })
    }
}

impl fmt::Display for DelayFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.kind, self.j)
    }
}

/// A delay as read by a vector field: a constant, or a member of a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Delay {
    Fixed(f64),
    Family(DelayFunction),
}

impl Delay {
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Delay::Fixed(d) => Ok(*d),
            Delay::Family(f) => f.eval(t),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Delay::Fixed(d) => format!("fixed({d})"),
            Delay::Family(f) => f.to_string(),
        }
    }
}

/// `alpha[l][j]`: grid index of `t_l - tau_j(t_l)` for `l = 0 .. L-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentTable {
    pub labels: Vec<String>,
    pub alpha: Vec<Vec<isize>>,
}

impl AlignmentTable {
    /// Whether `t_l - tau_j(t_l) >= 0`, i.e. the lookup is a single
    /// point of the solution rather than of the initial data.
    pub fn one_point(&self, j: usize, l: usize) -> bool {
        self.alpha[l][j] >= 0
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "l,{}", self.labels.join(","))?;
        for (l, row) in self.alpha.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
            writeln!(w, "{l},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Resolves every delay at every update time of `grid` to a grid index.
/// Any lookup that misses the grid makes the whole table an error listing
/// the offending `(j, l)` pairs.
pub fn grid_alignment_table(delays: &[Delay], grid: &TimeGrid) -> Result<AlignmentTable> {
    let mut alpha = Vec::with_capacity(grid.steps);
    let mut bad = Vec::new();
    for l in 0..grid.steps {
        let t = grid.time(l as isize);
        let mut row = Vec::with_capacity(delays.len());
        for (j, d) in delays.iter().enumerate() {
            let a = (t - d.eval(t)? - grid.t0) / grid.delta;
            let ar = a.round();
            if (a - ar).abs() > LAG_TOL || ar > l as f64 || ar < -(grid.history as f64) {
                bad.push((j, l));
            }
            row.push(ar as isize);
        }
        alpha.push(row);
    }
    if !bad.is_empty() {
        return Err(Error::AlignmentViolations(bad));
    }
    Ok(AlignmentTable { labels: delays.iter().map(Delay::label).collect(), alpha })
}
