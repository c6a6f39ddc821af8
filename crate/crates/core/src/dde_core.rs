//! Explicit Euler method of steps on a uniform, delay-aligned grid.

use std::io::Write;

use serde::Serialize;

use crate::delay_lib::Delay;
use crate::error::{Error, Result};
use crate::fields::FieldDescriptor;
use crate::fmt_f64;

/// Tolerance on `tau * L / T` being an integer.
const INTEGRAL_TOL: f64 = 1e-12;
/// Tolerance, in units of the step, for a delayed time to count as a grid point.
pub(crate) const LAG_TOL: f64 = 1e-9;

/// Uniform grid `t_l = t0 + l * delta` for `l = -history ..= steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub delta: f64,
    pub steps: usize,
    pub history: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, delta: f64, steps: usize, history: usize) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::invalid("t0 must be finite"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid(format!("step must be positive, got {delta}")));
        }
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(Self { t0, delta, steps, history })
    }

    /// Grid on `[t0, t0 + horizon]` with `steps` intervals and a history
    /// window of length `tau`, which must be a whole number of steps.
    pub fn from_horizon(t0: f64, horizon: f64, steps: usize, tau: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::invalid(format!("delay must be non-negative, got {tau}")));
        }
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        let r = tau * steps as f64 / horizon;
        let rr = r.round();
        if (r - rr).abs() > INTEGRAL_TOL * r.max(1.0) {
            return Err(Error::GridAlignment(format!(
                "tau*L/T = {r} is not an integer (tau={tau}, L={steps}, T={horizon})"
            )));
        }
        Self::new(t0, horizon / steps as f64, steps, rr as usize)
    }

    pub fn time(&self, l: isize) -> f64 {
        self.t0 + l as f64 * self.delta
    }

    pub fn tau(&self) -> f64 {
        self.history as f64 * self.delta
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps as isize)
    }

    /// Index of `t` if it sits on the grid.
    pub fn index_of(&self, t: f64) -> Option<isize> {
        let k = (t - self.t0) / self.delta;
        let kr = k.round();
        ((k - kr).abs() <= LAG_TOL).then_some(kr as isize)
    }
}

/// Read access to the past of a solution as seen by a vector field at one step.
pub struct History<'a> {
    inner: Inner<'a>,
}

enum Inner<'a> {
    Grid {
        grid: &'a TimeGrid,
        rows: &'a [f64],
        dim: usize,
        first: isize,
        current: isize,
        fill_before: bool,
    },
    Constant(&'a [f64]),
}

impl<'a> History<'a> {
    /// Stored states for indices `first ..= current`, row-major in `rows`.
    /// With `fill_before`, indices below `first` resolve to the first row.
    pub fn on_grid(
        grid: &'a TimeGrid,
        rows: &'a [f64],
        dim: usize,
        first: isize,
        current: isize,
        fill_before: bool,
    ) -> Self {
        debug_assert_eq!(rows.len(), (current - first + 1) as usize * dim);
        Self { inner: Inner::Grid { grid, rows, dim, first, current, fill_before } }
    }

    /// History that equals `state` at every past time.
    pub fn constant(state: &'a [f64]) -> Self {
        Self { inner: Inner::Constant(state) }
    }

    pub fn dim(&self) -> usize {
        match &self.inner {
            Inner::Grid { dim, .. } => *dim,
            Inner::Constant(s) => s.len(),
        }
    }

    pub fn current(&self) -> &'a [f64] {
        match &self.inner {
            Inner::Grid { current, .. } => self.index(*current).expect("current row present"),
            Inner::Constant(s) => s,
        }
    }

    /// State at grid index `k`.
    pub fn index(&self, k: isize) -> Result<&'a [f64]> {
        match &self.inner {
            Inner::Grid { rows, dim, first, current, fill_before, .. } => {
                if k > *current {
                    return Err(Error::invalid(format!("lookup of future index {k} from {current}")));
                }
                let k = if k < *first {
                    if !fill_before {
                        return Err(Error::invalid(format!(
                            "index {k} precedes stored history starting at {first}"
                        )));
                    }
                    *first
                } else {
                    k
                };
                let i = (k - first) as usize * dim;
                Ok(&rows[i..i + dim])
            }
            Inner::Constant(s) => Ok(s),
        }
    }

    /// Grid index that `t_current - delay` resolves to.
    pub fn lag_index(&self, delay: f64) -> Result<isize> {
        match &self.inner {
            Inner::Grid { grid, current, .. } => {
                let k = *current as f64 - delay / grid.delta;
                let kr = k.round();
                if (k - kr).abs() > LAG_TOL || !delay.is_finite() {
                    return Err(Error::GridAlignment(format!(
                        "delay {delay} at t={} is not a multiple of the step {}",
                        grid.time(*current),
                        grid.delta
                    )));
                }
                Ok(kr as isize)
            }
            Inner::Constant(_) => Ok(0),
        }
    }

    /// `y(t_current - delay)`; the delayed time must be a grid point.
    pub fn lag(&self, delay: f64) -> Result<&'a [f64]> {
        let k = self.lag_index(delay)?;
        self.index(k)
    }
}

/// Right-hand side `F(t, y_t)` of a delay differential equation.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    /// Largest delay the field reads, `tau`.
    fn max_delay(&self) -> f64;

    /// Lipschitz constant `K` in the sup norm over history segments.
    fn lipschitz(&self) -> f64;

    /// Bound `A` on `sup_t |F(t, 0)|`; infinite when unknown.
    fn zero_bound(&self) -> f64;

    /// Delays read at each time, in argument order.
    fn delays(&self) -> Vec<Delay> {
        Vec::new()
    }

    fn eval(&self, t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()>;

    fn descriptor(&self) -> Option<FieldDescriptor> {
        None
    }
}

/// Initial data on `[t0 - tau, t0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Constant(Vec<f64>),
    /// Values at grid indices `-R ..= 0`.
    Sampled(Vec<Vec<f64>>),
}

impl InitialData {
    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let r = grid.history as isize;
        InitialData::Sampled((-r..=0).map(|l| f(grid.time(l))).collect())
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialData::Constant(v) => v.len(),
            InitialData::Sampled(rows) => rows.first().map_or(0, Vec::len),
        }
    }

    /// `sup |u|` over the stored history.
    pub fn sup_norm(&self) -> f64 {
        match self {
            InitialData::Constant(v) => norm_inf(v),
            InitialData::Sampled(rows) => rows.iter().map(|r| norm_inf(r)).fold(0.0, f64::max),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        match self {
            InitialData::Constant(v) => v,
            InitialData::Sampled(rows) => &rows[i],
        }
    }

    /// `sup |u - v|` over the history.
    pub fn sup_distance(&self, other: &InitialData, rows: usize) -> f64 {
        (0..rows)
            .map(|i| dist_inf(self.row(i), other.row(i)))
            .fold(0.0, f64::max)
    }

    fn check(&self, grid: &TimeGrid, dim: usize) -> Result<()> {
        if let InitialData::Sampled(rows) = self {
            if rows.len() != grid.history + 1 {
                return Err(Error::invalid(format!(
                    "sampled history has {} rows, grid needs {}",
                    rows.len(),
                    grid.history + 1
                )));
            }
            if rows.iter().any(|r| r.len() != dim) {
                return Err(Error::invalid("sampled history rows differ in dimension"));
            }
        } else if self.dim() != dim {
            return Err(Error::invalid(format!(
                "initial data has dimension {}, field has {dim}",
                self.dim()
            )));
        }
        Ok(())
    }
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// One Euler update `y + delta * f`, appended to `out`.
///
/// Both the solver and the DenseResNet forward pass go through here, which
/// is what makes the two agree bit for bit.
pub(crate) fn euler_update(y: &[f64], delta: f64, f: &[f64], out: &mut Vec<f64>) {
    out.extend(y.iter().zip(f).map(|(yi, fi)| yi + delta * fi));
}

/// States on the grid, including the history rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub dim: usize,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn from_rows(grid: TimeGrid, dim: usize, states: Vec<f64>) -> Result<Self> {
        if states.len() != (grid.steps + grid.history + 1) * dim {
            return Err(Error::invalid("state buffer does not match grid"));
        }
        Ok(Self { grid, dim, states })
    }

    /// State at grid index `l` in `-R ..= L`.
    pub fn state(&self, l: isize) -> &[f64] {
        let i = (l + self.grid.history as isize) as usize * self.dim;
        &self.states[i..i + self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.steps as isize)
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<isize> {
        -(self.grid.history as isize)..=self.grid.steps as isize
    }

    /// Piecewise-linear interpolant at `t`.
    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        let g = &self.grid;
        let lo = g.time(-(g.history as isize));
        let hi = g.end();
        let slack = LAG_TOL * g.delta;
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::invalid(format!("t={t} outside [{lo}, {hi}]")));
        }
        if let Some(k) = g.index_of(t) {
            let k = k.clamp(-(g.history as isize), g.steps as isize);
            return Ok(self.state(k).to_vec());
        }
        let k = ((t - g.t0) / g.delta).floor() as isize;
        let k = k.clamp(-(g.history as isize), g.steps as isize - 1);
        let w = (t - g.time(k)) / g.delta;
        let (a, b) = (self.state(k), self.state(k + 1));
        Ok(a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect())
    }

    /// `y(t - s)`.
    pub fn evaluate_delayed(&self, t: f64, s: f64) -> Result<Vec<f64>> {
        self.evaluate(t - s)
    }

    /// CSV with header `t,y1,...,ym` and one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("y{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for l in self.indices() {
            let row: Vec<String> = self.state(l).iter().map(|x| fmt_f64(*x)).collect();
            writeln!(w, "{},{}", fmt_f64(self.grid.time(l)), row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Explicit Euler integration of `y' = F(t, y_t)` with initial data on the
/// history window.
pub fn euler_solve(field: &dyn VectorField, init: &InitialData, grid: &TimeGrid) -> Result<Trajectory> {
    let m = field.dim();
    init.check(grid, m)?;
    let tau = field.max_delay();
    if (grid.tau() - tau).abs() > LAG_TOL * tau.max(grid.delta) {
        return Err(Error::GridAlignment(format!(
            "grid history {} does not match field delay {tau}",
            grid.tau()
        )));
    }
    let r = grid.history;
    let mut states = Vec::with_capacity((grid.steps + r + 1) * m);
    for i in 0..=r {
        states.extend_from_slice(init.row(i));
    }
    let mut f = vec![0.0; m];
    for l in 0..grid.steps {
        let t = grid.time(l as isize);
        let end = (l + r + 1) * m;
        {
            let hist = History::on_grid(grid, &states[..end], m, -(r as isize), l as isize, false);
            field.eval(t, &hist, &mut f)?;
        }
        let start = end - m;
        let y: Vec<f64> = states[start..end].to_vec();
        euler_update(&y, grid.delta, &f, &mut states);
        if states[end..].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: l + 1, t: grid.time(l as isize + 1) });
        }
    }
    Trajectory::from_rows(*grid, m, states)
}

/// Result of comparing a trajectory with the a-priori growth bounds.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    /// Largest `|y(t)| - bound(t)` over the grid.
    pub max_excess: f64,
    pub violations: usize,
    /// Same for the difference of two solutions, when a second one is given.
    pub max_excess_difference: Option<f64>,
    pub violations_difference: usize,
}

impl GrowthReport {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.violations_difference == 0
    }
}

const GROWTH_SLACK: f64 = 1e-12;

/// Checks `|y(t)| <= |u| e^{Kt} + (A/K)(e^{Kt} - 1)` and, given a second
/// solution from data `v`, `|y(t;u) - y(t;v)| <= |u - v| e^{Kt}`.
pub fn growth_bound_check(
    traj: &Trajectory,
    field: &dyn VectorField,
    init: &InitialData,
    other: Option<(&Trajectory, &InitialData)>,
) -> GrowthReport {
    let k = field.lipschitz();
    let a = field.zero_bound();
    let u = init.sup_norm();
    let g = &traj.grid;
    let mut report = GrowthReport {
        max_excess: f64::NEG_INFINITY,
        violations: 0,
        max_excess_difference: None,
        violations_difference: 0,
    };
    let du = other.map(|(_, v)| init.sup_distance(v, g.history + 1));
    for l in 0..=g.steps as isize {
        let t = g.time(l) - g.t0;
        let ekt = (k * t).exp();
        let growth = if k > 0.0 { (ekt - 1.0) / k } else { t };
        let bound = u * ekt + a * growth;
        let excess = norm_inf(traj.state(l)) - bound;
        report.max_excess = report.max_excess.max(excess);
        if excess > GROWTH_SLACK * bound.max(1.0) {
            report.violations += 1;
        }
        if let (Some((z, _)), Some(du)) = (other, du) {
            let bound = du * ekt;
            let excess = dist_inf(traj.state(l), z.state(l)) - bound;
            let m = report.max_excess_difference.get_or_insert(f64::NEG_INFINITY);
            *m = m.max(excess);
            if excess > GROWTH_SLACK * bound.max(1.0) {
                report.violations_difference += 1;
            }
        }
    }
    report
}
