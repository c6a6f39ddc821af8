//! Concrete vector fields.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dde_core::{History, VectorField};
use crate::delay_lib::Delay;
use crate::error::{Error, Result};

/// Named field builder plus its parameters, as stored in spec files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// `F = 0`.
#[derive(Debug, Clone)]
pub struct ZeroField {
    dim: usize,
    tau: f64,
}

impl ZeroField {
    pub fn new(dim: usize, tau: f64) -> Self {
        Self { dim, tau }
    }
}

impl VectorField for ZeroField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn max_delay(&self) -> f64 {
        self.tau
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn zero_bound(&self) -> f64 {
        0.0
    }
    fn eval(&self, _t: f64, _hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
    fn descriptor(&self) -> Option<FieldDescriptor> {
        Some(FieldDescriptor { name: "zero".into(), params: json!({}) })
    }
}

/// `F(t, y_t) = k0 * y(t - tau)` componentwise.
#[derive(Debug, Clone)]
pub struct LinearDelay {
    dim: usize,
    k0: f64,
    tau: f64,
}

impl LinearDelay {
    pub fn new(dim: usize, k0: f64, tau: f64) -> Self {
        Self { dim, k0, tau }
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }
}

impl VectorField for LinearDelay {
    fn dim(&self) -> usize {
        self.dim
    }
    fn max_delay(&self) -> f64 {
        self.tau
    }
    fn lipschitz(&self) -> f64 {
        self.k0.abs()
    }
    fn zero_bound(&self) -> f64 {
        0.0
    }
    fn delays(&self) -> Vec<Delay> {
        vec![Delay::Fixed(self.tau)]
    }
    fn eval(&self, _t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        let y = hist.lag(self.tau)?;
        for (o, v) in out.iter_mut().zip(y) {
            *o = self.k0 * v;
        }
        Ok(())
    }
    fn descriptor(&self) -> Option<FieldDescriptor> {
        Some(FieldDescriptor { name: "linear-delay".into(), params: json!({ "k0": self.k0 }) })
    }
}

/// `F_i = s * tanh(sum_j a_ij y_j(t) + sum_j b_ij y_j(t - tau) + c_i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TanhDelay {
    pub scale: f64,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub tau: f64,
}

impl TanhDelay {
    pub fn new(scale: f64, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<f64>, tau: f64) -> Result<Self> {
        let m = c.len();
        let square = |w: &Vec<Vec<f64>>| w.len() == m && w.iter().all(|r| r.len() == m);
        if m == 0 || !square(&a) || !square(&b) {
            return Err(Error::invalid("tanh field needs square m x m weights and m offsets"));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::invalid("tanh field needs a non-negative delay"));
        }
        Ok(Self { scale, a, b, c, tau })
    }

    /// Random weights in `[-1, 1]` and scale in `[0.5, 2]`.
    pub fn random<R: Rng>(dim: usize, tau: f64, rng: &mut R) -> Self {
        let mat = |rng: &mut R| -> Vec<Vec<f64>> {
            (0..dim).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect()
        };
        let a = mat(rng);
        let b = mat(rng);
        let c = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let scale = rng.gen_range(0.5..=2.0);
        Self { scale, a, b, c, tau }
    }
}

impl VectorField for TanhDelay {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn max_delay(&self) -> f64 {
        self.tau
    }
    fn lipschitz(&self) -> f64 {
        let rows = self.a.iter().zip(&self.b).map(|(ra, rb)| {
            ra.iter().chain(rb).map(|x| x.abs()).sum::<f64>()
        });
        self.scale.abs() * rows.fold(0.0, f64::max)
    }
    fn zero_bound(&self) -> f64 {
        self.scale.abs() * self.c.iter().fold(0.0f64, |m, c| m.max(c.tanh().abs()))
    }
    fn delays(&self) -> Vec<Delay> {
        vec![Delay::Fixed(self.tau)]
    }
    fn eval(&self, _t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        let now = hist.current();
        let past = hist.lag(self.tau)?;
        for (i, o) in out.iter_mut().enumerate() {
            let z: f64 = self.a[i].iter().zip(now).map(|(w, y)| w * y).sum::<f64>()
                + self.b[i].iter().zip(past).map(|(w, y)| w * y).sum::<f64>()
                + self.c[i];
            *o = self.scale * z.tanh();
        }
        Ok(())
    }
    fn descriptor(&self) -> Option<FieldDescriptor> {
        Some(FieldDescriptor {
            name: "tanh-delay".into(),
            params: json!({ "scale": self.scale, "a": self.a, "b": self.b, "c": self.c }),
        })
    }
}

pub type Forcing = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// `F(t, y_t) + g(t)` for a forcing `g` with `sup |g| <= forcing_sup`.
#[derive(Clone)]
pub struct ForcedField {
    base: Arc<dyn VectorField>,
    forcing: Forcing,
    forcing_sup: f64,
}

impl ForcedField {
    pub fn new(base: Arc<dyn VectorField>, forcing: Forcing, forcing_sup: f64) -> Self {
        Self { base, forcing, forcing_sup }
    }

    /// Adds the same `g(t)` to every component.
    pub fn scalar(base: Arc<dyn VectorField>, g: impl Fn(f64) -> f64 + Send + Sync + 'static, sup: f64) -> Self {
        let forcing: Forcing = Arc::new(move |t, out: &mut [f64]| {
            let v = g(t);
            for o in out {
                *o += v;
            }
        });
        Self::new(base, forcing, sup)
    }

    pub fn forcing_sup(&self) -> f64 {
        self.forcing_sup
    }
}

impl fmt::Debug for ForcedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForcedField").field("forcing_sup", &self.forcing_sup).finish()
    }
}

impl VectorField for ForcedField {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn max_delay(&self) -> f64 {
        self.base.max_delay()
    }
    fn lipschitz(&self) -> f64 {
        self.base.lipschitz()
    }
    fn zero_bound(&self) -> f64 {
        self.base.zero_bound() + self.forcing_sup
    }
    fn delays(&self) -> Vec<Delay> {
        self.base.delays()
    }
    fn eval(&self, t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        self.base.eval(t, hist, out)?;
        (self.forcing)(t, out);
        Ok(())
    }
}

pub type DelayedMap = Arc<dyn Fn(f64, &[&[f64]], &mut [f64]) + Send + Sync>;

/// `F(t, y_t) = f(t, y(t), y(t - tau_1(t)), ..., y(t - tau_k(t)))` for an
/// arbitrary map `f` and a list of delays.
#[derive(Clone)]
pub struct DelayedArgumentField {
    pub dim: usize,
    pub tau: f64,
    pub delays: Vec<Delay>,
    pub lipschitz: f64,
    pub zero_bound: f64,
    pub map: DelayedMap,
}

impl fmt::Debug for DelayedArgumentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayedArgumentField")
            .field("dim", &self.dim)
            .field("tau", &self.tau)
            .field("delays", &self.delays)
            .finish()
    }
}

impl VectorField for DelayedArgumentField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn max_delay(&self) -> f64 {
        self.tau
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn zero_bound(&self) -> f64 {
        self.zero_bound
    }
    fn delays(&self) -> Vec<Delay> {
        self.delays.clone()
    }
    fn eval(&self, t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        let mut args = Vec::with_capacity(self.delays.len() + 1);
        args.push(hist.current());
        for d in &self.delays {
            args.push(hist.lag(d.eval(t)?)?);
        }
        (self.map)(t, &args, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde_core::{euler_solve, growth_bound_check, InitialData, TimeGrid};
    use crate::rng::stream;

    #[test]
    fn tanh_constants() {
        let f = TanhDelay::new(2.0, vec![vec![0.5, -0.25], vec![0.0, 1.0]], vec![vec![0.1, 0.0], vec![-1.0, 0.5]], vec![0.0, 1.0], 0.5).unwrap();
        assert_eq!(f.lipschitz(), 2.0 * 2.5);
        assert_eq!(f.zero_bound(), 2.0 * 1.0f64.tanh());
        assert!(TanhDelay::new(1.0, vec![vec![1.0]], vec![vec![1.0, 2.0]], vec![0.0], 0.1).is_err());
    }

    #[test]
    fn random_tanh_respects_growth_bounds() {
        let mut rng = stream(3, 0);
        for _ in 0..5 {
            let f = TanhDelay::random(2, 0.25, &mut rng);
            let g = TimeGrid::from_horizon(0.0, 1.0, 100, 0.25).unwrap();
            let u = InitialData::Constant(vec![0.3, -1.0]);
            let v = InitialData::Constant(vec![0.2, 0.4]);
            let a = euler_solve(&f, &u, &g).unwrap();
            let b = euler_solve(&f, &v, &g).unwrap();
            assert!(growth_bound_check(&a, &f, &u, Some((&b, &v))).holds());
        }
    }

    #[test]
    fn forcing_adds_to_base() {
        let base: Arc<dyn VectorField> = Arc::new(ZeroField::new(1, 0.0));
        let f = ForcedField::scalar(base, |_| 0.5, 0.5);
        let g = TimeGrid::from_horizon(0.0, 1.0, 4, 0.0).unwrap();
        let tr = euler_solve(&f, &InitialData::Constant(vec![0.0]), &g).unwrap();
        assert_eq!(tr.final_state()[0], 0.5);
        assert_eq!(f.zero_bound(), 0.5);
    }

    #[test]
    fn descriptors_round_trip_through_json() {
        let d = LinearDelay::new(1, -2.0, 1.0).descriptor().unwrap();
        let s = serde_json::to_string(&d).unwrap();
        let back: FieldDescriptor = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.params["k0"], -2.0);
    }
}
