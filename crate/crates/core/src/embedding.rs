//! Explicit neural DDEs that reproduce a given map `Psi`.
//!
//! Three constructions are provided:
//! * [`embed_basic`]: identity maps, `tau = T`, `y(T) = Psi(x)` exactly.
//! * [`embed_nonaugmented`]: state width `max(n, q)`, any `0 < tau <= T`,
//!   provided `K tau >= 2 (1 + K_Psi / (w w~))`.
//! * [`embed_augmented`]: state width at least `n + q`, any delay, provided
//!   `K T >= K_Psi / (w w~)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dde_core::{dist_inf, History, VectorField};
use crate::delay_lib::Delay;
use crate::error::{Error, Result};
use crate::fields::FieldDescriptor;
use crate::linalg::padded_identity;
use crate::neural_dde::{AffineMap, NeuralDde};
use crate::rng;

const LIPSCHITZ_PAIRS: usize = 10_000;
const LIPSCHITZ_SAFETY: f64 = 1.1;
/// Relative slack on the threshold conditions, for products like `K tau`
/// that are exact in real arithmetic but not in floating point.
const CONDITION_TOL: f64 = 1e-12;

/// Named target maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum TargetSpec {
    /// `x -> -x` on `R^dim`.
    Neg {
        #[serde(default = "one")]
        dim: usize,
    },
    /// `x -> a x + b`, scalar.
    Affine { a: f64, b: f64 },
    /// `x -> x^2`, scalar.
    Square,
    /// `x -> sin x`, scalar.
    Sin,
    /// `x -> sum_i (x_i - p_i)^2`, `R^n -> R`.
    Quadmin { p: Vec<f64> },
}

fn one() -> usize {
    1
}

pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A map `Psi: R^n -> R^q` on a closed box, with a Lipschitz constant in the
/// sup norm.
#[derive(Clone)]
pub struct TargetMap {
    pub name: String,
    pub n: usize,
    pub q: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lipschitz: f64,
    spec: Option<TargetSpec>,
    map: MapFn,
}

impl fmt::Debug for TargetMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetMap")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("q", &self.q)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl TargetMap {
    /// Custom map on `[lo, hi]`. Without a declared Lipschitz constant one is
    /// estimated from random difference quotients, inflated by 10%.
    pub fn new(
        name: impl Into<String>,
        q: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        lipschitz: Option<f64>,
        map: MapFn,
        seed: u64,
    ) -> Result<Self> {
        let n = lo.len();
        if n == 0 || q == 0 || hi.len() != n || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::invalid("target domain must be a non-empty box lo < hi"));
        }
        let mut t = Self { name: name.into(), n, q, lo, hi, lipschitz: 0.0, spec: None, map };
        t.lipschitz = match lipschitz {
            Some(k) if k >= 0.0 => k,
            Some(k) => return Err(Error::invalid(format!("Lipschitz constant must be >= 0, got {k}"))),
            None => estimate_lipschitz(&t, LIPSCHITZ_PAIRS, seed) * LIPSCHITZ_SAFETY,
        };
        Ok(t)
    }

    /// Named map on the box `[lo, hi]^n`.
    pub fn named(spec: TargetSpec, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid("target domain needs lo < hi"));
        }
        let reach = |p: f64| (lo - p).abs().max((hi - p).abs());
        let (name, n, q, k, map): (&str, usize, usize, f64, MapFn) = match &spec {
            TargetSpec::Neg { dim } => {
                ("neg", *dim, *dim, 1.0, Arc::new(|x: &[f64]| x.iter().map(|v| -v).collect()))
            }
            TargetSpec::Affine { a, b } => {
                let (a, b) = (*a, *b);
                ("affine", 1, 1, a.abs(), Arc::new(move |x: &[f64]| vec![a * x[0] + b]))
            }
            TargetSpec::Square => ("square", 1, 1, 2.0 * reach(0.0), Arc::new(|x: &[f64]| vec![x[0] * x[0]])),
            TargetSpec::Sin => ("sin", 1, 1, 1.0, Arc::new(|x: &[f64]| vec![x[0].sin()])),
            TargetSpec::Quadmin { p } => {
                let k = p.iter().map(|&pi| 2.0 * reach(pi)).sum();
                let p = p.clone();
                let f = move |x: &[f64]| vec![x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum()];
                ("quadmin", p_len(&spec), 1, k, Arc::new(f))
            }
        };
        if n == 0 {
            return Err(Error::invalid("target needs a positive input dimension"));
        }
        Ok(Self { name: name.into(), n, q, lo: vec![lo; n], hi: vec![hi; n], lipschitz: k, spec: Some(spec), map })
    }

    pub fn spec(&self) -> Option<&TargetSpec> {
        self.spec.as_ref()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok((self.map)(x))
    }

    /// `count` points spread along the diagonal of the box, endpoints included.
    pub fn diagonal_samples(&self, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|i| {
                let s = if count == 1 { 0.5 } else { i as f64 / (count - 1) as f64 };
                self.lo.iter().zip(&self.hi).map(|(a, b)| a + s * (b - a)).collect()
            })
            .collect()
    }

    fn descriptor(&self) -> Result<serde_json::Value> {
        let spec = self.spec.as_ref().ok_or_else(|| Error::invalid("custom target maps cannot be serialized"))?;
        Ok(json!({ "spec": spec, "lo": self.lo[0], "hi": self.hi[0] }))
    }

    fn from_descriptor(v: &serde_json::Value) -> Result<Self> {
        let spec: TargetSpec = serde_json::from_value(v["spec"].clone())
            .map_err(|e| Error::invalid(format!("target: {e}")))?;
        let lo = v["lo"].as_f64().unwrap_or(-2.0);
        let hi = v["hi"].as_f64().unwrap_or(2.0);
        Self::named(spec, lo, hi)
    }
}

fn p_len(spec: &TargetSpec) -> usize {
    match spec {
        TargetSpec::Quadmin { p } => p.len(),
        _ => 1,
    }
}

fn uniform_in<R: Rng>(lo: &[f64], hi: &[f64], rng: &mut R) -> Vec<f64> {
    lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect()
}

/// Largest sup-norm difference quotient of `psi` over random pairs in its box.
pub fn estimate_lipschitz(psi: &TargetMap, pairs: usize, seed: u64) -> f64 {
    let mut r = rng::stream(seed, 0x4c49_5053);
    let mut best: f64 = 0.0;
    for _ in 0..pairs {
        let x = uniform_in(&psi.lo, &psi.hi, &mut r);
        let z = uniform_in(&psi.lo, &psi.hi, &mut r);
        let d = dist_inf(&x, &z);
        if d > 0.0 {
            best = best.max(dist_inf(&(psi.map)(&x), &(psi.map)(&z)) / d);
        }
    }
    best
}

fn zero_value(psi: &TargetMap) -> Option<f64> {
    let zero = vec![0.0; psi.n];
    psi.eval(&zero).ok().map(|v| v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// `F(t, y_t) = (Psi(y(t - T)) - y(t - T)) / T`.
#[derive(Debug, Clone)]
pub struct BasicEmbeddingField {
    psi: TargetMap,
    horizon: f64,
}

impl VectorField for BasicEmbeddingField {
    fn dim(&self) -> usize {
        self.psi.n
    }
    fn max_delay(&self) -> f64 {
        self.horizon
    }
    fn lipschitz(&self) -> f64 {
        (self.psi.lipschitz + 1.0) / self.horizon
    }
    fn zero_bound(&self) -> f64 {
        zero_value(&self.psi).map_or(f64::INFINITY, |v| v / self.horizon)
    }
    fn delays(&self) -> Vec<Delay> {
        vec![Delay::Fixed(self.horizon)]
    }
    fn eval(&self, _t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        let y = hist.lag(self.horizon)?;
        let p = self.psi.eval(y)?;
        for ((o, pi), yi) in out.iter_mut().zip(&p).zip(y) {
            *o = (pi - yi) / self.horizon;
        }
        Ok(())
    }
    fn descriptor(&self) -> Option<FieldDescriptor> {
        Some(FieldDescriptor { name: "embed-basic".into(), params: json!({ "target": self.psi.descriptor().ok()? }) })
    }
}

/// Neural DDE with identity maps and `tau = T` whose time-`T` map is `Psi`.
pub fn embed_basic(psi: &TargetMap, horizon: f64) -> Result<NeuralDde> {
    if psi.n != psi.q {
        return Err(Error::invalid(format!("needs n = q, got n={} q={}", psi.n, psi.q)));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let id = AffineMap::linear(DMatrix::identity(psi.n, psi.n));
    let field = BasicEmbeddingField { psi: psi.clone(), horizon };
    NeuralDde::new(id.clone(), Arc::new(field), horizon, horizon, id)
}

/// Non-augmented construction: on `[0, tau]`,
/// `F = 2 (tau - t) / tau^2 * ((1/w~) Id Psi((1/w) Id y(t - tau)) - y(t - tau))`,
/// zero afterwards, and frozen at `t = 0` before.
#[derive(Debug, Clone)]
pub struct NonAugmentedField {
    psi: TargetMap,
    m: usize,
    tau: f64,
    k: f64,
    w: f64,
    wt: f64,
}

impl NonAugmentedField {
    fn weight(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        if t > self.tau {
            0.0
        } else {
            2.0 * (self.tau - t) / (self.tau * self.tau)
        }
    }
}

impl VectorField for NonAugmentedField {
    fn dim(&self) -> usize {
        self.m
    }
    fn max_delay(&self) -> f64 {
        self.tau
    }
    fn lipschitz(&self) -> f64 {
        self.k
    }
    fn zero_bound(&self) -> f64 {
        zero_value(&self.psi).map_or(f64::INFINITY, |v| 2.0 * v / (self.tau * self.wt.abs()))
    }
    fn delays(&self) -> Vec<Delay> {
        vec![Delay::Fixed(self.tau)]
    }
    fn eval(&self, t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        let c = self.weight(t);
        if c == 0.0 {
            out.fill(0.0);
            return Ok(());
        }
        let y = hist.lag(self.tau)?;
        let x: Vec<f64> = y[..self.psi.n].iter().map(|v| v / self.w).collect();
        let p = self.psi.eval(&x)?;
        for (i, o) in out.iter_mut().enumerate() {
            let target = if i < self.psi.q { p[i] / self.wt } else { 0.0 };
            *o = c * (target - y[i]);
        }
        Ok(())
    }
    fn descriptor(&self) -> Option<FieldDescriptor> {
        Some(FieldDescriptor {
            name: "embed-nonaugmented".into(),
            params: json!({ "target": self.psi.descriptor().ok()?, "K": self.k, "w": self.w, "wt": self.wt }),
        })
    }
}

fn check_scales(w: f64, wt: f64) -> Result<()> {
    if !(w.is_finite() && wt.is_finite() && w != 0.0 && wt != 0.0) {
        return Err(Error::invalid("weight scales w and w~ must be finite and nonzero"));
    }
    Ok(())
}

/// Non-augmented network `W = w Id_{m,n}`, `W~ = w~ Id_{q,m}`, zero biases.
/// `m` defaults to `max(n, q)`; a larger `m` pads with zero components.
pub fn embed_nonaugmented(
    psi: &TargetMap,
    tau: f64,
    k: f64,
    w: f64,
    wt: f64,
    horizon: f64,
    m: Option<usize>,
) -> Result<NeuralDde> {
    check_scales(w, wt)?;
    let base = psi.n.max(psi.q);
    let m = m.unwrap_or(base);
    if m < base {
        return Err(Error::invalid(format!("state width {m} below max(n, q) = {base}")));
    }
    if !(tau > 0.0 && tau <= horizon) {
        return Err(Error::invalid(format!("needs 0 < tau <= T, got tau={tau}, T={horizon}")));
    }
    let need = 2.0 * (1.0 + psi.lipschitz / (w * wt).abs());
    if k * tau < need * (1.0 - CONDITION_TOL) {
        return Err(Error::Precondition(format!("K tau = {} < 2 (1 + K_Psi/(w w~)) = {need}", k * tau)));
    }
    let field = NonAugmentedField { psi: psi.clone(), m, tau, k, w, wt };
    let input = AffineMap::linear(padded_identity(m, psi.n) * w);
    let output = AffineMap::linear(padded_identity(psi.q, m) * wt);
    NeuralDde::new(input, Arc::new(field), tau, horizon, output)
}

/// Augmented construction: components `n .. n+q` integrate
/// `Psi((1/w) y_{1..n}(t)) / (w~ T)`, everything else stays put.
#[derive(Debug, Clone)]
pub struct AugmentedField {
    psi: TargetMap,
    m: usize,
    tau: f64,
    horizon: f64,
    k: f64,
    w: f64,
    wt: f64,
}

impl VectorField for AugmentedField {
    fn dim(&self) -> usize {
        self.m
    }
    fn max_delay(&self) -> f64 {
        self.tau
    }
    fn lipschitz(&self) -> f64 {
        self.k
    }
    fn zero_bound(&self) -> f64 {
        zero_value(&self.psi).map_or(f64::INFINITY, |v| v / (self.wt.abs() * self.horizon))
    }
    fn eval(&self, _t: f64, hist: &History<'_>, out: &mut [f64]) -> Result<()> {
        let y = hist.current();
        let n = self.psi.n;
        let x: Vec<f64> = y[..n].iter().map(|v| v / self.w).collect();
        let p = self.psi.eval(&x)?;
        out.fill(0.0);
        let c = self.wt * self.horizon;
        for (o, pi) in out[n..n + self.psi.q].iter_mut().zip(&p) {
            *o = pi / c;
        }
        Ok(())
    }
    fn descriptor(&self) -> Option<FieldDescriptor> {
        Some(FieldDescriptor {
            name: "embed-augmented".into(),
            params: json!({ "target": self.psi.descriptor().ok()?, "K": self.k, "w": self.w, "wt": self.wt }),
        })
    }
}

/// Augmented network `W = w Id_{m,n}`, `W~ = (0 | w~ Id_q | 0)`, zero biases.
pub fn embed_augmented(
    psi: &TargetMap,
    tau: f64,
    k: f64,
    w: f64,
    wt: f64,
    horizon: f64,
    m: usize,
) -> Result<NeuralDde> {
    check_scales(w, wt)?;
    if m < psi.n + psi.q {
        return Err(Error::invalid(format!("augmented width {m} below n + q = {}", psi.n + psi.q)));
    }
    let need = psi.lipschitz / (w * wt).abs();
    if k * horizon < need * (1.0 - CONDITION_TOL) {
        return Err(Error::Precondition(format!("K T = {} < K_Psi/(w w~) = {need}", k * horizon)));
    }
    let field = AugmentedField { psi: psi.clone(), m, tau, horizon, k, w, wt };
    let input = AffineMap::linear(padded_identity(m, psi.n) * w);
    let mut out = DMatrix::zeros(psi.q, m);
    for i in 0..psi.q {
        out[(i, psi.n + i)] = wt;
    }
    let output = AffineMap::new(out, DVector::zeros(psi.q))?;
    NeuralDde::new(input, Arc::new(field), tau, horizon, output)
}

/// Rebuilds an embedding field from its descriptor.
pub fn field_from_descriptor(d: &FieldDescriptor, m: usize, tau: f64, horizon: f64) -> Result<Arc<dyn VectorField>> {
    let target = d.params.get("target").ok_or_else(|| Error::invalid("embedding field needs a target"))?;
    let psi = TargetMap::from_descriptor(target)?;
    let num = |key: &str| -> Result<f64> {
        d.params[key].as_f64().ok_or_else(|| Error::invalid(format!("embedding field needs '{key}'")))
    };
    let net = match d.name.as_str() {
        "embed-basic" => embed_basic(&psi, horizon)?,
        "embed-nonaugmented" => embed_nonaugmented(&psi, tau, num("K")?, num("w")?, num("wt")?, horizon, Some(m))?,
        "embed-augmented" => embed_augmented(&psi, tau, num("K")?, num("w")?, num("wt")?, horizon, m)?,
        other => return Err(Error::invalid(format!("unknown embedding '{other}'"))),
    };
    Ok(net.field)
}

/// Largest `|Phi(x) - Psi(x)|` over the samples.
pub fn max_error(net: &NeuralDde, psi: &TargetMap, samples: &[Vec<f64>], steps: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in samples {
        let got = net.forward(x, steps)?;
        worst = worst.max(dist_inf(&got, &psi.eval(x)?));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzAudit {
    pub declared: f64,
    pub max_quotient: f64,
}

/// Difference quotients of `field` over random constant histories drawn from
/// the box `[lo, hi]^m` at random times in `[0, horizon]`.
pub fn lipschitz_audit(
    field: &dyn VectorField,
    horizon: f64,
    lo: f64,
    hi: f64,
    pairs: usize,
    seed: u64,
) -> Result<LipschitzAudit> {
    let m = field.dim();
    let mut r = rng::stream(seed, 0x4155_4449);
    let (mut fy, mut fz) = (vec![0.0; m], vec![0.0; m]);
    let mut best: f64 = 0.0;
    let (lo_v, hi_v) = (vec![lo; m], vec![hi; m]);
    for _ in 0..pairs {
        let t = r.gen_range(0.0..=horizon);
        let y = uniform_in(&lo_v, &hi_v, &mut r);
        let z = uniform_in(&lo_v, &hi_v, &mut r);
        field.eval(t, &History::constant(&y), &mut fy)?;
        field.eval(t, &History::constant(&z), &mut fz)?;
        let d = dist_inf(&y, &z);
        if d > 0.0 {
            best = best.max(dist_inf(&fy, &fz) / d);
        }
    }
    Ok(LipschitzAudit { declared: field.lipschitz(), max_quotient: best })
}
