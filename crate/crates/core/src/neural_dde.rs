//! Neural DDE maps `Phi(x) = W~ y(T) + b~` where `y` solves the DDE from the
//! constant history `W x + b`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dde_core::{dist_inf, euler_solve, History, InitialData, TimeGrid, Trajectory, VectorField};
use crate::embedding;
use crate::error::{Error, Result};
use crate::fields::{FieldDescriptor, LinearDelay, TanhDelay, ZeroField};
use crate::linalg;

/// `x -> W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl AffineMap {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::invalid(format!(
                "bias length {} does not match {} weight rows",
                bias.len(),
                weight.nrows()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn linear(weight: DMatrix<f64>) -> Self {
        let bias = DVector::zeros(weight.nrows());
        Self { weight, bias }
    }

    pub fn from_rows(rows: &[Vec<f64>], bias: &[f64]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("weight matrix must be a non-empty rectangle"));
        }
        let w = DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied());
        Self::new(w, DVector::from_column_slice(bias))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weight.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = &self.weight * DVector::from_column_slice(x) + &self.bias;
        y.iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    Augmented,
    NonAugmented,
}

/// Augmented exactly when the state is wider than both input and output.
pub fn classify_architecture(n: usize, m: usize, q: usize) -> Architecture {
    if m > n.max(q) {
        Architecture::Augmented
    } else {
        Architecture::NonAugmented
    }
}

/// Whether both weight matrices have full rank.
pub fn in_full_rank_set(w: &DMatrix<f64>, w_tilde: &DMatrix<f64>) -> bool {
    linalg::rank(w) == w.nrows().min(w.ncols()) && linalg::rank(w_tilde) == w_tilde.nrows().min(w_tilde.ncols())
}

/// A neural DDE with input map, field, delay, horizon and output map.
#[derive(Clone)]
pub struct NeuralDde {
    pub input: AffineMap,
    pub field: Arc<dyn VectorField>,
    pub tau: f64,
    pub horizon: f64,
    pub output: AffineMap,
}

impl fmt::Debug for NeuralDde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NeuralDde")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("q", &self.q())
            .field("tau", &self.tau)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl NeuralDde {
    pub fn new(input: AffineMap, field: Arc<dyn VectorField>, tau: f64, horizon: f64, output: AffineMap) -> Result<Self> {
        let m = field.dim();
        if input.output_dim() != m || output.input_dim() != m {
            return Err(Error::invalid(format!(
                "maps {}x{} and {}x{} do not fit a state of dimension {m}",
                input.output_dim(),
                input.input_dim(),
                output.output_dim(),
                output.input_dim()
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if !(tau >= 0.0 && tau <= horizon) {
            return Err(Error::invalid(format!("need 0 <= tau <= T, got tau={tau}, T={horizon}")));
        }
        if (field.max_delay() - tau).abs() > 1e-12 * tau.max(1.0) {
            return Err(Error::invalid(format!("field delay {} differs from tau={tau}", field.max_delay())));
        }
        Ok(Self { input, field, tau, horizon, output })
    }

    pub fn n(&self) -> usize {
        self.input.input_dim()
    }

    pub fn m(&self) -> usize {
        self.field.dim()
    }

    pub fn q(&self) -> usize {
        self.output.output_dim()
    }

    pub fn architecture(&self) -> Architecture {
        classify_architecture(self.n(), self.m(), self.q())
    }

    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        TimeGrid::from_horizon(0.0, self.horizon, steps, self.tau)
    }

    pub fn trajectory(&self, x: &[f64], steps: usize) -> Result<Trajectory> {
        if x.len() != self.n() {
            return Err(Error::invalid(format!("input has length {}, expected {}", x.len(), self.n())));
        }
        let grid = self.grid(steps)?;
        let init = InitialData::Constant(self.input.apply(x));
        euler_solve(self.field.as_ref(), &init, &grid)
    }

    /// `Phi(x)` with the Euler scheme on `steps` intervals.
    pub fn forward(&self, x: &[f64], steps: usize) -> Result<Vec<f64>> {
        let tr = self.trajectory(x, steps)?;
        Ok(self.output.apply(tr.final_state()))
    }

    pub fn to_config(&self) -> Result<NeuralDdeConfig> {
        let field = self
            .field
            .descriptor()
            .ok_or_else(|| Error::invalid("field has no named builder"))?;
        Ok(NeuralDdeConfig {
            n: self.n(),
            m: self.m(),
            q: self.q(),
            tau: self.tau,
            horizon: self.horizon,
            w: self.input.rows(),
            b: self.input.bias.iter().copied().collect(),
            w_tilde: self.output.rows(),
            b_tilde: self.output.bias.iter().copied().collect(),
            field,
        })
    }
}

/// Serialized form of a neural DDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralDdeConfig {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub tau: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(rename = "W_tilde")]
    pub w_tilde: Vec<Vec<f64>>,
    pub b_tilde: Vec<f64>,
    pub field: FieldDescriptor,
}

fn param<T: serde::de::DeserializeOwned>(d: &FieldDescriptor, key: &str) -> Result<T> {
    let v = d
        .params
        .get(key)
        .ok_or_else(|| Error::invalid(format!("field '{}' needs parameter '{key}'", d.name)))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::invalid(format!("parameter '{key}': {e}")))
}

/// Builds a field from its descriptor. Embedding builders return the whole
/// network they construct; the field is taken from it.
pub fn build_field(d: &FieldDescriptor, m: usize, tau: f64, horizon: f64) -> Result<Arc<dyn VectorField>> {
    let f: Arc<dyn VectorField> = match d.name.as_str() {
        "zero" => Arc::new(ZeroField::new(m, tau)),
        "linear-delay" => Arc::new(LinearDelay::new(m, param(d, "k0")?, tau)),
        "tanh-delay" => Arc::new(TanhDelay::new(
            param(d, "scale")?,
            param(d, "a")?,
            param(d, "b")?,
            param(d, "c")?,
            tau,
        )?),
        name if name.starts_with("embed-") => embedding::field_from_descriptor(d, m, tau, horizon)?,
        other => return Err(Error::invalid(format!("unknown field builder '{other}'"))),
    };
    if f.dim() != m {
        return Err(Error::invalid(format!("field '{}' has dimension {}, spec says m={m}", d.name, f.dim())));
    }
    Ok(f)
}

impl NeuralDdeConfig {
    pub fn build(&self) -> Result<NeuralDde> {
        let input = AffineMap::from_rows(&self.w, &self.b)?;
        let output = AffineMap::from_rows(&self.w_tilde, &self.b_tilde)?;
        if input.input_dim() != self.n || input.output_dim() != self.m || output.output_dim() != self.q {
            return Err(Error::invalid("declared n, m, q do not match the weight shapes"));
        }
        let field = build_field(&self.field, self.m, self.tau, self.horizon)?;
        NeuralDde::new(input, field, self.tau, self.horizon, output)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// `|W~| T delta_sup`.
    pub theory_bound: f64,
    /// `|W~| delta_sup (e^{KT} - 1) / K`, which also accounts for the two
    /// solutions drifting apart through the state dependence of the field.
    pub gronwall_bound: f64,
    pub empirical_max: f64,
    /// Largest `|F - f|` seen along the visited trajectories.
    pub observed_field_gap: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Compares a network with a perturbed copy whose field differs by at most
/// `delta_sup`, over the given input samples.
pub fn parameterized_gap_bound(
    general: &NeuralDde,
    perturbed: &NeuralDde,
    delta_sup: f64,
    samples: &[Vec<f64>],
    steps: usize,
) -> Result<GapReport> {
    if general.input != perturbed.input
        || general.output != perturbed.output
        || general.tau != perturbed.tau
        || general.horizon != perturbed.horizon
    {
        return Err(Error::invalid("gap comparison needs identical maps, delay and horizon"));
    }
    let grid = general.grid(steps)?;
    let m = general.m();
    let mut empirical: f64 = 0.0;
    let mut field_gap: f64 = 0.0;
    let (mut fa, mut fb) = (vec![0.0; m], vec![0.0; m]);
    for x in samples {
        let ta = general.trajectory(x, steps)?;
        let tb = perturbed.trajectory(x, steps)?;
        let out_a = general.output.apply(ta.final_state());
        let out_b = perturbed.output.apply(tb.final_state());
        empirical = empirical.max(dist_inf(&out_a, &out_b));
        let r = grid.history as isize;
        let rows: Vec<f64> = ta.indices().flat_map(|l| ta.state(l).to_vec()).collect();
        for l in 0..grid.steps as isize {
            let end = (l + r + 1) as usize * m;
            let hist = History::on_grid(&grid, &rows[..end], m, -r, l, false);
            let t = grid.time(l);
            general.field.eval(t, &hist, &mut fa)?;
            perturbed.field.eval(t, &hist, &mut fb)?;
            field_gap = field_gap.max(dist_inf(&fa, &fb));
        }
    }
    if field_gap > delta_sup * (1.0 + 1e-9) + 1e-15 {
        return Err(Error::Precondition(format!(
            "fields differ by {field_gap} along trajectories, more than delta_sup={delta_sup}"
        )));
    }
    let wn = linalg::norm_inf(&general.output.weight);
    let t = general.horizon;
    let k = general.field.lipschitz().max(perturbed.field.lipschitz());
    let theory = wn * t * delta_sup;
    let gronwall = if k > 0.0 { wn * delta_sup * ((k * t).exp() - 1.0) / k } else { theory };
    let slack = 10.0 * grid.delta;
    Ok(GapReport {
        theory_bound: theory,
        gronwall_bound: gronwall,
        empirical_max: empirical,
        observed_field_gap: field_gap,
        slack,
        holds: empirical <= theory + slack,
    })
}
