//! The Euler scheme of a neural DDE read as a feed-forward network whose
//! layer `l + 1` sees layer `l` and the layers picked out by the delays.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::dde_core::{euler_update, History, TimeGrid, VectorField};
use crate::delay_lib::{grid_alignment_table, AlignmentTable};
use crate::error::{Error, Result};
use crate::neural_dde::{AffineMap, NeuralDde};

/// `h_{l+1} = h_l + delta * F(t_l, h)`, with `h_0 = W x + b` and every
/// reference to a layer before `h_0` resolved to `h_0`.
#[derive(Clone)]
pub struct DenseResNet {
    pub grid: TimeGrid,
    pub table: AlignmentTable,
    pub input: AffineMap,
    pub output: AffineMap,
    field: Arc<dyn VectorField>,
}

/// Layer view of `net` on `steps` Euler steps. Fails if any declared delay
/// misses the grid.
pub fn discretize(net: &NeuralDde, steps: usize) -> Result<DenseResNet> {
    let grid = net.grid(steps)?;
    let table = grid_alignment_table(&net.field.delays(), &grid)?;
    Ok(DenseResNet {
        grid,
        table,
        input: net.input.clone(),
        output: net.output.clone(),
        field: net.field.clone(),
    })
}

impl DenseResNet {
    pub fn layers(&self) -> usize {
        self.grid.steps
    }

    /// Layers read by the update producing `h_{l+1}`: `h_l` first, then one
    /// per delay.
    pub fn layer_arguments(&self, l: usize) -> Vec<usize> {
        let mut v = vec![l];
        v.extend(self.table.alpha[l].iter().map(|&a| a.max(0) as usize));
        v
    }

    /// `h_0, ..., h_L` from `h_0`.
    pub fn forward_layers(&self, h0: &[f64]) -> Result<Vec<Vec<f64>>> {
        let m = self.field.dim();
        if h0.len() != m {
            return Err(Error::invalid(format!("layer width {m}, got {}", h0.len())));
        }
        let mut rows = Vec::with_capacity((self.grid.steps + 1) * m);
        rows.extend_from_slice(h0);
        let mut f = vec![0.0; m];
        for l in 0..self.grid.steps {
            let end = (l + 1) * m;
            {
                let hist = History::on_grid(&self.grid, &rows[..end], m, 0, l as isize, true);
                self.field.eval(self.grid.time(l as isize), &hist, &mut f)?;
            }
            let h: Vec<f64> = rows[end - m..end].to_vec();
            euler_update(&h, self.grid.delta, &f, &mut rows);
        }
        Ok(rows.chunks(m).map(<[f64]>::to_vec).collect())
    }

    pub fn dense_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h0 = self.input.apply(x);
        let layers = self.forward_layers(&h0)?;
        Ok(self.output.apply(layers.last().expect("at least h_0")))
    }

    /// Text summary: sizes, then for each layer the delayed states it reads
    /// (`y_k`, before resolving negative indices) and the layers it uses.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "layers L = {}", self.grid.steps);
        let _ = writeln!(s, "step delta = {}", self.grid.delta);
        let _ = writeln!(s, "width m = {}", self.field.dim());
        let _ = writeln!(s, "delays: {}", self.table.labels.join(", "));
        for l in 0..self.grid.steps {
            let delayed: Vec<String> = self.table.alpha[l].iter().map(|a| format!("y{a}")).collect();
            let args: Vec<String> = self.layer_arguments(l).iter().map(|a| format!("h{a}")).collect();
            let _ = writeln!(s, "l={l}: delayed [{}] -> f({})", delayed.join(" "), args.join(", "));
        }
        s
    }
}
