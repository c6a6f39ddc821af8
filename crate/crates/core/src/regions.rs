//! Labels points of the `(K, tau)` plane by what is known about the
//! expressiveness of the corresponding neural DDEs.

use std::fmt;
use std::f64::consts::E;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::morse::{separation_constants, SeparationInputs};

const CONDITION_TOL: f64 = 1e-12;

/// Problem constants needed to place the non-universal strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBundle {
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "M")]
    pub m_bound: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub r0: f64,
    pub r1: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionQuery {
    #[serde(rename = "K")]
    pub k: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    #[serde(rename = "K_psi")]
    pub k_psi: f64,
    pub w: f64,
    pub wt: f64,
    pub constants: Option<ConstantsBundle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "UE_nonaugmented")]
    UeNonAugmented,
    #[serde(rename = "UE_augmented")]
    UeAugmented,
    #[serde(rename = "nUA")]
    NotUniversal,
    #[serde(rename = "unknown")]
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::UeNonAugmented => "UE_nonaugmented",
            Label::UeAugmented => "UE_augmented",
            Label::NotUniversal => "nUA",
            Label::Unknown => "unknown",
        }
    }

    pub fn is_ue(self) -> bool {
        matches!(self, Label::UeNonAugmented | Label::UeAugmented)
    }

    fn color(self) -> &'static str {
        match self {
            Label::UeNonAugmented => "#2b83ba",
            Label::UeAugmented => "#abdda4",
            Label::NotUniversal => "#d7191c",
            Label::Unknown => "#eeeeee",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionLabel {
    pub label: Label,
    pub justification: String,
}

/// Each sufficient condition evaluated on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicates {
    pub ue_nonaugmented: Option<String>,
    pub ue_augmented: Option<String>,
    pub not_universal: Option<String>,
}

fn validate(q: &RegionQuery) -> Result<()> {
    let vals = [q.k, q.tau, q.horizon, q.k_psi, q.w, q.wt];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("region query values must be finite"));
    }
    if q.k < 0.0 || q.tau < 0.0 || q.horizon <= 0.0 || q.k_psi < 0.0 {
        return Err(Error::invalid("need K >= 0, tau >= 0, T > 0, K_psi >= 0"));
    }
    if q.tau > q.horizon {
        return Err(Error::invalid(format!("tau={} exceeds T={}", q.tau, q.horizon)));
    }
    if q.n == 0 || q.m == 0 || q.q == 0 {
        return Err(Error::invalid("dimensions must be positive"));
    }
    if q.w == 0.0 || q.wt == 0.0 {
        return Err(Error::invalid("weight scales must be nonzero"));
    }
    Ok(())
}

pub fn predicates(q: &RegionQuery) -> Result<Predicates> {
    validate(q)?;
    let ratio = q.k_psi / (q.w * q.wt).abs();
    let wide = q.n.max(q.q);

    let need = 2.0 * (1.0 + ratio);
    let ue_nonaugmented = (q.m >= wide && q.tau > 0.0 && q.k * q.tau >= need * (1.0 - CONDITION_TOL))
        .then(|| format!("m>=max(n;q) and K*tau={} >= 2(1+K_psi/(w*wt))={}", q.k * q.tau, need));

    let ue_augmented = (q.m >= q.n + q.q && q.k * q.horizon >= ratio * (1.0 - CONDITION_TOL))
        .then(|| format!("m>=n+q and K*T={} >= K_psi/(w*wt)={}", q.k * q.horizon, ratio));

    let not_universal = if q.m > wide {
        None
    } else if q.tau == 0.0 {
        Some("m<=max(n;q) and tau=0: non-augmented ODE".to_string())
    } else if let (Some(c), true) = (q.constants, q.k > 0.0) {
        let inputs = SeparationInputs {
            k: q.k,
            a: c.a,
            horizon: q.horizon,
            m_bound: c.m_bound,
            r0: c.r0,
            r1: c.r1,
            eps: c.eps,
            w: q.w.abs(),
            wt: q.wt.abs(),
            c2: c.c2,
        };
        match separation_constants(&inputs) {
            Ok(s) if q.tau <= s.tau0 && q.k * q.tau * E < 1.0 => Some(format!(
                "m<=max(n;q) and tau={} <= tau0={} (C2={}; K*tau*e={})",
                q.tau,
                s.tau0,
                c.c2,
                q.k * q.tau * E
            )),
            _ => None,
        }
    } else {
        None
    };
    Ok(Predicates { ue_nonaugmented, ue_augmented, not_universal })
}

/// Universal-embedding conditions are checked first, then the
/// non-universal strip; anything else is unknown.
pub fn classify_region(q: &RegionQuery) -> Result<RegionLabel> {
    let p = predicates(q)?;
    let (label, justification) = if let Some(j) = p.ue_nonaugmented {
        (Label::UeNonAugmented, j)
    } else if let Some(j) = p.ue_augmented {
        (Label::UeAugmented, j)
    } else if let Some(j) = p.not_universal {
        (Label::NotUniversal, j)
    } else {
        (Label::Unknown, "no sufficient condition applies".to_string())
    };
    Ok(RegionLabel { label, justification })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub k_min: f64,
    pub k_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub resolution: usize,
    /// Everything but `K` and `tau`.
    pub base: RegionQuery,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionCell {
    #[serde(rename = "K")]
    pub k: f64,
    pub tau: f64,
    pub label: Label,
    pub justification: String,
    /// Both a UE condition and the nUA condition hold.
    pub overlap: bool,
}

/// Cells in row-major order, one row per `tau`, `K` increasing along a row.
#[derive(Debug, Clone, Serialize)]
pub struct RegionGrid {
    pub ks: Vec<f64>,
    pub taus: Vec<f64>,
    pub cells: Vec<RegionCell>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn sweep_regions(spec: &SweepSpec) -> Result<RegionGrid> {
    if spec.resolution == 0 || !(spec.k_min <= spec.k_max) || !(spec.tau_min <= spec.tau_max) {
        return Err(Error::invalid("sweep needs a positive resolution and ordered ranges"));
    }
    let ks = linspace(spec.k_min, spec.k_max, spec.resolution);
    let taus = linspace(spec.tau_min, spec.tau_max, spec.resolution);
    let res = spec.resolution;
    let cells = (0..res * res)
        .into_par_iter()
        .map(|i| {
            let q = RegionQuery { k: ks[i % res], tau: taus[i / res], ..spec.base };
            let p = predicates(&q)?;
            let overlap = (p.ue_nonaugmented.is_some() || p.ue_augmented.is_some()) && p.not_universal.is_some();
            let l = classify_region(&q)?;
            Ok(RegionCell { k: q.k, tau: q.tau, label: l.label, justification: l.justification, overlap })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionGrid { ks, taus, cells })
}

impl RegionGrid {
    pub fn cell(&self, k_index: usize, tau_index: usize) -> &RegionCell {
        &self.cells[tau_index * self.ks.len() + k_index]
    }

    pub fn overlaps(&self) -> usize {
        self.cells.iter().filter(|c| c.overlap).count()
    }

    pub fn count(&self, label: Label) -> usize {
        self.cells.iter().filter(|c| c.label == label).count()
    }

    /// Whether, along every row, a UE cell is followed only by UE cells.
    pub fn ue_upward_closed_in_k(&self) -> bool {
        (0..self.taus.len()).all(|j| {
            let row: Vec<bool> = (0..self.ks.len()).map(|i| self.cell(i, j).label.is_ue()).collect();
            row.windows(2).all(|w| !w[0] || w[1])
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "K,tau,label,justification")?;
        for c in &self.cells {
            writeln!(w, "{},{},{},\"{}\"", fmt_f64(c.k), fmt_f64(c.tau), c.label, c.justification.replace('"', "'"))?;
        }
        Ok(())
    }

    /// Three-colour map, `K` to the right and `tau` upward.
    pub fn to_svg(&self) -> String {
        let (nk, nt) = (self.ks.len(), self.taus.len());
        let cell = (600 / nk.max(nt)).max(1);
        let (pw, ph) = (cell * nk, cell * nt);
        let (ml, mb, mt) = (60, 50, 20);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#,
            pw + ml + 170,
            ph + mb + mt
        );
        for j in 0..nt {
            for i in 0..nk {
                let c = self.cell(i, j);
                let y = mt + (nt - 1 - j) * cell;
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{y}" width="{cell}" height="{cell}" fill="{}"/>"#,
                    ml + i * cell,
                    c.label.color()
                );
            }
        }
        let (k0, k1) = (self.ks[0], self.ks[nk - 1]);
        let (t0, t1) = (self.taus[0], self.taus[nt - 1]);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">K: {k0} .. {k1}</text>"#, ml, ph + mt + 30);
        let _ = writeln!(
            s,
            r#"<text x="10" y="{}" font-size="12" transform="rotate(-90 10 {})">tau: {t0} .. {t1}</text>"#,
            mt + ph / 2,
            mt + ph / 2
        );
        for (n, l) in [Label::UeNonAugmented, Label::UeAugmented, Label::NotUniversal, Label::Unknown].iter().enumerate() {
            let y = mt + 20 * n;
            let _ = writeln!(s, r#"<rect x="{}" y="{y}" width="14" height="14" fill="{}"/>"#, ml + pw + 10, l.color());
            let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">{l}</text>"#, ml + pw + 30, y + 12);
        }
        s.push_str("</svg>\n");
        s
    }
}
