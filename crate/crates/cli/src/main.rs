//! `ndde` command line: runs single experiments and writes CSV, SVG and JSON
//! artifacts into `--out`.

mod params;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ndde::dde_core::{euler_solve, InitialData, TimeGrid, VectorField};
use ndde::delay_lib::{grid_alignment_table, Delay, DelayFunction, DelayKind};
use ndde::dense_resnet::discretize;
use ndde::embedding::{embed_augmented, embed_basic, embed_nonaugmented, TargetMap, TargetSpec};
use ndde::fields::{LinearDelay, TanhDelay, ZeroField};
use ndde::morse::{estimate_c2, separation_constants, SeparationInputs};
use ndde::neural_dde::{AffineMap, NeuralDde, NeuralDdeConfig};
use ndde::regions::{classify_region, sweep_regions, ConstantsBundle, Label, RegionQuery, SweepSpec};
use ndde::small_delay::{lambert_w, measure_attraction, AttractionHistory, Branch};
use ndde::{fmt_f64, rng};
use params::{List, Params};

/// Error surfaced to the user as one `error: kind=... msg="..."` line.
#[derive(Debug)]
pub struct Failure {
    kind: &'static str,
    msg: String,
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self { kind: "validation", msg: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Self { kind: "numeric", msg: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { kind: "io", msg: msg.into() }
    }

    fn code(&self) -> u8 {
        if self.kind == "numeric" {
            3
        } else {
            2
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        write!(f, "error: kind={} msg=\"{}\"", self.kind, msg)
    }
}

impl From<ndde::Error> for Failure {
    fn from(e: ndde::Error) -> Self {
        let kind = match &e {
            e if e.is_numeric() => "numeric",
            ndde::Error::Io(_) => "io",
            ndde::Error::Domain { .. } => "domain",
            ndde::Error::Precondition(_) => "precondition",
            _ => "validation",
        };
        Self { kind, msg: e.to_string() }
    }
}

type Res<T = ()> = Result<T, Failure>;

/// `println!` that stops quietly when the reader hangs up.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "ndde", version, about = "Neural delay differential equation experiments")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat JSON object of defaults, keyed by long flag name.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Euler integration of a delay equation, written as trajectory.csv.
    Simulate(SimulateArgs),
    /// Embed a target map into a neural DDE and report the worst error.
    Embed(EmbedArgs),
    /// DenseResNet view of a network: layer table and equivalence check.
    Discretize(DiscretizeArgs),
    /// Real branches of the Lambert W function.
    Lambertw(LambertArgs),
    /// Attraction of y' = K0 y(t - tau) to its special solution.
    Attract(AttractArgs),
    /// Constant ledger for the non-universal regime, as constants.json.
    Constants(ConstantsArgs),
    /// Label (K, tau) points or sweep a grid of them.
    Regions(RegionsArgs),
}

#[derive(Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum FieldKind {
    Linear,
    Zero,
    Tanh,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    field: Option<FieldKind>,
    /// Coefficient of the linear field.
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Constant history; a list sets every component.
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<List>,
    /// State dimension (default 1, or the length of --y0).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum Construction {
    #[value(alias = "3.4")]
    Basic,
    #[value(alias = "3.5")]
    Nonaugmented,
    #[value(alias = "3.8")]
    Augmented,
}

#[derive(Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum TargetName {
    Neg,
    Affine,
    Square,
    Sin,
    Quadmin,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct EmbedArgs {
    #[arg(long, alias = "thm", value_enum)]
    construction: Option<Construction>,
    #[arg(long, value_enum)]
    target: Option<TargetName>,
    /// Input dimension of `neg`.
    #[arg(long)]
    dim: Option<usize>,
    /// Slope of `affine`.
    #[arg(long)]
    a: Option<f64>,
    /// Offset of `affine`.
    #[arg(long)]
    b: Option<f64>,
    /// Minimiser of `quadmin`.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<List>,
    /// Lower corner of the domain box.
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    /// Lipschitz constant of the field (default: smallest admissible).
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    wt: Option<f64>,
    /// State width; the augmented default is n + q.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Fail with a numeric error if the worst error exceeds this.
    #[arg(long)]
    tol: Option<f64>,
    /// Also write the network as spec.json.
    #[arg(long)]
    save_spec: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct DiscretizeArgs {
    /// Network spec (JSON); a random tanh network is drawn without it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Network input (default 0.5 in every component).
    #[arg(long, allow_hyphen_values = true)]
    x: Option<List>,
    /// Delay family labels such as A1,B2,C1 for a standalone alignment table.
    #[arg(long)]
    delays: Option<String>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct LambertArgs {
    /// 0 for the principal branch, -1 for the lower one.
    #[arg(long)]
    branch: Option<i32>,
    #[arg(long)]
    x: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum HistoryKind {
    Constant,
    Special,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct AttractArgs {
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    y0: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    history: Option<HistoryKind>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ConstantsArgs {
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long = "M")]
    m_bound: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    wt: Option<f64>,
    /// Attraction constant; estimated from the linear model when absent.
    #[arg(long = "C2")]
    c2: Option<f64>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct RegionsArgs {
    /// Sweep a res x res grid instead of labelling one point.
    #[arg(long)]
    sweep: bool,
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    kmin: Option<f64>,
    #[arg(long)]
    kmax: Option<f64>,
    #[arg(long)]
    taumin: Option<f64>,
    #[arg(long)]
    taumax: Option<f64>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    kpsi: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    wt: Option<f64>,
    #[arg(long = "C2")]
    c2: Option<f64>,
    #[arg(long = "M")]
    m_bound: Option<f64>,
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Leave out the constants, so nothing is labelled nUA.
    #[arg(long)]
    no_constants: bool,
    /// Also write regions.svg.
    #[arg(long)]
    svg: bool,
}

struct Ctx {
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    /// Writes through a temporary file in the target directory, then renames.
    fn write(&self, name: &str, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Res<PathBuf> {
        let path = self.out.join(name);
        let io = |e: std::io::Error| Failure::io(format!("writing {}: {e}", path.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.out).map_err(io)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf).map_err(io)?;
            buf.flush().map_err(io)?;
        }
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(path)
    }
}

fn positive(name: &str, v: f64) -> Res<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Failure::validation(format!("--{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Res<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::validation(format!("--{name} must be finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Res<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Failure::validation(format!("--{name} must be non-negative and finite, got {v}")))
    }
}

fn at_least_one(name: &str, v: usize) -> Res<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Failure::validation(format!("--{name} must be at least 1")))
    }
}

fn simulate(a: SimulateArgs, p: &Params, ctx: &Ctx) -> Res {
    let kind = p.or("field", a.field, FieldKind::Linear)?;
    let k0 = finite("k0", p.or("k0", a.k0, -1.0)?)?;
    let tau = non_negative("tau", p.or("tau", a.tau, 1.0)?)?;
    let horizon = positive("T", p.or("T", a.horizon, 1.0)?)?;
    let steps = at_least_one("steps", p.or("steps", a.steps, 100)?)?;
    let y0 = p.or("y0", a.y0, List(vec![1.0]))?.0;
    let dim = at_least_one("dim", p.or("dim", a.dim, y0.len())?)?;
    p.finish()?;
    let y0 = match y0.len() {
        1 => vec![y0[0]; dim],
        l if l == dim => y0,
        l => return Err(Failure::validation(format!("--y0 has {l} entries, --dim is {dim}"))),
    };
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Failure::validation("--y0 must be finite"));
    }
    let grid = TimeGrid::from_horizon(0.0, horizon, steps, tau)?;
    let field: Box<dyn VectorField> = match kind {
        FieldKind::Linear => Box::new(LinearDelay::new(dim, k0, tau)),
        FieldKind::Zero => Box::new(ZeroField::new(dim, tau)),
        FieldKind::Tanh => Box::new(TanhDelay::random(dim, tau, &mut rng::stream(ctx.seed, 0))),
    };
    let tr = euler_solve(field.as_ref(), &InitialData::Constant(y0), &grid)?;
    let path = ctx.write("trajectory.csv", |w| tr.write_csv(w))?;
    let last: Vec<String> = tr.final_state().iter().map(|&v| fmt_f64(v)).collect();
    say!("wrote {}", path.display());
    say!("t={} y={}", fmt_f64(grid.end()), last.join(","));
    Ok(())
}

fn target(a: &EmbedArgs, p: &Params) -> Res<TargetMap> {
    let name = p.or("target", a.target, TargetName::Neg)?;
    let dim = p.get("dim", a.dim)?;
    let coef_a = p.get("a", a.a)?;
    let coef_b = p.get("b", a.b)?;
    let point = p.get("p", a.p.clone())?;
    let lo = finite("lo", p.or("lo", a.lo, -2.0)?)?;
    let hi = finite("hi", p.or("hi", a.hi, 2.0)?)?;
    let spec = match name {
        TargetName::Neg => TargetSpec::Neg { dim: at_least_one("dim", dim.unwrap_or(1))? },
        TargetName::Affine => TargetSpec::Affine {
            a: finite("a", coef_a.unwrap_or(1.0))?,
            b: finite("b", coef_b.unwrap_or(0.0))?,
        },
        TargetName::Square => TargetSpec::Square,
        TargetName::Sin => TargetSpec::Sin,
        TargetName::Quadmin => {
            let point = point.map(|l| l.0).unwrap_or_else(|| vec![0.0; dim.unwrap_or(1)]);
            if point.is_empty() || point.iter().any(|v| !v.is_finite()) {
                return Err(Failure::validation("--p must be a non-empty list of finite numbers"));
            }
            TargetSpec::Quadmin { p: point }
        }
    };
    Ok(TargetMap::named(spec, lo, hi)?)
}

fn embed(a: EmbedArgs, p: &Params, ctx: &Ctx) -> Res {
    let construction = p.or("construction", a.construction, Construction::Nonaugmented)?;
    let psi = target(&a, p)?;
    let horizon = positive("T", p.or("T", a.horizon, 1.0)?)?;
    let tau = non_negative("tau", p.or("tau", a.tau, horizon)?)?;
    let w = finite("w", p.or("w", a.w, 1.0)?)?;
    let wt = finite("wt", p.or("wt", a.wt, 1.0)?)?;
    let k = p.get("K", a.k)?;
    let m = p.get("m", a.m)?;
    let samples = at_least_one("samples", p.or("samples", a.samples, 101)?)?;
    let steps = at_least_one("steps", p.or("steps", a.steps, 1000)?)?;
    let tol = p.get("tol", a.tol)?;
    let save_spec = p.flag("save-spec", a.save_spec)?;
    p.finish()?;
    if w == 0.0 || wt == 0.0 {
        return Err(Failure::validation("--w and --wt must be nonzero"));
    }
    let ratio = psi.lipschitz / (w * wt).abs();
    let net = match construction {
        Construction::Basic => embed_basic(&psi, horizon)?,
        Construction::Nonaugmented => {
            let k = match k {
                Some(k) => positive("K", k)?,
                None if tau > 0.0 => 2.0 * (1.0 + ratio) / tau,
                None => return Err(Failure::validation("--tau must be positive for the non-augmented construction")),
            };
            embed_nonaugmented(&psi, tau, k, w, wt, horizon, m)?
        }
        Construction::Augmented => {
            let k = match k {
                Some(k) => positive("K", k)?,
                None => ratio / horizon,
            };
            embed_augmented(&psi, tau, k, w, wt, horizon, m.unwrap_or(psi.n + psi.q))?
        }
    };
    let xs = psi.diagonal_samples(samples);
    let mut rows = Vec::with_capacity(xs.len());
    let mut worst: f64 = 0.0;
    for x in &xs {
        let got = net.forward(x, steps)?;
        let want = psi.eval(x)?;
        let err = got.iter().zip(&want).map(|(g, t)| (g - t).abs()).fold(0.0f64, f64::max);
        worst = worst.max(err);
        rows.push((x.clone(), want, got, err));
    }
    let header = {
        let mut h: Vec<String> = (1..=psi.n).map(|i| format!("x{i}")).collect();
        h.extend((1..=psi.q).map(|i| format!("target{i}")));
        h.extend((1..=psi.q).map(|i| format!("output{i}")));
        h.push("error".into());
        h.join(",")
    };
    let path = ctx.write("embed.csv", |w| {
        writeln!(w, "{header}")?;
        for (x, want, got, err) in &rows {
            let cells: Vec<String> =
                x.iter().chain(want).chain(got).chain(std::iter::once(err)).map(|&v| fmt_f64(v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })?;
    if save_spec {
        let cfg = net.to_config()?;
        let text = serde_json::to_string_pretty(&cfg).map_err(|e| Failure::io(e.to_string()))?;
        ctx.write("spec.json", |w| writeln!(w, "{text}"))?;
    }
    let delta = horizon / steps as f64;
    say!("wrote {}", path.display());
    say!(
        "target={} n={} q={} m={} tau={} T={} delta={} K_psi={} max_error={}",
        psi.name,
        psi.n,
        psi.q,
        net.m(),
        net.tau,
        horizon,
        fmt_f64(delta),
        fmt_f64(psi.lipschitz),
        fmt_f64(worst)
    );
    if let Some(tol) = tol {
        if !(worst <= tol) {
            return Err(Failure::numeric(format!("max error {worst} exceeds tolerance {tol}")));
        }
        say!("within tolerance {tol}");
    }
    Ok(())
}

fn random_network(n: usize, m: usize, q: usize, tau: f64, horizon: f64, seed: u64) -> Res<NeuralDde> {
    use rand::Rng;
    let mut r = rng::stream(seed, 1);
    let mut draw = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
        (0..rows).map(|_| (0..cols).map(|_| r.gen_range(-1.0..1.0)).collect()).collect()
    };
    let (w, b, wt, bt) = (draw(m, n), draw(1, m).remove(0), draw(q, m), draw(1, q).remove(0));
    let field = TanhDelay::random(m, tau, &mut rng::stream(seed, 0));
    let input = AffineMap::from_rows(&w, &b)?;
    let output = AffineMap::from_rows(&wt, &bt)?;
    Ok(NeuralDde::new(input, Arc::new(field), tau, horizon, output)?)
}

fn parse_delays(labels: &str, delta: f64, tau: f64, horizon: f64) -> Res<Vec<Delay>> {
    labels
        .split(',')
        .map(|raw| {
            let s = raw.trim();
            let bad = || Failure::validation(format!("delay label '{s}' is not A<j>, B<j> or C<j>"));
            let kind = match s.chars().next() {
                Some('A') => DelayKind::A,
                Some('B') => DelayKind::B,
                Some('C') => DelayKind::C,
                _ => return Err(bad()),
            };
            let j: usize = s[1..].parse().map_err(|_| bad())?;
            Ok(Delay::Family(DelayFunction::new(kind, j, delta, tau, horizon)?))
        })
        .collect()
}

fn discretize_cmd(a: DiscretizeArgs, p: &Params, ctx: &Ctx) -> Res {
    let spec = p.get("spec", a.spec)?;
    let n = p.or("n", a.n, 2)?;
    let m = p.or("m", a.m, 3)?;
    let q = p.or("q", a.q, 1)?;
    let tau = p.get("tau", a.tau)?;
    let horizon = p.get("T", a.horizon)?;
    let steps = at_least_one("steps", p.or("steps", a.steps, 10)?)?;
    let x = p.get("x", a.x)?;
    let delays = p.get("delays", a.delays)?;
    p.finish()?;
    let net = match spec {
        Some(path) => {
            if tau.is_some() || horizon.is_some() {
                return Err(Failure::validation("--tau and --T come from the spec file"));
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Failure::io(format!("reading {}: {e}", path.display())))?;
            let cfg: NeuralDdeConfig =
                serde_json::from_str(&text).map_err(|e| Failure::validation(format!("spec file: {e}")))?;
            cfg.build()?
        }
        None => {
            let horizon = positive("T", horizon.unwrap_or(1.0))?;
            let tau = non_negative("tau", tau.unwrap_or(0.3))?;
            random_network(at_least_one("n", n)?, at_least_one("m", m)?, at_least_one("q", q)?, tau, horizon, ctx.seed)?
        }
    };
    let x = x.map(|l| l.0).unwrap_or_else(|| vec![0.5; net.n()]);
    if x.len() != net.n() {
        return Err(Failure::validation(format!("--x has {} entries, network input is {}", x.len(), net.n())));
    }
    let grid = net.grid(steps)?;
    let table = match delays {
        Some(labels) => grid_alignment_table(&parse_delays(&labels, grid.delta, net.tau, net.horizon)?, &grid)?,
        None => discretize(&net, steps)?.table,
    };
    let dn = discretize(&net, steps)?;
    let dense = dn.dense_forward(&x)?;
    let solver = net.forward(&x, steps)?;
    let diff = dense.iter().zip(&solver).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    let path = ctx.write("alignment.csv", |w| table.write_csv(w))?;
    let report = dn.report();
    let rpath = ctx.write("dense_report.txt", |w| w.write_all(report.as_bytes()))?;
    say!("wrote {}", path.display());
    say!("wrote {}", rpath.display());
    let _ = std::io::stdout().write_all(report.as_bytes());
    let fmt = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",");
    say!("dense={} solver={} max_difference={}", fmt(&dense), fmt(&solver), fmt_f64(diff));
    if diff != 0.0 {
        return Err(Failure::numeric(format!("DenseResNet and solver differ by {diff}")));
    }
    Ok(())
}

fn lambertw_cmd(a: LambertArgs, p: &Params) -> Res {
    let branch = p.or("branch", a.branch, 0)?;
    let x = finite("x", p.req("x", a.x)?)?;
    p.finish()?;
    let w = lambert_w(Branch::from_index(branch)?, x)?;
    let residual = (w * w.exp() - x).abs();
    say!("{}", json!({ "x": x, "branch": branch, "W": w, "residual": residual }));
    Ok(())
}

fn attract(a: AttractArgs, p: &Params, ctx: &Ctx) -> Res {
    let k0 = finite("k0", p.or("k0", a.k0, -1.0)?)?;
    let tau = positive("tau", p.or("tau", a.tau, 0.25)?)?;
    let y0 = finite("y0", p.or("y0", a.y0, 1.0)?)?;
    let horizon = positive("T", p.or("T", a.horizon, 5.0)?)?;
    let steps = at_least_one("steps", p.or("steps", a.steps, 20_000)?)?;
    let history = match p.or("history", a.history, HistoryKind::Constant)? {
        HistoryKind::Constant => AttractionHistory::Constant,
        HistoryKind::Special => AttractionHistory::OnSpecialSolution,
    };
    p.finish()?;
    let rep = measure_attraction(k0, tau, y0, horizon, steps, history)?;
    let path = ctx.write("attraction.csv", |w| rep.write_csv(w))?;
    let summary = json!({
        "lambda1": rep.lambda1,
        "lambda2": rep.lambda2,
        "lambda1_discrete": rep.lambda1_discrete,
        "ybar0": rep.ybar0,
        "ybar0_converged": rep.ybar0_converged,
        "C_u": rep.c_u,
        "fitted_rate": rep.fitted_rate,
        "fit_points": rep.fit_points,
    });
    say!("wrote {}", path.display());
    say!("{summary}");
    Ok(())
}

fn constants_cmd(a: ConstantsArgs, p: &Params, ctx: &Ctx) -> Res {
    let k = p.or("K", a.k, 1.0)?;
    let mut inputs = SeparationInputs {
        k,
        a: p.or("A", a.a, 0.0)?,
        horizon: p.or("T", a.horizon, 1.0)?,
        m_bound: p.or("M", a.m_bound, 1.0)?,
        r0: p.or("r0", a.r0, 1.0)?,
        r1: p.or("r1", a.r1, 0.25)?,
        eps: p.or("eps", a.eps, 0.1)?,
        w: p.or("w", a.w, 1.0)?,
        wt: p.or("wt", a.wt, 1.0)?,
        c2: 0.0,
    };
    let c2 = p.get("C2", a.c2)?;
    p.finish()?;
    // validate everything but C2 before estimating it
    separation_constants(&SeparationInputs { c2: 1.0, ..inputs })?;
    let estimated = c2.is_none();
    inputs.c2 = match c2 {
        Some(c) => c,
        None => {
            let tau = 0.5 / (k * std::f64::consts::E);
            estimate_c2(-k, tau, inputs.r1, 20.0 * tau, 2000)?
        }
    };
    let ledger = separation_constants(&inputs)?;
    let mut value = serde_json::to_value(ledger).map_err(|e| Failure::io(e.to_string()))?;
    value["C2_estimated"] = json!(estimated);
    let text = serde_json::to_string_pretty(&value).map_err(|e| Failure::io(e.to_string()))?;
    let path = ctx.write("constants.json", |w| writeln!(w, "{text}"))?;
    eprintln!("wrote {}", path.display());
    say!("{text}");
    Ok(())
}

fn regions_cmd(a: RegionsArgs, p: &Params, ctx: &Ctx) -> Res {
    let sweep = p.flag("sweep", a.sweep)?;
    let no_constants = p.flag("no-constants", a.no_constants)?;
    let svg = p.flag("svg", a.svg)?;
    let constants = ConstantsBundle {
        c2: p.or("C2", a.c2, 0.5)?,
        m_bound: p.or("M", a.m_bound, 1.0)?,
        a: p.or("A", a.a, 0.0)?,
        r0: p.or("r0", a.r0, 1.0)?,
        r1: p.or("r1", a.r1, 0.25)?,
        eps: p.or("eps", a.eps, 0.1)?,
    };
    let base = RegionQuery {
        k: 0.0,
        tau: 0.0,
        horizon: p.or("T", a.horizon, 1.0)?,
        n: p.or("n", a.n, 1)?,
        m: p.or("m", a.m, 1)?,
        q: p.or("q", a.q, 1)?,
        k_psi: p.or("kpsi", a.kpsi, 1.0)?,
        w: p.or("w", a.w, 1.0)?,
        wt: p.or("wt", a.wt, 1.0)?,
        constants: (!no_constants).then_some(constants),
    };
    if sweep {
        let spec = SweepSpec {
            k_min: p.or("kmin", a.kmin, 0.0)?,
            k_max: p.or("kmax", a.kmax, 10.0)?,
            tau_min: p.or("taumin", a.taumin, 0.0)?,
            tau_max: p.or("taumax", a.taumax, 1.0)?,
            resolution: p.or("res", a.res, 200)?,
            base,
        };
        if p.get("K", a.k)?.is_some() || p.get("tau", a.tau)?.is_some() {
            return Err(Failure::validation("--K and --tau are not used with --sweep"));
        }
        p.finish()?;
        let grid = sweep_regions(&spec)?;
        let path = ctx.write("regions.csv", |w| grid.write_csv(w))?;
        say!("wrote {}", path.display());
        if svg {
            let text = grid.to_svg();
            let spath = ctx.write("regions.svg", |w| w.write_all(text.as_bytes()))?;
            say!("wrote {}", spath.display());
        }
        let counts: serde_json::Map<String, serde_json::Value> =
            [Label::UeNonAugmented, Label::UeAugmented, Label::NotUniversal, Label::Unknown]
                .into_iter()
                .map(|l| (l.as_str().to_string(), json!(grid.count(l))))
                .collect();
        say!("{}", json!({ "cells": grid.cells.len(), "counts": counts, "overlaps": grid.overlaps() }));
        if grid.overlaps() != 0 {
            return Err(Failure::numeric(format!("{} cells carry both UE and nUA", grid.overlaps())));
        }
    } else {
        let q = RegionQuery { k: p.req("K", a.k)?, tau: p.req("tau", a.tau)?, ..base };
        let grid_keys = [("kmin", a.kmin), ("kmax", a.kmax), ("taumin", a.taumin), ("taumax", a.taumax)];
        for (key, flag) in grid_keys {
            if p.get(key, flag)?.is_some() {
                return Err(Failure::validation(format!("--{key} needs --sweep")));
            }
        }
        if p.get("res", a.res)?.is_some() || svg {
            return Err(Failure::validation("--res and --svg need --sweep"));
        }
        p.finish()?;
        let label = classify_region(&q)?;
        say!("{}", json!({ "K": q.k, "tau": q.tau, "label": label.label.as_str(), "justification": label.justification }));
    }
    Ok(())
}

fn run(cli: Cli) -> Res {
    let params = Params::load(cli.config.as_deref())?;
    let seed = params.or("seed", cli.seed, 0u64)?;
    let out = params.or("out", cli.out, PathBuf::from("."))?;
    if !Path::new(&out).is_dir() {
        std::fs::create_dir_all(&out).map_err(|e| Failure::io(format!("creating {}: {e}", out.display())))?;
    }
    let ctx = Ctx { seed, out };
    match cli.command {
        Command::Simulate(a) => simulate(a, &params, &ctx),
        Command::Embed(a) => embed(a, &params, &ctx),
        Command::Discretize(a) => discretize_cmd(a, &params, &ctx),
        Command::Lambertw(a) => lambertw_cmd(a, &params),
        Command::Attract(a) => attract(a, &params, &ctx),
        Command::Constants(a) => constants_cmd(a, &params, &ctx),
        Command::Regions(a) => regions_cmd(a, &params, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", Failure::validation(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
