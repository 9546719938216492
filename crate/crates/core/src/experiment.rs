//! Batch condition-number experiments on the nine-patch square `[0,3]^2`.
//!
//! A configuration fixes the degree layout, the preconditioner and its
//! constants, and the axes to sweep (base degrees, and optionally `beta1` and
//! `rho1` grids). Every grid point becomes one [`ResultRow`]; failures are
//! recorded in the row and the sweep continues.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assembly::{assemble_dg_ni, rhs_ni, volume_stiffness, Quadrature};
use crate::auxiliary::{assemble_b1, StageOneWeights};
use crate::error::{Error, Result};
use crate::krylov::{estimate_condition, pcg, LanczosOptions, LinearOperator, SpectrumEstimate};
use crate::lgl::Interval;
use crate::mesh::Mesh;
use crate::precond::{Inner, InnerSolve, SmootherSolve, StageOne, StageTwo, StageTwoOptions};
use crate::space::{BrokenLayout, ConformingSpace};
use crate::sparse::CsrMatrix;

/// Degree of the off-diagonal patches of the checkerboard layout relative to `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "equal")]
    Equal,
    #[serde(rename = "plus2")]
    Plus2,
    #[serde(rename = "x1.5")]
    X1_5,
    #[serde(rename = "x1.75")]
    X1_75,
    #[serde(rename = "x2")]
    X2,
}

impl Relation {
    pub fn apply(self, p: usize) -> Result<usize> {
        Ok(match self {
            Relation::Equal => p,
            Relation::Plus2 => p + 2,
            Relation::X1_5 if p % 2 == 0 => 3 * p / 2,
            Relation::X1_75 if p % 4 == 0 => 7 * p / 4,
            Relation::X2 => 2 * p,
            Relation::X1_5 => return Err(Error::Config(format!("relation x1.5 needs an even p, got {p}"))),
            Relation::X1_75 => return Err(Error::Config(format!("relation x1.75 needs p divisible by 4, got {p}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// `p` where `i + j` is even, `q` elsewhere.
    Checkerboard,
    /// `p + (2^(i+j) - 1) * increment`: degrees grow away from the origin patch.
    Adaptation,
    /// Degrees taken from `degree_table`.
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageKind {
    #[serde(rename = "stage1-exact")]
    Stage1Exact,
    #[serde(rename = "stage2-exact")]
    Stage2Exact,
    #[serde(rename = "stage2-substructured")]
    Stage2Substructured,
    #[serde(rename = "combined")]
    Combined,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Stage1Exact => "stage1-exact",
            StageKind::Stage2Exact => "stage2-exact",
            StageKind::Stage2Substructured => "stage2-substructured",
            StageKind::Combined => "combined",
        }
    }
}

fn default_relation() -> Relation {
    Relation::Equal
}
fn one() -> usize {
    1
}
fn default_gamma() -> f64 {
    3.0
}
fn default_beta1() -> f64 {
    0.15
}
fn default_rho1() -> f64 {
    1.25
}
fn default_c1sq() -> f64 {
    10.0
}
fn default_alpha() -> f64 {
    1.2
}
fn default_c_aspect() -> f64 {
    2.0
}
fn default_c_tune() -> f64 {
    0.6
}
fn default_sweeps() -> usize {
    7
}
fn default_lanczos_tol() -> f64 {
    1e-4
}
fn default_lanczos_max_it() -> usize {
    400
}
fn default_pcg_tol() -> f64 {
    1e-8
}
fn default_pcg_max_it() -> usize {
    2000
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    #[serde(default = "default_relation")]
    pub relation: Relation,
    /// Degree increment of the adaptation layout.
    #[serde(default = "one")]
    pub increment: usize,
    /// Per-patch degrees (patch `i + 3j`) for the custom layout.
    #[serde(default)]
    pub degree_table: Vec<usize>,
    /// Base degrees to sweep; ignored by the custom layout.
    #[serde(default)]
    pub p_values: Vec<usize>,
    pub stage: StageKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_rho1")]
    pub rho1: f64,
    #[serde(default = "default_c1sq")]
    pub c1sq: f64,
    /// Optional `beta1` axis; overrides `beta1`.
    #[serde(default)]
    pub beta1_values: Vec<f64>,
    /// Optional `rho1` axis; overrides `rho1`.
    #[serde(default)]
    pub rho1_values: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c_aspect")]
    pub c_aspect: f64,
    #[serde(default = "default_c_tune")]
    pub c_tune: f64,
    /// Substructuring sweeps of the second-stage smoother; 0 solves it exactly.
    /// Used by `stage2-substructured` and `combined`.
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_lanczos_tol")]
    pub lanczos_tol: f64,
    #[serde(default = "default_lanczos_max_it")]
    pub lanczos_max_it: usize,
    /// Also solve a Poisson problem with the preconditioner and report iterations.
    #[serde(default = "yes")]
    pub run_pcg: bool,
    #[serde(default = "default_pcg_tol")]
    pub pcg_tol: f64,
    #[serde(default = "default_pcg_max_it")]
    pub pcg_max_it: usize,
    #[serde(default)]
    pub seed: u64,
    /// Record wall time; off keeps the output byte-reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides; values are parsed as JSON, falling back to strings.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for s in sets {
            let (key, raw) = s.split_once('=').ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
            let obj = v.as_object_mut().expect("config serializes to an object");
            if !obj.contains_key(key) {
                return Err(Error::Config(format!("unknown configuration key `{key}`")));
            }
            let val = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            obj.insert(key.to_string(), val);
        }
        let cfg: Self = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.scenario {
            ScenarioKind::Custom if self.degree_table.len() != 9 => {
                return Err(Error::Config(format!("custom layout needs 9 degrees, got {}", self.degree_table.len())));
            }
            ScenarioKind::Custom => {}
            _ if self.p_values.is_empty() => return Err(Error::Config("p_values is empty".into())),
            _ => {}
        }
        for &p in &self.p_values {
            if p == 0 {
                return Err(Error::InvalidDegree(0));
            }
            if self.scenario == ScenarioKind::Checkerboard {
                self.relation.apply(p)?;
            }
        }
        if !(self.lanczos_tol > 0.0) || self.lanczos_max_it == 0 {
            return Err(Error::Config("Lanczos needs a positive tolerance and iteration limit".into()));
        }
        Ok(())
    }

    /// Grid points in emission order: degrees outermost, then `beta1`, then `rho1`.
    pub fn points(&self) -> Vec<Point> {
        let ps: Vec<usize> = match self.scenario {
            ScenarioKind::Custom => vec![self.degree_table[0]],
            _ => self.p_values.clone(),
        };
        let betas = if self.beta1_values.is_empty() { vec![self.beta1] } else { self.beta1_values.clone() };
        let rhos = if self.rho1_values.is_empty() { vec![self.rho1] } else { self.rho1_values.clone() };
        let mut out = Vec::new();
        for &p in &ps {
            for &beta1 in &betas {
                for &rho1 in &rhos {
                    out.push(Point { p, beta1, rho1 });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub p: usize,
    pub beta1: f64,
    pub rho1: f64,
}

/// Degrees of patch `(i, j)` of the nine-patch layout.
pub fn scenario_degrees(cfg: &ExperimentConfig, p: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(9);
    for j in 0..3 {
        for i in 0..3 {
            out.push(match cfg.scenario {
                ScenarioKind::Checkerboard if (i + j) % 2 == 0 => p,
                ScenarioKind::Checkerboard => cfg.relation.apply(p)?,
                ScenarioKind::Adaptation => p + ((1usize << (i + j)) - 1) * cfg.increment,
                ScenarioKind::Custom => cfg.degree_table[i + 3 * j],
            });
        }
    }
    Ok(out)
}

pub fn scenario_mesh(degrees: &[usize]) -> Result<Mesh> {
    let iv = Interval::new(0.0, 3.0)?;
    Mesh::tensor(&[iv, iv], &[3, 3], |m| vec![degrees[m[0] + 3 * m[1]]; 2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub p: usize,
    pub q: usize,
    pub stage: String,
    pub gamma: f64,
    pub beta1: f64,
    pub rho1: f64,
    pub c1sq: f64,
    pub alpha: f64,
    pub c_aspect: f64,
    pub c_tune: f64,
    pub sweeps: usize,
    pub kappa: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub ndof_dg: usize,
    pub ndof_cg: usize,
    pub ndof_dfe: usize,
    pub pcg_iters: Option<usize>,
    pub seed: u64,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const CSV_HEADER: &str = "scenario,p,q,stage,gamma,beta1,rho1,c1sq,alpha,c_aspect,c_tune,sweeps,kappa,lambda_min,lambda_max,ndof_dg,ndof_cg,ndof_dfe,pcg_iters,seed,wall_ms";

/// Six significant digits, fixed notation for moderate exponents.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    // rounding can carry into the next decade
    let e = if (x.abs() / 10f64.powi(e)) >= 9.999995 { e + 1 } else { e };
    if (-5..6).contains(&e) {
        format!("{:.*}", (5 - e) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.p,
            r.q,
            r.stage,
            r.gamma,
            r.beta1,
            r.rho1,
            r.c1sq,
            r.alpha,
            r.c_aspect,
            r.c_tune,
            r.sweeps,
            opt(r.kappa, sig6),
            opt(r.lambda_min, sig6),
            opt(r.lambda_max, sig6),
            r.ndof_dg,
            r.ndof_cg,
            r.ndof_dfe,
            opt(r.pcg_iters, |v| v.to_string()),
            r.seed,
            r.wall_ms
        );
    }
    s
}

pub fn to_json(rows: &[ResultRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

/// Assembled matrices and spaces of one degree layout.
pub struct Discretization {
    pub mesh: Mesh,
    pub dg: BrokenLayout,
    pub cg: ConformingSpace,
    /// Interior penalty matrix on SE-DG.
    pub a: CsrMatrix,
    /// Stiffness on SE-CG.
    pub a1: CsrMatrix,
}

impl Discretization {
    pub fn new(mesh: Mesh, gamma: f64) -> Result<Self> {
        let dg = BrokenLayout::lgl(&mesh)?;
        let cg = ConformingSpace::se_cg(&mesh)?;
        let a = assemble_dg_ni(&mesh, &dg, gamma)?;
        let a1 = volume_stiffness(&mesh, &dg, Quadrature::Lgl)?.galerkin(cg.prolongation());
        Ok(Self { mesh, dg, cg, a, a1 })
    }
}

/// Outcome of one preconditioned system.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub spectrum: SpectrumEstimate,
    pub pcg_iters: Option<usize>,
    pub ndof_dfe: usize,
}

fn source(x: &[f64]) -> f64 {
    let pi = std::f64::consts::PI;
    2.0 * pi * pi * (pi * x[0]).sin() * (pi * x[1]).sin()
}

fn measure(a: &dyn LinearOperator, c: &dyn LinearOperator, rhs: Option<Vec<f64>>, cfg: &ExperimentConfig) -> Result<(SpectrumEstimate, Option<usize>)> {
    let opts = LanczosOptions { tol: cfg.lanczos_tol, max_it: cfg.lanczos_max_it, seed: cfg.seed, ..Default::default() };
    let spectrum = estimate_condition(a, c, &opts)?;
    let iters = match rhs {
        Some(b) if cfg.run_pcg => {
            let out = pcg(a, c, &b, cfg.pcg_tol, cfg.pcg_max_it)?;
            if !out.converged {
                return Err(Error::NonConvergence { what: "preconditioned CG", iterations: out.iterations });
            }
            Some(out.iterations)
        }
        _ => None,
    };
    Ok((spectrum, iters))
}

/// Builds the preconditioner of `stage` and measures it.
pub fn measure_stage(disc: &Discretization, stage: StageKind, cfg: &ExperimentConfig, point: &Point) -> Result<Measurement> {
    let smoother = |sweeps: usize| if sweeps == 0 { SmootherSolve::Exact } else { SmootherSolve::Sweeps(sweeps) };
    let s2 = |solve| StageTwoOptions { alpha: cfg.alpha, c_aspect: cfg.c_aspect, c_tune: cfg.c_tune, smoother: solve };
    let weights = StageOneWeights { beta1: point.beta1, rho1: point.rho1, c1sq: cfg.c1sq, gamma: cfg.gamma };
    let dg_rhs = || rhs_ni(&disc.mesh, &disc.dg, source);
    let cg_rhs = || -> Result<Vec<f64>> { Ok(disc.cg.prolongation().mul_vec_transposed(&dg_rhs()?)) };
    match stage {
        StageKind::Stage1Exact | StageKind::Combined => {
            let b1 = assemble_b1(&disc.mesh, &disc.dg, &weights)?;
            let (how, opts) = match stage {
                StageKind::Combined => (InnerSolve::StageTwo, s2(smoother(cfg.sweeps))),
                _ => (InnerSolve::for_size(disc.cg.ndofs()), s2(smoother(cfg.sweeps))),
            };
            let inner = Inner::build(&disc.mesh, &disc.cg, &disc.a1, how, &opts)?;
            let ndof_dfe = match &inner {
                Inner::StageTwo(s) | Inner::StageTwoCg { stage: s, .. } => s.dfe().ndofs(),
                Inner::Direct(_) => ConformingSpace::dfe_cg(&disc.mesh, cfg.alpha)?.ndofs(),
            };
            let c = StageOne::new(&b1, &disc.cg, inner)?;
            let (spectrum, pcg_iters) = measure(&disc.a, &c, Some(dg_rhs()?), cfg)?;
            Ok(Measurement { spectrum, pcg_iters, ndof_dfe })
        }
        StageKind::Stage2Exact | StageKind::Stage2Substructured => {
            let solve = if stage == StageKind::Stage2Exact { SmootherSolve::Exact } else { smoother(cfg.sweeps) };
            let c = StageTwo::build(&disc.mesh, &disc.cg, &s2(solve))?;
            let (spectrum, pcg_iters) = measure(&disc.a1, &c, Some(cg_rhs()?), cfg)?;
            Ok(Measurement { spectrum, pcg_iters, ndof_dfe: c.dfe().ndofs() })
        }
    }
}

/// DG energy-norm error of the DG-NI solution of `-lap u = f` with
/// `u = sin(pi x) sin(pi y)` on the nine-patch square, all patches of degree `p`.
pub fn sine_problem_error(p: usize, gamma: f64) -> Result<f64> {
    let mesh = scenario_mesh(&[p; 9])?;
    let dg = BrokenLayout::lgl(&mesh)?;
    let a = assemble_dg_ni(&mesh, &dg, gamma)?;
    let b = rhs_ni(&mesh, &dg, source)?;
    let uh = crate::sparse::Cholesky::factor(&a)?.solve(&b);
    let pi = std::f64::consts::PI;
    crate::norms::dg_norm_error(
        &mesh,
        &dg,
        &uh,
        gamma,
        4,
        |x| (pi * x[0]).sin() * (pi * x[1]).sin(),
        |x| vec![pi * (pi * x[0]).cos() * (pi * x[1]).sin(), pi * (pi * x[0]).sin() * (pi * x[1]).cos()],
    )
}

fn run_point(cfg: &ExperimentConfig, point: &Point) -> ResultRow {
    let start = Instant::now();
    let degrees = scenario_degrees(cfg, point.p);
    let q = degrees.as_ref().map(|d| *d.iter().max().unwrap()).unwrap_or(0);
    let sweeps = match cfg.stage {
        StageKind::Stage1Exact | StageKind::Stage2Exact => 0,
        _ => cfg.sweeps,
    };
    let mut row = ResultRow {
        scenario: serde_json::to_value(cfg.scenario).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        p: point.p,
        q: match cfg.scenario {
            ScenarioKind::Checkerboard => cfg.relation.apply(point.p).unwrap_or(q),
            _ => q,
        },
        stage: cfg.stage.name().into(),
        gamma: cfg.gamma,
        beta1: point.beta1,
        rho1: point.rho1,
        c1sq: cfg.c1sq,
        alpha: cfg.alpha,
        c_aspect: cfg.c_aspect,
        c_tune: cfg.c_tune,
        sweeps,
        kappa: None,
        lambda_min: None,
        lambda_max: None,
        ndof_dg: 0,
        ndof_cg: 0,
        ndof_dfe: 0,
        pcg_iters: None,
        seed: cfg.seed,
        wall_ms: 0,
        error: None,
    };
    let result = degrees.and_then(|d| scenario_mesh(&d)).and_then(|mesh| Discretization::new(mesh, cfg.gamma)).and_then(|disc| {
        row.ndof_dg = disc.dg.dim();
        row.ndof_cg = disc.cg.ndofs();
        measure_stage(&disc, cfg.stage, cfg, point)
    });
    match result {
        Ok(m) => {
            row.kappa = Some(m.spectrum.kappa);
            row.lambda_min = Some(m.spectrum.lambda_min);
            row.lambda_max = Some(m.spectrum.lambda_max);
            row.ndof_dfe = m.ndof_dfe;
            row.pcg_iters = m.pcg_iters;
            if !m.spectrum.converged {
                row.error = Some(format!("Lanczos stopped after {} iterations before reaching the tolerance", m.spectrum.iterations));
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    if cfg.timing {
        row.wall_ms = start.elapsed().as_millis() as u64;
    }
    row
}

/// Runs every grid point of `cfg` on `threads` workers (all cores if `None`);
/// rows come back in grid order.
pub fn run_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let points = cfg.points();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| points.par_iter().map(|pt| run_point(cfg, pt)).collect()))
}
