//! Command-line driver: TOML run configs, subcommands and report files.
//!
//! Every output file starts with a provenance record (SHA-256 of the config
//! bytes and overrides, seed, crate version) so a run can be traced back to
//! its inputs. Exit codes: 0 success, 2 validation, 3 numeric
//! indeterminacy, 4 budget exceeded.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bessel::{
    alpha_of_delta, example_jump_measure, n_asymptotic_constant, n_asymptotic_exponent, natural_scale_string,
    to_tabulated, BesselDriftSpec,
};
use crate::eigen::{admissible_order, Eigen, ModifiedNeumann};
use crate::levy::{b_mean, chi, kappa_table, ScalingFamily, SlowlyVarying};
use crate::measure::{
    check_condition_c, d_of_m, n_of_gamma, stieltjes_integral, GTable, JumpMeasureSpec, SingularityIndex,
    StringSpec, DEEP_FLOOR_LOG2,
};
use crate::simulate::{
    eta_experiment, fluctuation_experiment, mean_var, occupation_experiment, sample_t0_batch, BilateralSpec,
    SimConfig,
};
use crate::verify::{self, Functional, Outcome, SweepReport, TestFn};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INDETERMINATE: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

/// A failed run: message and exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Parameter(_) | Error::Precondition(_) => EXIT_VALIDATION,
            Error::Budget(_) => EXIT_BUDGET,
            _ => EXIT_INDETERMINATE,
        };
        Self { code, message: e.to_string() }
    }
}

type Res<T> = std::result::Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(
    name = "jumpin",
    version,
    about = "Jumping-in diffusions: strings, eigenfunctions, exponents, simulation, checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// d(m), condition (C), Gᵏ table and N(γ) samples for a string (and jump measure).
    StringAnalyze(Common),
    /// ψ, φᵈ, g, cᵈ and the Wronskian over the λ and x grids.
    Eigen(Common),
    /// χ(λ) for a pair, or the (γ, λ, χ̃, κ̂) table for a scaling family.
    Chi(Common),
    /// The string induced by a Bessel-like drift and its asymptotic constants.
    Bessel(Common),
    /// Monte Carlo experiments.
    Simulate(Common),
    /// Condition checks along a γ sweep.
    Verify(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory; overrides [output].dir.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Output format; overrides [output].format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Quadrature tolerance; overrides [grid].tol.
    #[arg(long)]
    pub tol: Option<f64>,
    /// RNG seed; overrides [sim].seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; overrides [sim].workers.
    #[arg(long, alias = "threads")]
    pub workers: Option<usize>,
    /// Replicates; overrides [sim].replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum StringConfig {
    Power {
        theta: f64,
        #[serde(default = "one")]
        coef: f64,
    },
    Lebesgue {
        #[serde(default = "one")]
        rho: f64,
    },
    Bessel {
        alpha: f64,
        #[serde(default = "one")]
        s: f64,
        #[serde(default)]
        eta_bar: f64,
    },
    Tabulated {
        xs: Vec<f64>,
        ms: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpConfig {
    /// Density coef·x^(−β−1) on (lo, hi] for each index.
    Pieces { lo: Vec<f64>, hi: Vec<f64>, coef: Vec<f64>, beta: Vec<f64> },
    Bessel {
        alpha: f64,
        #[serde(default = "quarter")]
        a: f64,
        #[serde(default = "one")]
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Bessel {
        alpha: f64,
        #[serde(default = "one")]
        s: f64,
        #[serde(default = "one")]
        t: f64,
        #[serde(default = "quarter")]
        a: f64,
        #[serde(default = "half")]
        eps: f64,
    },
    /// (m, j) from [string] and [jump] with explicit normalizers.
    Pair {
        alpha: f64,
        u: SlowlyVarying,
        v: SlowlyVarying,
        #[serde(default)]
        k: Option<SlowlyVarying>,
        #[serde(default)]
        l: Option<SlowlyVarying>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesselConfig {
    /// Either δ < 0 or α > 1.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default)]
    pub eta_bar: f64,
    #[serde(default = "tab_lo")]
    pub tab_lo: f64,
    #[serde(default = "tab_hi")]
    pub tab_hi: f64,
    #[serde(default = "tab_n")]
    pub tab_n: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Explicit γ values; otherwise `gamma_n` log points on [gamma_lo, gamma_hi].
    pub gammas: Option<Vec<f64>>,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub gamma_n: usize,
    pub lambdas: Vec<f64>,
    pub xs: Vec<f64>,
    /// Order for the G functional and φᵈ; the admissible order when absent.
    pub d: Option<usize>,
    pub k_max: usize,
    pub tol: f64,
    pub test_fns: Vec<TestFn>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            gammas: None,
            gamma_lo: 1e2,
            gamma_hi: 1e8,
            gamma_n: 6,
            lambdas: vec![0.5, 1.0, 2.0],
            xs: vec![0.25, 0.5, 1.0, 2.0, 5.0],
            d: None,
            k_max: 4,
            tol: 1e-10,
            test_fns: vec![TestFn::One, TestFn::Identity, TestFn::Zero],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    T0,
    Eta,
    Occupation,
    Fluctuation,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Starting point for T0 samples.
    #[serde(default = "one")]
    pub x: f64,
    /// Negative side of an occupation run: same string, jump measure scaled by this factor.
    #[serde(default = "one")]
    pub minus_scale: f64,
    /// γ for a fluctuation run.
    #[serde(default = "gamma_default")]
    pub gamma: f64,
    #[serde(default = "t_grid_default")]
    pub t_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("."), format: Format::Json }
    }
}

/// A parsed run configuration.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub string: Option<StringConfig>,
    #[serde(default)]
    pub jump: Option<JumpConfig>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub bessel: Option<BesselConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn quarter() -> f64 {
    0.25
}
fn tab_lo() -> f64 {
    1e-6
}
fn tab_hi() -> f64 {
    1e6
}
fn tab_n() -> usize {
    241
}
fn gamma_default() -> f64 {
    1e4
}
fn t_grid_default() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

impl RunConfig {
    /// Parses TOML text; errors carry the line and column.
    pub fn parse(text: &str) -> Res<Self> {
        toml::from_str(text).map_err(|e| Failure::validation(format!("invalid config: {e}")))
    }

    fn apply(&mut self, c: &Common) {
        if let Some(d) = &c.out {
            self.output.dir = d.clone();
        }
        if let Some(f) = c.format {
            self.output.format = f;
        }
        if let Some(t) = c.tol {
            self.grid.tol = t;
        }
        if let Some(s) = c.seed {
            self.sim.seed = s;
        }
        if let Some(w) = c.workers {
            self.sim.workers = w;
        }
        if let Some(r) = c.replicates {
            self.sim.replicates = r;
        }
    }

    pub fn string_spec(&self) -> Res<StringSpec> {
        let s = self.string.as_ref().ok_or_else(|| Failure::validation("missing [string] section"))?;
        Ok(match s {
            StringConfig::Power { theta, coef } => StringSpec::power_with(*theta, *coef)?,
            StringConfig::Lebesgue { rho } => StringSpec::lebesgue(*rho)?,
            StringConfig::Bessel { alpha, s, eta_bar } => {
                natural_scale_string(&BesselDriftSpec::calibrated(*alpha, *s, *eta_bar)?.0)?
            }
            StringConfig::Tabulated { xs, ms } => StringSpec::tabulated(xs.clone(), ms.clone())?,
        })
    }

    pub fn jump_spec(&self) -> Res<Option<JumpMeasureSpec>> {
        let Some(j) = &self.jump else { return Ok(None) };
        Ok(Some(match j {
            JumpConfig::Pieces { lo, hi, coef, beta } => {
                let n = lo.len();
                if n == 0 || hi.len() != n || coef.len() != n || beta.len() != n {
                    return Err(Failure::validation(
                        "[jump] lo, hi, coef, beta must be non-empty and equally long",
                    ));
                }
                let mut acc = JumpMeasureSpec::power_piece(lo[0], hi[0], coef[0], beta[0])?;
                for i in 1..n {
                    acc = acc.plus(&JumpMeasureSpec::power_piece(lo[i], hi[i], coef[i], beta[i])?);
                }
                acc
            }
            JumpConfig::Bessel { alpha, a, t } => example_jump_measure(*alpha, *a, *t)?,
        }))
    }

    fn need_jump(&self) -> Res<JumpMeasureSpec> {
        self.jump_spec()?.ok_or_else(|| Failure::validation("missing [jump] section"))
    }

    pub fn scaling_family(&self) -> Res<ScalingFamily> {
        let f = self.family.as_ref().ok_or_else(|| Failure::validation("missing [family] section"))?;
        Ok(match f {
            FamilyConfig::Bessel { alpha, s, t, a, eps } => ScalingFamily::bessel(*alpha, *s, *t, *a, *eps)?,
            FamilyConfig::Pair { alpha, u, v, k, l } => {
                let one = SlowlyVarying::constant(1.0);
                ScalingFamily::new(self.string_spec()?, self.need_jump()?, *alpha, u.clone(), v.clone())?
                    .with_kl(k.clone().unwrap_or(one.clone()), l.clone().unwrap_or(one))
            }
        })
    }

    pub fn gammas(&self) -> Res<Vec<f64>> {
        match &self.grid.gammas {
            Some(g) => Ok(g.clone()),
            None => Ok(verify::log_grid(self.grid.gamma_lo, self.grid.gamma_hi, self.grid.gamma_n)?),
        }
    }
}

/// Where and how a run writes its files.
pub struct Sink {
    dir: PathBuf,
    format: Format,
    provenance: Value,
    written: Vec<PathBuf>,
}

impl Sink {
    fn new(dir: &Path, format: Format, provenance: Value) -> Res<Self> {
        fs::create_dir_all(dir).map_err(|e| {
            Failure::validation(format!("cannot create output directory {}: {e}", dir.display()))
        })?;
        Ok(Self { dir: dir.to_path_buf(), format, provenance, written: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Res<fs::File> {
        let path = self.dir.join(name);
        let f = fs::File::create(&path)
            .map_err(|e| Failure::validation(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(f)
    }

    fn io(e: impl fmt::Display) -> Failure {
        Failure::validation(format!("write failed: {e}"))
    }

    /// Writes a JSON document with the provenance record as its first key.
    pub fn json(&mut self, name: &str, body: Value) -> Res<()> {
        let mut doc = serde_json::Map::new();
        doc.insert("provenance".into(), self.provenance.clone());
        match body {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(Self::io)?;
        let mut f = self.create(name)?;
        writeln!(f, "{text}").map_err(Self::io)
    }

    /// Writes a table as CSV (provenance in leading comment lines) or JSON.
    pub fn table(&mut self, stem: &str, columns: &[&str], rows: &[Vec<String>]) -> Res<()> {
        match self.format {
            Format::Csv => {
                let mut f = self.create(&format!("{stem}.csv"))?;
                if let Value::Object(p) = &self.provenance {
                    for (k, v) in p {
                        let v = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
                        writeln!(f, "# {k}={v}").map_err(Self::io)?;
                    }
                }
                let mut w = csv::Writer::from_writer(f);
                w.write_record(columns).map_err(Self::io)?;
                for r in rows {
                    w.write_record(r).map_err(Self::io)?;
                }
                w.flush().map_err(Self::io)
            }
            Format::Json => {
                let body = json!({ "columns": columns, "rows": rows });
                self.json(&format!("{stem}.json"), body)
            }
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

/// SHA-256 of the config bytes followed by the overrides that can change
/// results (not the output directory or worker count).
pub fn config_hash(bytes: &[u8], c: &Common) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let overrides =
        format!("\nformat={:?};tol={:?};seed={:?};replicates={:?}", c.format, c.tol, c.seed, c.replicates);
    h.update(overrides.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            if summary.get("indeterminate").and_then(Value::as_u64).unwrap_or(0) > 0 {
                EXIT_INDETERMINATE
            } else {
                EXIT_OK
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Runs one subcommand and returns its summary.
pub fn run(cmd: &Command) -> Res<Value> {
    let common = match cmd {
        Command::StringAnalyze(c)
        | Command::Eigen(c)
        | Command::Chi(c)
        | Command::Bessel(c)
        | Command::Simulate(c)
        | Command::Verify(c) => c,
    };
    let bytes = fs::read(&common.config)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", common.config.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::validation(format!("{} is not UTF-8", common.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.apply(common);
    let provenance = json!({
        "config_sha256": config_hash(&bytes, common),
        "seed": cfg.sim.seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let mut sink = Sink::new(&cfg.output.dir, cfg.output.format, provenance)?;
    let summary = match cmd {
        Command::StringAnalyze(_) => cmd_string_analyze(&cfg, &mut sink)?,
        Command::Eigen(_) => cmd_eigen(&cfg, &mut sink)?,
        Command::Chi(_) => cmd_chi(&cfg, &mut sink)?,
        Command::Bessel(_) => cmd_bessel(&cfg, &mut sink)?,
        Command::Simulate(_) => cmd_simulate(&cfg, &mut sink)?,
        Command::Verify(_) => cmd_verify(&cfg, &mut sink)?,
    };
    let files: Vec<String> = sink.written().iter().map(|p| p.display().to_string()).collect();
    let mut out = summary;
    if let Value::Object(m) = &mut out {
        m.insert("files".into(), json!(files));
    }
    Ok(out)
}

fn d_json(d: SingularityIndex) -> Value {
    match d {
        SingularityIndex::Finite(k) => json!(k),
        SingularityIndex::ExceedsMax(k) => json!({ "exceeds": k }),
    }
}

pub fn cmd_string_analyze(cfg: &RunConfig, sink: &mut Sink) -> Res<Value> {
    let m = cfg.string_spec()?;
    let g = &cfg.grid;
    if g.xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Failure::validation("[grid].xs must be finite and positive"));
    }
    let d = d_of_m(&m, 12)?;
    if !(g.tol > 0.0 && g.tol < 1.0) {
        return Err(Failure::validation("[grid].tol must lie in (0, 1)"));
    }
    let class = stieltjes_integral(&m, &|x| x, 0.0, 1.0, g.tol)?.value;
    let k_max = match d {
        SingularityIndex::Finite(k) => g.k_max.min(k.max(1)),
        SingularityIndex::ExceedsMax(_) => g.k_max,
    };
    let x_hi = g.xs.iter().copied().fold(2.0, f64::max);
    let t = GTable::build(&m, k_max, 2f64.powi(DEEP_FLOOR_LOG2), x_hi, &g.xs, 0.0)?;
    let table: Vec<Value> =
        g.xs.iter()
            .map(|&x| {
                let gk: Vec<f64> = (1..=k_max).map(|k| t.value(k, x)).collect();
                json!({ "x": x, "g": gk })
            })
            .collect();
    let mut body = serde_json::Map::new();
    body.insert("d_of_m".into(), d_json(d));
    body.insert("class_integral".into(), json!(class));
    body.insert("g_table".into(), json!({ "k_max": k_max, "rows": table }));
    if let Some(j) = cfg.jump_spec()? {
        let c = check_condition_c(&m, &j)?;
        body.insert(
            "condition_c".into(),
            json!({
                "holds": c.holds,
                "tail_mass": c.tail_mass,
                "first_moment": c.first_moment,
                "g_moment": c.g_moment,
                "infinite_near_zero": c.infinite_near_zero,
            }),
        );
        let gammas = cfg.gammas()?;
        let n = gammas
            .iter()
            .map(|&gm| Ok(json!({ "gamma": gm, "n": n_of_gamma(&m, &j, gm)? })))
            .collect::<Res<Vec<Value>>>()?;
        body.insert("n_samples".into(), Value::Array(n));
    }
    let body = Value::Object(body);
    sink.json("string_report.json", body.clone())?;
    Ok(json!({ "command": "string-analyze", "d_of_m": body["d_of_m"] }))
}

pub fn cmd_eigen(cfg: &RunConfig, sink: &mut Sink) -> Res<Value> {
    let m = cfg.string_spec()?;
    let g = &cfg.grid;
    if g.xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Failure::validation("[grid].xs must be finite and positive"));
    }
    if g.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Failure::validation("[grid].lambdas must be finite and ≥ 0"));
    }
    let need = admissible_order(&m, 12)?;
    let d = match g.d {
        Some(d) if d < need => {
            return Err(Failure::validation(format!("d = {d} is below the admissible order {need}")))
        }
        Some(d) => d,
        None => need,
    };
    let columns =
        ["lambda", "x", "psi", "phi_d", "g", "c_d", "wronskian", "psi_bound", "phi_bound", "g_bound"];
    let mut rows = Vec::new();
    for &lambda in &g.lambdas {
        if lambda == 0.0 {
            for &x in &g.xs {
                rows.push([0.0, x, x, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0].map(num).to_vec());
            }
            continue;
        }
        let eig = Eigen::new(&m, lambda, &g.xs)?;
        let mn = ModifiedNeumann::new(&m, &eig, d)?;
        for &x in &g.xs {
            let p = eig.psi_at(x);
            let ge = eig.g_at(x);
            let phi = mn.phi_at(&eig, x);
            let w = ge.value * p.derivative_plus - mn.g_plus_at(&eig, x) * p.value;
            rows.push(
                [
                    lambda,
                    x,
                    p.value,
                    phi.value,
                    ge.value,
                    mn.cd,
                    w,
                    p.truncation_bound,
                    phi.truncation_bound,
                    ge.truncation_bound,
                ]
                .map(num)
                .to_vec(),
            );
        }
    }
    sink.table("eigen", &columns, &rows)?;
    Ok(json!({ "command": "eigen", "d": d, "rows": rows.len() }))
}

pub fn cmd_chi(cfg: &RunConfig, sink: &mut Sink) -> Res<Value> {
    let g = &cfg.grid;
    if g.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Failure::validation("[grid].lambdas must be finite and ≥ 0"));
    }
    if cfg.family.is_some() {
        let fam = cfg.scaling_family()?;
        if g.lambdas.contains(&0.0) {
            return Err(Failure::validation("κ̂ needs λ > 0"));
        }
        let rows = kappa_table(&fam, &cfg.gammas()?, &g.lambdas)?;
        let table: Vec<Vec<String>> =
            rows.iter().map(|r| [r.gamma, r.lambda, r.chi_tilde, r.kappa_hat].map(num).to_vec()).collect();
        sink.table("kappa", &["gamma", "lambda", "chi_tilde", "kappa_hat"], &table)?;
        return Ok(json!({ "command": "chi", "rows": table.len() }));
    }
    let m = cfg.string_spec()?;
    let j = cfg.need_jump()?;
    let b = match b_mean(&m, &j) {
        Ok(b) => b,
        Err(Error::Divergence(_)) => f64::INFINITY,
        Err(e) => return Err(e.into()),
    };
    let table =
        g.lambdas.iter().map(|&l| Ok([l, chi(&m, &j, l)?].map(num).to_vec())).collect::<Res<Vec<_>>>()?;
    sink.table("chi", &["lambda", "chi"], &table)?;
    Ok(
        json!({ "command": "chi", "b": if b.is_finite() { json!(b) } else { json!("infinite") }, "rows": table.len() }),
    )
}

pub fn cmd_bessel(cfg: &RunConfig, sink: &mut Sink) -> Res<Value> {
    let bc = cfg.bessel.as_ref().ok_or_else(|| Failure::validation("missing [bessel] section"))?;
    let alpha = match (bc.delta, bc.alpha) {
        (Some(d), None) => alpha_of_delta(d)?,
        (None, Some(a)) => a,
        _ => return Err(Failure::validation("[bessel] needs exactly one of delta, alpha")),
    };
    let (drift, cal) = BesselDriftSpec::calibrated(alpha, bc.s, bc.eta_bar)?;
    let string = natural_scale_string(&drift)?;
    let (xs, ms) = to_tabulated(&string, bc.tab_lo, bc.tab_hi, bc.tab_n)?;
    // the N(γ) asymptotics only exist for α ≥ 2
    let (c, e) = if alpha >= 2.0 {
        (json!(n_asymptotic_constant(alpha, bc.s, bc.t)?), json!(n_asymptotic_exponent(alpha, bc.s, bc.t)))
    } else {
        (Value::Null, Value::Null)
    };
    let mut f = sink.create("induced_string.toml")?;
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    writeln!(f, "# config_sha256={}", sink.provenance["config_sha256"].as_str().unwrap_or(""))
        .and_then(|_| {
            writeln!(f, "[string]\nfamily = \"tabulated\"\nxs = [{}]\nms = [{}]", list(&xs), list(&ms))
        })
        .map_err(Sink::io)?;
    let summary = json!({
        "delta": drift.delta,
        "alpha": alpha,
        "s": bc.s,
        "t": bc.t,
        "x0_residual": cal.residual,
        "calibrated": cal.solved,
        "n_constant": c,
        "n_log_exponent": e,
    });
    sink.json("bessel.json", summary.clone())?;
    let mut out = json!({ "command": "bessel" });
    out["alpha"] = json!(alpha);
    out["delta"] = summary["delta"].clone();
    Ok(out)
}

pub fn cmd_simulate(cfg: &RunConfig, sink: &mut Sink) -> Res<Value> {
    let ex = cfg.experiment.as_ref().ok_or_else(|| Failure::validation("missing [experiment] section"))?;
    let sim = &cfg.sim;
    sim.validate()?;
    let stats = |v: &[f64]| {
        let (mean, var) = mean_var(v);
        json!({ "mean": mean, "se": (var / v.len() as f64).sqrt(), "variance": var, "n": v.len() })
    };
    let rows_of = |v: &[f64]| -> Vec<Vec<String>> {
        v.iter().enumerate().map(|(i, x)| vec![i.to_string(), num(*x)]).collect()
    };
    let summary = match ex.kind {
        ExperimentKind::T0 => {
            let m = cfg.string_spec()?;
            let t0 = sample_t0_batch(&m, ex.x, sim)?;
            sink.table("t0", &["replicate", "t0"], &rows_of(&t0))?;
            json!({ "experiment": "t0", "x": ex.x, "green_mean": m.green_mean(ex.x)?, "t0": stats(&t0) })
        }
        ExperimentKind::Eta => {
            let m = cfg.string_spec()?;
            let j = cfg.need_jump()?;
            let run = eta_experiment(&m, &j, sim)?;
            sink.table("eta", &["replicate", "slope"], &rows_of(&run.slopes))?;
            json!({
                "experiment": "eta",
                "horizon": run.horizon,
                "b_eps": run.b_eps,
                "expected_points": run.expected_points,
                "slope": stats(&run.slopes),
            })
        }
        ExperimentKind::Occupation => {
            let m = cfg.string_spec()?;
            let j = cfg.need_jump()?;
            if !(ex.minus_scale > 0.0 && ex.minus_scale.is_finite()) {
                return Err(Failure::validation("[experiment].minus_scale must be positive"));
            }
            let minus = j.scaled(ex.minus_scale, 1.0)?;
            let bi = BilateralSpec { plus: (m.clone(), j), minus: (m, minus) };
            let run = occupation_experiment(&bi, sim)?;
            sink.table("occupation", &["replicate", "ratio"], &rows_of(&run.ratios))?;
            json!({ "experiment": "occupation", "t": run.t, "p": run.p, "ratio": stats(&run.ratios) })
        }
        ExperimentKind::Fluctuation => {
            let fam = cfg.scaling_family()?;
            let run = fluctuation_experiment(&fam, ex.gamma, &ex.t_grid, sim)?;
            let mut cols = vec!["replicate".to_string()];
            cols.extend(run.t_grid.iter().map(|t| format!("z_{t}")));
            let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = run
                .z
                .iter()
                .enumerate()
                .map(|(i, r)| std::iter::once(i.to_string()).chain(r.iter().map(|v| num(*v))).collect())
                .collect();
            sink.table("fluctuation", &col_refs, &rows)?;
            json!({
                "experiment": "fluctuation",
                "gamma": run.gamma,
                "b": run.b,
                "b_eps": run.b_eps,
                "columns": run.summary.iter().map(|c| json!({
                    "t": c.t, "mean": c.mean, "se_mean": c.se_mean, "variance": c.variance, "ks": c.ks
                })).collect::<Vec<_>>(),
            })
        }
    };
    sink.json("simulate_summary.json", summary.clone())?;
    Ok(json!({ "command": "simulate", "summary": summary }))
}

fn counts(fs: &[Functional]) -> BTreeMap<&'static str, usize> {
    let n = |o| fs.iter().filter(|f| f.outcome == o).count();
    BTreeMap::from([
        ("pass", n(Outcome::Pass)),
        ("fail", n(Outcome::Fail)),
        ("indeterminate", n(Outcome::Indeterminate)),
    ])
}

pub fn cmd_verify(cfg: &RunConfig, sink: &mut Sink) -> Res<Value> {
    if cfg.sim.workers == 0 {
        return verify_in_pool(cfg, sink);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sim.workers)
        .build()
        .map_err(|e| Failure::validation(format!("thread pool: {e}")))?
        .install(|| verify_in_pool(cfg, sink))
}

fn verify_in_pool(cfg: &RunConfig, sink: &mut Sink) -> Res<Value> {
    let fam = cfg.scaling_family()?;
    let gammas = cfg.gammas()?;
    let g = &cfg.grid;
    let mut fs: Vec<Functional> = Vec::new();
    let mut kappa = Vec::new();
    let mut d = 0;
    // each stage is flushed before the next so a failure leaves partial results
    let stage = |fs: &mut Vec<Functional>, r: crate::Result<Vec<Functional>>, sink: &mut Sink| -> Res<()> {
        match r {
            Ok(v) => {
                fs.extend(v);
                Ok(())
            }
            Err(e) => {
                let partial =
                    json!({ "complete": false, "gammas": gammas, "functionals": fs, "error": e.to_string() });
                sink.json("verify_partial.json", partial)?;
                Err(e.into())
            }
        }
    };
    let gc = verify::check_g_convergence(&fam, g.d, &gammas).map(|(f, dd)| {
        d = dd;
        vec![f]
    });
    stage(&mut fs, gc, sink)?;
    stage(&mut fs, verify::check_kappa_delta(&fam, &g.test_fns, &gammas), sink)?;
    stage(&mut fs, verify::check_minor_conditions(&fam, &gammas), sink)?;
    if fam.alpha.fract() == 0.0 {
        stage(&mut fs, verify::check_integer_alpha(&fam, d, &gammas), sink)?;
    }
    let lap = verify::laplace_limit_report(&fam, &g.lambdas, &gammas).map(|(f, rows)| {
        kappa = rows;
        f
    });
    stage(&mut fs, lap, sink)?;
    let c = counts(&fs);
    let report = SweepReport { gammas: gammas.clone(), d, functionals: fs, kappa };
    let value = serde_json::to_value(&report).map_err(Sink::io)?;
    match sink.format {
        Format::Json => sink.json("verify.json", value)?,
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            let mut f = sink.create("verify.csv")?;
            if let Value::Object(p) = &sink.provenance {
                for (k, v) in p {
                    let v = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
                    writeln!(f, "# {k}={v}").map_err(Sink::io)?;
                }
            }
            f.write_all(&buf).map_err(Sink::io)?;
        }
    }
    let verdicts: BTreeMap<&str, Outcome> =
        report.functionals.iter().map(|f| (f.name.as_str(), f.outcome)).collect();
    let summary = json!({ "d": d, "counts": c, "verdicts": verdicts });
    sink.json("verify_summary.json", summary)?;
    Ok(json!({
        "command": "verify",
        "pass": c["pass"],
        "fail": c["fail"],
        "indeterminate": c["indeterminate"],
    }))
}
