//! Declarative runs: a [`RunConfig`] (TOML file plus overrides) and a
//! [`Command`] produce CSV/SVG artifacts and a JSON manifest in one output
//! directory.
//!
//! Output is a pure function of the configuration: parallel work is merged in
//! input order and the optional start jitter is drawn from a seeded stream.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::{self, Branch, ContinuationConfig, Termination};
use crate::diagram::{self, CsvSource, DiagramOptions, DEFAULT_SVG_SIZE};
use crate::discretize::Scheme;
use crate::eigencurve::{self, BifurcationPoint, CurveModel, EigencurveSample};
use crate::nonlinear::NonlinearProblem;
use crate::parallel::{self, Exec};
use crate::perturbation::{self, Route};
use crate::weights::WeightFunction;
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "NODAL_OUT";
pub const DEFAULT_OUTPUT_ROOT: &str = "nodal-out";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Agreement demanded between the closed form and the eigencurve stencil.
pub const THEOREM_REL_TOL: f64 = 1e-4;
pub const THEOREM_ABS_TOL: f64 = 1e-6;
/// Agreement demanded between the quadrature route and the closed form.
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Relative tolerance for `lambda` pairs to count as mirror images.
pub const PAIR_TOL: f64 = 1e-4;
/// Tolerance on `Sigma_n(0) = (n pi)^2` per scheme.
pub const SPECTRAL_BASELINE_TOL: f64 = 1e-8;
pub const FD_BASELINE_TOL: f64 = 5e-3;
pub const SYMMETRY_TOL: f64 = 1e-6;
/// Profiles drawn per branch in profile plots.
const PROFILES_PER_BRANCH: usize = 6;

static RECIPES: [(&str, &str); 8] = [
    ("fig1", include_str!("../recipes/fig1.toml")),
    ("fig2", include_str!("../recipes/fig2.toml")),
    ("fig3", include_str!("../recipes/fig3.toml")),
    ("fig4", include_str!("../recipes/fig4.toml")),
    ("fig5", include_str!("../recipes/fig5.toml")),
    ("fig6", include_str!("../recipes/fig6.toml")),
    ("fig7", include_str!("../recipes/fig7.toml")),
    ("fig8", include_str!("../recipes/fig8.toml")),
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    #[serde(alias = "finite-difference")]
    Fd,
    #[default]
    Spectral,
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fd" | "finite-difference" => Ok(SchemeKind::Fd),
            "spectral" => Ok(SchemeKind::Spectral),
            other => Err(Error::Parse(format!("unknown scheme `{other}` (expected fd or spectral)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Indefinite weight `m`, e.g. `sine:2`.
    pub m: String,
    /// Nonlinear coefficient `a`, e.g. `piecewise-sine`.
    pub a: String,
    /// Scheme for eigencurve work; branch tracing always uses finite differences.
    pub scheme: SchemeKind,
    pub n_interior: usize,
    pub n_modes: usize,
    pub range: (f64, f64),
    pub step: f64,
    pub mu: Option<f64>,
    pub mu_list: Vec<f64>,
    /// Empty means the command's default.
    pub modes: Vec<usize>,
    /// Frequency of `m = sin(2 k pi x)` in theorem checks.
    pub k: usize,
    pub continuation: ContinuationConfig,
    /// Increments of a mu-homotopy between consecutive sweep levels.
    pub homotopy_steps: usize,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Relative spread of the branch-switch amplitude drawn from `seed`.
    pub jitter: f64,
    pub jobs: Option<usize>,
    pub title: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: "sine:2".into(),
            a: "piecewise-sine".into(),
            scheme: SchemeKind::Spectral,
            n_interior: 2000,
            n_modes: 64,
            range: eigencurve::DEFAULT_RANGE,
            step: eigencurve::DEFAULT_STEP,
            mu: None,
            mu_list: Vec::new(),
            modes: Vec::new(),
            k: 1,
            continuation: ContinuationConfig::default(),
            homotopy_steps: 20,
            out: None,
            seed: 0,
            jitter: 0.0,
            jobs: None,
            title: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&diagram::read_text(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn m_weight(&self) -> Result<WeightFunction> {
        WeightFunction::from_str(&self.m).map_err(|e| Error::Config(format!("m: {e}")))
    }

    pub fn a_weight(&self) -> Result<WeightFunction> {
        WeightFunction::from_str(&self.a).map_err(|e| Error::Config(format!("a: {e}")))
    }

    pub fn scheme(&self) -> Scheme {
        match self.scheme {
            SchemeKind::Fd => Scheme::FiniteDifference {
                n_interior: self.n_interior,
            },
            SchemeKind::Spectral => Scheme::Spectral { n_modes: self.n_modes },
        }
    }

    /// Levels to run at: `mu_list`, else the single `mu`.
    pub fn levels(&self) -> Vec<f64> {
        if self.mu_list.is_empty() {
            self.mu.into_iter().collect()
        } else {
            self.mu_list.clone()
        }
    }

    pub fn modes_for(&self, command: &Command) -> Vec<usize> {
        if !self.modes.is_empty() {
            return self.modes.clone();
        }
        match command {
            Command::VerifyTheorem => (self.k + 1..=5).collect(),
            _ => (1..=5).collect(),
        }
    }

    /// Output directory: `out`, else `$NODAL_OUT/<command>`, else `nodal-out/<command>`.
    pub fn output_dir(&self, command: &Command) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        let root = std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from);
        root.join(command.slug())
    }

    pub fn validate(&self, command: &Command) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.m_weight()?;
        self.a_weight()?;
        self.scheme().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.range.0 < self.range.1) || !self.range.0.is_finite() || !self.range.1.is_finite() {
            return bad(format!("range {:?} is empty or not finite", self.range));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if self.levels().iter().any(|m| !m.is_finite()) {
            return bad("mu values must be finite".into());
        }
        if self.modes.contains(&0) {
            return bad("modes are numbered from 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.homotopy_steps == 0 {
            return bad("homotopy_steps must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if !(self.jitter >= 0.0 && self.jitter < 1.0) {
            return bad("jitter must lie in [0, 1)".into());
        }
        self.continuation.validate()?;
        match command {
            Command::BifPoints | Command::Branch | Command::Sweep if self.levels().is_empty() => {
                bad(format!("{} needs mu or mu_list", command.slug()))
            }
            Command::VerifyTheorem => {
                let modes = self.modes_for(command);
                match modes.iter().find(|&&n| n <= self.k) {
                    Some(n) => bad(format!("verify-theorem needs modes above k = {} (got {n})", self.k)),
                    None if modes.is_empty() => bad(format!("no modes above k = {}", self.k)),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Continuation settings after the seeded amplitude jitter.
    fn continuation_with_jitter(&self) -> ContinuationConfig {
        let mut cfg = self.continuation.clone();
        if self.jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            cfg.amplitude *= 1.0 + self.jitter * rng.random_range(-1.0..1.0);
        }
        cfg
    }
}

/// Values that replace fields of a loaded [`RunConfig`]; unset fields keep it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub m: Option<String>,
    pub a: Option<String>,
    pub scheme: Option<SchemeKind>,
    pub n_interior: Option<usize>,
    pub n_modes: Option<usize>,
    pub range: Option<(f64, f64)>,
    pub step: Option<f64>,
    pub mu: Option<f64>,
    pub mu_list: Option<Vec<f64>>,
    pub modes: Option<Vec<usize>>,
    pub k: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = &self.$f { cfg.$f = v.clone(); } )*};
        }
        set!(m, a, scheme, n_interior, n_modes, range, step, mu_list, modes, k, seed);
        if let Some(mu) = self.mu {
            cfg.mu = Some(mu);
            if self.mu_list.is_none() {
                cfg.mu_list.clear();
            }
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
    }

    /// Settings that make sense for every run of a recipe: resolution,
    /// parallelism and seed, but not the figure's own weights or levels.
    fn apply_to_recipe(&self, cfg: &mut RunConfig) {
        let shared = Overrides {
            scheme: self.scheme,
            n_interior: self.n_interior,
            n_modes: self.n_modes,
            step: self.step,
            seed: self.seed,
            jobs: self.jobs,
            ..Overrides::default()
        };
        shared.apply(cfg);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Eigencurves,
    VerifyTheorem,
    BifPoints,
    Branch,
    Sweep,
    Reproduce(String),
    Plot { inputs: Vec<PathBuf> },
}

impl Command {
    pub fn slug(&self) -> String {
        match self {
            Command::Eigencurves => "eigencurves".into(),
            Command::VerifyTheorem => "verify-theorem".into(),
            Command::BifPoints => "bifpoints".into(),
            Command::Branch => "branch".into(),
            Command::Sweep => "sweep".into(),
            Command::Reproduce(fig) => format!("reproduce-{fig}"),
            Command::Plot { .. } => "plot".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    /// Paths relative to the output directory, sorted.
    pub artifacts: Vec<String>,
    pub checks: Vec<Check>,
    pub info: serde_json::Value,
    pub timings_ms: BTreeMap<String, u64>,
    pub status: String,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.manifest.checks.iter().all(|c| c.passed)
    }
}

/// A run that stopped early, with the stage that failed.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct RunFailure {
    pub stage: String,
    #[source]
    pub source: Error,
}

impl RunFailure {
    /// 2 for invalid configuration or input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.source {
            Error::Config(_) | Error::Parse(_) => 2,
            _ => 1,
        }
    }
}

trait Stage<T> {
    fn stage(self, name: &str) -> std::result::Result<T, RunFailure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &str) -> std::result::Result<T, RunFailure> {
        self.map_err(|source| RunFailure {
            stage: name.to_string(),
            source,
        })
    }
}

/// Collects artifacts, checks and timings for one output directory.
struct Job {
    dir: PathBuf,
    artifacts: Vec<String>,
    checks: Vec<Check>,
    info: serde_json::Map<String, serde_json::Value>,
    timings: BTreeMap<String, u64>,
}

impl Job {
    fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            artifacts: Vec::new(),
            checks: Vec::new(),
            info: serde_json::Map::new(),
            timings: BTreeMap::new(),
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> std::result::Result<(), RunFailure> {
        diagram::write_text(&self.dir.join(name), contents).stage("write artifacts")?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, src: CsvSource<'_>) -> std::result::Result<(), RunFailure> {
        let text = diagram::to_csv(src).stage("export csv")?;
        self.write(name, &text)
    }

    fn svg(&mut self, name: &str, doc: &diagram::DiagramDocument) -> std::result::Result<(), RunFailure> {
        self.write(name, &diagram::render_svg(doc, DEFAULT_SVG_SIZE))
    }

    fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.timings.entry(name.to_string()).or_default() += t.elapsed().as_millis() as u64;
        out
    }

    fn info(&mut self, key: &str, value: impl Serialize) {
        self.info
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    fn finish(mut self, command: &Command, cfg: &RunConfig, manifest_name: &str) -> std::result::Result<RunReport, RunFailure> {
        self.artifacts.sort();
        let passed = self.checks.iter().all(|c| c.passed);
        let manifest = Manifest {
            tool: "nodal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.slug(),
            config: cfg.clone(),
            artifacts: self.artifacts,
            checks: self.checks,
            info: serde_json::Value::Object(self.info),
            timings_ms: self.timings,
            status: if passed { "passed" } else { "checks-failed" }.into(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| RunFailure {
            stage: "write manifest".into(),
            source: Error::Parse(e.to_string()),
        })?;
        diagram::write_text(&self.dir.join(manifest_name), &(json + "\n")).stage("write manifest")?;
        Ok(RunReport {
            dir: self.dir,
            manifest,
        })
    }
}

/// Run `command` with `cfg`; see the module docs for the output layout.
/// `overrides` matter only for [`Command::Reproduce`], where they adjust
/// every run of the recipe (other commands expect them already in `cfg`).
pub fn run(command: &Command, cfg: &RunConfig, overrides: &Overrides) -> std::result::Result<RunReport, RunFailure> {
    cfg.validate(command).stage("validate config")?;
    let dir = match command {
        Command::Plot { .. } => PathBuf::new(),
        _ => cfg.output_dir(command),
    };
    parallel::with_jobs(cfg.jobs, || match command {
        Command::Reproduce(fig) => reproduce(fig, cfg, overrides),
        Command::Plot { inputs } => plot(inputs, cfg),
        _ => {
            let mut job = Job::new(dir);
            execute(command, cfg, &mut job)?;
            job.finish(command, cfg, MANIFEST_FILE)
        }
    })
}

fn execute(command: &Command, cfg: &RunConfig, job: &mut Job) -> std::result::Result<(), RunFailure> {
    match command {
        Command::Eigencurves => eigencurves(cfg, job),
        Command::VerifyTheorem => verify_theorem(cfg, job),
        Command::BifPoints => bifpoints(cfg, job),
        Command::Branch | Command::Sweep => sweep(cfg, job, &[]),
        Command::Reproduce(_) | Command::Plot { .. } => Err(RunFailure {
            stage: "dispatch".into(),
            source: Error::Config(format!("{} cannot be nested", command.slug())),
        }),
    }
}

fn eigencurves(cfg: &RunConfig, job: &mut Job) -> std::result::Result<(), RunFailure> {
    let m = cfg.m_weight().stage("validate config")?;
    let modes = cfg.modes_for(&Command::Eigencurves);
    let model = CurveModel::new(m.clone(), cfg.scheme()).stage("build model")?;
    let samples = job
        .timed("sample", || eigencurve::sample_modes(&model, &modes, cfg.range, cfg.step, Exec::Parallel))
        .stage("sample eigencurves")?;
    job.csv("curves.csv", CsvSource::Eigencurves(&samples))?;
    let title = cfg.title.clone().unwrap_or_else(|| format!("Sigma_n(lambda), m = {m}"));
    job.svg("curves.svg", &diagram::eigencurve_diagram(&samples, &title))?;

    let tol = match cfg.scheme {
        SchemeKind::Spectral => SPECTRAL_BASELINE_TOL,
        SchemeKind::Fd => FD_BASELINE_TOL,
    };
    for s in &samples {
        if let Some(v) = s.value_at(0.0) {
            let exact = (s.mode as f64 * std::f64::consts::PI).powi(2);
            let err = (v - exact).abs();
            job.checks.push(Check::new(
                format!("sigma_{}(0) = (n pi)^2", s.mode),
                err <= tol,
                format!("|error| = {err:.3e}, tolerance {tol:.0e}"),
            ));
        }
    }
    if m.is_odd_about_half(1e-12) {
        for s in &samples {
            let dev = symmetry_defect(s);
            job.checks.push(Check::new(
                format!("sigma_{} even in lambda", s.mode),
                dev <= SYMMETRY_TOL,
                format!("max |Sigma(l) - Sigma(-l)| = {dev:.3e}"),
            ));
        }
    }
    let concavity: Vec<_> = samples.iter().filter_map(|s| eigencurve::concavity_report(s).ok()).collect();
    job.info("concavity", &concavity);
    Ok(())
}

/// Largest `|Sigma(l) - Sigma(-l)|` over sample pairs mirrored about 0.
pub fn symmetry_defect(s: &EigencurveSample) -> f64 {
    s.lambdas
        .iter()
        .zip(&s.values)
        .filter_map(|(&l, &v)| s.value_at(-l).map(|w| (v - w).abs()))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
struct TheoremRow {
    n: usize,
    k: usize,
    published: f64,
    closed_form: Option<f64>,
    quadrature: Option<f64>,
    curve_fd: f64,
}

fn verify_theorem(cfg: &RunConfig, job: &mut Job) -> std::result::Result<(), RunFailure> {
    let k = cfg.k;
    let modes = cfg.modes_for(&Command::VerifyTheorem);
    let curve = job
        .timed("curve_fd", || {
            parallel::try_map(Exec::Parallel, &modes, |&n| perturbation::sigma_ddot_zero(n, k, Route::CurveFd))
        })
        .stage("eigencurve second difference")?;
    let mut rows = Vec::new();
    let mut csv = String::from("n,k,published,closed_form,quadrature,curve_fd\n");
    for (&n, &fd) in modes.iter().zip(&curve) {
        let row = TheoremRow {
            n,
            k,
            published: perturbation::theorem_value(n, k),
            closed_form: perturbation::sigma_ddot_zero(n, k, Route::ClosedForm).ok(),
            quadrature: perturbation::sigma_ddot_zero(n, k, Route::Quadrature).ok(),
            curve_fd: fd,
        };
        let opt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), diagram::format_number);
        csv.push_str(&format!(
            "{n},{k},{},{},{},{}\n",
            diagram::format_number(row.published),
            opt(row.closed_form),
            opt(row.quadrature),
            diagram::format_number(fd)
        ));
        let err = (fd - row.published).abs();
        let tol = THEOREM_REL_TOL * row.published.abs() + THEOREM_ABS_TOL;
        job.checks.push(Check::new(
            format!("curve_fd matches 1/(4 pi^2 (n^2 - k^2)) for n={n}, k={k}"),
            err <= tol,
            format!("curve_fd = {fd:.10e}, published = {:.10e}, |diff| = {err:.3e}, tolerance {tol:.3e}", row.published),
        ));
        if let (Some(c), Some(q)) = (row.closed_form, row.quadrature) {
            let d = (c - q).abs();
            job.checks.push(Check::new(
                format!("quadrature matches closed form for n={n}, k={k}"),
                d <= QUADRATURE_TOL,
                format!("|diff| = {d:.3e}"),
            ));
        }
        rows.push(row);
    }
    job.write("theorem.csv", &csv)?;
    job.info("rows", &rows);
    Ok(())
}

fn bifpoints_csv(points: &[BifurcationPoint]) -> String {
    let f = diagram::format_number;
    let mut out = String::from("mode,label,lambda,mu,slope,boundary,tangent\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.mode,
            p.label,
            f(p.lambda),
            f(p.mu),
            f(p.slope),
            u8::from(p.boundary),
            u8::from(p.tangent)
        ));
    }
    out
}

/// Roots of an odd weight come in pairs `lambda, -lambda` within each mode.
fn pair_check(points: &[BifurcationPoint], mode: usize) -> Check {
    let ls: Vec<f64> = points.iter().filter(|p| p.mode == mode).map(|p| p.lambda).collect();
    let worst = ls
        .iter()
        .map(|&l| ls.iter().map(|&r| (l + r).abs() / l.abs().max(1.0)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Check::new(
        format!("mode {mode} roots in symmetric pairs"),
        worst <= PAIR_TOL,
        format!("{} roots, worst relative pair defect {worst:.3e}", ls.len()),
    )
}

fn bifpoints(cfg: &RunConfig, job: &mut Job) -> std::result::Result<(), RunFailure> {
    let m = cfg.m_weight().stage("validate config")?;
    let modes = cfg.modes_for(&Command::BifPoints);
    let model = CurveModel::new(m.clone(), cfg.scheme()).stage("build model")?;
    let samples = job
        .timed("sample", || eigencurve::sample_modes(&model, &modes, cfg.range, cfg.step, Exec::Parallel))
        .stage("sample eigencurves")?;
    let mut all = Vec::new();
    for mu in cfg.levels() {
        for s in &samples {
            let roots = job.timed("roots", || eigencurve::roots_at_level(&model, s, mu)).stage("locate roots")?;
            all.extend(roots);
        }
    }
    all.sort_by(|a, b| a.mu.total_cmp(&b.mu).then(a.lambda.total_cmp(&b.lambda)).then(a.mode.cmp(&b.mode)));
    job.write("bifpoints.csv", &bifpoints_csv(&all))?;
    if m.is_odd_about_half(1e-12) {
        for mu in cfg.levels() {
            let at: Vec<_> = all.iter().filter(|p| p.mu == mu).cloned().collect();
            for &n in &modes {
                let mut c = pair_check(&at, n);
                c.name = format!("{} at mu = {mu}", c.name);
                job.checks.push(c);
            }
        }
    }
    let maxima: Vec<_> = samples.iter().map(|s| eigencurve::curve_maximum(&model, s).ok()).collect();
    job.info("curve_maxima", &maxima);
    job.info("points", &all);
    Ok(())
}

/// Expected outcome of one level of a sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub mu: f64,
    /// Number of groups of anchors joined by branches.
    pub components: Option<usize>,
    /// Anchor groups, as lists of (mode, label) pairs written `"2:minus-outer"`.
    pub linked: Option<Vec<Vec<String>>>,
    /// Whether any branch at this level is allowed to touch `u = 0`.
    pub touches_trivial: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSummary {
    pub id: String,
    pub points: usize,
    pub node_count: Option<usize>,
    pub termination: String,
    pub backward_termination: Option<String>,
    pub min_l2: f64,
    pub max_l2: f64,
    pub lambda_span: (f64, f64),
}

impl BranchSummary {
    pub fn of(b: &Branch) -> Self {
        let lambdas = b.points.iter().map(|p| p.state.lambda);
        Self {
            id: b.id.clone(),
            points: b.points.len(),
            node_count: b.node_count(),
            termination: b.termination.to_string(),
            backward_termination: b.backward_termination.as_ref().map(ToString::to_string),
            min_l2: b.min_l2(),
            max_l2: b.points.iter().map(|p| p.l2).fold(0.0, f64::max),
            lambda_span: (
                lambdas.clone().fold(f64::INFINITY, f64::min),
                lambdas.fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelSummary {
    pub mu: f64,
    pub anchors: Vec<BifurcationPoint>,
    pub components: Vec<Vec<usize>>,
    pub branches: Vec<BranchSummary>,
}

/// Outcome of one sweep level, kept for the next level's homotopies.
pub struct Level {
    pub mu: f64,
    pub anchors: Vec<BifurcationPoint>,
    pub components: Vec<Vec<usize>>,
    pub branches: Vec<Branch>,
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Trace every mode at one level. Modes without bifurcation values at `mu`
/// are reached by mu-homotopy from the branches of `previous`, if any.
pub fn trace_level(
    problem: &NonlinearProblem,
    mu: f64,
    modes: &[usize],
    cont: &ContinuationConfig,
    homotopy_steps: usize,
    previous: Option<&Level>,
) -> Result<Level> {
    let run = continuation::trace_all(problem, mu, modes, cont, Exec::Parallel)?;
    let components = run.components();
    let mut branches = run.branches;
    let missing: Vec<usize> = modes.iter().copied().filter(|&n| !run.points.iter().any(|p| p.mode == n)).collect();
    if let Some(prev) = previous {
        let sources: Vec<&Branch> = prev
            .branches
            .iter()
            .filter(|b| b.node_count().is_some_and(|k| missing.contains(&(k + 1))))
            .filter(|b| !matches!(b.termination, Termination::HomotopyFailed { .. }))
            .collect();
        let continued = parallel::try_map(Exec::Parallel, &sources, |b| {
            continuation::mu_homotopy(problem, b, mu, homotopy_steps, cont, &run.anchors)
        })?;
        for h in continued {
            let failed = matches!(h.termination, Termination::HomotopyFailed { .. });
            let duplicate = branches.iter().any(|b| same_curve(b, &h, cont.ds_max));
            if !failed && !duplicate {
                branches.push(h);
            }
        }
    }
    Ok(Level {
        mu,
        anchors: run.points,
        components,
        branches,
    })
}

/// True when the largest point of `b` lies on `a` in the diagram plane.
fn same_curve(a: &Branch, b: &Branch, tol: f64) -> bool {
    if a.mu != b.mu || a.node_count() != b.node_count() {
        return false;
    }
    let Some(top) = b.max_l2_index() else { return false };
    let (l, n) = (b.points[top].state.lambda, b.points[top].l2);
    a.points.iter().any(|p| (p.state.lambda - l).hypot(p.l2 - n) < tol)
}

fn anchor_key(p: &BifurcationPoint) -> String {
    format!("{}:{}", p.mode, p.label)
}

fn level_checks(level: &Level, modes: &[usize], expect: Option<&Expectation>) -> Vec<Check> {
    let mut checks = Vec::new();
    let mu = level.mu;
    for b in &level.branches {
        if let continuation::BranchOrigin::TrivialBifurcation { point, .. } = &b.origin {
            let wrong = b.points.iter().filter(|p| p.node_count + 1 != point.mode).count();
            checks.push(Check::new(
                format!("{} keeps {} interior zeros", b.id, point.mode - 1),
                wrong == 0,
                format!("{wrong} of {} points differ", b.points.len()),
            ));
        }
    }
    let Some(e) = expect else { return checks };
    if let Some(c) = e.components {
        checks.push(Check::new(
            format!("mu = {mu}: {c} components"),
            level.components.len() == c,
            format!("found {:?}", level.components),
        ));
    }
    if let Some(linked) = &e.linked {
        let found: Vec<Vec<String>> = level
            .components
            .iter()
            .map(|g| {
                let mut v: Vec<String> = g.iter().map(|&i| anchor_key(&level.anchors[i])).collect();
                v.sort();
                v
            })
            .collect();
        let mut want: Vec<Vec<String>> = linked
            .iter()
            .map(|g| {
                let mut v = g.clone();
                v.sort();
                v
            })
            .collect();
        want.sort();
        let mut got = found.clone();
        got.sort();
        checks.push(Check::new(format!("mu = {mu}: attachment pattern"), got == want, format!("found {found:?}")));
    }
    if let Some(allowed) = e.touches_trivial {
        let homotopy: Vec<&Branch> = level
            .branches
            .iter()
            .filter(|b| matches!(b.origin, continuation::BranchOrigin::MuHomotopy { .. }))
            .collect();
        let touching = level.branches.iter().any(|b| b.reconnects()) || !level.anchors.is_empty();
        let min_l2 = homotopy.iter().map(|b| b.min_l2()).fold(f64::INFINITY, f64::min);
        let ok = allowed || (!touching && !homotopy.is_empty() && min_l2 > 1e-3);
        checks.push(Check::new(
            format!("mu = {mu}: branches {} u = 0", if allowed { "may touch" } else { "stay away from" }),
            ok,
            format!(
                "{} anchors, {} continued branches, min l2 {min_l2:.4}, modes {modes:?}",
                level.anchors.len(),
                homotopy.len()
            ),
        ));
    }
    checks
}

fn sweep(cfg: &RunConfig, job: &mut Job, expect: &[Expectation]) -> std::result::Result<(), RunFailure> {
    let m = cfg.m_weight().stage("validate config")?;
    let a = cfg.a_weight().stage("validate config")?;
    let modes = cfg.modes_for(&Command::Sweep);
    let problem = NonlinearProblem::new(m.clone(), a, cfg.n_interior).stage("build problem")?;
    let cont = cfg.continuation_with_jitter();
    let mut previous: Option<Level> = None;
    let mut summaries = Vec::new();
    for mu in cfg.levels() {
        let stage = format!("trace branches at mu = {mu}");
        let level = job
            .timed(&format!("trace_mu{mu}"), || {
                trace_level(&problem, mu, &modes, &cont, cfg.homotopy_steps, previous.as_ref())
            })
            .stage(&stage)?;
        let prefix = format!("mu{mu}");
        job.write(&format!("{prefix}/bifpoints.csv"), &bifpoints_csv(&level.anchors))?;
        for b in &level.branches {
            let name = sanitize(&b.id);
            job.csv(&format!("{prefix}/branch_{name}.csv"), CsvSource::Branch(b))?;
            if let Some(top) = b.max_l2_index() {
                let u = &b.points[top].state.u;
                job.csv(&format!("{prefix}/profile_{name}.csv"), CsvSource::Profile { grid: problem.grid(), u })?;
                let picks = profile_indices(b.points.len());
                let doc = diagram::profile_diagram(b, &picks, problem.grid(), &format!("profiles along {}", b.id))
                    .stage("assemble profiles")?;
                job.svg(&format!("{prefix}/profiles_{name}.svg"), &doc)?;
            }
        }
        let title = cfg
            .title
            .clone()
            .unwrap_or_else(|| format!("m = {m}, mu = {mu}, modes {modes:?}"));
        let doc = diagram::assemble_diagram(
            &level.branches,
            &level.anchors,
            &DiagramOptions {
                title,
                lambda_window: None,
            },
        )
        .stage("assemble diagram")?;
        job.csv(&format!("{prefix}/diagram.csv"), CsvSource::Document(&doc))?;
        job.svg(&format!("{prefix}/diagram.svg"), &doc)?;
        let e = expect.iter().find(|e| e.mu == mu);
        job.checks.extend(level_checks(&level, &modes, e));
        summaries.push(LevelSummary {
            mu,
            anchors: level.anchors.clone(),
            components: level.components.clone(),
            branches: level.branches.iter().map(BranchSummary::of).collect(),
        });
        previous = Some(level);
    }
    job.info("levels", &summaries);
    job.info("amplitude", cont.amplitude);
    Ok(())
}

/// Up to [`PROFILES_PER_BRANCH`] indices spread evenly along a branch.
fn profile_indices(len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let k = PROFILES_PER_BRANCH.min(len);
    let mut v: Vec<usize> = (0..k).map(|i| if k == 1 { 0 } else { i * (len - 1) / (k - 1) }).collect();
    v.dedup();
    v
}

// ---------------------------------------------------------------------------
// Recipes

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RecipeCommand {
    Eigencurves,
    VerifyTheorem,
    Bifpoints,
    Branch,
    Sweep,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeRun {
    name: String,
    command: RecipeCommand,
    #[serde(default)]
    config: RunConfig,
    #[serde(default)]
    expect: Vec<Expectation>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Recipe {
    description: String,
    run: Vec<RecipeRun>,
}

/// Names of the bundled figure recipes.
pub fn recipe_names() -> Vec<&'static str> {
    RECIPES.iter().map(|(n, _)| *n).collect()
}

/// Raw TOML of a bundled recipe.
pub fn recipe_source(name: &str) -> Option<&'static str> {
    RECIPES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

fn load_recipe(name: &str) -> Result<Recipe> {
    let src = recipe_source(name)
        .ok_or_else(|| Error::Config(format!("unknown figure `{name}` (expected one of {})", recipe_names().join(", "))))?;
    toml::from_str(src).map_err(|e| Error::Config(format!("recipe {name}: {e}")))
}

/// Run a bundled recipe. `cfg.out` (or the default directory) is the root;
/// each run writes into its own subdirectory. Resolution, seed and
/// parallelism from `overrides` apply to every run.
pub fn reproduce(fig: &str, cfg: &RunConfig, overrides: &Overrides) -> std::result::Result<RunReport, RunFailure> {
    let command = Command::Reproduce(fig.to_string());
    let recipe = load_recipe(fig).stage("load recipe")?;
    let root = cfg.output_dir(&command);
    let mut top = Job::new(root.clone());
    top.info("description", &recipe.description);
    let mut runs = Vec::new();
    for r in &recipe.run {
        let mut rc = r.config.clone();
        overrides.apply_to_recipe(&mut rc);
        rc.out = Some(root.join(&r.name));
        let sub = match r.command {
            RecipeCommand::Eigencurves => Command::Eigencurves,
            RecipeCommand::VerifyTheorem => Command::VerifyTheorem,
            RecipeCommand::Bifpoints => Command::BifPoints,
            RecipeCommand::Branch => Command::Branch,
            RecipeCommand::Sweep => Command::Sweep,
        };
        rc.validate(&sub).stage(&format!("validate recipe run {}", r.name))?;
        let mut job = Job::new(root.join(&r.name));
        let t = Instant::now();
        match sub {
            Command::Branch | Command::Sweep => sweep(&rc, &mut job, &r.expect),
            _ => execute(&sub, &rc, &mut job),
        }
        .map_err(|f| RunFailure {
            stage: format!("{} / {}", r.name, f.stage),
            source: f.source,
        })?;
        top.timings.insert(r.name.clone(), t.elapsed().as_millis() as u64);
        let report = job.finish(&sub, &rc, MANIFEST_FILE)?;
        for c in &report.manifest.checks {
            top.checks.push(Check::new(format!("{}: {}", r.name, c.name), c.passed, c.detail.clone()));
        }
        for a in &report.manifest.artifacts {
            top.artifacts.push(format!("{}/{a}", r.name));
        }
        top.artifacts.push(format!("{}/{MANIFEST_FILE}", r.name));
        runs.push(r.name.clone());
    }
    top.info("runs", &runs);
    top.finish(&command, cfg, MANIFEST_FILE)
}

// ---------------------------------------------------------------------------
// Plot

fn plot(inputs: &[PathBuf], cfg: &RunConfig) -> std::result::Result<RunReport, RunFailure> {
    let command = Command::Plot { inputs: inputs.to_vec() };
    if inputs.is_empty() {
        return Err(RunFailure {
            stage: "read inputs".into(),
            source: Error::Config("plot needs at least one input CSV".into()),
        });
    }
    let out = cfg.out.clone().unwrap_or_else(|| cfg.output_dir(&command).join("plot.svg"));
    let mut branch_rows = Vec::new();
    let mut curves = Vec::new();
    for path in inputs {
        let text = diagram::read_text(path).stage("read inputs")?;
        let header = text.lines().next().unwrap_or_default().trim_end();
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        if header == diagram::BRANCH_HEADER {
            branch_rows.push((name, diagram::parse_branch_csv(&text).stage(&format!("parse {}", path.display()))?));
        } else if header == diagram::EIGENCURVE_HEADER {
            curves.extend(diagram::parse_eigencurve_csv(&text).stage(&format!("parse {}", path.display()))?);
        } else {
            return Err(RunFailure {
                stage: format!("parse {}", path.display()),
                source: Error::Parse(format!("unrecognized CSV header `{header}`")),
            });
        }
    }
    if !branch_rows.is_empty() && !curves.is_empty() {
        return Err(RunFailure {
            stage: "assemble plot".into(),
            source: Error::Config("cannot mix branch and eigencurve CSVs in one plot".into()),
        });
    }
    let title = cfg.title.clone().unwrap_or_default();
    let doc = if curves.is_empty() {
        diagram::diagram_from_rows(&branch_rows, &title).stage("assemble plot")?
    } else {
        diagram::eigencurve_diagram(&curves, &title)
    };
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let file = out.file_name().map_or_else(|| "plot.svg".to_string(), |f| f.to_string_lossy().into_owned());
    let stem = out.file_stem().map_or_else(|| "plot".to_string(), |f| f.to_string_lossy().into_owned());
    let mut job = Job::new(dir);
    job.svg(&file, &doc)?;
    job.info("inputs", inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    job.finish(&command, cfg, &format!("{stem}.manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("mm = 3"), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_toml("[continuation]\nbogus = 1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            mu_list: vec![35.0, 39.6],
            modes: vec![2],
            seed: 7,
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::from_toml("m = \"sine:4\"\nmu_list = [1.0, 2.0]\nstep = 1.0").unwrap();
        Overrides {
            m: Some("sine:6".into()),
            mu: Some(3.0),
            ..Overrides::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.m, "sine:6");
        assert_eq!(cfg.levels(), vec![3.0]);
        assert_eq!(cfg.step, 1.0);
    }

    #[test]
    fn validation_names_the_problem() {
        let cfg = RunConfig {
            m: "cosine:2".into(),
            ..RunConfig::default()
        };
        let err = cfg.validate(&Command::Eigencurves).unwrap_err();
        assert!(err.to_string().contains("m:"));
        let cfg = RunConfig::default();
        assert!(cfg.validate(&Command::Branch).is_err());
        let cfg = RunConfig {
            k: 2,
            modes: vec![2, 3],
            ..RunConfig::default()
        };
        assert!(cfg.validate(&Command::VerifyTheorem).is_err());
    }

    #[test]
    fn every_recipe_parses_and_validates() {
        for name in recipe_names() {
            let r = load_recipe(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!r.run.is_empty());
            for run in &r.run {
                let cmd = match run.command {
                    RecipeCommand::Eigencurves => Command::Eigencurves,
                    RecipeCommand::VerifyTheorem => Command::VerifyTheorem,
                    RecipeCommand::Bifpoints => Command::BifPoints,
                    RecipeCommand::Branch => Command::Branch,
                    RecipeCommand::Sweep => Command::Sweep,
                };
                run.config.validate(&cmd).unwrap_or_else(|e| panic!("{name}/{}: {e}", run.name));
            }
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let base = RunConfig {
            jitter: 0.5,
            seed: 3,
            ..RunConfig::default()
        };
        let a = base.continuation_with_jitter().amplitude;
        assert_eq!(a, base.continuation_with_jitter().amplitude);
        assert_ne!(a, RunConfig { seed: 4, ..base.clone() }.continuation_with_jitter().amplitude);
        assert_eq!(RunConfig::default().continuation_with_jitter().amplitude, 1e-3);
    }

    #[test]
    fn profile_indices_cover_both_ends() {
        assert_eq!(profile_indices(0), Vec::<usize>::new());
        assert_eq!(profile_indices(3), vec![0, 1, 2]);
        let v = profile_indices(101);
        assert_eq!((v[0], *v.last().unwrap(), v.len()), (0, 100, 6));
    }

    #[test]
    fn eigencurves_run_writes_deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |sub: &str, jobs| RunConfig {
            modes: vec![1, 2],
            range: (-20.0, 20.0),
            step: 2.0,
            n_modes: 24,
            out: Some(dir.path().join(sub)),
            jobs: Some(jobs),
            ..RunConfig::default()
        };
        let r1 = run(&Command::Eigencurves, &mk("a", 1), &Overrides::default()).unwrap();
        let r2 = run(&Command::Eigencurves, &mk("b", 4), &Overrides::default()).unwrap();
        assert!(r1.passed(), "{:?}", r1.manifest.checks);
        assert_eq!(r1.manifest.artifacts, vec!["curves.csv", "curves.svg"]);
        for f in &r1.manifest.artifacts {
            let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
        assert!(r2.dir.join(MANIFEST_FILE).exists());
    }

    #[test]
    fn config_errors_map_to_status_two() {
        let cfg = RunConfig {
            step: -1.0,
            ..RunConfig::default()
        };
        let f = run(&Command::Eigencurves, &cfg, &Overrides::default()).unwrap_err();
        assert_eq!(f.exit_code(), 2);
        assert_eq!(f.stage, "validate config");
    }
}
