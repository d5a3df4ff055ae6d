//! Experiment orchestration behind the `erw` command line.
//!
//! An [`Experiment`] combines a subcommand, a parsed [`Config`] and the
//! command-line [`Overrides`]. [`run`] executes it, writes CSV tables and a
//! `record.txt` into the output directory and returns the exit status:
//! 0 on success, 2 when `verify` reports a failure. Validation errors come
//! back as `Err` and map to exit status 1.
//!
//! Every CSV row ends with a `config_hash` column, the first 16 hex digits
//! of the SHA-256 of the config file. Together with the master seed and the
//! crate version it determines every byte of the CSV output; the worker
//! count does not.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::branching::{estimate_speed_regen, representation_time_capped, sample_regeneration, FreshSites};
use crate::cache::{read_cache, write_cache};
use crate::config::{env_hash, env_hash_hex, Config};
use crate::env::{classify, compute_delta, CookieEnvironmentSpec};
use crate::error::{Error, Result};
use crate::oracle::{enumerate_paths, first_passage, passage_lower_bound, prob_v_zero, sigma_w_law};
use crate::parallel::MonteCarlo;
use crate::rate::{build_curves, iv_grid, one_sided_curves, rate_t, CurveOptions, EmpiricalMGF, Verdict};
use crate::tails::{
    hill_on_cycles, hill_stability, slowdown_exponent_t, slowdown_exponent_x, CycleField, TailFit, MIN_K,
};
use crate::verify::{curve_table, f, fit_table, run_suite, CriterionResult, Scale, Table, CANONICAL_SEED};
use crate::walk::{estimate_speed, hitting_time, simulate_extremes};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// CSV only.
    Csv,
    /// CSV plus a whitespace-separated `.dat` copy of each table.
    Plot,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "plot" => Ok(Format::Plot),
            _ => Err(format!("format must be `csv` or `plot`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Walk,
    Hit,
    Regen,
    Rate,
    Tails,
    Oracle,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Walk => "walk",
            Command::Hit => "hit",
            Command::Regen => "regen",
            Command::Rate => "rate",
            Command::Tails => "tails",
            Command::Oracle => "oracle",
            Command::Verify => "verify",
        }
    }

    fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            Command::Walk => &["n", "reps"],
            Command::Hit => &["target", "cap", "reps", "method"],
            Command::Regen => &["cycles", "cap", "cache", "mirror"],
            Command::Rate => &["cache", "mirror_cache", "dx", "x_max"],
            Command::Tails => &["cache", "hill_k", "v0", "t", "t_grid", "x", "x_grid", "reps"],
            Command::Oracle => &[
                "kind",
                "sigma_max",
                "w_max",
                "v_max",
                "n",
                "n_max",
                "low",
                "high",
                "max_steps",
            ],
            Command::Verify => &["scale", "only"],
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "walk" => Command::Walk,
            "hit" => Command::Hit,
            "regen" => Command::Regen,
            "rate" => Command::Rate,
            "tails" => Command::Tails,
            "oracle" => Command::Oracle,
            "verify" => Command::Verify,
            _ => return Err(format!("unknown command {s:?}")),
        })
    }
}

const COMMANDS: [Command; 7] = [
    Command::Walk,
    Command::Hit,
    Command::Regen,
    Command::Rate,
    Command::Tails,
    Command::Oracle,
    Command::Verify,
];

/// Values given on the command line or through `ERW_*` variables; each one
/// replaces the matching `[run]` key of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub command: Command,
    pub config: Config,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub format: Format,
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn validate_layout(config: &Config) -> Result<()> {
    for section in config.sections() {
        let allowed: &[&str] = match section {
            "environment" => continue,
            "run" => &["seed", "workers", "out", "format"],
            other => match COMMANDS.iter().find(|c| c.name() == other) {
                Some(c) => c.allowed_keys(),
                None => {
                    let line = config.keys(other).first().map_or(0, |k| k.1);
                    return Err(config_err(line, format!("unknown section [{other}]")));
                }
            },
        };
        for (key, line) in config.keys(section) {
            if !allowed.contains(&key) {
                return Err(config_err(line, format!("unknown key {key:?} in [{section}]")));
            }
        }
    }
    Ok(())
}

impl Experiment {
    /// Applies `flag > env > file > default` precedence. The environment
    /// layer is folded into `overrides` by the caller.
    pub fn resolve(command: Command, config: Option<Config>, overrides: &Overrides) -> Result<Self> {
        let config = match config {
            Some(c) => c,
            None => Config::parse("")?,
        };
        validate_layout(&config)?;
        let seed = match overrides.seed {
            Some(s) => s,
            None => config.get_or("run", "seed", CANONICAL_SEED)?,
        };
        let workers = match overrides.workers {
            Some(w) => w,
            None => config.get_or("run", "workers", default_workers())?,
        };
        if workers == 0 {
            return Err(config_err(0, "workers must be at least 1"));
        }
        let out = match &overrides.out {
            Some(p) => p.clone(),
            None => config.get_or("run", "out", PathBuf::from("out"))?,
        };
        let format = match overrides.format {
            Some(fm) => fm,
            None => config.get_or("run", "format", Format::Csv)?,
        };
        Ok(Self {
            command,
            config,
            seed,
            workers,
            out,
            format,
        })
    }

    pub fn mc(&self) -> MonteCarlo {
        MonteCarlo::new(self.seed, self.workers)
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.config.get_or(self.command.name(), key, default)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.config.get(self.command.name(), key)
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.config.get_list(self.command.name(), key)?.unwrap_or(default))
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        self.get::<PathBuf>(key)
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Renders a table as CSV with the trailing `config_hash` column.
pub fn render_csv(t: &Table, config_hash: &str) -> String {
    let mut s = String::new();
    s.push_str(&t.header.join(","));
    s.push_str(",config_hash\n");
    for r in &t.rows {
        s.push_str(&r.join(","));
        let _ = writeln!(s, ",{config_hash}");
    }
    s
}

/// The same table as whitespace-separated columns with a `#` header.
pub fn render_plot(t: &Table, config_hash: &str) -> String {
    let mut s = format!("# {} config_hash\n", t.header.join(" "));
    for r in &t.rows {
        let _ = writeln!(s, "{} {config_hash}", r.join(" "));
    }
    s
}

struct Output<'a> {
    dir: &'a Path,
    hash: &'a str,
    format: Format,
    files: Vec<String>,
}

impl Output<'_> {
    fn table(&mut self, t: &Table) -> Result<()> {
        let name = format!("{}.csv", t.name);
        std::fs::write(self.dir.join(&name), render_csv(t, self.hash))?;
        self.files.push(name);
        if self.format == Format::Plot {
            let name = format!("{}.dat", t.name);
            std::fs::write(self.dir.join(&name), render_plot(t, self.hash))?;
            self.files.push(name);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// Human-readable summary for standard output.
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Report {
    tables: Vec<Table>,
    /// Extra files written directly by the command, relative to `out`.
    extra: Vec<String>,
    summary: String,
    verdicts: Vec<String>,
    failed: bool,
    env_hash: Option<String>,
}

impl Report {
    fn new(tables: Vec<Table>, summary: String) -> Self {
        Self {
            tables,
            extra: Vec::new(),
            summary,
            verdicts: Vec::new(),
            failed: false,
            env_hash: None,
        }
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs the experiment, writing every artifact under `exp.out`.
pub fn run(exp: &Experiment) -> Result<RunOutcome> {
    let started = unix_seconds();
    std::fs::create_dir_all(&exp.out)?;
    let report = match exp.command {
        Command::Walk => cmd_walk(exp)?,
        Command::Hit => cmd_hit(exp)?,
        Command::Regen => cmd_regen(exp)?,
        Command::Rate => cmd_rate(exp)?,
        Command::Tails => cmd_tails(exp)?,
        Command::Oracle => cmd_oracle(exp)?,
        Command::Verify => cmd_verify(exp)?,
    };
    let mut out = Output {
        dir: &exp.out,
        hash: exp.config.short_hash(),
        format: exp.format,
        files: report.extra.clone(),
    };
    for t in &report.tables {
        out.table(t)?;
    }
    let mut rec = String::new();
    let _ = writeln!(rec, "command = {}", exp.command.name());
    let _ = writeln!(rec, "config_hash = {}", exp.config.hash());
    let _ = writeln!(rec, "master_seed = {}", exp.seed);
    let _ = writeln!(rec, "version = {VERSION}");
    if let Some(h) = &report.env_hash {
        let _ = writeln!(rec, "env_hash = {h}");
    }
    let _ = writeln!(rec, "workers = {}", exp.workers);
    let _ = writeln!(rec, "started = {started}");
    let _ = writeln!(rec, "finished = {}", unix_seconds());
    for name in &out.files {
        let _ = writeln!(rec, "artifact = {name}");
    }
    for v in &report.verdicts {
        let _ = writeln!(rec, "verdict = {v}");
    }
    std::fs::write(exp.out.join("record.txt"), rec)?;
    let mut files: Vec<PathBuf> = out.files.iter().map(|n| exp.out.join(n)).collect();
    files.push(exp.out.join("record.txt"));
    Ok(RunOutcome {
        exit_code: if report.failed { 2 } else { 0 },
        summary: report.summary,
        files,
    })
}

fn environment(exp: &Experiment) -> Result<CookieEnvironmentSpec> {
    exp.config.environment()
}

fn cmd_walk(exp: &Experiment) -> Result<Report> {
    let spec = environment(exp)?;
    let ns: Vec<u64> = exp.list("n", vec![1000])?;
    let reps: u64 = exp.get_or("reps", 1000)?;
    let mc = exp.mc();
    let mut speed = Table::new("walk_speed", &["n", "reps", "speed_mean", "speed_se"]);
    let mut pos = Table::new("walk_positions", &["n", "replica", "position", "max", "min"]);
    let mut summary = String::new();
    for &n in &ns {
        let s = estimate_speed(&spec, n, reps, &mc);
        speed.push(vec![n.to_string(), reps.to_string(), f(s.mean), f(s.se)]);
        let _ = writeln!(summary, "n = {n}: X_n / n = {:.5} +- {:.5}", s.mean, s.se);
        let paths = mc.map("walk", n, reps, |_, rng| simulate_extremes(&spec, n, rng));
        for (i, p) in paths.iter().enumerate() {
            pos.push(vec![
                n.to_string(),
                i.to_string(),
                p.end.to_string(),
                p.max.to_string(),
                p.min.to_string(),
            ]);
        }
    }
    let mut r = Report::new(vec![speed, pos], summary);
    r.env_hash = Some(env_hash_hex(&spec));
    Ok(r)
}

fn cmd_hit(exp: &Experiment) -> Result<Report> {
    let spec = environment(exp)?;
    let target: i64 = exp.get_or("target", 10)?;
    let cap: u64 = exp.get_or("cap", 1_000_000)?;
    let reps: u64 = exp.get_or("reps", 1000)?;
    let method: String = exp.get_or("method", "walk".to_string())?;
    let mc = exp.mc();
    let sub = target.unsigned_abs();
    let times: Vec<Option<u64>> = match method.as_str() {
        "walk" => {
            if cap < target.unsigned_abs() {
                return Err(config_err(0, format!("[hit] cap {cap} is below |target| {sub}")));
            }
            mc.map("hit", sub, reps, |_, rng| {
                hitting_time(&spec, target, cap, rng)
                    .expect("cap checked above")
                    .time
                    .hit()
            })
        }
        "representation" => {
            if target <= 0 {
                return Err(config_err(0, "[hit] the representation needs target >= 1"));
            }
            mc.map("hit-representation", sub, reps, |_, rng| {
                representation_time_capped(&mut FreshSites::new(&spec), sub, cap, rng)
            })
        }
        other => {
            return Err(config_err(
                0,
                format!("[hit] method must be `walk` or `representation`, got {other:?}"),
            ))
        }
    };
    let mut t = Table::new("hit_times", &["replica", "target", "time", "censored"]);
    for (i, h) in times.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            target.to_string(),
            h.map_or(String::new(), |v| v.to_string()),
            u8::from(h.is_none()).to_string(),
        ]);
    }
    let done: Vec<f64> = times.iter().flatten().map(|&v| v as f64).collect();
    let censored = times.len() - done.len();
    let mean = crate::stats::mean(&done);
    let mut s = Table::new(
        "hit_summary",
        &["target", "method", "reps", "cap", "censored", "mean_uncensored"],
    );
    s.push(vec![
        target.to_string(),
        method.clone(),
        reps.to_string(),
        cap.to_string(),
        censored.to_string(),
        f(mean),
    ]);
    let mut r = Report::new(
        vec![t, s],
        format!("T_{target} ({method}): {censored} of {reps} censored at {cap}, uncensored mean {mean:.3}\n"),
    );
    r.env_hash = Some(env_hash_hex(&spec));
    Ok(r)
}

fn cmd_regen(exp: &Experiment) -> Result<Report> {
    let base = environment(exp)?;
    let cycles: u64 = exp.get_or("cycles", 100_000)?;
    let cap: u64 = exp.get_or("cap", 10_000_000)?;
    let mirror: bool = exp.get_or("mirror", false)?;
    let cache = exp
        .path("cache")?
        .unwrap_or_else(|| PathBuf::from(if mirror { "regen-mirror.bin" } else { "regen.bin" }));
    let cache = if cache.is_absolute() {
        cache
    } else {
        exp.out.join(cache)
    };
    let (spec, purpose) = if mirror {
        (base.mirror(), "mirror")
    } else {
        (base, "regen")
    };
    let samples = exp
        .mc()
        .map(purpose, 0, cycles, |_, rng| sample_regeneration(&spec, cap, rng));
    let hash = env_hash(&spec);
    write_cache(&cache, hash, exp.seed, cap, &samples)?;
    let mgf = EmpiricalMGF::new(&samples);
    let censored = samples.iter().filter(|s| s.censored).count();
    let speed = estimate_speed_regen(&samples).ok();
    let mut t = Table::new(
        "regen_summary",
        &[
            "environment",
            "cycles",
            "cap",
            "censored",
            "sigma_one_fraction",
            "m0_hat",
            "v0_hat",
            "v0_se",
        ],
    );
    t.push(vec![
        purpose.into(),
        cycles.to_string(),
        cap.to_string(),
        censored.to_string(),
        f(mgf.sigma_one_fraction()),
        f(mgf.m0_hat()),
        f(speed.map_or(f64::NAN, |s| s.value)),
        f(speed.map_or(f64::NAN, |s| s.se)),
    ]);
    let mut r = Report::new(
        vec![t],
        format!(
            "{cycles} cycles ({censored} censored at {cap} generations) written to {}\n",
            cache.display()
        ),
    );
    if let Ok(rel) = cache.strip_prefix(&exp.out) {
        r.extra.push(rel.display().to_string());
    }
    r.env_hash = Some(env_hash_hex(&spec));
    Ok(r)
}

fn resolve_input(exp: &Experiment, p: PathBuf) -> PathBuf {
    if p.is_absolute() || p.exists() {
        p
    } else {
        exp.out.join(p)
    }
}

fn cmd_rate(exp: &Experiment) -> Result<Report> {
    let spec = environment(exp)?;
    let cache = exp
        .path("cache")?
        .ok_or_else(|| config_err(0, "[rate] needs `cache`"))?;
    let (_, samples) = read_cache(&resolve_input(exp, cache), Some(env_hash(&spec)))?;
    let mut opts = CurveOptions::default();
    opts.dx = exp.get_or("dx", opts.dx)?;
    opts.x_max = exp.get_or("x_max", opts.x_max)?;
    let mgf = EmpiricalMGF::new(&samples);
    let mut summary = format!(
        "{} cycles, m0_hat {:.4}, v0_hat {:.4}, delta {}\n",
        samples.len(),
        mgf.m0_hat(),
        mgf.v0_hat(),
        compute_delta(&spec)
    );
    let tables = match exp.path("mirror_cache")? {
        Some(m) => {
            let (_, mirrored) = read_cache(&resolve_input(exp, m), Some(env_hash(&spec.mirror())))?;
            let c = build_curves(&mgf, &EmpiricalMGF::new(&mirrored), &opts);
            let _ = writeln!(summary, "regime: {:?}", classify(&spec));
            vec![
                curve_table("rate_lambda_v", &c.lambda_v),
                curve_table("rate_i_v", &c.i_v),
                curve_table("rate_i_t", &c.i_t),
                curve_table("rate_i_x", &c.i_x),
                curve_table("rate_mirror_i_v", &c.mirror_i_v),
            ]
        }
        None => {
            let xs = iv_grid(opts.dx, opts.x_max, &opts.x_grid);
            let (lv, _, iv) = one_sided_curves(&mgf, &opts, &xs);
            let it = rate_t(&iv);
            summary.push_str("no mirror cache; I_X not computed\n");
            vec![
                curve_table("rate_lambda_v", &lv),
                curve_table("rate_i_v", &iv),
                curve_table("rate_i_t", &it),
            ]
        }
    };
    let mut r = Report::new(tables, summary);
    r.env_hash = Some(env_hash_hex(&spec));
    Ok(r)
}

fn exponent_row(t: &mut Table, kind: &str, level: f64, fit: &TailFit) {
    t.push(vec![
        kind.into(),
        f(level),
        f(fit.exponent),
        f(fit.ci.0),
        f(fit.ci.1),
        fit.k_used.to_string(),
    ]);
}

fn cmd_tails(exp: &Experiment) -> Result<Report> {
    let spec = environment(exp)?;
    let mc = exp.mc();
    let mut ex = Table::new(
        "tails_exponents",
        &["kind", "level", "exponent", "ci_lo", "ci_hi", "k_used"],
    );
    let mut tables = Vec::new();
    let mut summary = String::new();
    let mut v0 = exp.get::<f64>("v0")?;
    if let Some(cache) = exp.path("cache")? {
        let (_, samples) = read_cache(&resolve_input(exp, cache), Some(env_hash(&spec)))?;
        let k = exp.get::<usize>("hill_k")?;
        let mut stability = Table::new("tails_hill_stability", &["field", "k", "exponent"]);
        for (field, name) in [(CycleField::Sigma, "hill_sigma"), (CycleField::W, "hill_w")] {
            let fit = hill_on_cycles(&samples, field, k)?;
            let _ = writeln!(
                summary,
                "{name}: {:.4} [{:.4}, {:.4}]",
                fit.exponent, fit.ci.0, fit.ci.1
            );
            exponent_row(&mut ex, name, f64::NAN, &fit);
            let xs: Vec<f64> = samples
                .iter()
                .filter(|s| !s.censored)
                .map(|s| match field {
                    CycleField::Sigma => s.sigma as f64,
                    CycleField::W => s.w as f64,
                })
                .collect();
            for (k, e) in hill_stability(&xs, &stability_ks(xs.len())) {
                stability.push(vec![name.into(), k.to_string(), e.map_or_else(String::new, f)]);
            }
        }
        tables.push(stability);
        if v0.is_none() {
            v0 = estimate_speed_regen(&samples).ok().map(|r| r.value);
        }
    }
    let reps: u64 = exp.get_or("reps", 100_000)?;
    let ts: Vec<f64> = exp.list("t", vec![])?;
    let xs: Vec<f64> = exp.list("x", vec![])?;
    if !(ts.is_empty() && xs.is_empty()) {
        let v0 = v0.ok_or_else(|| config_err(0, "[tails] slowdown levels need `v0` or a `cache`"))?;
        let t_grid: Vec<u64> = exp.list("t_grid", vec![128, 256, 512, 1024])?;
        let x_grid: Vec<u64> = exp.list("x_grid", vec![128, 256, 512])?;
        for (i, &t) in ts.iter().enumerate() {
            let fit = slowdown_exponent_t(&spec, t, v0, &t_grid, reps, &mc)?;
            let _ = writeln!(summary, "T slowdown at t = {t}: slope {:.4}", fit.exponent);
            exponent_row(&mut ex, "slowdown_t", t, &fit);
            tables.push(fit_table(&format!("tails_t_{i}"), &fit));
        }
        for (i, &x) in xs.iter().enumerate() {
            let w = slowdown_exponent_x(&spec, x, v0, &x_grid, reps, &mc)?;
            let _ = writeln!(summary, "X slowdown at x = {x}: slope {:.4}", w.fit.exponent);
            exponent_row(&mut ex, "slowdown_x", x, &w.fit);
            tables.push(fit_table(&format!("tails_x_{i}"), &w.fit));
        }
    }
    if ex.rows.is_empty() {
        return Err(config_err(0, "[tails] has nothing to do; set `cache`, `t` or `x`"));
    }
    tables.insert(0, ex);
    let mut r = Report::new(tables, summary);
    r.env_hash = Some(env_hash_hex(&spec));
    Ok(r)
}

/// Roughly eight `k` per decade from [`MIN_K`] up to half the sample.
fn stability_ks(n: usize) -> Vec<usize> {
    let mut ks = Vec::new();
    let mut k = MIN_K as f64;
    while (k as usize) < n / 2 {
        if ks.last() != Some(&(k as usize)) {
            ks.push(k as usize);
        }
        k *= 10f64.powf(0.125);
    }
    ks
}

fn cmd_oracle(exp: &Experiment) -> Result<Report> {
    let spec = environment(exp)?;
    let kind: String = exp.get_or("kind", "sigma_w".to_string())?;
    let (tables, summary) = match kind.as_str() {
        "sigma_w" => {
            let smax: u64 = exp.get_or("sigma_max", 40)?;
            let wmax: u64 = exp.get_or("w_max", 80)?;
            let vmax: u64 = exp.get_or("v_max", wmax)?;
            let law = sigma_w_law(&spec, smax, wmax, vmax)?;
            (
                vec![Table::from_csv("oracle_sigma_w", &law.to_csv())],
                format!(
                    "{} atoms, truncation mass {:.3e}\n",
                    law.support.len(),
                    law.truncation_mass
                ),
            )
        }
        "paths" => {
            let n: usize = exp.get_or("n", 10)?;
            let laws = enumerate_paths(&spec, n)?;
            let mut pass = Table::new("oracle_passage", &["target", "time", "prob"]);
            for (m, law) in &laws.passage {
                for (s, p) in law.support.iter().zip(&law.probs) {
                    pass.push(vec![m.to_string(), s[0].to_string(), format!("{p:e}")]);
                }
                pass.push(vec![m.to_string(), "*".into(), format!("{:e}", law.truncation_mass)]);
            }
            (
                vec![Table::from_csv("oracle_position", &laws.position.to_csv()), pass],
                format!("exact laws of X_{n} and T_m, |m| <= {n}\n"),
            )
        }
        "v_zero" => {
            let n_max: usize = exp.get_or("n_max", 64)?;
            let vmax: u64 = exp.get_or("v_max", 1000)?;
            let p = prob_v_zero(&spec, n_max, vmax)?;
            let mut t = Table::new("oracle_v_zero", &["n", "lower", "upper"]);
            for (i, (lo, hi)) in p.iter().enumerate() {
                t.push(vec![(i + 1).to_string(), f(*lo), f(*hi)]);
            }
            (vec![t], format!("P(V_n = 0) for n <= {n_max}\n"))
        }
        "passage" => {
            let low: i64 = exp.get_or("low", -1)?;
            let high: i64 = exp.get_or("high", 5)?;
            let steps: usize = exp.get_or("max_steps", 100_000)?;
            let fp = first_passage(&spec, low, high, steps)?;
            let bound = if low == -1 && high >= 1 {
                f(passage_lower_bound(&spec, high as u64))
            } else {
                String::new()
            };
            let mut t = Table::new(
                "oracle_passage",
                &["low", "high", "p_high", "p_low", "unresolved", "lower_bound"],
            );
            t.push(vec![
                low.to_string(),
                high.to_string(),
                f(fp.high),
                f(fp.low),
                f(fp.unresolved),
                bound,
            ]);
            (vec![t], format!("P(T_{high} < T_{low}) = {:.6e}\n", fp.high))
        }
        other => {
            return Err(config_err(
                0,
                format!("[oracle] kind must be sigma_w, paths, v_zero or passage, got {other:?}"),
            ))
        }
    };
    let mut r = Report::new(tables, summary);
    r.env_hash = Some(env_hash_hex(&spec));
    Ok(r)
}

/// Reruns the cheap suite with each worker count and compares every table
/// byte for byte.
pub fn determinism_check(seed: u64, workers: &[usize], config_hash: &str) -> CriterionResult {
    let start = std::time::Instant::now();
    let render = |w: usize| -> Vec<(String, String)> {
        run_suite(Scale::Cheap, &MonteCarlo::new(seed, w), &[])
            .iter()
            .flat_map(|c| c.tables.iter())
            .map(|t| (t.name.clone(), render_csv(t, config_hash)))
            .collect()
    };
    let reference = render(workers[0]);
    let mut verdicts = Vec::new();
    let mut tables = Table::new("ac10_determinism", &["workers", "tables", "identical"]);
    for &w in &workers[1..] {
        let other = render(w);
        let differing: Vec<&str> = reference
            .iter()
            .zip(&other)
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.0.as_str())
            .collect();
        let same = other.len() == reference.len() && differing.is_empty();
        tables.push(vec![w.to_string(), other.len().to_string(), u8::from(same).to_string()]);
        verdicts.push(Verdict::new(
            format!("tables at {w} workers identical to {} workers", workers[0]),
            if same { 0.0 } else { -1.0 },
            if same {
                format!("{} tables", other.len())
            } else {
                format!("differs: {}", differing.join(" "))
            },
        ));
    }
    let s = start.elapsed().as_secs_f64();
    verdicts.push(Verdict::new("runtime < 600 s", 600.0 - s, format!("{s:.1} s")));
    CriterionResult {
        id: "AC10",
        title: "determinism across worker counts",
        verdicts,
        tables: vec![tables],
        seconds: s,
    }
}

pub const DETERMINISM_WORKERS: [usize; 3] = [1, 4, 16];

fn cmd_verify(exp: &Experiment) -> Result<Report> {
    let scale: Scale = exp.get_or("scale", Scale::Full)?;
    let only: Vec<String> = exp.list("only", vec![])?;
    for id in &only {
        if !crate::verify::ALL.contains(&id.as_str()) && id != "AC10" {
            return Err(config_err(0, format!("[verify] unknown criterion {id:?}")));
        }
    }
    let mut results = run_suite(scale, &exp.mc(), &only);
    if only.is_empty() || only.iter().any(|o| o == "AC10") {
        results.push(determinism_check(
            exp.seed,
            &DETERMINISM_WORKERS,
            exp.config.short_hash(),
        ));
    }
    let mut summary = String::new();
    let mut verdicts = Vec::new();
    let mut tables = Vec::new();
    let mut failed = false;
    for c in &results {
        summary.push_str(&c.report());
        verdicts.push(format!("{} {}", if c.pass() { "PASS" } else { "FAIL" }, c.id));
        failed |= !c.pass();
        tables.extend(c.tables.iter().cloned());
    }
    std::fs::write(exp.out.join("verify_report.txt"), &summary)?;
    let mut r = Report::new(tables, summary);
    r.extra.push("verify_report.txt".into());
    r.verdicts = verdicts;
    r.failed = failed;
    Ok(r)
}
