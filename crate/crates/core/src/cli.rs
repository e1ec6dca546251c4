//! Command-line surface: `construct`, `certify`, `lift`, `spectrum`, `capt`,
//! `plot`, `export`. Exit codes: 0 success, 1 certificate failure, 2 bad
//! input or configuration.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::certificates::{mean_equi_certificate, minimality_certificate, trig_family, ue_variation_certificate, Certificate};
use crate::covers::{invariant_graph_estimate, rescaled_lift, CoverIndex, GraphEstimate};
use crate::dynamics::Dynamics;
use crate::engine::{self, latest_checkpoint, load_checkpoint, save_checkpoint, Profile, RunConfig, StageState, SummaryRow};
use crate::maps::FiberedMap;
use crate::plot;
use crate::spectral::{autocorrelation_scan, mean_amplitude_profile, seed_centers, Observable, SpectralEstimate};
use crate::{Error, Result};

pub const THREADS_ENV: &str = "SKEWLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "skewlab", version, about = "Staged construction of mean-equicontinuous skew products on the 2-torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the staged construction and write checkpoints, certificates and a summary.
    Construct(ConstructArgs),
    /// Recompute the strict-ergodicity and mean-equicontinuity certificates of a stage.
    Certify(CertifyArgs),
    /// Invariant-graph estimate on a rescaled lift.
    Lift(LiftArgs),
    /// Eigenvalue amplitudes and autocorrelation spectrum.
    Spectrum(SpectrumArgs),
    /// Cyclic-approximation report for a stage.
    Capt(CaptArgs),
    /// Render an artifact as SVG.
    Plot(PlotArgs),
    /// Export orbits, summaries or certificates as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub stages: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    #[arg(long)]
    pub singular: bool,
    /// Finite covers `l,m` whose lifted constraints are enforced (repeatable).
    #[arg(long, value_parser = parse_pair)]
    pub covers: Vec<[u32; 2]>,
    #[arg(long)]
    pub j_max: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Strict,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Checkpoint file (`stage_n.json`).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Stage whose totally irrational map `φ̂_k` is used; defaults to the latest.
    #[arg(long)]
    pub stage: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Run configuration; defaults to `config.json` next to the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// `l,m` or `l,m,s1,s2`.
    #[arg(long, value_parser = parse_cover)]
    pub cover: CoverIndex,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: u64,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Apply the observable on a rescaled lift `l,m[,s1,s2]`.
    #[arg(long, value_parser = parse_cover)]
    pub cover: Option<CoverIndex>,
    /// `one`, `exp_x`, `exp_y` or `exp:k,l`.
    #[arg(long, default_value = "exp_y")]
    pub observable: String,
    /// Frequencies; may use `alpha`, the base rotation number of the map
    /// (e.g. `(alpha+1)/2`). Repeatable.
    #[arg(long = "theta", default_values_t = ["alpha".to_string()])]
    pub thetas: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [10_000u64, 100_000, 1_000_000])]
    pub n: Vec<u64>,
    /// Amplitudes are averaged over a `g×g` grid of starting points.
    #[arg(long, default_value_t = 4)]
    pub seed_grid: usize,
    /// Also estimate `K` autocorrelations and the Fejér density.
    #[arg(long)]
    pub autocorr: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub autocorr_n: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CaptArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub orbit: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlotKind {
    /// CSV with `x,y` columns.
    Orbit,
    /// Graph-estimate JSON from `lift`.
    Graph,
    /// Amplitude JSON from `spectrum`.
    Amplitude,
    /// Spectral-estimate JSON from `spectrum --autocorr`.
    Density,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportWhat {
    Orbit,
    Summary,
    Certificates,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, value_enum)]
    pub what: ExportWhat,
    /// Orbit length.
    #[arg(long, default_value_t = 100_000)]
    pub n: u64,
    /// Orbit on a rescaled lift `l,m[,s1,s2]`.
    #[arg(long, value_parser = parse_cover)]
    pub cover: Option<CoverIndex>,
    /// Starting point `x,y` (rotation coordinates for conjugated maps).
    #[arg(long, value_parser = parse_point, default_value = "0.1,0.2")]
    pub start: [f64; 2],
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|t| t.trim().parse::<T>().map_err(|_| format!("cannot parse '{t}'"))).collect()
}

fn parse_pair(s: &str) -> std::result::Result<[u32; 2], String> {
    match parse_list::<u32>(s)?.as_slice() {
        [l, m] => Ok([*l, *m]),
        _ => Err(format!("expected l,m, got '{s}'")),
    }
}

fn parse_cover(s: &str) -> std::result::Result<CoverIndex, String> {
    let v = parse_list::<u32>(s)?;
    let (l, m, sh) = match v.as_slice() {
        [l, m] => (*l, *m, [0, 0]),
        [l, m, a, b] => (*l, *m, [*a, *b]),
        _ => return Err(format!("expected l,m or l,m,s1,s2, got '{s}'")),
    };
    CoverIndex::new(l, m, sh).map_err(|e| e.to_string())
}

fn parse_point(s: &str) -> std::result::Result<[f64; 2], String> {
    match parse_list::<f64>(s)?.as_slice() {
        [x, y] => Ok([*x, *y]),
        _ => Err(format!("expected x,y, got '{s}'")),
    }
}

/// Evaluates a frequency expression in `alpha` with `+ - * /` and parentheses.
pub fn eval_theta(expr: &str, alpha: f64) -> Result<f64> {
    struct P<'a> {
        s: &'a [u8],
        i: usize,
        alpha: f64,
    }
    impl P<'_> {
        fn ws(&mut self) {
            while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
                self.i += 1;
            }
        }
        fn peek(&mut self) -> Option<u8> {
            self.ws();
            self.s.get(self.i).copied()
        }
        fn expr(&mut self) -> Option<f64> {
            let mut v = self.term()?;
            while let Some(c @ (b'+' | b'-')) = self.peek() {
                self.i += 1;
                let t = self.term()?;
                v = if c == b'+' { v + t } else { v - t };
            }
            Some(v)
        }
        fn term(&mut self) -> Option<f64> {
            let mut v = self.atom()?;
            while let Some(c @ (b'*' | b'/')) = self.peek() {
                self.i += 1;
                let t = self.atom()?;
                v = if c == b'*' { v * t } else { v / t };
            }
            Some(v)
        }
        fn atom(&mut self) -> Option<f64> {
            match self.peek()? {
                b'(' => {
                    self.i += 1;
                    let v = self.expr()?;
                    (self.peek()? == b')').then(|| self.i += 1)?;
                    Some(v)
                }
                b'-' => {
                    self.i += 1;
                    Some(-self.atom()?)
                }
                b'a' => {
                    let rest = &self.s[self.i..];
                    rest.starts_with(b"alpha").then(|| self.i += 5)?;
                    Some(self.alpha)
                }
                _ => {
                    let start = self.i;
                    while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || b".eE".contains(&self.s[self.i])) {
                        self.i += 1;
                    }
                    std::str::from_utf8(&self.s[start..self.i]).ok()?.parse().ok()
                }
            }
        }
    }
    let mut p = P { s: expr.as_bytes(), i: 0, alpha };
    match p.expr() {
        Some(v) if p.peek().is_none() && v.is_finite() => Ok(v),
        _ => Err(Error::Config(format!("cannot evaluate frequency '{expr}'"))),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CertificateFailure(_) | Error::BudgetExhausted { .. } | Error::WidthUnderflow { .. } | Error::ClusterAmbiguity { .. } => 1,
        _ => 2,
    }
}

/// Applies the worker-count variable to the global thread pool.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV}='{v}' is not a thread count")))?;
        // a pool may already exist (e.g. in tests); that is not an error here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match init_threads().and_then(|_| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Construct(a) => construct(a),
        Command::Certify(a) => certify(a),
        Command::Lift(a) => lift(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Capt(a) => capt(a),
        Command::Plot(a) => plot_cmd(a),
        Command::Export(a) => export(a),
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => read_json(p),
        None => Ok(RunConfig::default()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub artifacts: Vec<String>,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("stage,q,rho,mean_equi_k,mean_equi_witness,minimality_m,ue_k,capt,hard_pass,recorded_failures\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},\"{}\",{},{:.9e},{},{},{},{},{}\n",
            r.stage,
            r.q,
            r.rho,
            r.mean_equi_k,
            r.mean_equi_witness,
            r.minimality_m,
            r.ue_k,
            r.capt.map_or("".to_string(), |b| b.to_string()),
            r.hard_pass,
            r.recorded_failures
        ));
    }
    s
}

pub fn certificates_csv(certs: &[Certificate]) -> String {
    let mut s = String::from("stage,kind,witness,relation,threshold,grid_resolution,pass,params\n");
    for c in certs {
        let rel = serde_json::to_value(c.relation).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let params = serde_json::to_string(&c.params).unwrap_or_default().replace('"', "\"\"");
        s.push_str(&format!(
            "{},{:?},{:.9e},{},{:.9e},{},{},\"{}\"\n",
            c.stage, c.kind, c.witness, rel, c.threshold, c.grid_resolution, c.pass, params
        ));
    }
    s
}

fn construct(a: ConstructArgs) -> Result<i32> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.stages {
        cfg.stages = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = a.profile {
        cfg.profile = match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Strict => Profile::Strict,
        };
    }
    cfg.singular |= a.singular;
    if !a.covers.is_empty() {
        cfg.covers = a.covers.clone();
    }
    if a.j_max.is_some() {
        cfg.j_max = a.j_max;
    }
    cfg.validate()?;
    let out = a.out.clone();
    std::fs::create_dir_all(&out)?;
    let resume = if a.resume {
        match latest_checkpoint(&out) {
            Some(p) => {
                let s = load_checkpoint(&p)?;
                if s.config_digest != cfg.digest() {
                    return Err(Error::Config(format!("{} was produced with a different configuration", p.display())));
                }
                Some(s)
            }
            None => None,
        }
    } else {
        None
    };
    write_json(&out.join("config.json"), &cfg)?;
    let result = engine::run(&cfg, resume, |state| {
        let k = state.completed();
        let path = save_checkpoint(state, &out)?;
        let certs: Vec<&Certificate> = state.stage_certificates(k);
        write_json(&out.join(format!("certificates_stage_{k}.json")), &certs)?;
        if let Some(r) = state.record(k) {
            if let Some(c) = &r.capt {
                write_json(&out.join(format!("capt_stage_{k}.json")), c)?;
            }
            if let Some(c) = &r.collar {
                write_json(&out.join(format!("collar_stage_{k}.json")), c)?;
            }
        }
        eprintln!("stage {k} complete: {}", path.display());
        Ok(())
    });
    let state = match result {
        Ok(s) => s,
        Err(Error::CertificateFailure(json)) => {
            let v: serde_json::Value = serde_json::from_str(&json).unwrap_or(serde_json::Value::String(json.clone()));
            write_json(&out.join("failure.json"), &v)?;
            eprintln!("certificate failure: {json}");
            return Ok(1);
        }
        Err(e) => return Err(e),
    };
    let rows = engine::summary(&state);
    let mut artifacts = vec!["config.json".to_string(), "certificates.json".to_string(), "summary.csv".to_string()];
    for k in 1..=state.completed() {
        artifacts.push(format!("stage_{k}.json"));
        artifacts.push(format!("certificates_stage_{k}.json"));
        if let Some(r) = state.record(k) {
            if r.capt.is_some() {
                artifacts.push(format!("capt_stage_{k}.json"));
            }
            if r.collar.is_some() {
                artifacts.push(format!("collar_stage_{k}.json"));
            }
        }
    }
    write_json(&out.join("certificates.json"), &state.certificates)?;
    write_text(&out.join("summary.csv"), &summary_csv(&rows))?;
    print!("{}", summary_csv(&rows));
    write_json(&out.join("summary.json"), &Summary { rows, artifacts })?;
    Ok(0)
}

fn load_map_state(m: &MapArgs) -> Result<(StageState, u64)> {
    let state = load_checkpoint(&m.checkpoint)?;
    let k = m.stage.unwrap_or(state.completed());
    if k == 0 || k > state.completed() {
        return Err(Error::Config(format!("stage {k} is not completed in {}", m.checkpoint.display())));
    }
    Ok((state, k))
}

/// `φ̂_k` (or its rescaled lift), its base rotation number and `k`.
fn stage_map(m: &MapArgs, cover: Option<CoverIndex>) -> Result<(FiberedMap, f64, u64)> {
    let (state, k) = load_map_state(m)?;
    let psi = state.phi_hat(k);
    let alpha = state.rho_hat_list[k as usize - 1].to_f64()[0];
    match cover {
        Some(c) => Ok((rescaled_lift(&psi, c)?, alpha, k)),
        None => Ok((psi, alpha, k)),
    }
}

fn certify(a: CertifyArgs) -> Result<i32> {
    let (state, k) = load_map_state(&a.map)?;
    let cfg_path = a.config.clone().or_else(|| {
        let p = a.map.checkpoint.parent()?.join("config.json");
        p.exists().then_some(p)
    });
    let cfg = load_config(cfg_path.as_deref())?;
    let eps = 1.0 / k as f64;
    let tilde = Dynamics::from_map(&state.phi_tilde(k));
    let hat = Dynamics::from_map(&state.phi_hat(k));
    let mut certs = vec![
        mean_equi_certificate(&tilde, eps, cfg.mean_equi_k_max, cfg.x_grid, cfg.fiber_grid, k),
        minimality_certificate(&hat, eps, cfg.minimality_m_max, cfg.cert_grid, k),
        ue_variation_certificate(&hat, &trig_family(3), eps, cfg.ue_k_max, cfg.cert_grid, k),
    ];
    // recorded certificates must agree with their own witness/threshold
    for c in state.stage_certificates(k) {
        if !c.consistent() {
            certs.push(c.clone());
        }
    }
    for c in &certs {
        println!("{c}");
    }
    if let Some(out) = &a.out {
        write_json(out, &certs)?;
    }
    Ok(if certs.iter().all(|c| c.pass && c.consistent()) { 0 } else { 1 })
}

fn lift(a: LiftArgs) -> Result<i32> {
    let (psi, _, k) = stage_map(&a.map, Some(a.cover))?;
    let est = invariant_graph_estimate(&psi, a.cover.m, a.n, a.bins, [0.1, 0.2])?;
    let stem = format!("graph_stage_{k}_{}x{}", a.cover.l, a.cover.m);
    write_json(&a.out.join(format!("{stem}.json")), &est)?;
    write_text(&a.out.join(format!("{stem}.csv")), &est.to_csv())?;
    println!(
        "stage {k} cover ({},{}): {} clusters in {:.1}% of {} bins; half-spacing fraction {:.1}%",
        a.cover.l,
        a.cover.m,
        a.cover.m,
        100.0 * est.multiplicity_fraction(),
        est.bins.len(),
        100.0 * est.half_spacing_fraction(1.0 / 16.0)
    );
    Ok(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaSeries {
    pub expr: String,
    pub theta: f64,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudeReport {
    pub stage: u64,
    pub cover: Option<CoverIndex>,
    pub observable: String,
    pub alpha: f64,
    pub seeds: usize,
    pub ns: Vec<u64>,
    pub series: Vec<ThetaSeries>,
}

fn spectrum(a: SpectrumArgs) -> Result<i32> {
    let f: Observable = a.observable.parse()?;
    let (psi, alpha, k) = stage_map(&a.map, a.cover)?;
    if a.n.is_empty() || a.seed_grid == 0 {
        return Err(Error::Config("need at least one N and a positive seed grid".into()));
    }
    let thetas: Vec<f64> = a.thetas.iter().map(|t| eval_theta(t, alpha)).collect::<Result<_>>()?;
    let dynamics = Dynamics::from_map(&psi);
    let seeds = seed_centers(a.seed_grid);
    let amps = mean_amplitude_profile(f, &dynamics, &thetas, &seeds, &a.n);
    let report = AmplitudeReport {
        stage: k,
        cover: a.cover,
        observable: f.id(),
        alpha,
        seeds: seeds.len(),
        ns: a.n.clone(),
        series: a
            .thetas
            .iter()
            .zip(&thetas)
            .zip(amps)
            .map(|((e, &t), v)| ThetaSeries { expr: e.clone(), theta: t, amplitudes: v })
            .collect(),
    };
    let stem = match a.cover {
        Some(c) => format!("stage_{k}_{}x{}_{}", c.l, c.m, f.id().replace([':', ','], "_")),
        None => format!("stage_{k}_{}", f.id().replace([':', ','], "_")),
    };
    let mut csv = String::from("theta_expr,theta,N,a_N\n");
    for s in &report.series {
        for (n, v) in report.ns.iter().zip(&s.amplitudes) {
            csv.push_str(&format!("\"{}\",{:.15},{},{:.9e}\n", s.expr, s.theta, n, v));
            println!("theta={} ({:.12}) N={} a_N={:.6e}", s.expr, s.theta, n, v);
        }
    }
    write_json(&a.out.join(format!("amplitudes_{stem}.json")), &report)?;
    write_text(&a.out.join(format!("amplitudes_{stem}.csv")), &csv)?;
    if let Some(kk) = a.autocorr {
        let est = autocorrelation_scan(f, &dynamics, [0.1, 0.2], a.autocorr_n, kk)?;
        let mut d = String::from("theta,density\n");
        for (i, v) in est.density.iter().enumerate() {
            d.push_str(&format!("{:.9},{:.9e}\n", i as f64 / est.density.len() as f64, v));
        }
        println!("cesaro mean (1/K)Σ|c_k|² = {:.6e}", est.cesaro);
        write_json(&a.out.join(format!("spectral_{stem}.json")), &est)?;
        write_text(&a.out.join(format!("density_{stem}.csv")), &d)?;
    }
    Ok(0)
}

fn capt(a: CaptArgs) -> Result<i32> {
    let (state, k) = load_map_state(&a.map)?;
    let report = engine::capt_check(&state, k, a.orbit)?;
    println!(
        "stage {k}: q = {}, Σ = {:.6e}, s(q) = {:.6e} ({}), s(q²) = {:.6e} ({})",
        report.q,
        report.sigma,
        report.s_q,
        if report.pass_k_q { "pass" } else { "fail" },
        report.s_q2,
        if report.pass_k_q2 { "pass" } else { "fail" }
    );
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("capt_stage_{k}.json")));
    write_json(&out, &report)?;
    Ok(if report.pass_k_q { 0 } else { 1 })
}

pub fn read_orbit_csv(text: &str) -> Result<Vec<[f64; 2]>> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
            continue;
        }
        let mut it = line.split(',').map(|t| t.trim().parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y))) => pts.push([x, y]),
            _ => return Err(Error::Config(format!("orbit line {}: cannot parse '{line}'", i + 1))),
        }
    }
    Ok(pts)
}

fn plot_cmd(a: PlotArgs) -> Result<i32> {
    let title = a.input.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    let svg = match a.kind {
        PlotKind::Orbit => {
            let text = std::fs::read_to_string(&a.input).map_err(|e| Error::MissingArtifact(format!("{}: {e}", a.input.display())))?;
            plot::orbit_svg(&title, &read_orbit_csv(&text)?)?
        }
        PlotKind::Graph => plot::graph_svg(&title, &read_json::<GraphEstimate>(&a.input)?)?,
        PlotKind::Amplitude => {
            let r: AmplitudeReport = read_json(&a.input)?;
            let series: Vec<(String, Vec<(u64, f64)>)> = r
                .series
                .iter()
                .map(|s| (format!("θ = {}", s.expr), r.ns.iter().copied().zip(s.amplitudes.iter().copied()).collect()))
                .collect();
            plot::amplitude_svg(&title, &series)?
        }
        PlotKind::Density => plot::density_svg(&title, &read_json::<SpectralEstimate>(&a.input)?.density)?,
    };
    write_text(&a.out, &svg)?;
    Ok(0)
}

fn export(a: ExportArgs) -> Result<i32> {
    let text = match a.what {
        ExportWhat::Orbit => {
            let (psi, _, _) = stage_map(&a.map, a.cover)?;
            let dyn_ = Dynamics::from_map(&psi);
            let mut s = String::from("x,y\n");
            for z in dyn_.stepper(a.start).take(a.n as usize) {
                s.push_str(&format!("{:.12},{:.12}\n", z[0], z[1]));
            }
            s
        }
        ExportWhat::Summary => summary_csv(&engine::summary(&load_checkpoint(&a.map.checkpoint)?)),
        ExportWhat::Certificates => certificates_csv(&load_checkpoint(&a.map.checkpoint)?.certificates),
    };
    write_text(&a.out, &text)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_expressions() {
        let a = 0.3;
        assert_eq!(eval_theta("alpha", a).unwrap(), 0.3);
        assert!((eval_theta("(alpha+1)/2", a).unwrap() - 0.65).abs() < 1e-15);
        assert!((eval_theta("alpha + 0.3", a).unwrap() - 0.6).abs() < 1e-15);
        assert!((eval_theta("-alpha*2", a).unwrap() + 0.6).abs() < 1e-15);
        assert_eq!(eval_theta("0.25", a).unwrap(), 0.25);
        assert!(eval_theta("alpha+", a).is_err());
        assert!(eval_theta("beta", a).is_err());
        assert!(eval_theta("1/0", a).is_err());
    }

    #[test]
    fn argument_parsers() {
        assert_eq!(parse_pair("1,2").unwrap(), [1, 2]);
        assert!(parse_pair("1").is_err());
        assert_eq!(parse_cover("2,3,1,2").unwrap(), CoverIndex { l: 2, m: 3, s: [1, 2] });
        assert!(parse_cover("2,3,2,0").is_err());
        assert_eq!(parse_point("0.5,0.25").unwrap(), [0.5, 0.25]);
    }

    #[test]
    fn orbit_csv_roundtrip() {
        let pts = read_orbit_csv("x,y\n0.1,0.2\n0.3,0.4\n").unwrap();
        assert_eq!(pts, vec![[0.1, 0.2], [0.3, 0.4]]);
        assert!(read_orbit_csv("x,y\n").unwrap().is_empty());
        assert!(read_orbit_csv("x,y\n0.1;0.2\n").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::CertificateFailure("x".into())), 1);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(main_with_args(["skewlab", "construct", "--stages", "0"]), 2);
        assert_eq!(main_with_args(["skewlab", "frobnicate"]), 2);
    }
}
