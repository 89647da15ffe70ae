mod args;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use mubqpt::channels::{apply_channel, channel_checks, load_channel, ChannelSpec, KrausChannel};
use mubqpt::experiments::{
    default_channels, export_results, mu_grid, perturb_probabilities, rows_to_csv, ExportFormat,
    SweepConfig,
};
use mubqpt::mub::{
    complexity_totals, default_factorization, generate_mub, mub_from_json_unverified, mub_to_json,
    verify_mub, ComplexityModel,
};
use mubqpt::numerics::{matrix_from_json, matrix_to_json, DensityMatrix};
use mubqpt::tomography::{
    build_beta, process_fidelity, process_probabilities, refine_physical, solve_chi,
    RefinementConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde_json::json;

use args::*;

/// Failures split by exit code: bad input (1) or a failed numerical check (2).
#[derive(Debug)]
enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<mubqpt::Error> for Failure {
    fn from(e: mubqpt::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Mub(MubCommand::Gen(a)) => mub_gen(with_config(a, config)?),
        Command::Mub(MubCommand::Verify(a)) => mub_verify(with_config(a, config)?),
        Command::Mub(MubCommand::Complexity(a)) => mub_complexity(with_config(a, config)?),
        Command::Channel(ChannelCommand::Apply(a)) => channel_apply(with_config(a, config)?),
        Command::Channel(ChannelCommand::Check(a)) => channel_check(with_config(a, config)?),
        Command::Qpt(QptCommand::Run(a)) => qpt_run(with_config(a, config)?),
        Command::Sweep(a) => sweep(with_config(a, config)?),
    }
}

fn with_config<T: Merge + DeserializeOwned>(flags: T, path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else { return Ok(flags) };
    let text =
        std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let file: T =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(flags.merge(file))
}

/// Collects validation problems so they are reported together.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn require<T>(&mut self, value: Option<T>, flag: &str) -> Option<T> {
        if value.is_none() {
            self.0.push(format!("missing required --{flag}"));
        }
        value
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    fn note(&mut self, err: impl std::fmt::Display) {
        self.0.push(err.to_string());
    }

    fn finish(self) -> CliResult {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(invalid(self.0.join("; ")))
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(invalid(format!("stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn mub_gen(a: MubGenArgs) -> CliResult {
    let mut p = Problems::default();
    let dim = p.require(a.dim, "dim");
    p.finish()?;
    let set = generate_mub(dim.unwrap())?;
    emit(&mub_to_json(&set), a.out.as_deref())
}

fn mub_verify(a: MubVerifyArgs) -> CliResult {
    let mut p = Problems::default();
    let input = p.require(a.input, "in");
    let tol = a.tol.unwrap_or(1e-10);
    p.check(tol > 0.0, || format!("--tol must be positive, got {tol}"));
    p.finish()?;
    let path = input.unwrap();
    let text =
        std::fs::read_to_string(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let set = mub_from_json_unverified(&text)?;
    let report = verify_mub(&set, tol);
    emit(
        &serde_json::to_string_pretty(&report).expect("report serializes"),
        None,
    )?;
    if report.pass {
        Ok(())
    } else {
        Err(invalid(report.to_string()))
    }
}

fn mub_complexity(a: MubComplexityArgs) -> CliResult {
    let mut p = Problems::default();
    let dim = p.require(a.dim, "dim");
    let given: Option<Vec<u64>> = match a.c_alpha.as_deref() {
        Some(s) => match s.split(',').map(|x| x.trim().parse::<u64>()).collect() {
            Ok(v) => Some(v),
            Err(_) => {
                p.note(format!(
                    "--c-alpha must be comma-separated non-negative integers, got {s:?}"
                ));
                None
            }
        },
        None => None,
    };
    p.finish()?;
    let dim = dim.unwrap();
    let factorization = default_factorization(dim);
    let model = match given {
        Some(c_alpha) => ComplexityModel {
            c_alpha,
            factorization: factorization.clone(),
        },
        None => ComplexityModel::heuristic(&generate_mub(dim)?, &factorization)?,
    };
    let totals = complexity_totals(&model, dim)?;
    emit(
        &pretty(&json!({
            "dim": dim,
            "factorization": model.factorization,
            "c_alpha": model.c_alpha,
            "total": totals.total,
            "qpt_gates": totals.qpt_gates,
        })),
        None,
    )
}

/// Builds `name[:param]`; `param`, when given, replaces the spec's own.
fn parse_channel(spec: &str, param: Option<f64>, dim: usize) -> CliResult<KrausChannel> {
    let spec: ChannelSpec = match param {
        Some(x) => format!("{}:{x}", spec.split(':').next().unwrap_or(spec)).parse()?,
        None => spec.parse()?,
    };
    Ok(spec.build(dim)?)
}

fn channel_apply(a: ChannelApplyArgs) -> CliResult {
    let mut p = Problems::default();
    let channel = p.require(a.channel, "channel");
    let state = p.require(a.state, "state");
    p.finish()?;
    let path = state.unwrap();
    let text =
        std::fs::read_to_string(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let rho = DensityMatrix::new(matrix_from_json(&text)?)?;
    let ch = parse_channel(&channel.unwrap(), a.param, rho.dim())?;
    let out = apply_channel(&ch, &rho)?;
    emit(&matrix_to_json(out.matrix()), a.out.as_deref())
}

fn channel_check(a: ChannelCheckArgs) -> CliResult {
    let mut p = Problems::default();
    let input = p.require(a.input, "in");
    p.finish()?;
    let ch = load_channel(input.unwrap())?;
    let checks = channel_checks(&ch);
    emit(
        &pretty(&json!({
            "name": ch.name(),
            "dim": ch.dim(),
            "operators": ch.operators().len(),
            "trace_preserving": checks.trace_preserving,
            "unital": checks.unital,
            "trace_preserving_residual": checks.trace_preserving_residual,
            "unital_residual": checks.unital_residual,
        })),
        None,
    )
}

fn refinement(
    refine: Option<bool>,
    weight: Option<f64>,
    max_iterations: Option<usize>,
    p: &mut Problems,
) -> Option<RefinementConfig> {
    let mut cfg = RefinementConfig::default();
    if let Some(w) = weight {
        p.check(w.is_finite() && w >= 0.0, || {
            format!("--penalty-weight must be >= 0, got {w}")
        });
        cfg.weights = vec![w];
    }
    if let Some(n) = max_iterations {
        cfg.max_iterations = n;
    }
    refine.unwrap_or(false).then_some(cfg)
}

fn check_mu_flag(p: &mut Problems, flag: &str, mu: f64) {
    p.check((0.0..=1.0).contains(&mu), || {
        format!("--{flag} must lie in [0, 1], got {mu}")
    });
}

fn qpt_run(a: QptRunArgs) -> CliResult {
    let mut p = Problems::default();
    let dim = p.require(a.dim, "dim");
    let channel = p.require(a.channel, "channel");
    let mu = a.mu.unwrap_or(0.0);
    check_mu_flag(&mut p, "mu", mu);
    let seed = a.seed.unwrap_or(0);
    let refine = refinement(a.refine, a.penalty_weight, a.max_iterations, &mut p);
    p.finish()?;
    let dim = dim.unwrap();
    let ch = parse_channel(&channel.unwrap(), a.param, dim)?;
    let set = generate_mub(dim)?;
    let beta = build_beta(&set)?;
    let exact = process_probabilities(&ch, &set)?;
    let reference = solve_chi(&beta, &exact)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let measured = perturb_probabilities(&exact, mu, &mut rng)?;
    if let Some(path) = &a.save_probabilities {
        std::fs::write(path, measured.to_json())
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    }
    let raw = solve_chi(&beta, &measured)?;
    let mut summary = json!({
        "dim": dim,
        "channel": ch.name(),
        "mu": mu,
        "seed": seed,
        "beta_rank": beta.rank(),
        "pinv_residual": beta.pinv_residual(),
        "asymmetry": raw.asymmetry,
        "forward_residual": raw.forward_residual,
    });
    let chi = match &refine {
        Some(cfg) => {
            let r = refine_physical(&raw.chi, &measured, &beta, &set, cfg)?;
            summary["refinement"] = json!({
                "objective": r.objective,
                "deviation": r.deviation,
                "tp_residual": r.tp_residual,
                "iterations": r.iterations,
                "converged": r.converged,
            });
            if !r.converged {
                log::warn!("refinement hit the iteration cap ({})", r.iterations);
            }
            r.chi
        }
        None => raw.chi,
    };
    let fidelity = process_fidelity(&reference.chi, &chi)?;
    summary["fidelity"] = json!(fidelity.value);
    summary["min_eigenvalue"] = json!(chi.min_eigenvalue()?);
    if let Some(path) = &a.out {
        chi.save(path)?;
    }
    emit(&pretty(&summary), None)
}

fn thread_count() -> CliResult<usize> {
    match std::env::var("MUBQPT_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            invalid(format!(
                "MUBQPT_THREADS must be a non-negative integer, got {v:?}"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(invalid(format!("MUBQPT_THREADS: {e}"))),
    }
}

fn output_format(format: Option<&str>, out: Option<&Path>) -> CliResult<ExportFormat> {
    if let Some(f) = format {
        return Ok(f.parse()?);
    }
    let json = out
        .and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    Ok(if json {
        ExportFormat::Json
    } else {
        ExportFormat::Csv
    })
}

fn sweep(a: SweepArgs) -> CliResult {
    let mut p = Problems::default();
    let dim = a.dim.unwrap_or(4);
    let trials = a.trials.unwrap_or(100);
    p.check(trials >= 1, || "--trials must be at least 1".into());
    let (start, end, step) = (
        a.mu_start.unwrap_or(0.01),
        a.mu_end.unwrap_or(0.15),
        a.mu_step.unwrap_or(0.01),
    );
    check_mu_flag(&mut p, "mu-start", start);
    check_mu_flag(&mut p, "mu-end", end);
    let grid = match mu_grid(start, end, step) {
        Ok(g) => g,
        Err(e) => {
            p.note(e);
            Vec::new()
        }
    };
    let refine = refinement(a.refine, a.penalty_weight, a.max_iterations, &mut p);
    let format = match output_format(a.format.as_deref(), a.out.as_deref()) {
        Ok(f) => Some(f),
        Err(Failure::Validation(m) | Failure::Numerical(m)) => {
            p.note(m);
            None
        }
    };
    let threads = match thread_count() {
        Ok(n) => n,
        Err(Failure::Validation(m) | Failure::Numerical(m)) => {
            p.note(m);
            0
        }
    };
    let channels = match &a.channels {
        None if dim == 4 => default_channels(),
        None => vec![KrausChannel::identity(dim)],
        Some(list) => {
            let mut out = Vec::new();
            for spec in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match parse_channel(spec, None, dim) {
                    Ok(ch) => out.push(ch),
                    Err(Failure::Validation(m) | Failure::Numerical(m)) => p.note(m),
                }
            }
            if out.is_empty() && p.0.is_empty() {
                p.note("--channels lists no channels");
            }
            out
        }
    };
    p.finish()?;
    let format = format.unwrap();

    let set = generate_mub(dim)?;
    let beta = build_beta(&set)?;
    let config = SweepConfig {
        mu_grid: grid,
        trials,
        seed: a.seed.unwrap_or(0),
        refine,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let result = pool.install(|| {
        mubqpt::experiments::run_sweep(&channels, &set, &beta, &config, |mu, aggs| {
            let mut line = format!("mu={mu}");
            for agg in aggs {
                let _ = write!(line, " {}={:.6}", agg.channel, agg.mean_fidelity);
            }
            log::info!("{line}");
        })
    })?;
    match a.out {
        Some(path) => {
            export_results(&result, format, &path)?;
            log_written(&path, format);
            Ok(())
        }
        None => match format {
            ExportFormat::Csv => emit(rows_to_csv(&result.rows)?.trim_end(), None),
            ExportFormat::Json => emit(
                &serde_json::to_string_pretty(&result).expect("serializes"),
                None,
            ),
        },
    }
}

fn log_written(path: &Path, format: ExportFormat) {
    match format {
        ExportFormat::Csv => log::info!(
            "wrote {} and {}",
            path.display(),
            mubqpt::experiments::aggregate_path(path).display()
        ),
        ExportFormat::Json => log::info!("wrote {}", path.display()),
    }
}
