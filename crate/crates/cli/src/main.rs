//! `mergesim` command-line frontend.
//!
//! Exit codes: 0 ok, 2 input/parse failure, 3 simulation failure,
//! 4 `--strict` filter failure, 5 no successful fit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mergesim_core::calibrate::{fit_corpus, FitConfig, FitResult};
use mergesim_core::dataio::{
    event_file_name, filter_corpus, generate_synthetic_event_with_params, load_corpus, load_event,
    save_event, ScenarioSpec, MANIFEST_NAME,
};
use mergesim_core::metrics::{theil_u, EvalWindow};
use mergesim_core::simulate::{simulate_event, SimConfig, SimResult};
use mergesim_core::{validate_event, MergeEvent, ModelKind, ModelParams};

#[derive(Parser)]
#[command(
    name = "mergesim",
    version,
    about = "Merge-reactive car-following simulation and calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the TA of one event and write the speed profile as CSV.
    Simulate(SimulateArgs),
    /// Fit models to every event of a corpus.
    Fit(FitArgs),
    /// Apply the event filters to a corpus and report tallies.
    Filter(FilterArgs),
    /// Generate synthetic events from a scenario description.
    Generate(GenerateArgs),
    /// Write per-event speed overlays for fitted parameters.
    Report(ReportArgs),
}

#[derive(Args)]
struct WindowArg {
    /// Evaluation window override as START:END seconds.
    #[arg(long, value_parser = parse_window)]
    window: Option<EvalWindow>,
}

#[derive(Args)]
struct SimulateArgs {
    event: PathBuf,
    #[arg(long, default_value = "MR_IDM")]
    model: ModelKind,
    /// JSON parameter file: a full parameter set or a name -> value map.
    #[arg(long)]
    params: Option<PathBuf>,
    #[command(flatten)]
    window: WindowArg,
    /// Refuse events that fail the filters.
    #[arg(long)]
    strict: bool,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    corpus: PathBuf,
    /// Model kinds to fit (repeatable or comma separated).
    #[arg(long = "model", value_delimiter = ',', default_values_t = [ModelKind::Idm, ModelKind::MrIdm])]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    window: WindowArg,
    /// Only fit events that pass the filters; fail if any does not.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    corpus: PathBuf,
    /// Exit with code 4 if any event is rejected.
    #[arg(long)]
    strict: bool,
    /// JSON report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario JSON; a built-in scenario when absent.
    spec: Option<PathBuf>,
    /// Built-in scenario: standard_merge, overtaking_merge or car_following.
    #[arg(long, default_value = "standard_merge")]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    corpus: PathBuf,
    /// `fits.json` written by the fit command.
    #[arg(long)]
    fits: PathBuf,
    #[command(flatten)]
    window: WindowArg,
    #[arg(long)]
    out: PathBuf,
}

/// An error with its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

const PARSE: u8 = 2;
const SIM: u8 = 3;
const STRICT: u8 = 4;
const NO_FITS: u8 = 5;

fn parse_window(s: &str) -> Result<EvalWindow, String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    EvalWindow::new(a, b).map_err(|e| e.to_string())
}

fn load_params(kind: ModelKind, path: Option<&Path>) -> Result<ModelParams> {
    let Some(path) = path else {
        return Ok(ModelParams::defaults(kind));
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let params = match serde_json::from_str::<ModelParams>(&text) {
        Ok(p) => p,
        Err(_) => {
            let map: BTreeMap<String, f64> = serde_json::from_str(&text).with_context(|| {
                format!(
                    "{}: neither a parameter set nor a name -> value map",
                    path.display()
                )
            })?;
            let mut p = ModelParams::defaults(kind);
            for (name, value) in &map {
                p.set(name, *value)?;
            }
            p
        }
    };
    if params.model_kind != kind {
        bail!("parameter file is for {}, not {kind}", params.model_kind);
    }
    params.validate()?;
    Ok(params)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn sim_csv(res: &SimResult) -> String {
    let mut out = String::from("time,speed_sim,speed_raw,accel,state,fallback\n");
    for k in 0..res.len() {
        let d = &res.diagnostics[k];
        let fallback = d
            .fallback
            .as_ref()
            .map(|f| f.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:.3},{},{},{},{},{}",
            res.times[k],
            res.ta_speed[k],
            res.raw_speed[k],
            res.accel[k],
            d.state,
            fallback.replace(',', ";")
        );
    }
    out
}

#[derive(Serialize)]
struct SimSummary<'a> {
    event_id: &'a str,
    model_kind: ModelKind,
    steps: usize,
    theil_u: f64,
    fallback_fraction: f64,
    clamped_steps: usize,
}

fn strict_check(event: &MergeEvent) -> Result<(), Failure> {
    let violations = validate_event(event);
    if violations.is_empty() {
        return Ok(());
    }
    for v in &violations {
        eprintln!("{}: {v}", event.event_id);
    }
    Err(Failure {
        code: STRICT,
        error: anyhow!(
            "event '{}' fails {} filter(s)",
            event.event_id,
            violations.len()
        ),
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let event = load_event(&args.event).exit_with(PARSE)?;
    let params = load_params(args.model, args.params.as_deref()).exit_with(PARSE)?;
    if args.strict {
        strict_check(&event)?;
    }
    let mut config = SimConfig::new(params);
    config.window = args.window.window;
    let res = simulate_event(&event, &config).exit_with(SIM)?;
    let u = theil_u(&res.ta_speed, &res.raw_speed).exit_with(SIM)?;
    write_or_print(args.out.as_deref(), &sim_csv(&res)).exit_with(PARSE)?;
    if args.out.is_some() {
        let summary = SimSummary {
            event_id: &res.event_id,
            model_kind: res.model_kind,
            steps: res.len(),
            theil_u: u.u,
            fallback_fraction: res.fallback_fraction(),
            clamped_steps: res.diagnostics.iter().filter(|d| d.clamped).count(),
        };
        print!("{}", to_json(&summary));
    }
    Ok(())
}

fn load_corpus_checked(dir: &Path) -> Result<Vec<MergeEvent>, Failure> {
    let corpus = load_corpus(dir).exit_with(PARSE)?;
    for d in &corpus.diagnostics {
        eprintln!("{}: {}", d.path, d.message);
    }
    Ok(corpus.events)
}

fn params_column(p: &ModelParams) -> String {
    p.names()
        .iter()
        .map(|n| format!("{n}={}", p.values[*n]))
        .collect::<Vec<_>>()
        .join(";")
}

fn fits_csv(results: &[FitResult]) -> String {
    let mut out =
        String::from("event_id,model,cost,iterations,evaluations,converged,restarts,params\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.event_id,
            r.model_kind,
            r.cost,
            r.iterations,
            r.evaluations,
            r.converged,
            r.restarts_used,
            params_column(&r.fitted_params)
        );
    }
    out
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let mut events = load_corpus_checked(&args.corpus)?;
    if args.strict {
        for e in &events {
            strict_check(e)?;
        }
    }
    if events.is_empty() || args.models.is_empty() {
        return Err(Failure {
            code: NO_FITS,
            error: anyhow!("nothing to fit"),
        });
    }
    events.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    let config = FitConfig {
        seed: args.seed,
        window: args.window.window,
        ..FitConfig::default()
    };
    let fit = fit_corpus(&events, &args.models, &config, args.jobs).exit_with(SIM)?;
    for f in &fit.failures {
        eprintln!("{} {}: {}", f.event_id, f.model_kind, f.error);
    }

    let mut summary = String::from("model,count,mean,median,std,q1,q3,min,max\n");
    for (kind, s) in &fit.summaries {
        let _ = writeln!(
            summary,
            "{kind},{},{},{},{},{},{},{},{}",
            s.count, s.mean, s.median, s.std, s.q1, s.q3, s.min, s.max
        );
    }
    let write = || -> Result<()> {
        fs::create_dir_all(&args.out)?;
        fs::write(args.out.join("fits.csv"), fits_csv(&fit.results))?;
        fs::write(args.out.join("summary.csv"), summary)?;
        fs::write(args.out.join("fits.json"), to_json(&fit.results))?;
        fs::write(
            args.out.join("summary.json"),
            to_json(&serde_json::json!({
                "seed": args.seed,
                "models": args.models,
                "events": events.len(),
                "summaries": fit.summaries,
                "failures": fit.failures,
            })),
        )?;
        Ok(())
    };
    write().exit_with(PARSE)?;
    if fit.results.is_empty() {
        return Err(Failure {
            code: NO_FITS,
            error: anyhow!("no fit succeeded"),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct Rejection {
    event_id: String,
    violations: Vec<String>,
}

#[derive(Serialize)]
struct FilterSummary {
    total: usize,
    valid: usize,
    tallies: BTreeMap<String, usize>,
    rejected: Vec<Rejection>,
}

fn cmd_filter(args: FilterArgs) -> Result<(), Failure> {
    let events = load_corpus_checked(&args.corpus)?;
    let report = filter_corpus(&events);
    let summary = FilterSummary {
        total: events.len(),
        valid: report.valid.len(),
        tallies: report.tallies.clone(),
        rejected: report
            .rejected
            .iter()
            .map(|(e, v)| Rejection {
                event_id: e.event_id.clone(),
                violations: v.iter().map(|v| v.to_string()).collect(),
            })
            .collect(),
    };
    write_or_print(args.out.as_deref(), &to_json(&summary)).exit_with(PARSE)?;
    if args.strict && !report.rejected.is_empty() {
        for r in &summary.rejected {
            eprintln!("{}: {}", r.event_id, r.violations.join("; "));
        }
        return Err(Failure {
            code: STRICT,
            error: anyhow!("{} event(s) rejected", report.rejected.len()),
        });
    }
    Ok(())
}

fn builtin_scenario(name: &str) -> Result<ScenarioSpec> {
    match name {
        "standard_merge" => Ok(ScenarioSpec::standard_merge()),
        "overtaking_merge" => Ok(ScenarioSpec::overtaking_merge()),
        "car_following" => Ok(ScenarioSpec::car_following()),
        other => bail!("unknown scenario '{other}'"),
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    event_id: String,
    file: String,
    seed: u64,
    generator: ModelParams,
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .exit_with(PARSE)?;
            serde_json::from_str::<ScenarioSpec>(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .exit_with(PARSE)?
        }
        None => builtin_scenario(&args.scenario).exit_with(PARSE)?,
    };
    spec.check().exit_with(PARSE)?;
    fs::create_dir_all(&args.out).exit_with(PARSE)?;

    let mut manifest = Vec::with_capacity(args.n);
    for i in 0..args.n {
        let seed = args.seed.wrapping_add(i as u64);
        let id = format!("syn-{:04}", i);
        let (event, generator) =
            generate_synthetic_event_with_params(&spec, seed, &id).exit_with(SIM)?;
        let file = event_file_name(&event);
        save_event(&event, &args.out.join(&file)).exit_with(PARSE)?;
        manifest.push(ManifestEntry {
            event_id: id,
            file,
            seed,
            generator,
        });
    }
    let doc = serde_json::json!({
        "scenario": spec,
        "base_seed": args.seed,
        "events": manifest,
    });
    fs::write(args.out.join(MANIFEST_NAME), to_json(&doc)).exit_with(PARSE)?;
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let events = load_corpus_checked(&args.corpus)?;
    let text = fs::read_to_string(&args.fits)
        .with_context(|| format!("reading {}", args.fits.display()))
        .exit_with(PARSE)?;
    let fits: Vec<serde_json::Value> = serde_json::from_str(&text).exit_with(PARSE)?;
    let mut by_event: BTreeMap<String, Vec<ModelParams>> = BTreeMap::new();
    for f in fits {
        let id = f["event_id"].as_str().unwrap_or_default().to_string();
        let params: ModelParams =
            serde_json::from_value(f["fitted_params"].clone()).exit_with(PARSE)?;
        by_event.entry(id).or_default().push(params);
    }
    fs::create_dir_all(&args.out).exit_with(PARSE)?;

    for event in &events {
        let Some(param_sets) = by_event.get(&event.event_id) else {
            continue;
        };
        let mut runs = Vec::new();
        for params in param_sets {
            let mut config = SimConfig::new(params.clone());
            config.window = args.window.window;
            runs.push(simulate_event(event, &config).exit_with(SIM)?);
        }
        let base = &runs[0];
        let mut csv = String::from("time,speed_raw");
        for r in &runs {
            let _ = write!(csv, ",speed_{}", r.model_kind);
        }
        csv.push('\n');
        for k in 0..base.len() {
            let _ = write!(csv, "{:.3},{}", base.times[k], base.raw_speed[k]);
            for r in &runs {
                let v = r.ta_speed.get(k).map_or(String::new(), |v| v.to_string());
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
        let name = event_file_name(event).replace(".event.json", ".overlay.csv");
        fs::write(args.out.join(name), csv).exit_with(PARSE)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
