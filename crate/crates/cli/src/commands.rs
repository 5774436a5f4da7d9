use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ookdim::baseline::{search_codebook, CsiModel, SearchConfig};
use ookdim::checkpoint::Checkpoint;
use ookdim::codebook::{load_fixture, Codebook};
use ookdim::config::{DecoderCsi, TrainConfig, DEFAULT_CONFIG_TOML};
use ookdim::evaluator::{compare, measure_all, DnnSystem, EvalConfig, EvalReport, MlSystem, System};
use ookdim::optics::LedModel;
use ookdim::registry::channel_model;
use ookdim::trainer::{train, TraceRow, TrainObserver, ValidationRecord};
use ookdim::{rng_stream, Error};

use crate::manifest::RunManifest;
use crate::{AuditArgs, BaselineArgs, Cli, Command, CompareArgs, EvalArgs, GlobalArgs, TrainArgs};

const INFEASIBLE_EXIT: u8 = 2;

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    if g.print_default_config {
        print!("{}", default_config(&cli.command)?);
        return Ok(ExitCode::SUCCESS);
    }
    if g.threads == 0 {
        bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads)
        .build_global()
        .context("configuring the worker pool")?;
    let feasible = match &cli.command {
        Command::Train(a) => cmd_train(g, a)?,
        Command::Eval(a) => cmd_eval(g, a)?,
        Command::Baseline(a) => cmd_baseline(g, a)?,
        Command::Audit(a) => cmd_audit(g, a)?,
        Command::Compare(a) => cmd_compare(g, a)?,
    };
    if feasible || g.allow_infeasible {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("feasibility audit failed (pass --allow-infeasible to accept)");
        Ok(ExitCode::from(INFEASIBLE_EXIT))
    }
}

fn default_config(command: &Command) -> Result<String> {
    Ok(match command {
        Command::Train(_) => DEFAULT_CONFIG_TOML.to_string(),
        Command::Eval(_) => toml::to_string_pretty(&default_eval_config())?,
        Command::Baseline(_) => toml::to_string_pretty(&SearchConfig::new(8, 4, 4.0, "strict"))?,
        Command::Audit(_) | Command::Compare(_) => bail!("this subcommand takes no configuration file"),
    })
}

fn default_eval_config() -> EvalConfig {
    EvalConfig::new((0..=7).map(|k| 2.0 * k as f64).collect(), 100_000)
}

fn parse_led(name: &str) -> Result<LedModel> {
    match name {
        "linear" => Ok(LedModel::Linear),
        "kingbright" => Ok(LedModel::kingbright()),
        other => bail!("unknown LED `{other}` (expected linear or kingbright)"),
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn format_target(d: f64) -> String {
    format!("{d}")
}

/// Append-only CSV traces, flushed at every validation so an interrupted
/// run stays inspectable.
struct CsvTrace {
    steps: csv::Writer<File>,
    validations: csv::Writer<File>,
}

impl CsvTrace {
    fn open(dir: &Path, targets: &[f64]) -> Result<Self> {
        let open = |name: &str| -> Result<File> {
            let path = dir.join(name);
            OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(&path)
                .with_context(|| format!("opening {}", path.display()))
        };
        let mut steps = csv::Writer::from_writer(open("trace.csv")?);
        let mut validations = csv::Writer::from_writer(open("validation.csv")?);
        let ds: Vec<String> = targets.iter().map(|&d| format_target(d)).collect();
        let mut header = vec!["iteration".to_string(), "cost".into(), "lagrangian".into()];
        header.extend(ds.iter().map(|d| format!("residual_{d}")));
        header.extend(ds.iter().map(|d| format!("lambda_{d}")));
        steps.write_record(&header)?;
        let mut header = vec![
            "iteration".to_string(),
            "cost".into(),
            "lagrangian".into(),
            "ser".into(),
            "feasible".into(),
            "accepted".into(),
        ];
        header.extend(ds.iter().map(|d| format!("constraint_{d}")));
        validations.write_record(&header)?;
        steps.flush()?;
        validations.flush()?;
        Ok(Self { steps, validations })
    }
}

fn to_err(e: impl std::fmt::Display) -> Error {
    Error::Serde(e.to_string())
}

impl TrainObserver for CsvTrace {
    fn on_step(&mut self, row: &TraceRow) -> ookdim::Result<()> {
        let mut rec = vec![row.iteration.to_string(), row.cost.to_string(), row.lagrangian.to_string()];
        rec.extend(row.residuals.iter().map(f64::to_string));
        rec.extend(row.lambdas.iter().map(f64::to_string));
        self.steps.write_record(&rec).map_err(to_err)
    }

    fn on_validation(&mut self, r: &ValidationRecord) -> ookdim::Result<()> {
        let mut rec = vec![
            r.iteration.to_string(),
            r.cost.to_string(),
            r.lagrangian.to_string(),
            r.symbol_error_rate.to_string(),
            r.feasible.to_string(),
            r.accepted.to_string(),
        ];
        rec.extend(r.constraint_values.iter().map(f64::to_string));
        self.validations.write_record(&rec).map_err(to_err)?;
        self.validations.flush().map_err(to_err)?;
        self.steps.flush().map_err(to_err)
    }
}

fn load_train_config(g: &GlobalArgs, a: &TrainArgs) -> Result<TrainConfig> {
    let mut config = if let Some(path) = &a.manifest {
        let manifest = RunManifest::load(path)?;
        if manifest.command != "train" {
            bail!("{} is a `{}` manifest, not a training run", path.display(), manifest.command);
        }
        serde_json::from_value(manifest.config).context("manifest configuration snapshot")?
    } else if let Some(path) = &g.config {
        TrainConfig::load(path)?
    } else {
        TrainConfig::default()
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(mode) = g.isi_delay_mode {
        config.channel.isi_delay_mode = mode;
    }
    match g.csi {
        None => {}
        Some(CsiModel::Perfect) => config.decoder.csi = DecoderCsi::Perfect,
        Some(CsiModel::None) => config.decoder.csi = DecoderCsi::None,
        Some(CsiModel::Perturbed(_)) => bail!("a learned decoder takes perfect or no CSI, not perturbed"),
    }
    config.validate()?;
    Ok(config)
}

fn cmd_train(g: &GlobalArgs, a: &TrainArgs) -> Result<bool> {
    let config = load_train_config(g, a)?;
    let out = &g.out_dir;
    create_out_dir(out)?;
    let start = Instant::now();
    let mut manifest = RunManifest::new("train", config.seed, g.threads, serde_json::to_value(&config)?);
    let mut trace = CsvTrace::open(out, &config.code.dimming_set)?;
    let outcome = train(&config, &mut trace)?;
    drop(trace);
    manifest.add(out, "trace", "trace.csv")?;
    manifest.add(out, "validation-trace", "validation.csv")?;

    Checkpoint::from_outcome(&config, &outcome).save(&out.join("checkpoint.json"))?;
    manifest.add(out, "checkpoint", "checkpoint.json")?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&outcome.report)?)?;
    manifest.add(out, "report", "report.json")?;

    let codebook_dir = out.join("codebooks");
    create_out_dir(&codebook_dir)?;
    for t in 0..config.code.dimming_set.len() {
        let cb = ookdim::codebook::extract_codebook(&outcome.params, &outcome.binarizer, t)?;
        let name = format!("d_{}.txt", format_target(cb.dimming));
        cb.save(&codebook_dir.join(&name))?;
        manifest.add(out, "codebook", PathBuf::from("codebooks").join(name))?;
        let audit = cb.audit();
        println!(
            "d={}: average weight {:.4}, average power {:.4}, min distance {}",
            cb.dimming,
            audit.average_weight,
            cb.average_power(&config.led),
            audit.min_hamming_distance
        );
    }
    let r = &outcome.report;
    println!(
        "{} iterations, feasible {}, best iteration {:?}, validation cost {:?}",
        r.iterations, r.feasible, r.best_iteration, r.best_cost
    );
    if let Some(reason) = &r.aborted {
        eprintln!("training aborted early: {reason}");
    }
    manifest.feasible = r.feasible && r.aborted.is_none();
    manifest.finish(out, start.elapsed().as_secs_f64())?;
    Ok(manifest.feasible)
}

fn cmd_eval(g: &GlobalArgs, a: &EvalArgs) -> Result<bool> {
    if a.checkpoint.is_none() && a.codebook.is_empty() {
        bail!("eval needs --checkpoint and/or --codebook");
    }
    let checkpoint = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let mut config = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<EvalConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let mut c = default_eval_config();
            if let Some(cp) = &checkpoint {
                c.channel = cp.config.channel.clone();
                c.led = cp.config.led.clone();
            }
            c
        }
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(mode) = g.isi_delay_mode {
        config.channel.isi_delay_mode = mode;
    }
    if let Some(csi) = g.csi {
        config.csi = csi;
    }
    if let Some(snr) = &a.snr {
        config.snr_db = snr.clone();
    }
    if let Some(trials) = a.trials {
        config.trials_per_point = trials;
    }
    config.validate()?;

    let out = &g.out_dir;
    create_out_dir(out)?;
    let start = Instant::now();
    let mut manifest = RunManifest::new("eval", config.seed, g.threads, serde_json::to_value(&config)?);
    let mut feasible = true;
    let mut tolerance = 0.05;
    let mut systems: Vec<Box<dyn System>> = Vec::new();
    let mut mean_rng = rng_stream(config.seed, u64::MAX);

    if let Some(cp) = &checkpoint {
        feasible &= cp.feasible;
        tolerance = cp.config.training.feasibility_tolerance;
        let dnn = DnnSystem::new("dnn", cp.params.clone(), &cp.binarizer)?;
        if a.ml {
            let codebooks = (0..cp.binarizer.targets.len()).map(|t| dnn.codebook(t).clone()).collect();
            let channel = channel_model(&config.channel, cp.params.n)?;
            systems.push(Box::new(MlSystem::new(
                "ml-learned",
                codebooks,
                config.led.clone(),
                config.csi,
                channel.as_ref(),
                &mut mean_rng,
            )?));
        }
        systems.insert(0, Box::new(dnn));
    } else if a.ml {
        bail!("--ml needs --checkpoint");
    }
    if !a.codebook.is_empty() {
        let codebooks = a.codebook.iter().map(|p| Codebook::load(p)).collect::<ookdim::Result<Vec<_>>>()?;
        let channel = channel_model(&config.channel, codebooks[0].n)?;
        systems.push(Box::new(MlSystem::new(
            "baseline",
            codebooks,
            config.led.clone(),
            config.csi,
            channel.as_ref(),
            &mut mean_rng,
        )?));
    }
    let refs: Vec<&dyn System> = systems.iter().map(|s| s.as_ref()).collect();
    let report = measure_all(&refs, &config)?;
    for audit in &report.audits {
        if (audit.average_power - audit.d).abs() > tolerance || audit.duplicates > 0 {
            log::warn!("{} d={} fails the feasibility audit", audit.system, audit.d);
            feasible = false;
        }
    }
    report.save_csv(&out.join("eval.csv"))?;
    manifest.add(out, "eval-csv", "eval.csv")?;
    std::fs::write(out.join("eval_report.json"), serde_json::to_string_pretty(&report)?)?;
    manifest.add(out, "eval-report", "eval_report.json")?;
    let summary = report.summary();
    std::fs::write(out.join("eval_summary.txt"), &summary)?;
    manifest.add(out, "eval-summary", "eval_summary.txt")?;
    print!("{summary}");
    manifest.feasible = feasible;
    manifest.finish(out, start.elapsed().as_secs_f64())?;
    Ok(feasible)
}

fn cmd_baseline(g: &GlobalArgs, a: &BaselineArgs) -> Result<bool> {
    let mut config = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SearchConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let (Some(n), Some(m), Some(d)) = (a.n, a.m, a.d) else {
                bail!("baseline needs --config or all of --n, --m and --d");
            };
            SearchConfig::new(n, m, d, "strict")
        }
    };
    if let Some(n) = a.n {
        config.n = n;
    }
    if let Some(m) = a.m {
        config.m = m;
    }
    if let Some(d) = a.d {
        config.d = d;
    }
    if let Some(kind) = &a.kind {
        config.kind = kind.clone();
    }
    if a.target.is_some() {
        config.target_min_distance = a.target;
    }
    if let Some(it) = a.iterations {
        config.max_iterations = it;
    }
    if let Some(r) = a.restarts {
        config.restarts = r;
    }
    if let Some(led) = &a.led {
        config.led = parse_led(led)?;
    }
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    let out = &g.out_dir;
    create_out_dir(out)?;
    let start = Instant::now();
    let mut manifest = RunManifest::new("baseline", config.seed, g.threads, serde_json::to_value(&config)?);
    let result = search_codebook(&config)?;

    let name = format!("codebook_d_{}.txt", format_target(config.d));
    result.codebook.save(&out.join(&name))?;
    manifest.add(out, "codebook", &name)?;
    let mut w = csv::Writer::from_path(out.join("search_trace.csv"))?;
    for row in &result.trace {
        w.serialize(row)?;
    }
    w.flush()?;
    drop(w);
    manifest.add(out, "search-trace", "search_trace.csv")?;
    let mut w = csv::Writer::from_path(out.join("search_restarts.csv"))?;
    for row in &result.restarts {
        w.serialize(row)?;
    }
    w.flush()?;
    drop(w);
    manifest.add(out, "search-restarts", "search_restarts.csv")?;

    let audit = result.codebook.audit();
    println!(
        "{} search N={} M={} d={}: min distance {}, average weight {:.4}, feasible {}",
        config.kind, config.n, config.m, config.d, result.min_distance, audit.average_weight, result.feasible
    );
    manifest.feasible = result.feasible;
    manifest.finish(out, start.elapsed().as_secs_f64())?;
    Ok(result.feasible)
}

fn cmd_audit(_: &GlobalArgs, a: &AuditArgs) -> Result<bool> {
    let (label, cb) = match (&a.fixture, &a.path) {
        (Some(id), _) => (format!("fixture {id}"), load_fixture(id)?),
        (None, Some(path)) => (path.display().to_string(), Codebook::load(path)?),
        (None, None) => bail!("audit needs a codebook path or --fixture"),
    };
    let led = parse_led(&a.led)?;
    let audit = cb.audit();
    let power = cb.average_power(&led);
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{label}")?;
    writeln!(stdout, "N {}  M {}  dimming target {}  provenance {}", cb.n, cb.m(), cb.dimming, cb.provenance.as_str())?;
    writeln!(stdout, "average weight {:.4}", audit.average_weight)?;
    if !led.is_linear() {
        writeln!(stdout, "average optical power {power:.5}")?;
    }
    writeln!(stdout, "min distance {}", audit.min_hamming_distance)?;
    writeln!(stdout, "duplicates {}", audit.duplicate_count)?;
    let weights: Vec<String> = audit.weights.iter().map(usize::to_string).collect();
    writeln!(stdout, "weights {}", weights.join(" "))?;
    let spectrum: Vec<String> = audit.distance_spectrum.iter().map(|(d, c)| format!("{d}:{c}")).collect();
    writeln!(stdout, "distance spectrum {}", spectrum.join(" "))?;
    let feasible = (power - cb.dimming).abs() <= a.tolerance && audit.duplicate_count == 0;
    writeln!(stdout, "feasible {feasible}")?;
    Ok(feasible)
}

fn read_rows(path: &Path, system: Option<&str>) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = EvalReport::from_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    let name = match system {
        Some(s) => s.to_string(),
        None => rows.first().map(|r| r.system.clone()).context("empty evaluation file")?,
    };
    let rows: Vec<_> = rows.into_iter().filter(|r| r.system == name).collect();
    if rows.is_empty() {
        bail!("{} has no rows for system `{name}`", path.display());
    }
    Ok(EvalReport {
        seed: 0,
        trials_per_point: rows[0].trials as usize,
        csi: String::new(),
        channel: String::new(),
        rows,
        audits: Vec::new(),
    })
}

fn cmd_compare(g: &GlobalArgs, a: &CompareArgs) -> Result<bool> {
    let ra = read_rows(&a.a, a.system_a.as_deref())?;
    let rb = read_rows(&a.b, a.system_b.as_deref())?;
    let comparison = compare(&ra, &rb, a.target_ser)?;
    let out = &g.out_dir;
    create_out_dir(out)?;
    let path = out.join("comparison.json");
    std::fs::write(&path, serde_json::to_string_pretty(&comparison)?)
        .with_context(|| format!("writing {}", path.display()))?;
    print!("{}", comparison.summary());
    Ok(true)
}
