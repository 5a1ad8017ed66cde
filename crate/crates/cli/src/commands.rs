use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stacked_rmst::metrics::ReplicationRecord;
use stacked_rmst::models::{Family, ModelSpec};
use stacked_rmst::rmst::{bootstrap_effect, event_time_grid, marginal_survival, EffectConfig, Estimator, EventGrid};
use stacked_rmst::simgen::{generate_replication, Scenario};
use stacked_rmst::simulation::{
    compute_truths, isse_association, run_simulation, summarize_records, SimulationConfig, TruthValue, REFERENCE,
    STUDY_ESTIMATORS,
};
use stacked_rmst::stacking::{StackConfig, StackDiagnostics};
use stacked_rmst::SurvivalSample;

use crate::args::{FitArgs, OracleArgs, ReportArgs, SimulateArgs, StackArgs};
use crate::config::{pick, pick_list, ConfigFile};
use crate::error::CliError;
use crate::output::{create_dir, resolve_out, sig6, summary_table, write_csv, write_file, write_json};

const STACK_KEYS: [&str; 7] = ["B", "folds", "grid-size", "candidates", "seed", "workers", "out"];

/// Arms with fewer records or events than this get a small-sample warning.
const SMALL_ARM_RECORDS: usize = 20;
const SMALL_ARM_EVENTS: usize = 10;

struct StackSettings {
    bootstrap: usize,
    stack: StackConfig,
    families: Vec<Family>,
    seed: u64,
    workers: usize,
    out: PathBuf,
}

fn stack_settings(a: &StackArgs, file: &ConfigFile) -> Result<StackSettings, CliError> {
    let defaults = StackConfig::default();
    let names = pick_list(
        a.candidates.clone(),
        file,
        "candidates",
        Family::ALL.iter().map(|f| f.name().to_string()).collect(),
    )?;
    let mut families = Vec::new();
    for name in &names {
        let f: Family = name.parse()?;
        if families.contains(&f) {
            return Err(CliError::Usage(format!("candidate `{f}` listed twice")));
        }
        families.push(f);
    }
    let stack = StackConfig {
        specs: families.iter().map(|&f| ModelSpec::new(f)).collect(),
        folds: pick(a.folds, file, "folds", defaults.folds)?,
        grid_size: pick(a.grid_size, file, "grid-size", defaults.grid_size)?,
    };
    stack.validate()?;
    let bootstrap = pick(a.bootstrap, file, "B", 300)?;
    if bootstrap < 2 {
        return Err(CliError::Usage(format!("need at least 2 bootstrap replicates, got {bootstrap}")));
    }
    Ok(StackSettings {
        bootstrap,
        stack,
        families,
        seed: pick(a.seed, file, "seed", 1)?,
        workers: pick(a.workers, file, "workers", 0)?,
        out: resolve_out(a.out.clone(), file.get("out")?),
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    program: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: C,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, seed: u64, config: C) -> Result<(), CliError> {
    let m = Manifest {
        program: "stacked-rmst",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
    };
    write_json(&dir.join("manifest.json"), &m)
}

fn family_names(families: &[Family]) -> Vec<&'static str> {
    families.iter().map(|f| f.name()).collect()
}

// Worker count and output path are left out so that runs differing only in
// those produce identical files.
#[derive(Serialize)]
struct SimulateEcho<'a> {
    scenarios: &'a [u8],
    n: usize,
    nsim: usize,
    first_rep: u64,
    taus: &'a [f64],
    bootstrap: usize,
    folds: usize,
    grid_size: usize,
    candidates: Vec<&'static str>,
    estimators: Vec<&'static str>,
    oracle_draws: usize,
    isse_grid: usize,
    truths_from_file: bool,
    emit_data: bool,
}

pub fn simulate(a: &SimulateArgs, file: &ConfigFile, verbose: u8, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut keys = vec![
        "scenario", "n", "nsim", "first-rep", "tau", "oracle-draws", "isse-grid", "truths", "emit-data",
    ];
    keys.extend(STACK_KEYS);
    file.check_keys(&keys)?;
    let s = stack_settings(&a.stack, file)?;
    let defaults = SimulationConfig::default();
    let estimators: Vec<Estimator> = STUDY_ESTIMATORS
        .into_iter()
        .filter(|e| match e {
            Estimator::Stacked => true,
            Estimator::Candidate(f) => s.families.contains(f),
        })
        .collect();
    if !estimators.iter().any(|e| e.name() == REFERENCE) {
        return Err(CliError::Usage(format!("the candidates must include `{REFERENCE}`, the reference estimator")));
    }
    let config = SimulationConfig {
        scenarios: pick_list(a.scenario.clone(), file, "scenario", defaults.scenarios.clone())?,
        n: pick(a.n, file, "n", defaults.n)?,
        n_sim: pick(a.nsim, file, "nsim", defaults.n_sim)?,
        first_replication: pick(a.first_rep, file, "first-rep", 0)?,
        taus: pick_list(a.tau.clone(), file, "tau", defaults.taus.clone())?,
        bootstrap: s.bootstrap,
        stack: s.stack.clone(),
        estimators,
        seed: s.seed,
        workers: s.workers,
        isse_grid: pick(a.isse_grid, file, "isse-grid", defaults.isse_grid)?,
        oracle_draws: pick(a.oracle_draws, file, "oracle-draws", defaults.oracle_draws)?,
    };
    config.validate()?;
    let emit_data = a.emit_data || file.get("emit-data")?.unwrap_or(false);
    let truths_path: Option<PathBuf> = a.truths.clone().or(file.get("truths")?);
    let truths = truths_path.as_deref().map(|p| read_truths(p, &config)).transpose()?;

    create_dir(&s.out)?;
    let progress = |done: usize, total: usize| {
        if verbose > 0 && (done.is_multiple_of(10) || done == total) {
            eprintln!("replication {done}/{total}");
        }
    };
    let result = pool(config.workers)?.install(|| run_simulation(&config, truths.clone(), &progress))?;
    let association = isse_association(&result.summary);
    let table = summary_table(&result.summary, Some(&association));

    write_csv(&s.out.join("records.csv"), &result.records)?;
    write_csv(&s.out.join("truths.csv"), &result.truths)?;
    write_csv(&s.out.join("summary.csv"), &result.summary)?;
    write_file(&s.out.join("table.txt"), table.as_bytes())?;
    if emit_data {
        let dir = s.out.join("data");
        create_dir(&dir)?;
        for &b in &config.scenarios {
            let scenario = Scenario::new(b)?;
            for r in 0..config.n_sim as u64 {
                let rep = config.first_replication + r;
                let path = dir.join(format!("scenario{b}_rep{rep:05}.csv"));
                let sample = generate_replication(&scenario, config.n, config.seed, rep)?;
                let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
                sample.write_csv(f)?;
            }
        }
    }
    write_manifest(
        &s.out,
        "simulate",
        config.seed,
        SimulateEcho {
            scenarios: &config.scenarios,
            n: config.n,
            nsim: config.n_sim,
            first_rep: config.first_replication,
            taus: &config.taus,
            bootstrap: config.bootstrap,
            folds: config.stack.folds,
            grid_size: config.stack.grid_size,
            candidates: family_names(&s.families),
            estimators: config.estimators.iter().map(|e| e.name()).collect(),
            oracle_draws: config.oracle_draws,
            isse_grid: config.isse_grid,
            truths_from_file: truths.is_some(),
            emit_data,
        },
    )?;
    stdout.write_all(table.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    Ok(())
}

fn read_truths(path: &Path, config: &SimulationConfig) -> Result<Vec<TruthValue>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let all: Vec<TruthValue> = csv::Reader::from_reader(f).deserialize().collect::<Result<_, _>>()?;
    for &b in &config.scenarios {
        for &tau in &config.taus {
            if !all.iter().any(|t| t.scenario == b && t.tau == tau) {
                return Err(CliError::Usage(format!(
                    "{} has no truth value for scenario {b}, tau {tau}",
                    path.display()
                )));
            }
        }
    }
    Ok(all)
}

/// Horizons `start, start + step, ...` up to `end` inclusive.
pub fn parse_sweep(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("sweep must be START:END:STEP with 0 < START <= END and STEP > 0, got `{s}`"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(start > 0.0 && end >= start && step > 0.0 && end.is_finite()) {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(CliError::Usage(format!("sweep `{s}` has too many horizons")));
    }
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

#[derive(Serialize)]
struct FitEstimate {
    estimator: String,
    tau: f64,
    mu0: f64,
    mu1: f64,
    gamma: f64,
    ci: Option<[f64; 2]>,
    #[serde(rename = "B")]
    bootstrap: usize,
    failed_replicates: usize,
    weights0: Vec<f64>,
    weights1: Vec<f64>,
}

#[derive(Serialize)]
struct FitReport {
    input: String,
    records: usize,
    records_by_arm: [usize; 2],
    events_by_arm: [usize; 2],
    seed: u64,
    candidates: Vec<&'static str>,
    redraws: usize,
    estimates: Vec<FitEstimate>,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<Vec<StackDiagnostics>>,
}

#[derive(Serialize)]
struct SweepRow {
    tau: f64,
    gamma: f64,
    ci_lower: f64,
    ci_upper: f64,
    gamma_over_tau: f64,
    mu0: f64,
    mu1: f64,
}

#[derive(Serialize)]
struct CurveRow {
    t: f64,
    #[serde(rename = "S0_bar")]
    s0: f64,
    #[serde(rename = "S1_bar")]
    s1: f64,
}

#[derive(Serialize)]
struct FitEcho<'a> {
    input: String,
    taus: &'a [f64],
    sweep: Option<String>,
    estimator: &'a str,
    event_grid: &'a str,
    bootstrap: usize,
    folds: usize,
    grid_size: usize,
    candidates: Vec<&'static str>,
}

fn read_sample(path: &Path) -> Result<SurvivalSample, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    SurvivalSample::read_csv(f).map_err(|source| CliError::Data {
        path: path.to_path_buf(),
        source,
    })
}

pub fn fit(
    a: &FitArgs,
    file: &ConfigFile,
    verbose: u8,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let mut keys = vec!["tau", "sweep", "estimator", "event-grid"];
    keys.extend(STACK_KEYS);
    file.check_keys(&keys)?;
    let s = stack_settings(&a.stack, file)?;
    let listed = pick_list(a.tau.clone(), file, "tau", Vec::new())?;
    let sweep_spec: Option<String> = a.sweep.clone().or(file.get("sweep")?);
    let sweep = sweep_spec.as_deref().map(parse_sweep).transpose()?;
    if listed.is_empty() && sweep.is_none() {
        return Err(CliError::Usage("give at least one horizon with --tau or --sweep".into()));
    }
    if let Some(t) = listed.iter().find(|t| !t.is_finite() || **t <= 0.0) {
        return Err(CliError::Usage(format!("tau must be positive, got {t}")));
    }
    let mut taus: Vec<f64> = listed.iter().chain(sweep.iter().flatten()).copied().collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let estimator = Estimator::parse(&pick(a.estimator.clone(), file, "estimator", "stacked".to_string())?)?;
    let grid_name = pick(a.event_grid.clone(), file, "event-grid", "pooled".to_string())?;
    let grid = match grid_name.as_str() {
        "pooled" => EventGrid::Pooled,
        "per-arm" => EventGrid::PerArm,
        g => return Err(CliError::Usage(format!("event grid must be pooled or per-arm, got `{g}`"))),
    };
    let config = EffectConfig {
        stack: s.stack.clone(),
        taus: taus.clone(),
        grid,
        estimators: vec![estimator],
    };
    config.validate()?;

    let sample = read_sample(&a.input)?;
    let mut warnings = Vec::new();
    let mut records_by_arm = [0; 2];
    let mut events_by_arm = [0; 2];
    for (&arm, &e) in sample.arm().iter().zip(sample.event()) {
        records_by_arm[arm as usize] += 1;
        events_by_arm[arm as usize] += e as usize;
    }
    for arm in 0..2 {
        let (n, d) = (records_by_arm[arm], events_by_arm[arm]);
        if n > 0 && (n < SMALL_ARM_RECORDS || d < SMALL_ARM_EVENTS) {
            warnings.push(format!(
                "small sample: arm {arm} has {n} record(s) and {d} event(s); stacking weights, \
                 cross-fitting and bootstrap intervals are unreliable at this size"
            ));
        }
    }

    let analysis = pool(s.workers)?.install(|| bootstrap_effect(&sample, &config, s.bootstrap, s.seed))?;
    let stacks = &analysis.point.stacks;
    for st in stacks {
        if !st.cross_fitted {
            warnings.push(format!("arm {}: too few records to cross-fit; equal candidate weights used", st.arm));
        }
        for (spec, &ex) in st.specs.iter().zip(&st.excluded) {
            if ex {
                warnings.push(format!("arm {}: candidate {} failed to fit and was excluded", st.arm, spec.family));
            }
        }
    }
    if analysis.boot.redraws > 0 {
        warnings.push(format!(
            "{} bootstrap resample(s) lacked events in an arm and were redrawn",
            analysis.boot.redraws
        ));
    }

    let mut estimates = Vec::new();
    let mut sweep_rows = Vec::new();
    for (j, &tau) in taus.iter().enumerate() {
        let table = &analysis.point.table;
        let (Some(mu0), Some(mu1), Some(gamma)) = (
            table.mu(estimator, 0, j),
            table.mu(estimator, 1, j),
            table.gamma(estimator, j),
        ) else {
            return Err(CliError::Usage(format!("estimator {estimator} produced no estimate")));
        };
        let est = analysis.estimate(estimator, j);
        let failed = est.as_ref().map_or(s.bootstrap, |e| e.failed);
        if est.is_none() {
            warnings.push(format!("tau {tau}: fewer than two bootstrap replicates succeeded; no interval"));
        } else if failed > 0 && j == 0 {
            warnings.push(format!("{failed} bootstrap replicate(s) failed and are left out of the intervals"));
        }
        let ci = est.as_ref().map(|e| [e.ci_lower, e.ci_upper]);
        if sweep.as_ref().is_some_and(|sw| sw.contains(&tau)) {
            let [lo, hi] = ci.unwrap_or([f64::NAN; 2]);
            sweep_rows.push(SweepRow {
                tau,
                gamma,
                ci_lower: lo,
                ci_upper: hi,
                gamma_over_tau: gamma / tau,
                mu0,
                mu1,
            });
        }
        if listed.is_empty() || listed.contains(&tau) {
            estimates.push(FitEstimate {
                estimator: estimator.name().to_string(),
                tau,
                mu0,
                mu1,
                gamma,
                ci,
                bootstrap: s.bootstrap,
                failed_replicates: failed,
                weights0: stacks[0].weights.clone(),
                weights1: stacks[1].weights.clone(),
            });
        }
    }

    let report = FitReport {
        input: a.input.display().to_string(),
        records: sample.len(),
        records_by_arm,
        events_by_arm,
        seed: s.seed,
        candidates: family_names(&s.families),
        redraws: analysis.boot.redraws,
        estimates,
        warnings: warnings.clone(),
        diagnostics: (verbose > 0).then(|| stacks.iter().map(|st| st.diagnostics()).collect()),
    };

    let times = event_time_grid(&sample, None);
    let x = sample.covariates();
    let curves: Vec<Vec<f64>> = (0..2u8)
        .map(|arm| {
            analysis
                .point
                .predictor(estimator, arm)
                .map(|p| marginal_survival(p, x, &times))
                .ok_or_else(|| CliError::Usage(format!("estimator {estimator} has no fit for arm {arm}")))
        })
        .collect::<Result<_, _>>()?;
    let curve: Vec<CurveRow> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| CurveRow {
            t,
            s0: curves[0][i],
            s1: curves[1][i],
        })
        .collect();

    create_dir(&s.out)?;
    write_json(&s.out.join("effect.json"), &report)?;
    write_csv(&s.out.join("curve.csv"), &curve)?;
    if sweep.is_some() {
        write_csv(&s.out.join("sweep.csv"), &sweep_rows)?;
    }
    write_manifest(
        &s.out,
        "fit",
        s.seed,
        FitEcho {
            input: a.input.display().to_string(),
            taus: &listed,
            sweep: sweep_spec,
            estimator: estimator.name(),
            event_grid: &grid_name,
            bootstrap: s.bootstrap,
            folds: s.stack.folds,
            grid_size: s.stack.grid_size,
            candidates: family_names(&s.families),
        },
    )?;

    let err = |e| CliError::io(Path::new("<stderr>"), e);
    if !warnings.is_empty() {
        let bar = "!".repeat(72);
        writeln!(stderr, "{bar}").map_err(err)?;
        for w in &warnings {
            writeln!(stderr, "WARNING: {w}").map_err(err)?;
        }
        writeln!(stderr, "{bar}").map_err(err)?;
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    Ok(())
}

pub fn oracle(a: &OracleArgs, file: &ConfigFile, stdout: &mut dyn Write) -> Result<(), CliError> {
    file.check_keys(&["scenario", "tau", "draws", "seed", "workers"])?;
    let defaults = SimulationConfig::default();
    let config = SimulationConfig {
        scenarios: pick_list(a.scenario.clone(), file, "scenario", defaults.scenarios.clone())?,
        taus: pick_list(a.tau.clone(), file, "tau", defaults.taus.clone())?,
        oracle_draws: pick(a.draws, file, "draws", defaults.oracle_draws)?,
        seed: pick(a.seed, file, "seed", defaults.seed)?,
        workers: pick(a.workers, file, "workers", 0)?,
        ..defaults
    };
    if config.oracle_draws < 2 {
        return Err(CliError::Usage("oracle needs at least 2 draws".into()));
    }
    let truths = pool(config.workers)?.install(|| compute_truths(&config))?;
    let mut text = format!("{:>8}  {:>8}  {:>10}  {:>10}\n", "scenario", "tau", "gamma", "se");
    for t in &truths {
        text += &format!("{:>8}  {:>8}  {:>10}  {:>10}\n", t.scenario, sig6(t.tau), sig6(t.gamma), sig6(t.se));
    }
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    Ok(())
}

fn record_header() -> Vec<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(ReplicationRecord::failed(1, 1.0, 0.0, REFERENCE, 0))
        .expect("serializing to memory");
    let bytes = w.into_inner().expect("flushing to memory");
    let text = String::from_utf8(bytes).expect("csv output is utf-8");
    text.lines().next().unwrap_or("").split(',').map(str::to_string).collect()
}

pub fn read_records(path: &Path) -> Result<Vec<ReplicationRecord>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != record_header() {
        return Err(CliError::Usage(format!(
            "{}: not a record file (columns {})",
            path.display(),
            header.join(",")
        )));
    }
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

pub fn report(a: &ReportArgs, file: &ConfigFile, stdout: &mut dyn Write) -> Result<(), CliError> {
    file.check_keys(&["out"])?;
    if a.files.is_empty() {
        return Err(CliError::Usage("no record files given".into()));
    }
    let mut records = Vec::new();
    for p in &a.files {
        records.extend(read_records(p)?);
    }
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert((r.scenario, r.tau.to_bits(), r.estimator.clone(), r.replication)) {
            return Err(CliError::Usage(format!(
                "replication {} of scenario {}, tau {}, estimator {} appears twice",
                r.replication, r.scenario, r.tau, r.estimator
            )));
        }
    }
    // Shards may arrive in any order; within each cell the summaries add up
    // records in replication order, as a single run does.
    records.sort_by_key(|r| r.replication);
    let summary = summarize_records(&records)?;
    let association = isse_association(&summary);
    let table = summary_table(&summary, Some(&association));
    let out = resolve_out(a.out.clone(), file.get("out")?);
    create_dir(&out)?;
    write_csv(&out.join("summary.csv"), &summary)?;
    write_file(&out.join("table.txt"), table.as_bytes())?;
    stdout
        .write_all(table.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    Ok(())
}
