//! Command-line front end: `bound`, `seesaw`, `verify` and `export`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::algebra::RankClass;
use crate::error::{Error, Result};
use crate::io::{Certificate, ResultRecord, ResultStore, ScenarioFile, SeesawSummary, STORE_ENV};
use crate::par::with_jobs;
use crate::relax::{class_instance, sweep_classes_with, sweep_hybrid_with, unconstrained_bound, ClassOutcome};
use crate::scenario::Scenario;
use crate::solver::write_sdpa;
use crate::verify::{basis_stability, check_d2_identities, check_standard_identity, seesaw_with};

#[derive(Parser, Debug)]
#[command(name = "dimbound", version, about = "Dimension-constrained bounds on quantum correlations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Upper bound by relaxation (class sweep, unconstrained or hybrid).
    Bound {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Lower bound by see-saw over explicit representations.
    Seesaw {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a property suite: mpi, sandwich or basis-stability.
    Verify {
        suite: String,
        /// Scenario files (sandwich and basis-stability).
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write the program of one rank class (or the unconstrained program) in SDPA sparse format.
    Export {
        scenario: PathBuf,
        #[arg(long)]
        class: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Knobs that override the scenario file's `[run]` section.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Dimension of every finite party.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub confirmations: Option<usize>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Worker threads (0 = every core, 1 = sequential).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Only these rank classes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Extra copy of the result record (export: output file).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Result-store root.
    #[arg(long, env = STORE_ENV)]
    pub store: Option<PathBuf>,
    /// Do not read or write cached span bases.
    #[arg(long)]
    pub no_cache: bool,
}

impl Overrides {
    pub fn apply(&self, file: &mut ScenarioFile) -> Result<()> {
        if let Some(d) = self.dim {
            if d == 0 {
                return Err(Error::InvalidScenario("--dim must be positive".into()));
            }
            file.scenario = file.scenario.with_dimension(d)?;
            file.run.seesaw_dim = Some(d);
        }
        let r = &mut file.run;
        if let Some(k) = self.level {
            r.level = k;
        }
        if let Some(s) = self.seed {
            r.seed = s;
        }
        if let Some(e) = self.eps {
            r.eps = e;
        }
        if let Some(c) = self.confirmations {
            r.confirmations = c;
        }
        if let Some(g) = self.gap_tol {
            r.gap_tol = g;
        }
        if let Some(j) = self.jobs {
            r.jobs = j;
        }
        if let Some(c) = &self.classes {
            r.classes = c.clone();
        }
        if let Some(n) = self.restarts {
            r.restarts = n;
        }
        Ok(())
    }

    fn store(&self) -> ResultStore {
        match &self.store {
            Some(p) => ResultStore::new(p),
            None => ResultStore::from_env(),
        }
    }
}

/// Parse a class label such as `"0121"` (one digit per rank).
pub fn parse_class(label: &str) -> Result<RankClass> {
    if label == "-" {
        return Ok(RankClass::new(Vec::new()));
    }
    label
        .chars()
        .map(|c| c.to_digit(10).map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .map(RankClass::new)
        .ok_or_else(|| Error::InvalidClass(label.to_string()))
}

fn load(path: &Path, overrides: &Overrides) -> Result<ScenarioFile> {
    let mut file = ScenarioFile::load(path).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        e => e,
    })?;
    overrides.apply(&mut file)?;
    Ok(file)
}

fn progress(o: &ClassOutcome) {
    match (&o.skipped, o.value) {
        (Some(why), _) => eprintln!("  class {:<12} skipped: {why}", o.class),
        (None, Some(v)) => eprintln!(
            "  class {:<12} N={:<5} value {v:.9} {:?} {:.1}s",
            o.class,
            o.n,
            o.status.unwrap(),
            o.seconds
        ),
        _ => {}
    }
}

/// Mode the scenario runs in: `classes`, `unconstrained` or `hybrid`.
pub fn mode_of(scenario: &Scenario) -> &'static str {
    if scenario.all_finite() {
        "classes"
    } else if scenario.finite_parties().is_empty() {
        "unconstrained"
    } else {
        "hybrid"
    }
}

/// Relaxation upper bound for a loaded scenario file.
pub fn run_bound(file: &ScenarioFile, cache: Option<PathBuf>) -> Result<ResultRecord> {
    let t = Instant::now();
    let sc = &file.scenario;
    let mut rec = ResultRecord::new("bound", sc, &file.run)?;
    rec.mode = mode_of(sc).to_string();
    let mut cfg = file.run.sweep_config();
    cfg.cache_dir = cache;
    with_jobs(file.run.jobs, || -> Result<()> {
        match rec.mode.as_str() {
            "unconstrained" => {
                let (_, r) = unconstrained_bound(sc, file.run.level, &cfg.solver)?;
                rec.partial = !matches!(r.status, crate::solver::SolveStatus::Optimal);
                rec.best_value = Some(r.primal_value);
                rec.certificate = Some(Certificate::from(&r));
            }
            mode => {
                let res = if mode == "classes" {
                    sweep_classes_with(sc, &cfg, progress)?
                } else {
                    sweep_hybrid_with(sc, &cfg, progress)?
                };
                rec.per_class = res.per_class;
                rec.best_value = res.best_value;
                rec.best_class = res.best_class;
                rec.partial = res.partial;
            }
        }
        Ok(())
    })?;
    rec.seconds = t.elapsed().as_secs_f64();
    Ok(rec)
}

/// See-saw lower bound for a loaded scenario file.
pub fn run_seesaw(file: &ScenarioFile) -> Result<ResultRecord> {
    let t = Instant::now();
    let sc = &file.scenario;
    let d = match file.run.seesaw_dim {
        Some(d) => d,
        None => sc
            .parties
            .iter()
            .find_map(|p| p.dim.finite())
            .ok_or_else(|| Error::InvalidScenario("no finite party; set run.seesaw_dim or --dim".into()))?,
    };
    let finite = if sc.all_finite() { sc.clone() } else { sc.all_parties_finite(d)? };
    let mut rec = ResultRecord::new("seesaw", sc, &file.run)?;
    rec.mode = "seesaw".into();
    let cfg = file.run.seesaw_config();
    let out = with_jobs(file.run.jobs, || seesaw_with(&finite, d, &cfg))?;
    rec.best_value = Some(out.value);
    rec.best_class = Some(out.class.clone());
    rec.seesaw = Some(SeesawSummary {
        value: out.value,
        class: out.class,
        dim: d,
        restart_values: out.restart_values,
        trajectory: out.trajectory,
    });
    rec.seconds = t.elapsed().as_secs_f64();
    Ok(rec)
}

/// Outcome of a property suite: one line per check.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<(String, bool)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.1)
    }
}

pub fn run_suite(
    suite: &str,
    files: &[ScenarioFile],
    trials: usize,
    dim: usize,
    seed: u64,
    cache: Option<PathBuf>,
) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    match suite {
        "mpi" => {
            for d in 1..=dim {
                let r = check_standard_identity(d, trials, seed)?;
                checks.push((
                    format!("standard identity of degree {}, D={d}: max residual {:.2e}", 2 * d, r.max_residual),
                    r.max_residual <= 1e-12,
                ));
                checks.push((
                    format!("degree {} at D={}: residual {:.2e}", 2 * d, d + 1, r.control_residual),
                    r.control_residual > 1e-3,
                ));
            }
            if dim >= 2 {
                let r = check_d2_identities(trials, seed);
                checks.push((format!("[[A1,A2]^2, A3] = 0 at D=2: {:.2e}", r.commutator_square), r.commutator_square <= 1e-12));
                checks.push((format!("[X1, {{X2,X3}}] = 0 for traceless dichotomic X at D=2: {:.2e}", r.dichotomic), r.dichotomic <= 1e-12));
                checks.push((
                    format!("{{X1, [X2,X3]}} = 0 for real traceless dichotomic X: {:.2e}", r.dichotomic_real),
                    r.dichotomic_real <= 1e-12,
                ));
                checks.push((
                    format!("{{X1, [X2,X3]}} over complex X (control): {:.2e}", r.dichotomic_real_control),
                    r.dichotomic_real_control > 1e-3,
                ));
            }
        }
        "sandwich" => {
            if files.is_empty() {
                return Err(Error::InvalidScenario("sandwich needs at least one scenario file".into()));
            }
            for f in files {
                let upper = run_bound(f, cache.clone())?;
                let lower = run_seesaw(f)?;
                let (u, l) = (upper.best_value.unwrap_or(f64::NAN), lower.best_value.unwrap_or(f64::NAN));
                checks.push((format!("{}: see-saw {l:.9} <= relaxation {u:.9}", f.scenario.name), l <= u + 1e-6));
            }
        }
        "basis-stability" => {
            if files.is_empty() {
                return Err(Error::InvalidScenario("basis-stability needs at least one scenario file".into()));
            }
            for f in files {
                if !f.scenario.all_finite() {
                    continue;
                }
                let cfg = f.run.sweep_config();
                let classes: Vec<RankClass> = match &cfg.classes {
                    Some(list) => list.iter().map(|l| parse_class(l)).collect::<Result<_>>()?,
                    None => f.scenario.rank_classes(),
                };
                let rows = with_jobs(f.run.jobs, || basis_stability(&f.scenario, &cfg, &f.run.stability_seeds, &classes))?;
                for row in rows {
                    checks.push((format!("{} class {}: N = {:?}", f.scenario.name, row.class, row.n), row.stable()));
                }
            }
        }
        other => return Err(Error::UnknownSuite(other.to_string())),
    }
    Ok(SuiteReport { suite: suite.to_string(), checks })
}

fn finish_record(rec: &ResultRecord, overrides: &Overrides) -> Result<()> {
    let dir = overrides.store().save_run(rec)?;
    eprintln!("record: {}", dir.join("record.json").display());
    if let Some(out) = &overrides.out {
        rec.save(out)?;
    }
    Ok(())
}

fn cache_for(overrides: &Overrides) -> Option<PathBuf> {
    (!overrides.no_cache).then(|| overrides.store().cache_dir())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bound { scenario, overrides } => {
            let file = load(&scenario, &overrides)?;
            eprintln!("{}: {} mode", file.scenario.name, mode_of(&file.scenario));
            let rec = run_bound(&file, cache_for(&overrides))?;
            finish_record(&rec, &overrides)?;
            match rec.best_value {
                Some(v) => println!("upper bound {v:.9}"),
                None => println!("upper bound unavailable"),
            }
            if let Some(c) = &rec.best_class {
                println!("best class {c}");
            }
            let gap = match (&rec.certificate, &rec.best_class) {
                (Some(cert), _) => Some(cert.gap),
                (None, Some(c)) => rec.per_class.iter().find(|o| &o.class == c).and_then(|o| o.gap),
                _ => None,
            };
            if let Some(g) = gap {
                println!("gap {g:.2e}");
            }
            if rec.partial {
                println!("partial: some class ended without an optimal certificate");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Seesaw { scenario, overrides } => {
            let file = load(&scenario, &overrides)?;
            let rec = run_seesaw(&file)?;
            finish_record(&rec, &overrides)?;
            let s = rec.seesaw.as_ref().unwrap();
            println!("lower bound {:.9}", s.value);
            println!("class {} at D={} after {} restarts", s.class, s.dim, s.restart_values.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, scenarios, trials, overrides } => {
            let files = scenarios.iter().map(|p| load(p, &overrides)).collect::<Result<Vec<_>>>()?;
            let report = run_suite(
                &suite,
                &files,
                trials,
                overrides.dim.unwrap_or(2),
                overrides.seed.unwrap_or(1),
                cache_for(&overrides),
            )?;
            for (line, ok) in &report.checks {
                println!("{} {line}", if *ok { "PASS" } else { "FAIL" });
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Export { scenario, class, overrides } => {
            let file = load(&scenario, &overrides)?;
            let problem = match mode_of(&file.scenario) {
                "classes" => {
                    let label = class.ok_or_else(|| Error::InvalidClass("--class is required".into()))?;
                    let mut cfg = file.run.sweep_config();
                    cfg.cache_dir = cache_for(&overrides);
                    class_instance(&file.scenario, &parse_class(&label)?, &cfg)?.to_lmi()
                }
                "unconstrained" => {
                    let sc = &file.scenario;
                    crate::relax::assemble_unconstrained_sdp(sc.alphabet(), file.run.level, &sc.objective, sc.normalization())?
                        .to_lmi()
                }
                _ => return Err(Error::InvalidScenario("export supports class or unconstrained scenarios".into())),
            };
            match &overrides.out {
                Some(p) => write_sdpa(&problem, std::io::BufWriter::new(std::fs::File::create(p)?))?,
                None => write_sdpa(&problem, std::io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Entry point of the `dimbound` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn class_labels_parse() {
        assert_eq!(parse_class("0121").unwrap().ranks, vec![0, 1, 2, 1]);
        assert!(parse_class("1x").is_err());
    }

    #[test]
    fn overrides_reach_the_run_section() {
        let mut f = ScenarioFile {
            scenario: crate::scenario::ScenarioBuilder::new("t")
                .party("A", crate::scenario::Dim::Finite(2))
                .variable("X", crate::scenario::VariableKind::Dichotomic, "A")
                .term("X", 1.0)
                .build()
                .unwrap(),
            run: crate::io::RunSettings::default(),
        };
        let o = Overrides { dim: Some(3), level: Some(4), jobs: Some(1), classes: Some(vec!["1".into()]), ..Default::default() };
        o.apply(&mut f).unwrap();
        assert_eq!(f.scenario.parties[0].dim, crate::scenario::Dim::Finite(3));
        assert_eq!((f.run.level, f.run.jobs, f.run.seesaw_dim), (4, 1, Some(3)));
        assert_eq!(f.run.classes, vec!["1".to_string()]);
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(run_suite("nope", &[], 1, 2, 1, None), Err(Error::UnknownSuite(_))));
    }
}
