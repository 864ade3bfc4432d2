//! Scenario files, run settings, result records and the on-disk store.
//!
//! A scenario file is TOML with a top-level `format` version and the
//! sections `[model]`, `[[variables]]`, `[[constraints]]`, `[objective]`
//! and `[run]`:
//!
//! ```toml
//! format = 1
//! name = "chsh"
//!
//! [model]
//! parties = [{ name = "A", dim = 2 }, { name = "B", dim = "inf" }]
//! field = "complex"            # or "real"
//! state = "random_pure"        # maximally_entangled | tracial
//! symmetries = ["A0:B0 B0:A0 A1:B1 B1:A1"]
//!
//! [[variables]]
//! names = ["A0", "A1"]
//! kind = "dichotomic"          # projector | unitary | state-prep
//! party = "A"
//!
//! [[constraints]]
//! group = "M"
//! members = ["E1", "E2", "E3"]
//! povm = true
//!
//! [objective]
//! terms = [["A0 B0", 1.0], ["U", 0.5, 0.0]]
//!
//! [run]
//! level = 2
//! ```
//!
//! Objective terms are `[word, re]` or `[word, re, im]`; words are
//! space-separated letter names and `1` is the identity.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::par::Parallelism;
use crate::relax::{ClassOutcome, IndexSpec, SweepConfig};
use crate::scenario::{Dim, Field, Scenario, ScenarioBuilder, StateModel, VariableKind};
use crate::solver::{SolveReport, SolveStatus, SolverConfig};
use crate::verify::SeesawConfig;

pub const SCENARIO_FORMAT: u32 = 1;
pub const RECORD_SCHEMA: u32 = 1;
pub const STORE_ENV: &str = "DIMBOUND_STORE";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    format: Option<Spanned<u32>>,
    name: String,
    model: RawModel,
    #[serde(default)]
    variables: Vec<RawVariables>,
    #[serde(default)]
    constraints: Vec<RawGroup>,
    objective: RawObjective,
    #[serde(default)]
    run: RunSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    parties: Vec<Spanned<RawParty>>,
    #[serde(default = "default_field")]
    field: Field,
    #[serde(default = "default_state")]
    state: StateModel,
    #[serde(default)]
    sector_projectors: bool,
    #[serde(default)]
    symmetries: Vec<Spanned<String>>,
}

fn default_field() -> Field {
    Field::Complex
}

fn default_state() -> StateModel {
    StateModel::RandomPure
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawParty {
    name: String,
    dim: RawDim,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum RawDim {
    Finite(usize),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariables {
    names: Vec<Spanned<String>>,
    kind: VariableKind,
    party: Spanned<String>,
    rank: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    group: String,
    members: Vec<Spanned<String>>,
    #[serde(default)]
    povm: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    terms: Vec<Spanned<TermSpec>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum TermSpec {
    Real(String, f64),
    Complex(String, f64, f64),
}

/// Numerical knobs stored in the `[run]` section; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Index degree for finite parties (or the hierarchy level when every
    /// party is unconstrained).
    pub level: usize,
    /// Use reduced, deduplicated words for the index.
    pub canonical: bool,
    /// Words appended to the level index.
    pub extra_words: Vec<String>,
    /// Explicit index; overrides `level` when non-empty.
    pub words: Vec<String>,
    /// Symbolic index degree for unconstrained parties in hybrid runs.
    pub unconstrained_level: usize,
    pub eps: f64,
    pub confirmations: usize,
    pub seed: u64,
    /// Seeds compared by the basis-stability suite.
    pub stability_seeds: Vec<u64>,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// 0 uses every core.
    pub jobs: usize,
    pub classes: Vec<String>,
    pub dedup: bool,
    pub max_samples: usize,
    pub restarts: usize,
    pub iters: usize,
    /// See-saw dimension; defaults to the first finite party dimension.
    pub seesaw_dim: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        let seesaw = SeesawConfig::default();
        RunSettings {
            level: 2,
            canonical: false,
            extra_words: Vec::new(),
            words: Vec::new(),
            unconstrained_level: sweep.unconstrained_level,
            eps: sweep.basis.eps,
            confirmations: sweep.basis.confirmations,
            seed: sweep.seed,
            stability_seeds: vec![1, 2],
            gap_tol: sweep.solver.gap_tol,
            feas_tol: sweep.solver.feas_tol,
            max_iter: sweep.solver.max_iter,
            jobs: 0,
            classes: Vec::new(),
            dedup: false,
            max_samples: sweep.max_samples,
            restarts: seesaw.restarts,
            iters: seesaw.iters,
            seesaw_dim: None,
        }
    }
}

impl RunSettings {
    pub fn index_spec(&self) -> IndexSpec {
        if !self.words.is_empty() {
            IndexSpec::Words(self.words.clone())
        } else if !self.extra_words.is_empty() {
            IndexSpec::Extended { level: self.level, canonical: self.canonical, extra: self.extra_words.clone() }
        } else if self.canonical {
            IndexSpec::Canonical(self.level)
        } else {
            IndexSpec::Level(self.level)
        }
    }

    pub fn parallelism(&self) -> Parallelism {
        Parallelism::from_jobs(self.jobs)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            gap_tol: self.gap_tol,
            feas_tol: self.feas_tol,
            max_iter: self.max_iter,
            parallelism: self.parallelism(),
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            index: self.index_spec(),
            unconstrained_level: self.unconstrained_level,
            basis: BasisConfig { eps: self.eps, confirmations: self.confirmations, ..BasisConfig::default() },
            solver: self.solver_config(),
            seed: self.seed,
            parallelism: self.parallelism(),
            classes: (!self.classes.is_empty()).then(|| self.classes.clone()),
            dedup: self.dedup,
            max_samples: self.max_samples,
            cache_dir: None,
        }
    }

    pub fn seesaw_config(&self) -> SeesawConfig {
        SeesawConfig {
            restarts: self.restarts,
            iters: self.iters,
            seed: self.seed,
            parallelism: self.parallelism(),
            ..SeesawConfig::default()
        }
    }
}

/// A parsed scenario file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub run: RunSettings,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn at<T>(src: &str, s: &Spanned<T>, msg: String) -> Error {
    Error::Parse { line: line_of(src, s.span().start), msg }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src)
    }

    pub fn parse(src: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(src).map_err(|e| Error::Parse {
            line: e.span().map(|s| line_of(src, s.start)).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        if let Some(f) = &raw.format {
            if *f.get_ref() != SCENARIO_FORMAT {
                return Err(at(src, f, format!("unsupported format {} (expected {SCENARIO_FORMAT})", f.get_ref())));
            }
        }

        let mut b = ScenarioBuilder::new(&raw.name)
            .field(raw.model.field)
            .state(raw.model.state)
            .sector_projectors(raw.model.sector_projectors);
        let mut party_names: Vec<String> = Vec::new();
        for p in &raw.model.parties {
            let party = p.get_ref();
            if party_names.contains(&party.name) {
                return Err(at(src, p, format!("duplicate party `{}`", party.name)));
            }
            let dim = match &party.dim {
                RawDim::Finite(0) => return Err(at(src, p, "party dimension must be positive".into())),
                RawDim::Finite(d) => Dim::Finite(*d),
                RawDim::Text(t) if t == "inf" => Dim::Unconstrained,
                RawDim::Text(t) => return Err(at(src, p, format!("dimension `{t}` is neither an integer nor \"inf\""))),
            };
            party_names.push(party.name.clone());
            b = b.party(&party.name, dim);
        }

        let mut var_names: Vec<String> = Vec::new();
        for v in &raw.variables {
            if !party_names.contains(v.party.get_ref()) {
                return Err(at(src, &v.party, format!("unknown party `{}`", v.party.get_ref())));
            }
            if v.rank.is_some() && v.kind != VariableKind::StatePrep {
                return Err(at(src, &v.party, "`rank` applies to state-prep variables only".into()));
            }
            for n in &v.names {
                let name = n.get_ref();
                if name.is_empty() || name.contains(char::is_whitespace) || name == "1" {
                    return Err(at(src, n, format!("invalid variable name `{name}`")));
                }
                if var_names.contains(name) {
                    return Err(at(src, n, format!("duplicate variable `{name}`")));
                }
                var_names.push(name.clone());
                b = match v.kind {
                    VariableKind::StatePrep => b.state_prep(name, v.party.get_ref(), v.rank.unwrap_or(1)),
                    kind => b.variable(name, kind, v.party.get_ref()),
                };
            }
        }

        for g in &raw.constraints {
            for m in &g.members {
                if !var_names.contains(m.get_ref()) {
                    return Err(at(src, m, format!("group `{}` names unknown variable `{}`", g.group, m.get_ref())));
                }
            }
            let members: Vec<&str> = g.members.iter().map(|m| m.get_ref().as_str()).collect();
            b = b.group(&g.group, &members, g.povm);
        }

        for s in &raw.model.symmetries {
            let mut pairs = Vec::new();
            for tok in s.get_ref().split_whitespace() {
                let Some((from, to)) = tok.split_once(':') else {
                    return Err(at(src, s, format!("symmetry entry `{tok}` is not of the form FROM:TO")));
                };
                pairs.push((from, to));
            }
            b = b.symmetry(&pairs);
        }

        let probe = b.clone().build().map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        for t in &raw.objective.terms {
            let (word, re, im) = match t.get_ref() {
                TermSpec::Real(w, re) => (w, *re, 0.0),
                TermSpec::Complex(w, re, im) => (w, *re, *im),
            };
            if probe.alphabet().parse_word(word).is_none() {
                return Err(at(src, t, format!("objective word `{word}` uses unknown letters")));
            }
            b = b.complex_term(word, re, im);
        }
        let scenario = b.build().map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        Ok(ScenarioFile { scenario, run: raw.run })
    }

    /// Serialise back to the file format; parsing the output reproduces
    /// the same scenario and settings.
    pub fn to_toml(&self) -> Result<String> {
        to_toml(&self.scenario, &self.run)
    }
}

#[derive(Serialize)]
struct OutFile<'a> {
    format: u32,
    name: &'a str,
    model: OutModel,
    variables: Vec<OutVariables>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    constraints: Vec<OutGroup>,
    objective: OutObjective,
    run: &'a RunSettings,
}

#[derive(Serialize)]
struct OutModel {
    parties: Vec<RawParty>,
    field: Field,
    state: StateModel,
    sector_projectors: bool,
    symmetries: Vec<String>,
}

#[derive(Serialize)]
struct OutVariables {
    names: Vec<String>,
    kind: VariableKind,
    party: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
}

#[derive(Serialize)]
struct OutGroup {
    group: String,
    members: Vec<String>,
    povm: bool,
}

#[derive(Serialize)]
struct OutObjective {
    terms: Vec<TermSpec>,
}

pub fn to_toml(scenario: &Scenario, run: &RunSettings) -> Result<String> {
    let parties = scenario
        .parties
        .iter()
        .map(|p| RawParty {
            name: p.name.clone(),
            dim: match p.dim {
                Dim::Finite(d) => RawDim::Finite(d),
                Dim::Unconstrained => RawDim::Text("inf".into()),
            },
        })
        .collect();
    let variables = scenario
        .variables
        .iter()
        .map(|v| OutVariables {
            names: vec![v.name.clone()],
            kind: v.kind,
            party: scenario.parties[v.party].name.clone(),
            rank: if v.kind == VariableKind::StatePrep { v.rank } else { None },
        })
        .collect();
    let constraints = scenario
        .groups
        .iter()
        .map(|g| OutGroup {
            group: g.name.clone(),
            members: g.members.iter().map(|&m| scenario.variables[m].name.clone()).collect(),
            povm: g.povm,
        })
        .collect();
    let symmetries = scenario
        .symmetries
        .iter()
        .map(|s| s.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(" "))
        .collect();
    let terms = scenario
        .objective
        .terms
        .iter()
        .map(|(w, v)| {
            let word = scenario.alphabet().format_word(w);
            if v.im == 0.0 {
                TermSpec::Real(word, v.re)
            } else {
                TermSpec::Complex(word, v.re, v.im)
            }
        })
        .collect();
    let out = OutFile {
        format: SCENARIO_FORMAT,
        name: &scenario.name,
        model: OutModel {
            parties,
            field: scenario.field,
            state: scenario.state,
            sector_projectors: scenario.sector_projectors,
            symmetries,
        },
        variables,
        constraints,
        objective: OutObjective { terms },
        run,
    };
    toml::to_string(&out).map_err(|e| Error::InvalidScenario(e.to_string()))
}

/// Summary of a single solver run (unconstrained scenarios).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub status: SolveStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub psd_residual: f64,
    pub equality_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub seconds: f64,
}

impl From<&SolveReport> for Certificate {
    fn from(r: &SolveReport) -> Self {
        Certificate {
            status: r.status,
            primal_value: r.primal_value,
            dual_value: r.dual_value,
            gap: r.gap,
            psd_residual: r.psd_residual,
            equality_residual: r.equality_residual,
            dual_residual: r.dual_residual,
            iterations: r.iterations,
            seconds: r.wall_time,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeesawSummary {
    pub value: f64,
    pub class: String,
    pub dim: usize,
    pub restart_values: Vec<f64>,
    /// Objective after each sweep of the best restart.
    pub trajectory: Vec<f64>,
}

/// Everything needed to rerun and compare a computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: u32,
    pub command: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    /// The scenario file as run, with overrides applied.
    pub scenario_toml: String,
    pub config: RunSettings,
    pub mode: String,
    pub per_class: Vec<ClassOutcome>,
    pub best_value: Option<f64>,
    pub best_class: Option<String>,
    pub partial: bool,
    pub certificate: Option<Certificate>,
    pub seesaw: Option<SeesawSummary>,
    pub version: String,
    pub started_unix: u64,
    pub seconds: f64,
}

impl ResultRecord {
    pub fn new(command: &str, scenario: &Scenario, run: &RunSettings) -> Result<Self> {
        Ok(ResultRecord {
            schema: RECORD_SCHEMA,
            command: command.to_string(),
            scenario_name: scenario.name.clone(),
            scenario_hash: scenario.hash(),
            scenario_toml: to_toml(scenario, run)?,
            config: run.clone(),
            mode: String::new(),
            per_class: Vec::new(),
            best_value: None,
            best_class: None,
            partial: false,
            certificate: None,
            seesaw: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            seconds: 0.0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rec: ResultRecord = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if rec.schema != RECORD_SCHEMA {
            return Err(Error::InvalidScenario(format!("record schema {} is not {RECORD_SCHEMA}", rec.schema)));
        }
        Ok(rec)
    }
}

/// Root directory holding one directory per run plus the shared basis cache.
#[derive(Clone, Debug)]
pub struct ResultStore {
    pub root: PathBuf,
}

impl ResultStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultStore { root: root.into() }
    }

    /// `$DIMBOUND_STORE`, or `dimbound-store` in the working directory.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(STORE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("dimbound-store")))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    /// Write the record into a fresh run directory and return its path.
    pub fn save_run(&self, record: &ResultRecord) -> Result<PathBuf> {
        let base = format!(
            "{}-{}-{}-{}",
            record.started_unix,
            sanitize(&record.scenario_name),
            &record.scenario_hash[..8.min(record.scenario_hash.len())],
            record.command
        );
        let runs = self.root.join("runs");
        std::fs::create_dir_all(&runs)?;
        let mut dir = runs.join(&base);
        let mut n = 1;
        while dir.exists() {
            dir = runs.join(format!("{base}-{n}"));
            n += 1;
        }
        std::fs::create_dir_all(&dir)?;
        record.save(&dir.join("record.json"))?;
        std::fs::write(dir.join("scenario.scn"), &record.scenario_toml)?;
        Ok(dir)
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}
