//! Per-class relaxations: assembly of the conic program over a sampled
//! span, the class sweep, and the unconstrained and hybrid variants.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{dedup_rank_classes, Alphabet, Polynomial, RankClass, Word};
use crate::basis::{accumulate_basis, support_isometry, BasisConfig, BasisResult};
use crate::error::{Error, Result};
use crate::linalg::{real_part, realify_doubled, svec_len_real, svec_real, CMat, RMat, C64};
use crate::moment::{
    build_moment_matrix, hybrid_factor_bases, locate_word, symbolic_basis_from_index, SymbolicMomentBasis,
};
use crate::par::{map_range, map_slice, Parallelism};
use crate::sampler::{class_ranks, derive_seed, sample_representation};
use crate::scenario::{Field, Scenario};
use crate::solver::{solve_lmi, LmiProblem, SolveReport, SolveStatus, SolverConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub class: Option<String>,
    pub level: usize,
    pub scenario_hash: String,
}

/// One conic program: `maximize Σ obj_j c_j` over `Σ c_j B_j ⪰ 0` with
/// `Σ norm_j c_j = value`. The `B_j` are real symmetric (complex Hermitian
/// spans arrive in doubled real form).
#[derive(Clone, Debug)]
pub struct SdpInstance {
    /// Side length of every `B_j`.
    pub size: usize,
    /// Column `j` is `svec(B_j)`.
    pub basis: DMatrix<f64>,
    pub objective: Vec<f64>,
    pub normalization: (Vec<f64>, f64),
    pub meta: InstanceMeta,
}

impl SdpInstance {
    pub fn n_vars(&self) -> usize {
        self.basis.ncols()
    }

    pub fn element(&self, j: usize) -> RMat {
        crate::linalg::smat_real(self.basis.column(j).as_slice(), self.size)
    }

    pub fn to_lmi(&self) -> LmiProblem {
        LmiProblem {
            blocks: vec![self.size],
            constant: DVector::zeros(self.basis.nrows()),
            coeffs: self.basis.clone(),
            objective: DVector::from_vec(self.objective.clone()),
            equalities: vec![(DVector::from_vec(self.normalization.0.clone()), self.normalization.1)],
        }
    }
}

pub fn solve(instance: &SdpInstance, cfg: &SolverConfig) -> SolveReport {
    solve_lmi(&instance.to_lmi(), cfg)
}

fn pack(mats: &[RMat]) -> (usize, DMatrix<f64>) {
    let size = mats.first().map(|m| m.nrows()).unwrap_or(0);
    let mut out = DMatrix::zeros(svec_len_real(size), mats.len());
    for (j, m) in mats.iter().enumerate() {
        out.column_mut(j).copy_from_slice(&svec_real(m));
    }
    (size, out)
}

fn identity_position(index: &[Word]) -> Result<usize> {
    index
        .iter()
        .position(|w| w.is_identity())
        .ok_or_else(|| Error::MissingWord("1".into()))
}

/// Program over the span of `basis`, with `V M V† ⪰ 0`, `M_{ε,ε} = norm`
/// and objective `Σ p_w M_{ε,w}` read from the unprojected elements.
pub fn assemble_sdp(
    basis: &BasisResult,
    index: &[Word],
    alphabet: &Alphabet,
    objective: &Polynomial,
    norm: f64,
    meta: InstanceMeta,
) -> Result<SdpInstance> {
    let locs = objective
        .terms
        .iter()
        .map(|(w, &v)| {
            locate_word(alphabet, index, w)
                .map(|l| (l, v))
                .ok_or_else(|| Error::MissingWord(alphabet.format_word(w)))
        })
        .collect::<Result<Vec<_>>>()?;
    let e = identity_position(index)?;
    let gammas = basis.gammas();
    let mut obj = Vec::with_capacity(gammas.len());
    let mut nrm = Vec::with_capacity(gammas.len());
    for g in &gammas {
        obj.push(locs.iter().map(|&((i, j), v)| (v * g[(i, j)]).re).sum());
        nrm.push(g[(e, e)].re);
    }
    let projected: Vec<RMat> = if basis.real {
        let v = real_part(&basis.v);
        let vt = v.transpose();
        basis
            .coords
            .iter()
            .map(|c| {
                let p = &v * crate::linalg::smat_real(c, basis.size) * &vt;
                (&p + p.transpose()) * 0.5
            })
            .collect()
    } else {
        let v = &basis.v;
        let vt = v.adjoint();
        gammas
            .iter()
            .map(|g| {
                let p = v * g * &vt;
                realify_doubled(&((&p + p.adjoint()) * C64::new(0.5, 0.0)))
            })
            .collect()
    };
    let (size, packed) = pack(&projected);
    Ok(SdpInstance { size, basis: packed, objective: obj, normalization: (nrm, norm), meta })
}

/// NPA-style program over the symbolic basis of canonical words.
pub fn assemble_unconstrained_sdp(
    alphabet: &Alphabet,
    k: usize,
    objective: &Polynomial,
    norm: f64,
) -> Result<SdpInstance> {
    let index = alphabet.enumerate_words(k, true);
    let sym = symbolic_basis_from_index(alphabet, index);
    assemble_symbolic(alphabet, &sym, objective, norm, k)
}

fn assemble_symbolic(
    alphabet: &Alphabet,
    sym: &SymbolicMomentBasis,
    objective: &Polynomial,
    norm: f64,
    k: usize,
) -> Result<SdpInstance> {
    let real = objective.has_real_coefficients();
    let targets = objective
        .terms
        .iter()
        .map(|(w, &v)| {
            sym.word_id(&alphabet.reduce(w))
                .map(|u| (u, v))
                .ok_or_else(|| Error::MissingWord(alphabet.format_word(w)))
        })
        .collect::<Result<Vec<_>>>()?;
    let eps = sym.word_id(&Word::identity()).ok_or_else(|| Error::MissingWord("1".into()))?;
    let mut mats = Vec::new();
    let mut obj = Vec::new();
    let mut nrm = Vec::new();
    for (u, ua) in sym.adjoint_pairs() {
        // y_u = a + i b, y_{u†} = a − i b
        let n_u = sym.matrix(u);
        let n_ua = sym.matrix(ua);
        let coef = |target: usize, re: f64, im: f64| -> C64 {
            if target == u {
                C64::new(re, im)
            } else if target == ua {
                C64::new(re, -im)
            } else {
                C64::new(0.0, 0.0)
            }
        };
        let value = |re: f64, im: f64| -> f64 {
            targets.iter().map(|&(t, p)| (p * coef(t, re, im)).re).sum::<f64>()
        };
        let sym_el = &n_u + &n_ua;
        let scale = if u == ua { 0.5 } else { 1.0 };
        if real {
            mats.push(&sym_el * scale);
        } else {
            let h = crate::linalg::to_complex(&(&sym_el * scale));
            mats.push(realify_doubled(&h));
        }
        obj.push(value(1.0, 0.0));
        nrm.push(if u == eps { 1.0 } else { 0.0 });
        if u != ua && !real {
            let anti = &n_u - &n_ua;
            let h = crate::linalg::to_complex(&anti) * C64::new(0.0, 1.0);
            mats.push(realify_doubled(&h));
            obj.push(value(0.0, 1.0));
            nrm.push(0.0);
        }
    }
    let (size, packed) = pack(&mats);
    Ok(SdpInstance {
        size,
        basis: packed,
        objective: obj,
        normalization: (nrm, norm),
        meta: InstanceMeta { class: None, level: k, scenario_hash: String::new() },
    })
}

/// Map a joint word onto the letters of a restricted scenario by name.
fn translate(from: &Alphabet, to: &Alphabet, w: &Word) -> Option<Word> {
    let ids = w
        .letters()
        .iter()
        .map(|&l| to.id_of(&from.letter(l).name))
        .collect::<Option<Vec<_>>>()?;
    Some(Word(ids))
}

/// Real program over `Re(M_a)⊗(N_u + N_u†)` and `−Im(M_b)⊗(N_u − N_u†)`.
/// `finite` is the finite parties' span (complex samples), `finite_index`
/// its word index over `finite_alphabet`; `symbolic` covers the
/// unconstrained parties with words of the joint `alphabet`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_hybrid_sdp(
    finite: &BasisResult,
    finite_index: &[Word],
    finite_alphabet: &Alphabet,
    symbolic: &SymbolicMomentBasis,
    alphabet: &Alphabet,
    finite_parties: &BTreeSet<usize>,
    objective: &Polynomial,
    norm: f64,
    meta: InstanceMeta,
) -> Result<SdpInstance> {
    if !objective.has_real_coefficients() {
        return Err(Error::InvalidScenario("hybrid relaxation needs real objective coefficients".into()));
    }
    let all: BTreeSet<usize> = alphabet.parties();
    let other: BTreeSet<usize> = all.difference(finite_parties).cloned().collect();
    let nb = symbolic.size();
    let mut targets = Vec::new();
    for (w, &v) in &objective.terms {
        let wa = alphabet.project(w, finite_parties);
        let wb = alphabet.project(w, &other);
        let missing = || Error::MissingWord(alphabet.format_word(w));
        let wa_local = translate(alphabet, finite_alphabet, &wa).ok_or_else(missing)?;
        let (ia, ja) = locate_word(finite_alphabet, finite_index, &wa_local).ok_or_else(missing)?;
        let (ib, jb) = locate_word(alphabet, &symbolic.index, &wb).ok_or_else(missing)?;
        targets.push(((ia, ja), (ib, jb), v.re));
    }
    let ea = identity_position(finite_index)?;
    let eb = identity_position(&symbolic.index)?;
    let gammas = finite.gammas();
    let (re, im) = hybrid_factor_bases(&gammas);
    let t_real = crate::linalg::to_complex(&real_part(&finite.t));
    let va = real_part(&support_isometry(&t_real, 1e-9)?);
    let vat = va.transpose();

    let mut mats = Vec::new();
    let mut obj = Vec::new();
    let mut nrm = Vec::new();
    for (u, ua) in symbolic.adjoint_pairs() {
        let nu = symbolic.matrix(u);
        let nua = symbolic.matrix(ua);
        let s = &nu + &nua;
        for a in &re {
            obj.push(targets.iter().map(|&((i, j), (k, l), p)| p * a[(i, j)] * s[(k, l)]).sum());
            nrm.push(a[(ea, ea)] * s[(eb, eb)]);
            mats.push((&va * a * &vat).kronecker(&s));
        }
        if u != ua {
            let d = &nu - &nua;
            for b in &im {
                obj.push(targets.iter().map(|&((i, j), (k, l), p)| -p * b[(i, j)] * d[(k, l)]).sum());
                nrm.push(-b[(ea, ea)] * d[(eb, eb)]);
                mats.push(-(&va * b * &vat).kronecker(&d));
            }
        }
    }
    let _ = nb;
    let (size, packed) = pack(&mats);
    Ok(SdpInstance { size, basis: packed, objective: obj, normalization: (nrm, norm), meta })
}

/// Moment-matrix row/column words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSpec {
    /// Every word of degree at most `k` (raw, not reduced).
    Level(usize),
    /// Canonical (reduced, deduplicated) words of degree at most `k`.
    Canonical(usize),
    /// Explicit word list (space-separated letter names, `1` for ε).
    Words(Vec<String>),
    /// Level `level` (canonical words when `canonical`) followed by extra
    /// words not already present.
    Extended {
        level: usize,
        #[serde(default)]
        canonical: bool,
        extra: Vec<String>,
    },
}

fn parse_words(alphabet: &Alphabet, list: &[String], out: &mut Vec<Word>) -> Result<()> {
    for s in list {
        let w = alphabet
            .parse_word(s)
            .ok_or_else(|| Error::InvalidScenario(format!("index word `{s}` uses unknown letters")))?;
        if !out.contains(&w) {
            out.push(w);
        }
    }
    Ok(())
}

impl IndexSpec {
    pub fn words(&self, alphabet: &Alphabet) -> Result<Vec<Word>> {
        let mut out = match self {
            IndexSpec::Level(k) => return Ok(alphabet.enumerate_words(*k, false)),
            IndexSpec::Canonical(k) => return Ok(alphabet.enumerate_words(*k, true)),
            IndexSpec::Words(list) => {
                let mut out = Vec::new();
                parse_words(alphabet, list, &mut out)?;
                out
            }
            IndexSpec::Extended { level, canonical, extra } => {
                let mut out = alphabet.enumerate_words(*level, *canonical);
                parse_words(alphabet, extra, &mut out)?;
                out
            }
        };
        if !out.iter().any(|w| w.is_identity()) {
            out.insert(0, Word::identity());
        }
        Ok(out)
    }

    pub fn level(&self) -> usize {
        let longest = |list: &[String]| list.iter().map(|w| w.split_whitespace().count()).max().unwrap_or(0);
        match self {
            IndexSpec::Level(k) | IndexSpec::Canonical(k) => *k,
            IndexSpec::Words(list) => longest(list),
            IndexSpec::Extended { level, extra, .. } => (*level).max(longest(extra)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub index: IndexSpec,
    /// Degree of the symbolic index for unconstrained parties (hybrid runs).
    pub unconstrained_level: usize,
    pub basis: BasisConfig,
    pub solver: SolverConfig,
    pub seed: u64,
    pub parallelism: Parallelism,
    /// Restrict the sweep to these class labels.
    pub classes: Option<Vec<String>>,
    pub dedup: bool,
    pub max_samples: usize,
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            index: IndexSpec::Level(2),
            unconstrained_level: 1,
            basis: BasisConfig::default(),
            solver: SolverConfig::default(),
            seed: 1,
            parallelism: Parallelism::default(),
            classes: None,
            dedup: false,
            max_samples: 200_000,
            cache_dir: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub class: String,
    pub multiplicity: usize,
    /// Span dimension.
    pub n: usize,
    /// Rows of the support isometry.
    pub support: usize,
    pub samples: usize,
    pub status: Option<SolveStatus>,
    pub skipped: Option<String>,
    pub value: Option<f64>,
    pub dual_value: Option<f64>,
    pub gap: Option<f64>,
    pub psd_residual: Option<f64>,
    pub equality_residual: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassSweepResult {
    pub per_class: Vec<ClassOutcome>,
    pub best_value: Option<f64>,
    pub best_class: Option<String>,
    /// Some class ended without an optimal certificate.
    pub partial: bool,
    pub seconds: f64,
}

impl ClassSweepResult {
    fn merge(per_class: Vec<ClassOutcome>, seconds: f64) -> Self {
        let mut best: Option<(f64, String)> = None;
        let mut partial = false;
        for o in &per_class {
            match o.status {
                Some(SolveStatus::Optimal) => {
                    let v = o.value.unwrap();
                    if best.as_ref().is_none_or(|(b, _)| v > *b) {
                        best = Some((v, o.class.clone()));
                    }
                }
                Some(SolveStatus::Infeasible) | None => {}
                Some(_) => partial = true,
            }
        }
        ClassSweepResult {
            per_class,
            best_value: best.as_ref().map(|b| b.0),
            best_class: best.map(|b| b.1),
            partial,
            seconds,
        }
    }
}

/// Stream of moment matrices for one class; samples are produced in
/// parallel chunks but always in seed order.
pub struct SampleStream<'a> {
    scenario: &'a Scenario,
    class: RankClass,
    index: &'a [Word],
    master: u64,
    class_id: u64,
    realify: bool,
    mode: Parallelism,
    next: usize,
    limit: usize,
    buffer: std::collections::VecDeque<CMat>,
}

impl<'a> SampleStream<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario: &'a Scenario,
        class: RankClass,
        index: &'a [Word],
        master: u64,
        class_id: u64,
        realify: bool,
        mode: Parallelism,
        limit: usize,
    ) -> Self {
        SampleStream {
            scenario,
            class,
            index,
            master,
            class_id,
            realify,
            mode,
            next: 0,
            limit,
            buffer: Default::default(),
        }
    }
}

impl Iterator for SampleStream<'_> {
    type Item = CMat;
    fn next(&mut self) -> Option<CMat> {
        if self.buffer.is_empty() {
            if self.next >= self.limit {
                return None;
            }
            let chunk = 16.min(self.limit - self.next);
            let start = self.next;
            let made = map_range(self.mode, chunk, |i| {
                let seed = derive_seed(self.master, self.class_id, (start + i) as u64);
                let rep = sample_representation(self.scenario, &self.class, seed).ok()?;
                let g = build_moment_matrix(&rep, self.index).ok()?.entries;
                Some(if self.realify { crate::linalg::to_complex(&real_part(&g)) } else { g })
            });
            self.next += chunk;
            for m in made {
                self.buffer.push_back(m?);
            }
        }
        self.buffer.pop_front()
    }
}

/// Whether sampled moment matrices may be replaced by their real parts.
pub fn use_real_span(scenario: &Scenario) -> bool {
    scenario.field == Field::Real || scenario.objective.has_real_coefficients()
}

/// Stable numeric id of a class label (seeds and cache keys).
fn class_id(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn selected_classes(scenario: &Scenario, classes: Vec<RankClass>, cfg: &SweepConfig) -> Vec<(RankClass, usize)> {
    let with_mult: Vec<(RankClass, usize)> = if cfg.dedup {
        dedup_rank_classes(&classes, &scenario.rank_symmetries())
    } else {
        classes.into_iter().map(|c| (c, 1)).collect()
    };
    match &cfg.classes {
        Some(filter) => with_mult.into_iter().filter(|(c, _)| filter.contains(&c.label())).collect(),
        None => with_mult,
    }
}

/// Span basis for one class, from the cache when present.
pub fn class_basis(
    scenario: &Scenario,
    class: &RankClass,
    index: &[Word],
    cfg: &SweepConfig,
    real: bool,
    cache_tag: &str,
) -> Result<BasisResult> {
    let label = class.label();
    let stem = cfg.cache_dir.as_ref().map(|d| {
        d.join(format!(
            "basis-{}-{}-{}-{}-{:?}-{:?}",
            scenario.hash(),
            label,
            cache_tag,
            if real { "re" } else { "c" },
            scenario.field,
            scenario.state
        ))
    });
    if let Some(stem) = &stem {
        if let Some(b) = BasisResult::load(stem)? {
            return Ok(b);
        }
    }
    let stream = SampleStream::new(scenario, class.clone(), index, cfg.seed, class_id(&label), real, cfg.parallelism, cfg.max_samples);
    let bcfg = BasisConfig { real, ..cfg.basis };
    let b = accumulate_basis(stream, &bcfg)?;
    if let Some(stem) = &stem {
        b.save(stem)?;
    }
    Ok(b)
}

fn index_tag(spec: &IndexSpec) -> String {
    match spec {
        IndexSpec::Level(k) => format!("k{k}"),
        IndexSpec::Canonical(k) => format!("c{k}"),
        IndexSpec::Words(w) => format!("w{}", short_hash(w)),
        IndexSpec::Extended { level, canonical, extra } => {
            format!("{}{level}x{}", if *canonical { "c" } else { "k" }, short_hash(extra))
        }
    }
}

fn short_hash(words: &[String]) -> String {
    use sha2::{Digest, Sha256};
    let h = Sha256::digest(words.join("|").as_bytes());
    hex::encode(&h[..4])
}

fn skipped(label: String, mult: usize, why: String, t: Instant) -> ClassOutcome {
    ClassOutcome {
        class: label,
        multiplicity: mult,
        n: 0,
        support: 0,
        samples: 0,
        status: None,
        skipped: Some(why),
        value: None,
        dual_value: None,
        gap: None,
        psd_residual: None,
        equality_residual: None,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn solved(label: String, mult: usize, b: &BasisResult, r: &SolveReport, t: Instant) -> ClassOutcome {
    ClassOutcome {
        class: label,
        multiplicity: mult,
        n: b.n(),
        support: b.v.nrows(),
        samples: b.samples_used,
        status: Some(r.status),
        skipped: None,
        value: Some(r.primal_value),
        dual_value: Some(r.dual_value),
        gap: Some(r.gap),
        psd_residual: Some(r.psd_residual),
        equality_residual: Some(r.equality_residual),
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// The program of one class of an all-finite scenario.
pub fn class_instance(scenario: &Scenario, class: &RankClass, cfg: &SweepConfig) -> Result<SdpInstance> {
    class_ranks(scenario, class)?;
    let index = cfg.index.words(scenario.alphabet())?;
    let b = class_basis(scenario, class, &index, cfg, use_real_span(scenario), &index_tag(&cfg.index))?;
    let meta = InstanceMeta { class: Some(class.label()), level: cfg.index.level(), scenario_hash: scenario.hash() };
    assemble_sdp(&b, &index, scenario.alphabet(), &scenario.objective, scenario.normalization(), meta)
}

/// Sweep every rank class of an all-finite scenario and keep the largest value.
pub fn sweep_classes(scenario: &Scenario, cfg: &SweepConfig) -> Result<ClassSweepResult> {
    sweep_classes_with(scenario, cfg, |_| {})
}

pub fn sweep_classes_with<F>(scenario: &Scenario, cfg: &SweepConfig, on_class: F) -> Result<ClassSweepResult>
where
    F: Fn(&ClassOutcome) + Sync + Send,
{
    if !scenario.all_finite() {
        return Err(Error::InvalidScenario("class sweeps need finite parties; use the hybrid path".into()));
    }
    if !scenario.objective.is_hermitian(scenario.alphabet(), 1e-12) {
        return Err(Error::NonHermitianObjective);
    }
    let start = Instant::now();
    let index = cfg.index.words(scenario.alphabet())?;
    let real = use_real_span(scenario);
    let tag = index_tag(&cfg.index);
    let classes = selected_classes(scenario, scenario.rank_classes(), cfg);
    let outcomes = map_slice(cfg.parallelism, &classes, |(class, mult)| {
        let t = Instant::now();
        let label = class.label();
        let out = match class_ranks(scenario, class) {
            Err(e) => skipped(label, *mult, e.to_string(), t),
            Ok(_) => match class_basis(scenario, class, &index, cfg, real, &tag) {
                Err(e) => skipped(label, *mult, e.to_string(), t),
                Ok(b) => {
                    let meta = InstanceMeta {
                        class: Some(class.label()),
                        level: cfg.index.level(),
                        scenario_hash: scenario.hash(),
                    };
                    match assemble_sdp(&b, &index, scenario.alphabet(), &scenario.objective, scenario.normalization(), meta) {
                        Err(e) => skipped(label, *mult, e.to_string(), t),
                        Ok(inst) => {
                            let r = solve(&inst, &cfg.solver);
                            solved(label, *mult, &b, &r, t)
                        }
                    }
                }
            },
        };
        log::info!(
            "class {} N={} value={:?} status={:?} {:.2}s",
            out.class,
            out.n,
            out.value,
            out.status,
            out.seconds
        );
        on_class(&out);
        out
    });
    if let Some(o) = outcomes.iter().find(|o| o.skipped.as_deref().is_some_and(|s| s.starts_with("objective word"))) {
        return Err(Error::MissingWord(o.skipped.clone().unwrap()));
    }
    Ok(ClassSweepResult::merge(outcomes, start.elapsed().as_secs_f64()))
}

/// Single program for a scenario whose parties are all unconstrained.
pub fn unconstrained_bound(scenario: &Scenario, k: usize, cfg: &SolverConfig) -> Result<(SdpInstance, SolveReport)> {
    let inst = assemble_unconstrained_sdp(scenario.alphabet(), k, &scenario.objective, scenario.normalization())?;
    let r = solve(&inst, cfg);
    Ok((inst, r))
}

/// Class sweep over the finite parties with the others left unconstrained.
pub fn sweep_hybrid(scenario: &Scenario, cfg: &SweepConfig) -> Result<ClassSweepResult> {
    sweep_hybrid_with(scenario, cfg, |_| {})
}

pub fn sweep_hybrid_with<F>(scenario: &Scenario, cfg: &SweepConfig, on_class: F) -> Result<ClassSweepResult>
where
    F: Fn(&ClassOutcome) + Sync + Send,
{
    let start = Instant::now();
    let finite_parties = scenario.finite_parties();
    let finite_set: BTreeSet<usize> = finite_parties.iter().cloned().collect();
    let restricted = scenario.restrict(&finite_parties)?;
    let finite_index = cfg.index.words(restricted.alphabet())?;
    let alphabet = scenario.alphabet();
    let other: BTreeSet<usize> = scenario.unconstrained_parties().into_iter().collect();
    let sym_index: Vec<Word> = alphabet
        .enumerate_words(cfg.unconstrained_level, true)
        .into_iter()
        .filter(|w| w.letters().iter().all(|&l| other.contains(&alphabet.letter(l).party)))
        .collect();
    let symbolic = symbolic_basis_from_index(alphabet, sym_index);
    let tag = index_tag(&cfg.index);
    let classes = selected_classes(&restricted, restricted.rank_classes(), cfg);
    let outcomes = map_slice(cfg.parallelism, &classes, |(class, mult)| {
        let t = Instant::now();
        let label = class.label();
        let out = match class_basis(&restricted, class, &finite_index, cfg, false, &tag) {
            Err(e) => skipped(label, *mult, e.to_string(), t),
            Ok(b) => {
                let meta = InstanceMeta { class: Some(label.clone()), level: cfg.index.level(), scenario_hash: scenario.hash() };
                match assemble_hybrid_sdp(
                    &b,
                    &finite_index,
                    restricted.alphabet(),
                    &symbolic,
                    alphabet,
                    &finite_set,
                    &scenario.objective,
                    1.0,
                    meta,
                ) {
                    Err(e) => skipped(label, *mult, e.to_string(), t),
                    Ok(inst) => {
                        let r = solve(&inst, &cfg.solver);
                        solved(label, *mult, &b, &r, t)
                    }
                }
            }
        };
        on_class(&out);
        out
    });
    Ok(ClassSweepResult::merge(outcomes, start.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Rule;
    use crate::scenario::{Dim, ScenarioBuilder, VariableKind};

    #[test]
    fn identity_basis_single_point() {
        let basis = BasisResult {
            size: 1,
            real: true,
            coords: vec![vec![1.0]],
            t: CMat::identity(1, 1),
            v: CMat::identity(1, 1),
            samples_used: 1,
            eps: 1e-7,
        };
        let ab = Alphabet::hermitian(&["X"], Rule::Dichotomic);
        let index = vec![Word::identity()];
        let inst = assemble_sdp(&basis, &index, &ab, &Polynomial::constant(1.0), 1.0, InstanceMeta::default()).unwrap();
        let r = solve(&inst, &SolverConfig::default());
        assert!((r.primal_value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn missing_word_is_named() {
        let basis = BasisResult {
            size: 1,
            real: true,
            coords: vec![vec![1.0]],
            t: CMat::identity(1, 1),
            v: CMat::identity(1, 1),
            samples_used: 1,
            eps: 1e-7,
        };
        let ab = Alphabet::hermitian(&["X"], Rule::Dichotomic);
        let p = Polynomial::from_real_terms([(Word(vec![0]), 1.0)]);
        match assemble_sdp(&basis, &[Word::identity()], &ab, &p, 1.0, InstanceMeta::default()) {
            Err(Error::MissingWord(w)) => assert_eq!(w, "X"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_dichotomic_unconstrained() {
        let ab = Alphabet::hermitian(&["X"], Rule::Dichotomic);
        let p = Polynomial::from_real_terms([(Word(vec![0]), 1.0)]);
        let inst = assemble_unconstrained_sdp(&ab, 1, &p, 1.0).unwrap();
        let r = solve(&inst, &SolverConfig::default());
        assert!((r.primal_value - 1.0).abs() < 1e-7, "{r:?}");
    }

    #[test]
    fn chsh_unconstrained_level_one() {
        let sc = ScenarioBuilder::new("chsh")
            .party("A", Dim::Unconstrained)
            .party("B", Dim::Unconstrained)
            .variables(&["A0", "A1"], VariableKind::Dichotomic, "A")
            .variables(&["B0", "B1"], VariableKind::Dichotomic, "B")
            .term("A0 B0", 1.0)
            .term("A0 B1", 1.0)
            .term("A1 B0", 1.0)
            .term("A1 B1", -1.0)
            .build()
            .unwrap();
        let (_, r) = unconstrained_bound(&sc, 1, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal_value - 2.0 * 2f64.sqrt()).abs() < 1e-6, "{r:?}");
    }
}
