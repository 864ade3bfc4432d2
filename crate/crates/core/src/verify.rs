//! Independent evidence for the relaxations: see-saw lower bounds,
//! exhaustive classical enumeration, and matrix polynomial identities.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{dedup_rank_classes, RankClass, Word};
use crate::error::{Error, Result};
use crate::linalg::{
    c, eigh, eigh_real, expm_skew, gaussian_matrix, hermitian_part, identity, kron, random_projector, real_part,
    to_complex, CMat, C64,
};
use crate::par::{map_range, Parallelism};
use crate::relax::{class_basis, use_real_span, SweepConfig};
use crate::sampler::{class_ranks, derive_seed, embed_system_vector, sample_representation, Representation};
use crate::scenario::{Field, LetterRole, Scenario, StateModel, VariableKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeesawConfig {
    pub restarts: usize,
    /// Maximum sweeps per restart.
    pub iters: usize,
    pub seed: u64,
    /// Relative improvement below which a sweep counts as stalled.
    pub tol: f64,
    /// Keep every rank fixed to this class; free ranks when `None`.
    pub class: Option<RankClass>,
    /// Hold the state fixed even when the model allows updating it.
    pub freeze_state: bool,
    pub parallelism: Parallelism,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        Self {
            restarts: 50,
            iters: 1000,
            seed: 1,
            tol: 1e-13,
            class: None,
            freeze_state: false,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeesawOutcome {
    pub value: f64,
    /// Rank class of the best representation.
    pub class: String,
    pub representation: Representation,
    /// Objective after each sweep of the best restart.
    pub trajectory: Vec<f64>,
    pub restart_values: Vec<f64>,
}

impl SeesawOutcome {
    pub fn restarts(&self) -> usize {
        self.restart_values.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Embed {
    /// `1_a ⊗ X`.
    Plain(usize),
    /// `|0⟩⟨0|_a ⊗ X`.
    Prep(usize),
    /// The whole local space.
    Full,
}

impl Embed {
    fn lift(self, m: &CMat) -> CMat {
        match self {
            Embed::Plain(1) | Embed::Prep(1) | Embed::Full => m.clone(),
            Embed::Plain(a) => kron(&identity(a), m),
            Embed::Prep(a) => {
                let mut z = CMat::zeros(a, a);
                z[(0, 0)] = c(1.0, 0.0);
                kron(&z, m)
            }
        }
    }

    /// Environment on the local space reduced to the block's own space.
    fn reduce(self, m: &CMat) -> CMat {
        match self {
            Embed::Full | Embed::Plain(1) | Embed::Prep(1) => m.clone(),
            Embed::Plain(a) => {
                let d = m.nrows() / a;
                let mut out = CMat::zeros(d, d);
                for k in 0..a {
                    out += m.view((k * d, k * d), (d, d));
                }
                out
            }
            Embed::Prep(a) => {
                let d = m.nrows() / a;
                m.view((0, 0), (d, d)).into_owned()
            }
        }
    }

    fn own(self, local: &CMat) -> CMat {
        match self {
            Embed::Full => local.clone(),
            Embed::Plain(a) | Embed::Prep(a) => {
                let d = local.nrows() / a;
                local.view((0, 0), (d, d)).into_owned()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BlockKind {
    Dichotomic,
    Projector,
    Prep,
    Group,
    Unitary,
}

#[derive(Clone, Debug)]
struct Block {
    kind: BlockKind,
    letters: Vec<usize>,
    party: usize,
    embed: Embed,
    /// Fixed rank per letter; `None` lets the update choose.
    ranks: Vec<Option<usize>>,
    linear: bool,
    step: f64,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    terms: Vec<(Vec<usize>, C64)>,
    real: bool,
    update_state: bool,
    /// Isometry onto the states allowed by the model (ancillas in `|0⟩`).
    state_space: Option<CMat>,
}

fn ptrace_keep(m: &CMat, dims: &[usize], party: usize) -> CMat {
    let d = dims[party];
    let before: usize = dims[..party].iter().product();
    let after: usize = dims[party + 1..].iter().product();
    let mut out = CMat::zeros(d, d);
    for b in 0..before {
        for i in 0..d {
            for j in 0..d {
                let mut s = c(0.0, 0.0);
                for a in 0..after {
                    s += m[(b * d * after + i * after + a, b * d * after + j * after + a)];
                }
                out[(i, j)] += s;
            }
        }
    }
    out
}

fn product(rep: &Representation, letters: &[usize]) -> CMat {
    let mut acc = identity(rep.dim());
    for &l in letters {
        acc *= &rep.ops[l];
    }
    acc
}

/// Projector maximising `tr(H P)`, of rank `r` or onto the positive part.
fn best_projector(h: &CMat, rank: Option<usize>, real: bool) -> CMat {
    let n = h.nrows();
    let pick = |vals: &[f64]| -> Vec<usize> {
        match rank {
            Some(r) => (n - r..n).collect(),
            None => (0..n).filter(|&j| vals[j] > 0.0).collect(),
        }
    };
    if real {
        let (vals, vecs) = eigh_real(&real_part(h));
        let mut p = crate::linalg::RMat::zeros(n, n);
        for j in pick(&vals) {
            let v = vecs.column(j);
            p += &v * v.transpose();
        }
        to_complex(&p)
    } else {
        let (vals, vecs) = eigh(h);
        let mut p = CMat::zeros(n, n);
        for j in pick(&vals) {
            let v = vecs.column(j);
            p += &v * v.adjoint();
        }
        p
    }
}

/// Orthonormal basis of the range of a projector.
fn range_basis(p: &CMat, real: bool) -> CMat {
    let n = p.nrows();
    if real {
        let (vals, vecs) = eigh_real(&real_part(p));
        let cols: Vec<usize> = (0..n).filter(|&j| vals[j] > 0.5).collect();
        to_complex(&vecs.select_columns(&cols))
    } else {
        let (vals, vecs) = eigh(p);
        let cols: Vec<usize> = (0..n).filter(|&j| vals[j] > 0.5).collect();
        vecs.select_columns(&cols)
    }
}

fn rank_of_projector(p: &CMat) -> usize {
    p.trace().re.round().max(0.0) as usize
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, freeze_state: bool) -> Self {
        let alphabet = scenario.alphabet();
        let reduced = scenario.objective.reduced(alphabet);
        let terms = reduced
            .terms
            .iter()
            .map(|(w, &v)| (w.letters().iter().map(|&l| l as usize).collect(), v))
            .collect();
        let update_state = !freeze_state && scenario.state == StateModel::RandomPure;
        Self { scenario, terms, real: scenario.field == Field::Real, update_state, state_space: None }
    }

    fn value(&self, rep: &Representation) -> f64 {
        let mut s = c(0.0, 0.0);
        for (w, v) in &self.terms {
            s += v * (&rep.state * product(rep, w)).trace();
        }
        s.re
    }

    fn blocks(&self, fixed: Option<&[Option<usize>]>) -> Vec<Block> {
        let sc = self.scenario;
        let mut out = Vec::new();
        let embed_of = |party: usize, kind: VariableKind| {
            let a = sc.ancilla_dim(party);
            if kind == VariableKind::StatePrep { Embed::Prep(a) } else { Embed::Plain(a) }
        };
        for (i, v) in sc.variables.iter().enumerate() {
            if sc.group_of(i).is_some() {
                continue;
            }
            let letter = sc.letter_of_variable(i) as usize;
            let (kind, letters) = match v.kind {
                VariableKind::Dichotomic => (BlockKind::Dichotomic, vec![letter]),
                VariableKind::Projector => (BlockKind::Projector, vec![letter]),
                VariableKind::StatePrep => (BlockKind::Prep, vec![letter]),
                VariableKind::Unitary => (BlockKind::Unitary, vec![letter, letter + 1]),
            };
            let rank = match v.kind {
                VariableKind::StatePrep => Some(v.rank.unwrap_or(1)),
                VariableKind::Unitary => None,
                _ => fixed.and_then(|f| f[i]),
            };
            out.push(Block {
                kind,
                letters,
                party: v.party,
                embed: embed_of(v.party, v.kind),
                ranks: vec![rank],
                linear: false,
                step: 1.0,
            });
        }
        for g in &sc.groups {
            let party = sc.variables[g.members[0]].party;
            let letters: Vec<usize> = g.members.iter().map(|&m| sc.letter_of_variable(m) as usize).collect();
            let d = sc.parties[party].dim.finite().unwrap_or(1);
            let ranks = if g.povm {
                vec![Some(d); letters.len()]
            } else {
                g.members.iter().map(|&m| fixed.and_then(|f| f[m])).collect()
            };
            out.push(Block {
                kind: BlockKind::Group,
                letters,
                party,
                embed: if g.povm { Embed::Full } else { embed_of(party, VariableKind::Projector) },
                ranks,
                linear: false,
                step: 1.0,
            });
        }
        for b in out.iter_mut() {
            b.linear = b.kind != BlockKind::Unitary
                && self
                    .terms
                    .iter()
                    .all(|(w, _)| w.iter().filter(|l| b.letters.contains(l)).count() <= 1);
        }
        out
    }

    /// `Σ coeff · (suffix ρ prefix)` over occurrences of `letter`, reduced to
    /// the letter's own space; `∂f = Re tr(G ∂X)`.
    fn environment(&self, rep: &Representation, block: &Block, letter: usize) -> CMat {
        let n = rep.dim();
        let mut g = CMat::zeros(n, n);
        for (w, v) in &self.terms {
            for (p, &l) in w.iter().enumerate() {
                if l == letter {
                    let a = product(rep, &w[..p]);
                    let b = product(rep, &w[p + 1..]);
                    g += (b * &rep.state * a) * *v;
                }
            }
        }
        block.embed.reduce(&ptrace_keep(&g, &rep.local_dims, block.party))
    }

    fn set(&self, rep: &mut Representation, block: &Block, letter: usize, own: &CMat) {
        rep.set_local(letter, block.embed.lift(own));
    }

    fn exact_update(&self, rep: &mut Representation, block: &Block) {
        let h: Vec<CMat> = block
            .letters
            .iter()
            .map(|&l| hermitian_part(&self.environment(rep, block, l)))
            .collect();
        match block.kind {
            BlockKind::Dichotomic => {
                let p = best_projector(&h[0], block.ranks[0], self.real);
                let d = p.nrows();
                self.set(rep, block, block.letters[0], &(p * c(2.0, 0.0) - identity(d)));
            }
            BlockKind::Projector | BlockKind::Prep => {
                let p = best_projector(&h[0], block.ranks[0], self.real);
                self.set(rep, block, block.letters[0], &p);
            }
            BlockKind::Group => {
                let m = block.letters.len();
                for i in 0..m {
                    for j in i + 1..m {
                        // the environments stay valid: the objective is linear
                        // in the group, so they do not depend on its members
                        let (li, lj) = (block.letters[i], block.letters[j]);
                        let pi = block.embed.own(&rep.local[li]);
                        let pj = block.embed.own(&rep.local[lj]);
                        let q = &pi + &pj;
                        let basis = range_basis(&q, self.real);
                        if basis.ncols() == 0 {
                            continue;
                        }
                        let hq = basis.adjoint() * (&h[i] - &h[j]) * &basis;
                        let rank = block.ranks[i].map(|_| rank_of_projector(&pi));
                        let sub = best_projector(&hermitian_part(&hq), rank, self.real);
                        let new_i = &basis * sub * basis.adjoint();
                        let new_j = &q - &new_i;
                        self.set(rep, block, li, &new_i);
                        self.set(rep, block, lj, &new_j);
                    }
                }
            }
            BlockKind::Unitary => unreachable!("unitary blocks are never linear"),
        }
    }

    /// One backtracking step along the steepest unitary rotation.
    fn rotation_update(&self, rep: &mut Representation, block: &mut Block) {
        let f0 = self.value(rep);
        let own: Vec<CMat> = block.letters.iter().map(|&l| block.embed.own(&rep.local[l])).collect();
        let k = if block.kind == BlockKind::Unitary {
            let u = &own[0];
            let gu = self.environment(rep, block, block.letters[0]);
            let gs = self.environment(rep, block, block.letters[1]);
            let w = u * gu - gs * u.adjoint();
            (w.adjoint() - &w) * c(0.5, 0.0)
        } else {
            let mut k = CMat::zeros(own[0].nrows(), own[0].nrows());
            for (i, &l) in block.letters.iter().enumerate() {
                let h = hermitian_part(&self.environment(rep, block, l));
                k += &h * &own[i] - &own[i] * &h;
            }
            k
        };
        let norm = k.norm();
        if norm < 1e-14 {
            return;
        }
        let k = if self.real { to_complex(&real_part(&k)) } else { k };
        let saved: Vec<CMat> = block.letters.iter().map(|&l| rep.local[l].clone()).collect();
        let mut t = block.step / norm;
        for _ in 0..40 {
            let r = expm_skew(&(&k * c(t, 0.0)));
            let r = if self.real { to_complex(&real_part(&r)) } else { r };
            if block.kind == BlockKind::Unitary {
                let u = &r * &own[0];
                self.set(rep, block, block.letters[0], &u);
                self.set(rep, block, block.letters[1], &u.adjoint());
            } else {
                for (i, &l) in block.letters.iter().enumerate() {
                    let x = &r * &own[i] * r.adjoint();
                    self.set(rep, block, l, &hermitian_part(&x));
                }
            }
            if self.value(rep) > f0 {
                block.step = (t * norm * 2.0).min(4.0);
                return;
            }
            t *= 0.5;
        }
        for (l, m) in block.letters.iter().zip(saved) {
            rep.set_local(*l, m);
        }
        block.step = (block.step * 0.5).max(1e-6);
    }

    fn state_update(&self, rep: &mut Representation) {
        let Some(e) = &self.state_space else { return };
        let n = rep.dim();
        let mut h = CMat::zeros(n, n);
        for (w, v) in &self.terms {
            h += product(rep, w) * *v;
        }
        let h = hermitian_part(&(e.adjoint() * h * e));
        let top = if self.real {
            let (_, vecs) = eigh_real(&real_part(&h));
            to_complex(&vecs.columns(h.nrows() - 1, 1).into_owned())
        } else {
            let (_, vecs) = eigh(&h);
            vecs.columns(h.nrows() - 1, 1).into_owned()
        };
        let psi: DVector<C64> = (e * top).column(0).into_owned();
        rep.set_pure_state(psi);
    }

    fn run(&self, mut rep: Representation, blocks: &mut [Block], cfg: &SeesawConfig) -> (f64, Vec<f64>, Representation) {
        let mut f = self.value(&rep);
        let mut traj = vec![f];
        let mut quiet = 0;
        for _ in 0..cfg.iters {
            if self.update_state {
                self.state_update(&mut rep);
            }
            for b in blocks.iter_mut() {
                if b.linear {
                    self.exact_update(&mut rep, b);
                } else {
                    self.rotation_update(&mut rep, b);
                }
            }
            let nf = self.value(&rep);
            traj.push(nf);
            if nf - f <= cfg.tol * (1.0 + nf.abs()) {
                quiet += 1;
                if quiet >= 5 {
                    f = nf.max(f);
                    break;
                }
            } else {
                quiet = 0;
            }
            f = nf.max(f);
        }
        (f, traj, rep)
    }
}

fn state_space(scenario: &Scenario, rep: &Representation) -> CMat {
    let sys: Vec<usize> = scenario.parties.iter().map(|p| p.dim.finite().unwrap()).collect();
    let n_sys: usize = sys.iter().product();
    let mut e = CMat::zeros(rep.dim(), n_sys);
    for k in 0..n_sys {
        let mut v = DVector::<C64>::zeros(n_sys);
        v[k] = c(1.0, 0.0);
        e.set_column(k, &embed_system_vector(&v, &sys, &rep.local_dims));
    }
    e
}

/// Rank class realised by a representation.
pub fn representation_class(scenario: &Scenario, rep: &Representation) -> RankClass {
    let (_, owner) = scenario.rank_layout();
    let ranks = owner
        .iter()
        .map(|&var| {
            let v = &scenario.variables[var];
            let local = &rep.local[scenario.letter_of_variable(var) as usize];
            let a = scenario.ancilla_dim(v.party);
            let own = Embed::Plain(a).own(local);
            let p = if v.kind == VariableKind::Dichotomic {
                (own + identity(local.nrows() / a)) * c(0.5, 0.0)
            } else {
                own
            };
            rank_of_projector(&p)
        })
        .collect();
    RankClass::new(ranks)
}

/// Alternating maximisation of the objective at dimension `d`; the best
/// value over `restarts` random starts is a lower bound on the optimum.
pub fn seesaw_lower_bound(scenario: &Scenario, d: usize, restarts: usize, iters: usize, seed: u64) -> Result<SeesawOutcome> {
    seesaw_with(scenario, d, &SeesawConfig { restarts, iters, seed, ..Default::default() })
}

pub fn seesaw_with(scenario: &Scenario, d: usize, cfg: &SeesawConfig) -> Result<SeesawOutcome> {
    if !scenario.objective.is_hermitian(scenario.alphabet(), 1e-12) {
        return Err(Error::NonHermitianObjective);
    }
    let sc = scenario.with_dimension(d)?;
    if !sc.all_finite() {
        return Err(Error::InvalidScenario("see-saw needs every party finite-dimensional".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidScenario("see-saw needs at least one restart".into()));
    }
    let fixed = match &cfg.class {
        Some(cls) => Some(class_ranks(&sc, cls)?),
        None => None,
    };
    let classes = sc.rank_classes();
    if classes.is_empty() {
        return Err(Error::InvalidScenario("no admissible rank class".into()));
    }
    let interior: Vec<RankClass> = {
        let (layout, _) = sc.rank_layout();
        classes
            .iter()
            .filter(|cls| {
                cls.ranks.iter().zip(&layout.objects).all(|(&r, o)| {
                    let hi = *o.admissible.iter().max().unwrap();
                    o.admissible.len() == 1 || (r > 0 && r < hi)
                })
            })
            .cloned()
            .collect()
    };
    // restarts cycle through inequivalent interior classes in a seeded order
    let mut pool: Vec<RankClass> = dedup_rank_classes(if interior.is_empty() { &classes } else { &interior }, &sc.rank_symmetries())
        .into_iter()
        .map(|(cls, _)| cls)
        .collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xC1A55, 0)));
    let runs = map_range(cfg.parallelism, cfg.restarts, |r| {
        let s = derive_seed(cfg.seed, 0x5EE5A, r as u64);
        let start = cfg.class.clone().unwrap_or_else(|| pool[r % pool.len()].clone());
        let rep = sample_representation(&sc, &start, s)?;
        let mut engine = Engine::new(&sc, cfg.freeze_state);
        if engine.update_state {
            engine.state_space = Some(state_space(&sc, &rep));
        }
        let start_ranks = class_ranks(&sc, &start)?;
        let mut blocks = engine.blocks(Some(fixed.as_deref().unwrap_or(&start_ranks)));
        let (f, mut traj, rep) = engine.run(rep, &mut blocks, cfg);
        if fixed.is_some() {
            return Ok::<_, Error>((f, traj, rep));
        }
        let mut free = engine.blocks(None);
        let (f2, more, rep) = engine.run(rep, &mut free, cfg);
        traj.extend_from_slice(&more[1..]);
        Ok((f.max(f2), traj, rep))
    });
    let mut best: Option<(f64, Vec<f64>, Representation)> = None;
    let mut values = Vec::with_capacity(runs.len());
    for run in runs {
        let run = run?;
        values.push(run.0);
        if best.as_ref().is_none_or(|b| run.0 > b.0) {
            best = Some(run);
        }
    }
    let (value, trajectory, representation) = best.unwrap();
    Ok(SeesawOutcome {
        value,
        class: representation_class(&sc, &representation).label(),
        representation,
        trajectory,
        restart_values: values,
    })
}

/// Exact optimum over commuting scalar assignments (one-dimensional
/// representations): `±1` for dichotomic letters, `{0,1}` for projectors,
/// one outcome per measurement group.
pub fn brute_force_classical(scenario: &Scenario) -> Result<f64> {
    let mut choices: Vec<Vec<Vec<(usize, f64)>>> = Vec::new();
    let mut fixed: Vec<(usize, f64)> = Vec::new();
    for (i, v) in scenario.variables.iter().enumerate() {
        if scenario.group_of(i).is_some() {
            continue;
        }
        let l = scenario.letter_of_variable(i) as usize;
        match v.kind {
            VariableKind::Dichotomic => choices.push(vec![vec![(l, 1.0)], vec![(l, -1.0)]]),
            VariableKind::Projector => choices.push(vec![vec![(l, 0.0)], vec![(l, 1.0)]]),
            VariableKind::StatePrep => match v.rank.unwrap_or(1) {
                0 => fixed.push((l, 0.0)),
                1 => fixed.push((l, 1.0)),
                r => return Err(Error::NotClassical(format!("state `{}` has rank {r} > 1", v.name))),
            },
            VariableKind::Unitary => {
                return Err(Error::NotClassical(format!("unitary `{}`", v.name)));
            }
        }
    }
    for g in &scenario.groups {
        let letters: Vec<usize> = g.members.iter().map(|&m| scenario.letter_of_variable(m) as usize).collect();
        choices.push(
            (0..letters.len())
                .map(|k| letters.iter().enumerate().map(|(j, &l)| (l, if j == k { 1.0 } else { 0.0 })).collect())
                .collect(),
        );
    }
    for (l, role) in scenario.roles().iter().enumerate() {
        if matches!(role, LetterRole::Sector { .. }) {
            fixed.push((l, 1.0));
        }
    }
    let total = choices.iter().try_fold(1u64, |acc, ch| acc.checked_mul(ch.len() as u64));
    match total {
        Some(t) if t <= 1 << 24 => {}
        _ => return Err(Error::TooLarge("more than 2^24 classical assignments".into())),
    }
    let terms: Vec<(Vec<usize>, C64)> = scenario
        .objective
        .terms
        .iter()
        .map(|(w, &v)| (w.letters().iter().map(|&l| l as usize).collect(), v))
        .collect();
    let mut values = vec![0.0; scenario.alphabet().len()];
    for &(l, x) in &fixed {
        values[l] = x;
    }
    let mut digits = vec![0usize; choices.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        for (ch, &k) in choices.iter().zip(&digits) {
            for &(l, x) in &ch[k] {
                values[l] = x;
            }
        }
        let v: f64 = terms
            .iter()
            .map(|(w, coeff)| coeff.re * w.iter().map(|&l| values[l]).product::<f64>())
            .sum();
        best = best.max(v);
        let mut pos = 0;
        loop {
            if pos == digits.len() {
                return Ok(best);
            }
            digits[pos] += 1;
            if digits[pos] < choices[pos].len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// `I_n(A_1..A_n) = Σ_σ sgn(σ) A_σ(1)⋯A_σ(n)`, by dynamic programming over
/// the set of already placed factors.
pub fn standard_polynomial(mats: &[CMat]) -> CMat {
    let n = mats.len();
    let d = mats.first().map_or(0, |m| m.nrows());
    let mut table: Vec<Option<CMat>> = vec![None; 1 << n];
    table[0] = Some(identity(d));
    for set in 0..(1usize << n) {
        let Some(acc) = table[set].take() else { continue };
        if set == (1 << n) - 1 {
            table[set] = Some(acc);
            break;
        }
        for j in 0..n {
            if set & (1 << j) != 0 {
                continue;
            }
            let inversions = (set >> (j + 1)).count_ones();
            let term = &acc * &mats[j];
            let next = set | (1 << j);
            let entry = table[next].get_or_insert_with(|| CMat::zeros(d, d));
            if inversions % 2 == 0 {
                *entry += term;
            } else {
                *entry -= term;
            }
        }
    }
    table[(1 << n) - 1].take().unwrap_or_else(|| CMat::zeros(d, d))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub dim: usize,
    pub trials: usize,
    /// Largest `‖I_{2D}‖_F` over trials on unit-norm `D × D` inputs.
    pub max_residual: f64,
    /// Smallest `‖I_{2D}‖_F` on unit-norm `(D+1) × (D+1)` inputs.
    pub control_residual: f64,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let g = gaussian_matrix(rng, d, d, false);
    let n = g.norm();
    g / c(n, 0.0)
}

/// Evaluate the standard polynomial of degree `2D` on random `D × D`
/// matrices, with `(D+1) × (D+1)` inputs as a control.
pub fn check_standard_identity(d: usize, trials: usize, seed: u64) -> Result<IdentityReport> {
    if d == 0 || trials == 0 {
        return Err(Error::InvalidScenario("need D ≥ 1 and at least one trial".into()));
    }
    if d > 5 {
        return Err(Error::TooLarge(format!("standard identity of degree {} has too many terms", 2 * d)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_residual: f64 = 0.0;
    let mut control_residual = f64::INFINITY;
    for _ in 0..trials {
        let mats: Vec<CMat> = (0..2 * d).map(|_| unit_gaussian(&mut rng, d)).collect();
        max_residual = max_residual.max(standard_polynomial(&mats).norm());
        let ctrl: Vec<CMat> = (0..2 * d).map(|_| unit_gaussian(&mut rng, d + 1)).collect();
        control_residual = control_residual.min(standard_polynomial(&ctrl).norm());
    }
    Ok(IdentityReport { dim: d, trials, max_residual, control_residual })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct D2IdentityReport {
    pub trials: usize,
    /// `max ‖[[A1,A2]², A3]‖` over arbitrary complex triples.
    pub commutator_square: f64,
    /// `max ‖[X1, {X2,X3}]‖` over complex traceless dichotomic triples.
    pub dichotomic: f64,
    /// `max ‖{X1, [X2,X3]}‖` over real traceless dichotomic triples.
    pub dichotomic_real: f64,
    /// `min ‖{X1, [X2,X3]}‖` over complex triples; the real identity fails here.
    pub dichotomic_real_control: f64,
}

fn traceless_dichotomic(rng: &mut ChaCha8Rng, real: bool) -> CMat {
    random_projector(rng, 2, 1, real) * c(2.0, 0.0) - identity(2)
}

fn comm(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

fn anti(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

/// Identities satisfied by every `2 × 2` representation.
pub fn check_d2_identities(trials: usize, seed: u64) -> D2IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = D2IdentityReport {
        trials,
        commutator_square: 0.0,
        dichotomic: 0.0,
        dichotomic_real: 0.0,
        dichotomic_real_control: f64::INFINITY,
    };
    for _ in 0..trials {
        let a: Vec<CMat> = (0..3).map(|_| unit_gaussian(&mut rng, 2)).collect();
        let k = comm(&a[0], &a[1]);
        out.commutator_square = out.commutator_square.max(comm(&(&k * &k), &a[2]).norm());

        let x: Vec<CMat> = (0..3).map(|_| traceless_dichotomic(&mut rng, false)).collect();
        out.dichotomic = out.dichotomic.max(comm(&x[0], &anti(&x[1], &x[2])).norm());
        out.dichotomic_real_control = out.dichotomic_real_control.min(anti(&x[0], &comm(&x[1], &x[2])).norm());

        let r: Vec<CMat> = (0..3).map(|_| traceless_dichotomic(&mut rng, true)).collect();
        out.dichotomic_real = out.dichotomic_real.max(anti(&r[0], &comm(&r[1], &r[2])).norm());
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityRow {
    pub class: String,
    pub n: Vec<usize>,
}

impl StabilityRow {
    pub fn stable(&self) -> bool {
        self.n.windows(2).all(|w| w[0] == w[1])
    }
}

/// Basis dimension per class under several master seeds.
pub fn basis_stability(scenario: &Scenario, cfg: &SweepConfig, seeds: &[u64], classes: &[RankClass]) -> Result<Vec<StabilityRow>> {
    let index: Vec<Word> = cfg.index.words(scenario.alphabet())?;
    let real = use_real_span(scenario);
    let mut rows = Vec::new();
    for cls in classes {
        let mut n = Vec::new();
        for &s in seeds {
            let local = SweepConfig { seed: s, cache_dir: None, ..cfg.clone() };
            n.push(class_basis(scenario, cls, &index, &local, real, "stability")?.n());
        }
        rows.push(StabilityRow { class: cls.label(), n });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Dim, ScenarioBuilder};

    fn chsh() -> Scenario {
        ScenarioBuilder::new("chsh")
            .party("A", Dim::Finite(2))
            .party("B", Dim::Finite(2))
            .variables(&["A0", "A1"], VariableKind::Dichotomic, "A")
            .variables(&["B0", "B1"], VariableKind::Dichotomic, "B")
            .term("A0 B0", 1.0)
            .term("A0 B1", 1.0)
            .term("A1 B0", 1.0)
            .term("A1 B1", -1.0)
            .build()
            .unwrap()
    }

    fn permutation_oracle(mats: &[CMat]) -> CMat {
        let n = mats.len();
        let d = mats[0].nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut out = CMat::zeros(d, d);
        loop {
            let inv = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| perm[i] > perm[j]).count();
            let mut p = identity(d);
            for &k in &perm {
                p *= &mats[k];
            }
            if inv % 2 == 0 {
                out += p;
            } else {
                out -= p;
            }
            // next lexicographic permutation
            let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else { break };
            let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).unwrap();
            perm.swap(i, j);
            perm[i + 1..].reverse();
        }
        out
    }

    #[test]
    fn standard_polynomial_matches_permutation_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=5 {
            let mats: Vec<CMat> = (0..n).map(|_| unit_gaussian(&mut rng, 3)).collect();
            let diff = (standard_polynomial(&mats) - permutation_oracle(&mats)).norm();
            assert!(diff < 1e-12, "n = {n}: {diff}");
        }
    }

    #[test]
    fn standard_identity_holds_and_control_fails() {
        for d in 1..=3 {
            let r = check_standard_identity(d, 3, 9).unwrap();
            assert!(r.max_residual < 1e-12, "{r:?}");
            assert!(r.control_residual > 1e-3, "{r:?}");
        }
        assert!(matches!(check_standard_identity(6, 1, 0), Err(Error::TooLarge(_))));
    }

    #[test]
    fn d2_identities() {
        let r = check_d2_identities(20, 3);
        assert!(r.commutator_square < 1e-12);
        assert!(r.dichotomic < 1e-12);
        assert!(r.dichotomic_real < 1e-12);
        assert!(r.dichotomic_real_control > 1e-3);
    }

    #[test]
    fn chsh_classical_is_two() {
        assert_eq!(brute_force_classical(&chsh()).unwrap(), 2.0);
    }

    #[test]
    fn chsh_seesaw_reaches_tsirelson() {
        let out = seesaw_lower_bound(&chsh(), 2, 5, 300, 2).unwrap();
        assert!((out.value - 2.0 * 2f64.sqrt()).abs() < 1e-7, "{}", out.value);
        assert!(out.trajectory.windows(2).all(|w| w[1] >= w[0] - 1e-10));
    }

    #[test]
    fn unitary_rotation_improves() {
        let sc = ScenarioBuilder::new("u")
            .party("A", Dim::Finite(2))
            .variable("U", VariableKind::Unitary, "A")
            .term("U", 0.5)
            .term("U*", 0.5)
            .build()
            .unwrap();
        let out = seesaw_lower_bound(&sc, 2, 2, 200, 1).unwrap();
        assert!((out.value - 1.0).abs() < 1e-6, "{}", out.value);
        assert!(matches!(brute_force_classical(&sc), Err(Error::NotClassical(_))));
    }

    #[test]
    fn non_hermitian_objective_is_rejected() {
        let mut sc = chsh();
        let w = sc.alphabet().parse_word("A0 A1").unwrap();
        sc.objective.add(w, c(1.0, 0.0));
        assert!(matches!(seesaw_lower_bound(&sc, 2, 1, 10, 0), Err(Error::NonHermitianObjective)));
    }
}
