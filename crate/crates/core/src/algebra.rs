//! Words over operator letters, their involution and canonical reduction,
//! polynomial objectives and rank-class enumeration.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, C64};

pub type LetterId = u16;

/// Rewrite rule attached to a letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    None,
    /// `X² = 1`
    Dichotomic,
    /// `E² = E`
    Idempotent,
    /// `U U† = U† U = 1`
    Unitary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Letter {
    pub id: LetterId,
    pub name: String,
    pub hermitian: bool,
    pub adjoint_of: Option<LetterId>,
    pub rule: Rule,
    /// Letters of different parties commute.
    pub party: usize,
}

/// A monomial: an ordered product of letters. The empty word is the identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Word(pub Vec<LetterId>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn from_letters(letters: &[LetterId]) -> Self {
        Word(letters.to_vec())
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[LetterId] {
        &self.0
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }
}

// Graded lexicographic: shorter words first, then by letter ids.
impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Letter set together with the rewriting rules and party assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    letters: Vec<Letter>,
}

impl Alphabet {
    pub fn new(letters: Vec<Letter>) -> Result<Self> {
        for (i, l) in letters.iter().enumerate() {
            if l.id as usize != i {
                return Err(Error::InvalidScenario(format!(
                    "letter `{}` has id {} at position {i}",
                    l.name, l.id
                )));
            }
            match (l.hermitian, l.adjoint_of) {
                (true, Some(_)) => {
                    return Err(Error::InvalidScenario(format!(
                        "Hermitian letter `{}` cannot declare an adjoint partner",
                        l.name
                    )))
                }
                (false, None) => {
                    return Err(Error::InvalidScenario(format!(
                        "non-Hermitian letter `{}` needs an adjoint partner",
                        l.name
                    )))
                }
                (false, Some(p)) => {
                    let partner = letters.get(p as usize).ok_or_else(|| {
                        Error::InvalidScenario(format!("letter `{}` has unknown adjoint {p}", l.name))
                    })?;
                    if partner.adjoint_of != Some(l.id) || partner.party != l.party {
                        return Err(Error::InvalidScenario(format!(
                            "adjoint pairing of `{}` is not an involution",
                            l.name
                        )));
                    }
                }
                (true, None) => {}
            }
            if l.rule == Rule::Unitary && l.hermitian {
                return Err(Error::InvalidScenario(format!(
                    "Hermitian unitary `{}` should be declared dichotomic",
                    l.name
                )));
            }
        }
        Ok(Alphabet { letters })
    }

    /// Hermitian letters with the given rules, all in party 0.
    pub fn hermitian(names: &[&str], rule: Rule) -> Self {
        let letters = names
            .iter()
            .enumerate()
            .map(|(i, n)| Letter {
                id: i as LetterId,
                name: n.to_string(),
                hermitian: true,
                adjoint_of: None,
                rule,
                party: 0,
            })
            .collect();
        Alphabet { letters }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn letter(&self, id: LetterId) -> &Letter {
        &self.letters[id as usize]
    }

    pub fn id_of(&self, name: &str) -> Option<LetterId> {
        self.letters.iter().find(|l| l.name == name).map(|l| l.id)
    }

    pub fn adjoint_letter(&self, id: LetterId) -> LetterId {
        let l = &self.letters[id as usize];
        l.adjoint_of.unwrap_or(id)
    }

    /// Letters reversed, each replaced by its adjoint partner.
    pub fn adjoint(&self, w: &Word) -> Word {
        Word(w.0.iter().rev().map(|&l| self.adjoint_letter(l)).collect())
    }

    /// Canonical form: letters of different parties are commuted into party
    /// order (stable within a party), then the per-letter rules are applied
    /// with a stack scan.
    pub fn reduce(&self, w: &Word) -> Word {
        let mut letters = w.0.clone();
        letters.sort_by_key(|&l| self.letters[l as usize].party);
        let mut out: Vec<LetterId> = Vec::with_capacity(letters.len());
        for l in letters {
            let rule = self.letters[l as usize].rule;
            if let Some(&top) = out.last() {
                match rule {
                    Rule::Dichotomic if top == l => {
                        out.pop();
                        continue;
                    }
                    Rule::Idempotent if top == l => continue,
                    Rule::Unitary if top == self.adjoint_letter(l) => {
                        out.pop();
                        continue;
                    }
                    _ => {}
                }
            }
            out.push(l);
        }
        Word(out)
    }

    pub fn is_canonical(&self, w: &Word) -> bool {
        self.reduce(w) == *w
    }

    /// All words of degree ≤ `k` in graded lexicographic order, identity first.
    /// With `canonical`, only words equal to their reduction are kept.
    pub fn enumerate_words(&self, k: usize, canonical: bool) -> Vec<Word> {
        let n = self.letters.len() as LetterId;
        let mut out = vec![Word::identity()];
        let mut frontier = vec![Word::identity()];
        for _ in 0..k {
            let mut next = Vec::with_capacity(frontier.len() * n as usize);
            for w in &frontier {
                for l in 0..n {
                    let mut v = w.0.clone();
                    v.push(l);
                    next.push(Word(v));
                }
            }
            if canonical {
                next.retain(|w| self.is_canonical(w));
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    pub fn parse_word(&self, s: &str) -> Option<Word> {
        let s = s.trim();
        if s.is_empty() || s == "1" {
            return Some(Word::identity());
        }
        s.split_whitespace()
            .map(|tok| self.id_of(tok))
            .collect::<Option<Vec<_>>>()
            .map(Word)
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_identity() {
            return "1".to_string();
        }
        w.0.iter()
            .map(|&l| self.letters[l as usize].name.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parties(&self) -> BTreeSet<usize> {
        self.letters.iter().map(|l| l.party).collect()
    }

    /// Restriction of a word to the letters of the given parties, order kept.
    pub fn project(&self, w: &Word, parties: &BTreeSet<usize>) -> Word {
        Word(
            w.0.iter()
                .copied()
                .filter(|&l| parties.contains(&self.letters[l as usize].party))
                .collect(),
        )
    }
}

/// Noncommutative polynomial with complex coefficients.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: BTreeMap<Word, C64>,
}

impl Polynomial {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(v: f64) -> Self {
        let mut p = Self::new();
        p.add(Word::identity(), c(v, 0.0));
        p
    }

    pub fn from_real_terms<I: IntoIterator<Item = (Word, f64)>>(terms: I) -> Self {
        let mut p = Self::new();
        for (w, v) in terms {
            p.add(w, c(v, 0.0));
        }
        p
    }

    pub fn add(&mut self, w: Word, coeff: C64) {
        let e = self.terms.entry(w).or_insert(c(0.0, 0.0));
        *e += coeff;
    }

    pub fn coefficient(&self, w: &Word) -> C64 {
        self.terms.get(w).copied().unwrap_or(c(0.0, 0.0))
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::degree).max().unwrap_or(0)
    }

    pub fn scale(&self, s: C64) -> Polynomial {
        Polynomial {
            terms: self.terms.iter().map(|(w, v)| (w.clone(), v * s)).collect(),
        }
    }

    pub fn sum(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (w, v) in &other.terms {
            out.add(w.clone(), *v);
        }
        out
    }

    /// Canonical form: every word reduced, equal words merged, zeros dropped.
    pub fn reduced(&self, alphabet: &Alphabet) -> Polynomial {
        let mut out = Polynomial::new();
        for (w, v) in &self.terms {
            out.add(alphabet.reduce(w), *v);
        }
        out.terms.retain(|_, v| v.norm() > 0.0);
        out
    }

    pub fn adjoint(&self, alphabet: &Alphabet) -> Polynomial {
        let mut out = Polynomial::new();
        for (w, v) in &self.terms {
            out.add(alphabet.adjoint(w), v.conj());
        }
        out
    }

    /// `(p + p†)/2`, in canonical form.
    pub fn hermitian_part(&self, alphabet: &Alphabet) -> Polynomial {
        self.sum(&self.adjoint(alphabet))
            .scale(c(0.5, 0.0))
            .reduced(alphabet)
    }

    pub fn is_hermitian(&self, alphabet: &Alphabet, tol: f64) -> bool {
        let a = self.reduced(alphabet);
        let b = self.adjoint(alphabet).reduced(alphabet);
        let keys: BTreeSet<&Word> = a.terms.keys().chain(b.terms.keys()).collect();
        let ok = keys.into_iter().all(|w| (a.coefficient(w) - b.coefficient(w)).norm() <= tol);
        ok
    }

    pub fn has_real_coefficients(&self) -> bool {
        self.terms.values().all(|v| v.im == 0.0)
    }

    pub fn display(&self, alphabet: &Alphabet) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(w, v)| {
                if v.im == 0.0 {
                    format!("{}·[{}]", v.re, alphabet.format_word(w))
                } else {
                    format!("({}{:+}i)·[{}]", v.re, v.im, alphabet.format_word(w))
                }
            })
            .collect();
        parts.join(" + ")
    }
}

/// Assignment of a rank to each rank-classified object.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RankClass {
    pub ranks: Vec<usize>,
}

impl RankClass {
    pub fn new(ranks: Vec<usize>) -> Self {
        RankClass { ranks }
    }

    pub fn label(&self) -> String {
        if self.ranks.is_empty() {
            return "-".to_string();
        }
        self.ranks.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("")
    }
}

impl fmt::Display for RankClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.label())
    }
}

/// One rank-classified object and the ranks it may take.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankObject {
    pub label: String,
    pub admissible: Vec<usize>,
}

/// Rank-classified objects of a scenario. `sum_groups` lists object indices
/// whose ranks must add up to the given total (complete projective
/// measurements).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankLayout {
    pub objects: Vec<RankObject>,
    pub sum_groups: Vec<(Vec<usize>, usize)>,
}

/// Cartesian product of admissible ranks, in lexicographic order, with rank
/// vectors violating a completeness sum removed. No objects gives a single
/// empty class.
pub fn enumerate_rank_classes(layout: &RankLayout) -> Vec<RankClass> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(layout.objects.len());
    fn rec(layout: &RankLayout, current: &mut Vec<usize>, out: &mut Vec<RankClass>) {
        let i = current.len();
        if i == layout.objects.len() {
            let ok = layout
                .sum_groups
                .iter()
                .all(|(members, total)| members.iter().map(|&m| current[m]).sum::<usize>() == *total);
            if ok {
                out.push(RankClass::new(current.clone()));
            }
            return;
        }
        for &r in &layout.objects[i].admissible {
            current.push(r);
            rec(layout, current, out);
            current.pop();
        }
    }
    rec(layout, &mut current, &mut out);
    out
}

/// Orbit representatives under the group generated by the given
/// permutations of rank objects (`perm[i]` is the image of object `i`).
/// Returns each orbit's lexicographically smallest member with the orbit
/// size, in order of first appearance.
pub fn dedup_rank_classes(classes: &[RankClass], generators: &[Vec<usize>]) -> Vec<(RankClass, usize)> {
    let mut seen: HashSet<RankClass> = HashSet::new();
    let mut out = Vec::new();
    for cls in classes {
        if seen.contains(cls) {
            continue;
        }
        let mut orbit = vec![cls.clone()];
        let mut queue = VecDeque::from([cls.clone()]);
        seen.insert(cls.clone());
        while let Some(x) = queue.pop_front() {
            for g in generators {
                let mut ranks = vec![0; x.ranks.len()];
                for (i, &r) in x.ranks.iter().enumerate() {
                    ranks[g[i]] = r;
                }
                let y = RankClass::new(ranks);
                if seen.insert(y.clone()) {
                    orbit.push(y.clone());
                    queue.push_back(y);
                }
            }
        }
        let rep = orbit.iter().min().unwrap().clone();
        out.push((rep, orbit.len()));
    }
    out
}
