//! Declarative scenario: operator variables, their parties and kinds,
//! measurement groups, the state model and the objective.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::{
    enumerate_rank_classes, Alphabet, Letter, LetterId, Polynomial, RankClass, RankLayout, RankObject,
    Rule, Word,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    /// `X² = 1`, rank-classified through `(X + 1)/2`.
    Dichotomic,
    /// Orthogonal projector.
    Projector,
    /// Non-Hermitian unitary; contributes a second letter for its adjoint.
    Unitary,
    /// Preparation state, a projector of fixed rank.
    #[serde(alias = "state-prep")]
    StatePrep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Complex,
    Real,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateModel {
    RandomPure,
    MaximallyEntangled,
    /// Unnormalised identity on a single finite party; `tr(1) = D`.
    #[serde(alias = "tracial")]
    TracialUnnormalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    Finite(usize),
    Unconstrained,
}

impl Dim {
    pub fn finite(self) -> Option<usize> {
        match self {
            Dim::Finite(d) => Some(d),
            Dim::Unconstrained => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Party {
    pub name: String,
    pub dim: Dim,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VariableKind,
    pub party: usize,
    /// Fixed rank for state preparations (default 1).
    pub rank: Option<usize>,
}

/// Projectors summing to the identity. With `povm`, the group is realised as
/// a projective measurement on an ancilla-extended space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementGroup {
    pub name: String,
    pub members: Vec<usize>,
    pub povm: bool,
}

/// What a letter stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LetterRole {
    Variable { var: usize, adjoint: bool },
    /// `|0⟩⟨0| ⊗ 1` on a dilated party.
    Sector { party: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub parties: Vec<Party>,
    pub variables: Vec<Variable>,
    pub groups: Vec<MeasurementGroup>,
    pub field: Field,
    pub state: StateModel,
    pub sector_projectors: bool,
    /// Letter permutations (as `(from, to)` name pairs) under which the
    /// objective is invariant; used only for opt-in class deduplication.
    pub symmetries: Vec<Vec<(String, String)>>,
    /// Hermitian objective over the scenario's letters.
    pub objective: Polynomial,
    alphabet: Alphabet,
    roles: Vec<LetterRole>,
}

/// Builder collecting variables before the alphabet is fixed.
#[derive(Clone, Debug)]
pub struct ScenarioBuilder {
    name: String,
    parties: Vec<Party>,
    variables: Vec<Variable>,
    groups: Vec<(String, Vec<String>, bool)>,
    field: Field,
    state: StateModel,
    sector_projectors: bool,
    symmetries: Vec<Vec<(String, String)>>,
    terms: Vec<(String, f64, f64)>,
}

impl ScenarioBuilder {
    pub fn new(name: &str) -> Self {
        ScenarioBuilder {
            name: name.to_string(),
            parties: Vec::new(),
            variables: Vec::new(),
            groups: Vec::new(),
            field: Field::Complex,
            state: StateModel::RandomPure,
            sector_projectors: false,
            symmetries: Vec::new(),
            terms: Vec::new(),
        }
    }

    pub fn party(mut self, name: &str, dim: Dim) -> Self {
        self.parties.push(Party { name: name.to_string(), dim });
        self
    }

    fn party_index(&self, name: &str) -> usize {
        self.parties
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("unknown party `{name}`"))
    }

    pub fn variable(mut self, name: &str, kind: VariableKind, party: &str) -> Self {
        let party = self.party_index(party);
        self.variables.push(Variable { name: name.to_string(), kind, party, rank: None });
        self
    }

    pub fn variables(mut self, names: &[&str], kind: VariableKind, party: &str) -> Self {
        for n in names {
            self = self.variable(n, kind, party);
        }
        self
    }

    pub fn state_prep(mut self, name: &str, party: &str, rank: usize) -> Self {
        let party = self.party_index(party);
        self.variables.push(Variable {
            name: name.to_string(),
            kind: VariableKind::StatePrep,
            party,
            rank: Some(rank),
        });
        self
    }

    pub fn group(mut self, name: &str, members: &[&str], povm: bool) -> Self {
        self.groups
            .push((name.to_string(), members.iter().map(|s| s.to_string()).collect(), povm));
        self
    }

    pub fn field(mut self, field: Field) -> Self {
        self.field = field;
        self
    }

    pub fn state(mut self, state: StateModel) -> Self {
        self.state = state;
        self
    }

    pub fn sector_projectors(mut self, on: bool) -> Self {
        self.sector_projectors = on;
        self
    }

    pub fn symmetry(mut self, pairs: &[(&str, &str)]) -> Self {
        self.symmetries
            .push(pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect());
        self
    }

    /// Objective term; `word` is a space-separated letter list, `1` for the identity.
    pub fn term(mut self, word: &str, coeff: f64) -> Self {
        self.terms.push((word.to_string(), coeff, 0.0));
        self
    }

    pub fn complex_term(mut self, word: &str, re: f64, im: f64) -> Self {
        self.terms.push((word.to_string(), re, im));
        self
    }

    pub fn build(self) -> Result<Scenario> {
        let groups = self
            .groups
            .iter()
            .map(|(name, members, povm)| {
                let idx = members
                    .iter()
                    .map(|m| {
                        self.variables.iter().position(|v| &v.name == m).ok_or_else(|| {
                            Error::InvalidScenario(format!("group `{name}` names unknown variable `{m}`"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(MeasurementGroup { name: name.clone(), members: idx, povm: *povm })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sc = Scenario::assemble(
            self.name,
            self.parties,
            self.variables,
            groups,
            self.field,
            self.state,
            self.sector_projectors,
            self.symmetries,
        )?;
        let mut p = Polynomial::new();
        for (w, re, im) in &self.terms {
            let word = sc
                .alphabet
                .parse_word(w)
                .ok_or_else(|| Error::InvalidScenario(format!("objective word `{w}` uses unknown letters")))?;
            p.add(word, crate::linalg::c(*re, *im));
        }
        sc.set_objective(p);
        Ok(sc)
    }
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        name: String,
        parties: Vec<Party>,
        variables: Vec<Variable>,
        groups: Vec<MeasurementGroup>,
        field: Field,
        state: StateModel,
        sector_projectors: bool,
        symmetries: Vec<Vec<(String, String)>>,
    ) -> Result<Scenario> {
        if parties.is_empty() {
            return Err(Error::InvalidScenario("no parties declared".into()));
        }
        let mut names = BTreeSet::new();
        for v in &variables {
            if v.party >= parties.len() {
                return Err(Error::InvalidScenario(format!("variable `{}` has no party", v.name)));
            }
            if !names.insert(v.name.clone()) {
                return Err(Error::InvalidScenario(format!("duplicate variable `{}`", v.name)));
            }
            if v.name.contains(char::is_whitespace) || v.name == "1" {
                return Err(Error::InvalidScenario(format!("bad variable name `{}`", v.name)));
            }
        }
        let mut grouped = BTreeSet::new();
        for g in &groups {
            if g.members.is_empty() {
                return Err(Error::InvalidScenario(format!("group `{}` is empty", g.name)));
            }
            let party = variables[g.members[0]].party;
            for &m in &g.members {
                let v = &variables[m];
                if v.kind != VariableKind::Projector {
                    return Err(Error::InvalidScenario(format!(
                        "group `{}` member `{}` must be a projector",
                        g.name, v.name
                    )));
                }
                if v.party != party {
                    return Err(Error::InvalidScenario(format!("group `{}` spans several parties", g.name)));
                }
                if !grouped.insert(m) {
                    return Err(Error::InvalidScenario(format!("`{}` belongs to two groups", v.name)));
                }
            }
            if g.povm {
                if g.members.len() < 2 {
                    return Err(Error::InvalidScenario(format!(
                        "POVM group `{}` needs at least 2 outcomes",
                        g.name
                    )));
                }
                if parties[party].dim == Dim::Unconstrained {
                    return Err(Error::InvalidScenario(format!(
                        "POVM group `{}` on an unconstrained party",
                        g.name
                    )));
                }
            }
        }
        // all POVM groups of a party share one ancilla size
        for p in 0..parties.len() {
            let sizes: BTreeSet<usize> = groups
                .iter()
                .filter(|g| g.povm && variables[g.members[0]].party == p)
                .map(|g| g.members.len())
                .collect();
            if sizes.len() > 1 {
                return Err(Error::InvalidScenario(format!(
                    "POVM groups of party `{}` have different outcome counts",
                    parties[p].name
                )));
            }
        }
        let finite: Vec<usize> = (0..parties.len()).filter(|&p| parties[p].dim != Dim::Unconstrained).collect();
        match state {
            StateModel::TracialUnnormalized if finite.len() != 1 || parties.len() != 1 => {
                return Err(Error::InvalidScenario(
                    "tracial state requires exactly one finite-dimensional party".into(),
                ))
            }
            StateModel::MaximallyEntangled => {
                let dims: Vec<_> = parties.iter().map(|p| p.dim).collect();
                if dims.len() != 2 || dims[0] != dims[1] || dims[0] == Dim::Unconstrained {
                    return Err(Error::InvalidScenario(
                        "maximally entangled state requires two parties of equal finite dimension".into(),
                    ));
                }
            }
            _ => {}
        }
        for v in &variables {
            if let (Some(r), Dim::Finite(d)) = (v.rank, parties[v.party].dim) {
                if r > d {
                    return Err(Error::InvalidScenario(format!("rank of `{}` exceeds dimension", v.name)));
                }
            }
        }

        let mut letters = Vec::new();
        let mut roles = Vec::new();
        for (i, v) in variables.iter().enumerate() {
            let id = letters.len() as LetterId;
            match v.kind {
                VariableKind::Unitary => {
                    letters.push(Letter {
                        id,
                        name: v.name.clone(),
                        hermitian: false,
                        adjoint_of: Some(id + 1),
                        rule: Rule::Unitary,
                        party: v.party,
                    });
                    letters.push(Letter {
                        id: id + 1,
                        name: format!("{}*", v.name),
                        hermitian: false,
                        adjoint_of: Some(id),
                        rule: Rule::Unitary,
                        party: v.party,
                    });
                    roles.push(LetterRole::Variable { var: i, adjoint: false });
                    roles.push(LetterRole::Variable { var: i, adjoint: true });
                }
                kind => {
                    let rule = if kind == VariableKind::Dichotomic { Rule::Dichotomic } else { Rule::Idempotent };
                    letters.push(Letter {
                        id,
                        name: v.name.clone(),
                        hermitian: true,
                        adjoint_of: None,
                        rule,
                        party: v.party,
                    });
                    roles.push(LetterRole::Variable { var: i, adjoint: false });
                }
            }
        }
        if sector_projectors {
            for (p, party) in parties.iter().enumerate() {
                if groups.iter().any(|g| g.povm && variables[g.members[0]].party == p) {
                    let id = letters.len() as LetterId;
                    letters.push(Letter {
                        id,
                        name: format!("P_{}", party.name),
                        hermitian: true,
                        adjoint_of: None,
                        rule: Rule::Idempotent,
                        party: p,
                    });
                    roles.push(LetterRole::Sector { party: p });
                }
            }
        }
        let alphabet = Alphabet::new(letters)?;
        for sym in &symmetries {
            for (a, b) in sym {
                if alphabet.id_of(a).is_none() || alphabet.id_of(b).is_none() {
                    return Err(Error::InvalidScenario(format!("symmetry maps unknown letter `{a}` or `{b}`")));
                }
            }
        }
        Ok(Scenario {
            name,
            parties,
            variables,
            groups,
            field,
            state,
            sector_projectors,
            symmetries,
            objective: Polynomial::new(),
            alphabet,
            roles,
        })
    }

    /// Replace the objective by the canonical form of its Hermitian part.
    pub fn set_objective(&mut self, p: Polynomial) {
        self.objective = p.hermitian_part(&self.alphabet);
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn roles(&self) -> &[LetterRole] {
        &self.roles
    }

    pub fn letter_of_variable(&self, var: usize) -> LetterId {
        self.roles
            .iter()
            .position(|r| matches!(r, LetterRole::Variable { var: v, adjoint: false } if *v == var))
            .expect("every variable has a letter") as LetterId
    }

    pub fn group_of(&self, var: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.members.contains(&var))
    }

    pub fn finite_parties(&self) -> Vec<usize> {
        (0..self.parties.len()).filter(|&p| self.parties[p].dim != Dim::Unconstrained).collect()
    }

    pub fn unconstrained_parties(&self) -> Vec<usize> {
        (0..self.parties.len()).filter(|&p| self.parties[p].dim == Dim::Unconstrained).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.unconstrained_parties().is_empty()
    }

    /// Ancilla dimension of a party (outcome count of its POVM groups, 1 if none).
    pub fn ancilla_dim(&self, party: usize) -> usize {
        self.groups
            .iter()
            .filter(|g| g.povm && self.variables[g.members[0]].party == party)
            .map(|g| g.members.len())
            .max()
            .unwrap_or(1)
    }

    pub fn is_dilated(&self) -> bool {
        self.groups.iter().any(|g| g.povm)
    }

    /// Value of `⟨ε⟩` for the state model: the party dimension for the
    /// tracial state, 1 otherwise.
    pub fn normalization(&self) -> f64 {
        match self.state {
            StateModel::TracialUnnormalized => self.parties[0].dim.finite().unwrap_or(1) as f64,
            _ => 1.0,
        }
    }

    /// The rank-classified objects: each dichotomic or projector variable of
    /// a finite party (outside POVM groups), with completeness sums for
    /// projective groups. Returns the layout and, per object, its variable.
    pub fn rank_layout(&self) -> (RankLayout, Vec<usize>) {
        let mut objects = Vec::new();
        let mut owner = Vec::new();
        for (i, v) in self.variables.iter().enumerate() {
            let Some(d) = self.parties[v.party].dim.finite() else { continue };
            if let Some(g) = self.group_of(i) {
                if self.groups[g].povm {
                    continue;
                }
            }
            let admissible: Vec<usize> = match v.kind {
                VariableKind::Dichotomic | VariableKind::Projector => (0..=d).collect(),
                VariableKind::StatePrep => vec![v.rank.unwrap_or(1)],
                VariableKind::Unitary => continue,
            };
            objects.push(RankObject { label: v.name.clone(), admissible });
            owner.push(i);
        }
        let sum_groups = self
            .groups
            .iter()
            .filter(|g| !g.povm)
            .filter(|g| self.parties[self.variables[g.members[0]].party].dim != Dim::Unconstrained)
            .map(|g| {
                let d = self.parties[self.variables[g.members[0]].party].dim.finite().unwrap();
                let members = g.members.iter().map(|m| owner.iter().position(|o| o == m).unwrap()).collect();
                (members, d)
            })
            .collect();
        (RankLayout { objects, sum_groups }, owner)
    }

    pub fn rank_classes(&self) -> Vec<RankClass> {
        enumerate_rank_classes(&self.rank_layout().0)
    }

    /// Declared letter symmetries as permutations of rank objects. Letters
    /// that are not rank objects are ignored.
    pub fn rank_symmetries(&self) -> Vec<Vec<usize>> {
        let (_, owner) = self.rank_layout();
        self.symmetries
            .iter()
            .map(|sym| {
                let mut perm: Vec<usize> = (0..owner.len()).collect();
                for (a, b) in sym {
                    let va = self.variables.iter().position(|v| &v.name == a);
                    let vb = self.variables.iter().position(|v| &v.name == b);
                    if let (Some(va), Some(vb)) = (va, vb) {
                        if let (Some(oa), Some(ob)) =
                            (owner.iter().position(|&o| o == va), owner.iter().position(|&o| o == vb))
                        {
                            perm[oa] = ob;
                        }
                    }
                }
                perm
            })
            .collect()
    }

    /// Copy restricted to the given parties; the objective is dropped.
    pub fn restrict(&self, keep: &[usize]) -> Result<Scenario> {
        let remap: Vec<Option<usize>> = (0..self.parties.len()).map(|p| keep.iter().position(|&k| k == p)).collect();
        let mut var_map = vec![None; self.variables.len()];
        let mut variables = Vec::new();
        for (i, v) in self.variables.iter().enumerate() {
            if let Some(p) = remap[v.party] {
                var_map[i] = Some(variables.len());
                variables.push(Variable { party: p, ..v.clone() });
            }
        }
        let groups = self
            .groups
            .iter()
            .filter_map(|g| {
                let members: Option<Vec<usize>> = g.members.iter().map(|&m| var_map[m]).collect();
                members.map(|members| MeasurementGroup { members, ..g.clone() })
            })
            .collect();
        let parties = keep.iter().map(|&p| self.parties[p].clone()).collect();
        Scenario::assemble(
            self.name.clone(),
            parties,
            variables,
            groups,
            self.field,
            self.state,
            self.sector_projectors,
            Vec::new(),
        )
    }

    /// Same scenario with every finite party set to dimension `d`.
    pub fn with_dimension(&self, d: usize) -> Result<Scenario> {
        let mut parties = self.parties.clone();
        for p in parties.iter_mut() {
            if p.dim != Dim::Unconstrained {
                p.dim = Dim::Finite(d);
            }
        }
        let mut sc = Scenario::assemble(
            self.name.clone(),
            parties,
            self.variables.clone(),
            self.groups.clone(),
            self.field,
            self.state,
            self.sector_projectors,
            self.symmetries.clone(),
        )?;
        sc.objective = self.objective.clone();
        Ok(sc)
    }

    /// Every party, unconstrained ones included, set to dimension `d`.
    pub fn all_parties_finite(&self, d: usize) -> Result<Scenario> {
        let mut sc = self.clone();
        for p in sc.parties.iter_mut() {
            p.dim = Dim::Finite(d);
        }
        sc.with_dimension(d)
    }

    /// Stable content hash (hex) of everything that determines the math.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let payload = serde_json::json!({
            "parties": self.parties,
            "variables": self.variables,
            "groups": self.groups,
            "field": self.field,
            "state": self.state,
            "sector": self.sector_projectors,
            "objective": self.objective.terms.iter().map(|(w, v)| (self.alphabet.format_word(w), v.re, v.im)).collect::<Vec<_>>(),
        });
        h.update(payload.to_string().as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    /// Words of the objective in canonical form.
    pub fn objective_words(&self) -> Vec<Word> {
        self.objective.terms.keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitary_variables_get_adjoint_letters() {
        let sc = ScenarioBuilder::new("u")
            .party("A", Dim::Finite(2))
            .variable("U", VariableKind::Unitary, "A")
            .term("U", 1.0)
            .build()
            .unwrap();
        assert_eq!(sc.alphabet().len(), 2);
        assert_eq!(sc.alphabet().letter(1).name, "U*");
        // Hermitian part of U is (U + U*)/2
        assert_eq!(sc.objective.terms.len(), 2);
    }

    #[test]
    fn tracial_needs_single_finite_party() {
        let r = ScenarioBuilder::new("t")
            .party("A", Dim::Finite(2))
            .party("B", Dim::Finite(2))
            .state(StateModel::TracialUnnormalized)
            .build();
        assert!(r.is_err());
    }

    #[test]
    fn rank_layout_counts_qrac() {
        let sc = ScenarioBuilder::new("qrac21")
            .party("S", Dim::Finite(2))
            .state_prep("r00", "S", 1)
            .state_prep("r01", "S", 1)
            .state_prep("r10", "S", 1)
            .state_prep("r11", "S", 1)
            .variables(&["F0", "F1"], VariableKind::Projector, "S")
            .state(StateModel::TracialUnnormalized)
            .build()
            .unwrap();
        assert_eq!(sc.rank_classes().len(), 9);
        assert_eq!(sc.normalization(), 2.0);
    }

    #[test]
    fn povm_group_validation() {
        let r = ScenarioBuilder::new("p")
            .party("A", Dim::Finite(2))
            .variables(&["M0"], VariableKind::Projector, "A")
            .group("M", &["M0"], true)
            .build();
        assert!(r.is_err());
    }

    #[test]
    fn completeness_groups_prune_classes() {
        let sc = ScenarioBuilder::new("g")
            .party("A", Dim::Finite(2))
            .variables(&["G1", "G2", "G3", "G4"], VariableKind::Projector, "A")
            .group("G", &["G1", "G2", "G3", "G4"], false)
            .build()
            .unwrap();
        assert_eq!(sc.rank_classes().len(), 10);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let mk = |c: f64| {
            ScenarioBuilder::new("h")
                .party("A", Dim::Finite(2))
                .variables(&["X"], VariableKind::Dichotomic, "A")
                .term("X", c)
                .build()
                .unwrap()
        };
        assert_eq!(mk(1.0).hash(), mk(1.0).hash());
        assert_ne!(mk(1.0).hash(), mk(2.0).hash());
    }
}
