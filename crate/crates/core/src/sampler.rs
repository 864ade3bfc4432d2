//! Random finite-dimensional representations of a scenario inside a rank class.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{Polynomial, RankClass, Word};
use crate::error::{Error, Result};
use crate::linalg::{c, haar_unitary, identity, kron, random_projector, random_unit_vector, CMat, C64};
use crate::scenario::{LetterRole, Scenario, StateModel, VariableKind};

/// One draw: a matrix per letter on the joint space plus the state.
#[derive(Clone, Debug)]
pub struct Representation {
    /// Per letter, the operator on its own party's space (ancilla ⊗ system).
    pub local: Vec<CMat>,
    /// Per letter, the operator embedded in the joint space.
    pub ops: Vec<CMat>,
    /// Letter → party.
    pub party_of: Vec<usize>,
    /// Local dimension per party (ancilla included).
    pub local_dims: Vec<usize>,
    pub state: CMat,
    /// Pure joint state when the model has one.
    pub psi: Option<DVector<C64>>,
    pub seed: u64,
}

impl Representation {
    pub fn dim(&self) -> usize {
        self.state.nrows()
    }

    /// `1 ⊗ … ⊗ m ⊗ … ⊗ 1` with `m` on `party`.
    pub fn embed(&self, party: usize, m: &CMat) -> CMat {
        embed(&self.local_dims, party, m)
    }

    /// Replace a letter's local operator and refresh its joint embedding.
    pub fn set_local(&mut self, letter: usize, m: CMat) {
        self.ops[letter] = self.embed(self.party_of[letter], &m);
        self.local[letter] = m;
    }

    pub fn set_pure_state(&mut self, psi: DVector<C64>) {
        self.state = &psi * psi.adjoint();
        self.psi = Some(psi);
    }

    /// Operator of a word; the identity for `ε`.
    pub fn word_operator(&self, w: &Word) -> CMat {
        let n = self.dim();
        let mut acc: Option<CMat> = None;
        for &l in w.letters() {
            let op = &self.ops[l as usize];
            acc = Some(match acc {
                None => op.clone(),
                Some(a) => a * op,
            });
        }
        acc.unwrap_or_else(|| identity(n))
    }

    /// Operator of a polynomial.
    pub fn polynomial_operator(&self, p: &Polynomial) -> CMat {
        let n = self.dim();
        let mut acc = CMat::zeros(n, n);
        for (w, &v) in &p.terms {
            acc += self.word_operator(w) * v;
        }
        acc
    }

    /// `Re tr(ρ p(X))`.
    pub fn expectation(&self, p: &Polynomial) -> f64 {
        let mut s = C64::new(0.0, 0.0);
        for (w, &v) in &p.terms {
            s += v * (&self.state * self.word_operator(w)).trace();
        }
        s.re
    }
}

pub(crate) fn embed(dims: &[usize], party: usize, m: &CMat) -> CMat {
    let before: usize = dims[..party].iter().product();
    let after: usize = dims[party + 1..].iter().product();
    let mut out = m.clone();
    if before > 1 {
        out = kron(&identity(before), &out);
    }
    if after > 1 {
        out = kron(&out, &identity(after));
    }
    out
}

/// Independent seed for sample `index` of class `class` under `master`.
pub fn derive_seed(master: u64, class: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ class) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

fn ket0_projector(d: usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    m[(0, 0)] = c(1.0, 0.0);
    m
}

/// Per-variable ranks from a class, validated against the scenario's layout.
pub fn class_ranks(scenario: &Scenario, class: &RankClass) -> Result<Vec<Option<usize>>> {
    let (layout, owner) = scenario.rank_layout();
    if class.ranks.len() != owner.len() {
        return Err(Error::InvalidClass(format!(
            "class has {} entries, scenario has {} rank objects",
            class.ranks.len(),
            owner.len()
        )));
    }
    let mut ranks = vec![None; scenario.variables.len()];
    for (i, (&r, &v)) in class.ranks.iter().zip(&owner).enumerate() {
        if !layout.objects[i].admissible.contains(&r) {
            return Err(Error::InvalidClass(format!(
                "rank {r} not admissible for `{}`",
                layout.objects[i].label
            )));
        }
        ranks[v] = Some(r);
    }
    for (members, total) in &layout.sum_groups {
        let s: usize = members.iter().map(|&m| class.ranks[m]).sum();
        if s != *total {
            return Err(Error::InvalidClass(format!("group ranks sum to {s}, expected {total}")));
        }
    }
    Ok(ranks)
}

/// Draw a representation of an all-finite scenario inside `class`.
pub fn sample_representation(scenario: &Scenario, class: &RankClass, seed: u64) -> Result<Representation> {
    if !scenario.all_finite() {
        return Err(Error::InvalidScenario(
            "sampling requires every party to be finite-dimensional".into(),
        ));
    }
    let ranks = class_ranks(scenario, class)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = scenario.field == crate::scenario::Field::Real;
    let alphabet = scenario.alphabet();
    let n_letters = alphabet.len();
    let n_parties = scenario.parties.len();
    let sys: Vec<usize> = scenario.parties.iter().map(|p| p.dim.finite().unwrap()).collect();
    let anc: Vec<usize> = (0..n_parties).map(|p| scenario.ancilla_dim(p)).collect();
    let local_dims: Vec<usize> = (0..n_parties).map(|p| sys[p] * anc[p]).collect();

    let mut local: Vec<Option<CMat>> = vec![None; n_letters];
    for p in 0..n_parties {
        let d = sys[p];
        let a = anc[p];
        let lift = |m: &CMat| if a > 1 { kron(&identity(a), m) } else { m.clone() };
        let lift0 = |m: &CMat| if a > 1 { kron(&ket0_projector(a), m) } else { m.clone() };
        for (i, v) in scenario.variables.iter().enumerate() {
            if v.party != p || scenario.group_of(i).is_some() {
                continue;
            }
            let letter = scenario.letter_of_variable(i) as usize;
            match v.kind {
                VariableKind::Dichotomic => {
                    let pr = random_projector(&mut rng, d, ranks[i].unwrap(), real);
                    let x = pr * c(2.0, 0.0) - identity(d);
                    local[letter] = Some(lift(&x));
                }
                VariableKind::Projector => {
                    let pr = random_projector(&mut rng, d, ranks[i].unwrap(), real);
                    local[letter] = Some(lift(&pr));
                }
                VariableKind::StatePrep => {
                    let pr = random_projector(&mut rng, d, ranks[i].unwrap(), real);
                    local[letter] = Some(lift0(&pr));
                }
                VariableKind::Unitary => {
                    let u = haar_unitary(&mut rng, d, real);
                    local[letter + 1] = Some(lift(&u.adjoint()));
                    local[letter] = Some(lift(&u));
                }
            }
        }
        for g in &scenario.groups {
            if scenario.variables[g.members[0]].party != p {
                continue;
            }
            if g.povm {
                let u = haar_unitary(&mut rng, a * d, real);
                for (k, &m) in g.members.iter().enumerate() {
                    let cols = u.columns(k * d, d).into_owned();
                    local[scenario.letter_of_variable(m) as usize] = Some(&cols * cols.adjoint());
                }
            } else {
                let u = haar_unitary(&mut rng, d, real);
                let mut off = 0;
                for &m in &g.members {
                    let r = ranks[m].unwrap();
                    let cols = u.columns(off, r).into_owned();
                    off += r;
                    local[scenario.letter_of_variable(m) as usize] = Some(lift(&(&cols * cols.adjoint())));
                }
            }
        }
    }
    for (l, role) in scenario.roles().iter().enumerate() {
        if let LetterRole::Sector { party } = role {
            local[l] = Some(kron(&ket0_projector(anc[*party]), &identity(sys[*party])));
        }
    }
    let local: Vec<CMat> = local.into_iter().map(|m| m.expect("every letter sampled")).collect();
    let party_of: Vec<usize> = alphabet.letters().iter().map(|l| l.party).collect();
    let ops = local.iter().zip(&party_of).map(|(m, &p)| embed(&local_dims, p, m)).collect();

    let total: usize = local_dims.iter().product();
    let (state, psi) = match scenario.state {
        StateModel::TracialUnnormalized => {
            let s = if anc[0] > 1 { kron(&ket0_projector(anc[0]), &identity(sys[0])) } else { identity(sys[0]) };
            (s, None)
        }
        model => {
            let n_sys: usize = sys.iter().product();
            let sys_vec = match model {
                StateModel::MaximallyEntangled => {
                    let d = sys[0];
                    let mut v = DVector::<C64>::zeros(d * d);
                    for i in 0..d {
                        v[i * d + i] = c(1.0 / (d as f64).sqrt(), 0.0);
                    }
                    v
                }
                _ => random_unit_vector(&mut rng, n_sys, real),
            };
            let psi = embed_system_vector(&sys_vec, &sys, &local_dims);
            (&psi * psi.adjoint(), Some(psi))
        }
    };
    debug_assert_eq!(state.nrows(), total);
    Ok(Representation { local, ops, party_of, local_dims, state, psi, seed })
}

/// Embed a vector on `⊗ C^{D_p}` into `⊗ (C^{a_p} ⊗ C^{D_p})` with every ancilla in `|0⟩`.
pub fn embed_system_vector(v: &DVector<C64>, sys: &[usize], local_dims: &[usize]) -> DVector<C64> {
    if sys == local_dims {
        return v.clone();
    }
    let total: usize = local_dims.iter().product();
    let mut out = DVector::<C64>::zeros(total);
    let n = sys.len();
    for (flat, &val) in v.iter().enumerate() {
        let mut rem = flat;
        let mut idx = 0;
        let mut stride = 1;
        for p in (0..n).rev() {
            let i = rem % sys[p];
            rem /= sys[p];
            idx += i * stride;
            stride *= local_dims[p];
        }
        out[idx] = val;
    }
    out
}

/// Bipartite (or multipartite) sampling with tensor-embedded parties.
pub fn sample_bell_representation(scenario: &Scenario, class: &RankClass, seed: u64) -> Result<Representation> {
    if scenario.finite_parties().len() < 2 {
        return Err(Error::InvalidScenario("Bell sampling needs at least two finite parties".into()));
    }
    sample_representation(scenario, class, seed)
}

/// Sampling of a scenario with POVM groups realised on ancilla-extended spaces.
pub fn sample_dilated_povm_representation(
    scenario: &Scenario,
    class: &RankClass,
    seed: u64,
) -> Result<Representation> {
    if !scenario.is_dilated() {
        return Err(Error::InvalidScenario("scenario declares no POVM group".into()));
    }
    sample_representation(scenario, class, seed)
}

/// Reduced POVM element `⟨0|M|0⟩` on the system factor of a dilated party.
pub fn induced_effect(local: &CMat, ancilla: usize) -> CMat {
    let d = local.nrows() / ancilla;
    local.view((0, 0), (d, d)).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::RankClass;
    use crate::linalg::{max_abs, min_eigenvalue, rank};
    use crate::scenario::{Dim, ScenarioBuilder, StateModel, VariableKind};

    fn chsh(d: usize) -> Scenario {
        ScenarioBuilder::new("chsh")
            .party("A", Dim::Finite(d))
            .party("B", Dim::Finite(d))
            .variables(&["A0", "A1"], VariableKind::Dichotomic, "A")
            .variables(&["B0", "B1"], VariableKind::Dichotomic, "B")
            .term("A0 B0", 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn dichotomic_from_rank_one() {
        let sc = chsh(2);
        let rep = sample_representation(&sc, &RankClass::new(vec![1, 1, 1, 1]), 3).unwrap();
        let x = &rep.local[0];
        assert!(max_abs(&(x * x - identity(2))) < 1e-12);
        assert!(x.trace().norm() < 1e-12);
        let ab = &rep.ops[0] * &rep.ops[2] - &rep.ops[2] * &rep.ops[0];
        assert!(max_abs(&ab) < 1e-12);
        assert!((rep.state.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_out_of_range_is_rejected() {
        let sc = chsh(2);
        assert!(matches!(
            sample_representation(&sc, &RankClass::new(vec![3, 1, 1, 1]), 0),
            Err(Error::InvalidClass(_))
        ));
        assert!(sample_representation(&sc, &RankClass::new(vec![1, 1]), 0).is_err());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let sc = chsh(2);
        let cl = RankClass::new(vec![1, 0, 1, 2]);
        let a = sample_representation(&sc, &cl, 11).unwrap();
        let b = sample_representation(&sc, &cl, 11).unwrap();
        assert_eq!(a.ops, b.ops);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn maximally_entangled_d3() {
        let sc = ScenarioBuilder::new("me")
            .party("A", Dim::Finite(3))
            .party("B", Dim::Finite(3))
            .variables(&["A0"], VariableKind::Dichotomic, "A")
            .variables(&["B0"], VariableKind::Dichotomic, "B")
            .state(StateModel::MaximallyEntangled)
            .build()
            .unwrap();
        let rep = sample_representation(&sc, &RankClass::new(vec![1, 2]), 0).unwrap();
        let psi = rep.psi.unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-14);
        for i in 0..3 {
            assert!((psi[i * 3 + i].re - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn dilated_povm_is_complete_and_generic() {
        let sc = ScenarioBuilder::new("povm")
            .party("A", Dim::Finite(2))
            .state_prep("r", "A", 1)
            .variables(&["M0", "M1"], VariableKind::Projector, "A")
            .group("M", &["M0", "M1"], true)
            .state(StateModel::TracialUnnormalized)
            .sector_projectors(true)
            .build()
            .unwrap();
        assert_eq!(sc.alphabet().len(), 4);
        let mut nonprojective = 0;
        for seed in 0..10 {
            let rep = sample_dilated_povm_representation(&sc, &RankClass::new(vec![1]), seed).unwrap();
            let sum = &rep.local[1] + &rep.local[2];
            assert!(max_abs(&(sum - identity(4))) < 1e-12);
            // tr((|0⟩⟨0| ⊗ ρ) M_a) = tr(E_a ρ)
            let rho = induced_effect(&rep.local[0], 2);
            let e0 = induced_effect(&rep.local[1], 2);
            let lhs = (&rep.local[0] * &rep.local[1]).trace();
            let rhs = (&rho * &e0).trace();
            assert!((lhs - rhs).norm() < 1e-12);
            assert!(min_eigenvalue(&e0) > -1e-12);
            if max_abs(&(&e0 * &e0 - &e0)) > 1e-3 {
                nonprojective += 1;
            }
            assert_eq!(rank(&rep.local[0], 1e-8), 1);
        }
        assert_eq!(nonprojective, 10);
    }

    #[test]
    fn tracial_state_is_identity() {
        let sc = ScenarioBuilder::new("t")
            .party("A", Dim::Finite(2))
            .state_prep("r", "A", 1)
            .state(StateModel::TracialUnnormalized)
            .build()
            .unwrap();
        let rep = sample_representation(&sc, &RankClass::new(vec![1]), 0).unwrap();
        assert!((rep.state.trace().re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
    }
}
