//! Moment and localizing matrices of sampled representations, realification,
//! and the symbolic `N_u` basis of unconstrained parties.

use std::collections::{BTreeMap, HashMap};

use crate::algebra::{Alphabet, Polynomial, Word};
use crate::error::{Error, Result};
use crate::linalg::{identity, imag_part, real_part, to_complex, CMat, RMat, C64};
use crate::sampler::Representation;

/// `G_{u,v} = tr(ρ u† v)` over an ordered word index.
#[derive(Clone, Debug)]
pub struct MomentMatrix {
    pub index: Vec<Word>,
    pub entries: CMat,
}

impl MomentMatrix {
    pub fn size(&self) -> usize {
        self.index.len()
    }

    pub fn position(&self, w: &Word) -> Option<usize> {
        self.index.iter().position(|x| x == w)
    }
}

/// Operators of all index words, sharing prefixes.
pub fn word_operators(rep: &Representation, index: &[Word]) -> Vec<CMat> {
    let mut cache: HashMap<Vec<u16>, CMat> = HashMap::new();
    let n = rep.dim();
    index
        .iter()
        .map(|w| {
            let letters = w.letters();
            if letters.is_empty() {
                return identity(n);
            }
            // longest cached prefix
            let mut start = letters.len();
            while start > 0 && !cache.contains_key(&letters[..start]) {
                start -= 1;
            }
            let mut acc = if start == 0 { identity(n) } else { cache[&letters[..start]].clone() };
            for j in start..letters.len() {
                acc = if j == 0 { rep.ops[letters[0] as usize].clone() } else { acc * &rep.ops[letters[j] as usize] };
                cache.insert(letters[..=j].to_vec(), acc.clone());
            }
            acc
        })
        .collect()
}

/// Stack `vec(u(X))` of every word as columns.
fn stacked_columns(ops: &[CMat]) -> CMat {
    let n2 = ops.first().map(|m| m.len()).unwrap_or(0);
    let mut c = CMat::zeros(n2, ops.len());
    for (j, op) in ops.iter().enumerate() {
        c.column_mut(j).copy_from_slice(op.as_slice());
    }
    c
}

fn check_dims(rep: &Representation) -> Result<()> {
    let n = rep.dim();
    if rep.ops.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(Error::DimensionMismatch(format!("operators do not match the {n}-dimensional state")));
    }
    Ok(())
}

/// Moment matrix via `G = C† (ρᵀ ⊗ 1) C` where `C` stacks `vec(u(X))`
/// column-wise; `(ρᵀ ⊗ 1) vec(v) = vec(v ρ)`.
pub fn build_moment_matrix(rep: &Representation, index: &[Word]) -> Result<MomentMatrix> {
    check_dims(rep)?;
    let ops = word_operators(rep, index);
    let c = stacked_columns(&ops);
    let right: Vec<CMat> = ops.iter().map(|v| v * &rep.state).collect();
    let k = stacked_columns(&right);
    let mut g = c.adjoint() * k;
    hermitize(&mut g);
    Ok(MomentMatrix { index: index.to_vec(), entries: g })
}

/// Entry-by-entry `tr(ρ u† v)`.
pub fn build_moment_matrix_direct(rep: &Representation, index: &[Word]) -> Result<MomentMatrix> {
    check_dims(rep)?;
    let w = index.len();
    let mut g = CMat::zeros(w, w);
    for (i, u) in index.iter().enumerate() {
        let uo = rep.word_operator(u);
        for (j, v) in index.iter().enumerate() {
            let vo = rep.word_operator(v);
            g[(i, j)] = (&rep.state * uo.adjoint() * vo).trace();
        }
    }
    Ok(MomentMatrix { index: index.to_vec(), entries: g })
}

fn hermitize(g: &mut CMat) {
    let n = g.nrows();
    for i in 0..n {
        g[(i, i)].im = 0.0;
        for j in i + 1..n {
            let v = (g[(i, j)] + g[(j, i)].conj()) * 0.5;
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
}

/// `M(q)_{u,v} = Σ_w q_w tr(ρ u† w v)` over the index words of degree at
/// most `k − ⌈deg q / 2⌉`.
pub fn build_localizing_matrix(rep: &Representation, q: &Polynomial, index: &[Word], k: usize) -> Result<MomentMatrix> {
    check_dims(rep)?;
    let half = q.degree().div_ceil(2);
    let cut = k.saturating_sub(half);
    let trunc: Vec<Word> = index.iter().filter(|w| w.degree() <= cut).cloned().collect();
    let qop = rep.polynomial_operator(q);
    let ops = word_operators(rep, &trunc);
    let c = stacked_columns(&ops);
    let right: Vec<CMat> = ops.iter().map(|v| &qop * v * &rep.state).collect();
    let kk = stacked_columns(&right);
    let mut g = c.adjoint() * kk;
    hermitize(&mut g);
    Ok(MomentMatrix { index: trunc, entries: g })
}

/// `(G + conj G)/2`.
pub fn realify(g: &MomentMatrix) -> MomentMatrix {
    MomentMatrix { index: g.index.clone(), entries: to_complex(&real_part(&g.entries)) }
}

/// Index pairs grouped by the reduced word `u† v` they carry.
#[derive(Clone, Debug)]
pub struct SymbolicMomentBasis {
    pub index: Vec<Word>,
    /// Distinct reduced words, graded-lex order.
    pub words: Vec<Word>,
    /// Row-major `index × index` table of word ids.
    pub cells: Vec<usize>,
    /// Word id of each word's adjoint.
    pub adjoint: Vec<usize>,
}

impl SymbolicMomentBasis {
    pub fn size(&self) -> usize {
        self.index.len()
    }

    pub fn word_id(&self, u: &Word) -> Option<usize> {
        self.words.binary_search(u).ok()
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        self.cells[i * self.index.len() + j]
    }

    /// The 0/1 matrix `N_u`.
    pub fn matrix(&self, u: usize) -> RMat {
        let n = self.index.len();
        RMat::from_fn(n, n, |i, j| if self.cell(i, j) == u { 1.0 } else { 0.0 })
    }

    /// Words up to adjoint: `(u, u†)` with `u ≤ u†`.
    pub fn adjoint_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.words.len()).filter(|&u| u <= self.adjoint[u]).map(|u| (u, self.adjoint[u])).collect()
    }

    /// Some index pair `(i, j)` with `reduce(index_i† index_j) = u`.
    pub fn locate(&self, u: usize) -> Option<(usize, usize)> {
        self.cells.iter().position(|&c| c == u).map(|p| (p / self.index.len(), p % self.index.len()))
    }
}

/// Symbolic basis over the canonical words of degree at most `k`.
pub fn build_symbolic_basis(alphabet: &Alphabet, k: usize) -> SymbolicMomentBasis {
    symbolic_basis_from_index(alphabet, alphabet.enumerate_words(k, true))
}

pub fn symbolic_basis_from_index(alphabet: &Alphabet, index: Vec<Word>) -> SymbolicMomentBasis {
    let n = index.len();
    let adj: Vec<Word> = index.iter().map(|w| alphabet.adjoint(w)).collect();
    let mut raw = Vec::with_capacity(n * n);
    let mut set = BTreeMap::new();
    for a in adj.iter() {
        for w in index.iter() {
            let u = alphabet.reduce(&a.concat(w));
            set.entry(u.clone()).or_insert(());
            raw.push(u);
        }
    }
    let words: Vec<Word> = set.into_keys().collect();
    let cells = raw.iter().map(|u| words.binary_search(u).unwrap()).collect();
    let adjoint = words
        .iter()
        .map(|u| {
            let a = alphabet.reduce(&alphabet.adjoint(u));
            words.binary_search(&a).expect("index pairs are closed under adjoint")
        })
        .collect();
    SymbolicMomentBasis { index, words, cells, adjoint }
}

/// Orthonormal basis (Frobenius) of the span of real matrices.
pub fn orthonormal_span(mats: &[RMat], tol: f64) -> Vec<RMat> {
    let mut out: Vec<RMat> = Vec::new();
    for m in mats {
        let scale = m.norm();
        if scale == 0.0 {
            continue;
        }
        let mut v = m.clone();
        for _ in 0..2 {
            for q in &out {
                let d = q.dot(&v);
                v -= q * d;
            }
        }
        let r = v.norm();
        if r > tol * scale {
            out.push(v / r);
        }
    }
    out
}

/// Real spanning set of the hybrid cone: `Re(M)⊗(N_u + N_u†)` and
/// `−Im(M)⊗(N_u − N_u†)`, where `M` runs over orthonormal bases of the
/// spans of `{Re M_j}` and `{Im M_j}`.
pub fn build_hybrid_elements(finite_basis: &[CMat], symbolic: &SymbolicMomentBasis) -> Vec<RMat> {
    let (re, im) = hybrid_factor_bases(finite_basis);
    let mut out = Vec::new();
    for (u, ua) in symbolic.adjoint_pairs() {
        let sym = symbolic.matrix(u) + symbolic.matrix(ua);
        for r in &re {
            out.push(r.kronecker(&sym));
        }
        if u != ua {
            let anti = symbolic.matrix(u) - symbolic.matrix(ua);
            for i in &im {
                out.push(-i.kronecker(&anti));
            }
        }
    }
    out
}

/// Orthonormal bases of the real and imaginary parts of a Hermitian span.
pub fn hybrid_factor_bases(finite_basis: &[CMat]) -> (Vec<RMat>, Vec<RMat>) {
    let re: Vec<RMat> = finite_basis.iter().map(real_part).collect();
    let im: Vec<RMat> = finite_basis.iter().map(imag_part).collect();
    (orthonormal_span(&re, 1e-9), orthonormal_span(&im, 1e-9))
}

/// Entry of a moment matrix that carries word `w`, i.e. indices `(i, j)` with
/// `reduce(index_i† index_j) = w`, preferring `(ε, w)`.
pub fn locate_word(alphabet: &Alphabet, index: &[Word], w: &Word) -> Option<(usize, usize)> {
    let target = alphabet.reduce(w);
    if let Some(j) = index.iter().position(|x| alphabet.reduce(x) == target) {
        if let Some(e) = index.iter().position(|x| x.is_identity()) {
            return Some((e, j));
        }
    }
    for (i, a) in index.iter().enumerate() {
        let aa = alphabet.adjoint(a);
        for (j, b) in index.iter().enumerate() {
            if alphabet.reduce(&aa.concat(b)) == target {
                return Some((i, j));
            }
        }
    }
    None
}

/// Scalar value of `Σ p_w G_{loc(w)}` on a moment matrix.
pub fn objective_on(alphabet: &Alphabet, g: &MomentMatrix, p: &Polynomial) -> Result<f64> {
    let mut s = C64::new(0.0, 0.0);
    for (w, &v) in &p.terms {
        let (i, j) = locate_word(alphabet, &g.index, w).ok_or_else(|| Error::MissingWord(alphabet.format_word(w)))?;
        s += v * g.entries[(i, j)];
    }
    Ok(s.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{RankClass, Rule};
    use crate::linalg::{max_abs, min_eigenvalue};
    use crate::sampler::sample_representation;
    use crate::scenario::{Dim, ScenarioBuilder, VariableKind};

    fn temporal(d: usize) -> crate::scenario::Scenario {
        ScenarioBuilder::new("t")
            .party("A", Dim::Finite(d))
            .variables(&["X00", "X01", "X10", "X11", "Y1", "Y2"], VariableKind::Dichotomic, "A")
            .build()
            .unwrap()
    }

    #[test]
    fn vectorized_matches_direct() {
        let sc = temporal(2);
        let index = sc.alphabet().enumerate_words(2, false);
        let rep = sample_representation(&sc, &RankClass::new(vec![1; 6]), 5).unwrap();
        let a = build_moment_matrix(&rep, &index).unwrap();
        let b = build_moment_matrix_direct(&rep, &index).unwrap();
        assert!(max_abs(&(&a.entries - &b.entries)) < 1e-10);
        assert!((a.entries[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(min_eigenvalue(&a.entries) > -1e-9 * a.entries.norm());
    }

    #[test]
    fn scalar_representation_gives_all_ones() {
        let sc = temporal(1);
        let index = sc.alphabet().enumerate_words(1, false);
        // rank 1 of (X+1)/2 in D=1 means X = +1
        let rep = sample_representation(&sc, &RankClass::new(vec![1; 6]), 0).unwrap();
        let g = build_moment_matrix(&rep, &index).unwrap();
        assert!(g.entries.iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn dichotomic_localizing_vanishes() {
        let sc = temporal(2);
        let index = sc.alphabet().enumerate_words(2, false);
        let rep = sample_representation(&sc, &RankClass::new(vec![1; 6]), 1).unwrap();
        let x = sc.alphabet().parse_word("X00").unwrap();
        let mut q = Polynomial::constant(1.0);
        q.add(x.concat(&x), C64::new(-1.0, 0.0));
        let l = build_localizing_matrix(&rep, &q, &index, 2).unwrap();
        assert_eq!(l.size(), 7);
        assert!(max_abs(&l.entries) < 1e-12);
    }

    #[test]
    fn constant_localizing_is_scaled_moment() {
        let sc = temporal(2);
        let index = sc.alphabet().enumerate_words(1, false);
        let rep = sample_representation(&sc, &RankClass::new(vec![1; 6]), 2).unwrap();
        let q = Polynomial::constant(3.0);
        let l = build_localizing_matrix(&rep, &q, &index, 1).unwrap();
        let g = build_moment_matrix(&rep, &index).unwrap();
        assert!(max_abs(&(&l.entries - &g.entries * C64::new(3.0, 0.0))) < 1e-12);
    }

    #[test]
    fn symbolic_basis_single_dichotomic() {
        let ab = Alphabet::hermitian(&["X"], Rule::Dichotomic);
        let s = build_symbolic_basis(&ab, 1);
        assert_eq!(s.words.len(), 2);
        let ne = s.matrix(0);
        let nx = s.matrix(1);
        assert_eq!(ne, RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(nx, RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn symbolic_partition() {
        let ab = Alphabet::hermitian(&["A", "B", "C"], Rule::Idempotent);
        let s = build_symbolic_basis(&ab, 2);
        let n = s.size();
        let mut sum = RMat::zeros(n, n);
        for u in 0..s.words.len() {
            sum += s.matrix(u);
        }
        assert!(sum.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn hybrid_elements_are_symmetric() {
        let ab = Alphabet::hermitian(&["X", "Y"], Rule::Dichotomic);
        let s = build_symbolic_basis(&ab, 1);
        let sc = ScenarioBuilder::new("a")
            .party("A", Dim::Finite(2))
            .variables(&["A0", "A1"], VariableKind::Dichotomic, "A")
            .build()
            .unwrap();
        let index = sc.alphabet().enumerate_words(1, false);
        let mats: Vec<CMat> = (0..6)
            .map(|i| {
                let rep = sample_representation(&sc, &RankClass::new(vec![1, 1]), i).unwrap();
                build_moment_matrix(&rep, &index).unwrap().entries
            })
            .collect();
        let (re, im) = hybrid_factor_bases(&mats);
        let els = build_hybrid_elements(&mats, &s);
        let pairs = s.adjoint_pairs();
        let non_sa = pairs.iter().filter(|(u, v)| u != v).count();
        assert_eq!(els.len(), re.len() * pairs.len() + im.len() * non_sa);
        for e in &els {
            assert!((e - e.transpose()).amax() < 1e-14);
        }
    }
}
