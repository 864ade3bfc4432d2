use std::path::PathBuf;

use dimbound::io::ScenarioFile;
use dimbound::linalg::{max_abs, min_eigenvalue};
use dimbound::moment::build_moment_matrix;
use dimbound::relax::{class_basis, sweep_classes, IndexSpec, SweepConfig};
use dimbound::sampler::sample_representation;
use dimbound::solver::SolveStatus;
use dimbound::verify::{brute_force_classical, check_standard_identity, seesaw_with, SeesawConfig};
use dimbound::{Dim, RankClass, Scenario, ScenarioBuilder, VariableKind};
use proptest::prelude::*;

fn example(name: &str) -> ScenarioFile {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "examples", &format!("{name}.scn")].iter().collect();
    ScenarioFile::load(&path).unwrap()
}

const EXAMPLES: &[&str] = &[
    "chsh_d2",
    "chsh_hybrid",
    "chsh_inf",
    "i3322_d2",
    "i3322c2_d2",
    "i3322c2_d3",
    "qrac21_d2",
    "qrac31_d2",
    "qrac31_d2_real",
    "temporal_d2",
    "temporal_inf",
    "v4prime_d2",
    "v4prime_povm_d2",
];

fn chsh(d: usize, coeffs: [f64; 4]) -> Scenario {
    ScenarioBuilder::new("chsh")
        .party("A", Dim::Finite(d))
        .party("B", Dim::Finite(d))
        .variables(&["A1", "A2"], VariableKind::Dichotomic, "A")
        .variables(&["B1", "B2"], VariableKind::Dichotomic, "B")
        .term("A1 B1", coeffs[0])
        .term("A1 B2", coeffs[1])
        .term("A2 B1", coeffs[2])
        .term("A2 B2", coeffs[3])
        .build()
        .unwrap()
}

fn class(label: &str) -> RankClass {
    RankClass::new(label.chars().map(|c| c.to_digit(10).unwrap() as usize).collect())
}

#[test]
fn bundled_examples_round_trip() {
    for name in EXAMPLES {
        let f = example(name);
        let again = ScenarioFile::parse(&f.to_toml().unwrap()).unwrap();
        assert_eq!(f.scenario, again.scenario, "{name}");
        assert_eq!(f.run, again.run, "{name}");
    }
}

#[test]
fn fixed_seed_reproduces_sweep() {
    let f = example("chsh_d2");
    let cfg = SweepConfig { cache_dir: None, ..f.run.sweep_config() };
    let a = sweep_classes(&f.scenario, &cfg).unwrap();
    let b = sweep_classes(&f.scenario, &cfg).unwrap();
    assert_eq!(a.per_class.len(), b.per_class.len());
    for (x, y) in a.per_class.iter().zip(&b.per_class) {
        assert_eq!(x.class, y.class);
        assert_eq!(x.n, y.n);
        if let (Some(u), Some(v)) = (x.value, y.value) {
            assert!((u - v).abs() <= 1e-7, "{}: {u} vs {v}", x.class);
        }
    }
}

#[test]
fn degenerate_projector_class_solves() {
    // the support matrix of this class once sent the eigensolver to NaN
    let f = example("i3322_d2");
    let cfg = SweepConfig {
        cache_dir: None,
        index: IndexSpec::Canonical(3),
        classes: Some(vec!["001202".into()]),
        ..f.run.sweep_config()
    };
    let r = sweep_classes(&f.scenario, &cfg).unwrap();
    let o = &r.per_class[0];
    assert!(o.support > 0);
    assert_eq!(o.status, Some(SolveStatus::Optimal));
    assert!((o.value.unwrap() + 1.0).abs() < 1e-6, "{:?}", o.value);
}

#[test]
fn projector_i3322_classical_value() {
    let f = example("i3322_d2");
    assert_eq!(brute_force_classical(&f.scenario.with_dimension(1).unwrap()).unwrap(), 0.0);
}

#[test]
fn span_dimension_grows_with_level() {
    let sc = chsh(2, [1.0, 1.0, 1.0, -1.0]);
    let cfg = SweepConfig { cache_dir: None, ..Default::default() };
    for label in ["1111", "1211", "0121"] {
        let c = class(label);
        let n: Vec<usize> = (1..=3)
            .map(|k| {
                let index = IndexSpec::Level(k).words(sc.alphabet()).unwrap();
                class_basis(&sc, &c, &index, &cfg, true, &format!("k{k}")).unwrap().n()
            })
            .collect();
        assert!(n.windows(2).all(|w| w[0] <= w[1]), "{label}: {n:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coefficients_round_trip(c in prop::array::uniform4(-3.0f64..3.0)) {
        let f = ScenarioFile { scenario: chsh(2, c), run: Default::default() };
        let again = ScenarioFile::parse(&f.to_toml().unwrap()).unwrap();
        prop_assert_eq!(f.scenario, again.scenario);
    }

    #[test]
    fn sampled_moment_matrices_are_psd(seed in any::<u64>(), r in prop::array::uniform4(0usize..=2)) {
        let sc = chsh(2, [1.0; 4]);
        let index = IndexSpec::Level(2).words(sc.alphabet()).unwrap();
        let rep = sample_representation(&sc, &RankClass::new(r.to_vec()), seed).unwrap();
        let g = build_moment_matrix(&rep, &index).unwrap().entries;
        let scale = max_abs(&g);
        prop_assert!(max_abs(&(&g - g.adjoint())) <= 1e-12 * scale);
        prop_assert!(min_eigenvalue(&g) >= -1e-9 * scale);
    }

    #[test]
    fn qrac_moment_matrices_are_psd(seed in any::<u64>()) {
        let f = example("qrac21_d2");
        let index = f.run.index_spec().words(f.scenario.alphabet()).unwrap();
        let rep = sample_representation(&f.scenario, &class("111111"), seed).unwrap();
        let g = build_moment_matrix(&rep, &index).unwrap().entries;
        let scale = max_abs(&g);
        prop_assert!(max_abs(&(&g - g.adjoint())) <= 1e-12 * scale);
        prop_assert!(min_eigenvalue(&g) >= -1e-9 * scale);
    }

    #[test]
    fn seesaw_trajectory_is_monotone(seed in 0u64..1000) {
        let sc = chsh(2, [1.0, 1.0, 1.0, -1.0]);
        let cfg = SeesawConfig { restarts: 2, iters: 200, seed, ..Default::default() };
        let out = seesaw_with(&sc, 2, &cfg).unwrap();
        prop_assert!(out.trajectory.windows(2).all(|w| w[1] >= w[0] - 1e-10), "{:?}", out.trajectory);
        prop_assert!(out.value <= 2.0 * 2f64.sqrt() + 1e-9);
    }

    #[test]
    fn standard_identity_vanishes(seed in any::<u64>(), d in 1usize..=3) {
        let rep = check_standard_identity(d, 4, seed).unwrap();
        prop_assert!(rep.max_residual <= 1e-12);
        prop_assert!(rep.control_residual > 1e-3);
    }
}
