use std::path::PathBuf;

use boundary_core::trust::{
    audit_millipede, build_millipede, run_marketplace, run_selective, selective_loss, welfare_loss,
    AgentModel, ExpBase, Marketplace, MillipedeOptions, Scenario, SelectiveSettings,
};
use boundary_core::{Probability, Seed};
use proptest::prelude::*;

const FIXTURES: [&str; 4] = ["single", "two_by_two", "four_by_four", "substituting"];

fn load(name: &str) -> Marketplace {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/market")
        .join(format!("{name}.toml"));
    let text = std::fs::read_to_string(&path).unwrap();
    toml::from_str(&text).unwrap()
}

fn p(x: f64) -> Probability {
    Probability::new(x).unwrap()
}

fn agents(m: &Marketplace, eps1: f64, shift: f64) -> Vec<AgentModel> {
    vec![
        AgentModel {
            eps1: p(eps1),
            prompt_shift: shift,
            k_star: 2,
        };
        m.n_agents()
    ]
}

#[test]
fn fixtures_build_and_pass_audit() {
    for name in FIXTURES {
        let m = load(name);
        let t = build_millipede(&m, &MillipedeOptions::default()).unwrap();
        let a = audit_millipede(&t, &m);
        assert!(a.passed(), "{name}: {:?}\n{}", a.issues, t.dump(&m));
        assert_eq!(a.nodes_checked, t.nodes.len());
        assert!(a.min_margin >= 0.0);
    }
}

#[test]
fn four_by_four_gives_each_specialist_its_task() {
    let m = load("four_by_four");
    let t = build_millipede(&m, &MillipedeOptions::default()).unwrap();
    let greedy = &t.greedy_terminal().allocation;
    assert_eq!(greedy, &vec![Some(0), Some(1), Some(2), Some(3)]);
}

#[test]
fn rational_play_has_no_violations() {
    for name in FIXTURES {
        let m = load(name);
        let t = build_millipede(&m, &MillipedeOptions::default()).unwrap();
        for seed in 0..3 {
            let r = run_marketplace(&t, &m, &agents(&m, 0.0, 0.0), 2000, Seed(seed)).unwrap();
            assert_eq!(r.violation_rate.estimate, 0.0, "{name}");
            assert_eq!(r.welfare, m.welfare(&t.greedy_terminal().allocation));
        }
    }
}

#[test]
fn shift_below_guard_adds_no_violations() {
    let m = load("four_by_four");
    let o = MillipedeOptions::default();
    let t = build_millipede(&m, &o).unwrap();
    let shift = 0.05 * t.delta_min;
    let r = run_marketplace(&t, &m, &agents(&m, 0.138, shift), 20_000, Seed(11)).unwrap();
    // within-horizon flips alone, well under the eps1 + eps2 bound
    assert!(r.violation_rate.contains(0.138), "{:?}", r.violation_rate);
    assert!(r.violation_rate.ci_low <= 0.138 + 0.019);
}

#[test]
fn selective_verification_closed_forms() {
    let m = load("substituting");
    let t = build_millipede(&m, &MillipedeOptions::default()).unwrap();
    for (alpha, want) in [
        (
            0.3,
            selective_loss(p(0.16), p(0.3), p(0.1), 128.0, ExpBase::Two),
        ),
        (
            0.0,
            0.16 + welfare_loss(Scenario::NoVerification, &m, p(0.16), 128.0, ExpBase::Two)
                .unwrap()
                .total,
        ),
        (1.0, 0.16),
    ] {
        let s = SelectiveSettings {
            alpha: p(alpha),
            kappa: 128.0,
            base: ExpBase::Two,
            eps: p(0.16),
        };
        let r = run_selective(&m, &t, &s, 20_000, Seed(5)).unwrap();
        assert!((r.closed_form_loss - want).abs() < 1e-12);
        assert!(
            (r.loss.estimate - want).abs() <= 3.0 * r.loss.width(),
            "alpha {alpha}: {:?} vs {want}",
            r.loss
        );
        assert!((r.verified_fraction - alpha).abs() < 0.02);
    }
}

fn small_market() -> impl Strategy<Value = Marketplace> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0.1f64..2.0, m),
            prop::collection::vec(prop::collection::vec(0.0f64..=1.0, m), n),
            prop::collection::vec(0.0f64..2.0, n),
        )
            .prop_map(move |(values, competence, budgets)| Marketplace {
                gaps: vec![0.05; values.len()],
                values,
                competence,
                cost: vec![],
                budgets,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn built_trees_survive_exhaustive_audit(m in small_market()) {
        if let Ok(t) = build_millipede(&m, &MillipedeOptions::default()) {
            let a = audit_millipede(&t, &m);
            prop_assert!(a.passed(), "{:?}", a.issues);
            prop_assert!(t.nodes.iter().all(|n| n.margin >= 0.0));
        }
    }
}
