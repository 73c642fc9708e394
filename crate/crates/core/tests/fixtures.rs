//! Tests driven by the bundled model files in `fixtures/`.

use causal_info::causal::{
    causal_entropy, causal_entropy_methods, causal_information_gain, CausalQuery, HcMethod,
};
use causal_info::dsl::{parse_scm, serialize_scm};
use causal_info::info::entropy;
use causal_info::intervene::{covariate_specific, post_dist};
use causal_info::rational::rat;
use causal_info::{Intervention, Protocol, Rational, Scm, VarId};

fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn load(name: &str) -> Scm {
    parse_scm(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn additive_chain_fixture_is_canonical_text() {
    let text = fixture("paper_ex1.scm");
    let model = parse_scm(&text).unwrap();
    assert_eq!(serialize_scm(&model), text);
}

#[test]
fn all_fixtures_reach_a_serialization_fixpoint() {
    for name in ["paper_ex1.scm", "gate.scm", "dpi_chain.scm"] {
        let first = load(name);
        let canon = serialize_scm(&first);
        let second = parse_scm(&canon).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(second, first, "{name} reparse changed the model");
        assert_eq!(serialize_scm(&second), canon, "{name} not a fixpoint");
    }
}

#[test]
fn all_fixtures_pass_the_inference_cross_check() {
    for name in ["paper_ex1.scm", "gate.scm", "dpi_chain.scm"] {
        let model = load(name);
        let all: Vec<String> = model
            .endogenous()
            .map(|v| v.id.as_str().to_owned())
            .collect();
        assert_eq!(
            model.entailed(&all).unwrap(),
            model.entailed_oracle(&all).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn additive_chain_post_intervention_table() {
    let model = load("paper_ex1.scm");
    let atomic = |v: usize| {
        post_dist(
            &model,
            &Intervention::Atomic {
                target: VarId::new("X"),
                value: v,
            },
            &["Y"],
        )
        .unwrap()
    };
    assert_eq!(
        atomic(0).masses(),
        &[rat(1, 2), rat(1, 2), Rational::from_integer(0.into())]
    );
    assert_eq!(
        atomic(1).masses(),
        &[Rational::from_integer(0.into()), rat(1, 2), rat(1, 2)]
    );
    let protocol = Protocol::new(&model, "X", vec![rat(2, 3), rat(1, 3)]).unwrap();
    let mixed = post_dist(&model, &Intervention::Stochastic(protocol.clone()), &["Y"]).unwrap();
    assert_eq!(mixed.masses(), &[rat(1, 3), rat(1, 2), rat(1, 6)]);

    // Conditioning the stochastic joint on the intervened value recovers
    // each atomic column exactly.
    for x in 0..2 {
        assert_eq!(covariate_specific(&model, &protocol, x, &["Y"]).unwrap(), atomic(x));
    }
}

#[test]
fn additive_chain_entropies() {
    let model = load("paper_ex1.scm");
    let protocol = Protocol::new(&model, "X", vec![rat(2, 3), rat(1, 3)]).unwrap();
    let q = CausalQuery::new(&model, &["Y"], "X", protocol.clone()).unwrap();
    let methods = causal_entropy_methods(&q).unwrap();
    assert!((methods.definition - 1.0).abs() < 1e-12);
    assert!(methods.max_pairwise_slack() < 1e-9);

    let stoch = post_dist(&model, &Intervention::Stochastic(protocol), &["Y"]).unwrap();
    let expected = 3f64.log2() / 3.0 + 0.5 + 6f64.log2() / 6.0;
    assert!((entropy(&stoch).0 - expected).abs() < 1e-9);
}

#[test]
fn gate_fixture_numbers() {
    let model = load("gate.scm");
    let py = model.entailed(&["Y"]).unwrap();
    assert_eq!(py.masses(), &[rat(19, 20), rat(1, 20)]);

    let protocol = Protocol::new(&model, "X", vec![rat(1, 2), rat(1, 2)]).unwrap();
    let q = CausalQuery::new(&model, &["Y"], "X", protocol).unwrap();
    let hc = causal_entropy(&q, HcMethod::Definition).unwrap();
    assert!((hc.0 - 0.5).abs() < 1e-12);

    let h = entropy(&py);
    assert!((h.0 - 0.286_397).abs() < 1e-6);
    let ic = causal_information_gain(&q).unwrap();
    assert!((ic.0 - (h.0 - 0.5)).abs() < 1e-12);
    assert!(ic.0 < 0.0);
    assert!(hc.0 > h.0);

    // Pinning X open leaves Y a fair coin; pinning it closed pins Y.
    let open = post_dist(
        &model,
        &Intervention::Atomic {
            target: VarId::new("X"),
            value: 1,
        },
        &["Y"],
    )
    .unwrap();
    assert_eq!(open.masses(), &[rat(1, 2), rat(1, 2)]);
    assert!(model.has_total_causal_effect("X", "Y").unwrap());
}

#[test]
fn chain_fixture_numbers() {
    let model = load("dpi_chain.scm");
    let h = |vars: &[&str]| entropy(&model.entailed(vars).unwrap()).0;
    assert!((h(&["X"]) - 1.0).abs() < 1e-12);
    assert!((h(&["Z"]) - 1.0).abs() < 1e-12);
    assert!((h(&["Y"]) - 1.5).abs() < 1e-12);

    let protocol = Protocol::point(&model, "X", 0).unwrap(); // x1
    let qy = CausalQuery::new(&model, &["Y"], "X", protocol.clone()).unwrap();
    let qz = CausalQuery::new(&model, &["Z"], "X", protocol.clone()).unwrap();
    assert!((causal_entropy(&qy, HcMethod::Definition).unwrap().0 - 1.0).abs() < 1e-9);
    assert!(causal_entropy(&qz, HcMethod::Definition).unwrap().0.abs() < 1e-9);
    assert!((causal_information_gain(&qy).unwrap().0 - 0.5).abs() < 1e-9);
    assert!((causal_information_gain(&qz).unwrap().0 - 1.0).abs() < 1e-9);

    // Atomic x1 pins Z to z1.
    let pz = post_dist(
        &model,
        &Intervention::Atomic {
            target: VarId::new("X"),
            value: 0,
        },
        &["Z"],
    )
    .unwrap();
    assert_eq!(pz.masses(), &[Rational::from_integer(1.into()), Rational::from_integer(0.into())]);
}

#[test]
fn malformed_fixtures_match_their_goldens() {
    let dir = format!("{}/../../fixtures/malformed", env!("CARGO_MANIFEST_DIR"));
    let mut cases: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map_or(false, |e| e == "scm"))
        .collect();
    cases.sort();
    assert_eq!(cases.len(), 10);
    for path in cases {
        let text = std::fs::read_to_string(&path).unwrap();
        let golden_path = path.with_extension("golden");
        let golden = std::fs::read_to_string(&golden_path)
            .unwrap_or_else(|e| panic!("{}: {e}", golden_path.display()));
        let err = parse_scm(&text)
            .err()
            .unwrap_or_else(|| panic!("{} parsed successfully", path.display()));
        assert_eq!(
            err.render(),
            golden.trim_end(),
            "{}",
            path.display()
        );
        // Spans must land inside the input.
        assert!(err.span.start <= err.span.end && err.span.end <= text.len());
        assert!(!err.expected.is_empty());
    }
}
