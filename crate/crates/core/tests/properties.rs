//! Property tests: pmf-level invariants under proptest, plus seeded-model
//! invariants that lean on the deterministic generator.

use causal_info::causal::{causal_entropy, CausalQuery, HcMethod};
use causal_info::dsl::{parse_scm, serialize_scm};
use causal_info::gen::{gen_protocol, gen_scm, stream_seed, GenConfig, SplitMix64};
use causal_info::info::{cond_entropy, entropy, mutual_information};
use causal_info::intervene::{covariate_specific, post_dist, Intervention};
use causal_info::rational::{to_f64, Rational};
use causal_info::{FiniteRange, Pmf, VarId};

use num::{One, Zero};
use proptest::prelude::*;

/// Strategy: a pmf over the given scope sizes with exact rational masses
/// built from random integer weights.
fn pmf_strategy(sizes: Vec<usize>) -> impl Strategy<Value = Pmf> {
    let cells: usize = sizes.iter().product();
    proptest::collection::vec(0u32..6, cells)
        .prop_filter("at least one positive weight", |w| {
            w.iter().any(|&x| x > 0)
        })
        .prop_map(move |weights| {
            let total: u32 = weights.iter().sum();
            let mass: Vec<Rational> = weights
                .iter()
                .map(|&w| Rational::new((w as i64).into(), (total as i64).into()))
                .collect();
            let scope: Vec<(VarId, FiniteRange)> = sizes
                .iter()
                .enumerate()
                .map(|(k, &n)| (VarId::new(format!("V{k}")), FiniteRange::of_size(n)))
                .collect();
            Pmf::new(scope, mass).expect("weights normalize")
        })
}

proptest! {
    #[test]
    fn marginals_match_brute_force_sums(p in pmf_strategy(vec![2, 3, 2])) {
        // Keep {V0, V1}: sum over V2 with explicit loops.
        let marg = p.marginalize(&["V0", "V1"]).unwrap();
        for v0 in 0..2 {
            for v1 in 0..3 {
                let mut acc = Rational::zero();
                for v2 in 0..2 {
                    acc += p.mass_at(&[v0, v1, v2]);
                }
                prop_assert_eq!(marg.mass_at(&[v0, v1]), &acc);
            }
        }
        let total: Rational = marg.masses().iter().sum();
        prop_assert!(total.is_one());
    }

    #[test]
    fn conditioning_recovers_the_slice(p in pmf_strategy(vec![2, 3])) {
        let marg = p.marginalize(&["V0"]).unwrap();
        for v0 in 0..2 {
            if marg.masses()[v0].is_zero() {
                continue;
            }
            let cond = p.condition(&[("V0", v0)]).unwrap();
            let total: Rational = cond.masses().iter().sum();
            prop_assert!(total.is_one());
            // cond * P(V0 = v0) equals the slice of the joint, exactly.
            for v1 in 0..3 {
                let back = cond.masses()[v1].clone() * &marg.masses()[v0];
                prop_assert_eq!(&back, p.mass_at(&[v0, v1]));
            }
        }
    }

    #[test]
    fn products_marginalize_back_to_their_factors(
        p in pmf_strategy(vec![3]),
        q in pmf_strategy(vec![2]),
    ) {
        let q = {
            // Rename to avoid scope overlap.
            let mass = q.masses().to_vec();
            Pmf::single("W0", FiniteRange::of_size(2), mass).unwrap()
        };
        let joint = p.product(&q).unwrap();
        prop_assert_eq!(&joint.marginalize(&["V0"]).unwrap(), &p);
        prop_assert_eq!(&joint.marginalize(&["W0"]).unwrap(), &q);
        prop_assert!(joint.is_mutually_independent());
    }

    #[test]
    fn mutual_information_is_symmetric(p in pmf_strategy(vec![3, 3])) {
        let a = mutual_information(&p, &["V0"], &["V1"]).unwrap().0;
        let b = mutual_information(&p, &["V1"], &["V0"]).unwrap().0;
        prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        prop_assert!(a > -1e-12);
    }

    #[test]
    fn conditioning_reduces_entropy(p in pmf_strategy(vec![3, 2, 2])) {
        let h = entropy(&p).0;
        for given in [vec!["V0"], vec!["V1"], vec!["V0", "V2"]] {
            let hc = cond_entropy(&p, &given).unwrap().0;
            prop_assert!(hc <= h + 1e-12, "H = {}, H|{:?} = {}", h, given, hc);
        }
    }

    #[test]
    fn entropy_chain_rule(p in pmf_strategy(vec![3, 4])) {
        let h_joint = entropy(&p).0;
        let h_first = entropy(&p.marginalize(&["V0"]).unwrap()).0;
        let h_rest = cond_entropy(&p, &["V0"]).unwrap().0;
        prop_assert!((h_joint - (h_first + h_rest)).abs() < 1e-9);
    }

    #[test]
    fn independence_bound_on_entropy(p in pmf_strategy(vec![2, 2, 3])) {
        let h_joint = entropy(&p).0;
        let mut sum = 0.0;
        for v in ["V0", "V1", "V2"] {
            sum += entropy(&p.marginalize(&[v]).unwrap()).0;
        }
        prop_assert!(h_joint <= sum + 1e-9);
        if p.is_mutually_independent() {
            prop_assert!((h_joint - sum).abs() < 1e-9);
        } else {
            prop_assert!(h_joint < sum + 1e-9);
        }
    }
}

// ---------------------------------------------------------------------------
// Seeded-model properties

#[test]
fn forward_pass_equals_noise_enumeration_on_random_models() {
    for seed in 0..120 {
        let model = gen_scm(&GenConfig::new(seed));
        let all: Vec<String> = model
            .endogenous()
            .map(|v| v.id.as_str().to_owned())
            .collect();
        let forward = model.entailed(&all).unwrap();
        let oracle = model.entailed_oracle(&all).unwrap();
        assert_eq!(forward, oracle, "seed {seed}");
    }
}

#[test]
fn entailed_marginals_are_consistent_on_random_subsets() {
    for seed in 0..60 {
        let model = gen_scm(&GenConfig::new(seed));
        let all: Vec<String> = model
            .endogenous()
            .map(|v| v.id.as_str().to_owned())
            .collect();
        let joint = model.entailed(&all).unwrap();
        let mut rng = SplitMix64::new(stream_seed(seed, 1));
        let subset: Vec<String> = all
            .iter()
            .filter(|_| rng.chance(1, 2))
            .cloned()
            .collect();
        if subset.is_empty() {
            continue;
        }
        assert_eq!(
            joint.marginalize(&subset).unwrap(),
            model.entailed(&subset).unwrap(),
            "seed {seed} subset {subset:?}"
        );
    }
}

#[test]
fn atomic_equals_conditioned_stochastic_on_random_models() {
    let mut checked = 0;
    for seed in 0..80 {
        let model = gen_scm(&GenConfig::new(seed));
        let mut rng = SplitMix64::new(stream_seed(seed, 2));
        let n = model.mechanisms().len();
        let x = model.mechanisms()[rng.below(n as u64) as usize]
            .variable
            .id
            .as_str()
            .to_owned();
        let rest: Vec<String> = model
            .endogenous()
            .map(|v| v.id.as_str().to_owned())
            .filter(|v| *v != x)
            .collect();
        if rest.is_empty() {
            continue;
        }
        let protocol = gen_protocol(&mut rng, &GenConfig::new(seed), &model, &x);
        for value in protocol.support() {
            let lhs = covariate_specific(&model, &protocol, value, &rest).unwrap();
            let rhs = post_dist(
                &model,
                &Intervention::Atomic {
                    target: VarId::new(x.clone()),
                    value,
                },
                &rest,
            )
            .unwrap();
            assert_eq!(lhs, rhs, "seed {seed} x={value}");
            checked += 1;
        }
    }
    assert!(checked > 50, "only {checked} comparisons ran");
}

#[test]
fn no_directed_path_means_no_total_effect() {
    for seed in 0..60 {
        let model = gen_scm(&GenConfig::new(seed));
        let vars: Vec<String> = model
            .endogenous()
            .map(|v| v.id.as_str().to_owned())
            .collect();
        for cause in &vars {
            for effect in &vars {
                if cause == effect {
                    continue;
                }
                if !model.has_directed_path(cause, effect).unwrap() {
                    assert!(
                        !model.has_total_causal_effect(cause, effect).unwrap(),
                        "seed {seed}: {cause} -> {effect}"
                    );
                }
            }
        }
    }
}

#[test]
fn point_protocols_match_atomic_causal_entropy() {
    for seed in 0..40 {
        let model = gen_scm(&GenConfig::new(seed));
        let mut rng = SplitMix64::new(stream_seed(seed, 3));
        let n = model.mechanisms().len();
        let x = model.mechanisms()[rng.below(n as u64) as usize]
            .variable
            .id
            .as_str()
            .to_owned();
        let rest: Vec<String> = model
            .endogenous()
            .map(|v| v.id.as_str().to_owned())
            .filter(|v| *v != x)
            .collect();
        if rest.is_empty() {
            continue;
        }
        let y = &rest[rng.below(rest.len() as u64) as usize];
        let x_len = model.variable(&x).unwrap().range.len();
        for value in 0..x_len {
            let protocol = causal_info::Protocol::point(&model, &x, value).unwrap();
            let q = CausalQuery::new(&model, &[y.as_str()], &x, protocol).unwrap();
            let hc = causal_entropy(&q, HcMethod::Definition).unwrap().0;
            let direct = entropy(
                &post_dist(
                    &model,
                    &Intervention::Atomic {
                        target: VarId::new(x.clone()),
                        value,
                    },
                    &[y.as_str()],
                )
                .unwrap(),
            )
            .0;
            assert!((hc - direct).abs() < 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn generator_output_round_trips_through_the_text_format() {
    for seed in 0..60 {
        let model = gen_scm(&GenConfig::new(seed));
        let text = serialize_scm(&model);
        let reparsed = parse_scm(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));
        assert_eq!(reparsed, model, "seed {seed}");
        assert_eq!(serialize_scm(&reparsed), text, "seed {seed}");
    }
}

#[test]
fn stochastic_target_marginal_is_the_protocol() {
    for seed in 0..40 {
        let model = gen_scm(&GenConfig::new(seed));
        let mut rng = SplitMix64::new(stream_seed(seed, 4));
        let n = model.mechanisms().len();
        let x = model.mechanisms()[rng.below(n as u64) as usize]
            .variable
            .id
            .as_str()
            .to_owned();
        let protocol = gen_protocol(&mut rng, &GenConfig::new(seed), &model, &x);
        let marginal = post_dist(
            &model,
            &Intervention::Stochastic(protocol.clone()),
            &[x.as_str()],
        )
        .unwrap();
        assert_eq!(marginal.masses(), protocol.masses(), "seed {seed}");
        // The weighted protocol masses convert cleanly to binary64 too.
        let total: f64 = protocol.masses().iter().map(to_f64).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
