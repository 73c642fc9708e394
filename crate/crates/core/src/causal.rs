//! Intervention-weighted information quantities over a model: causal
//! entropy `Hc` (three equivalent computations), causal information gain
//! `Ic`, their conditional variants, post-intervention mutual information,
//! and chain-rule checkers.
//!
//! `Hc(Y | do(X ~ X'))` is the expected entropy of `Y` after an atomic
//! intervention on `X`, weighted by the protocol distribution of `X'`.
//! `Ic` is the drop from the observational entropy of `Y` to `Hc`; it can
//! be negative, and is returned as-is. Interventions always precede
//! conditioning in the conditional variants; there is no flag to flip that
//! order.



use crate::dist::{Pmf, VarId};
use crate::error::{Error, Result};
use crate::info::{cond_entropy, entropy, mutual_information, Bits, ENTROPY_TOL};
use crate::intervene::{post_dist, Intervention, Protocol};
use crate::rational::to_f64;
use crate::report::{PropReport, QueryWitness, Side, Status};
use crate::scm::Scm;

/// How to compute causal entropy. All methods agree within
/// [`ENTROPY_TOL`]; they differ in the route.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HcMethod {
    /// Protocol-weighted average of post-atomic-intervention entropies.
    Definition,
    /// Single expectation over the post-stochastic-intervention joint of
    /// `-log p(y | do(X = x))`.
    PlugIn,
    /// Conditional entropy of the target given the intervened variable
    /// under the post-stochastic-intervention joint.
    CovariateSpecific,
}

/// How to compute conditional causal entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CondHcMethod {
    /// Double expectation over the protocol and the post-intervention
    /// distribution of the conditioning set.
    Definition,
    /// Conditional entropy given conditioning set plus intervened variable
    /// under the post-stochastic-intervention joint.
    ConditionalEntropyForm,
}

/// A causal-entropy query: target set, intervened variable, protocol, and
/// an optional conditioning set. The three variable sets are pairwise
/// disjoint and the protocol targets the intervened variable.
#[derive(Clone, Debug)]
pub struct CausalQuery<'a> {
    pub model: &'a Scm,
    pub target: Vec<VarId>,
    pub intervened: VarId,
    pub protocol: Protocol,
    pub given: Vec<VarId>,
}

impl<'a> CausalQuery<'a> {
    pub fn new<S: AsRef<str>>(
        model: &'a Scm,
        target: &[S],
        intervened: &str,
        protocol: Protocol,
    ) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::BadQuery("target set must be non-empty".into()));
        }
        let mut tgt = Vec::new();
        for t in target {
            let t = t.as_ref();
            if model.index_of(t).is_none() {
                return Err(Error::UnknownVariable(t.to_owned()));
            }
            if t == intervened {
                return Err(Error::BadQuery(format!(
                    "target contains the intervened variable `{t}`"
                )));
            }
            let id = VarId::new(t);
            if tgt.contains(&id) {
                return Err(Error::BadQuery(format!("target lists `{t}` twice")));
            }
            tgt.push(id);
        }
        let ivar = model
            .variable(intervened)
            .ok_or_else(|| Error::UnknownVariable(intervened.to_owned()))?;
        if protocol.target().as_str() != intervened {
            return Err(Error::BadQuery(format!(
                "protocol targets `{}`, query intervenes on `{intervened}`",
                protocol.target()
            )));
        }
        if protocol.range() != &ivar.range {
            return Err(Error::RangeMismatch(format!(
                "protocol range does not match the range of `{intervened}`"
            )));
        }
        Ok(CausalQuery {
            model,
            target: tgt,
            intervened: VarId::new(intervened),
            protocol,
            given: Vec::new(),
        })
    }

    /// Adds a conditioning set, disjoint from the target and the intervened
    /// variable.
    pub fn with_given<S: AsRef<str>>(mut self, given: &[S]) -> Result<Self> {
        let mut out = Vec::new();
        for g in given {
            let g = g.as_ref();
            if self.model.index_of(g).is_none() {
                return Err(Error::UnknownVariable(g.to_owned()));
            }
            if g == self.intervened.as_str() {
                return Err(Error::BadQuery(
                    "conditioning set contains the intervened variable".into(),
                ));
            }
            if self.target.iter().any(|t| t.as_str() == g) {
                return Err(Error::BadQuery(format!(
                    "conditioning set overlaps the target on `{g}`"
                )));
            }
            let id = VarId::new(g);
            if out.contains(&id) {
                return Err(Error::BadQuery(format!("conditioning set lists `{g}` twice")));
            }
            out.push(id);
        }
        self.given = out;
        Ok(self)
    }

    fn without_given(&self) -> CausalQuery<'a> {
        CausalQuery {
            given: Vec::new(),
            ..self.clone()
        }
    }

    fn target_strs(&self) -> Vec<&str> {
        self.target.iter().map(|t| t.as_str()).collect()
    }

    fn given_strs(&self) -> Vec<&str> {
        self.given.iter().map(|g| g.as_str()).collect()
    }

    fn atomic(&self, value: usize) -> Intervention {
        Intervention::Atomic {
            target: self.intervened.clone(),
            value,
        }
    }

    /// Post-atomic-intervention joint of the given variables.
    fn atomic_joint<S: AsRef<str>>(&self, value: usize, vars: &[S]) -> Result<Pmf> {
        post_dist(self.model, &self.atomic(value), vars)
    }

    /// Post-stochastic-intervention joint of the intervened variable plus
    /// `extra`, in declaration order.
    fn stochastic_joint<S: AsRef<str>>(&self, extra: &[S]) -> Result<Pmf> {
        let mut vars: Vec<String> = vec![self.intervened.as_str().to_owned()];
        vars.extend(extra.iter().map(|v| v.as_ref().to_owned()));
        post_dist(
            self.model,
            &Intervention::Stochastic(self.protocol.clone()),
            &vars,
        )
    }
}

/// Causal entropy of the query's target, with no conditioning set.
pub fn causal_entropy(q: &CausalQuery, method: HcMethod) -> Result<Bits> {
    if !q.given.is_empty() {
        return Err(Error::BadQuery(
            "causal entropy takes no conditioning set; use the conditional form".into(),
        ));
    }
    let target = q.target_strs();
    match method {
        HcMethod::Definition => {
            let mut h = 0.0;
            for x in q.protocol.support() {
                let w = to_f64(q.protocol.mass_of(x));
                let d = q.atomic_joint(x, &target)?;
                h += w * entropy(&d).0;
            }
            Ok(Bits(h))
        }
        HcMethod::PlugIn => {
            let joint = q.stochastic_joint(&target)?;
            let x_axis = joint
                .axis_of(q.intervened.as_str())
                .expect("intervened in scope");
            let t_axes: Vec<usize> = (0..joint.arity()).filter(|&k| k != x_axis).collect();
            let x_len = q.protocol.range().len();
            let mut atomic: Vec<Option<Pmf>> = vec![None; x_len];
            let mut h = 0.0;
            for (tuple, mass) in joint.support() {
                let x = tuple[x_axis];
                if atomic[x].is_none() {
                    atomic[x] = Some(q.atomic_joint(x, &target)?);
                }
                let dist = atomic[x].as_ref().unwrap();
                let y: Vec<usize> = t_axes.iter().map(|&k| tuple[k]).collect();
                let p = to_f64(dist.mass_at(&y));
                h -= to_f64(mass) * p.log2();
            }
            Ok(Bits(h))
        }
        HcMethod::CovariateSpecific => {
            let joint = q.stochastic_joint(&target)?;
            cond_entropy(&joint, &[q.intervened.as_str()])
        }
    }
}

/// All three causal-entropy routes side by side.
#[derive(Clone, Copy, Debug)]
pub struct HcMethods {
    pub definition: f64,
    pub plug_in: f64,
    pub covariate_specific: f64,
}

impl HcMethods {
    pub fn max_pairwise_slack(&self) -> f64 {
        let d = (self.definition - self.plug_in).abs();
        let e = (self.definition - self.covariate_specific).abs();
        let f = (self.plug_in - self.covariate_specific).abs();
        d.max(e).max(f)
    }
}

pub fn causal_entropy_methods(q: &CausalQuery) -> Result<HcMethods> {
    Ok(HcMethods {
        definition: causal_entropy(q, HcMethod::Definition)?.0,
        plug_in: causal_entropy(q, HcMethod::PlugIn)?.0,
        covariate_specific: causal_entropy(q, HcMethod::CovariateSpecific)?.0,
    })
}

/// Causal information gain: observational entropy of the target minus the
/// causal entropy. May be negative; never clamped.
pub fn causal_information_gain(q: &CausalQuery) -> Result<Bits> {
    let h = entropy(&q.model.entailed(&q.target_strs())?);
    let hc = causal_entropy(q, HcMethod::Definition)?;
    Ok(h - hc)
}

/// Conditional causal entropy `Hc(target | given, do(X ~ X'))`: intervene
/// first, then condition. An empty conditioning set degrades to plain
/// causal entropy.
pub fn conditional_causal_entropy(q: &CausalQuery, method: CondHcMethod) -> Result<Bits> {
    let target = q.target_strs();
    let given = q.given_strs();
    match method {
        CondHcMethod::Definition => {
            let mut wide: Vec<&str> = target.clone();
            wide.extend(&given);
            let mut h = 0.0;
            for x in q.protocol.support() {
                let w = to_f64(q.protocol.mass_of(x));
                let joint_x = q.atomic_joint(x, &wide)?;
                h += w * cond_entropy(&joint_x, &given)?.0;
            }
            Ok(Bits(h))
        }
        CondHcMethod::ConditionalEntropyForm => {
            let mut extra: Vec<&str> = target.clone();
            extra.extend(&given);
            let joint = q.stochastic_joint(&extra)?;
            let mut cond: Vec<&str> = given.clone();
            cond.push(q.intervened.as_str());
            cond_entropy(&joint, &cond)
        }
    }
}

/// Conditional causal information gain: the observational conditional
/// entropy `H(target | given)` minus the conditional causal entropy. The
/// first term is taken under the pre-intervention joint by definition.
pub fn conditional_causal_information_gain(q: &CausalQuery) -> Result<Bits> {
    let mut wide = q.target_strs();
    wide.extend(q.given_strs());
    let observational = q.model.entailed(&wide)?;
    let h_given = cond_entropy(&observational, &q.given_strs())?;
    let chc = conditional_causal_entropy(q, CondHcMethod::Definition)?;
    Ok(h_given - chc)
}

/// Post-intervention mutual information between target and conditioning
/// set: causal entropy minus conditional causal entropy. Cross-checked
/// against its other face, the protocol-weighted average of
/// post-atomic-intervention mutual informations.
pub fn post_intervention_mutual_information(q: &CausalQuery) -> Result<Bits> {
    let hc = causal_entropy(&q.without_given(), HcMethod::Definition)?;
    let chc = conditional_causal_entropy(q, CondHcMethod::Definition)?;
    let diff = hc - chc;

    let target = q.target_strs();
    let given = q.given_strs();
    let mut wide: Vec<&str> = given.clone();
    wide.extend(&target);
    let mut avg = 0.0;
    for x in q.protocol.support() {
        let w = to_f64(q.protocol.mass_of(x));
        let joint_x = q.atomic_joint(x, &wide)?;
        avg += w * mutual_information(&joint_x, &given, &target)?.0;
    }
    assert!(
        (diff.0 - avg).abs() <= ENTROPY_TOL,
        "post-intervention mutual information routes disagree: {} vs {avg}",
        diff.0
    );
    Ok(diff)
}

fn witness(q: &CausalQuery, detail: String) -> QueryWitness {
    QueryWitness {
        scm: crate::dsl::serialize_scm(q.model),
        protocol: q.protocol.to_pmf_text(),
        intervened: q.intervened.to_string(),
        targets: q.target.iter().map(|t| t.to_string()).collect(),
        given: q.given.iter().map(|g| g.to_string()).collect(),
        detail,
    }
}

fn chain_report(prop: &str, q: &CausalQuery, lhs: f64, rhs: f64) -> PropReport {
    let slack = (lhs - rhs).abs();
    let pass = slack <= ENTROPY_TOL;
    PropReport {
        prop: prop.to_owned(),
        status: if pass { Status::Pass } else { Status::Fail },
        lhs: Side::Bits(lhs),
        rhs: Side::Bits(rhs),
        slack,
        witness: (!pass).then(|| witness(q, format!("{prop}: {lhs} vs {rhs}"))),
    }
}

/// Checks `Hc(Y1..Yn | do) = sum_i Hc(Yi | Y1..Y(i-1), do)` for one
/// ordering of the targets.
pub fn check_chain_rule_hc<S: AsRef<str>>(
    model: &Scm,
    targets: &[S],
    intervened: &str,
    protocol: &Protocol,
) -> Result<PropReport> {
    let full = CausalQuery::new(model, targets, intervened, protocol.clone())?;
    let lhs = causal_entropy(&full, HcMethod::Definition)?.0;
    let mut rhs = 0.0;
    for i in 0..targets.len() {
        let head = [targets[i].as_ref()];
        let prefix: Vec<&str> = targets[..i].iter().map(|t| t.as_ref()).collect();
        let q = CausalQuery::new(model, &head, intervened, protocol.clone())?
            .with_given(&prefix)?;
        rhs += conditional_causal_entropy(&q, CondHcMethod::Definition)?.0;
    }
    Ok(chain_report("hc-chain-rule", &full, lhs, rhs))
}

/// Checks `Ic(Y1..Yn | do) = sum_i Ic(Yi | Y1..Y(i-1), do)` for one
/// ordering of the targets.
pub fn check_chain_rule_ic<S: AsRef<str>>(
    model: &Scm,
    targets: &[S],
    intervened: &str,
    protocol: &Protocol,
) -> Result<PropReport> {
    let full = CausalQuery::new(model, targets, intervened, protocol.clone())?;
    let lhs = causal_information_gain(&full)?.0;
    let mut rhs = 0.0;
    for i in 0..targets.len() {
        let head = [targets[i].as_ref()];
        let prefix: Vec<&str> = targets[..i].iter().map(|t| t.as_ref()).collect();
        let q = CausalQuery::new(model, &head, intervened, protocol.clone())?
            .with_given(&prefix)?;
        rhs += conditional_causal_information_gain(&q)?.0;
    }
    Ok(chain_report("ic-chain-rule", &full, lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{FiniteRange, Pmf};
    use crate::expr::{BinOp, Expr};
    use crate::rational::rat;
    use crate::scm::tests::{additive_chain, coin};
    use crate::scm::{Assignment, Mechanism, Variable};

    fn one_third_protocol(model: &Scm) -> Protocol {
        Protocol::new(model, "X", vec![rat(2, 3), rat(1, 3)]).unwrap()
    }

    /// Collider X -> Z <- Y with an extra noise flip on Z.
    pub(crate) fn collider() -> Scm {
        let b = FiniteRange::of_size(2);
        let x = Mechanism {
            variable: Variable::new("X", b.clone()),
            assignment: Assignment {
                target: VarId::new("X"),
                parents: vec![],
                noise: VarId::new("N_X"),
                body: Expr::var("N_X"),
            },
            noise: Variable::new("N_X", b.clone()),
            noise_dist: coin("N_X", b.clone(), 1, 3),
        };
        let y = Mechanism {
            variable: Variable::new("Y", b.clone()),
            assignment: Assignment {
                target: VarId::new("Y"),
                parents: vec![],
                noise: VarId::new("N_Y"),
                body: Expr::var("N_Y"),
            },
            noise: Variable::new("N_Y", b.clone()),
            noise_dist: coin("N_Y", b.clone(), 1, 4),
        };
        // Z = 1 iff at least two of X, Y, N_Z are 1.
        let sum = Expr::bin(
            BinOp::Add,
            Expr::bin(BinOp::Add, Expr::var("X"), Expr::var("Y")),
            Expr::var("N_Z"),
        );
        let z = Mechanism {
            variable: Variable::new("Z", b.clone()),
            assignment: Assignment {
                target: VarId::new("Z"),
                parents: vec![VarId::new("X"), VarId::new("Y")],
                noise: VarId::new("N_Z"),
                body: Expr::if_then_else(
                    Expr::bin(BinOp::Le, sum, Expr::Int(1)),
                    Expr::Int(0),
                    Expr::Int(1),
                ),
            },
            noise: Variable::new("N_Z", b.clone()),
            noise_dist: coin("N_Z", b, 1, 5),
        };
        Scm::new("collider", vec![x, y, z])
    }

    #[test]
    fn additive_chain_causal_entropy_is_one_bit() {
        let model = additive_chain();
        let q = CausalQuery::new(&model, &["Y"], "X", one_third_protocol(&model)).unwrap();
        for method in [
            HcMethod::Definition,
            HcMethod::PlugIn,
            HcMethod::CovariateSpecific,
        ] {
            let hc = causal_entropy(&q, method).unwrap();
            assert!((hc.0 - 1.0).abs() < 1e-12, "{method:?}: {}", hc.0);
        }
        let methods = causal_entropy_methods(&q).unwrap();
        assert!(methods.max_pairwise_slack() < 1e-12);
    }

    #[test]
    fn stochastic_entropy_differs_from_causal_entropy() {
        let model = additive_chain();
        let q = CausalQuery::new(&model, &["Y"], "X", one_third_protocol(&model)).unwrap();
        let joint = q.stochastic_joint(&["Y"]).unwrap();
        let h_stoch = entropy(&joint.marginalize(&["Y"]).unwrap());
        let expected = 3f64.log2() / 3.0 + 0.5 + 6f64.log2() / 6.0;
        assert!((h_stoch.0 - expected).abs() < 1e-9);
        let hc = causal_entropy(&q, HcMethod::Definition).unwrap();
        assert!(h_stoch.0 > hc.0 + 0.4);
    }

    #[test]
    fn information_gain_can_be_zero_without_effect() {
        // Y does not depend on X at all.
        let b = FiniteRange::of_size(2);
        let x = Mechanism {
            variable: Variable::new("X", b.clone()),
            assignment: Assignment {
                target: VarId::new("X"),
                parents: vec![],
                noise: VarId::new("N_X"),
                body: Expr::var("N_X"),
            },
            noise: Variable::new("N_X", b.clone()),
            noise_dist: coin("N_X", b.clone(), 1, 2),
        };
        let y = Mechanism {
            variable: Variable::new("Y", b.clone()),
            assignment: Assignment {
                target: VarId::new("Y"),
                parents: vec![],
                noise: VarId::new("N_Y"),
                body: Expr::var("N_Y"),
            },
            noise: Variable::new("N_Y", b.clone()),
            noise_dist: coin("N_Y", b, 2, 7),
        };
        let model = Scm::new("detached", vec![x, y]);
        assert!(!model.has_total_causal_effect("X", "Y").unwrap());
        for masses in [
            vec![rat(1, 2), rat(1, 2)],
            vec![rat(1, 1), rat(0, 1)],
            vec![rat(1, 5), rat(4, 5)],
        ] {
            let protocol = Protocol::new(&model, "X", masses).unwrap();
            let q = CausalQuery::new(&model, &["Y"], "X", protocol).unwrap();
            assert!(causal_information_gain(&q).unwrap().0.abs() < 1e-12);
        }
    }

    #[test]
    fn vacuous_conditioning_matches_plain_causal_entropy() {
        let model = collider();
        // Y is independent of X and unaffected by interventions on X.
        let protocol = Protocol::new(&model, "X", vec![rat(1, 2), rat(1, 2)]).unwrap();
        let q = CausalQuery::new(&model, &["Z"], "X", protocol).unwrap();
        let plain = causal_entropy(&q, HcMethod::Definition).unwrap();
        let cond = conditional_causal_entropy(
            &q.clone().with_given(&["Y"]).unwrap(),
            CondHcMethod::Definition,
        )
        .unwrap();
        // Y is a parent of Z, so conditioning genuinely reduces here.
        assert!(cond.0 <= plain.0 + 1e-12);

        // An actually vacuous case: conditioning on nothing.
        let vac = conditional_causal_entropy(&q, CondHcMethod::Definition).unwrap();
        assert!((vac.0 - plain.0).abs() < 1e-12);
    }

    #[test]
    fn conditioning_on_a_copy_kills_causal_entropy() {
        // W is a deterministic copy of Y in an X -> Y chain.
        let chain = additive_chain();
        let w_range = FiniteRange::of_size(3);
        let w = Mechanism {
            variable: Variable::new("W", w_range.clone()),
            assignment: Assignment {
                target: VarId::new("W"),
                parents: vec![VarId::new("Y")],
                noise: VarId::new("N_W"),
                body: Expr::bin(
                    BinOp::Add,
                    Expr::var("Y"),
                    Expr::bin(BinOp::Mul, Expr::Int(0), Expr::var("N_W")),
                ),
            },
            noise: Variable::new("N_W", FiniteRange::of_size(1)),
            noise_dist: Pmf::point("N_W", FiniteRange::of_size(1), 0).unwrap(),
        };
        let mut mechanisms = chain.mechanisms().to_vec();
        mechanisms.push(w);
        let model = Scm::new("copied", mechanisms);
        let protocol = Protocol::new(&model, "X", vec![rat(2, 3), rat(1, 3)]).unwrap();
        let q = CausalQuery::new(&model, &["Y"], "X", protocol)
            .unwrap()
            .with_given(&["W"])
            .unwrap();
        for method in [CondHcMethod::Definition, CondHcMethod::ConditionalEntropyForm] {
            assert!(conditional_causal_entropy(&q, method).unwrap().0.abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_causal_entropy_matches_direct_double_sum() {
        let model = collider();
        let protocol = Protocol::new(&model, "X", vec![rat(1, 3), rat(2, 3)]).unwrap();
        let q = CausalQuery::new(&model, &["Y"], "X", protocol.clone())
            .unwrap()
            .with_given(&["Z"])
            .unwrap();

        // Independent oracle: expand both expectations by hand.
        let mut oracle = 0.0;
        for x in protocol.support() {
            let w = to_f64(protocol.mass_of(x));
            let joint = q.atomic_joint(x, &["Y", "Z"]).unwrap();
            let pz = joint.marginalize(&["Z"]).unwrap();
            for (zt, zm) in pz.support() {
                let slice = joint.condition(&[("Z", zt[0])]).unwrap();
                oracle += w * to_f64(zm) * entropy(&slice).0;
            }
        }
        for method in [CondHcMethod::Definition, CondHcMethod::ConditionalEntropyForm] {
            let got = conditional_causal_entropy(&q, method).unwrap();
            assert!((got.0 - oracle).abs() <= ENTROPY_TOL, "{method:?}");
        }
    }

    #[test]
    fn conditional_gain_on_the_collider_point_protocol() {
        let model = collider();
        let protocol = Protocol::point(&model, "X", 1).unwrap();
        let q = CausalQuery::new(&model, &["Y"], "X", protocol)
            .unwrap()
            .with_given(&["Z"])
            .unwrap();
        let gain = conditional_causal_information_gain(&q).unwrap();

        // H(Y|Z) - H(Y|Z, do(X=1)) computed directly.
        let obs = model.entailed(&["Y", "Z"]).unwrap();
        let h_obs = cond_entropy(&obs, &["Z"]).unwrap();
        let post = q.atomic_joint(1, &["Y", "Z"]).unwrap();
        let h_post = cond_entropy(&post, &["Z"]).unwrap();
        assert!((gain.0 - (h_obs.0 - h_post.0)).abs() < 1e-12);
    }

    #[test]
    fn gain_vanishes_when_x_is_detached_and_z_independent() {
        // X isolated; Y and Z independent of everything else.
        let b = FiniteRange::of_size(2);
        let mk = |id: &str, noise: &str, num: i64, den: i64| Mechanism {
            variable: Variable::new(id, b.clone()),
            assignment: Assignment {
                target: VarId::new(id),
                parents: vec![],
                noise: VarId::new(noise),
                body: Expr::var(noise),
            },
            noise: Variable::new(noise, b.clone()),
            noise_dist: coin(noise, b.clone(), num, den),
        };
        let model = Scm::new(
            "island",
            vec![
                mk("X", "N_X", 1, 2),
                mk("Y", "N_Y", 1, 3),
                mk("Z", "N_Z", 1, 5),
            ],
        );
        let protocol = Protocol::new(&model, "X", vec![rat(1, 4), rat(3, 4)]).unwrap();
        let q = CausalQuery::new(&model, &["Y"], "X", protocol)
            .unwrap()
            .with_given(&["Z"])
            .unwrap();
        assert!(conditional_causal_information_gain(&q).unwrap().0.abs() < 1e-12);
        assert!(post_intervention_mutual_information(&q).unwrap().0.abs() < 1e-12);
    }

    #[test]
    fn post_intervention_mi_on_the_collider() {
        let model = collider();
        let protocol = Protocol::point(&model, "X", 1).unwrap();
        let q = CausalQuery::new(&model, &["Y"], "X", protocol)
            .unwrap()
            .with_given(&["Z"])
            .unwrap();
        let mic = post_intervention_mutual_information(&q).unwrap();
        let post = q.atomic_joint(1, &["Y", "Z"]).unwrap();
        let direct = mutual_information(&post, &["Z"], &["Y"]).unwrap();
        assert!((mic.0 - direct.0).abs() <= ENTROPY_TOL);
    }

    #[test]
    fn copy_conditioning_recovers_full_causal_entropy() {
        // Z a copy of Y: MIc(Y | Z, do) equals Hc(Y | do).
        let chain = additive_chain();
        let w = Mechanism {
            variable: Variable::new("W", FiniteRange::of_size(3)),
            assignment: Assignment {
                target: VarId::new("W"),
                parents: vec![VarId::new("Y")],
                noise: VarId::new("N_W"),
                body: Expr::bin(
                    BinOp::Add,
                    Expr::var("Y"),
                    Expr::bin(BinOp::Mul, Expr::Int(0), Expr::var("N_W")),
                ),
            },
            noise: Variable::new("N_W", FiniteRange::of_size(1)),
            noise_dist: Pmf::point("N_W", FiniteRange::of_size(1), 0).unwrap(),
        };
        let mut mechanisms = chain.mechanisms().to_vec();
        mechanisms.push(w);
        let model = Scm::new("copied", mechanisms);
        let protocol = Protocol::new(&model, "X", vec![rat(2, 3), rat(1, 3)]).unwrap();
        let q = CausalQuery::new(&model, &["Y"], "X", protocol)
            .unwrap()
            .with_given(&["W"])
            .unwrap();
        let mic = post_intervention_mutual_information(&q).unwrap();
        let hc = causal_entropy(&q.without_given(), HcMethod::Definition).unwrap();
        assert!((mic.0 - hc.0).abs() < 1e-12);
    }

    #[test]
    fn chain_rules_hold_on_small_models() {
        let model = collider();
        let protocol = Protocol::new(&model, "X", vec![rat(1, 3), rat(2, 3)]).unwrap();

        let single = check_chain_rule_hc(&model, &["Y"], "X", &protocol).unwrap();
        assert!(single.passed());
        assert_eq!(single.lhs, single.rhs);

        for targets in [["Y", "Z"], ["Z", "Y"]] {
            let hc = check_chain_rule_hc(&model, &targets, "X", &protocol).unwrap();
            assert!(hc.passed(), "{hc:?}");
            let ic = check_chain_rule_ic(&model, &targets, "X", &protocol).unwrap();
            assert!(ic.passed(), "{ic:?}");
        }

        // Both orderings sum to the same total.
        let a = check_chain_rule_ic(&model, &["Y", "Z"], "X", &protocol).unwrap();
        let b = check_chain_rule_ic(&model, &["Z", "Y"], "X", &protocol).unwrap();
        let (Side::Bits(la), Side::Bits(lb)) = (&a.lhs, &b.lhs) else {
            panic!("bits expected");
        };
        assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn two_variable_chain_rule_with_a_child() {
        // Extend the additive chain with a child W of Y, then check
        // Hc(Y, W | do) = Hc(Y | do) + Hc(W | Y, do).
        let chain = additive_chain();
        let w = Mechanism {
            variable: Variable::new("W", FiniteRange::of_size(4)),
            assignment: Assignment {
                target: VarId::new("W"),
                parents: vec![VarId::new("Y")],
                noise: VarId::new("N_W"),
                body: Expr::bin(BinOp::Add, Expr::var("Y"), Expr::var("N_W")),
            },
            noise: Variable::new("N_W", FiniteRange::of_size(2)),
            noise_dist: coin("N_W", FiniteRange::of_size(2), 1, 3),
        };
        let mut mechanisms = chain.mechanisms().to_vec();
        mechanisms.push(w);
        let model = Scm::new("extended", mechanisms);
        let protocol = Protocol::new(&model, "X", vec![rat(2, 3), rat(1, 3)]).unwrap();

        let report = check_chain_rule_hc(&model, &["Y", "W"], "X", &protocol).unwrap();
        assert!(report.passed(), "{report:?}");

        let lhs = causal_entropy(
            &CausalQuery::new(&model, &["Y", "W"], "X", protocol.clone()).unwrap(),
            HcMethod::Definition,
        )
        .unwrap();
        let first = causal_entropy(
            &CausalQuery::new(&model, &["Y"], "X", protocol.clone()).unwrap(),
            HcMethod::Definition,
        )
        .unwrap();
        let second = conditional_causal_entropy(
            &CausalQuery::new(&model, &["W"], "X", protocol)
                .unwrap()
                .with_given(&["Y"])
                .unwrap(),
            CondHcMethod::Definition,
        )
        .unwrap();
        assert!((lhs.0 - (first.0 + second.0)).abs() <= ENTROPY_TOL);
    }

    #[test]
    fn queries_reject_overlaps() {
        let model = additive_chain();
        let protocol = one_third_protocol(&model);
        assert!(matches!(
            CausalQuery::new(&model, &["X"], "X", protocol.clone()),
            Err(Error::BadQuery(_))
        ));
        assert!(matches!(
            CausalQuery::new(&model, &["Y"], "X", protocol.clone())
                .unwrap()
                .with_given(&["Y"]),
            Err(Error::BadQuery(_))
        ));
        assert!(matches!(
            CausalQuery::new(&model, &["Y"], "X", protocol)
                .unwrap()
                .with_given(&["X"]),
            Err(Error::BadQuery(_))
        ));
    }
}
