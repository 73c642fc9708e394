//! The invariant suite: every identity and bound the metric layer promises,
//! executed against one model, plus batch runners over seeded random models
//! and counterexample hunters with greedy witness shrinking.
//!
//! Trials are independent; with the `parallel` feature they run on a rayon
//! pool and are merged back in trial order, so results never depend on the
//! schedule.

use std::collections::BTreeMap;

use num::{One, Zero};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::causal::{
    causal_entropy, causal_information_gain, check_chain_rule_hc, check_chain_rule_ic,
    conditional_causal_entropy, CausalQuery, CondHcMethod, HcMethod,
};
use crate::dist::{Pmf, VarId};
use crate::dsl;
use crate::error::Result;
use crate::expr::{Expr, TableExpr};
use crate::gen::{gen_chain_scm, gen_protocol, gen_scm, stream_seed, GenConfig, SplitMix64};
use crate::info::{entropy, mutual_information, ENTROPY_TOL};
use crate::intervene::{covariate_specific, post_dist, Intervention, Protocol};
use crate::rational::{to_f64, Rational};
use crate::report::{PropReport, QueryWitness, Side, Status};
use crate::scm::{Mechanism, Scm};

/// Tolerance below which a quantity that is non-negative in exact
/// arithmetic is still accepted as non-negative in binary64.
pub const NONNEG_TOL: f64 = 1e-12;

/// Caps the rayon pool used by batch checks and hunts. Call once, before
/// the first parallel run. No-op without the `parallel` feature.
pub fn configure_thread_pool(threads: usize) -> std::result::Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

fn witness(model: &Scm, protocol: &Protocol, targets: &[&str], given: &[&str], detail: String) -> QueryWitness {
    QueryWitness {
        scm: dsl::serialize_scm(model),
        protocol: protocol.to_pmf_text(),
        intervened: protocol.target().to_string(),
        targets: targets.iter().map(|t| (*t).to_owned()).collect(),
        given: given.iter().map(|g| (*g).to_owned()).collect(),
        detail,
    }
}

fn bits_report(
    prop: &str,
    lhs: f64,
    rhs: f64,
    pass: bool,
    model: &Scm,
    protocol: &Protocol,
    targets: &[&str],
    given: &[&str],
) -> PropReport {
    PropReport {
        prop: prop.to_owned(),
        status: if pass { Status::Pass } else { Status::Fail },
        lhs: Side::Bits(lhs),
        rhs: Side::Bits(rhs),
        slack: (lhs - rhs).abs(),
        witness: (!pass).then(|| {
            witness(
                model,
                protocol,
                targets,
                given,
                format!("{prop}: lhs={lhs} rhs={rhs}"),
            )
        }),
    }
}

/// Exact conditional independence of `targets` given the intervened
/// variable under the post-stochastic-intervention joint:
/// `p(y, x) * p(x)^(n-1) == prod_i p(y_i, x)` cell by cell.
fn conditionally_independent_given_x(
    joint: &Pmf,
    x: &str,
    targets: &[&str],
) -> Result<bool> {
    let n = targets.len();
    if n <= 1 {
        return Ok(true);
    }
    let px = joint.marginalize(&[x])?;
    let pairs: Vec<Pmf> = targets
        .iter()
        .map(|t| joint.marginalize(&[*t, x]))
        .collect::<Result<_>>()?;
    let x_axis = joint.axis_of(x).expect("x in scope");
    let t_axes: Vec<usize> = targets
        .iter()
        .map(|t| joint.axis_of(t).expect("target in scope"))
        .collect();
    let sizes: Vec<usize> = joint.scope().iter().map(|(_, r)| r.len()).collect();
    let cells: usize = sizes.iter().product();
    for cell in 0..cells {
        let tuple = joint.tuple_of(cell);
        let xv = tuple[x_axis];
        let mut lhs = joint.masses()[cell].clone();
        for _ in 0..n - 1 {
            lhs *= &px.masses()[xv];
        }
        let mut rhs = Rational::one();
        for (k, pair) in pairs.iter().enumerate() {
            // Pair marginals keep declaration order, so locate the axes.
            let t_first = pair.axis_of(targets[k]).expect("target");
            let mut pt = [0usize; 2];
            pt[t_first] = tuple[t_axes[k]];
            pt[1 - t_first] = xv;
            rhs *= pair.mass_at(&pt);
        }
        if lhs != rhs {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs every checkable identity and bound against one model and protocol.
/// Query variable sets (single target, target vector, conditioning set,
/// chain-rule order) are sampled deterministically from `trials_seed`.
/// Returns an empty list when no variable other than the intervened one
/// exists.
pub fn check_all(model: &Scm, protocol: &Protocol, trials_seed: u64) -> Result<Vec<PropReport>> {
    let x = protocol.target().as_str().to_owned();
    let x = x.as_str();
    let pool: Vec<&str> = model
        .endogenous()
        .map(|v| v.id.as_str())
        .filter(|v| *v != x)
        .collect();
    let mut reports = Vec::new();

    // Inference cross-check stands even on single-variable models.
    let all: Vec<&str> = model.endogenous().map(|v| v.id.as_str()).collect();
    let forward = model.entailed(&all)?;
    let oracle = model.entailed_oracle(&all)?;
    let agree = forward == oracle;
    reports.push(PropReport {
        prop: "inference-cross-check".to_owned(),
        status: if agree { Status::Pass } else { Status::Fail },
        lhs: Side::Dist(forward.digest()),
        rhs: Side::Dist(oracle.digest()),
        slack: if agree { 0.0 } else { 1.0 },
        witness: (!agree).then(|| {
            witness(model, protocol, &all, &[], "forward pass vs noise enumeration".into())
        }),
    });

    if pool.is_empty() {
        return Ok(reports);
    }

    let mut rng = SplitMix64::new(trials_seed);
    let y_single = pool[rng.below(pool.len() as u64) as usize];
    let mut yvec: Vec<&str> = pool
        .iter()
        .copied()
        .filter(|_| rng.chance(1, 2))
        .collect();
    if yvec.is_empty() {
        yvec.push(y_single);
    }
    let mut z_set: Vec<&str> = pool
        .iter()
        .copied()
        .filter(|v| *v != y_single)
        .filter(|_| rng.chance(1, 2))
        .collect();
    z_set.truncate(2);
    let mut chain_order = yvec.clone();
    // Fisher-Yates on the sampled vector for the chain-rule ordering.
    for i in (1..chain_order.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        chain_order.swap(i, j);
    }

    // Atomic intervention equals conditioning after a stochastic one,
    // exactly, for every value in the protocol's support.
    {
        let mut pass = true;
        let mut lhs = String::new();
        let mut rhs = String::new();
        for value in protocol.support() {
            let specific = covariate_specific(model, protocol, value, &pool)?;
            let atomic = post_dist(
                model,
                &Intervention::Atomic {
                    target: VarId::new(x),
                    value,
                },
                &pool,
            )?;
            let equal = specific == atomic;
            if lhs.is_empty() || !equal {
                lhs = format!("x={value}: {}", atomic.digest());
                rhs = format!("x={value}: {}", specific.digest());
            }
            if !equal {
                pass = false;
                break;
            }
        }
        reports.push(PropReport {
            prop: "atomic-equals-conditioned-stochastic".to_owned(),
            status: if pass { Status::Pass } else { Status::Fail },
            lhs: Side::Dist(lhs),
            rhs: Side::Dist(rhs),
            slack: if pass { 0.0 } else { 1.0 },
            witness: (!pass).then(|| {
                witness(model, protocol, &pool, &[], "exact equality violated".into())
            }),
        });
    }

    let q_single = CausalQuery::new(model, &[y_single], x, protocol.clone())?;
    let hc_def = causal_entropy(&q_single, HcMethod::Definition)?.0;
    let hc_plug = causal_entropy(&q_single, HcMethod::PlugIn)?.0;
    let hc_cov = causal_entropy(&q_single, HcMethod::CovariateSpecific)?.0;

    reports.push(bits_report(
        "hc-method-agreement",
        hc_def,
        hc_plug,
        (hc_def - hc_plug).abs() <= ENTROPY_TOL,
        model,
        protocol,
        &[y_single],
        &[],
    ));
    reports.push(bits_report(
        "hc-covariate-method-agreement",
        hc_def,
        hc_cov,
        (hc_def - hc_cov).abs() <= ENTROPY_TOL,
        model,
        protocol,
        &[y_single],
        &[],
    ));
    reports.push(bits_report(
        "hc-nonnegative",
        hc_def,
        0.0,
        hc_def >= -NONNEG_TOL,
        model,
        protocol,
        &[y_single],
        &[],
    ));

    // Causal entropy never exceeds the post-stochastic-intervention entropy.
    {
        let stoch = post_dist(
            model,
            &Intervention::Stochastic(protocol.clone()),
            &[y_single],
        )?;
        let h_stoch = entropy(&stoch).0;
        reports.push(bits_report(
            "hc-le-post-stochastic-entropy",
            hc_def,
            h_stoch,
            hc_def <= h_stoch + ENTROPY_TOL,
            model,
            protocol,
            &[y_single],
            &[],
        ));
    }

    // Independence bound over the sampled target vector, with exact
    // equality iff the targets are conditionally independent given the
    // intervened value under the post-stochastic joint.
    {
        let q_vec = CausalQuery::new(model, &yvec, x, protocol.clone())?;
        let lhs = causal_entropy(&q_vec, HcMethod::Definition)?.0;
        let mut rhs = 0.0;
        for y in &yvec {
            let q = CausalQuery::new(model, &[*y], x, protocol.clone())?;
            rhs += causal_entropy(&q, HcMethod::Definition)?.0;
        }
        let mut wide: Vec<&str> = vec![x];
        wide.extend(&yvec);
        let joint = post_dist(model, &Intervention::Stochastic(protocol.clone()), &wide)?;
        let independent = conditionally_independent_given_x(&joint, x, &yvec)?;
        let bound_holds = lhs <= rhs + ENTROPY_TOL;
        let equality = (lhs - rhs).abs() <= ENTROPY_TOL;
        let pass = bound_holds && (equality == independent);
        reports.push(bits_report(
            "hc-independence-bound",
            lhs,
            rhs,
            pass,
            model,
            protocol,
            &yvec,
            &[],
        ));
    }

    // Conditional causal entropy: the two routes agree, and conditioning
    // never increases causal entropy.
    {
        let q = CausalQuery::new(model, &[y_single], x, protocol.clone())?
            .with_given(&z_set)?;
        let def = conditional_causal_entropy(&q, CondHcMethod::Definition)?.0;
        let form = conditional_causal_entropy(&q, CondHcMethod::ConditionalEntropyForm)?.0;
        reports.push(bits_report(
            "cond-hc-as-cond-entropy",
            def,
            form,
            (def - form).abs() <= ENTROPY_TOL,
            model,
            protocol,
            &[y_single],
            &z_set,
        ));
        reports.push(bits_report(
            "conditioning-reduces-hc",
            def,
            hc_def,
            def <= hc_def + ENTROPY_TOL,
            model,
            protocol,
            &[y_single],
            &z_set,
        ));

        // Post-intervention mutual information equals the protocol-weighted
        // average of post-atomic mutual informations.
        let diff = hc_def - def;
        let mut avg = 0.0;
        let mut wide: Vec<&str> = z_set.clone();
        wide.push(y_single);
        for value in protocol.support() {
            let w = to_f64(protocol.mass_of(value));
            let joint_x = post_dist(
                model,
                &Intervention::Atomic {
                    target: VarId::new(x),
                    value,
                },
                &wide,
            )?;
            avg += w * mutual_information(&joint_x, &z_set, &[y_single])?.0;
        }
        reports.push(bits_report(
            "mic-average-mi",
            diff,
            avg,
            (diff - avg).abs() <= ENTROPY_TOL,
            model,
            protocol,
            &[y_single],
            &z_set,
        ));
    }

    // Two-variable chain rule, when a second variable is available.
    if pool.len() >= 2 {
        let a = pool[0];
        let b = pool[1];
        let q_ab = CausalQuery::new(model, &[a, b], x, protocol.clone())?;
        let lhs = causal_entropy(&q_ab, HcMethod::Definition)?.0;
        let first = causal_entropy(
            &CausalQuery::new(model, &[a], x, protocol.clone())?,
            HcMethod::Definition,
        )?
        .0;
        let second = conditional_causal_entropy(
            &CausalQuery::new(model, &[b], x, protocol.clone())?.with_given(&[a])?,
            CondHcMethod::Definition,
        )?
        .0;
        reports.push(bits_report(
            "hc-chain-rule-2",
            lhs,
            first + second,
            (lhs - (first + second)).abs() <= ENTROPY_TOL,
            model,
            protocol,
            &[a, b],
            &[],
        ));
    }

    reports.push(check_chain_rule_hc(model, &chain_order, x, protocol)?);
    reports.push(check_chain_rule_ic(model, &chain_order, x, protocol)?);

    Ok(reports)
}

/// Noteworthy but non-failing findings about a model: negative information
/// gain, causal entropy above the observational entropy, and chain models
/// where control grows downstream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Observation {
    pub note: String,
    pub detail: String,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn observations(model: &Scm, protocol: &Protocol) -> Result<Vec<Observation>> {
    let x = protocol.target().as_str();
    let mut out = Vec::new();
    let pool: Vec<&str> = model
        .endogenous()
        .map(|v| v.id.as_str())
        .filter(|v| *v != x)
        .collect();
    for y in &pool {
        let q = CausalQuery::new(model, &[*y], x, protocol.clone())?;
        let hc = causal_entropy(&q, HcMethod::Definition)?.0;
        let h = entropy(&model.entailed(&[*y])?).0;
        if hc > h + ENTROPY_TOL {
            out.push(Observation {
                note: "hc-exceeds-observational-entropy".to_owned(),
                detail: format!("Hc({y} | do({x} ~ X')) > H({y}); gain is negative"),
                lhs: hc,
                rhs: h,
            });
        }
    }
    // Chain shape: first variable parentless, each later one reading only
    // its predecessor, intervened on the head.
    let mechanisms = model.mechanisms();
    let is_chain = mechanisms.len() == 3
        && mechanisms[0].assignment.parents.is_empty()
        && mechanisms[1].assignment.parents == vec![mechanisms[0].variable.id.clone()]
        && mechanisms[2].assignment.parents == vec![mechanisms[1].variable.id.clone()]
        && x == mechanisms[0].variable.id.as_str();
    if is_chain {
        let mid = mechanisms[1].variable.id.as_str();
        let last = mechanisms[2].variable.id.as_str();
        let ic_mid = causal_information_gain(&CausalQuery::new(
            model,
            &[mid],
            x,
            protocol.clone(),
        )?)?
        .0;
        let ic_last = causal_information_gain(&CausalQuery::new(
            model,
            &[last],
            x,
            protocol.clone(),
        )?)?
        .0;
        if ic_last > ic_mid + ENTROPY_TOL {
            out.push(Observation {
                note: "chain-gain-grows-downstream".to_owned(),
                detail: format!(
                    "Ic({last} | do({x} ~ X')) > Ic({mid} | do({x} ~ X')) on a chain"
                ),
                lhs: ic_mid,
                rhs: ic_last,
            });
        }
    }
    Ok(out)
}

/// One generated model checked against the full suite.
#[derive(Clone, Debug)]
pub struct ModelCheck {
    pub trial: u64,
    pub model_seed: u64,
    pub reports: Vec<PropReport>,
}

impl ModelCheck {
    pub fn failed(&self) -> impl Iterator<Item = &PropReport> {
        self.reports.iter().filter(|r| !r.passed())
    }
}

fn check_one_seeded(cfg: &GenConfig, trial: u64) -> ModelCheck {
    let model_seed = stream_seed(cfg.seed, 2 * trial);
    let aux_seed = stream_seed(cfg.seed, 2 * trial + 1);
    let model_cfg = GenConfig {
        seed: model_seed,
        ..cfg.clone()
    };
    let model = gen_scm(&model_cfg);
    let mut rng = SplitMix64::new(aux_seed);
    let n = model.mechanisms().len() as u64;
    let target_idx = rng.below(n) as usize;
    let target = model.mechanisms()[target_idx].variable.id.as_str().to_owned();
    let protocol = gen_protocol(&mut rng, cfg, &model, &target);
    let trials_seed = rng.next_u64();
    let reports = check_all(&model, &protocol, trials_seed)
        .expect("generated models are valid");
    ModelCheck {
        trial,
        model_seed,
        reports,
    }
}

/// Runs the suite against `count` seeded random models, sequentially.
pub fn check_random_models_seq(cfg: &GenConfig, count: u64) -> Vec<ModelCheck> {
    (0..count).map(|t| check_one_seeded(cfg, t)).collect()
}

/// Runs the suite against `count` seeded random models on the rayon pool;
/// results come back in trial order.
#[cfg(feature = "parallel")]
pub fn check_random_models_par(cfg: &GenConfig, count: u64) -> Vec<ModelCheck> {
    let mut out: Vec<ModelCheck> = (0..count)
        .into_par_iter()
        .map(|t| check_one_seeded(cfg, t))
        .collect();
    out.sort_by_key(|c| c.trial);
    out
}

/// Parallel when the `parallel` feature is on, sequential otherwise. The
/// output is identical either way.
pub fn check_random_models(cfg: &GenConfig, count: u64) -> Vec<ModelCheck> {
    #[cfg(feature = "parallel")]
    {
        check_random_models_par(cfg, count)
    }
    #[cfg(not(feature = "parallel"))]
    {
        check_random_models_seq(cfg, count)
    }
}

// ---------------------------------------------------------------------------
// Hunts

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HuntKind {
    /// Models where intervening makes the target less predictable on
    /// average: `Ic < 0`.
    NegativeGain,
    /// Chains `X -> Y -> Z` where the head has more control over the far
    /// end than over the middle: `Ic(Z) > Ic(Y)`.
    DpiViolation,
}

impl HuntKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HuntKind::NegativeGain => "negative-gain",
            HuntKind::DpiViolation => "dpi",
        }
    }
}

/// A candidate fed to the hunt ahead of the random stream, e.g. a known
/// interesting model.
#[derive(Clone, Debug)]
pub struct HuntSeed {
    pub model: Scm,
    pub protocol: Protocol,
    /// `[target]` for the negative-gain hunt, `[mid, last]` for the chain
    /// hunt.
    pub targets: Vec<VarId>,
}

/// A shrunk, replayable counterexample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub kind: String,
    /// Canonical model text.
    pub scm: String,
    /// Protocol in pmf-literal syntax.
    pub protocol: String,
    pub intervened: String,
    pub targets: Vec<String>,
    pub lhs: f64,
    pub rhs: f64,
    pub inequality: String,
    pub seed: u64,
    pub trial: Option<u64>,
}

#[derive(Clone)]
struct Candidate {
    trial: Option<u64>,
    model: Scm,
    protocol: Protocol,
    targets: Vec<VarId>,
}

/// Violation values for a candidate, or `None` when the candidate does not
/// violate (or fails to evaluate, e.g. after an over-eager mutation).
fn violation(kind: HuntKind, c: &Candidate) -> Option<(f64, f64)> {
    let x = c.protocol.target().as_str();
    match kind {
        HuntKind::NegativeGain => {
            let q = CausalQuery::new(&c.model, &[c.targets[0].as_str()], x, c.protocol.clone())
                .ok()?;
            let ic = causal_information_gain(&q).ok()?.0;
            (ic < -ENTROPY_TOL).then_some((ic, 0.0))
        }
        HuntKind::DpiViolation => {
            let ic_mid = causal_information_gain(
                &CausalQuery::new(&c.model, &[c.targets[0].as_str()], x, c.protocol.clone())
                    .ok()?,
            )
            .ok()?
            .0;
            let ic_last = causal_information_gain(
                &CausalQuery::new(&c.model, &[c.targets[1].as_str()], x, c.protocol.clone())
                    .ok()?,
            )
            .ok()?
            .0;
            (ic_last > ic_mid + ENTROPY_TOL).then_some((ic_mid, ic_last))
        }
    }
}

fn eval_trial(kind: HuntKind, cfg: &GenConfig, trial: u64) -> Option<Candidate> {
    let model_seed = stream_seed(cfg.seed, 2 * trial);
    let aux_seed = stream_seed(cfg.seed, 2 * trial + 1);
    let model_cfg = GenConfig {
        seed: model_seed,
        ..cfg.clone()
    };
    let mut rng = SplitMix64::new(aux_seed);
    let candidate = match kind {
        HuntKind::NegativeGain => {
            let model = gen_scm(&model_cfg);
            let n = model.mechanisms().len();
            let x_idx = rng.below(n as u64) as usize;
            let x = model.mechanisms()[x_idx].variable.id.as_str().to_owned();
            let pool: Vec<String> = model
                .endogenous()
                .map(|v| v.id.as_str().to_owned())
                .filter(|v| *v != x)
                .collect();
            if pool.is_empty() {
                return None;
            }
            let y = pool[rng.below(pool.len() as u64) as usize].clone();
            let protocol = gen_protocol(&mut rng, cfg, &model, &x);
            Candidate {
                trial: Some(trial),
                model,
                protocol,
                targets: vec![VarId::new(y)],
            }
        }
        HuntKind::DpiViolation => {
            let model = gen_chain_scm(&model_cfg);
            let protocol = gen_protocol(&mut rng, cfg, &model, "X");
            Candidate {
                trial: Some(trial),
                model,
                protocol,
                targets: vec![VarId::new("Y"), VarId::new("Z")],
            }
        }
    };
    violation(kind, &candidate).map(|_| candidate)
}

// --- shrinking mutations ---------------------------------------------------

fn with_noise_dist(model: &Scm, idx: usize, dist: Pmf) -> Scm {
    let mut m = model.mechanisms()[idx].clone();
    m.noise_dist = dist;
    model.with_mechanism(idx, m)
}

/// Zeroes one positive noise mass and renormalizes the rest, exactly.
fn zero_noise_weight(model: &Scm, mech: usize, label: usize) -> Option<Scm> {
    let m = &model.mechanisms()[mech];
    let masses = m.noise_dist.masses();
    if masses[label].is_zero() {
        return None;
    }
    if masses.iter().filter(|w| !w.is_zero()).count() < 2 {
        return None;
    }
    let keep = Rational::one() - &masses[label];
    let new: Vec<Rational> = masses
        .iter()
        .enumerate()
        .map(|(i, w)| if i == label { Rational::zero() } else { w / &keep })
        .collect();
    let dist = Pmf::single(m.noise.id.as_str(), m.noise.range.clone(), new).ok()?;
    Some(with_noise_dist(model, mech, dist))
}

/// Removes a zero-mass label from a noise range, dropping the table rows
/// that mention it.
fn drop_noise_label(model: &Scm, mech: usize, label: usize) -> Option<Scm> {
    let m = &model.mechanisms()[mech];
    if m.noise.range.len() < 2 || !m.noise_dist.masses()[label].is_zero() {
        return None;
    }
    let Expr::Table(t) = &m.assignment.body else {
        return None;
    };
    let key_pos = t.keys.iter().position(|k| *k == m.noise.id)?;
    let dead = m.noise.range.label(label).to_owned();
    let labels: Vec<String> = m
        .noise
        .range
        .labels()
        .iter()
        .filter(|l| **l != dead)
        .cloned()
        .collect();
    let range = crate::dist::FiniteRange::new(labels).ok()?;
    let masses: Vec<Rational> = m
        .noise_dist
        .masses()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label)
        .map(|(_, w)| w.clone())
        .collect();
    let mut rows = BTreeMap::new();
    for (key, val) in &t.rows {
        if key[key_pos] != dead {
            rows.insert(key.clone(), val.clone());
        }
    }
    let mut out = m.clone();
    out.noise = crate::scm::Variable::new(m.noise.id.as_str(), range.clone());
    out.noise_dist = Pmf::single(m.noise.id.as_str(), range, masses).ok()?;
    out.assignment.body = Expr::Table(TableExpr {
        keys: t.keys.clone(),
        rows,
    });
    let next = model.with_mechanism(mech, out);
    next.is_valid().then_some(next)
}

/// Zeroes one positive protocol mass and renormalizes the rest.
fn zero_protocol_weight(protocol: &Protocol, label: usize) -> Option<Protocol> {
    let masses = protocol.masses();
    if masses[label].is_zero() {
        return None;
    }
    if masses.iter().filter(|w| !w.is_zero()).count() < 2 {
        return None;
    }
    let keep = Rational::one() - &masses[label];
    let new: Vec<Rational> = masses
        .iter()
        .enumerate()
        .map(|(i, w)| if i == label { Rational::zero() } else { w / &keep })
        .collect();
    Protocol::over_range(protocol.target().as_str(), protocol.range().clone(), new).ok()
}

/// Drops one variable that is neither intervened on nor queried, fixing any
/// table that read it to the victim's first value.
fn drop_variable(c: &Candidate, victim: &str) -> Option<Scm> {
    let vi = c.model.index_of(victim)?;
    let label0 = c.model.mechanisms()[vi].variable.range.label(0).to_owned();
    let mut mechanisms: Vec<Mechanism> = Vec::new();
    for (i, m) in c.model.mechanisms().iter().enumerate() {
        if i == vi {
            continue;
        }
        let mut m = m.clone();
        if m.assignment.parents.iter().any(|p| p.as_str() == victim) {
            let Expr::Table(t) = &m.assignment.body else {
                return None;
            };
            let key_pos = t.keys.iter().position(|k| k.as_str() == victim)?;
            let mut rows = BTreeMap::new();
            for (key, val) in &t.rows {
                if key[key_pos] == label0 {
                    let mut nk = key.clone();
                    nk.remove(key_pos);
                    rows.insert(nk, val.clone());
                }
            }
            let mut keys = t.keys.clone();
            keys.remove(key_pos);
            m.assignment.body = Expr::Table(TableExpr { keys, rows });
            m.assignment.parents.retain(|p| p.as_str() != victim);
        }
        mechanisms.push(m);
    }
    let out = Scm::new(c.model.name().to_owned(), mechanisms);
    out.is_valid().then_some(out)
}

/// Greedy shrinking: repeatedly apply the first mutation that keeps the
/// violation alive, until none does. Deterministic.
fn shrink(kind: HuntKind, mut c: Candidate) -> Candidate {
    loop {
        let mut improved = false;

        // Drop spectator variables first; it shrinks everything downstream.
        if kind == HuntKind::NegativeGain {
            let victims: Vec<String> = c
                .model
                .endogenous()
                .map(|v| v.id.as_str().to_owned())
                .filter(|v| {
                    v != c.protocol.target().as_str()
                        && !c.targets.iter().any(|t| t.as_str() == v)
                })
                .collect();
            for victim in victims {
                if let Some(model) = drop_variable(&c, &victim) {
                    let cand = Candidate {
                        model,
                        ..c.clone()
                    };
                    if violation(kind, &cand).is_some() {
                        c = cand;
                        improved = true;
                        break;
                    }
                }
            }
            if improved {
                continue;
            }
        }

        'noise: for mech in 0..c.model.mechanisms().len() {
            let len = c.model.mechanisms()[mech].noise_dist.masses().len();
            for label in 0..len {
                if let Some(model) = zero_noise_weight(&c.model, mech, label) {
                    let cand = Candidate {
                        model,
                        ..c.clone()
                    };
                    if violation(kind, &cand).is_some() {
                        c = cand;
                        improved = true;
                        break 'noise;
                    }
                }
                if let Some(model) = drop_noise_label(&c.model, mech, label) {
                    let cand = Candidate {
                        model,
                        ..c.clone()
                    };
                    if violation(kind, &cand).is_some() {
                        c = cand;
                        improved = true;
                        break 'noise;
                    }
                }
            }
        }
        if improved {
            continue;
        }

        for label in 0..c.protocol.masses().len() {
            if let Some(protocol) = zero_protocol_weight(&c.protocol, label) {
                let cand = Candidate {
                    protocol,
                    ..c.clone()
                };
                if violation(kind, &cand).is_some() {
                    c = cand;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            return c;
        }
    }
}

fn witness_of(kind: HuntKind, cfg: &GenConfig, c: &Candidate) -> Witness {
    let (lhs, rhs) = violation(kind, c).expect("witnesses violate");
    let inequality = match kind {
        HuntKind::NegativeGain => format!(
            "Ic({} | do({} ~ X')) = {lhs} < 0",
            c.targets[0],
            c.protocol.target()
        ),
        HuntKind::DpiViolation => format!(
            "Ic({} | do({} ~ X')) = {rhs} > Ic({} | do({} ~ X')) = {lhs}",
            c.targets[1],
            c.protocol.target(),
            c.targets[0],
            c.protocol.target()
        ),
    };
    Witness {
        kind: kind.as_str().to_owned(),
        scm: dsl::serialize_scm(&c.model),
        protocol: c.protocol.to_pmf_text(),
        intervened: c.protocol.target().to_string(),
        targets: c.targets.iter().map(|t| t.to_string()).collect(),
        lhs,
        rhs,
        inequality,
        seed: cfg.seed,
        trial: c.trial,
    }
}

const HUNT_CHUNK: u64 = 256;

fn eval_chunk(kind: HuntKind, cfg: &GenConfig, lo: u64, hi: u64) -> Vec<Candidate> {
    #[cfg(feature = "parallel")]
    {
        let mut found: Vec<Candidate> = (lo..hi)
            .into_par_iter()
            .filter_map(|t| eval_trial(kind, cfg, t))
            .collect();
        found.sort_by_key(|c| c.trial);
        found
    }
    #[cfg(not(feature = "parallel"))]
    {
        (lo..hi).filter_map(|t| eval_trial(kind, cfg, t)).collect()
    }
}

/// Scans up to `budget` seeded trials for violations, shrinks each hit and
/// returns at most `limit` witnesses, in trial order. Candidates in
/// `primed` are evaluated before the random stream.
pub fn hunt_with_seeds(
    kind: HuntKind,
    cfg: &GenConfig,
    budget: u64,
    limit: usize,
    primed: &[HuntSeed],
) -> Vec<Witness> {
    let mut out = Vec::new();
    for seed in primed {
        let candidate = Candidate {
            trial: None,
            model: seed.model.clone(),
            protocol: seed.protocol.clone(),
            targets: seed.targets.clone(),
        };
        // Primed candidates are reported as handed in, not shrunk; they are
        // usually curated models whose exact numbers matter.
        if violation(kind, &candidate).is_some() {
            out.push(witness_of(kind, cfg, &candidate));
            if out.len() >= limit {
                return out;
            }
        }
    }
    let mut lo = 0;
    while lo < budget && out.len() < limit {
        let hi = (lo + HUNT_CHUNK).min(budget);
        for candidate in eval_chunk(kind, cfg, lo, hi) {
            out.push(witness_of(kind, cfg, &shrink(kind, candidate)));
            if out.len() >= limit {
                break;
            }
        }
        lo = hi;
    }
    out
}

pub fn hunt(kind: HuntKind, cfg: &GenConfig, budget: u64, limit: usize) -> Vec<Witness> {
    hunt_with_seeds(kind, cfg, budget, limit, &[])
}

/// Re-runs a witness from its serialized form and returns the two sides of
/// its inequality.
pub fn replay(w: &Witness) -> Result<(f64, f64)> {
    let model = dsl::parse_scm(&w.scm)?;
    let pairs = dsl::parse_pmf_text(&w.protocol)?;
    let protocol = Protocol::from_label_masses(&model, &w.intervened, &pairs)?;
    let ic_of = |target: &str| -> Result<f64> {
        let q = CausalQuery::new(&model, &[target], w.intervened.as_str(), protocol.clone())?;
        Ok(causal_information_gain(&q)?.0)
    };
    match w.kind.as_str() {
        "dpi" => Ok((ic_of(&w.targets[0])?, ic_of(&w.targets[1])?)),
        _ => Ok((ic_of(&w.targets[0])?, 0.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use crate::scm::tests::additive_chain;

    fn one_third_protocol(model: &Scm) -> Protocol {
        Protocol::new(model, "X", vec![rat(2, 3), rat(1, 3)]).unwrap()
    }

    #[test]
    fn additive_chain_passes_the_whole_suite() {
        let model = additive_chain();
        let protocol = one_third_protocol(&model);
        let reports = check_all(&model, &protocol, 7).unwrap();
        assert!(reports.len() >= 11, "{}", reports.len());
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
        let agreement = reports
            .iter()
            .find(|r| r.prop == "hc-method-agreement")
            .unwrap();
        let (Side::Bits(lhs), Side::Bits(rhs)) = (&agreement.lhs, &agreement.rhs) else {
            panic!("expected bits");
        };
        assert!((lhs - 1.0).abs() < 1e-9 && (rhs - 1.0).abs() < 1e-9);
    }

    #[test]
    fn seeded_batches_pass_and_are_deterministic() {
        let cfg = GenConfig::new(11);
        let a = check_random_models(&cfg, 40);
        let b = check_random_models_seq(&cfg, 40);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.model_seed, y.model_seed);
            assert_eq!(x.reports, y.reports);
            for r in &x.reports {
                assert!(r.passed(), "seed {}: {r:?}", x.model_seed);
            }
        }
    }

    #[test]
    fn hunts_find_seeded_counterexamples_immediately() {
        // A gate-shaped model with a fair protocol has negative gain.
        let gate = dsl::parse_scm(
            "scm gate {\n  noise N_X ~ {x0: 9/10, x1: 1/10}\n  var X : {x0, x1} = N_X\n  noise N_Y ~ {y0: 1/2, y1: 1/2}\n  var Y : {y0, y1} = if X = x1 then N_Y else y0\n}\n",
        )
        .unwrap();
        let protocol = Protocol::new(&gate, "X", vec![rat(1, 2), rat(1, 2)]).unwrap();
        let seeds = [HuntSeed {
            model: gate,
            protocol,
            targets: vec![VarId::new("Y")],
        }];
        let witnesses = hunt_with_seeds(HuntKind::NegativeGain, &GenConfig::new(3), 0, 1, &seeds);
        assert_eq!(witnesses.len(), 1);
        let w = &witnesses[0];
        assert!(w.lhs < -0.2, "{}", w.lhs);
        let (lhs, rhs) = replay(w).unwrap();
        assert!((lhs - w.lhs).abs() < 1e-12 && (rhs - w.rhs).abs() < 1e-12);
    }

    #[test]
    fn chain_hunt_accepts_the_known_chain() {
        let chain = dsl::parse_scm(
            "scm dpi_chain {\n  noise N_X ~ {x1: 1/2, x2: 1/2}\n  var X : {x1, x2} = N_X\n  noise N_Y ~ {y1: 1/2, y2: 1/2}\n  var Y : {y1, y2, y3} = if X = x1 then N_Y else y3\n  noise N_Z ~ {u: 1}\n  var Z : {z1, z2} = table (Y, N_Z) {\n    (y1, u) -> z1,\n    (y2, u) -> z1,\n    (y3, u) -> z2\n  }\n}\n",
        )
        .unwrap();
        let protocol = Protocol::from_label_masses(
            &chain,
            "X",
            &[("x1".to_owned(), rat(1, 1))],
        )
        .unwrap();
        let seeds = [HuntSeed {
            model: chain,
            protocol,
            targets: vec![VarId::new("Y"), VarId::new("Z")],
        }];
        let witnesses = hunt_with_seeds(HuntKind::DpiViolation, &GenConfig::new(3), 0, 1, &seeds);
        assert_eq!(witnesses.len(), 1);
        let w = &witnesses[0];
        assert!((w.lhs - 0.5).abs() < 1e-9, "Ic(Y) = {}", w.lhs);
        assert!((w.rhs - 1.0).abs() < 1e-9, "Ic(Z) = {}", w.rhs);
        let (lhs, rhs) = replay(w).unwrap();
        assert!((lhs - w.lhs).abs() < 1e-12 && (rhs - w.rhs).abs() < 1e-12);
    }

    #[test]
    fn random_hunts_find_witnesses() {
        let cfg = GenConfig::new(7);
        let neg = hunt(HuntKind::NegativeGain, &cfg, 2000, 1);
        assert!(!neg.is_empty(), "no negative-gain witness in 2000 trials");
        let dpi = hunt(HuntKind::DpiViolation, &cfg, 2000, 1);
        assert!(!dpi.is_empty(), "no chain witness in 2000 trials");
        for w in neg.iter().chain(&dpi) {
            let (lhs, rhs) = replay(w).unwrap();
            assert!((lhs - w.lhs).abs() < 1e-12);
            assert!((rhs - w.rhs).abs() < 1e-12);
        }
        // Determinism across runs (and across the parallel/serial split).
        let again = hunt(HuntKind::NegativeGain, &cfg, 2000, 1);
        assert_eq!(neg[0].scm, again[0].scm);
        assert_eq!(neg[0].trial, again[0].trial);
    }

    #[test]
    fn observations_flag_the_gate_and_the_chain() {
        let gate = dsl::parse_scm(
            "scm gate {\n  noise N_X ~ {x0: 9/10, x1: 1/10}\n  var X : {x0, x1} = N_X\n  noise N_Y ~ {y0: 1/2, y1: 1/2}\n  var Y : {y0, y1} = if X = x1 then N_Y else y0\n}\n",
        )
        .unwrap();
        let protocol = Protocol::new(&gate, "X", vec![rat(1, 2), rat(1, 2)]).unwrap();
        let notes = observations(&gate, &protocol).unwrap();
        assert!(notes
            .iter()
            .any(|o| o.note == "hc-exceeds-observational-entropy"));
    }
}
