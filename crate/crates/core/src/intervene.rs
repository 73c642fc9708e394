//! The do-operator. An intervention swaps out one mechanism of a model:
//! atomic interventions pin the target to a constant, stochastic
//! interventions wire it to a fresh exogenous variable with a chosen
//! distribution, and general interventions install an arbitrary new
//! assignment. All of them return a new model and leave the input untouched.

use std::collections::BTreeSet;

use num::Zero;

use crate::dist::{FiniteRange, Pmf, VarId};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::rational::Rational;
use crate::scm::{Assignment, Mechanism, Scm, Variable, Violation};

/// Distribution over the values a target variable will be set to: a fresh
/// auxiliary variable with exactly the target's range, independent of the
/// model by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Protocol {
    target: VarId,
    aux: VarId,
    range: FiniteRange,
    masses: Vec<Rational>,
}

impl Protocol {
    /// Protocol over `target`'s range in the given model, one mass per
    /// value in range order.
    pub fn new(model: &Scm, target: &str, masses: Vec<Rational>) -> Result<Self> {
        let var = model
            .variable(target)
            .ok_or_else(|| Error::UnknownVariable(target.to_owned()))?;
        Self::over_range(target, var.range.clone(), masses)
    }

    /// Protocol from an explicit range. Masses must be non-negative and sum
    /// to exactly 1.
    pub fn over_range(target: &str, range: FiniteRange, masses: Vec<Rational>) -> Result<Self> {
        // Reuse the pmf invariant checks, then discard the temporary scope.
        Pmf::single("protocol", range.clone(), masses.clone())?;
        Ok(Protocol {
            target: VarId::new(target),
            aux: VarId::new(format!("{target}_prime")),
            range,
            masses,
        })
    }

    /// Masses given per label, in any order. Labels must all belong to the
    /// target's range; unlisted labels get mass zero.
    pub fn from_label_masses(
        model: &Scm,
        target: &str,
        pairs: &[(String, Rational)],
    ) -> Result<Self> {
        let var = model
            .variable(target)
            .ok_or_else(|| Error::UnknownVariable(target.to_owned()))?;
        let mut masses = vec![Rational::zero(); var.range.len()];
        for (label, mass) in pairs {
            let idx = var.range.index_of(label).ok_or_else(|| {
                Error::RangeMismatch(format!("`{label}` is not a value of `{target}`"))
            })?;
            masses[idx] = mass.clone();
        }
        Self::over_range(target, var.range.clone(), masses)
    }

    /// Point-mass protocol at one value.
    pub fn point(model: &Scm, target: &str, value: usize) -> Result<Self> {
        let var = model
            .variable(target)
            .ok_or_else(|| Error::UnknownVariable(target.to_owned()))?;
        if value >= var.range.len() {
            return Err(Error::RangeMismatch(format!(
                "value index {value} outside range of `{target}`"
            )));
        }
        let masses = (0..var.range.len())
            .map(|i| {
                if i == value {
                    Rational::from_integer(1.into())
                } else {
                    Rational::zero()
                }
            })
            .collect();
        Self::over_range(target, var.range.clone(), masses)
    }

    pub fn target(&self) -> &VarId {
        &self.target
    }

    pub fn range(&self) -> &FiniteRange {
        &self.range
    }

    pub fn masses(&self) -> &[Rational] {
        &self.masses
    }

    pub fn mass_of(&self, value: usize) -> &Rational {
        &self.masses[value]
    }

    /// Value indices with strictly positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.masses.len()).filter(|&i| !self.masses[i].is_zero())
    }

    /// The protocol distribution in the DSL's pmf literal syntax.
    pub fn to_pmf_text(&self) -> String {
        let pairs: Vec<String> = self
            .range
            .labels()
            .iter()
            .zip(&self.masses)
            .map(|(l, m)| format!("{l}: {}", crate::rational::format_rational(m)))
            .collect();
        format!("{{{}}}", pairs.join(", "))
    }
}

#[derive(Clone, Debug)]
pub enum Intervention {
    /// `do(X = x)`: pin the target to one value.
    Atomic { target: VarId, value: usize },
    /// `do(X = X')`: wire the target to a fresh exogenous variable.
    Stochastic(Protocol),
    /// Replace the target's assignment wholesale, including a new noise
    /// variable with its distribution.
    General {
        assignment: Assignment,
        noise: Variable,
        noise_dist: Pmf,
    },
}

fn fresh_id(base: &str, taken: &BTreeSet<String>) -> VarId {
    if !taken.contains(base) {
        return VarId::new(base);
    }
    let mut candidate = format!("{base}_");
    while taken.contains(&candidate) {
        candidate.push('_');
    }
    VarId::new(candidate)
}

/// Applies an intervention, producing the post-intervention model.
pub fn apply(model: &Scm, iv: &Intervention) -> Result<Scm> {
    let report = model.validate();
    if !report.is_valid() {
        return Err(Error::InvalidModel(report));
    }
    let (target, mechanism) = match iv {
        Intervention::Atomic { target, value } => {
            let idx = model
                .index_of(target.as_str())
                .ok_or_else(|| Error::UnknownVariable(target.to_string()))?;
            let var = &model.mechanisms()[idx].variable;
            if *value >= var.range.len() {
                return Err(Error::RangeMismatch(format!(
                    "value index {value} outside range of `{target}`"
                )));
            }
            let taken = model.ids_excluding_noise_of(idx);
            let noise_id = fresh_id(&format!("N_{target}"), &taken);
            let noise = Variable::new(noise_id.clone(), var.range.clone());
            let noise_dist = Pmf::point(noise_id.clone(), var.range.clone(), *value)?;
            (
                idx,
                Mechanism {
                    variable: var.clone(),
                    assignment: Assignment {
                        target: target.clone(),
                        parents: vec![],
                        noise: noise_id.clone(),
                        body: Expr::Var(noise_id),
                    },
                    noise,
                    noise_dist,
                },
            )
        }
        Intervention::Stochastic(protocol) => {
            let idx = model
                .index_of(protocol.target().as_str())
                .ok_or_else(|| Error::UnknownVariable(protocol.target().to_string()))?;
            let var = &model.mechanisms()[idx].variable;
            if var.range != *protocol.range() {
                return Err(Error::RangeMismatch(format!(
                    "protocol range does not match the range of `{}`",
                    protocol.target()
                )));
            }
            let taken = model.ids_excluding_noise_of(idx);
            let aux = fresh_id(protocol.aux.as_str(), &taken);
            let noise = Variable::new(aux.clone(), var.range.clone());
            let noise_dist =
                Pmf::single(aux.clone(), var.range.clone(), protocol.masses.clone())?;
            (
                idx,
                Mechanism {
                    variable: var.clone(),
                    assignment: Assignment {
                        target: protocol.target().clone(),
                        parents: vec![],
                        noise: aux.clone(),
                        body: Expr::Var(aux),
                    },
                    noise,
                    noise_dist,
                },
            )
        }
        Intervention::General {
            assignment,
            noise,
            noise_dist,
        } => {
            let idx = model
                .index_of(assignment.target.as_str())
                .ok_or_else(|| Error::UnknownVariable(assignment.target.to_string()))?;
            if noise_dist.range_of(noise.id.as_str()) != Some(&noise.range) {
                return Err(Error::RangeMismatch(format!(
                    "noise distribution does not cover `{}` with its range",
                    noise.id
                )));
            }
            (
                idx,
                Mechanism {
                    variable: model.mechanisms()[idx].variable.clone(),
                    assignment: assignment.clone(),
                    noise: noise.clone(),
                    noise_dist: noise_dist.clone(),
                },
            )
        }
    };

    let out = model.with_mechanism(target, mechanism);
    let report = out.validate();
    if report.is_valid() {
        return Ok(out);
    }
    if let Some(Violation::Cycle { path }) = report
        .violations
        .iter()
        .find(|v| matches!(v, Violation::Cycle { .. }))
    {
        let names: Vec<&str> = path.iter().map(|v| v.as_str()).collect();
        return Err(Error::CycleCreated(names.join(" -> ")));
    }
    Err(Error::InvalidModel(report))
}

/// Post-intervention distribution of `vars`: `entailed(apply(model, iv))`.
pub fn post_dist<S: AsRef<str>>(model: &Scm, iv: &Intervention, vars: &[S]) -> Result<Pmf> {
    apply(model, iv)?.entailed(vars)
}

/// Distribution of `vars` after the stochastic intervention given by
/// `protocol`, conditioned on the intervened variable having come out as
/// value `x`. Exactly equal to the atomic post-intervention distribution.
pub fn covariate_specific<S: AsRef<str>>(
    model: &Scm,
    protocol: &Protocol,
    x: usize,
    vars: &[S],
) -> Result<Pmf> {
    let target = protocol.target().as_str();
    if vars.iter().any(|v| v.as_ref() == target) {
        return Err(Error::BadQuery(format!(
            "queried variables must not contain the intervened `{target}`"
        )));
    }
    let intervened = apply(model, &Intervention::Stochastic(protocol.clone()))?;
    let mut wide: Vec<String> = vars.iter().map(|v| v.as_ref().to_owned()).collect();
    wide.push(target.to_owned());
    let joint = intervened.entailed(&wide)?;
    let conditioned = joint.condition(&[(target, x)])?;
    Ok(conditioned)
}
