//! The structural causal model: finite-range endogenous variables, one noise
//! variable per assignment, deterministic structural assignments over
//! parents + noise, and an acyclic causal graph.
//!
//! Inference is exact and comes in two independent flavours:
//! [`Scm::entailed`] runs a topological forward pass over assignment-induced
//! conditionals, [`Scm::entailed_oracle`] enumerates the full joint noise
//! space. They must agree bit for bit as rationals; the test suites lean on
//! that cross-check everywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::Zero;

use crate::dist::{FiniteRange, Pmf, VarId};
use crate::error::{Error, Result};
use crate::expr::{self, Expr, Value};
use crate::rational::{format_rational, Rational};

/// Default cap on the number of cells of the full joint (endogenous and
/// noise ranges multiplied). Models above the cap are refused rather than
/// enumerated slowly.
pub const DEFAULT_CELL_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub id: VarId,
    pub range: FiniteRange,
}

impl Variable {
    pub fn new(id: impl Into<VarId>, range: FiniteRange) -> Self {
        Variable {
            id: id.into(),
            range,
        }
    }
}

/// Structural assignment for one endogenous variable. `parents` is the
/// ordered list of endogenous variables the body reads; exactly one noise
/// variable appears.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub target: VarId,
    pub parents: Vec<VarId>,
    pub noise: VarId,
    pub body: Expr,
}

/// One endogenous variable bundled with its assignment, its noise variable
/// and the noise distribution. An [`Scm`] is an ordered list of these, so
/// the endogenous/noise/assignment correspondence is one-to-one by
/// construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mechanism {
    pub variable: Variable,
    pub assignment: Assignment,
    pub noise: Variable,
    pub noise_dist: Pmf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scm {
    name: String,
    mechanisms: Vec<Mechanism>,
    /// Lexicographically-least topological order over mechanism indices,
    /// present whenever the parent graph is acyclic and well-formed.
    topo: Option<Vec<usize>>,
}

/// One rule violation found by [`Scm::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateId {
        id: VarId,
    },
    Cycle {
        path: Vec<VarId>,
    },
    UnknownParent {
        target: VarId,
        parent: VarId,
    },
    /// Declared parents must be exactly the endogenous variables the body
    /// references, in declaration order; the serializer relies on this.
    ParentMismatch {
        target: VarId,
        declared: Vec<VarId>,
        referenced: Vec<VarId>,
    },
    BadNoiseWiring {
        target: VarId,
        detail: String,
    },
    NonTotal {
        target: VarId,
        witness: Vec<(VarId, String)>,
        detail: String,
    },
    BadNoiseDist {
        noise: VarId,
        detail: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "duplicate variable id `{id}`"),
            Violation::Cycle { path } => {
                let names: Vec<&str> = path.iter().map(|v| v.as_str()).collect();
                write!(f, "cycle in the parent graph: {}", names.join(" -> "))
            }
            Violation::UnknownParent { target, parent } => {
                write!(f, "assignment for `{target}` lists unknown parent `{parent}`")
            }
            Violation::ParentMismatch {
                target,
                declared,
                referenced,
            } => {
                let d: Vec<&str> = declared.iter().map(|v| v.as_str()).collect();
                let r: Vec<&str> = referenced.iter().map(|v| v.as_str()).collect();
                write!(
                    f,
                    "assignment for `{target}` declares parents [{}] but reads [{}]",
                    d.join(", "),
                    r.join(", ")
                )
            }
            Violation::BadNoiseWiring { target, detail } => {
                write!(f, "assignment for `{target}`: {detail}")
            }
            Violation::NonTotal {
                target,
                witness,
                detail,
            } => {
                let env: Vec<String> =
                    witness.iter().map(|(v, l)| format!("{v}={l}")).collect();
                write!(
                    f,
                    "assignment for `{target}` is not total at ({}): {detail}",
                    env.join(", ")
                )
            }
            Violation::BadNoiseDist { noise, detail } => {
                write!(f, "noise distribution for `{noise}`: {detail}")
            }
        }
    }
}

/// All violations found in a model; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

impl Scm {
    /// Builds a model without rejecting rule violations; call
    /// [`Scm::validate`] to collect them. Inference refuses invalid models.
    pub fn new(name: impl Into<String>, mechanisms: Vec<Mechanism>) -> Self {
        let mut scm = Scm {
            name: name.into(),
            mechanisms,
            topo: None,
        };
        scm.topo = scm.compute_topo();
        scm
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn endogenous(&self) -> impl Iterator<Item = &Variable> {
        self.mechanisms.iter().map(|m| &m.variable)
    }

    pub fn noise_vars(&self) -> impl Iterator<Item = &Variable> {
        self.mechanisms.iter().map(|m| &m.noise)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.mechanisms
            .iter()
            .position(|m| m.variable.id.as_str() == id)
    }

    pub fn variable(&self, id: &str) -> Option<&Variable> {
        self.index_of(id).map(|i| &self.mechanisms[i].variable)
    }

    pub fn mechanism(&self, id: &str) -> Option<&Mechanism> {
        self.index_of(id).map(|i| &self.mechanisms[i])
    }

    /// Lexicographically-least topological order (indices into
    /// `mechanisms`), or `None` while the graph is cyclic or malformed.
    pub fn topological_order(&self) -> Option<&[usize]> {
        self.topo.as_deref()
    }

    /// Replaces one mechanism wholesale; the shared primitive behind every
    /// intervention. Returns a new model, the receiver is untouched.
    pub(crate) fn with_mechanism(&self, idx: usize, mechanism: Mechanism) -> Scm {
        let mut mechanisms = self.mechanisms.clone();
        mechanisms[idx] = mechanism;
        Scm::new(self.name.clone(), mechanisms)
    }

    /// Every id in the model (endogenous and noise) except the noise id of
    /// mechanism `skip`, whose slot is being replaced.
    pub(crate) fn ids_excluding_noise_of(&self, skip: usize) -> BTreeSet<String> {
        let mut ids = BTreeSet::new();
        for (i, m) in self.mechanisms.iter().enumerate() {
            ids.insert(m.variable.id.as_str().to_owned());
            if i != skip {
                ids.insert(m.noise.id.as_str().to_owned());
            }
        }
        ids
    }

    fn parent_indices(&self) -> Option<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(self.mechanisms.len());
        for m in &self.mechanisms {
            let mut row = Vec::with_capacity(m.assignment.parents.len());
            for p in &m.assignment.parents {
                row.push(self.index_of(p.as_str())?);
            }
            out.push(row);
        }
        Some(out)
    }

    /// Kahn's algorithm with a min-index frontier, so the stored order is
    /// the lexicographically-least one and table layouts are deterministic.
    fn compute_topo(&self) -> Option<Vec<usize>> {
        let parents = self.parent_indices()?;
        let n = self.mechanisms.len();
        let mut remaining_deps: Vec<usize> = parents.iter().map(|p| p.len()).collect();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (child, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(child);
            }
        }
        let mut frontier: BTreeSet<usize> = (0..n).filter(|&i| remaining_deps[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&next) = frontier.iter().next() {
            frontier.remove(&next);
            order.push(next);
            for &c in &children[next] {
                remaining_deps[c] -= 1;
                if remaining_deps[c] == 0 {
                    frontier.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Finds a directed cycle in the parent graph for the validation report.
    fn find_cycle(&self) -> Option<Vec<VarId>> {
        let parents = self.parent_indices()?;
        let n = self.mechanisms.len();
        // children[i] lists assignments that read variable i.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (child, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(child);
            }
        }
        let mut state = vec![0u8; n]; // 0 unseen, 1 on stack, 2 done
        let mut stack = Vec::new();
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            if let Some(path) = self.dfs_cycle(start, &children, &mut state, &mut stack) {
                return Some(path);
            }
        }
        None
    }

    fn dfs_cycle(
        &self,
        node: usize,
        children: &[Vec<usize>],
        state: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<VarId>> {
        state[node] = 1;
        stack.push(node);
        for &c in &children[node] {
            if state[c] == 1 {
                let from = stack.iter().position(|&s| s == c).unwrap();
                let mut path: Vec<VarId> = stack[from..]
                    .iter()
                    .map(|&i| self.mechanisms[i].variable.id.clone())
                    .collect();
                path.push(self.mechanisms[c].variable.id.clone());
                return Some(path);
            }
            if state[c] == 0 {
                if let Some(p) = self.dfs_cycle(c, children, state, stack) {
                    return Some(p);
                }
            }
        }
        stack.pop();
        state[node] = 2;
        None
    }

    /// Collects every rule violation: duplicate ids, unknown or misdeclared
    /// parents, noise wiring, cycles (with a witness path), degenerate noise
    /// distributions and non-total assignments (with a witness input).
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let mut seen = BTreeSet::new();
        for m in &self.mechanisms {
            for id in [&m.variable.id, &m.noise.id] {
                if !seen.insert(id.as_str().to_owned()) {
                    violations.push(Violation::DuplicateId { id: id.clone() });
                }
            }
        }

        for m in &self.mechanisms {
            if m.assignment.target != m.variable.id {
                violations.push(Violation::BadNoiseWiring {
                    target: m.variable.id.clone(),
                    detail: format!(
                        "assignment targets `{}` instead of its own variable",
                        m.assignment.target
                    ),
                });
            }
            for p in &m.assignment.parents {
                if self.index_of(p.as_str()).is_none() {
                    violations.push(Violation::UnknownParent {
                        target: m.variable.id.clone(),
                        parent: p.clone(),
                    });
                }
            }
            if m.assignment.noise != m.noise.id {
                violations.push(Violation::BadNoiseWiring {
                    target: m.variable.id.clone(),
                    detail: format!(
                        "assignment names noise `{}`, mechanism carries `{}`",
                        m.assignment.noise, m.noise.id
                    ),
                });
            }

            // Parents must be exactly the endogenous references of the body,
            // and the body must read exactly one noise variable: its own.
            let refs = m.assignment.body.referenced_vars();
            let mut endo_refs = Vec::new();
            let mut noise_refs = Vec::new();
            let mut unknown = Vec::new();
            for r in &refs {
                if self.index_of(r.as_str()).is_some() {
                    endo_refs.push(r.clone());
                } else if self
                    .mechanisms
                    .iter()
                    .any(|other| other.noise.id == *r)
                {
                    noise_refs.push(r.clone());
                } else {
                    unknown.push(r.clone());
                }
            }
            for u in unknown {
                violations.push(Violation::UnknownParent {
                    target: m.variable.id.clone(),
                    parent: u,
                });
            }
            let mut declared = m.assignment.parents.clone();
            declared.sort_by_key(|v| self.index_of(v.as_str()));
            let mut referenced = endo_refs.clone();
            referenced.sort_by_key(|v| self.index_of(v.as_str()));
            referenced.dedup();
            if declared != referenced || m.assignment.parents != declared {
                violations.push(Violation::ParentMismatch {
                    target: m.variable.id.clone(),
                    declared: m.assignment.parents.clone(),
                    referenced,
                });
            }
            if noise_refs.len() != 1 || noise_refs[0] != m.noise.id {
                violations.push(Violation::BadNoiseWiring {
                    target: m.variable.id.clone(),
                    detail: if noise_refs.is_empty() {
                        "body references no noise variable; expected exactly one".to_owned()
                    } else {
                        format!(
                            "body must reference exactly its own noise variable `{}`, found [{}]",
                            m.noise.id,
                            noise_refs
                                .iter()
                                .map(|v| v.as_str())
                                .collect::<Vec<_>>()
                                .join(", ")
                        )
                    },
                });
            }

            // Noise distribution: single-variable pmf over exactly the noise
            // variable and its range. Pmf construction already guarantees
            // non-negative masses summing to 1; re-add the sum as a belt
            // check since reports should stand on their own.
            let dist = &m.noise_dist;
            if dist.arity() != 1
                || dist.scope()[0].0 != m.noise.id
                || dist.scope()[0].1 != m.noise.range
            {
                violations.push(Violation::BadNoiseDist {
                    noise: m.noise.id.clone(),
                    detail: "scope must be exactly the noise variable and its range".to_owned(),
                });
            } else {
                let total: Rational = dist.masses().iter().sum();
                if !num::One::is_one(&total) {
                    violations.push(Violation::BadNoiseDist {
                        noise: m.noise.id.clone(),
                        detail: format!("masses sum to {}", format_rational(&total)),
                    });
                }
            }
        }

        if self.topo.is_none() {
            if let Some(path) = self.find_cycle() {
                violations.push(Violation::Cycle { path });
            }
        }

        // Totality: every (parent-tuple, noise-value) must evaluate to a
        // value inside the target range. Only meaningful once the wiring
        // above is sound for the mechanism at hand.
        if violations.is_empty() {
            for m in &self.mechanisms {
                if let Some(v) = self.totality_violation(m) {
                    violations.push(v);
                }
            }
        }

        ValidationReport { violations }
    }

    fn totality_violation(&self, m: &Mechanism) -> Option<Violation> {
        let parent_ranges: Vec<&FiniteRange> = m
            .assignment
            .parents
            .iter()
            .map(|p| &self.variable(p.as_str()).expect("checked").range)
            .collect();
        let mut dims: Vec<usize> = parent_ranges.iter().map(|r| r.len()).collect();
        dims.push(m.noise.range.len());
        let total: usize = dims.iter().product();
        for flat in 0..total {
            let mut rest = flat;
            let mut idxs = vec![0; dims.len()];
            for k in (0..dims.len()).rev() {
                idxs[k] = rest % dims[k];
                rest /= dims[k];
            }
            let mut env: BTreeMap<&str, String> = BTreeMap::new();
            for (k, p) in m.assignment.parents.iter().enumerate() {
                env.insert(p.as_str(), parent_ranges[k].label(idxs[k]).to_owned());
            }
            env.insert(
                m.noise.id.as_str(),
                m.noise.range.label(idxs[dims.len() - 1]).to_owned(),
            );
            let lookup = |name: &str| env.get(name).cloned();
            let witness = || {
                let mut w: Vec<(VarId, String)> = m
                    .assignment
                    .parents
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (p.clone(), parent_ranges[k].label(idxs[k]).to_owned()))
                    .collect();
                w.push((
                    m.noise.id.clone(),
                    m.noise.range.label(idxs[dims.len() - 1]).to_owned(),
                ));
                w
            };
            match expr::eval(&m.assignment.body, &lookup) {
                Err(e) => {
                    return Some(Violation::NonTotal {
                        target: m.variable.id.clone(),
                        witness: witness(),
                        detail: e.to_string(),
                    })
                }
                Ok(value) => {
                    if value_to_index(&value, &m.variable.range).is_none() {
                        return Some(Violation::NonTotal {
                            target: m.variable.id.clone(),
                            witness: witness(),
                            detail: format!(
                                "value `{value}` is outside the range {{{}}}",
                                m.variable.range.labels().join(", ")
                            ),
                        });
                    }
                }
            }
        }
        None
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_valid()
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    fn ensure_cap(&self, cap: u128) -> Result<()> {
        let mut cells: u128 = 1;
        for m in &self.mechanisms {
            cells = cells.saturating_mul(m.variable.range.len() as u128);
            cells = cells.saturating_mul(m.noise.range.len() as u128);
        }
        if cells > cap {
            Err(Error::ModelTooLarge { cells, cap })
        } else {
            Ok(())
        }
    }

    fn resolve_vars<S: AsRef<str>>(&self, vars: &[S]) -> Result<Vec<usize>> {
        if vars.is_empty() {
            return Err(Error::BadScope("variable set must be non-empty".into()));
        }
        let mut idxs = Vec::new();
        for v in vars {
            let i = self
                .index_of(v.as_ref())
                .ok_or_else(|| Error::UnknownVariable(v.as_ref().to_owned()))?;
            if !idxs.contains(&i) {
                idxs.push(i);
            }
        }
        Ok(idxs)
    }

    /// Exact joint distribution of `vars` under the model, by topological
    /// forward pass: the joint over processed variables is extended one
    /// variable at a time through its assignment-induced conditional
    /// `P(x | parents) = sum of noise masses mapping to x`, then marginalized.
    pub fn entailed<S: AsRef<str>>(&self, vars: &[S]) -> Result<Pmf> {
        self.entailed_with_cap(vars, DEFAULT_CELL_CAP)
    }

    pub fn entailed_with_cap<S: AsRef<str>>(&self, vars: &[S], cap: u128) -> Result<Pmf> {
        self.ensure_valid()?;
        self.resolve_vars(vars)?;
        self.ensure_cap(cap)?;
        let topo = self.topo.as_ref().expect("valid model has an order");

        let mut joint = Pmf::scalar_one();
        for &vi in topo {
            let m = &self.mechanisms[vi];
            let cpd = self.cpd(m);
            joint = extend_joint(&joint, self, vi, &cpd);
        }
        let keep: Vec<&str> = vars.iter().map(|v| v.as_ref()).collect();
        joint.marginalize(&keep)
    }

    /// Conditional table for one mechanism: for each parent tuple, the
    /// distribution over the target induced by pushing the noise through
    /// the assignment body.
    fn cpd(&self, m: &Mechanism) -> Vec<Vec<Rational>> {
        let parent_ranges: Vec<&FiniteRange> = m
            .assignment
            .parents
            .iter()
            .map(|p| &self.variable(p.as_str()).expect("validated").range)
            .collect();
        let parent_cells: usize = parent_ranges.iter().map(|r| r.len()).product();
        let t_len = m.variable.range.len();
        let mut cpd = vec![vec![Rational::zero(); t_len]; parent_cells];
        for pt in 0..parent_cells {
            let mut rest = pt;
            let mut pidx = vec![0; parent_ranges.len()];
            for k in (0..parent_ranges.len()).rev() {
                pidx[k] = rest % parent_ranges[k].len();
                rest /= parent_ranges[k].len();
            }
            for n in 0..m.noise.range.len() {
                let mass = &m.noise_dist.masses()[n];
                if mass.is_zero() {
                    continue;
                }
                let mut env: BTreeMap<&str, String> = BTreeMap::new();
                for (k, p) in m.assignment.parents.iter().enumerate() {
                    env.insert(p.as_str(), parent_ranges[k].label(pidx[k]).to_owned());
                }
                env.insert(m.noise.id.as_str(), m.noise.range.label(n).to_owned());
                let lookup = |name: &str| env.get(name).cloned();
                let value = expr::eval(&m.assignment.body, &lookup).expect("validated total");
                let t = value_to_index(&value, &m.variable.range).expect("validated in range");
                cpd[pt][t] += mass;
            }
        }
        cpd
    }

    /// Same contract as [`Scm::entailed`], computed independently by
    /// enumerating every joint noise configuration and propagating it
    /// through the assignments in topological order.
    pub fn entailed_oracle<S: AsRef<str>>(&self, vars: &[S]) -> Result<Pmf> {
        self.entailed_oracle_with_cap(vars, DEFAULT_CELL_CAP)
    }

    pub fn entailed_oracle_with_cap<S: AsRef<str>>(&self, vars: &[S], cap: u128) -> Result<Pmf> {
        self.ensure_valid()?;
        self.resolve_vars(vars)?;
        self.ensure_cap(cap)?;
        let topo = self.topo.as_ref().expect("valid model has an order");

        let scope: Vec<(VarId, FiniteRange)> = self
            .mechanisms
            .iter()
            .map(|m| (m.variable.id.clone(), m.variable.range.clone()))
            .collect();
        let endo_cells: usize = scope.iter().map(|(_, r)| r.len()).product();
        let mut mass = vec![Rational::zero(); endo_cells];

        let noise_dims: Vec<usize> = self
            .mechanisms
            .iter()
            .map(|m| m.noise.range.len())
            .collect();
        let noise_cells: usize = noise_dims.iter().product();
        for flat in 0..noise_cells {
            let mut rest = flat;
            let mut nidx = vec![0; noise_dims.len()];
            for k in (0..noise_dims.len()).rev() {
                nidx[k] = rest % noise_dims[k];
                rest /= noise_dims[k];
            }
            let mut weight = Rational::from_integer(1.into());
            for (k, m) in self.mechanisms.iter().enumerate() {
                weight *= &m.noise_dist.masses()[nidx[k]];
                if weight.is_zero() {
                    break;
                }
            }
            if weight.is_zero() {
                continue;
            }

            // Propagate this configuration through the assignments.
            let mut values: Vec<Option<usize>> = vec![None; self.mechanisms.len()];
            for &vi in topo {
                let m = &self.mechanisms[vi];
                let lookup = |name: &str| -> Option<String> {
                    if name == m.noise.id.as_str() {
                        return Some(m.noise.range.label(nidx[vi]).to_owned());
                    }
                    let i = self.index_of(name)?;
                    values[i].map(|v| self.mechanisms[i].variable.range.label(v).to_owned())
                };
                let value = expr::eval(&m.assignment.body, &lookup).expect("validated total");
                let t = value_to_index(&value, &m.variable.range).expect("validated in range");
                values[vi] = Some(t);
            }

            let mut cell = 0;
            for (k, (_, r)) in scope.iter().enumerate() {
                cell = cell * r.len() + values[k].expect("all assigned");
            }
            mass[cell] += weight;
        }

        let joint = Pmf::new(scope, mass)?;
        let keep: Vec<&str> = vars.iter().map(|v| v.as_ref()).collect();
        joint.marginalize(&keep)
    }

    /// True iff some atomic intervention on `cause` changes the entailed
    /// marginal of `effect`. Exact rational comparison over every value.
    pub fn has_total_causal_effect(&self, cause: &str, effect: &str) -> Result<bool> {
        if cause == effect {
            return Err(Error::BadQuery(
                "cause and effect must be distinct".into(),
            ));
        }
        self.ensure_valid()?;
        let ci = self
            .index_of(cause)
            .ok_or_else(|| Error::UnknownVariable(cause.to_owned()))?;
        self.index_of(effect)
            .ok_or_else(|| Error::UnknownVariable(effect.to_owned()))?;
        let base = self.entailed(&[effect])?;
        for value in 0..self.mechanisms[ci].variable.range.len() {
            let intervened = crate::intervene::apply(
                self,
                &crate::intervene::Intervention::Atomic {
                    target: VarId::new(cause),
                    value,
                },
            )?;
            if intervened.entailed(&[effect])? != base {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Whether the parent graph has a directed path `from -> ... -> to`.
    pub fn has_directed_path(&self, from: &str, to: &str) -> Result<bool> {
        let fi = self
            .index_of(from)
            .ok_or_else(|| Error::UnknownVariable(from.to_owned()))?;
        let ti = self
            .index_of(to)
            .ok_or_else(|| Error::UnknownVariable(to.to_owned()))?;
        let parents = self
            .parent_indices()
            .ok_or_else(|| Error::BadQuery("model has unknown parents".into()))?;
        let n = self.mechanisms.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (child, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(child);
            }
        }
        let mut stack = vec![fi];
        let mut seen = vec![false; n];
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                if c == ti {
                    return Ok(true);
                }
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        Ok(false)
    }
}

/// Maps an evaluated body value onto the target range: integers match the
/// first label with the same integer meaning, symbols match by string.
pub(crate) fn value_to_index(value: &Value, range: &FiniteRange) -> Option<usize> {
    match value {
        Value::Int(k) => (0..range.len()).find(|&i| range.int_value(i) == Some(*k)),
        Value::Sym(s) => range.index_of(s),
        Value::Bool(_) => None,
    }
}

/// Extends a joint over already-processed variables with variable `vi`,
/// keeping the scope in declaration order.
fn extend_joint(joint: &Pmf, model: &Scm, vi: usize, cpd: &[Vec<Rational>]) -> Pmf {
    let m = &model.mechanisms[vi];
    let mut scope: Vec<(VarId, FiniteRange)> = joint.scope().to_vec();
    let decl = |id: &VarId| model.index_of(id.as_str()).expect("validated");
    let insert_at = scope
        .iter()
        .position(|(id, _)| decl(id) > vi)
        .unwrap_or(scope.len());
    scope.insert(insert_at, (m.variable.id.clone(), m.variable.range.clone()));

    let parent_axes: Vec<usize> = m
        .assignment
        .parents
        .iter()
        .map(|p| {
            scope
                .iter()
                .position(|(id, _)| id == p)
                .expect("parents processed before child")
        })
        .collect();
    let parent_sizes: Vec<usize> = m
        .assignment
        .parents
        .iter()
        .map(|p| model.variable(p.as_str()).expect("validated").range.len())
        .collect();

    let cells: usize = scope.iter().map(|(_, r)| r.len()).product();
    let mut mass = vec![Rational::zero(); cells];
    let sizes: Vec<usize> = scope.iter().map(|(_, r)| r.len()).collect();
    for cell in 0..cells {
        let mut rest = cell;
        let mut tuple = vec![0; sizes.len()];
        for k in (0..sizes.len()).rev() {
            tuple[k] = rest % sizes[k];
            rest /= sizes[k];
        }
        let mut old_tuple = tuple.clone();
        let v_val = old_tuple.remove(insert_at);
        let old_mass = joint.mass_at(&old_tuple);
        if old_mass.is_zero() {
            continue;
        }
        let mut pt = 0;
        for (k, &axis) in parent_axes.iter().enumerate() {
            pt = pt * parent_sizes[k] + tuple[axis];
        }
        let c = &cpd[pt][v_val];
        if c.is_zero() {
            continue;
        }
        mass[cell] = old_mass * c;
    }
    Pmf::new(scope, mass).expect("forward pass preserves normalization")
}
