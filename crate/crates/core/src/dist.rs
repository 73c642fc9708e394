//! Exact-rational probability mass functions over tuples of finite-range
//! variables: marginalization, conditioning, products and expectations.
//!
//! Every mass is a [`Rational`]; a [`Pmf`] always sums to exactly 1 with no
//! tolerance anywhere. Floating point enters only through [`Pmf::expectation`]
//! and the entropy layer on top of it.

use std::collections::BTreeSet;
use std::fmt;

use num::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_rational, to_f64, Rational};

/// Name of a model or distribution variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(String);

impl VarId {
    pub fn new(id: impl Into<String>) -> Self {
        VarId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        VarId(s.to_owned())
    }
}

impl From<String> for VarId {
    fn from(s: String) -> Self {
        VarId(s)
    }
}

impl AsRef<str> for VarId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// An ordered list of distinct value labels. Values are addressed by index;
/// the order is fixed at construction and is part of the range's identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteRange {
    labels: Vec<String>,
}

impl FiniteRange {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::BadDistribution("range must be non-empty".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(Error::BadDistribution(format!(
                    "duplicate range label `{l}`"
                )));
            }
        }
        Ok(FiniteRange { labels })
    }

    /// Range with integer labels `0..n`.
    pub fn of_size(n: usize) -> Self {
        FiniteRange {
            labels: (0..n.max(1)).map(|i| i.to_string()).collect(),
        }
    }

    pub fn from_labels(labels: &[&str]) -> Result<Self> {
        Self::new(labels.iter().map(|s| s.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Integer meaning of a label, when it has one. Labels that parse as
    /// `i64` take part in arithmetic; symbolic labels are only comparable.
    pub fn int_value(&self, idx: usize) -> Option<i64> {
        self.labels[idx].parse().ok()
    }
}

/// Dense exact-rational pmf over an ordered tuple of variables.
///
/// The table is laid out in mixed radix with the last scope variable varying
/// fastest. Entries are non-negative and sum to exactly 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pmf {
    scope: Vec<(VarId, FiniteRange)>,
    mass: Vec<Rational>,
}

impl Pmf {
    /// Builds a pmf from an explicit scope and dense table, checking the
    /// size, non-negativity and exact normalization invariants.
    pub fn new(scope: Vec<(VarId, FiniteRange)>, mass: Vec<Rational>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for (id, _) in &scope {
            if !ids.insert(id.clone()) {
                return Err(Error::BadDistribution(format!(
                    "variable `{id}` appears twice in scope"
                )));
            }
        }
        let cells: usize = scope.iter().map(|(_, r)| r.len()).product();
        if mass.len() != cells {
            return Err(Error::BadDistribution(format!(
                "table has {} entries, scope needs {cells}",
                mass.len()
            )));
        }
        let mut total = Rational::zero();
        for m in &mass {
            if *m < Rational::zero() {
                return Err(Error::BadDistribution("negative mass entry".into()));
            }
            total += m;
        }
        if !total.is_one() {
            return Err(Error::BadDistribution(format!(
                "masses sum to {}, not 1",
                format_rational(&total)
            )));
        }
        Ok(Pmf { scope, mass })
    }

    /// Single-variable pmf from explicit masses.
    pub fn single(id: impl Into<VarId>, range: FiniteRange, mass: Vec<Rational>) -> Result<Self> {
        Self::new(vec![(id.into(), range)], mass)
    }

    /// Point mass at one value of a single variable.
    pub fn point(id: impl Into<VarId>, range: FiniteRange, idx: usize) -> Result<Self> {
        if idx >= range.len() {
            return Err(Error::BadDistribution(format!(
                "point index {idx} outside range of size {}",
                range.len()
            )));
        }
        let mass = (0..range.len())
            .map(|i| {
                if i == idx {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            })
            .collect();
        Self::new(vec![(id.into(), range)], mass)
    }

    /// Uniform pmf over a single variable.
    pub fn uniform(id: impl Into<VarId>, range: FiniteRange) -> Self {
        let n = range.len() as i64;
        let mass = (0..n).map(|_| crate::rational::rat(1, n)).collect();
        Self::new(vec![(id.into(), range)], mass).expect("uniform is normalized")
    }

    /// Exact normalization of non-negative integer weights. Errors when all
    /// weights are zero.
    pub fn from_weights(id: impl Into<VarId>, range: FiniteRange, weights: &[u64]) -> Result<Self> {
        if weights.len() != range.len() {
            return Err(Error::BadDistribution(
                "weight count does not match range size".into(),
            ));
        }
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return Err(Error::BadDistribution("all weights are zero".into()));
        }
        let mass = weights
            .iter()
            .map(|&w| Rational::new((w as i64).into(), (total as i64).into()))
            .collect();
        Self::new(vec![(id.into(), range)], mass)
    }

    /// The empty-scope pmf: a single cell of mass 1. Identity for
    /// [`Pmf::product`] and the seed of the forward inference pass.
    pub(crate) fn scalar_one() -> Self {
        Pmf {
            scope: Vec::new(),
            mass: vec![Rational::one()],
        }
    }

    pub fn scope(&self) -> &[(VarId, FiniteRange)] {
        &self.scope
    }

    pub fn var_ids(&self) -> impl Iterator<Item = &VarId> {
        self.scope.iter().map(|(id, _)| id)
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    pub fn size(&self) -> usize {
        self.mass.len()
    }

    pub fn axis_of(&self, id: &str) -> Option<usize> {
        self.scope.iter().position(|(v, _)| v.as_str() == id)
    }

    pub fn range_of(&self, id: &str) -> Option<&FiniteRange> {
        self.axis_of(id).map(|k| &self.scope[k].1)
    }

    fn sizes(&self) -> Vec<usize> {
        self.scope.iter().map(|(_, r)| r.len()).collect()
    }

    /// Mixed-radix encoding with the last variable fastest.
    pub fn index_of(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.scope.len());
        let mut idx = 0;
        for (k, &t) in tuple.iter().enumerate() {
            debug_assert!(t < self.scope[k].1.len());
            idx = idx * self.scope[k].1.len() + t;
        }
        idx
    }

    pub fn tuple_of(&self, mut idx: usize) -> Vec<usize> {
        let sizes = self.sizes();
        let mut tuple = vec![0; sizes.len()];
        for k in (0..sizes.len()).rev() {
            tuple[k] = idx % sizes[k];
            idx /= sizes[k];
        }
        tuple
    }

    pub fn mass_at(&self, tuple: &[usize]) -> &Rational {
        &self.mass[self.index_of(tuple)]
    }

    pub fn masses(&self) -> &[Rational] {
        &self.mass
    }

    /// Iterates `(value-tuple, mass)` over cells with strictly positive mass.
    pub fn support(&self) -> impl Iterator<Item = (Vec<usize>, &Rational)> {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_zero())
            .map(move |(i, m)| (self.tuple_of(i), m))
    }

    fn resolve_set<S: AsRef<str>>(&self, vars: &[S]) -> Result<Vec<usize>> {
        let mut axes = Vec::new();
        for v in vars {
            let axis = self
                .axis_of(v.as_ref())
                .ok_or_else(|| Error::UnknownVariable(v.as_ref().to_owned()))?;
            if !axes.contains(&axis) {
                axes.push(axis);
            }
        }
        Ok(axes)
    }

    /// Sums out every variable not in `keep`. The result keeps this pmf's
    /// variable order.
    pub fn marginalize<S: AsRef<str>>(&self, keep: &[S]) -> Result<Pmf> {
        let mut axes = self.resolve_set(keep)?;
        if axes.is_empty() {
            return Err(Error::BadScope("marginal scope must be non-empty".into()));
        }
        axes.sort_unstable();
        let scope: Vec<_> = axes.iter().map(|&k| self.scope[k].clone()).collect();
        let cells: usize = scope.iter().map(|(_, r)| r.len()).product();
        let mut mass = vec![Rational::zero(); cells];
        for (i, m) in self.mass.iter().enumerate() {
            if m.is_zero() {
                continue;
            }
            let tuple = self.tuple_of(i);
            let mut out = 0;
            for &k in &axes {
                out = out * self.scope[k].1.len() + tuple[k];
            }
            mass[out] += m;
        }
        Pmf::new(scope, mass)
    }

    /// Conditions on a partial assignment given as `(variable, value-index)`
    /// pairs. The event variables are dropped from the scope.
    pub fn condition<S: AsRef<str>>(&self, event: &[(S, usize)]) -> Result<Pmf> {
        let mut fixed: Vec<Option<usize>> = vec![None; self.scope.len()];
        for (v, val) in event {
            let axis = self
                .axis_of(v.as_ref())
                .ok_or_else(|| Error::UnknownVariable(v.as_ref().to_owned()))?;
            if *val >= self.scope[axis].1.len() {
                return Err(Error::RangeMismatch(format!(
                    "value index {val} outside range of `{}`",
                    v.as_ref()
                )));
            }
            fixed[axis] = Some(*val);
        }
        let keep: Vec<usize> = (0..self.scope.len()).filter(|k| fixed[*k].is_none()).collect();
        let mut event_mass = Rational::zero();
        for (i, m) in self.mass.iter().enumerate() {
            if m.is_zero() {
                continue;
            }
            let tuple = self.tuple_of(i);
            if fixed
                .iter()
                .enumerate()
                .all(|(k, f)| f.map_or(true, |v| tuple[k] == v))
            {
                event_mass += m;
            }
        }
        if event_mass.is_zero() {
            return Err(Error::ZeroProbabilityEvent);
        }
        let scope: Vec<_> = keep.iter().map(|&k| self.scope[k].clone()).collect();
        let cells: usize = scope.iter().map(|(_, r)| r.len()).product();
        let mut mass = vec![Rational::zero(); cells];
        for (i, m) in self.mass.iter().enumerate() {
            if m.is_zero() {
                continue;
            }
            let tuple = self.tuple_of(i);
            if !fixed
                .iter()
                .enumerate()
                .all(|(k, f)| f.map_or(true, |v| tuple[k] == v))
            {
                continue;
            }
            let mut out = 0;
            for &k in &keep {
                out = out * self.scope[k].1.len() + tuple[k];
            }
            mass[out] += m / &event_mass;
        }
        Pmf::new(scope, mass)
    }

    /// Conditions on `(variable, value-label)` pairs.
    pub fn condition_labels<S: AsRef<str>>(&self, event: &[(S, &str)]) -> Result<Pmf> {
        let mut idx_event = Vec::with_capacity(event.len());
        for (v, label) in event {
            let range = self
                .range_of(v.as_ref())
                .ok_or_else(|| Error::UnknownVariable(v.as_ref().to_owned()))?;
            let idx = range.index_of(label).ok_or_else(|| {
                Error::RangeMismatch(format!("`{label}` is not a value of `{}`", v.as_ref()))
            })?;
            idx_event.push((v.as_ref().to_owned(), idx));
        }
        self.condition(&idx_event)
    }

    /// `sum_t p(t) * f(t)` in binary64. Zero-mass cells contribute exactly 0
    /// and `f` is never called on them, mirroring the `0 * log 0 = 0`
    /// convention.
    pub fn expectation(&self, mut f: impl FnMut(&[usize]) -> f64) -> f64 {
        let mut acc = 0.0;
        for (tuple, m) in self.support() {
            acc += to_f64(m) * f(&tuple);
        }
        acc
    }

    /// Product of pmfs with disjoint scopes.
    pub fn product(&self, rhs: &Pmf) -> Result<Pmf> {
        for (id, _) in &self.scope {
            if rhs.axis_of(id.as_str()).is_some() {
                return Err(Error::ScopeOverlap(id.to_string()));
            }
        }
        let mut scope = self.scope.clone();
        scope.extend(rhs.scope.iter().cloned());
        let mut mass = Vec::with_capacity(self.mass.len() * rhs.mass.len());
        for a in &self.mass {
            for b in &rhs.mass {
                mass.push(a * b);
            }
        }
        Pmf::new(scope, mass)
    }

    /// Exact test for mutual independence of the scope variables:
    /// the joint must equal the product of its single-variable marginals.
    pub fn is_mutually_independent(&self) -> bool {
        if self.scope.len() <= 1 {
            return true;
        }
        let marginals: Vec<Pmf> = self
            .scope
            .iter()
            .map(|(id, _)| self.marginalize(&[id.as_str()]).expect("var in scope"))
            .collect();
        for (i, m) in self.mass.iter().enumerate() {
            let tuple = self.tuple_of(i);
            let mut prod = Rational::one();
            for (k, marg) in marginals.iter().enumerate() {
                prod *= &marg.mass[tuple[k]];
            }
            if *m != prod {
                return false;
            }
        }
        true
    }

    /// Compact text form, e.g. `Y=(1/2, 1/2, 0)` for a one-variable pmf or
    /// the full cell list for larger scopes. Used in reports.
    pub fn digest(&self) -> String {
        let vars: Vec<&str> = self.scope.iter().map(|(id, _)| id.as_str()).collect();
        let cells: Vec<String> = self.mass.iter().map(format_rational).collect();
        format!("{}=({})", vars.join(","), cells.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn bern(id: &str, p_one: Rational) -> Pmf {
        let q = Rational::one() - &p_one;
        Pmf::single(id, FiniteRange::of_size(2), vec![q, p_one]).unwrap()
    }

    /// Joint over (X, Y) matching a two-point mixture of shifted coins:
    /// p(x,y) = w(x) * n(y - x) with w = (2/3, 1/3), n = (1/2, 1/2).
    fn shifted_coin_joint() -> Pmf {
        let scope = vec![
            (VarId::new("X"), FiniteRange::of_size(2)),
            (VarId::new("Y"), FiniteRange::of_size(3)),
        ];
        let z = Rational::zero;
        let mass = vec![rat(1, 3), rat(1, 3), z(), z(), rat(1, 6), rat(1, 6)];
        Pmf::new(scope, mass).unwrap()
    }

    #[test]
    fn rejects_bad_tables() {
        let r = FiniteRange::of_size(2);
        assert!(Pmf::single("X", r.clone(), vec![rat(1, 2)]).is_err());
        assert!(Pmf::single("X", r.clone(), vec![rat(1, 2), rat(1, 3)]).is_err());
        assert!(Pmf::single("X", r, vec![rat(3, 2), rat(-1, 2)]).is_err());
    }

    #[test]
    fn marginalize_uniform_pair() {
        let p = Pmf::uniform("X", FiniteRange::of_size(2))
            .product(&Pmf::uniform("Y", FiniteRange::of_size(2)))
            .unwrap();
        let px = p.marginalize(&["X"]).unwrap();
        assert_eq!(px, Pmf::uniform("X", FiniteRange::of_size(2)));
    }

    #[test]
    fn marginalize_mixture_joint() {
        let p = shifted_coin_joint();
        let py = p.marginalize(&["Y"]).unwrap();
        assert_eq!(py.masses(), &[rat(1, 3), rat(1, 2), rat(1, 6)]);
    }

    #[test]
    fn marginalize_unknown_var_errors() {
        let p = shifted_coin_joint();
        assert!(matches!(
            p.marginalize(&["Q"]),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn condition_mixture_joint() {
        let p = shifted_coin_joint();
        let y_given_x0 = p.condition(&[("X", 0)]).unwrap();
        assert_eq!(
            y_given_x0.masses(),
            &[rat(1, 2), rat(1, 2), Rational::zero()]
        );
        let y_given_x1 = p.condition(&[("X", 1)]).unwrap();
        assert_eq!(
            y_given_x1.masses(),
            &[Rational::zero(), rat(1, 2), rat(1, 2)]
        );
    }

    #[test]
    fn conditioning_independent_product_returns_factor() {
        let q_y = Pmf::single(
            "Y",
            FiniteRange::of_size(3),
            vec![rat(1, 6), rat(1, 3), rat(1, 2)],
        )
        .unwrap();
        let p = bern("X", rat(1, 4)).product(&q_y).unwrap();
        for x in 0..2 {
            assert_eq!(p.condition(&[("X", x)]).unwrap(), q_y);
        }
    }

    #[test]
    fn zero_probability_event_errors() {
        let p = shifted_coin_joint();
        assert!(matches!(
            p.condition(&[("X", 0), ("Y", 2)]),
            Err(Error::ZeroProbabilityEvent)
        ));
    }

    #[test]
    fn expectation_point_mass_and_zero_convention() {
        let p = Pmf::point("X", FiniteRange::of_size(3), 1).unwrap();
        // f blows up on zero-mass cells; the convention keeps them out.
        let e = p.expectation(|t| if t[0] == 1 { 7.5 } else { f64::INFINITY });
        assert_eq!(e, 7.5);

        let coin = bern("X", rat(1, 3));
        assert_eq!(coin.expectation(|t| t[0] as f64), to_f64(&rat(1, 3)));
    }

    #[test]
    fn product_of_points_is_point() {
        let p = Pmf::point("X", FiniteRange::of_size(2), 1).unwrap();
        let q = Pmf::point("Y", FiniteRange::of_size(3), 2).unwrap();
        let joint = p.product(&q).unwrap();
        assert_eq!(joint.mass_at(&[1, 2]), &Rational::one());
        assert!(joint.is_mutually_independent());
    }

    #[test]
    fn product_rejects_overlap() {
        let p = bern("X", rat(1, 2));
        assert!(matches!(
            p.product(&p),
            Err(Error::ScopeOverlap(_))
        ));
    }

    #[test]
    fn mixture_joint_is_dependent() {
        assert!(!shifted_coin_joint().is_mutually_independent());
    }
}
