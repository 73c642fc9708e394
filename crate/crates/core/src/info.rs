//! Entropy, conditional entropy, mutual information and conditional mutual
//! information over exact pmfs, in bits (base-2 logarithms).
//!
//! Masses stay rational until the final `p * log2 p` step, so the only
//! floating-point error is the log itself; derived identities hold to well
//! below [`ENTROPY_TOL`] at the table sizes this crate targets.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::dist::Pmf;
use crate::error::{Error, Result};
use crate::rational::to_f64;

/// Tolerance for equalities between entropy-valued quantities computed
/// along different routes.
pub const ENTROPY_TOL: f64 = 1e-9;

/// An information quantity in bits.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Bits(pub f64);

impl Bits {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.12} bit", self.0)
    }
}

impl Add for Bits {
    type Output = Bits;
    fn add(self, rhs: Bits) -> Bits {
        Bits(self.0 + rhs.0)
    }
}

impl Sub for Bits {
    type Output = Bits;
    fn sub(self, rhs: Bits) -> Bits {
        Bits(self.0 - rhs.0)
    }
}

/// Shannon entropy `-sum p log2 p`; zero-mass cells contribute exactly 0.
pub fn entropy(p: &Pmf) -> Bits {
    let mut h = 0.0;
    for m in p.masses() {
        if num::Zero::is_zero(m) {
            continue;
        }
        let pf = to_f64(m);
        h -= pf * pf.log2();
    }
    Bits(h)
}

fn check_disjoint<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> Result<()> {
    for x in a {
        if b.iter().any(|y| y.as_ref() == x.as_ref()) {
            return Err(Error::BadScope(format!(
                "variable sets overlap on `{}`",
                x.as_ref()
            )));
        }
    }
    Ok(())
}

/// Conditional entropy `H(rest | given)` of `p`'s remaining variables given
/// the listed ones: the expectation over the conditioning marginal of the
/// slice entropies, skipping zero-mass slices. An empty `given` degrades to
/// plain entropy.
pub fn cond_entropy<S: AsRef<str>>(p: &Pmf, given: &[S]) -> Result<Bits> {
    if given.is_empty() {
        return Ok(entropy(p));
    }
    let given_axes: Vec<&str> = given.iter().map(|s| s.as_ref()).collect();
    for g in &given_axes {
        if p.axis_of(g).is_none() {
            return Err(Error::UnknownVariable((*g).to_owned()));
        }
    }
    if given_axes.len() >= p.arity() {
        return Err(Error::BadScope(
            "conditioning set must be a proper subset of the scope".into(),
        ));
    }
    let marg = p.marginalize(&given_axes)?;
    let mut h = 0.0;
    for (tuple, mass) in marg.support() {
        // The marginal keeps the joint's variable order, which may differ
        // from the order the caller listed; pair values off the marginal.
        let event: Vec<(&str, usize)> = marg
            .scope()
            .iter()
            .zip(&tuple)
            .map(|((id, _), &t)| (id.as_str(), t))
            .collect();
        let slice = p.condition(&event)?;
        h += to_f64(mass) * entropy(&slice).0;
    }
    Ok(Bits(h))
}

/// Mutual information `I(left; right)` of a pmf whose scope is exactly
/// `left` followed by `right` in some order.
///
/// Computed twice: as the divergence-style double sum and as
/// `H(right) - H(right | left)`. The two routes must agree within
/// [`ENTROPY_TOL`]; the entropy-difference form is returned.
pub fn mutual_information<S: AsRef<str>, T: AsRef<str>>(
    p: &Pmf,
    left: &[S],
    right: &[T],
) -> Result<Bits> {
    check_disjoint(left, right)?;
    if left.len() + right.len() != p.arity() {
        return Err(Error::BadScope(
            "left and right must cover the pmf's scope".into(),
        ));
    }
    if left.is_empty() || right.is_empty() {
        return Ok(Bits(0.0));
    }
    let left_axes: Vec<&str> = left.iter().map(|s| s.as_ref()).collect();
    let right_axes: Vec<&str> = right.iter().map(|s| s.as_ref()).collect();

    let p_left = p.marginalize(&left_axes)?;
    let p_right = p.marginalize(&right_axes)?;
    let left_pos: Vec<usize> = left_axes.iter().map(|v| p.axis_of(v).unwrap()).collect();
    let right_pos: Vec<usize> = right_axes.iter().map(|v| p.axis_of(v).unwrap()).collect();
    // Marginals keep the joint's variable order, so project in that order.
    let mut left_sorted = left_pos.clone();
    left_sorted.sort_unstable();
    let mut right_sorted = right_pos.clone();
    right_sorted.sort_unstable();

    let mut divergence = 0.0;
    for (tuple, mass) in p.support() {
        let lt: Vec<usize> = left_sorted.iter().map(|&k| tuple[k]).collect();
        let rt: Vec<usize> = right_sorted.iter().map(|&k| tuple[k]).collect();
        let pl = to_f64(p_left.mass_at(&lt));
        let pr = to_f64(p_right.mass_at(&rt));
        let pj = to_f64(mass);
        divergence += pj * (pj / (pl * pr)).log2();
    }

    let ent_form = entropy(&p_right).0 - cond_entropy(p, &left_axes)?.0;
    assert!(
        (divergence - ent_form).abs() <= ENTROPY_TOL,
        "mutual information routes disagree: {divergence} vs {ent_form}"
    );
    Ok(Bits(ent_form))
}

/// Conditional mutual information `I(left; right | given)`. The pmf may be
/// wider than the three sets; it is marginalized to their union first. Both
/// orderings of the defining difference are computed and must agree within
/// [`ENTROPY_TOL`].
pub fn cond_mutual_information<S: AsRef<str>, T: AsRef<str>, U: AsRef<str>>(
    p: &Pmf,
    left: &[S],
    right: &[T],
    given: &[U],
) -> Result<Bits> {
    check_disjoint(left, right)?;
    check_disjoint(left, given)?;
    check_disjoint(right, given)?;
    let left_axes: Vec<&str> = left.iter().map(|s| s.as_ref()).collect();
    let right_axes: Vec<&str> = right.iter().map(|s| s.as_ref()).collect();
    let given_axes: Vec<&str> = given.iter().map(|s| s.as_ref()).collect();
    if left_axes.is_empty() || right_axes.is_empty() {
        return Ok(Bits(0.0));
    }

    let mut union: Vec<&str> = Vec::new();
    union.extend(&left_axes);
    union.extend(&right_axes);
    union.extend(&given_axes);
    let joint = p.marginalize(&union)?;

    let mut lg: Vec<&str> = left_axes.clone();
    lg.extend(&given_axes);
    let mut rg: Vec<&str> = right_axes.clone();
    rg.extend(&given_axes);

    // H(A | given) from the joint, for A = left or right.
    let h_given = |a_with_given: &[&str]| -> Result<f64> {
        let m = joint.marginalize(a_with_given)?;
        Ok(cond_entropy(&m, &given_axes)?.0)
    };
    let right_route = h_given(&rg)? - cond_entropy(&joint, &lg)?.0;
    let left_route = h_given(&lg)? - cond_entropy(&joint, &rg)?.0;
    assert!(
        (right_route - left_route).abs() <= ENTROPY_TOL,
        "conditional mutual information orderings disagree: {right_route} vs {left_route}"
    );
    Ok(Bits(right_route))
}
