//! Arbitrary-precision rationals used for every probability mass in the
//! crate. Backed by `num`; always kept in canonical form (positive
//! denominator, gcd 1) by the `BigRational` constructors.

use num::bigint::BigInt;
use num::{BigRational, One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// `n/d` as an exact rational. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Converts an exact rational to `binary64`.
///
/// Numerator and denominator are reduced to at most 54 significant bits
/// before the division, and the dropped power of two is reapplied through
/// the exponent, so the result is accurate to a few ulp even when the
/// integers are far beyond `u64`.
pub fn to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let numer = r.numer();
    let denom = r.denom();
    let n_shift = numer.bits().saturating_sub(54);
    let d_shift = denom.bits().saturating_sub(54);
    let n_red = (numer.abs() >> n_shift).to_f64().expect("<= 54 bits");
    let d_red = (denom >> d_shift).to_f64().expect("<= 54 bits");
    let scale = 2f64.powi(n_shift as i32 - d_shift as i32);
    let magnitude = (n_red / d_red) * scale;
    if numer.is_negative() {
        -magnitude
    } else {
        magnitude
    }
}

/// Canonical text form: `"3/4"`, or just `"3"` when the denominator is 1.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
