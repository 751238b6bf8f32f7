//! Exact fractions used by the count-based metrics.

use num_rational::Ratio;
use num_traits::{Signed, Zero};

/// Reduced fraction of two 128-bit integers.
pub type Rational = Ratio<i128>;

pub(crate) fn frac(num: u64, den: u64) -> Rational {
    debug_assert!(den != 0);
    Rational::new(i128::from(num), i128::from(den))
}

/// Nearest `f64` to `r`.
///
/// Correctly rounded when numerator and denominator both fit in 53 bits,
/// otherwise within a couple of ulps.
pub fn to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Fixed-point decimal expansion of `r` with `digits` fractional digits,
/// rounded half away from zero. Computed by long division, not through `f64`.
pub fn to_decimal(r: &Rational, digits: usize) -> String {
    let negative = r.is_negative();
    let num = r.numer().unsigned_abs();
    let den = r.denom().unsigned_abs();

    let mut int_part = num / den;
    let mut rem = num % den;
    let mut frac_digits = Vec::with_capacity(digits);
    for _ in 0..digits {
        rem *= 10;
        frac_digits.push((rem / den) as u8);
        rem %= den;
    }
    // round on the next digit
    if rem * 10 / den >= 5 {
        let mut carry = true;
        for d in frac_digits.iter_mut().rev() {
            if *d == 9 {
                *d = 0;
            } else {
                *d += 1;
                carry = false;
                break;
            }
        }
        if carry {
            int_part += 1;
        }
    }

    let is_zero = int_part == 0 && frac_digits.iter().all(|&d| d == 0);
    let mut out = String::new();
    if negative && !is_zero {
        out.push('-');
    }
    out.push_str(&int_part.to_string());
    if digits > 0 {
        out.push('.');
        out.extend(frac_digits.iter().map(|d| char::from(b'0' + d)));
    }
    out
}

/// Renders as `num/den`, or just `num` for integers.
pub fn to_fraction_string(r: &Rational) -> String {
    if r.denom() == &1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses the output of [`to_fraction_string`].
pub fn parse_fraction(s: &str) -> Option<Rational> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (
            n.trim().parse::<i128>().ok()?,
            d.trim().parse::<i128>().ok()?,
        ),
        None => (s.trim().parse::<i128>().ok()?, 1),
    };
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}
