//! Exact and floating-point evaluation of [`MathExpr`] trees.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::expr::{Constant, MathExpr};

/// Largest integer exponent evaluated exactly.
const MAX_EXACT_EXPONENT: u64 = 4096;
/// Rough cap on the bit size of an exact power result.
const MAX_EXACT_BITS: u64 = 1 << 20;
/// Largest root index tried exactly (`\sqrt[n]{..}` or `x^{p/n}`).
const MAX_ROOT_INDEX: u64 = 64;

/// Exact rational value of a variable-free expression built from rationals,
/// arithmetic, integer powers, and roots that come out rational.
/// `None` when the value is irrational, undefined, or too large.
pub fn exact_value(expr: &MathExpr) -> Option<BigRational> {
    match expr {
        MathExpr::Number(r) => Some(r.clone()),
        MathExpr::Constant(_) | MathExpr::Var(_) | MathExpr::Tuple { .. } | MathExpr::List(_) => None,
        MathExpr::Neg(a) => Some(-exact_value(a)?),
        MathExpr::Add(a, b) => Some(exact_value(a)? + exact_value(b)?),
        MathExpr::Sub(a, b) => Some(exact_value(a)? - exact_value(b)?),
        MathExpr::Mul(a, b) => Some(exact_value(a)? * exact_value(b)?),
        MathExpr::Div(a, b) => {
            let den = exact_value(b)?;
            if den.is_zero() {
                return None;
            }
            Some(exact_value(a)? / den)
        }
        MathExpr::Pow(a, b) => exact_pow(&exact_value(a)?, &exact_value(b)?),
        MathExpr::Sqrt(a) => exact_root(&exact_value(a)?, 2),
        MathExpr::Abs(a) => Some(exact_value(a)?.abs()),
    }
}

pub(crate) fn exact_pow(base: &BigRational, exponent: &BigRational) -> Option<BigRational> {
    let root_index = exponent.denom().to_u64()?;
    if root_index > MAX_ROOT_INDEX {
        return None;
    }
    let rooted = if root_index == 1 { base.clone() } else { exact_root(base, root_index as u32)? };
    integer_pow(&rooted, exponent.numer())
}

pub(crate) fn integer_pow(base: &BigRational, exponent: &BigInt) -> Option<BigRational> {
    let magnitude = exponent.abs().to_u64()?;
    if magnitude > MAX_EXACT_EXPONENT {
        return None;
    }
    let bits = base.numer().bits().max(base.denom().bits()).max(1);
    if bits.saturating_mul(magnitude) > MAX_EXACT_BITS {
        return None;
    }
    if base.is_zero() && exponent.is_negative() {
        return None;
    }
    let mut result = BigRational::one();
    for _ in 0..magnitude {
        result *= base;
    }
    if exponent.is_negative() {
        result = result.recip();
    }
    Some(result)
}

/// Exact `index`-th root when numerator and denominator are perfect powers.
pub(crate) fn exact_root(value: &BigRational, index: u32) -> Option<BigRational> {
    if value.is_negative() && index % 2 == 0 {
        return None;
    }
    let root = |n: &BigInt| -> Option<BigInt> {
        let r = n.abs().nth_root(index);
        (r.pow(index) == n.abs()).then_some(r)
    };
    let numer = root(value.numer())?;
    let denom = root(value.denom())?;
    let mut out = BigRational::new(numer, denom);
    if value.is_negative() {
        out = -out;
    }
    Some(out)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let Some(v) = r.to_f64() {
        return v;
    }
    // Fall back to scaling both parts into range.
    let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(1000);
    let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Floating-point value under a variable assignment. Undefined operations
/// give NaN and never panic.
pub fn numeric_value(expr: &MathExpr, env: &BTreeMap<String, f64>) -> f64 {
    match expr {
        MathExpr::Number(r) => rational_to_f64(r),
        MathExpr::Constant(Constant::Pi) => std::f64::consts::PI,
        MathExpr::Constant(Constant::E) => std::f64::consts::E,
        MathExpr::Constant(Constant::Infinity) => f64::INFINITY,
        MathExpr::Var(v) => env.get(v).copied().unwrap_or(f64::NAN),
        MathExpr::Neg(a) => -numeric_value(a, env),
        MathExpr::Add(a, b) => numeric_value(a, env) + numeric_value(b, env),
        MathExpr::Sub(a, b) => numeric_value(a, env) - numeric_value(b, env),
        MathExpr::Mul(a, b) => numeric_value(a, env) * numeric_value(b, env),
        MathExpr::Div(a, b) => {
            let den = numeric_value(b, env);
            if den == 0.0 {
                f64::NAN
            } else {
                numeric_value(a, env) / den
            }
        }
        MathExpr::Pow(a, b) => numeric_pow(numeric_value(a, env), b, env),
        MathExpr::Sqrt(a) => {
            let v = numeric_value(a, env);
            if v < 0.0 {
                f64::NAN
            } else {
                v.sqrt()
            }
        }
        MathExpr::Abs(a) => numeric_value(a, env).abs(),
        MathExpr::Tuple { .. } | MathExpr::List(_) => f64::NAN,
    }
}

fn numeric_pow(base: f64, exponent: &MathExpr, env: &BTreeMap<String, f64>) -> f64 {
    // Real odd roots of negatives, e.g. (-8)^(1/3) = -2.
    if base < 0.0 {
        if let Some(q) = exact_value(exponent) {
            if let (Some(p), Some(d)) = (q.numer().to_i64(), q.denom().to_i64()) {
                if d % 2 == 1 {
                    let magnitude = base.abs().powf(p as f64 / d as f64);
                    return if p % 2 == 0 { magnitude } else { -magnitude };
                }
                return f64::NAN;
            }
        }
    }
    let e = numeric_value(exponent, env);
    if base == 0.0 && e < 0.0 {
        return f64::NAN;
    }
    if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
        return base.powi(e as i32);
    }
    base.powf(e)
}
