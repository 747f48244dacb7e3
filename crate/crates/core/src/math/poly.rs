//! Canonical polynomial and rational-function forms over the rationals.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::eval::exact_value;
use super::expr::{Constant, MathExpr};

/// Cap on terms in any intermediate polynomial.
const MAX_TERMS: usize = 2048;
/// Cap on integer exponents expanded symbolically.
const MAX_EXPONENT: u32 = 32;

/// Variable name to exponent; absent means exponent zero.
type Monomial = BTreeMap<String, u32>;

/// Sparse polynomial with no zero coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { terms: BTreeMap::new() }
    }

    pub fn constant(c: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::new(), c);
        }
        Poly { terms }
    }

    pub fn symbol(name: &str) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Monomial::from([(name.to_string(), 1)]), BigRational::one());
        Poly { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn add(&self, other: &Poly) -> Option<Poly> {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let entry = terms.entry(m.clone()).or_insert_with(BigRational::zero);
            *entry += c;
            if entry.is_zero() {
                terms.remove(m);
            }
        }
        (terms.len() <= MAX_TERMS).then_some(Poly { terms })
    }

    fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }

    fn mul(&self, other: &Poly) -> Option<Poly> {
        if self.len().saturating_mul(other.len()) > MAX_TERMS * 8 {
            return None;
        }
        let mut terms: BTreeMap<Monomial, BigRational> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut m = ma.clone();
                for (v, e) in mb {
                    *m.entry(v.clone()).or_insert(0) += e;
                }
                *terms.entry(m).or_insert_with(BigRational::zero) += ca * cb;
            }
        }
        terms.retain(|_, c| !c.is_zero());
        (terms.len() <= MAX_TERMS).then_some(Poly { terms })
    }

    fn pow(&self, exponent: u32) -> Option<Poly> {
        let mut out = Poly::constant(BigRational::one());
        for _ in 0..exponent {
            out = out.mul(self)?;
        }
        Some(out)
    }
}

/// `num / den` with `den` never the zero polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalFunction {
    pub num: Poly,
    pub den: Poly,
}

impl RationalFunction {
    fn poly(p: Poly) -> Self {
        RationalFunction { num: p, den: Poly::constant(BigRational::one()) }
    }

    fn add(&self, other: &Self) -> Option<Self> {
        if self.den == other.den {
            return Some(RationalFunction { num: self.num.add(&other.num)?, den: self.den.clone() });
        }
        let num = self.num.mul(&other.den)?.add(&other.num.mul(&self.den)?)?;
        Some(RationalFunction { num, den: self.den.mul(&other.den)? })
    }

    fn neg(&self) -> Self {
        RationalFunction { num: self.num.neg(), den: self.den.clone() }
    }

    fn mul(&self, other: &Self) -> Option<Self> {
        Some(RationalFunction { num: self.num.mul(&other.num)?, den: self.den.mul(&other.den)? })
    }

    fn recip(&self) -> Option<Self> {
        if self.num.is_zero() {
            return None;
        }
        Some(RationalFunction { num: self.den.clone(), den: self.num.clone() })
    }

    fn pow(&self, exponent: u32) -> Option<Self> {
        Some(RationalFunction { num: self.num.pow(exponent)?, den: self.den.pow(exponent)? })
    }

    /// Identity as rational functions: `a/b == c/d` iff `a*d == c*b`.
    pub fn same_as(&self, other: &Self) -> Option<bool> {
        Some(self.num.mul(&other.den)? == other.num.mul(&self.den)?)
    }
}

/// Converts an expression into a rational function. `\pi` and `e` are kept as
/// symbols. `None` outside the fragment (roots of non-constants, absolute
/// values, symbolic exponents, infinity, containers) or past the size caps.
pub fn to_rational_function(expr: &MathExpr) -> Option<RationalFunction> {
    let rf = match expr {
        MathExpr::Number(r) => RationalFunction::poly(Poly::constant(r.clone())),
        MathExpr::Constant(Constant::Pi) => RationalFunction::poly(Poly::symbol("\\pi")),
        MathExpr::Constant(Constant::E) => RationalFunction::poly(Poly::symbol("\\e")),
        MathExpr::Constant(Constant::Infinity) => return None,
        MathExpr::Var(v) => RationalFunction::poly(Poly::symbol(v)),
        MathExpr::Neg(a) => to_rational_function(a)?.neg(),
        MathExpr::Add(a, b) => to_rational_function(a)?.add(&to_rational_function(b)?)?,
        MathExpr::Sub(a, b) => to_rational_function(a)?.add(&to_rational_function(b)?.neg())?,
        MathExpr::Mul(a, b) => to_rational_function(a)?.mul(&to_rational_function(b)?)?,
        MathExpr::Div(a, b) => to_rational_function(a)?.mul(&to_rational_function(b)?.recip()?)?,
        MathExpr::Pow(a, b) => {
            let exponent = exact_value(b)?;
            if !exponent.is_integer() {
                return constant_fallback(expr);
            }
            let magnitude = exponent.numer().abs().to_u32().filter(|e| *e <= MAX_EXPONENT)?;
            let base = to_rational_function(a)?;
            let raised = base.pow(magnitude)?;
            if exponent.is_negative() {
                raised.recip()?
            } else {
                raised
            }
        }
        MathExpr::Sqrt(_) | MathExpr::Abs(_) => return constant_fallback(expr),
        MathExpr::Tuple { .. } | MathExpr::List(_) => return None,
    };
    if rf.den.is_zero() {
        return None;
    }
    Some(rf)
}

fn constant_fallback(expr: &MathExpr) -> Option<RationalFunction> {
    exact_value(expr).map(|c| RationalFunction::poly(Poly::constant(c)))
}
