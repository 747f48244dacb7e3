//! Math answer normalization, parsing and equivalence.

mod equiv;
mod eval;
mod expr;
mod normalize;
mod poly;

pub use equiv::{
    equiv_prepared, expr_equiv, sym_equiv, sym_equiv_with, EquivConfig, EquivDecision, PreparedAnswer, Stage,
    SAMPLE_HIGH, SAMPLE_LOW,
};
pub use eval::{exact_value, numeric_value, rational_to_f64};
pub use expr::{parse_expr, Constant, MathExpr, ParseError};
pub use normalize::normalize_math;
pub use poly::{to_rational_function, Poly, RationalFunction};
