//! Staged equivalence decision for extracted math answers.

use std::collections::BTreeMap;
use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{exact_value, numeric_value};
use super::expr::{parse_expr, MathExpr, ParseError};
use super::normalize::normalize_math;
use super::poly::to_rational_function;

/// Sampled variable values lie in `[SAMPLE_LOW, SAMPLE_HIGH)`.
pub const SAMPLE_LOW: f64 = 0.5;
pub const SAMPLE_HIGH: f64 = 3.5;
/// Redraws allowed per sample when an assignment hits a singularity.
const MAX_REDRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquivConfig {
    /// Absolute tolerance for variable-free values.
    pub abs_tol: f64,
    /// Relative tolerance for sampled evaluation.
    pub rel_tol: f64,
    /// Absolute floor under the relative tolerance, for values near zero.
    pub abs_floor: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for EquivConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-9, rel_tol: 1e-9, abs_floor: 1e-12, samples: 8, seed: 0x5EED_CAFE }
    }
}

/// The stage that settled a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    NormalizedString,
    SyntaxTree,
    ExactRational,
    NumericConstant,
    RationalFunction,
    RandomizedEvaluation,
    Container,
    StringFallback,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::NormalizedString => "normalized-string",
            Stage::SyntaxTree => "syntax-tree",
            Stage::ExactRational => "exact-rational",
            Stage::NumericConstant => "numeric-constant",
            Stage::RationalFunction => "rational-function",
            Stage::RandomizedEvaluation => "randomized-evaluation",
            Stage::Container => "container",
            Stage::StringFallback => "string-fallback",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivDecision {
    pub equivalent: bool,
    pub stage: Stage,
}

impl EquivDecision {
    fn new(equivalent: bool, stage: Stage) -> Self {
        Self { equivalent, stage }
    }
}

/// An answer normalized and parsed once, for repeated comparisons.
#[derive(Debug, Clone)]
pub struct PreparedAnswer {
    pub normalized: String,
    pub parsed: Result<MathExpr, ParseError>,
}

impl PreparedAnswer {
    pub fn new(text: &str) -> Self {
        let normalized = normalize_math(text);
        let parsed = parse_expr(&normalized);
        Self { normalized, parsed }
    }
}

pub fn sym_equiv(a: &str, b: &str) -> bool {
    sym_equiv_with(a, b, &EquivConfig::default()).equivalent
}

pub fn sym_equiv_with(a: &str, b: &str, config: &EquivConfig) -> EquivDecision {
    equiv_prepared(&PreparedAnswer::new(a), &PreparedAnswer::new(b), config)
}

pub fn equiv_prepared(a: &PreparedAnswer, b: &PreparedAnswer, config: &EquivConfig) -> EquivDecision {
    if a.normalized == b.normalized {
        return EquivDecision::new(true, Stage::NormalizedString);
    }
    match (&a.parsed, &b.parsed) {
        (Ok(x), Ok(y)) => expr_equiv(x, y, config),
        // Strings already differ after normalization.
        _ => EquivDecision::new(false, Stage::StringFallback),
    }
}

/// Compares two parsed expressions.
pub fn expr_equiv(a: &MathExpr, b: &MathExpr, config: &EquivConfig) -> EquivDecision {
    if a == b {
        return EquivDecision::new(true, Stage::SyntaxTree);
    }
    if a.is_container() || b.is_container() {
        return EquivDecision::new(containers_equiv(a, b, config), Stage::Container);
    }
    let mut vars = a.free_vars();
    vars.extend(b.free_vars());
    if vars.is_empty() {
        return constants_equiv(a, b, config);
    }
    if let (Some(fa), Some(fb)) = (to_rational_function(a), to_rational_function(b)) {
        if let Some(same) = fa.same_as(&fb) {
            return EquivDecision::new(same, Stage::RationalFunction);
        }
    }
    let names: Vec<String> = vars.into_iter().collect();
    EquivDecision::new(sampled_equiv(a, b, &names, config), Stage::RandomizedEvaluation)
}

fn containers_equiv(a: &MathExpr, b: &MathExpr, config: &EquivConfig) -> bool {
    match (a, b) {
        (MathExpr::Tuple { open: oa, close: ca, items: ia }, MathExpr::Tuple { open: ob, close: cb, items: ib }) => {
            oa == ob
                && ca == cb
                && ia.len() == ib.len()
                && ia.iter().zip(ib).all(|(x, y)| expr_equiv(x, y, config).equivalent)
        }
        (MathExpr::List(ia), MathExpr::List(ib)) => ia.len() == ib.len() && perfect_matching(ia, ib, config),
        _ => false,
    }
}

/// Kuhn's augmenting-path matching between two equal-length element lists.
/// Matching rather than greedy pairing keeps the relation symmetric.
fn perfect_matching(a: &[MathExpr], b: &[MathExpr], config: &EquivConfig) -> bool {
    let n = a.len();
    let edges: Vec<Vec<bool>> =
        a.iter().map(|x| b.iter().map(|y| expr_equiv(x, y, config).equivalent).collect()).collect();
    let mut owner: Vec<Option<usize>> = vec![None; n];

    fn augment(i: usize, edges: &[Vec<bool>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for j in 0..edges[i].len() {
            if edges[i][j] && !seen[j] {
                seen[j] = true;
                if owner[j].map_or(true, |k| augment(k, edges, seen, owner)) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }

    (0..n).all(|i| augment(i, &edges, &mut vec![false; n], &mut owner))
}

fn constants_equiv(a: &MathExpr, b: &MathExpr, config: &EquivConfig) -> EquivDecision {
    if let (Some(x), Some(y)) = (exact_value(a), exact_value(b)) {
        return EquivDecision::new(x == y, Stage::ExactRational);
    }
    // Identical polynomials in `\pi` and `e` are equal; differing ones are
    // left to the numeric comparison.
    if let (Some(fa), Some(fb)) = (to_rational_function(a), to_rational_function(b)) {
        if fa.same_as(&fb) == Some(true) {
            return EquivDecision::new(true, Stage::RationalFunction);
        }
    }
    let env = BTreeMap::new();
    let (x, y) = (numeric_value(a, &env), numeric_value(b, &env));
    let same = if x.is_infinite() || y.is_infinite() { x == y } else { (x - y).abs() <= config.abs_tol };
    EquivDecision::new(same, Stage::NumericConstant)
}

fn sampled_equiv(a: &MathExpr, b: &MathExpr, vars: &[String], config: &EquivConfig) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let range = Uniform::new(SAMPLE_LOW, SAMPLE_HIGH);
    for _ in 0..config.samples.max(1) {
        let mut decided = false;
        for _ in 0..MAX_REDRAWS {
            let env: BTreeMap<String, f64> = vars.iter().map(|v| (v.clone(), range.sample(&mut rng))).collect();
            let (x, y) = (numeric_value(a, &env), numeric_value(b, &env));
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            if !close_relative(x, y, config) {
                return false;
            }
            decided = true;
            break;
        }
        if !decided {
            return false;
        }
    }
    true
}

fn close_relative(x: f64, y: f64, config: &EquivConfig) -> bool {
    x == y || (x - y).abs() <= (config.rel_tol * x.abs().max(y.abs())).max(config.abs_floor)
}
