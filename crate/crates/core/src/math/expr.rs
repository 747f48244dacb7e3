//! Expression tree and recursive-descent parser for answer notation.
//!
//! Covers integers, decimals, `\frac`, `\sqrt` (with optional index), `\pi`,
//! `e`, `\infty`, single-letter and Greek variables (optionally subscripted),
//! `+ - * / ^`, `\div`, implicit multiplication, `|x|`, `\pm`, and the
//! wrappers `(a, b)`, `[a, b)`, `\{a, b\}`, `\langle a, b \rangle` and bare
//! comma lists. Anything else is a [`ParseError`].

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
    Infinity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MathExpr {
    Number(BigRational),
    Constant(Constant),
    Var(String),
    Neg(Box<MathExpr>),
    Add(Box<MathExpr>, Box<MathExpr>),
    Sub(Box<MathExpr>, Box<MathExpr>),
    Mul(Box<MathExpr>, Box<MathExpr>),
    Div(Box<MathExpr>, Box<MathExpr>),
    Pow(Box<MathExpr>, Box<MathExpr>),
    Sqrt(Box<MathExpr>),
    Abs(Box<MathExpr>),
    /// Ordered, delimited sequence: points, intervals, vectors.
    Tuple {
        open: char,
        close: char,
        items: Vec<MathExpr>,
    },
    /// Unordered collection: bare comma lists, sets, `a \pm b`.
    List(Vec<MathExpr>),
}

impl MathExpr {
    pub fn int(n: i64) -> Self {
        MathExpr::Number(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn var(name: &str) -> Self {
        MathExpr::Var(name.to_string())
    }

    pub fn is_container(&self) -> bool {
        matches!(self, MathExpr::Tuple { .. } | MathExpr::List(_))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            MathExpr::Var(v) => {
                out.insert(v.clone());
            }
            MathExpr::Number(_) | MathExpr::Constant(_) => {}
            MathExpr::Neg(a) | MathExpr::Sqrt(a) | MathExpr::Abs(a) => a.collect_vars(out),
            MathExpr::Add(a, b)
            | MathExpr::Sub(a, b)
            | MathExpr::Mul(a, b)
            | MathExpr::Div(a, b)
            | MathExpr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            MathExpr::Tuple { items, .. } | MathExpr::List(items) => items.iter().for_each(|i| i.collect_vars(out)),
        }
    }
}

fn bx(e: MathExpr) -> Box<MathExpr> {
    Box::new(e)
}

impl fmt::Display for MathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MathExpr::Number(r) if r.is_integer() => write!(f, "{}", r.numer()),
            MathExpr::Number(r) => write!(f, "({}/{})", r.numer(), r.denom()),
            MathExpr::Constant(Constant::Pi) => f.write_str("pi"),
            MathExpr::Constant(Constant::E) => f.write_str("e"),
            MathExpr::Constant(Constant::Infinity) => f.write_str("oo"),
            MathExpr::Var(v) => f.write_str(v),
            MathExpr::Neg(a) => write!(f, "(-{a})"),
            MathExpr::Add(a, b) => write!(f, "({a} + {b})"),
            MathExpr::Sub(a, b) => write!(f, "({a} - {b})"),
            MathExpr::Mul(a, b) => write!(f, "({a} * {b})"),
            MathExpr::Div(a, b) => write!(f, "({a} / {b})"),
            MathExpr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            MathExpr::Sqrt(a) => write!(f, "sqrt({a})"),
            MathExpr::Abs(a) => write!(f, "|{a}|"),
            MathExpr::Tuple { open, close, items } => {
                write!(f, "{open}")?;
                write_items(f, items)?;
                write!(f, "{close}")
            }
            MathExpr::List(items) => {
                write!(f, "{{")?;
                write_items(f, items)?;
                write!(f, "}}")
            }
        }
    }
}

fn write_items(f: &mut fmt::Formatter<'_>, items: &[MathExpr]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {position}: {message}")]
pub struct ParseError {
    /// Character offset into the parsed text.
    pub position: usize,
    pub message: String,
}

const MAX_DEPTH: usize = 100;

const GREEK: [&str; 30] = [
    "alpha",
    "beta",
    "gamma",
    "delta",
    "epsilon",
    "varepsilon",
    "zeta",
    "eta",
    "theta",
    "vartheta",
    "iota",
    "kappa",
    "lambda",
    "mu",
    "nu",
    "xi",
    "rho",
    "sigma",
    "tau",
    "upsilon",
    "phi",
    "varphi",
    "chi",
    "psi",
    "omega",
    "Gamma",
    "Delta",
    "Theta",
    "Lambda",
    "Omega",
];

/// Commands that can begin an operand, and so can follow a factor with
/// implicit multiplication (`2\pi`, `3\sqrt{2}`).
fn is_operand_command(name: &str) -> bool {
    matches!(name, "frac" | "sqrt" | "pi" | "infty") || GREEK.contains(&name)
}

pub fn parse_expr(text: &str) -> Result<MathExpr, ParseError> {
    let mut parser = Parser { chars: text.chars().collect(), pos: 0, depth: 0 };
    let expr = parser.top()?;
    parser.skip_ws();
    if parser.pos < parser.chars.len() {
        return Err(parser.error(format!("unexpected `{}`", parser.chars[parser.pos])));
    }
    Ok(expr)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { position: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    /// Name of the command at the cursor without consuming it: the letters
    /// after `\`, or the single symbol for `\{`-style commands.
    fn peek_command(&mut self) -> Option<String> {
        if self.peek() != Some('\\') {
            return None;
        }
        let start = self.pos + 1;
        let mut end = start;
        while self.chars.get(end).is_some_and(|c| c.is_ascii_alphabetic()) {
            end += 1;
        }
        if end == start {
            return self.chars.get(start).map(|c| c.to_string());
        }
        Some(self.chars[start..end].iter().collect())
    }

    fn eat_command(&mut self, name: &str) -> bool {
        if self.peek_command().as_deref() == Some(name) {
            self.pos += 1 + name.chars().count();
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("expression nested too deeply"));
        }
        Ok(())
    }

    fn top(&mut self) -> Result<MathExpr, ParseError> {
        let mut items = self.comma_list()?;
        if items.len() == 1 {
            Ok(items.pop().expect("one item"))
        } else {
            Ok(MathExpr::List(items))
        }
    }

    /// Comma-separated items; a `\pm` item contributes both branches.
    fn comma_list(&mut self) -> Result<Vec<MathExpr>, ParseError> {
        let mut items = Vec::new();
        loop {
            let (expr, split) = self.plus_minus()?;
            match (split, expr) {
                (true, MathExpr::List(both)) => items.extend(both),
                (_, expr) => items.push(expr),
            }
            if !self.eat(',') {
                break;
            }
        }
        // `a \pm b` on its own stays a two-element list.
        Ok(items)
    }

    fn plus_minus(&mut self) -> Result<(MathExpr, bool), ParseError> {
        if self.eat_command("pm") || self.eat_command("mp") {
            let b = self.sum()?;
            return Ok((MathExpr::List(vec![b.clone(), MathExpr::Neg(bx(b))]), true));
        }
        let a = self.sum()?;
        if self.eat_command("pm") || self.eat_command("mp") {
            let b = self.sum()?;
            let plus = MathExpr::Add(bx(a.clone()), bx(b.clone()));
            let minus = MathExpr::Sub(bx(a), bx(b));
            return Ok((MathExpr::List(vec![plus, minus]), true));
        }
        Ok((a, false))
    }

    fn sum(&mut self) -> Result<MathExpr, ParseError> {
        let mut left = self.product()?;
        loop {
            if self.eat('+') {
                left = MathExpr::Add(bx(left), bx(self.product()?));
            } else if self.eat('-') {
                left = MathExpr::Sub(bx(left), bx(self.product()?));
            } else {
                return Ok(left);
            }
        }
    }

    fn product(&mut self) -> Result<MathExpr, ParseError> {
        let mut left = self.unary()?;
        loop {
            if self.eat('*') || self.eat_command("times") || self.eat_command("cdot") {
                left = MathExpr::Mul(bx(left), bx(self.unary()?));
            } else if self.eat('/') || self.eat_command("div") {
                let at = self.pos;
                let right = self.unary()?;
                check_denominator(&right, at)?;
                left = MathExpr::Div(bx(left), bx(right));
            } else if self.implicit_operand_ahead() {
                left = MathExpr::Mul(bx(left), bx(self.power()?));
            } else {
                return Ok(left);
            }
        }
    }

    fn implicit_operand_ahead(&mut self) -> bool {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => true,
            Some('(') | Some('{') => true,
            Some('\\') => self.peek_command().is_some_and(|name| is_operand_command(&name)),
            _ => false,
        }
    }

    fn unary(&mut self) -> Result<MathExpr, ParseError> {
        if self.eat('-') {
            self.enter()?;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(MathExpr::Neg(bx(inner)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<MathExpr, ParseError> {
        let base = self.primary()?;
        if self.eat('^') {
            let exponent = self.exponent()?;
            return Ok(MathExpr::Pow(bx(base), bx(exponent)));
        }
        Ok(base)
    }

    /// Exponent after `^`: a braced or parenthesized group, a number, a single
    /// letter, or an operand command. Right-associative.
    fn exponent(&mut self) -> Result<MathExpr, ParseError> {
        self.enter()?;
        let atom = match self.peek() {
            Some('-') => {
                self.pos += 1;
                MathExpr::Neg(bx(self.exponent()?))
            }
            Some('{') => self.braced()?,
            Some('(') => self.primary()?,
            Some(c) if c.is_ascii_digit() || c == '.' => self.number()?,
            Some(c) if c.is_ascii_alphabetic() => self.single_letter()?,
            Some('\\') => self.primary()?,
            _ => return Err(self.error("missing exponent")),
        };
        self.depth -= 1;
        if self.eat('^') {
            return Ok(MathExpr::Pow(bx(atom), bx(self.exponent()?)));
        }
        Ok(atom)
    }

    fn primary(&mut self) -> Result<MathExpr, ParseError> {
        self.enter()?;
        let result = self.primary_inner();
        self.depth -= 1;
        result
    }

    fn primary_inner(&mut self) -> Result<MathExpr, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.word(),
            Some('(') => {
                self.pos += 1;
                self.group('(', &[')', ']'])
            }
            Some('[') => {
                self.pos += 1;
                self.group('[', &[']', ')'])
            }
            Some('{') => self.braced(),
            Some('|') => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect('|')?;
                Ok(MathExpr::Abs(bx(inner)))
            }
            Some('\\') => self.command(),
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
        }
    }

    fn group(&mut self, open: char, closers: &[char]) -> Result<MathExpr, ParseError> {
        let mut items = self.comma_list()?;
        let close = match self.peek() {
            Some(c) if closers.contains(&c) => c,
            _ => return Err(self.error(format!("unclosed `{open}`"))),
        };
        self.pos += 1;
        let matched = matches!((open, close), ('(', ')') | ('[', ']'));
        if items.len() == 1 && matched {
            return Ok(items.pop().expect("one item"));
        }
        if items.len() == 1 {
            return Err(self.error("single value inside mixed brackets"));
        }
        Ok(MathExpr::Tuple { open, close, items })
    }

    fn braced(&mut self) -> Result<MathExpr, ParseError> {
        self.expect('{')?;
        let inner = self.top()?;
        self.expect('}')?;
        Ok(inner)
    }

    fn number(&mut self) -> Result<MathExpr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut digits = String::new();
        let mut scale = 0u32;
        let mut seen_point = false;
        while let Some(&c) = self.chars.get(self.pos) {
            if c.is_ascii_digit() {
                digits.push(c);
                if seen_point {
                    scale += 1;
                }
            } else if c == '.' && !seen_point && self.chars.get(self.pos + 1).is_some_and(|d| d.is_ascii_digit()) {
                seen_point = true;
            } else {
                break;
            }
            self.pos += 1;
        }
        if digits.is_empty() {
            self.pos = start;
            return Err(self.error("expected a number"));
        }
        let numer: BigInt = digits.parse().expect("ascii digits");
        let denom = BigInt::from(10u32).pow(scale);
        Ok(MathExpr::Number(BigRational::new(numer, denom)))
    }

    fn single_letter(&mut self) -> Result<MathExpr, ParseError> {
        let c = self.chars[self.pos];
        self.pos += 1;
        Ok(self.letter_atom(c))
    }

    fn letter_atom(&mut self, c: char) -> MathExpr {
        if c == 'e' {
            return MathExpr::Constant(Constant::E);
        }
        let mut name = c.to_string();
        self.subscript(&mut name);
        MathExpr::Var(name)
    }

    /// Folds `_1` or `_{12}` into a variable name.
    fn subscript(&mut self, name: &mut String) {
        if self.chars.get(self.pos) != Some(&'_') {
            return;
        }
        let start = self.pos;
        self.pos += 1;
        match self.chars.get(self.pos) {
            Some('{') => {
                let close = self.chars[self.pos..].iter().position(|&c| c == '}');
                match close {
                    Some(len) if len > 1 => {
                        let body: String = self.chars[self.pos + 1..self.pos + len].iter().collect();
                        if body.chars().all(|c| c.is_ascii_alphanumeric()) {
                            name.push('_');
                            name.push_str(&body);
                            self.pos += len + 1;
                            return;
                        }
                    }
                    _ => {}
                }
            }
            Some(&c) if c.is_ascii_alphanumeric() => {
                name.push('_');
                name.push(c);
                self.pos += 1;
                return;
            }
            _ => {}
        }
        self.pos = start;
    }

    /// A run of letters: a known word (`pi`, `sqrt`, `abs`, `inf`) or up to
    /// two single-letter factors. Longer unknown words are not math.
    fn word(&mut self) -> Result<MathExpr, ParseError> {
        let start = self.pos;
        let mut end = start;
        while self.chars.get(end).is_some_and(|c| c.is_ascii_alphabetic()) {
            end += 1;
        }
        let word: String = self.chars[start..end].iter().collect();
        match word.as_str() {
            "pi" => {
                self.pos = end;
                return Ok(MathExpr::Constant(Constant::Pi));
            }
            "inf" | "infty" | "infinity" => {
                self.pos = end;
                return Ok(MathExpr::Constant(Constant::Infinity));
            }
            "sqrt" | "abs" => {
                self.pos = end;
                if self.peek() != Some('(') {
                    return Err(self.error(format!("`{word}` needs a parenthesized argument")));
                }
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(')')?;
                return Ok(if word == "sqrt" { MathExpr::Sqrt(bx(inner)) } else { MathExpr::Abs(bx(inner)) });
            }
            _ => {}
        }
        if word.len() > 2 {
            return Err(self.error(format!("unrecognized word `{word}`")));
        }
        self.pos += 1;
        let first = self.letter_atom(word.chars().next().expect("non-empty"));
        // A second letter binds through implicit multiplication in `product`.
        Ok(first)
    }

    /// A `\frac`/`\sqrt` argument: a braced group, or one digit/letter/command.
    fn argument(&mut self) -> Result<MathExpr, ParseError> {
        match self.peek() {
            Some('{') => self.braced(),
            Some(c) if c.is_ascii_digit() => {
                self.pos += 1;
                Ok(MathExpr::int(c.to_digit(10).expect("digit") as i64))
            }
            Some(c) if c.is_ascii_alphabetic() => self.single_letter(),
            Some('\\') => self.primary(),
            _ => Err(self.error("missing argument")),
        }
    }

    fn command(&mut self) -> Result<MathExpr, ParseError> {
        let Some(name) = self.peek_command() else {
            return Err(self.error("expected a command"));
        };
        self.pos += 1 + name.chars().count();
        match name.as_str() {
            "frac" => {
                let numerator = self.argument()?;
                let at = self.pos;
                let denominator = self.argument()?;
                check_denominator(&denominator, at)?;
                Ok(MathExpr::Div(bx(numerator), bx(denominator)))
            }
            "sqrt" => {
                let index = if self.eat('[') {
                    let index = self.sum()?;
                    self.expect(']')?;
                    Some(index)
                } else {
                    None
                };
                let radicand = self.argument()?;
                Ok(match index {
                    None => MathExpr::Sqrt(bx(radicand)),
                    Some(n) => MathExpr::Pow(bx(radicand), bx(MathExpr::Div(bx(MathExpr::int(1)), bx(n)))),
                })
            }
            "pi" => Ok(MathExpr::Constant(Constant::Pi)),
            "infty" => Ok(MathExpr::Constant(Constant::Infinity)),
            "{" => {
                let items = self.comma_list()?;
                if !self.eat_command("}") {
                    return Err(self.error("unclosed `\\{`"));
                }
                Ok(MathExpr::List(items))
            }
            "langle" => {
                let items = self.comma_list()?;
                if !self.eat_command("rangle") {
                    return Err(self.error("unclosed `\\langle`"));
                }
                Ok(MathExpr::Tuple { open: '<', close: '>', items })
            }
            greek if GREEK.contains(&greek) => {
                let mut var = greek.to_string();
                self.subscript(&mut var);
                Ok(MathExpr::Var(var))
            }
            other => Err(ParseError {
                position: self.pos - 1 - other.chars().count(),
                message: format!("unsupported command `\\{other}`"),
            }),
        }
    }
}

fn check_denominator(expr: &MathExpr, position: usize) -> Result<(), ParseError> {
    match expr {
        MathExpr::Number(n) if n.is_zero() => Err(ParseError { position, message: "zero denominator".into() }),
        _ => Ok(()),
    }
}
