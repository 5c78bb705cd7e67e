//! Constraint and metric expressions.
//!
//! A small C-like expression language over integers, floats, strings and
//! booleans. Integer arithmetic is exact and checked; `/` truncates toward
//! zero and `%` takes the sign of the dividend. Mixing an integer with a float
//! promotes to float. Strings only support `==` and `!=`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Pow => "^",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }
}

/// Expression tree. Identifiers carry a slot index once bound, `usize::MAX` before.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Int(i64),
    Float(f64),
    Str(String),
    Var { name: String, slot: usize },
    Unary(UnaryOp, Box<Ast>),
    Binary(BinaryOp, Box<Ast>, Box<Ast>),
}

const UNBOUND: usize = usize::MAX;

/// Runtime value of an expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(&'a str),
}

impl Value<'_> {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "integer",
            Value::Float(_) => "float",
            Value::Bool(_) => "boolean",
            Value::Str(_) => "string",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(v) => Some(v as f64),
            Value::Float(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Value<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at offset {offset}")]
pub struct ParseError {
    pub message: String,
    /// Byte offset into the expression source.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero in `{op}`")]
    DivisionByZero { op: &'static str },
    #[error("integer overflow in `{op}`")]
    Overflow { op: &'static str },
    #[error("negative exponent in integer power")]
    NegativeExponent,
    #[error("operator `{op}` cannot be applied to {lhs} and {rhs}")]
    TypeMismatch {
        op: &'static str,
        lhs: &'static str,
        rhs: &'static str,
    },
    #[error("operator `{op}` cannot be applied to {operand}")]
    BadOperand {
        op: &'static str,
        operand: &'static str,
    },
    #[error("identifier `{0}` is not bound")]
    Unbound(String),
    #[error("expression produced {0}, expected a boolean")]
    NotBoolean(&'static str),
    #[error("expression produced {0}, expected a number")]
    NotNumeric(&'static str),
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    ast: Ast,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            end: source.len(),
        };
        let ast = parser.parse_or()?;
        if let Some(tok) = parser.peek() {
            return Err(ParseError {
                message: format!("unexpected {}", tok.kind.describe()),
                offset: tok.offset,
            });
        }
        Ok(Self {
            source: source.to_string(),
            ast,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    /// Identifiers referenced by the expression, in first-use order.
    pub fn identifiers(&self) -> Vec<&str> {
        fn walk<'a>(ast: &'a Ast, out: &mut Vec<&'a str>) {
            match ast {
                Ast::Var { name, .. } => {
                    if !out.contains(&name.as_str()) {
                        out.push(name);
                    }
                }
                Ast::Unary(_, inner) => walk(inner, out),
                Ast::Binary(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(&self.ast, &mut out);
        out
    }

    /// Resolve every identifier to its position in `names`.
    ///
    /// Returns the first identifier that is not in `names` on failure.
    pub fn bind(&mut self, names: &[&str]) -> Result<(), String> {
        fn walk(ast: &mut Ast, names: &[&str]) -> Result<(), String> {
            match ast {
                Ast::Var { name, slot } => match names.iter().position(|n| n == name) {
                    Some(i) => {
                        *slot = i;
                        Ok(())
                    }
                    None => Err(name.clone()),
                },
                Ast::Unary(_, inner) => walk(inner, names),
                Ast::Binary(_, l, r) => {
                    walk(l, names)?;
                    walk(r, names)
                }
                _ => Ok(()),
            }
        }
        walk(&mut self.ast, names)
    }

    pub fn eval<'a>(&'a self, slots: &[Value<'a>]) -> Result<Value<'a>, EvalError> {
        eval(&self.ast, slots)
    }

    pub fn eval_bool(&self, slots: &[Value<'_>]) -> Result<bool, EvalError> {
        match self.eval(slots)? {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::NotBoolean(other.type_name())),
        }
    }

    pub fn eval_f64(&self, slots: &[Value<'_>]) -> Result<f64, EvalError> {
        let v = self.eval(slots)?;
        v.as_f64().ok_or(EvalError::NotNumeric(v.type_name()))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn eval<'a>(ast: &'a Ast, slots: &[Value<'a>]) -> Result<Value<'a>, EvalError> {
    match ast {
        Ast::Int(v) => Ok(Value::Int(*v)),
        Ast::Float(v) => Ok(Value::Float(*v)),
        Ast::Str(s) => Ok(Value::Str(s)),
        Ast::Var { name, slot } => slots
            .get(*slot)
            .copied()
            .ok_or_else(|| EvalError::Unbound(name.clone())),
        Ast::Unary(op, inner) => {
            let v = eval(inner, slots)?;
            match (op, v) {
                (UnaryOp::Neg, Value::Int(i)) => i
                    .checked_neg()
                    .map(Value::Int)
                    .ok_or(EvalError::Overflow { op: "-" }),
                (UnaryOp::Neg, Value::Float(x)) => Ok(Value::Float(-x)),
                (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (UnaryOp::Neg, other) => Err(EvalError::BadOperand {
                    op: "-",
                    operand: other.type_name(),
                }),
                (UnaryOp::Not, other) => Err(EvalError::BadOperand {
                    op: "!",
                    operand: other.type_name(),
                }),
            }
        }
        Ast::Binary(BinaryOp::And, l, r) => {
            if logical_operand("&&", eval(l, slots)?)? {
                Ok(Value::Bool(logical_operand("&&", eval(r, slots)?)?))
            } else {
                Ok(Value::Bool(false))
            }
        }
        Ast::Binary(BinaryOp::Or, l, r) => {
            if logical_operand("||", eval(l, slots)?)? {
                Ok(Value::Bool(true))
            } else {
                Ok(Value::Bool(logical_operand("||", eval(r, slots)?)?))
            }
        }
        Ast::Binary(op, l, r) => binary(*op, eval(l, slots)?, eval(r, slots)?),
    }
}

fn logical_operand(op: &'static str, v: Value<'_>) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::BadOperand {
            op,
            operand: other.type_name(),
        }),
    }
}

fn binary<'a>(op: BinaryOp, lhs: Value<'a>, rhs: Value<'a>) -> Result<Value<'a>, EvalError> {
    let sym = op.symbol();
    let mismatch = || EvalError::TypeMismatch {
        op: sym,
        lhs: lhs.type_name(),
        rhs: rhs.type_name(),
    };
    match op {
        BinaryOp::Eq | BinaryOp::Ne => {
            let equal = match (lhs, rhs) {
                (Value::Str(a), Value::Str(b)) => a == b,
                (Value::Bool(a), Value::Bool(b)) => a == b,
                (Value::Int(a), Value::Int(b)) => a == b,
                (a, b) => match (a.as_f64(), b.as_f64()) {
                    (Some(x), Some(y)) => x == y,
                    _ => return Err(mismatch()),
                },
            };
            Ok(Value::Bool(if op == BinaryOp::Eq { equal } else { !equal }))
        }
        BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
            let ord = match (lhs, rhs) {
                (Value::Int(a), Value::Int(b)) => a.partial_cmp(&b),
                (a, b) => match (a.as_f64(), b.as_f64()) {
                    (Some(x), Some(y)) => x.partial_cmp(&y),
                    _ => return Err(mismatch()),
                },
            };
            let Some(ord) = ord else {
                return Ok(Value::Bool(false));
            };
            let res = match op {
                BinaryOp::Lt => ord.is_lt(),
                BinaryOp::Le => ord.is_le(),
                BinaryOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            };
            Ok(Value::Bool(res))
        }
        _ => match (lhs, rhs) {
            (Value::Int(a), Value::Int(b)) => int_arith(op, a, b).map(Value::Int),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => float_arith(op, x, y).map(Value::Float),
                _ => Err(mismatch()),
            },
        },
    }
}

fn int_arith(op: BinaryOp, a: i64, b: i64) -> Result<i64, EvalError> {
    let sym = op.symbol();
    let overflow = EvalError::Overflow { op: sym };
    match op {
        BinaryOp::Add => a.checked_add(b).ok_or(overflow),
        BinaryOp::Sub => a.checked_sub(b).ok_or(overflow),
        BinaryOp::Mul => a.checked_mul(b).ok_or(overflow),
        BinaryOp::Div | BinaryOp::Rem if b == 0 => Err(EvalError::DivisionByZero { op: sym }),
        BinaryOp::Div => a.checked_div(b).ok_or(overflow),
        BinaryOp::Rem => a.checked_rem(b).ok_or(overflow),
        BinaryOp::Pow => {
            let exp = u32::try_from(b).map_err(|_| {
                if b < 0 {
                    EvalError::NegativeExponent
                } else {
                    EvalError::Overflow { op: sym }
                }
            })?;
            a.checked_pow(exp).ok_or(overflow)
        }
        _ => unreachable!("non-arithmetic operator"),
    }
}

fn float_arith(op: BinaryOp, a: f64, b: f64) -> Result<f64, EvalError> {
    let sym = op.symbol();
    match op {
        BinaryOp::Add => Ok(a + b),
        BinaryOp::Sub => Ok(a - b),
        BinaryOp::Mul => Ok(a * b),
        BinaryOp::Div | BinaryOp::Rem if b == 0.0 => Err(EvalError::DivisionByZero { op: sym }),
        BinaryOp::Div => Ok(a / b),
        BinaryOp::Rem => Ok(a % b),
        BinaryOp::Pow => Ok(a.powf(b)),
        _ => unreachable!("non-arithmetic operator"),
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Int(v) => format!("integer `{v}`"),
            TokenKind::Float(v) => format!("number `{v}`"),
            TokenKind::Str(s) => format!("string {s:?}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(s) => format!("`{s}`"),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

const OPERATORS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "+", "-", "*", "/", "%", "^", "<", ">", "!",
];

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut is_float = false;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                is_float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let kind = if is_float {
                TokenKind::Float(text.parse().map_err(|_| ParseError {
                    message: format!("malformed number `{text}`"),
                    offset: start,
                })?)
            } else {
                TokenKind::Int(text.parse().map_err(|_| ParseError {
                    message: format!("integer literal `{text}` out of range"),
                    offset: start,
                })?)
            };
            tokens.push(Token {
                kind,
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(src[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        if c == b'"' || c == b'\'' {
            i += 1;
            while i < bytes.len() && bytes[i] != c {
                i += 1;
            }
            if i == bytes.len() {
                return Err(ParseError {
                    message: "unterminated string literal".into(),
                    offset: start,
                });
            }
            tokens.push(Token {
                kind: TokenKind::Str(src[start + 1..i].to_string()),
                offset: start,
            });
            i += 1;
            continue;
        }
        if c == b'(' || c == b')' {
            tokens.push(Token {
                kind: if c == b'(' {
                    TokenKind::LParen
                } else {
                    TokenKind::RParen
                },
                offset: start,
            });
            i += 1;
            continue;
        }
        match OPERATORS.iter().find(|op| src[i..].starts_with(**op)) {
            Some(op) => {
                tokens.push(Token {
                    kind: TokenKind::Op(op),
                    offset: start,
                });
                i += op.len();
            }
            None => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    message: format!("unexpected character `{ch}`"),
                    offset: start,
                });
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Recursive-descent parser, lowest precedence first:
// `||`, `&&`, `== !=`, `< <= > >=`, `+ -`, `* / %`, unary `- !`, `^` (right-assoc).

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(op),
                ..
            }) if ops.contains(op) => {
                let op = *op;
                self.pos += 1;
                Some(op)
            }
            _ => None,
        }
    }

    fn binary_level(
        &mut self,
        ops: &[&'static str],
        next: fn(&mut Self) -> Result<Ast, ParseError>,
    ) -> Result<Ast, ParseError> {
        let mut lhs = next(self)?;
        while let Some(op) = self.eat_op(ops) {
            let rhs = next(self)?;
            lhs = Ast::Binary(binary_op(op), Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_or(&mut self) -> Result<Ast, ParseError> {
        self.binary_level(&["||"], Self::parse_and)
    }

    fn parse_and(&mut self) -> Result<Ast, ParseError> {
        self.binary_level(&["&&"], Self::parse_equality)
    }

    fn parse_equality(&mut self) -> Result<Ast, ParseError> {
        self.binary_level(&["==", "!="], Self::parse_relational)
    }

    fn parse_relational(&mut self) -> Result<Ast, ParseError> {
        self.binary_level(&["<", "<=", ">", ">="], Self::parse_additive)
    }

    fn parse_additive(&mut self) -> Result<Ast, ParseError> {
        self.binary_level(&["+", "-"], Self::parse_multiplicative)
    }

    fn parse_multiplicative(&mut self) -> Result<Ast, ParseError> {
        self.binary_level(&["*", "/", "%"], Self::parse_unary)
    }

    fn parse_unary(&mut self) -> Result<Ast, ParseError> {
        if let Some(op) = self.eat_op(&["-", "!"]) {
            let inner = self.parse_unary()?;
            let op = if op == "-" {
                UnaryOp::Neg
            } else {
                UnaryOp::Not
            };
            return Ok(Ast::Unary(op, Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Ast, ParseError> {
        let base = self.parse_primary()?;
        if self.eat_op(&["^"]).is_some() {
            let exp = self.parse_unary()?;
            return Ok(Ast::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<Ast, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseError {
                message: "unexpected end of expression".into(),
                offset: self.end,
            });
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Int(v) => Ok(Ast::Int(v)),
            TokenKind::Float(v) => Ok(Ast::Float(v)),
            TokenKind::Str(s) => Ok(Ast::Str(s)),
            TokenKind::Ident(name) => Ok(Ast::Var {
                name,
                slot: UNBOUND,
            }),
            TokenKind::LParen => {
                let inner = self.parse_or()?;
                match self.peek() {
                    Some(Token {
                        kind: TokenKind::RParen,
                        ..
                    }) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    Some(t) => Err(ParseError {
                        message: format!("expected `)`, found {}", t.kind.describe()),
                        offset: t.offset,
                    }),
                    None => Err(ParseError {
                        message: "unclosed `(`".into(),
                        offset: tok.offset,
                    }),
                }
            }
            other => Err(ParseError {
                message: format!("unexpected {}", other.describe()),
                offset: tok.offset,
            }),
        }
    }
}

fn binary_op(op: &str) -> BinaryOp {
    match op {
        "+" => BinaryOp::Add,
        "-" => BinaryOp::Sub,
        "*" => BinaryOp::Mul,
        "/" => BinaryOp::Div,
        "%" => BinaryOp::Rem,
        "^" => BinaryOp::Pow,
        "==" => BinaryOp::Eq,
        "!=" => BinaryOp::Ne,
        "<" => BinaryOp::Lt,
        "<=" => BinaryOp::Le,
        ">" => BinaryOp::Gt,
        ">=" => BinaryOp::Ge,
        "&&" => BinaryOp::And,
        "||" => BinaryOp::Or,
        _ => unreachable!("unknown operator {op}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_with(src: &str, names: &[&str], values: &[Value<'_>]) -> Result<bool, EvalError> {
        let mut e = Expression::parse(src).unwrap();
        e.bind(names).unwrap();
        e.eval_bool(values)
    }

    #[test]
    fn thread_cap() {
        let r = eval_with(
            "block_size_x * block_size_y <= 1024",
            &["block_size_x", "block_size_y"],
            &[Value::Int(32), Value::Int(16)],
        );
        assert_eq!(r, Ok(true));
    }

    #[test]
    fn divisibility() {
        let r = eval_with(
            "temporal_tiling_factor % loop_unroll_factor_t == 0",
            &["temporal_tiling_factor", "loop_unroll_factor_t"],
            &[Value::Int(5), Value::Int(2)],
        );
        assert_eq!(r, Ok(false));
    }

    #[test]
    fn disjunction() {
        let r = eval_with(
            "use_shmem == 1 || use_padding == 0",
            &["use_shmem", "use_padding"],
            &[Value::Int(0), Value::Int(0)],
        );
        assert_eq!(r, Ok(true));
    }

    #[test]
    fn modulo_by_zero_is_an_error() {
        let r = eval_with("x % y == 0", &["x", "y"], &[Value::Int(4), Value::Int(0)]);
        assert_eq!(r, Err(EvalError::DivisionByZero { op: "%" }));
    }

    #[test]
    fn truncating_division_and_power() {
        let e = Expression::parse("7 / 2 == 3 && -7 / 2 == -3 && 2 ^ 3 ^ 2 == 512 && -2^2 == -4")
            .unwrap();
        assert_eq!(e.eval_bool(&[]), Ok(true));
    }

    #[test]
    fn precedence() {
        let e = Expression::parse("1 + 2 * 3 == 7 && (1 + 2) * 3 == 9 && !(1 > 2)").unwrap();
        assert_eq!(e.eval_bool(&[]), Ok(true));
    }

    #[test]
    fn float_promotion() {
        let e = Expression::parse("2*4096^3 / (t * 1e6)").unwrap();
        let mut e = e;
        e.bind(&["t"]).unwrap();
        let v = e.eval_f64(&[Value::Float(2.0)]).unwrap();
        assert!((v - 68719.476736).abs() < 1e-9);
    }

    #[test]
    fn strings_compare_by_equality_only() {
        let mut e = Expression::parse("layout == 'row' && layout != \"col\"").unwrap();
        e.bind(&["layout"]).unwrap();
        assert_eq!(e.eval_bool(&[Value::Str("row")]), Ok(true));

        let mut e = Expression::parse("layout < 'row'").unwrap();
        e.bind(&["layout"]).unwrap();
        assert!(matches!(
            e.eval_bool(&[Value::Str("a")]),
            Err(EvalError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn overflow_is_reported() {
        let e = Expression::parse("2 ^ 70 > 0").unwrap();
        assert_eq!(e.eval_bool(&[]), Err(EvalError::Overflow { op: "^" }));
    }

    #[test]
    fn non_boolean_result() {
        let e = Expression::parse("1 + 1").unwrap();
        assert_eq!(e.eval_bool(&[]), Err(EvalError::NotBoolean("integer")));
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let err = Expression::parse("x <= (y + 1").unwrap_err();
        assert_eq!(err.offset, 5);
        let err = Expression::parse("x $ y").unwrap_err();
        assert_eq!(err.offset, 2);
        let err = Expression::parse("x <=").unwrap_err();
        assert_eq!(err.offset, 4);
        let err = Expression::parse("x y").unwrap_err();
        assert_eq!(err.offset, 2);
    }

    #[test]
    fn bind_reports_unknown_identifier() {
        let mut e = Expression::parse("a + b > c").unwrap();
        assert_eq!(e.bind(&["a", "c"]), Err("b".to_string()));
        assert_eq!(e.identifiers(), vec!["a", "b", "c"]);
    }
}
