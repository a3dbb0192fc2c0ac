//! Small expression language for utilities and speedup functions.
//!
//! ```text
//! if(a1 == "2", 1, if(is_prime(int(t1)) == (a1 == "1"), 2, -1000)) - if(c1 >= 2, 2, 0)
//! ```
//!
//! Values are exact rationals, strings and booleans. Operators: `+ - * /`,
//! comparisons, `&& || !`. Functions: `if min max abs floor pow mod int num bin
//! len str concat substr is_prime xor`; `int` reads binary, `num` decimal.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rational::{format_rational_short, parse_rational};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Num(Rational),
    Str(String),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(q) => f.write_str(&format_rational_short(q)),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExprError {
    #[error("at offset {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("{0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Lit(Value),
    Var(String),
    Neg(Box<Node>),
    Not(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(String, Vec<Node>),
}

/// A parsed expression; keeps its source text for display and serialization.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Eq for Expr {}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Str(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |pos, m: &str| ExprError::Parse { pos, message: m.to_string() };
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let q = parse_rational(&src[start..i]).map_err(|_| err(start, "bad number"))?;
            out.push((start, Tok::Num(q)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        if c == '"' {
            i += 1;
            let s0 = i;
            while i < bytes.len() && bytes[i] != b'"' {
                i += 1;
            }
            if i >= bytes.len() {
                return Err(err(start, "unterminated string"));
            }
            out.push((start, Tok::Str(src[s0..i].to_string())));
            i += 1;
            continue;
        }
        let two = src.get(i..i + 2).unwrap_or("");
        let op2 = ["==", "!=", "<=", ">=", "&&", "||"].into_iter().find(|o| *o == two);
        if let Some(o) = op2 {
            out.push((start, Tok::Op(o)));
            i += 2;
            continue;
        }
        let tok = match c {
            '+' => Tok::Op("+"),
            '-' => Tok::Op("-"),
            '*' => Tok::Op("*"),
            '/' => Tok::Op("/"),
            '<' => Tok::Op("<"),
            '>' => Tok::Op(">"),
            '!' => Tok::Op("!"),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => return Err(err(start, &format!("unexpected character {c:?}"))),
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err(&self, m: impl Into<String>) -> ExprError {
        ExprError::Parse { pos: self.offset(), message: m.into() }
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        if let Some(Tok::Op(o)) = self.peek() {
            if let Some(found) = ops.iter().find(|x| *x == o) {
                self.pos += 1;
                return Some(found);
            }
        }
        None
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        self.or()
    }

    fn or(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.and()?;
        while self.eat_op(&["||"]).is_some() {
            let rhs = self.and()?;
            lhs = Node::Bin(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.cmp()?;
        while self.eat_op(&["&&"]).is_some() {
            let rhs = self.cmp()?;
            lhs = Node::Bin(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cmp(&mut self) -> Result<Node, ExprError> {
        let lhs = self.sum()?;
        let op = match self.eat_op(&["==", "!=", "<=", ">=", "<", ">"]) {
            Some("==") => BinOp::Eq,
            Some("!=") => BinOp::Ne,
            Some("<=") => BinOp::Le,
            Some(">=") => BinOp::Ge,
            Some("<") => BinOp::Lt,
            Some(">") => BinOp::Gt,
            _ => return Ok(lhs),
        };
        let rhs = self.sum()?;
        Ok(Node::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        while let Some(o) = self.eat_op(&["+", "-"]) {
            let rhs = self.product()?;
            let op = if o == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(o) = self.eat_op(&["*", "/"]) {
            let rhs = self.unary()?;
            let op = if o == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat_op(&["-"]).is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op(&["!"]).is_some() {
            return Ok(Node::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.err("unexpected end of expression"));
        };
        self.pos += 1;
        match tok {
            Tok::Num(q) => Ok(Node::Lit(Value::Num(q))),
            Tok::Str(s) => Ok(Node::Lit(Value::Str(s))),
            Tok::Ident(name) if name == "true" => Ok(Node::Lit(Value::Bool(true))),
            Tok::Ident(name) if name == "false" => Ok(Node::Lit(Value::Bool(false))),
            Tok::Ident(name) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            match self.peek() {
                                Some(Tok::Comma) => self.pos += 1,
                                Some(Tok::RParen) => break,
                                _ => return Err(self.err("expected , or )")),
                            }
                        }
                    }
                    self.pos += 1;
                    check_arity(&name, args.len()).map_err(|m| self.err(m))?;
                    Ok(Node::Call(name, args))
                } else {
                    Ok(Node::Var(name))
                }
            }
            Tok::LParen => {
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.err("expected )"));
                }
                self.pos += 1;
                Ok(e)
            }
            _ => {
                self.pos -= 1;
                Err(self.err("expected a value"))
            }
        }
    }
}

fn check_arity(name: &str, n: usize) -> Result<(), String> {
    let ok = match name {
        "if" | "substr" => n == 3,
        "min" | "max" | "concat" => n >= 1,
        "pow" | "mod" | "xor" => n == 2,
        "abs" | "floor" | "int" | "num" | "len" | "str" | "is_prime" => n == 1,
        "bin" => n == 2,
        _ => return Err(format!("unknown function {name:?}")),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("wrong number of arguments to {name}"))
    }
}

fn num(v: Value) -> Result<Rational, ExprError> {
    match v {
        Value::Num(q) => Ok(q),
        other => Err(ExprError::Type(format!("expected a number, got {other}"))),
    }
}

fn boolean(v: Value) -> Result<bool, ExprError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(ExprError::Type(format!("expected a boolean, got {other}"))),
    }
}

fn string(v: Value) -> Result<String, ExprError> {
    match v {
        Value::Str(s) => Ok(s),
        other => Err(ExprError::Type(format!("expected a string, got {other}"))),
    }
}

fn integer(v: Value) -> Result<BigInt, ExprError> {
    let q = num(v)?;
    if !q.denom().is_one() {
        return Err(ExprError::Type(format!("expected an integer, got {}", format_rational_short(&q))));
    }
    Ok(q.numer().clone())
}

fn is_prime(n: &BigInt) -> bool {
    let Some(n) = n.to_u64() else { return false };
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let toks = lex(src)?;
        let mut p = Parser { toks, pos: 0, end: src.len() };
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(p.err("trailing input"));
        }
        Ok(Expr { source: src.trim().to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Variables referenced anywhere in the expression.
    pub fn variables(&self) -> BTreeSet<String> {
        fn walk(n: &Node, out: &mut BTreeSet<String>) {
            match n {
                Node::Var(v) => {
                    out.insert(v.clone());
                }
                Node::Neg(a) | Node::Not(a) => walk(a, out),
                Node::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Node::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
                Node::Lit(_) => {}
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<Value>) -> Result<Value, ExprError> {
        eval_node(&self.root, env)
    }

    pub fn eval_num(&self, env: &dyn Fn(&str) -> Option<Value>) -> Result<Rational, ExprError> {
        num(self.eval(env)?)
    }
}

fn eval_node(n: &Node, env: &dyn Fn(&str) -> Option<Value>) -> Result<Value, ExprError> {
    Ok(match n {
        Node::Lit(v) => v.clone(),
        Node::Var(name) => env(name).ok_or_else(|| ExprError::UnknownVariable(name.clone()))?,
        Node::Neg(a) => Value::Num(-num(eval_node(a, env)?)?),
        Node::Not(a) => Value::Bool(!boolean(eval_node(a, env)?)?),
        Node::Bin(op, a, b) => {
            match op {
                BinOp::And => {
                    return Ok(Value::Bool(boolean(eval_node(a, env)?)? && boolean(eval_node(b, env)?)?))
                }
                BinOp::Or => {
                    return Ok(Value::Bool(boolean(eval_node(a, env)?)? || boolean(eval_node(b, env)?)?))
                }
                _ => {}
            }
            let (x, y) = (eval_node(a, env)?, eval_node(b, env)?);
            match op {
                BinOp::Eq => Value::Bool(x == y),
                BinOp::Ne => Value::Bool(x != y),
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    let ord = match (&x, &y) {
                        (Value::Num(p), Value::Num(q)) => p.cmp(q),
                        (Value::Str(p), Value::Str(q)) => p.cmp(q),
                        _ => return Err(ExprError::Type(format!("cannot compare {x} and {y}"))),
                    };
                    Value::Bool(match op {
                        BinOp::Lt => ord.is_lt(),
                        BinOp::Le => ord.is_le(),
                        BinOp::Gt => ord.is_gt(),
                        _ => ord.is_ge(),
                    })
                }
                BinOp::Add => Value::Num(num(x)? + num(y)?),
                BinOp::Sub => Value::Num(num(x)? - num(y)?),
                BinOp::Mul => Value::Num(num(x)? * num(y)?),
                BinOp::Div => {
                    let d = num(y)?;
                    if d.is_zero() {
                        return Err(ExprError::DivisionByZero);
                    }
                    Value::Num(num(x)? / d)
                }
                BinOp::And | BinOp::Or => unreachable!(),
            }
        }
        Node::Call(name, args) => call(name, args, env)?,
    })
}

fn call(name: &str, args: &[Node], env: &dyn Fn(&str) -> Option<Value>) -> Result<Value, ExprError> {
    if name == "if" {
        return if boolean(eval_node(&args[0], env)?)? {
            eval_node(&args[1], env)
        } else {
            eval_node(&args[2], env)
        };
    }
    let mut vals = Vec::with_capacity(args.len());
    for a in args {
        vals.push(eval_node(a, env)?);
    }
    let mut it = vals.into_iter();
    let mut next = || it.next().expect("arity checked at parse time");
    Ok(match name {
        "min" | "max" => {
            let mut best = num(next())?;
            for _ in 1..args.len() {
                let v = num(next())?;
                if (name == "min" && v < best) || (name == "max" && v > best) {
                    best = v;
                }
            }
            Value::Num(best)
        }
        "abs" => Value::Num(num(next())?.abs()),
        "floor" => Value::Num(num(next())?.floor()),
        "pow" => {
            let base = num(next())?;
            let e = integer(next())?.to_i32().ok_or_else(|| ExprError::Type("exponent too large".into()))?;
            if e < 0 && base.is_zero() {
                return Err(ExprError::DivisionByZero);
            }
            Value::Num(num_traits::pow::pow(base.clone(), e.unsigned_abs() as usize))
                .map_if(e < 0, |q| Rational::one() / q)
        }
        "mod" => {
            let a = integer(next())?;
            let m = integer(next())?;
            if m.is_zero() {
                return Err(ExprError::DivisionByZero);
            }
            Value::Num(Rational::from_integer(a.mod_floor(&m)))
        }
        "xor" => {
            let a = string(next())?;
            let b = string(next())?;
            if a.len() != b.len() || !a.chars().chain(b.chars()).all(|c| c == '0' || c == '1') {
                return Err(ExprError::Type(format!("xor needs equal-length bit strings, got {a:?} and {b:?}")));
            }
            Value::Str(a.chars().zip(b.chars()).map(|(x, y)| if x == y { '0' } else { '1' }).collect())
        }
        "int" => {
            let s = string(next())?;
            if s.is_empty() || !s.chars().all(|c| c == '0' || c == '1') {
                return Err(ExprError::Type(format!("int needs a nonempty bit string, got {s:?}")));
            }
            let v = BigInt::parse_bytes(s.as_bytes(), 2).expect("checked binary digits");
            Value::Num(Rational::from_integer(v))
        }
        "num" => {
            let s = string(next())?;
            if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit()) {
                return Err(ExprError::Type(format!("num needs a nonempty decimal string, got {s:?}")));
            }
            let v = BigInt::parse_bytes(s.as_bytes(), 10).expect("checked decimal digits");
            Value::Num(Rational::from_integer(v))
        }
        "bin" => {
            let v = integer(next())?;
            let width = integer(next())?.to_usize().unwrap_or(0);
            if v.is_negative() {
                return Err(ExprError::Type("bin of a negative number".into()));
            }
            Value::Str(format!("{:0>width$}", v.to_str_radix(2)))
        }
        "len" => Value::Num(Rational::from_integer(BigInt::from(string(next())?.chars().count()))),
        "str" => match next() {
            Value::Str(s) => Value::Str(s),
            Value::Num(q) => Value::Str(format_rational_short(&q)),
            Value::Bool(b) => Value::Str(b.to_string()),
        },
        "concat" => {
            let mut s = String::new();
            for _ in 0..args.len() {
                s.push_str(&string(next())?);
            }
            Value::Str(s)
        }
        "substr" => {
            let s = string(next())?;
            let from = integer(next())?.to_usize().unwrap_or(usize::MAX);
            let len = integer(next())?.to_usize().unwrap_or(0);
            Value::Str(s.chars().skip(from).take(len).collect())
        }
        "is_prime" => Value::Bool(is_prime(&integer(next())?)),
        other => return Err(ExprError::UnknownFunction(other.to_string())),
    })
}

trait MapIf {
    fn map_if(self, cond: bool, f: impl FnOnce(Rational) -> Rational) -> Self;
}

impl MapIf for Value {
    fn map_if(self, cond: bool, f: impl FnOnce(Rational) -> Rational) -> Self {
        match self {
            Value::Num(q) if cond => Value::Num(f(q)),
            v => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn eval(src: &str, vars: &[(&str, Value)]) -> Result<Value, ExprError> {
        let e = Expr::parse(src)?;
        e.eval(&|name| vars.iter().find(|(n, _)| *n == name).map(|(_, v)| v.clone()))
    }

    #[test]
    fn arithmetic_is_exact() {
        assert_eq!(eval("1/3 + 1/6", &[]).unwrap(), Value::Num(ratio(1, 2)));
        assert_eq!(eval("-2 * (3 - 5)", &[]).unwrap(), Value::Num(ratio(4, 1)));
        assert_eq!(eval("pow(9/10, 2)", &[]).unwrap(), Value::Num(ratio(81, 100)));
        assert_eq!(eval("pow(2, -2)", &[]).unwrap(), Value::Num(ratio(1, 4)));
        assert_eq!(eval("0.7", &[]).unwrap(), Value::Num(ratio(7, 10)));
        assert_eq!(eval("1/0", &[]), Err(ExprError::DivisionByZero));
    }

    #[test]
    fn primality_utility_shape() {
        let u = "if(a1 == \"2\", 1, if(is_prime(int(t1)) == (a1 == \"1\"), 2, -1000)) - if(c1 >= 2, 2, 0)";
        let v = |t: &str, a: &str, c: i64| {
            eval(u, &[("t1", Value::Str(t.into())), ("a1", Value::Str(a.into())), ("c1", Value::Num(ratio(c, 1)))])
                .unwrap()
        };
        assert_eq!(v("1011", "1", 1), Value::Num(ratio(2, 1)));
        assert_eq!(v("1001", "1", 1), Value::Num(ratio(-1000, 1)));
        assert_eq!(v("1001", "0", 2), Value::Num(ratio(0, 1)));
        assert_eq!(v("1111", "2", 0), Value::Num(ratio(1, 1)));
    }

    #[test]
    fn string_functions() {
        assert_eq!(eval("xor(\"0110\", \"0101\")", &[]).unwrap(), Value::Str("0011".into()));
        assert_eq!(eval("bin(5, 4)", &[]).unwrap(), Value::Str("0101".into()));
        assert_eq!(eval("substr(\"10110\", 1, 3)", &[]).unwrap(), Value::Str("011".into()));
        assert_eq!(eval("len(concat(\"1\", \"01\"))", &[]).unwrap(), Value::Num(ratio(3, 1)));
        assert_eq!(eval("mod(-1, 3)", &[]).unwrap(), Value::Num(ratio(2, 1)));
        assert_eq!(eval("num(\"12\") + int(\"11\")", &[]).unwrap(), Value::Num(ratio(15, 1)));
        assert!(eval("num(\"\")", &[]).is_err());
        assert_eq!(eval("true && !false", &[]).unwrap(), Value::Bool(true));
    }

    #[test]
    fn errors_carry_offsets() {
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::Parse { pos: 3, .. })));
        assert!(matches!(Expr::parse("frob(1)"), Err(ExprError::Parse { .. })));
        assert_eq!(eval("x + 1", &[]), Err(ExprError::UnknownVariable("x".into())));
    }

    #[test]
    fn variables_are_collected() {
        let e = Expr::parse("if(c2 > 1, a1, t1)").unwrap();
        assert_eq!(e.variables().into_iter().collect::<Vec<_>>(), vec!["a1", "c2", "t1"]);
    }
}
