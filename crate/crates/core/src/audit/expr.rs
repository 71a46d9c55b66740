//! A small expression language for naming audit elements.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := ('-' | '+') unary | primary
//! primary := number | 'i' | 'unit' | 'zero'
//!          | 'psi' '(' k ',' expr ')'        stage-k compression of a C[G] element
//!          | 'delta' '(' element ')'         λ_g, inside psi(...)
//!          | 'e' '(' a ',' b ')'             matrix unit; group elements for Følner systems
//!          | 'e' '(' block ',' i ',' j ')'
//!          | 'random' '(' [seed] ')'         seeded element of norm 1
//!          | 'adj' '(' expr ')'
//!          | '(' expr (',' expr)* ')'        grouping, or a tuple for Z^d elements
//! ```
//!
//! Expressions evaluate to an element of the stage-`k` algebra. Products of
//! two algebra elements are algebra products; products of two `C[G]`
//! elements are convolutions.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fdcstar::{AlgElement, FiniteDimCstar};
use crate::folner_system::CpcSystem;
use crate::groupalg::GroupAlgebraElement;
use crate::groups::{Group, GroupElement};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '(' => {
                out.push(Token::LParen);
                i += 1
            }
            ')' => {
                out.push(Token::RParen);
                i += 1
            }
            ',' => {
                out.push(Token::Comma);
                i += 1
            }
            '+' => {
                out.push(Token::Plus);
                i += 1
            }
            '-' => {
                out.push(Token::Minus);
                i += 1
            }
            '*' => {
                out.push(Token::Star);
                i += 1
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut k = i + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        i = k;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text.parse::<f64>().map_err(|_| Error::Expression(format!("bad number '{text}'")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(Error::Expression(format!("unexpected character '{other}' in '{src}'"))),
        }
    }
    Ok(out)
}

/// Parsed expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Ident(String),
    Call(String, Vec<Expr>),
    Tuple(Vec<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(Error::Expression(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::Star) {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn list(&mut self) -> Result<Vec<Expr>> {
        let mut items = vec![self.expr()?];
        while self.peek() == Some(&Token::Comma) {
            self.pos += 1;
            items.push(self.expr()?);
        }
        self.expect(Token::RParen)?;
        Ok(items)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::Ident(name)) => {
                if self.peek() == Some(&Token::LParen) {
                    self.pos += 1;
                    if self.peek() == Some(&Token::RParen) {
                        self.pos += 1;
                        return Ok(Expr::Call(name, Vec::new()));
                    }
                    Ok(Expr::Call(name, self.list()?))
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            Some(Token::LParen) => {
                let mut items = self.list()?;
                Ok(if items.len() == 1 { items.pop().unwrap() } else { Expr::Tuple(items) })
            }
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }
}

/// Parses an element expression.
pub fn parse(src: &str) -> Result<Expr> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(Error::Expression("empty expression".into()));
    }
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(Error::Expression(format!("trailing input in '{src}'")));
    }
    Ok(e)
}

/// Where expressions are evaluated: the system, the stage `k` whose algebra
/// the result must lie in, and the seed used by `random()`.
#[derive(Clone, Copy)]
pub struct ElementContext<'a> {
    pub system: &'a CpcSystem,
    pub k: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
enum Val {
    Scalar(C64),
    Alg(AlgElement),
    Group(GroupAlgebraElement),
    Tuple(Vec<Val>),
}

impl<'a> ElementContext<'a> {
    fn algebra(&self) -> Result<&'a FiniteDimCstar> {
        self.system.algebra(self.k)
    }

    fn group(&self) -> Result<&'a Group> {
        self.system
            .approximation()
            .map(|a| a.group())
            .ok_or_else(|| Error::Expression("group elements need a Følner system".into()))
    }

    /// Parses and evaluates `src` to an element of the stage-`k` algebra.
    pub fn eval_str(&self, src: &str) -> Result<AlgElement> {
        self.eval(&parse(src)?)
    }

    pub fn eval(&self, e: &Expr) -> Result<AlgElement> {
        match self.value(e)? {
            Val::Alg(x) => Ok(x),
            Val::Scalar(c) => Ok(AlgElement::unit(self.algebra()?).scale(c)),
            Val::Group(_) => Err(Error::Expression("a group-algebra element must be wrapped in psi(k, ...)".into())),
            Val::Tuple(_) => Err(Error::Expression("a tuple is not an algebra element".into())),
        }
    }

    fn value(&self, e: &Expr) -> Result<Val> {
        match e {
            Expr::Num(v) => Ok(Val::Scalar(C64::new(*v, 0.0))),
            Expr::Ident(name) => match name.as_str() {
                "i" => Ok(Val::Scalar(C64::new(0.0, 1.0))),
                "unit" => Ok(Val::Alg(AlgElement::unit(self.algebra()?))),
                "zero" => Ok(Val::Alg(AlgElement::zero(self.algebra()?))),
                other => Err(Error::Expression(format!("unknown name '{other}'"))),
            },
            Expr::Tuple(items) => Ok(Val::Tuple(items.iter().map(|i| self.value(i)).collect::<Result<_>>()?)),
            Expr::Neg(inner) => self.scale(self.value(inner)?, C64::new(-1.0, 0.0)),
            Expr::Add(a, b) => self.add(self.value(a)?, self.value(b)?, 1.0),
            Expr::Sub(a, b) => self.add(self.value(a)?, self.value(b)?, -1.0),
            Expr::Mul(a, b) => self.mul(self.value(a)?, self.value(b)?),
            Expr::Call(name, args) => self.call(name, args),
        }
    }

    fn scale(&self, v: Val, c: C64) -> Result<Val> {
        Ok(match v {
            Val::Scalar(s) => Val::Scalar(s * c),
            Val::Alg(x) => Val::Alg(x.scale(c)),
            Val::Group(a) => Val::Group(a.scale(c)),
            Val::Tuple(_) => return Err(Error::Expression("cannot scale a tuple".into())),
        })
    }

    /// Scalars act as multiples of the unit when added to elements.
    fn promote(&self, c: C64, like: &Val) -> Result<Val> {
        Ok(match like {
            Val::Alg(_) => Val::Alg(AlgElement::unit(self.algebra()?).scale(c)),
            Val::Group(_) => {
                let g = self.group()?;
                Val::Group(GroupAlgebraElement::delta(g, &g.identity())?.scale(c))
            }
            _ => Val::Scalar(c),
        })
    }

    fn add(&self, a: Val, b: Val, sign: f64) -> Result<Val> {
        let (a, b) = match (&a, &b) {
            (Val::Scalar(c), other) if !matches!(other, Val::Scalar(_)) => (self.promote(*c, other)?, b),
            (other, Val::Scalar(c)) if !matches!(other, Val::Scalar(_)) => {
                let p = self.promote(*c, other)?;
                (a, p)
            }
            _ => (a, b),
        };
        let s = C64::new(sign, 0.0);
        Ok(match (a, b) {
            (Val::Scalar(x), Val::Scalar(y)) => Val::Scalar(x + y * s),
            (Val::Alg(x), Val::Alg(y)) => Val::Alg(x.checked_add(&y.scale(s))?),
            (Val::Group(x), Val::Group(y)) => Val::Group(x.checked_add(&y.scale(s))?),
            _ => return Err(Error::Expression("cannot add an algebra element and a group-algebra element".into())),
        })
    }

    fn mul(&self, a: Val, b: Val) -> Result<Val> {
        Ok(match (a, b) {
            (Val::Scalar(c), v) | (v, Val::Scalar(c)) => self.scale(v, c)?,
            (Val::Alg(x), Val::Alg(y)) => Val::Alg(x.checked_mul(&y)?),
            (Val::Group(x), Val::Group(y)) => Val::Group(x.convolve(&y)?),
            _ => return Err(Error::Expression("cannot multiply these operands".into())),
        })
    }

    fn integer(&self, v: &Val) -> Result<i64> {
        match v {
            Val::Scalar(c) if c.im == 0.0 && c.re.fract() == 0.0 && c.re.abs() < 1e15 => Ok(c.re as i64),
            _ => Err(Error::Expression(format!("expected an integer, found {v:?}"))),
        }
    }

    fn index(&self, v: &Val) -> Result<usize> {
        let i = self.integer(v)?;
        usize::try_from(i).map_err(|_| Error::Expression(format!("index {i} is negative")))
    }

    fn group_element(&self, v: &Val) -> Result<GroupElement> {
        let g = self.group()?;
        let el = match (g, v) {
            (Group::Lattice { .. }, Val::Tuple(items)) => {
                GroupElement::Lattice(items.iter().map(|i| self.integer(i)).collect::<Result<_>>()?)
            }
            (Group::Lattice { .. }, _) => GroupElement::Lattice(vec![self.integer(v)?]),
            (Group::Finite(_), _) => GroupElement::Finite(self.index(v)?),
        };
        g.check(&el).map_err(|e| Error::Expression(e.to_string()))?;
        Ok(el)
    }

    fn call(&self, name: &str, args: &[Expr]) -> Result<Val> {
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Expression(format!("{name} takes {n} argument(s), got {}", args.len())))
            }
        };
        match name {
            "delta" => {
                arity(1)?;
                let g = self.group_element(&self.value(&args[0])?)?;
                Ok(Val::Group(GroupAlgebraElement::delta(self.group()?, &g)?))
            }
            "psi" => {
                arity(2)?;
                let stage = self.index(&self.value(&args[0])?)?;
                if stage != self.k {
                    return Err(Error::Expression(format!(
                        "psi({stage}, ...) does not live in stage {} where the condition is evaluated",
                        self.k
                    )));
                }
                let sys =
                    self.system.approximation().ok_or_else(|| Error::Expression("psi needs a Følner system".into()))?;
                let a = match self.value(&args[1])? {
                    Val::Group(a) => a,
                    Val::Scalar(c) => {
                        let g = sys.group();
                        GroupAlgebraElement::delta(g, &g.identity())?.scale(c)
                    }
                    _ => return Err(Error::Expression("psi takes a group-algebra element".into())),
                };
                Ok(Val::Alg(sys.psi(stage, &a)?))
            }
            "e" => {
                let alg = self.algebra()?;
                let vals: Vec<Val> = args.iter().map(|a| self.value(a)).collect::<Result<_>>()?;
                let (block, i, j) = match vals.len() {
                    2 => match self.system.approximation() {
                        Some(sys) => {
                            let set = sys.stage_set(self.k)?;
                            let pos = |v: &Val| -> Result<usize> {
                                let g = self.group_element(v)?;
                                set.position(&g).ok_or_else(|| {
                                    Error::Expression(format!("{g} is not in the stage-{} Følner set", self.k))
                                })
                            };
                            (0, pos(&vals[0])?, pos(&vals[1])?)
                        }
                        None if alg.num_blocks() == 1 => (0, self.index(&vals[0])?, self.index(&vals[1])?),
                        None => return Err(Error::Expression("use e(block, i, j) in a direct sum".into())),
                    },
                    3 => (self.index(&vals[0])?, self.index(&vals[1])?, self.index(&vals[2])?),
                    n => return Err(Error::Expression(format!("e takes 2 or 3 arguments, got {n}"))),
                };
                AlgElement::matrix_unit(alg, block, i, j).map(Val::Alg).map_err(|e| Error::Expression(e.to_string()))
            }
            "random" => {
                let seed = match args.len() {
                    0 => self.seed,
                    1 => self.index(&self.value(&args[0])?)? as u64,
                    n => return Err(Error::Expression(format!("random takes at most 1 argument, got {n}"))),
                };
                Ok(Val::Alg(random_element(self.algebra()?, seed)))
            }
            "adj" => {
                arity(1)?;
                Ok(match self.value(&args[0])? {
                    Val::Scalar(c) => Val::Scalar(c.conj()),
                    Val::Alg(x) => Val::Alg(x.adjoint()),
                    Val::Group(a) => Val::Group(a.involute()),
                    Val::Tuple(_) => return Err(Error::Expression("adj of a tuple".into())),
                })
            }
            other => Err(Error::Expression(format!("unknown function '{other}'"))),
        }
    }
}

/// Seeded element with entries uniform in the unit square, scaled to norm 1.
pub fn random_element(algebra: &FiniteDimCstar, seed: u64) -> AlgElement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<DMatrix<C64>> = algebra
        .block_dims()
        .iter()
        .map(|&d| DMatrix::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
        .collect();
    let x = AlgElement::from_blocks(algebra, blocks).expect("block shapes match");
    let n = x.norm();
    if n > 0.0 {
        x.scale(C64::new(1.0 / n, 0.0))
    } else {
        x
    }
}
