//! Expressions for task guards and assignments: arithmetic,
//! comparisons and boolean logic over task-local variables. Kept
//! deliberately small — behaviors on the dataflow side come from the
//! block library, not from scripts.

use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("parse error in `{text}`: {reason}")]
    Parse { text: String, reason: String },
    #[error("unknown variable `{0}`")]
    UnknownVar(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("division by zero")]
    DivideByZero,
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Real(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<Tok>, String> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '+' | '-' | '*' | '/' | '%' => {
                toks.push(Tok::Op(match c {
                    '+' => "+",
                    '-' => "-",
                    '*' => "*",
                    '/' => "/",
                    _ => "%",
                }));
                i += 1;
            }
            '=' | '!' | '<' | '>' | '&' | '|' => {
                let two = &text[i..(i + 2).min(text.len())];
                let (op, len) = match two {
                    "==" => ("==", 2),
                    "!=" => ("!=", 2),
                    "<=" => ("<=", 2),
                    ">=" => (">=", 2),
                    "&&" => ("&&", 2),
                    "||" => ("||", 2),
                    _ => match c {
                        '<' => ("<", 1),
                        '>' => (">", 1),
                        '!' => ("!", 1),
                        _ => return Err(format!("stray `{}`", c)),
                    },
                };
                toks.push(Tok::Op(op));
                i += len;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut real = false;
                if i + 1 < bytes.len()
                    && bytes[i] == b'.'
                    && bytes[i + 1].is_ascii_digit()
                {
                    real = true;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let lit = &text[start..i];
                if real {
                    toks.push(Tok::Real(lit.parse().map_err(|_| format!("bad number `{}`", lit))?));
                } else {
                    toks.push(Tok::Int(lit.parse().map_err(|_| format!("bad number `{}`", lit))?));
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push(Tok::Ident(text[start..i].to_string()));
            }
            _ => return Err(format!("unexpected character `{}`", c)),
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// parser (precedence climbing)

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

fn bin_op(op: &str) -> Option<(BinOp, u8)> {
    // (operator, binding power); higher binds tighter
    Some(match op {
        "||" => (BinOp::Or, 1),
        "&&" => (BinOp::And, 2),
        "==" => (BinOp::Eq, 3),
        "!=" => (BinOp::Ne, 3),
        "<" => (BinOp::Lt, 3),
        "<=" => (BinOp::Le, 3),
        ">" => (BinOp::Gt, 3),
        ">=" => (BinOp::Ge, 3),
        "+" => (BinOp::Add, 4),
        "-" => (BinOp::Sub, 4),
        "*" => (BinOp::Mul, 5),
        "/" => (BinOp::Div, 5),
        "%" => (BinOp::Rem, 5),
        _ => return None,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, String> {
        let mut lhs = self.atom()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let Some((bop, bp)) = bin_op(op) else {
                return Err(format!("`{}` is not a binary operator", op));
            };
            if bp < min_bp {
                break;
            }
            self.advance();
            let rhs = self.expr(bp + 1)?;
            lhs = Expr::Binary(bop, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.advance() {
            Some(Tok::Int(v)) => Ok(Expr::Lit(Value::Int(v))),
            Some(Tok::Real(v)) => Ok(Expr::Lit(Value::Real(v))),
            Some(Tok::Ident(name)) => match name.as_str() {
                "true" => Ok(Expr::Lit(Value::Bool(true))),
                "false" => Ok(Expr::Lit(Value::Bool(false))),
                _ => Ok(Expr::Var(name)),
            },
            Some(Tok::Op("-")) => {
                let inner = self.expr(6)?;
                Ok(Expr::Unary(UnOp::Neg, Box::new(inner)))
            }
            Some(Tok::Op("!")) => {
                let inner = self.expr(6)?;
                Ok(Expr::Unary(UnOp::Not, Box::new(inner)))
            }
            Some(Tok::LParen) => {
                let inner = self.expr(0)?;
                match self.advance() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err("missing `)`".into()),
                }
            }
            Some(t) => Err(format!("unexpected token {:?}", t)),
            None => Err("unexpected end of expression".into()),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let fail = |reason: String| ExprError::Parse {
        text: text.to_string(),
        reason,
    };
    let toks = lex(text).map_err(fail)?;
    let mut p = Parser { toks: &toks, pos: 0 };
    let e = p.expr(0).map_err(fail)?;
    if p.pos != toks.len() {
        return Err(ExprError::Parse {
            text: text.to_string(),
            reason: format!("trailing input after position {}", p.pos),
        });
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// evaluation

/// Variable store seen by an expression.
pub trait Scope {
    fn get(&self, name: &str) -> Option<Value>;
}

impl Scope for std::collections::BTreeMap<String, Value> {
    fn get(&self, name: &str) -> Option<Value> {
        std::collections::BTreeMap::get(self, name).copied()
    }
}

fn num_pair(op: BinOp, a: Value, b: Value) -> Result<(Value, Value), ExprError> {
    // ints promote to reals when mixed; bools never participate
    match (a, b) {
        (Value::Int(_), Value::Int(_)) | (Value::Real(_), Value::Real(_)) => Ok((a, b)),
        (Value::Int(x), Value::Real(_)) => Ok((Value::Real(x as f64), b)),
        (Value::Real(_), Value::Int(y)) => Ok((a, Value::Real(y as f64))),
        _ => Err(ExprError::Type(format!(
            "{:?} needs numeric operands, got {} and {}",
            op, a, b
        ))),
    }
}

pub fn eval(expr: &Expr, scope: &dyn Scope) -> Result<Value, ExprError> {
    match expr {
        Expr::Lit(v) => Ok(*v),
        Expr::Var(name) => scope
            .get(name)
            .ok_or_else(|| ExprError::UnknownVar(name.clone())),
        Expr::Unary(op, inner) => {
            let v = eval(inner, scope)?;
            match (op, v) {
                (UnOp::Neg, Value::Int(x)) => Ok(Value::Int(-x)),
                (UnOp::Neg, Value::Real(x)) => Ok(Value::Real(-x)),
                (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                _ => Err(ExprError::Type(format!("cannot apply {:?} to {}", op, v))),
            }
        }
        Expr::Binary(op, l, r) => {
            let a = eval(l, scope)?;
            // short-circuit on booleans
            if matches!(op, BinOp::And | BinOp::Or) {
                let Value::Bool(lb) = a else {
                    return Err(ExprError::Type(format!("{:?} needs bool operands", op)));
                };
                if (*op == BinOp::And && !lb) || (*op == BinOp::Or && lb) {
                    return Ok(Value::Bool(lb));
                }
                let b = eval(r, scope)?;
                let Value::Bool(rb) = b else {
                    return Err(ExprError::Type(format!("{:?} needs bool operands", op)));
                };
                return Ok(Value::Bool(rb));
            }
            let b = eval(r, scope)?;
            match op {
                BinOp::Eq | BinOp::Ne => {
                    let same = match num_pair(*op, a, b) {
                        Ok((Value::Int(x), Value::Int(y))) => x == y,
                        Ok((Value::Real(x), Value::Real(y))) => x == y,
                        Ok(_) => unreachable!(),
                        Err(_) => match (a, b) {
                            (Value::Bool(x), Value::Bool(y)) => x == y,
                            _ => {
                                return Err(ExprError::Type(format!(
                                    "cannot compare {} with {}",
                                    a, b
                                )))
                            }
                        },
                    };
                    Ok(Value::Bool(if *op == BinOp::Eq { same } else { !same }))
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    let ord = match num_pair(*op, a, b)? {
                        (Value::Int(x), Value::Int(y)) => x.partial_cmp(&y),
                        (Value::Real(x), Value::Real(y)) => x.partial_cmp(&y),
                        _ => unreachable!(),
                    }
                    .ok_or_else(|| ExprError::Type("unordered comparison".into()))?;
                    let res = match op {
                        BinOp::Lt => ord.is_lt(),
                        BinOp::Le => ord.is_le(),
                        BinOp::Gt => ord.is_gt(),
                        _ => ord.is_ge(),
                    };
                    Ok(Value::Bool(res))
                }
                BinOp::Add | BinOp::Sub | BinOp::Mul => {
                    Ok(match num_pair(*op, a, b)? {
                        (Value::Int(x), Value::Int(y)) => Value::Int(match op {
                            BinOp::Add => x.wrapping_add(y),
                            BinOp::Sub => x.wrapping_sub(y),
                            _ => x.wrapping_mul(y),
                        }),
                        (Value::Real(x), Value::Real(y)) => Value::Real(match op {
                            BinOp::Add => x + y,
                            BinOp::Sub => x - y,
                            _ => x * y,
                        }),
                        _ => unreachable!(),
                    })
                }
                BinOp::Div => match num_pair(*op, a, b)? {
                    (Value::Int(x), Value::Int(y)) => {
                        if y == 0 {
                            Err(ExprError::DivideByZero)
                        } else {
                            Ok(Value::Int(x.wrapping_div(y)))
                        }
                    }
                    (Value::Real(x), Value::Real(y)) => Ok(Value::Real(x / y)),
                    _ => unreachable!(),
                },
                BinOp::Rem => match (a, b) {
                    (Value::Int(x), Value::Int(y)) => {
                        if y == 0 {
                            Err(ExprError::DivideByZero)
                        } else {
                            Ok(Value::Int(x.wrapping_rem(y)))
                        }
                    }
                    _ => Err(ExprError::Type("% needs int operands".into())),
                },
                BinOp::And | BinOp::Or => unreachable!("handled above"),
            }
        }
    }
}

/// Parses and evaluates in one step; convenient for tests.
pub fn eval_str(text: &str, scope: &dyn Scope) -> Result<Value, ExprError> {
    eval(&parse_expr(text)?, scope)
}
