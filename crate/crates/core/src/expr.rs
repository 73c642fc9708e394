//! Structural-assignment expressions: the resolved AST, its evaluator and
//! the pretty-printer used by the canonical serializer.
//!
//! Values are either integers (labels that parse as `i64`) or symbols.
//! Arithmetic needs integers, `and`/`or`/`not` and `if` conditions need
//! booleans, and `=`/`!=` compare like with like. Anything else is a type
//! error, surfaced as a totality violation when the model is validated.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::VarId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }
}

/// Explicit lookup table from value tuples of `keys` to a target label.
/// Rows are kept in a sorted map so structural equality is order-free.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableExpr {
    pub keys: Vec<VarId>,
    pub rows: BTreeMap<Vec<String>, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    /// Symbolic range-label literal, e.g. `y3`.
    Label(String),
    /// Reference to a parent or noise variable.
    Var(VarId),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Table(TableExpr),
}

impl Expr {
    pub fn var(id: impl Into<VarId>) -> Expr {
        Expr::Var(id.into())
    }

    pub fn label(l: impl Into<String>) -> Expr {
        Expr::Label(l.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn if_then_else(cond: Expr, then: Expr, otherwise: Expr) -> Expr {
        Expr::If(Box::new(cond), Box::new(then), Box::new(otherwise))
    }

    /// Variables referenced anywhere in the expression, in first-use order.
    pub fn referenced_vars(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<VarId>) {
        match self {
            Expr::Int(_) | Expr::Label(_) => {}
            Expr::Var(id) => {
                if !out.contains(id) {
                    out.push(id.clone());
                }
            }
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Not(a) => a.collect_vars(out),
            Expr::If(c, t, e) => {
                c.collect_vars(out);
                t.collect_vars(out);
                e.collect_vars(out);
            }
            Expr::Table(t) => {
                for k in &t.keys {
                    if !out.contains(k) {
                        out.push(k.clone());
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Sym(String),
    Bool(bool),
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::Int(_) => "integer",
            Value::Sym(_) => "symbol",
            Value::Bool(_) => "boolean",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Sym(s) => f.write_str(s),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// Evaluation failure; callers turn these into totality violations (model
/// validation) or semantic parse errors (DSL).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalError {
    Unbound(String),
    TypeMismatch(String),
    MissingTableRow(Vec<String>),
    Overflow,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Unbound(v) => write!(f, "unbound variable `{v}`"),
            EvalError::TypeMismatch(m) => f.write_str(m),
            EvalError::MissingTableRow(t) => {
                write!(f, "table has no row for ({})", t.join(", "))
            }
            EvalError::Overflow => f.write_str("integer overflow"),
        }
    }
}

/// Evaluates `expr` in an environment mapping variable names to their
/// current value labels. Deterministic and total over bound environments
/// modulo the type errors above.
pub fn eval(expr: &Expr, env: &dyn Fn(&str) -> Option<String>) -> Result<Value, EvalError> {
    match expr {
        Expr::Int(i) => Ok(Value::Int(*i)),
        Expr::Label(l) => Ok(Value::Sym(l.clone())),
        Expr::Var(id) => {
            let label = env(id.as_str()).ok_or_else(|| EvalError::Unbound(id.to_string()))?;
            Ok(match label.parse::<i64>() {
                Ok(i) => Value::Int(i),
                Err(_) => Value::Sym(label),
            })
        }
        Expr::Bin(op, a, b) => {
            let lhs = eval(a, env)?;
            let rhs = eval(b, env)?;
            apply_bin(*op, lhs, rhs)
        }
        Expr::Not(a) => match eval(a, env)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            v => Err(EvalError::TypeMismatch(format!(
                "`not` needs a boolean, got {}",
                v.kind()
            ))),
        },
        Expr::If(c, t, e) => match eval(c, env)? {
            Value::Bool(true) => eval(t, env),
            Value::Bool(false) => eval(e, env),
            v => Err(EvalError::TypeMismatch(format!(
                "`if` condition must be boolean, got {}",
                v.kind()
            ))),
        },
        Expr::Table(table) => {
            let mut key = Vec::with_capacity(table.keys.len());
            for k in &table.keys {
                key.push(env(k.as_str()).ok_or_else(|| EvalError::Unbound(k.to_string()))?);
            }
            match table.rows.get(&key) {
                Some(label) => Ok(Value::Sym(label.clone())),
                None => Err(EvalError::MissingTableRow(key)),
            }
        }
    }
}

fn apply_bin(op: BinOp, lhs: Value, rhs: Value) -> Result<Value, EvalError> {
    use BinOp::*;
    use Value::*;
    match op {
        Add | Sub | Mul => match (lhs, rhs) {
            (Int(a), Int(b)) => {
                let r = match op {
                    Add => a.checked_add(b),
                    Sub => a.checked_sub(b),
                    Mul => a.checked_mul(b),
                    _ => unreachable!(),
                };
                r.map(Int).ok_or(EvalError::Overflow)
            }
            (a, b) => Err(EvalError::TypeMismatch(format!(
                "`{}` needs integers, got {} and {}",
                op.symbol(),
                a.kind(),
                b.kind()
            ))),
        },
        Lt | Le => match (lhs, rhs) {
            (Int(a), Int(b)) => Ok(Bool(if op == Lt { a < b } else { a <= b })),
            (a, b) => Err(EvalError::TypeMismatch(format!(
                "`{}` needs integers, got {} and {}",
                op.symbol(),
                a.kind(),
                b.kind()
            ))),
        },
        Eq | Ne => {
            let equal = match (&lhs, &rhs) {
                (Int(a), Int(b)) => a == b,
                (Sym(a), Sym(b)) => a == b,
                (Bool(a), Bool(b)) => a == b,
                (a, b) => {
                    return Err(EvalError::TypeMismatch(format!(
                        "cannot compare {} with {}",
                        a.kind(),
                        b.kind()
                    )))
                }
            };
            Ok(Bool(if op == Eq { equal } else { !equal }))
        }
        And | Or => match (lhs, rhs) {
            (Bool(a), Bool(b)) => Ok(Bool(if op == And { a && b } else { a || b })),
            (a, b) => Err(EvalError::TypeMismatch(format!(
                "`{}` needs booleans, got {} and {}",
                op.symbol(),
                a.kind(),
                b.kind()
            ))),
        },
    }
}

/// Pretty-prints with minimal parentheses; `if` and `table` always stand on
/// their own. Table rows are rendered by the serializer, which sorts them by
/// value-index tuples; here they come out in the stored (sorted-map) order.
pub fn write_expr(f: &mut impl fmt::Write, expr: &Expr, parent_prec: u8) -> fmt::Result {
    match expr {
        Expr::Int(i) => write!(f, "{i}"),
        Expr::Label(l) => f.write_str(l),
        Expr::Var(id) => f.write_str(id.as_str()),
        Expr::Bin(op, a, b) => {
            let prec = op.precedence();
            let need = prec < parent_prec;
            if need {
                f.write_char('(')?;
            }
            write_expr(f, a, prec)?;
            write!(f, " {} ", op.symbol())?;
            // Right operand binds one tighter: the printer re-parses as
            // left-associative, which matches the parser.
            write_expr(f, b, prec + 1)?;
            if need {
                f.write_char(')')?;
            }
            Ok(())
        }
        Expr::Not(a) => {
            let need = 3 < parent_prec;
            if need {
                f.write_char('(')?;
            }
            f.write_str("not ")?;
            write_expr(f, a, 3)?;
            if need {
                f.write_char(')')?;
            }
            Ok(())
        }
        Expr::If(c, t, e) => {
            let need = parent_prec > 0;
            if need {
                f.write_char('(')?;
            }
            f.write_str("if ")?;
            write_expr(f, c, 0)?;
            f.write_str(" then ")?;
            write_expr(f, t, 0)?;
            f.write_str(" else ")?;
            write_expr(f, e, 0)?;
            if need {
                f.write_char(')')?;
            }
            Ok(())
        }
        Expr::Table(t) => {
            let keys: Vec<&str> = t.keys.iter().map(|k| k.as_str()).collect();
            write!(f, "table ({})", keys.join(", "))?;
            f.write_str(" { ")?;
            let mut first = true;
            for (key, val) in &t.rows {
                if !first {
                    f.write_str(", ")?;
                }
                first = false;
                write!(f, "({}) -> {}", key.join(", "), val)?;
            }
            f.write_str(" }")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}
