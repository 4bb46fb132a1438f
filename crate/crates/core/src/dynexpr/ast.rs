use super::table::Table2;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Tanh,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == s)
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Tanh => x.tanh(),
            Func::Abs => x.abs(),
        }
    }
}

/// Expression tree. State and input indices are zero-based; they print as
/// `x1.., u1..`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Named(String),
    State(usize),
    Input(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    /// Two-argument table lookup; `table` is filled in by [`Expr::bind`].
    Table {
        name: String,
        table: Option<Arc<Table2>>,
        args: Box<[Expr; 2]>,
    },
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn is_zero(&self) -> bool {
        self.const_value() == Some(0.0)
    }

    /// Value of a variable-free, fully bound subtree.
    pub fn const_value(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Named(_) | Expr::State(_) | Expr::Input(_) | Expr::Table { .. } => None,
            Expr::Neg(a) => a.const_value().map(|v| -v),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.const_value(), b.const_value());
                match (op, x, y) {
                    (BinOp::Mul, Some(z), _) | (BinOp::Mul, _, Some(z)) if z == 0.0 => Some(0.0),
                    (_, Some(x), Some(y)) => Some(match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => x / y,
                        BinOp::Pow => x.powf(y),
                    }),
                    _ => None,
                }
            }
            Expr::Call(f, a) => a.const_value().map(|v| f.apply(v)),
        }
    }

    pub fn uses_state(&self) -> bool {
        self.any(&|e| matches!(e, Expr::State(_)))
    }

    pub fn uses_input(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Input(_)))
    }

    pub fn is_variable_free(&self) -> bool {
        !self.any(&|e| matches!(e, Expr::State(_) | Expr::Input(_) | Expr::Table { .. }))
    }

    fn any(&self, p: &dyn Fn(&Expr) -> bool) -> bool {
        if p(self) {
            return true;
        }
        match self {
            Expr::Neg(a) | Expr::Call(_, a) => a.any(p),
            Expr::Bin(_, a, b) => a.any(p) || b.any(p),
            Expr::Table { args, .. } => args[0].any(p) || args[1].any(p),
            _ => false,
        }
    }

    /// Largest state and input index referenced, plus one.
    pub fn arity(&self) -> (usize, usize) {
        match self {
            Expr::State(i) => (i + 1, 0),
            Expr::Input(j) => (0, j + 1),
            Expr::Neg(a) | Expr::Call(_, a) => a.arity(),
            Expr::Bin(_, a, b) => {
                let (p, q) = (a.arity(), b.arity());
                (p.0.max(q.0), p.1.max(q.1))
            }
            Expr::Table { args, .. } => {
                let (p, q) = (args[0].arity(), args[1].arity());
                (p.0.max(q.0), p.1.max(q.1))
            }
            _ => (0, 0),
        }
    }

    /// Replaces named constants by their values and attaches tables.
    pub fn bind(
        &self,
        consts: &BTreeMap<String, f64>,
        tables: &BTreeMap<String, Arc<Table2>>,
    ) -> crate::Result<Expr> {
        Ok(match self {
            Expr::Named(n) => Expr::Const(*consts.get(n).ok_or_else(|| crate::Error::UnknownIdentifier {
                name: n.clone(),
                offset: 0,
            })?),
            Expr::Neg(a) => Expr::Neg(Box::new(a.bind(consts, tables)?)),
            Expr::Bin(op, a, b) => Expr::bin(*op, a.bind(consts, tables)?, b.bind(consts, tables)?),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.bind(consts, tables)?)),
            Expr::Table { name, args, .. } => Expr::Table {
                name: name.clone(),
                table: Some(tables.get(name).cloned().ok_or_else(|| crate::Error::UnknownIdentifier {
                    name: name.clone(),
                    offset: 0,
                })?),
                args: Box::new([args[0].bind(consts, tables)?, args[1].bind(consts, tables)?]),
            },
            e => e.clone(),
        })
    }

    /// Replaces each input `u_j` by `us[j]`.
    pub fn substitute_inputs(&self, us: &[Expr]) -> Expr {
        match self {
            Expr::Input(j) => us[*j].clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute_inputs(us))),
            Expr::Bin(op, a, b) => Expr::bin(*op, a.substitute_inputs(us), b.substitute_inputs(us)),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute_inputs(us))),
            Expr::Table { name, table, args } => Expr::Table {
                name: name.clone(),
                table: table.clone(),
                args: Box::new([args[0].substitute_inputs(us), args[1].substitute_inputs(us)]),
            },
            e => e.clone(),
        }
    }

    /// `c0 + Σ a_i x_i + Σ b_j u_j` if the expression is affine.
    pub fn as_affine(&self, n: usize, m: usize) -> Option<Affine> {
        if let Some(c) = self.const_value() {
            return Some(Affine::constant(c, n, m));
        }
        match self {
            Expr::State(i) => {
                let mut a = Affine::constant(0.0, n, m);
                a.state[*i] = 1.0;
                Some(a)
            }
            Expr::Input(j) => {
                let mut a = Affine::constant(0.0, n, m);
                a.input[*j] = 1.0;
                Some(a)
            }
            Expr::Neg(e) => Some(e.as_affine(n, m)?.scaled(-1.0)),
            Expr::Bin(BinOp::Add, a, b) => Some(a.as_affine(n, m)?.plus(&b.as_affine(n, m)?, 1.0)),
            Expr::Bin(BinOp::Sub, a, b) => Some(a.as_affine(n, m)?.plus(&b.as_affine(n, m)?, -1.0)),
            Expr::Bin(BinOp::Mul, a, b) => match (a.const_value(), b.const_value()) {
                (Some(c), _) => Some(b.as_affine(n, m)?.scaled(c)),
                (_, Some(c)) => Some(a.as_affine(n, m)?.scaled(c)),
                _ => None,
            },
            Expr::Bin(BinOp::Div, a, b) => {
                let c = b.const_value()?;
                if c == 0.0 {
                    None
                } else {
                    Some(a.as_affine(n, m)?.scaled(1.0 / c))
                }
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub c0: f64,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
}

impl Affine {
    fn constant(c0: f64, n: usize, m: usize) -> Self {
        Self {
            c0,
            state: vec![0.0; n],
            input: vec![0.0; m],
        }
    }

    fn scaled(mut self, k: f64) -> Self {
        self.c0 *= k;
        self.state.iter_mut().for_each(|v| *v *= k);
        self.input.iter_mut().for_each(|v| *v *= k);
        self
    }

    fn plus(mut self, o: &Affine, k: f64) -> Self {
        self.c0 += k * o.c0;
        for (a, b) in self.state.iter_mut().zip(&o.state) {
            *a += k * b;
        }
        for (a, b) in self.input.iter_mut().zip(&o.input) {
            *a += k * b;
        }
        self
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized; parses back to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Named(n) => write!(f, "{n}"),
            Expr::State(i) => write!(f, "x{}", i + 1),
            Expr::Input(j) => write!(f, "u{}", j + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Table { name, args, .. } => write!(f, "{name}({}, {})", args[0], args[1]),
        }
    }
}
