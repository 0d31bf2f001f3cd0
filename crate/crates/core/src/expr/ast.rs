use std::fmt;

/// A variable of the closed grammar. Indices are zero-based here and
/// printed one-based (`q1` is `Var::Q(0)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Q(usize),
    V(usize),
    T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub const FUNCTIONS: [UnaryOp; 7] =
        [UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Tan, UnaryOp::Exp, UnaryOp::Log, UnaryOp::Sqrt, UnaryOp::Abs];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryOp> {
        Self::FUNCTIONS.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    pub fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Node::Const(_) => {}
            Node::Var(v) => f(*v),
            Node::Unary(_, a) => a.visit_vars(f),
            Node::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        let mut any = false;
        self.visit_vars(&mut |_| any = true);
        !any
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Q(i) => write!(f, "q{}", i + 1),
            Var::V(i) => write!(f, "v{}", i + 1),
            Var::T => f.write_str("t"),
        }
    }
}

/// Canonical, fully parenthesized serialization. Constants use the
/// shortest representation that round-trips through `f64` parsing.
impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(v) => write!(f, "{v}"),
            Node::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Node::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}
