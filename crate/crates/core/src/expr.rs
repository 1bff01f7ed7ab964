//! Expression trees: the genotype of the symbolic regressor.
//!
//! A tree is stored as a flat prefix (Polish) sequence of [`Node`]s. Every
//! subtree is therefore a contiguous slice, which keeps crossover and mutation
//! to a couple of slice copies. The recursive [`ExprNode`] form is available
//! for construction and inspection.
//!
//! All operators are total: division, logarithm and square root are
//! protected, and any intermediate that overflows is saturated to
//! `±f64::MAX`, so a finite input row always evaluates to a finite value.

use std::fmt;
use std::hash::{Hash, Hasher};

use ndarray::ArrayView2;
use thiserror::Error;

/// Denominators and log arguments smaller than this in magnitude are treated
/// as zero by the protected operators.
pub const PROTECTION_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("input row has {found} values, expression expects {expected}")]
    Shape { expected: usize, found: usize },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("operator `{op}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        op: &'static str,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown symbol `{symbol}` at byte {offset}")]
    Symbol { symbol: String, offset: usize },
    #[error("variable x{index} is out of range for input dimension {input_dim}")]
    VariableOutOfRange { index: usize, input_dim: usize },
    #[error("constant {0} is not finite")]
    NonFiniteConstant(f64),
    #[error("input dimension must be at least 1")]
    ZeroInputDim,
    #[error("prefix sequence is not a single well-formed tree")]
    Malformed,
}

/// The closed operator set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    /// Protected division: returns 1 when `|denominator| < PROTECTION_EPS`.
    Div,
    Neg,
    Sin,
    Cos,
    /// Protected logarithm: `ln(max(|x|, PROTECTION_EPS))`.
    Log,
    /// Protected square root: `sqrt(|x|)`.
    Sqrt,
}

impl OpKind {
    pub const ALL: [OpKind; 9] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Neg,
        OpKind::Sin,
        OpKind::Cos,
        OpKind::Log,
        OpKind::Sqrt,
    ];

    pub const BINARY: [OpKind; 4] = [OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Div];
    pub const UNARY: [OpKind; 5] = [
        OpKind::Neg,
        OpKind::Sin,
        OpKind::Cos,
        OpKind::Log,
        OpKind::Sqrt,
    ];

    pub fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => 2,
            OpKind::Neg | OpKind::Sin | OpKind::Cos | OpKind::Log | OpKind::Sqrt => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            OpKind::Add => "+",
            OpKind::Sub => "-",
            OpKind::Mul => "*",
            OpKind::Div => "/",
            OpKind::Neg => "neg",
            OpKind::Sin => "sin",
            OpKind::Cos => "cos",
            OpKind::Log => "log",
            OpKind::Sqrt => "sqrt",
        }
    }

    pub fn from_symbol(s: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.symbol() == s)
    }

    /// Applies a unary operator. Binary kinds are not valid here.
    #[inline]
    pub fn apply_unary(self, a: f64) -> f64 {
        saturate(match self {
            OpKind::Neg => -a,
            OpKind::Sin => a.sin(),
            OpKind::Cos => a.cos(),
            OpKind::Log => a.abs().max(PROTECTION_EPS).ln(),
            OpKind::Sqrt => a.abs().sqrt(),
            _ => unreachable!("{self:?} is binary"),
        })
    }

    /// Applies a binary operator. Unary kinds are not valid here.
    #[inline]
    pub fn apply_binary(self, a: f64, b: f64) -> f64 {
        saturate(match self {
            OpKind::Add => a + b,
            OpKind::Sub => a - b,
            OpKind::Mul => a * b,
            OpKind::Div => {
                if b.abs() < PROTECTION_EPS {
                    1.0
                } else {
                    a / b
                }
            }
            _ => unreachable!("{self:?} is unary"),
        })
    }
}

#[inline]
fn saturate(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else if v.is_nan() {
        0.0
    } else {
        f64::MAX.copysign(v)
    }
}

/// One entry of the prefix sequence.
#[derive(Debug, Clone, Copy)]
pub enum Node {
    Op(OpKind),
    Var(usize),
    Const(f64),
}

impl Node {
    pub fn arity(&self) -> usize {
        match self {
            Node::Op(k) => k.arity(),
            _ => 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Node::Op(_))
    }
}

// Constants compare by bit pattern so equality is structural and exact.
impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Node::Op(a), Node::Op(b)) => a == b,
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Node {}

impl Hash for Node {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Node::Op(k) => (0u8, k).hash(state),
            Node::Var(i) => (1u8, i).hash(state),
            Node::Const(c) => (2u8, c.to_bits()).hash(state),
        }
    }
}

/// Recursive view of an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Operator { kind: OpKind, children: Vec<ExprNode> },
    Variable(usize),
    Constant(f64),
}

impl ExprNode {
    pub fn op(kind: OpKind, children: Vec<ExprNode>) -> Self {
        ExprNode::Operator { kind, children }
    }

    fn flatten_into(&self, out: &mut Vec<Node>) {
        match self {
            ExprNode::Operator { kind, children } => {
                out.push(Node::Op(*kind));
                for c in children {
                    c.flatten_into(out);
                }
            }
            ExprNode::Variable(i) => out.push(Node::Var(*i)),
            ExprNode::Constant(c) => out.push(Node::Const(*c)),
        }
    }
}

/// An immutable, validated expression over `input_dim` variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExprTree {
    nodes: Vec<Node>,
    input_dim: usize,
}

impl ExprTree {
    /// Builds a tree from its recursive form, checking arities, variable
    /// indices and constant finiteness.
    pub fn new(root: &ExprNode, input_dim: usize) -> Result<Self, ExprError> {
        let mut nodes = Vec::new();
        check_arity(root)?;
        root.flatten_into(&mut nodes);
        Self::from_prefix(nodes, input_dim)
    }

    /// Builds a tree from a prefix sequence.
    pub fn from_prefix(nodes: Vec<Node>, input_dim: usize) -> Result<Self, ExprError> {
        if input_dim == 0 {
            return Err(ExprError::ZeroInputDim);
        }
        let mut need = 1usize;
        for (i, n) in nodes.iter().enumerate() {
            if need == 0 {
                return Err(ExprError::Malformed);
            }
            match *n {
                Node::Var(index) if index >= input_dim => {
                    return Err(ExprError::VariableOutOfRange { index, input_dim })
                }
                Node::Const(c) if !c.is_finite() => return Err(ExprError::NonFiniteConstant(c)),
                _ => {}
            }
            need = need - 1 + n.arity();
            if need == 0 && i + 1 != nodes.len() {
                return Err(ExprError::Malformed);
            }
        }
        if need != 0 {
            return Err(ExprError::Malformed);
        }
        Ok(ExprTree { nodes, input_dim })
    }

    /// Caller guarantees the sequence is well formed.
    pub(crate) fn from_prefix_unchecked(nodes: Vec<Node>, input_dim: usize) -> Self {
        debug_assert!(ExprTree::from_prefix(nodes.clone(), input_dim).is_ok());
        ExprTree { nodes, input_dim }
    }

    pub fn constant(value: f64, input_dim: usize) -> Result<Self, ExprError> {
        Self::from_prefix(vec![Node::Const(value)], input_dim)
    }

    pub fn variable(index: usize, input_dim: usize) -> Result<Self, ExprError> {
        Self::from_prefix(vec![Node::Var(index)], input_dim)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        self.size_and_depth().1
    }

    /// Node count and depth; a leaf has depth 0.
    pub fn size_and_depth(&self) -> (usize, usize) {
        (self.nodes.len(), prefix_depth(&self.nodes))
    }

    /// Exclusive end index of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        subtree_end(&self.nodes, start)
    }

    pub fn to_node(&self) -> ExprNode {
        fn build(nodes: &[Node], pos: &mut usize) -> ExprNode {
            let n = nodes[*pos];
            *pos += 1;
            match n {
                Node::Op(kind) => {
                    let children = (0..kind.arity()).map(|_| build(nodes, pos)).collect();
                    ExprNode::Operator { kind, children }
                }
                Node::Var(i) => ExprNode::Variable(i),
                Node::Const(c) => ExprNode::Constant(c),
            }
        }
        build(&self.nodes, &mut 0)
    }

    /// Evaluates the tree on one input row.
    pub fn evaluate(&self, row: &[f64]) -> Result<f64, ExprError> {
        if row.len() != self.input_dim {
            return Err(ExprError::Shape {
                expected: self.input_dim,
                found: row.len(),
            });
        }
        let mut stack: Vec<f64> = Vec::with_capacity(16);
        for n in self.nodes.iter().rev() {
            match *n {
                Node::Const(c) => stack.push(c),
                Node::Var(i) => stack.push(row[i]),
                Node::Op(k) if k.arity() == 1 => {
                    let a = stack.pop().expect("validated tree");
                    stack.push(k.apply_unary(a));
                }
                Node::Op(k) => {
                    let a = stack.pop().expect("validated tree");
                    let b = stack.pop().expect("validated tree");
                    stack.push(k.apply_binary(a, b));
                }
            }
        }
        Ok(stack.pop().expect("validated tree"))
    }

    /// Evaluates the tree on every row of an `n × input_dim` matrix.
    pub fn evaluate_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, ExprError> {
        if rows.ncols() != self.input_dim {
            return Err(ExprError::Shape {
                expected: self.input_dim,
                found: rows.ncols(),
            });
        }
        let columns: Vec<Vec<f64>> = rows.columns().into_iter().map(|c| c.to_vec()).collect();
        let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
        Ok(self.evaluate_columns(&refs, rows.nrows()))
    }

    /// Column-major evaluation: `columns[j][i]` is variable `j` of row `i`.
    /// Produces exactly what [`ExprTree::evaluate`] produces row by row.
    pub fn evaluate_columns(&self, columns: &[&[f64]], n: usize) -> Vec<f64> {
        assert_eq!(columns.len(), self.input_dim, "column count mismatch");
        let mut stack: Vec<Vec<f64>> = Vec::with_capacity(8);
        let mut spare: Vec<Vec<f64>> = Vec::new();
        let fresh = |spare: &mut Vec<Vec<f64>>| {
            let mut v = spare.pop().unwrap_or_default();
            v.clear();
            v
        };
        for node in self.nodes.iter().rev() {
            match *node {
                Node::Const(c) => {
                    let mut v = fresh(&mut spare);
                    v.resize(n, c);
                    stack.push(v);
                }
                Node::Var(i) => {
                    let mut v = fresh(&mut spare);
                    v.extend_from_slice(&columns[i][..n]);
                    stack.push(v);
                }
                Node::Op(k) if k.arity() == 1 => {
                    let a = stack.last_mut().expect("validated tree");
                    for x in a.iter_mut() {
                        *x = k.apply_unary(*x);
                    }
                }
                Node::Op(k) => {
                    let mut a = stack.pop().expect("validated tree");
                    let b = stack.pop().expect("validated tree");
                    for (x, &y) in a.iter_mut().zip(&b) {
                        *x = k.apply_binary(*x, y);
                    }
                    spare.push(b);
                    stack.push(a);
                }
            }
        }
        stack.pop().expect("validated tree")
    }

    /// Renders the tree in s-expression syntax, e.g. `(sin (+ x0 0.5))`.
    pub fn to_sexpr(&self) -> String {
        self.to_string()
    }

    /// Parses an s-expression over `input_dim` variables.
    pub fn parse_sexpr(text: &str, input_dim: usize) -> Result<Self, ExprError> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let mut nodes = Vec::new();
        parse_expr(&tokens, &mut pos, text.len(), &mut nodes)?;
        if let Some(t) = tokens.get(pos) {
            return Err(ExprError::Parse {
                offset: t.offset,
                message: "trailing input after expression".into(),
            });
        }
        Self::from_prefix(nodes, input_dim)
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write(nodes: &[Node], pos: &mut usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let n = nodes[*pos];
            *pos += 1;
            match n {
                Node::Op(k) => {
                    write!(f, "({}", k.symbol())?;
                    for _ in 0..k.arity() {
                        f.write_str(" ")?;
                        write(nodes, pos, f)?;
                    }
                    f.write_str(")")
                }
                Node::Var(i) => write!(f, "x{i}"),
                // `Display` for f64 is the shortest string that parses back
                // to the same bits.
                Node::Const(c) => write!(f, "{c}"),
            }
        }
        write(&self.nodes, &mut 0, f)
    }
}

fn check_arity(node: &ExprNode) -> Result<(), ExprError> {
    if let ExprNode::Operator { kind, children } = node {
        if children.len() != kind.arity() {
            return Err(ExprError::Arity {
                op: kind.symbol(),
                offset: 0,
                expected: kind.arity(),
                found: children.len(),
            });
        }
        children.iter().try_for_each(check_arity)?;
    }
    Ok(())
}

pub(crate) fn subtree_end(nodes: &[Node], start: usize) -> usize {
    let mut need = 1usize;
    let mut i = start;
    while need > 0 {
        need = need - 1 + nodes[i].arity();
        i += 1;
    }
    i
}

pub(crate) fn prefix_depth(nodes: &[Node]) -> usize {
    // Depth of each pending child slot, innermost last.
    let mut pending: Vec<usize> = vec![0];
    let mut max = 0;
    for n in nodes {
        let d = pending.pop().expect("well-formed prefix");
        max = max.max(d);
        for _ in 0..n.arity() {
            pending.push(d + 1);
        }
    }
    max
}

#[derive(Debug)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

#[derive(Debug)]
struct Token<'a> {
    tok: Tok<'a>,
    offset: usize,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' {
            out.push(Token { tok: Tok::Open, offset: i });
            chars.next();
        } else if c == ')' {
            out.push(Token { tok: Tok::Close, offset: i });
            chars.next();
        } else {
            let start = i;
            let mut end = text.len();
            while let Some(&(j, c)) = chars.peek() {
                if c.is_whitespace() || c == '(' || c == ')' {
                    end = j;
                    break;
                }
                chars.next();
            }
            out.push(Token {
                tok: Tok::Atom(&text[start..end]),
                offset: start,
            });
        }
    }
    out
}

fn parse_atom(atom: &str, offset: usize) -> Result<Node, ExprError> {
    if let Some(digits) = atom.strip_prefix('x') {
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            return digits.parse().map(Node::Var).map_err(|_| ExprError::Symbol {
                symbol: atom.into(),
                offset,
            });
        }
    }
    let looks_numeric = atom
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    if looks_numeric {
        if let Ok(v) = atom.parse::<f64>() {
            return if v.is_finite() {
                Ok(Node::Const(v))
            } else {
                Err(ExprError::NonFiniteConstant(v))
            };
        }
    }
    Err(ExprError::Symbol {
        symbol: atom.into(),
        offset,
    })
}

fn parse_expr(
    tokens: &[Token<'_>],
    pos: &mut usize,
    end_offset: usize,
    out: &mut Vec<Node>,
) -> Result<(), ExprError> {
    let Some(t) = tokens.get(*pos) else {
        return Err(ExprError::Parse {
            offset: end_offset,
            message: "unexpected end of input".into(),
        });
    };
    *pos += 1;
    match t.tok {
        Tok::Close => Err(ExprError::Parse {
            offset: t.offset,
            message: "unexpected `)`".into(),
        }),
        Tok::Atom(a) => {
            out.push(parse_atom(a, t.offset)?);
            Ok(())
        }
        Tok::Open => {
            let open_offset = t.offset;
            let kind = match tokens.get(*pos) {
                Some(Token {
                    tok: Tok::Atom(a),
                    offset,
                }) => OpKind::from_symbol(a).ok_or_else(|| ExprError::Symbol {
                    symbol: (*a).into(),
                    offset: *offset,
                })?,
                Some(other) => {
                    return Err(ExprError::Parse {
                        offset: other.offset,
                        message: "expected an operator after `(`".into(),
                    })
                }
                None => {
                    return Err(ExprError::Parse {
                        offset: end_offset,
                        message: "unexpected end of input".into(),
                    })
                }
            };
            *pos += 1;
            out.push(Node::Op(kind));
            let mut found = 0;
            loop {
                match tokens.get(*pos) {
                    Some(Token {
                        tok: Tok::Close, ..
                    }) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => {
                        parse_expr(tokens, pos, end_offset, out)?;
                        found += 1;
                    }
                    None => {
                        return Err(ExprError::Parse {
                            offset: end_offset,
                            message: format!("unclosed `(` opened at byte {open_offset}"),
                        })
                    }
                }
            }
            if found != kind.arity() {
                return Err(ExprError::Arity {
                    op: kind.symbol(),
                    offset: open_offset,
                    expected: kind.arity(),
                    found,
                });
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;

    const SIN_DEMO: &str = "(sin (+ (+ x0 3.14159265358979) (* 0.5 x1)))";

    fn sin_demo() -> ExprTree {
        ExprTree::parse_sexpr(SIN_DEMO, 2).unwrap()
    }

    #[test]
    fn sin_demo_at_origin_is_sin_pi() {
        let v = sin_demo().evaluate(&[0.0, 0.0]).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    // The constant is a truncated literal, not `PI`.
    #[allow(clippy::approx_constant)]
    fn sin_demo_structure() {
        let expected = ExprNode::op(
            OpKind::Sin,
            vec![ExprNode::op(
                OpKind::Add,
                vec![
                    ExprNode::op(
                        OpKind::Add,
                        vec![ExprNode::Variable(0), ExprNode::Constant(3.14159265358979)],
                    ),
                    ExprNode::op(
                        OpKind::Mul,
                        vec![ExprNode::Constant(0.5), ExprNode::Variable(1)],
                    ),
                ],
            )],
        );
        assert_eq!(sin_demo().to_node(), expected);
        assert_eq!(sin_demo(), ExprTree::new(&expected, 2).unwrap());
        // sin, two additions, a product and four leaves.
        assert_eq!(sin_demo().size_and_depth(), (8, 3));
    }

    #[test]
    fn constant_leaf() {
        let t = ExprTree::constant(3.5, 3).unwrap();
        assert_eq!(t.evaluate(&[1.0, -2.0, 9.0]).unwrap(), 3.5);
        assert_eq!(ExprTree::constant(1.0, 1).unwrap().size_and_depth(), (1, 0));
    }

    #[test]
    fn protected_operators() {
        let div = ExprTree::parse_sexpr("(/ 1 0)", 1).unwrap();
        assert_eq!(div.evaluate(&[5.0]).unwrap(), 1.0);
        let tiny = ExprTree::parse_sexpr("(/ 1 x0)", 1).unwrap();
        assert_eq!(tiny.evaluate(&[9e-7]).unwrap(), 1.0);
        assert_eq!(tiny.evaluate(&[2.0]).unwrap(), 0.5);
        let log = ExprTree::parse_sexpr("(log x0)", 1).unwrap();
        assert_eq!(log.evaluate(&[0.0]).unwrap(), PROTECTION_EPS.ln());
        assert_eq!(log.evaluate(&[-1.0]).unwrap(), 0.0);
        let sqrt = ExprTree::parse_sexpr("(sqrt x0)", 1).unwrap();
        assert_eq!(sqrt.evaluate(&[-4.0]).unwrap(), 2.0);
    }

    #[test]
    fn overflow_saturates() {
        let t = ExprTree::parse_sexpr("(* (* x0 x0) (* x0 x0))", 1).unwrap();
        assert_eq!(t.evaluate(&[1e200]).unwrap(), f64::MAX);
        let s = ExprTree::parse_sexpr("(sin (* (* x0 x0) x0))", 1).unwrap();
        assert!(s.evaluate(&[1e200]).unwrap().is_finite());
        let d = ExprTree::parse_sexpr("(- (* x0 x0) (* x0 x0))", 1).unwrap();
        assert_eq!(d.evaluate(&[1e200]).unwrap(), 0.0);
    }

    #[test]
    fn batch_examples() {
        let t = sin_demo();
        let out = t
            .evaluate_batch(array![[0.0, 0.0], [0.0, 2.0 * PI]].view())
            .unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12), "{out:?}");
        let empty = ndarray::Array2::<f64>::zeros((0, 2));
        assert!(t.evaluate_batch(empty.view()).unwrap().is_empty());
    }

    #[test]
    fn shape_errors() {
        let t = sin_demo();
        assert_eq!(
            t.evaluate(&[1.0]),
            Err(ExprError::Shape {
                expected: 2,
                found: 1
            })
        );
        let m = ndarray::Array2::<f64>::zeros((3, 3));
        assert!(matches!(t.evaluate_batch(m.view()), Err(ExprError::Shape { .. })));
    }

    #[test]
    fn parse_terminals_and_errors() {
        let t = ExprTree::parse_sexpr("x0", 1).unwrap();
        assert_eq!(t.to_node(), ExprNode::Variable(0));
        assert_eq!(ExprTree::parse_sexpr("  -0.25 ", 1).unwrap().to_node(), ExprNode::Constant(-0.25));
        assert!(matches!(
            ExprTree::parse_sexpr("(+ x0)", 1),
            Err(ExprError::Arity {
                op: "+",
                expected: 2,
                found: 1,
                ..
            })
        ));
        assert!(matches!(
            ExprTree::parse_sexpr("(tan x0)", 1),
            Err(ExprError::Symbol { offset: 1, .. })
        ));
        assert!(matches!(
            ExprTree::parse_sexpr("(+ x0 y)", 1),
            Err(ExprError::Symbol { offset: 6, .. })
        ));
        assert!(matches!(
            ExprTree::parse_sexpr("(+ x0 x1", 2),
            Err(ExprError::Parse { offset: 8, .. })
        ));
        assert!(matches!(
            ExprTree::parse_sexpr("x0 x1", 2),
            Err(ExprError::Parse { offset: 3, .. })
        ));
        assert!(matches!(
            ExprTree::parse_sexpr(")", 1),
            Err(ExprError::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            ExprTree::parse_sexpr("x3", 2),
            Err(ExprError::VariableOutOfRange { index: 3, input_dim: 2 })
        ));
        assert!(matches!(
            ExprTree::parse_sexpr("inf", 1),
            Err(ExprError::Symbol { .. })
        ));
        assert!(matches!(
            ExprTree::parse_sexpr("1e999", 1),
            Err(ExprError::NonFiniteConstant(_))
        ));
    }

    #[test]
    fn size_and_depth_of_sum() {
        let t = ExprTree::parse_sexpr("(+ x0 x1)", 2).unwrap();
        assert_eq!(t.size_and_depth(), (3, 1));
        assert_eq!(t.subtree_end(0), 3);
        assert_eq!(t.subtree_end(1), 2);
    }

    #[test]
    fn malformed_prefix_rejected() {
        assert_eq!(
            ExprTree::from_prefix(vec![Node::Op(OpKind::Add), Node::Var(0)], 1),
            Err(ExprError::Malformed)
        );
        assert_eq!(
            ExprTree::from_prefix(vec![Node::Var(0), Node::Var(0)], 1),
            Err(ExprError::Malformed)
        );
        assert_eq!(ExprTree::from_prefix(vec![], 1), Err(ExprError::Malformed));
        let bad = ExprNode::op(OpKind::Neg, vec![]);
        assert!(matches!(ExprTree::new(&bad, 1), Err(ExprError::Arity { .. })));
    }

    #[test]
    fn constants_compare_by_bits() {
        let a = ExprTree::constant(0.0, 1).unwrap();
        let b = ExprTree::constant(-0.0, 1).unwrap();
        assert_ne!(a, b);
        let printed = b.to_sexpr();
        assert_eq!(ExprTree::parse_sexpr(&printed, 1).unwrap(), b);
    }
}
