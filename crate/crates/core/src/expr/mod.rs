//! Scalar expression language for moment maps, objectives, events and
//! cumulant bounds.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = ("-" | "+") unary | power ;
//! power    = primary [ "^" exponent ] ;
//! exponent = [ "-" | "+" ] integer | "(" [ "-" | "+" ] integer ")" ;
//! primary  = number | variable | call | "(" expr ")" ;
//! call     = ("abs" | "exp" | "ln") "(" expr ")"
//!          | ("min" | "max") "(" expr { "," expr } ")" ;
//! variable = "x1" | "x2" | ...      (or the caller-supplied names)
//! ```
//!
//! `^` binds tighter than unary minus, so `-x1^2` is `-(x1^2)`. Exponents
//! are integers only.

mod interval;
mod parser;

use std::fmt;
use std::sync::Arc;

pub use interval::Interval;

use crate::model::BoxRegion;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("wrong number of arguments ({found}) for '{function}' at byte {offset}")]
    Arity {
        function: String,
        found: usize,
        offset: usize,
    },
    #[error("domain error in '{subtree}': {message}")]
    Domain { subtree: String, message: String },
    #[error("expression uses variable {index} but only {available} values were supplied")]
    Dimension { index: usize, available: usize },
}

impl ExprError {
    pub fn code(&self) -> &'static str {
        match self {
            ExprError::Syntax { .. } => "SYNTAX_ERROR",
            ExprError::UnknownIdentifier { .. } => "UNKNOWN_IDENTIFIER",
            ExprError::Arity { .. } => "ARITY_ERROR",
            ExprError::Domain { .. } => "DOMAIN_ERROR",
            ExprError::Dimension { .. } => "DIM_MISMATCH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Func {
    Abs,
    Exp,
    Ln,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Abs(Box<Node>),
    Exp(Box<Node>),
    Ln(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Min(Vec<Node>),
    Max(Vec<Node>),
}

/// A parsed expression together with the variable names it was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Arc<[String]>,
}

/// `x1..xd`.
pub fn indexed_vars(dimension: usize) -> Vec<String> {
    (1..=dimension).map(|i| format!("x{i}")).collect()
}

/// Parses `text` over the variables `x1..x{dimension}`.
pub fn parse(text: &str, dimension: usize) -> Result<Expr, ExprError> {
    Expr::parse_with(text, &indexed_vars(dimension))
}

impl Expr {
    pub fn parse_with<S: AsRef<str>>(text: &str, vars: &[S]) -> Result<Expr, ExprError> {
        let vars: Arc<[String]> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        let root = parser::Parser::new(text, &vars)?.parse_all()?;
        Ok(Expr { root, vars })
    }

    pub fn constant(value: f64, dimension: usize) -> Expr {
        Expr {
            root: Node::Const(value),
            vars: indexed_vars(dimension).into(),
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    /// Highest variable index referenced (0-based), if any.
    pub fn max_var(&self) -> Option<usize> {
        fn walk(n: &Node, acc: &mut Option<usize>) {
            match n {
                Node::Const(_) => {}
                Node::Var(i) => *acc = Some(acc.map_or(*i, |a| a.max(*i))),
                Node::Neg(a) | Node::Abs(a) | Node::Exp(a) | Node::Ln(a) | Node::Pow(a, _) => {
                    walk(a, acc)
                }
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a, acc);
                    walk(b, acc);
                }
                Node::Min(xs) | Node::Max(xs) => xs.iter().for_each(|x| walk(x, acc)),
            }
        }
        let mut acc = None;
        walk(&self.root, &mut acc);
        acc
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    /// Canonical text form; `parse` of this string reproduces the tree.
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.write_node(&self.root, &mut s);
        s
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.eval_node(&self.root, x)
    }

    pub fn eval_interval(&self, region: &BoxRegion) -> Result<Interval, ExprError> {
        let iv: Vec<Interval> = region
            .lower
            .iter()
            .zip(&region.upper)
            .map(|(&lo, &hi)| Interval::new(lo, hi))
            .collect();
        self.eval_intervals(&iv)
    }

    pub fn eval_intervals(&self, x: &[Interval]) -> Result<Interval, ExprError> {
        self.interval_node(&self.root, x)
    }

    /// Value and gradient enclosures over `x`. For `abs`, `min` and `max`
    /// the gradient enclosure is the hull over every branch that can be
    /// active, which is what a mean-value bound needs.
    pub fn eval_gradient_intervals(&self, x: &[Interval]) -> Result<(Interval, Vec<Interval>), ExprError> {
        self.gradient_node(&self.root, x)
    }

    fn gradient_node(&self, node: &Node, x: &[Interval]) -> Result<(Interval, Vec<Interval>), ExprError> {
        let d = x.len();
        let zero = || vec![Interval::point(0.0); d];
        let scale = |g: &[Interval], s: Interval| g.iter().map(|v| v.mul(s)).collect::<Vec<_>>();
        let combine = |a: &[Interval], b: &[Interval], f: &dyn Fn(Interval, Interval) -> Interval| {
            a.iter().zip(b).map(|(p, q)| f(*p, *q)).collect::<Vec<_>>()
        };
        Ok(match node {
            Node::Const(_) | Node::Var(_) => {
                let v = self.interval_node(node, x)?;
                let mut g = zero();
                if let Node::Var(i) = node {
                    g[*i] = Interval::point(1.0);
                }
                (v, g)
            }
            Node::Neg(a) => {
                let (v, g) = self.gradient_node(a, x)?;
                (v.neg(), g.into_iter().map(Interval::neg).collect())
            }
            Node::Abs(a) => {
                let (v, g) = self.gradient_node(a, x)?;
                let sign = if v.lo >= 0.0 {
                    Interval::point(1.0)
                } else if v.hi <= 0.0 {
                    Interval::point(-1.0)
                } else {
                    Interval::new(-1.0, 1.0)
                };
                (v.abs(), scale(&g, sign))
            }
            Node::Exp(a) => {
                let (v, g) = self.gradient_node(a, x)?;
                let e = v.exp();
                (e, scale(&g, e))
            }
            Node::Ln(a) => {
                let (v, g) = self.gradient_node(a, x)?;
                let l = v
                    .ln()
                    .ok_or_else(|| self.domain_error(node, "logarithm of a nonpositive interval"))?;
                let r = Interval::point(1.0).div(v).unwrap_or_else(Interval::entire);
                (l, scale(&g, r))
            }
            Node::Add(a, b) | Node::Sub(a, b) => {
                let (va, ga) = self.gradient_node(a, x)?;
                let (vb, gb) = self.gradient_node(b, x)?;
                if matches!(node, Node::Add(..)) {
                    (va.add(vb), combine(&ga, &gb, &|p, q| p.add(q)))
                } else {
                    (va.sub(vb), combine(&ga, &gb, &|p, q| p.sub(q)))
                }
            }
            Node::Mul(a, b) => {
                let (va, ga) = self.gradient_node(a, x)?;
                let (vb, gb) = self.gradient_node(b, x)?;
                (va.mul(vb), combine(&ga, &gb, &|p, q| p.mul(vb).add(q.mul(va))))
            }
            Node::Div(a, b) => {
                let (va, ga) = self.gradient_node(a, x)?;
                let (vb, gb) = self.gradient_node(b, x)?;
                let q = va
                    .div(vb)
                    .ok_or_else(|| self.domain_error(node, "division by the zero interval"))?;
                let inv = Interval::point(1.0).div(vb).unwrap_or_else(Interval::entire);
                (q, combine(&ga, &gb, &|p, r| p.sub(q.mul(r)).mul(inv)))
            }
            Node::Pow(a, n) => {
                let (v, g) = self.gradient_node(a, x)?;
                let p = v
                    .powi(*n)
                    .ok_or_else(|| self.domain_error(node, "negative power of the zero interval"))?;
                let dp = match *n {
                    0 => Interval::point(0.0),
                    n => v
                        .powi(n - 1)
                        .map(|w| w.mul(Interval::point(n as f64)))
                        .unwrap_or_else(Interval::entire),
                };
                (p, scale(&g, dp))
            }
            Node::Min(args) | Node::Max(args) => {
                let parts = args
                    .iter()
                    .map(|a| self.gradient_node(a, x))
                    .collect::<Result<Vec<_>, _>>()?;
                let is_min = matches!(node, Node::Min(_));
                let mut v = parts[0].0;
                for (w, _) in &parts[1..] {
                    v = if is_min { v.min(*w) } else { v.max(*w) };
                }
                let mut g: Option<Vec<Interval>> = None;
                for (w, gw) in &parts {
                    let can_be_active = if is_min { w.lo <= v.hi } else { w.hi >= v.lo };
                    if can_be_active {
                        g = Some(match g {
                            None => gw.clone(),
                            Some(h) => combine(&h, gw, &|p, q| p.hull(q)),
                        });
                    }
                }
                (v, g.unwrap_or_else(zero))
            }
        })
    }

    /// Central-difference gradient with a uniform step `h`.
    pub fn grad_fd(&self, x: &[f64], h: f64) -> Result<Vec<f64>, ExprError> {
        let steps = vec![h; x.len()];
        self.grad_fd_steps(x, &steps)
    }

    /// Central-difference gradient with step `1e-6 * max(1, |x_i|)` per component.
    pub fn grad_fd_default(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        let steps: Vec<f64> = x.iter().map(|v| default_step(*v)).collect();
        self.grad_fd_steps(x, &steps)
    }

    fn grad_fd_steps(&self, x: &[f64], steps: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut probe = x.to_vec();
        let mut grad = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let h = steps[i];
            probe[i] = x[i] + h;
            let up = self.eval(&probe)?;
            probe[i] = x[i] - h;
            let down = self.eval(&probe)?;
            probe[i] = x[i];
            grad.push((up - down) / (2.0 * h));
        }
        Ok(grad)
    }

    fn domain_error(&self, node: &Node, message: &str) -> ExprError {
        let mut subtree = String::new();
        self.write_node(node, &mut subtree);
        ExprError::Domain {
            subtree,
            message: message.to_string(),
        }
    }

    fn eval_node(&self, node: &Node, x: &[f64]) -> Result<f64, ExprError> {
        Ok(match node {
            Node::Const(c) => *c,
            Node::Var(i) => *x.get(*i).ok_or(ExprError::Dimension {
                index: *i + 1,
                available: x.len(),
            })?,
            Node::Neg(a) => -self.eval_node(a, x)?,
            Node::Abs(a) => self.eval_node(a, x)?.abs(),
            Node::Exp(a) => self.eval_node(a, x)?.exp(),
            Node::Ln(a) => {
                let v = self.eval_node(a, x)?;
                if v <= 0.0 {
                    return Err(self.domain_error(node, "logarithm of a nonpositive value"));
                }
                v.ln()
            }
            Node::Add(a, b) => self.eval_node(a, x)? + self.eval_node(b, x)?,
            Node::Sub(a, b) => self.eval_node(a, x)? - self.eval_node(b, x)?,
            Node::Mul(a, b) => self.eval_node(a, x)? * self.eval_node(b, x)?,
            Node::Div(a, b) => {
                let num = self.eval_node(a, x)?;
                let den = self.eval_node(b, x)?;
                if den == 0.0 {
                    return Err(self.domain_error(node, "division by zero"));
                }
                num / den
            }
            Node::Pow(a, n) => {
                let v = self.eval_node(a, x)?;
                if *n < 0 && v == 0.0 {
                    return Err(self.domain_error(node, "negative power of zero"));
                }
                signed_pow(v, *n)
            }
            Node::Min(args) => {
                let mut acc = f64::INFINITY;
                for a in args {
                    acc = acc.min(self.eval_node(a, x)?);
                }
                acc
            }
            Node::Max(args) => {
                let mut acc = f64::NEG_INFINITY;
                for a in args {
                    acc = acc.max(self.eval_node(a, x)?);
                }
                acc
            }
        })
    }

    fn interval_node(&self, node: &Node, x: &[Interval]) -> Result<Interval, ExprError> {
        Ok(match node {
            Node::Const(c) => Interval::point(*c),
            Node::Var(i) => *x.get(*i).ok_or(ExprError::Dimension {
                index: *i + 1,
                available: x.len(),
            })?,
            Node::Neg(a) => self.interval_node(a, x)?.neg(),
            Node::Abs(a) => self.interval_node(a, x)?.abs(),
            Node::Exp(a) => self.interval_node(a, x)?.exp(),
            Node::Ln(a) => self
                .interval_node(a, x)?
                .ln()
                .ok_or_else(|| self.domain_error(node, "logarithm of a nonpositive interval"))?,
            Node::Add(a, b) => self.interval_node(a, x)?.add(self.interval_node(b, x)?),
            Node::Sub(a, b) => self.interval_node(a, x)?.sub(self.interval_node(b, x)?),
            Node::Mul(a, b) => self.interval_node(a, x)?.mul(self.interval_node(b, x)?),
            Node::Div(a, b) => {
                let num = self.interval_node(a, x)?;
                let den = self.interval_node(b, x)?;
                num.div(den)
                    .ok_or_else(|| self.domain_error(node, "division by the zero interval"))?
            }
            Node::Pow(a, n) => self
                .interval_node(a, x)?
                .powi(*n)
                .ok_or_else(|| self.domain_error(node, "negative power of the zero interval"))?,
            Node::Min(args) => {
                let mut acc = self.interval_node(&args[0], x)?;
                for a in &args[1..] {
                    acc = acc.min(self.interval_node(a, x)?);
                }
                acc
            }
            Node::Max(args) => {
                let mut acc = self.interval_node(&args[0], x)?;
                for a in &args[1..] {
                    acc = acc.max(self.interval_node(a, x)?);
                }
                acc
            }
        })
    }

    fn write_node(&self, node: &Node, out: &mut String) {
        match node {
            Node::Const(c) => {
                if *c < 0.0 {
                    out.push_str(&format!("({c:?})"));
                } else {
                    out.push_str(&format!("{c:?}"));
                }
            }
            Node::Var(i) => match self.vars.get(*i) {
                Some(name) => out.push_str(name),
                None => out.push_str(&format!("x{}", i + 1)),
            },
            Node::Neg(a) => {
                out.push('-');
                self.write_child(a, 3, out);
            }
            Node::Abs(a) => self.write_call("abs", std::slice::from_ref(a.as_ref()), out),
            Node::Exp(a) => self.write_call("exp", std::slice::from_ref(a.as_ref()), out),
            Node::Ln(a) => self.write_call("ln", std::slice::from_ref(a.as_ref()), out),
            Node::Add(a, b) => self.write_binary(a, " + ", b, 1, out),
            Node::Sub(a, b) => self.write_binary(a, " - ", b, 1, out),
            Node::Mul(a, b) => self.write_binary(a, " * ", b, 2, out),
            Node::Div(a, b) => self.write_binary(a, " / ", b, 2, out),
            Node::Pow(a, n) => {
                self.write_child(a, 5, out);
                if *n < 0 {
                    out.push_str(&format!("^({n})"));
                } else {
                    out.push_str(&format!("^{n}"));
                }
            }
            Node::Min(args) => self.write_call("min", args, out),
            Node::Max(args) => self.write_call("max", args, out),
        }
    }

    fn write_binary(&self, a: &Node, op: &str, b: &Node, prec: u8, out: &mut String) {
        self.write_child(a, prec, out);
        out.push_str(op);
        // left-associative: the right operand must bind strictly tighter
        self.write_child(b, prec + 1, out);
    }

    fn write_child(&self, node: &Node, min_prec: u8, out: &mut String) {
        if precedence(node) < min_prec {
            out.push('(');
            self.write_node(node, out);
            out.push(')');
        } else {
            self.write_node(node, out);
        }
    }

    fn write_call(&self, name: &str, args: &[Node], out: &mut String) {
        out.push_str(name);
        out.push('(');
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            self.write_node(a, out);
        }
        out.push(')');
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(..) => 3,
        Node::Pow(..) => 4,
        Node::Const(c) if *c < 0.0 => 5,
        _ => 5,
    }
}

pub(crate) fn default_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// `|a|^n` by binary exponentiation; monotone in `a >= 0`.
pub(crate) fn pow_magnitude(a: f64, n: u32) -> f64 {
    let mut result = 1.0;
    let mut base = a;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result *= base;
        }
        e >>= 1;
        if e > 0 {
            base *= base;
        }
    }
    result
}

pub(crate) fn signed_pow(v: f64, n: i32) -> f64 {
    let mag = pow_magnitude(v.abs(), n.unsigned_abs());
    let signed = if v < 0.0 && n % 2 != 0 { -mag } else { mag };
    if n < 0 {
        1.0 / signed
    } else {
        signed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, d: usize) -> Expr {
        parse(s, d).unwrap()
    }

    #[test]
    fn parses_plant_coefficient() {
        let e = p("20 + 0.2*x2 + 0.3*x3", 3);
        match &e.root {
            Node::Add(lhs, rhs) => {
                assert!(matches!(lhs.as_ref(), Node::Add(..)));
                assert!(matches!(rhs.as_ref(), Node::Mul(..)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
        assert_eq!(e.eval(&[0.0, 0.0, 0.0]).unwrap(), 20.0);
    }

    #[test]
    fn min_under_subtraction() {
        let e = p("min(x1, 2*x2) - 1", 2);
        match &e.root {
            Node::Sub(lhs, _) => assert!(matches!(lhs.as_ref(), Node::Min(args) if args.len() == 2)),
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn unclosed_call_reports_offset() {
        let err = parse("ln(", 1).unwrap_err();
        assert_eq!(err.code(), "SYNTAX_ERROR");
        assert!(matches!(err, ExprError::Syntax { offset: 3, .. }));
        let err = parse("min(x1,", 1).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 7, .. }));
    }

    #[test]
    fn unknown_names_and_arity() {
        assert!(matches!(
            parse("x4 + 1", 3),
            Err(ExprError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            parse("sin(x1)", 1),
            Err(ExprError::UnknownIdentifier { .. })
        ));
        assert_eq!(parse("abs(x1, x1)", 1).unwrap_err().code(), "ARITY_ERROR");
        assert_eq!(parse("min()", 1).unwrap_err().code(), "ARITY_ERROR");
        assert_eq!(parse("x1^2.5", 1).unwrap_err().code(), "SYNTAX_ERROR");
        assert_eq!(parse("x1 x1", 1).unwrap_err().code(), "SYNTAX_ERROR");
    }

    #[test]
    fn point_evaluation() {
        assert_eq!(p("min(1, x1)", 1).eval(&[5.0]).unwrap(), 1.0);
        assert_eq!(p("x1^2 - x2", 2).eval(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(p("-x1^2", 1).eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(p("x1^(-2)", 1).eval(&[2.0]).unwrap(), 0.25);
        assert_eq!(p("x1^-1", 1).eval(&[4.0]).unwrap(), 0.25);
        assert_eq!(parse("2^3^", 1).unwrap_err().code(), "SYNTAX_ERROR");
        assert!((p("exp(ln(x1))", 1).eval(&[2.5]).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(p("1e-3 * x1", 1).eval(&[2.0]).unwrap(), 2e-3);
    }

    #[test]
    fn domain_errors_name_the_subtree() {
        match p("1 + ln(x1)", 1).eval(&[0.0]).unwrap_err() {
            ExprError::Domain { subtree, .. } => assert_eq!(subtree, "ln(x1)"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p("1 / (x1 - 1)", 1).eval(&[1.0]).unwrap_err().code(), "DOMAIN_ERROR");
        assert_eq!(p("x1", 2).eval(&[]).unwrap_err().code(), "DIM_MISMATCH");
    }

    #[test]
    fn finite_difference_gradients() {
        let g = p("x1^2", 1).grad_fd(&[1.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        let g = p("x1 + 3*x2", 2).grad_fd(&[0.3, -7.0], 1e-6).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
        let g = p("min(x1, x2)", 2).grad_fd(&[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9 && g[1].abs() < 1e-12);
        let g = p("x1^3", 1).grad_fd_default(&[2.0]).unwrap();
        assert!((g[0] - 12.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_enclosures() {
        let iv = |lo: f64, hi: f64| Interval::new(lo, hi);
        let (v, g) = p("x1^2 * x2", 2).eval_gradient_intervals(&[iv(1.0, 2.0), iv(3.0, 3.0)]).unwrap();
        assert!(v.contains(3.0) && v.contains(12.0));
        assert!(g[0].contains(6.0) && g[0].contains(12.0) && g[0].hi < 12.0001);
        assert!(g[1].contains(1.0) && g[1].contains(4.0));
        let (_, g) = p("min(x1, 2*x2)", 2).eval_gradient_intervals(&[iv(0.0, 1.0), iv(5.0, 6.0)]).unwrap();
        assert_eq!((g[0].lo, g[0].hi, g[1].lo, g[1].hi), (1.0, 1.0, 0.0, 0.0));
        let (_, g) = p("abs(x1) + exp(x1) / x1", 1).eval_gradient_intervals(&[iv(1.0, 1.5)]).unwrap();
        // d/dx e^x/x = e^x (x - 1) / x^2, between 0 and about 0.996
        assert!(g[0].contains(1.0) && g[0].contains(1.99));
    }

    #[test]
    fn interval_examples() {
        let b = |lo: Vec<f64>, hi: Vec<f64>| BoxRegion::new(lo, hi).unwrap();
        let iv = p("x1*x1", 1).eval_interval(&b(vec![-1.0], vec![1.0])).unwrap();
        assert!(iv.lo <= -1.0 && iv.lo > -1.0 - 1e-12 && iv.hi >= 1.0 && iv.hi < 1.0 + 1e-12);
        let iv = p("x1 + x2", 2).eval_interval(&b(vec![0.0, 0.0], vec![1.0, 1.0])).unwrap();
        assert!(iv.lo <= 0.0 && iv.lo > -1e-300 && iv.hi >= 2.0 && iv.hi < 2.0 + 1e-12);
        let iv = p("min(x1, 2)", 1).eval_interval(&b(vec![1.0], vec![3.0])).unwrap();
        assert_eq!((iv.lo, iv.hi), (1.0, 2.0));
        let iv = p("x1^2", 1).eval_interval(&b(vec![-1.0], vec![1.0])).unwrap();
        assert!(iv.lo == 0.0 && iv.hi >= 1.0);
        assert_eq!(
            p("ln(x1)", 1)
                .eval_interval(&b(vec![-2.0], vec![-1.0]))
                .unwrap_err()
                .code(),
            "DOMAIN_ERROR"
        );
    }

    #[test]
    fn render_round_trips_examples() {
        for s in [
            "20 + 0.2*x2 + 0.3*x3",
            "min(x1, 2*x2) - 1",
            "-(x1 + x2) * x3",
            "x1 - (x2 - x3)",
            "x1 / (x2 / x3)",
            "(-x1)^3 + -x2^2",
            "max(abs(x1), exp(x2), ln(x3 + 1)) ^ (-2)",
        ] {
            let e = p(s, 3);
            let again = parse(&e.render(), 3).unwrap();
            assert_eq!(e, again, "{s} -> {}", e.render());
        }
        assert_eq!(p("x1 - (x2 - x3)", 3).render(), "x1 - (x2 - x3)");
    }

    #[test]
    fn named_variables() {
        let e = Expr::parse_with("ln(0.5*exp(s) + 0.5)", &["s"]).unwrap();
        assert!((e.eval(&[0.0]).unwrap()).abs() < 1e-16);
        assert_eq!(e.render(), "ln(0.5 * exp(s) + 0.5)");
    }
}
