//! Expression trees for nonlinear structural assignments.
//!
//! The primitive set is deliberately closed: sums, products, scalar powers,
//! tanh, sin, threshold indicators, xor, clamping and rounding, plus one
//! noise symbol per mechanism. Parents are referenced by label and compiled
//! to positional indices when an `Scm` is built.

use crate::error::{Error, Result};

/// An expression over parent values and the mechanism's own noise.
///
/// The type parameter is the parent reference: `String` labels in public
/// descriptions, `usize` positions after compilation.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr<P = String> {
    Const(f64),
    Parent(P),
    /// The mechanism's noise symbol.
    Noise,
    Add(Vec<Expr<P>>),
    Mul(Vec<Expr<P>>),
    Sub(Box<Expr<P>>, Box<Expr<P>>),
    Neg(Box<Expr<P>>),
    /// Scalar power with a constant exponent.
    Pow(Box<Expr<P>>, f64),
    Tanh(Box<Expr<P>>),
    Sin(Box<Expr<P>>),
    /// 1.0 if the argument exceeds the threshold, else 0.0.
    IndGt(Box<Expr<P>>, f64),
    /// Addition mod 2 of two {0,1}-valued arguments.
    Xor(Box<Expr<P>>, Box<Expr<P>>),
    /// Clamp into `[lo, hi]`.
    Trunc(Box<Expr<P>>, f64, f64),
    Round(Box<Expr<P>>),
}

pub type CompiledExpr = Expr<usize>;

impl Expr<String> {
    /// Resolves parent labels to positions in `parents`.
    pub fn compile(&self, parents: &[String]) -> Result<CompiledExpr> {
        let lookup = |label: &String| -> Result<usize> {
            parents.iter().position(|p| p == label).ok_or_else(|| {
                Error::validation(format!(
                    "expression references `{label}`, which is not a declared parent"
                ))
            })
        };
        self.map_parents(&lookup)
    }

    fn map_parents(
        &self,
        lookup: &impl Fn(&String) -> Result<usize>,
    ) -> Result<CompiledExpr> {
        let go = |e: &Expr<String>| e.map_parents(lookup);
        Ok(match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Parent(p) => Expr::Parent(lookup(p)?),
            Expr::Noise => Expr::Noise,
            Expr::Add(xs) => Expr::Add(xs.iter().map(go).collect::<Result<_>>()?),
            Expr::Mul(xs) => Expr::Mul(xs.iter().map(go).collect::<Result<_>>()?),
            Expr::Sub(a, b) => Expr::Sub(Box::new(go(a)?), Box::new(go(b)?)),
            Expr::Neg(a) => Expr::Neg(Box::new(go(a)?)),
            Expr::Pow(a, k) => Expr::Pow(Box::new(go(a)?), *k),
            Expr::Tanh(a) => Expr::Tanh(Box::new(go(a)?)),
            Expr::Sin(a) => Expr::Sin(Box::new(go(a)?)),
            Expr::IndGt(a, t) => Expr::IndGt(Box::new(go(a)?), *t),
            Expr::Xor(a, b) => Expr::Xor(Box::new(go(a)?), Box::new(go(b)?)),
            Expr::Trunc(a, lo, hi) => Expr::Trunc(Box::new(go(a)?), *lo, *hi),
            Expr::Round(a) => Expr::Round(Box::new(go(a)?)),
        })
    }

    /// Labels of all parents referenced anywhere in the tree.
    pub fn referenced_parents(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_parents(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_parents(&self, out: &mut Vec<String>) {
        match self {
            Expr::Parent(p) => out.push(p.clone()),
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().for_each(|x| x.collect_parents(out)),
            Expr::Sub(a, b) | Expr::Xor(a, b) => {
                a.collect_parents(out);
                b.collect_parents(out);
            }
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Tanh(a)
            | Expr::Sin(a)
            | Expr::IndGt(a, _)
            | Expr::Trunc(a, _, _)
            | Expr::Round(a) => a.collect_parents(out),
            Expr::Const(_) | Expr::Noise => {}
        }
    }
}

impl CompiledExpr {
    pub fn eval(&self, parents: &[f64], noise: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Parent(i) => parents[*i],
            Expr::Noise => noise,
            Expr::Add(xs) => xs.iter().map(|x| x.eval(parents, noise)).sum(),
            Expr::Mul(xs) => xs.iter().map(|x| x.eval(parents, noise)).product(),
            Expr::Sub(a, b) => a.eval(parents, noise) - b.eval(parents, noise),
            Expr::Neg(a) => -a.eval(parents, noise),
            Expr::Pow(a, k) => a.eval(parents, noise).powf(*k),
            Expr::Tanh(a) => a.eval(parents, noise).tanh(),
            Expr::Sin(a) => a.eval(parents, noise).sin(),
            Expr::IndGt(a, t) => {
                if a.eval(parents, noise) > *t {
                    1.0
                } else {
                    0.0
                }
            }
            Expr::Xor(a, b) => {
                let x = a.eval(parents, noise).round() as i64 & 1;
                let y = b.eval(parents, noise).round() as i64 & 1;
                (x ^ y) as f64
            }
            Expr::Trunc(a, lo, hi) => a.eval(parents, noise).clamp(*lo, *hi),
            Expr::Round(a) => a.eval(parents, noise).round(),
        }
    }
}

/// Shorthand constructors used by presets and tests.
pub mod build {
    use super::Expr;

    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(label: &str) -> Expr {
        Expr::Parent(label.to_string())
    }

    pub fn eps() -> Expr {
        Expr::Noise
    }

    pub fn add(xs: Vec<Expr>) -> Expr {
        Expr::Add(xs)
    }

    pub fn mul(xs: Vec<Expr>) -> Expr {
        Expr::Mul(xs)
    }

    pub fn scaled(k: f64, x: Expr) -> Expr {
        Expr::Mul(vec![Expr::Const(k), x])
    }

    pub fn tanh(x: Expr) -> Expr {
        Expr::Tanh(Box::new(x))
    }

    pub fn sin(x: Expr) -> Expr {
        Expr::Sin(Box::new(x))
    }

    pub fn pow(x: Expr, k: f64) -> Expr {
        Expr::Pow(Box::new(x), k)
    }
}

#[cfg(test)]
mod tests {
    use super::build::*;
    use super::*;

    #[test]
    fn compiles_and_evaluates() {
        let parents = vec!["X2".to_string(), "Y".to_string()];
        // 0.8 * tanh(X2) + 0.6 * Y + 0.3 * eps
        let e = add(vec![
            scaled(0.8, tanh(var("X2"))),
            scaled(0.6, var("Y")),
            scaled(0.3, eps()),
        ]);
        let compiled = e.compile(&parents).unwrap();
        let v = compiled.eval(&[1.0, 2.0], 0.5);
        let expected = 0.8 * 1.0f64.tanh() + 0.6 * 2.0 + 0.3 * 0.5;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_undeclared_parent() {
        let e = var("Z");
        assert!(e.compile(&["X1".to_string()]).is_err());
    }

    #[test]
    fn xor_and_indicator() {
        let e = Expr::Xor(Box::new(var("A")), Box::new(eps()));
        let c = e.compile(&["A".to_string()]).unwrap();
        assert_eq!(c.eval(&[1.0], 1.0), 0.0);
        assert_eq!(c.eval(&[1.0], 0.0), 1.0);
        assert_eq!(c.eval(&[0.0], 1.0), 1.0);

        let ind = Expr::IndGt(Box::new(var("A")), 0.5);
        let ci = ind.compile(&["A".to_string()]).unwrap();
        assert_eq!(ci.eval(&[0.6], 0.0), 1.0);
        assert_eq!(ci.eval(&[0.4], 0.0), 0.0);
    }
}
