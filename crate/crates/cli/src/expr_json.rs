//! Recursive-descent validator for prefix-notation expression arrays.
//!
//! Expressions are JSON arrays `[op, arg, ...]`, numbers, or strings naming
//! a parent (the string `"eps"` is the mechanism's noise symbol). Example:
//! `["+", ["*", 0.8, ["tanh", "X2"]], ["*", 0.3, "eps"]]`.

use pig_core::scm::Expr;
use serde_json::Value;

pub fn parse_expr(value: &Value) -> Result<Expr, String> {
    match value {
        Value::Number(n) => n
            .as_f64()
            .map(Expr::Const)
            .ok_or_else(|| "number out of range".to_string()),
        Value::String(s) => {
            if s == "eps" {
                Ok(Expr::Noise)
            } else {
                Ok(Expr::Parent(s.clone()))
            }
        }
        Value::Array(items) => parse_call(items),
        other => Err(format!("expected number, string, or array, found {other}")),
    }
}

fn parse_call(items: &[Value]) -> Result<Expr, String> {
    let op = items
        .first()
        .and_then(|v| v.as_str())
        .ok_or_else(|| "expression arrays start with an operator string".to_string())?;
    let args = &items[1..];
    let arity = |n: usize| -> Result<(), String> {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("`{op}` takes {n} arguments, found {}", args.len()))
        }
    };
    let number = |idx: usize| -> Result<f64, String> {
        args[idx]
            .as_f64()
            .ok_or_else(|| format!("`{op}` argument {} must be a number", idx + 1))
    };
    match op {
        "+" | "*" => {
            if args.len() < 2 {
                return Err(format!("`{op}` takes at least 2 arguments"));
            }
            let parsed = args.iter().map(parse_expr).collect::<Result<Vec<_>, _>>()?;
            Ok(if op == "+" { Expr::Add(parsed) } else { Expr::Mul(parsed) })
        }
        "-" => match args.len() {
            1 => Ok(Expr::Neg(Box::new(parse_expr(&args[0])?))),
            2 => Ok(Expr::Sub(
                Box::new(parse_expr(&args[0])?),
                Box::new(parse_expr(&args[1])?),
            )),
            n => Err(format!("`-` takes 1 or 2 arguments, found {n}")),
        },
        "pow" => {
            arity(2)?;
            Ok(Expr::Pow(Box::new(parse_expr(&args[0])?), number(1)?))
        }
        "tanh" => {
            arity(1)?;
            Ok(Expr::Tanh(Box::new(parse_expr(&args[0])?)))
        }
        "sin" => {
            arity(1)?;
            Ok(Expr::Sin(Box::new(parse_expr(&args[0])?)))
        }
        "ind_gt" => {
            arity(2)?;
            Ok(Expr::IndGt(Box::new(parse_expr(&args[0])?), number(1)?))
        }
        "xor" => {
            arity(2)?;
            Ok(Expr::Xor(
                Box::new(parse_expr(&args[0])?),
                Box::new(parse_expr(&args[1])?),
            ))
        }
        "trunc" => {
            arity(3)?;
            Ok(Expr::Trunc(
                Box::new(parse_expr(&args[0])?),
                number(1)?,
                number(2)?,
            ))
        }
        "round" => {
            arity(1)?;
            Ok(Expr::Round(Box::new(parse_expr(&args[0])?)))
        }
        other => Err(format!("unknown operator `{other}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_nested_prefix_arrays() {
        let v = json!(["+", ["*", 0.8, ["tanh", "X2"]], ["*", 0.3, "eps"]]);
        let e = parse_expr(&v).unwrap();
        let compiled = e.compile(&["X2".to_string()]).unwrap();
        let got = compiled.eval(&[1.0], 2.0);
        assert!((got - (0.8 * 1.0f64.tanh() + 0.6)).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_operators_and_bad_arity() {
        assert!(parse_expr(&json!(["sinh", 1.0])).is_err());
        assert!(parse_expr(&json!(["tanh"])).is_err());
        assert!(parse_expr(&json!(["pow", "X1", "X2"])).is_err());
        assert!(parse_expr(&json!(null)).is_err());
    }
}
