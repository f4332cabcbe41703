//! Boundary data given on the command line: a named preset or an arithmetic
//! expression in `x1, x2` (aliases `x, y`).

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use hamcalc::counterexamples::aronsson;
use hamcalc::Vec2;

use crate::error::CliError;

pub enum BoundaryData {
    Aronsson,
    Expr(Node<DefaultNumericTypes>),
}

impl BoundaryData {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim() == "aronsson" {
            return Ok(BoundaryData::Aronsson);
        }
        let node = build_operator_tree::<DefaultNumericTypes>(&float_literals(text))
            .map_err(|e| CliError::usage("g", format!("cannot parse `{text}`: {e}")))?;
        let b = BoundaryData::Expr(node);
        b.try_eval(Vec2::new(0.25, -0.5))?;
        Ok(b)
    }

    fn try_eval(&self, x: Vec2) -> Result<f64, CliError> {
        match self {
            BoundaryData::Aronsson => Ok(aronsson(x)),
            BoundaryData::Expr(node) => {
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                for (names, v) in [(["x1", "x"], x.x), (["x2", "y"], x.y)] {
                    for name in names {
                        ctx.set_value(name.into(), Value::Float(v))
                            .map_err(|e| CliError::usage("g", e.to_string()))?;
                    }
                }
                node.eval_number_with_context(&ctx)
                    .map_err(|e| CliError::usage("g", format!("evaluation failed at {x:?}: {e}")))
            }
        }
    }

    /// Evaluation after a successful probe in [`BoundaryData::parse`]; errors
    /// elsewhere (say a domain error of `math::ln`) become NaN.
    pub fn eval(&self, x: Vec2) -> f64 {
        self.try_eval(x).unwrap_or(f64::NAN)
    }
}

/// Rewrites integer literals as floats so that `4/3` means 1.333... rather
/// than integer division.
fn float_literals(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts_number =
            c.is_ascii_digit() && (i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.'));
        if !starts_number {
            out.push(c);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
            i += 1;
        }
        let mut is_float = chars[start..i].contains(&'.');
        if matches!(chars.get(i), Some('e' | 'E')) {
            is_float = true;
            i += 1;
            if matches!(chars.get(i), Some('+' | '-')) {
                i += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
        }
        out.extend(&chars[start..i]);
        if !is_float {
            out.push_str(".0");
        }
    }
    out
}
