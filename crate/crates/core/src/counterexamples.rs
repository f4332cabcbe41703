//! The flat-Hamiltonian counterexample family
//! `u_f(x) = (a + b)/2 . x + f((b - a)/2 . x)`, the Preiss profile and the
//! Aronsson benchmark field.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom::{Rect, Vec2};
use crate::grid::GridField;

const LOG_LO: f64 = 1e-6;
const LOG_HI: f64 = 1.0 - 1e-6;

/// `s sin(log|log|s||)` with `w(0) = 0` and `|s|` clamped into
/// `[1e-6, 1 - 1e-6]` inside the logarithms.
pub fn preiss_w(s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let a = s.abs().clamp(LOG_LO, LOG_HI);
    s * a.ln().abs().ln().sin()
}

/// End of the range where `w/2` is 1-Lipschitz: `|w'| <= 1 + 1/|log s|`.
const SIN_LOG_EDGE: f64 = 1.0 / std::f64::consts::E;

/// A 1-Lipschitz profile `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Abs,
    /// `w(s)/2` on `|s| <= 1/e`, constant beyond.
    SinLog,
    /// Piecewise linear through sorted knots `(s, f(s))`, constant outside.
    Custom { knots: Vec<(f64, f64)> },
}

impl Profile {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Profile::Abs => s.abs(),
            Profile::SinLog => 0.5 * preiss_w(s.clamp(-SIN_LOG_EDGE, SIN_LOG_EDGE)),
            Profile::Custom { knots } => {
                let (first, last) = (knots[0], knots[knots.len() - 1]);
                if s <= first.0 {
                    return first.1;
                }
                if s >= last.0 {
                    return last.1;
                }
                let k = knots.partition_point(|&(x, _)| x <= s).max(1);
                let ((x0, y0), (x1, y1)) = (knots[k - 1], knots[k]);
                y0 + (y1 - y0) * (s - x0) / (x1 - x0)
            }
        }
    }

    /// Points where `f` is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Profile::Abs => vec![0.0],
            Profile::SinLog => vec![-SIN_LOG_EDGE, 0.0, SIN_LOG_EDGE],
            Profile::Custom { knots } => {
                let slope = |k: usize| (knots[k + 1].1 - knots[k].1) / (knots[k + 1].0 - knots[k].0);
                let mut out = Vec::new();
                if slope(0) != 0.0 {
                    out.push(knots[0].0);
                }
                for k in 1..knots.len() - 1 {
                    if slope(k - 1) != slope(k) {
                        out.push(knots[k].0);
                    }
                }
                if slope(knots.len() - 2) != 0.0 {
                    out.push(knots[knots.len() - 1].0);
                }
                out
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Profile::Custom { knots } = self {
            if knots.len() < 2 {
                return Err(invalid("f.knots", "need at least two knots"));
            }
            for w in knots.windows(2) {
                let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                if !(x1 > x0) || !y0.is_finite() || !y1.is_finite() {
                    return Err(invalid("f.knots", "abscissae must be finite and strictly increasing"));
                }
                let slope = (y1 - y0) / (x1 - x0);
                if slope.abs() > 1.0 + 1e-12 {
                    return Err(invalid("f.knots", format!("slope {slope} on [{x0}, {x1}] exceeds 1")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSpec {
    pub a: Vec2,
    pub b: Vec2,
    pub f: Profile,
}

impl CounterexampleSpec {
    pub fn new(a: Vec2, b: Vec2, f: Profile) -> Result<Self> {
        let spec = CounterexampleSpec { a, b, f };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(invalid("a/b", "must be finite"));
        }
        if (self.b - self.a).norm() == 0.0 {
            return Err(invalid("b", "segment endpoints coincide (a = b)"));
        }
        self.f.validate()
    }

    /// `|b - a|`.
    pub fn lambda0(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        ((self.a + self.b) * 0.5).dot(x) + self.f.eval(((self.b - self.a) * 0.5).dot(x))
    }

    /// The crease lines `{x : (b - a)/2 . x = s}` over the kinks `s` of `f`.
    pub fn creases(&self) -> Vec<CreaseLine> {
        let normal = (self.b - self.a) * 0.5;
        self.f.kinks().into_iter().map(|offset| CreaseLine { normal, offset }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreaseLine {
    pub normal: Vec2,
    pub offset: f64,
}

impl CreaseLine {
    pub fn distance(&self, x: Vec2) -> f64 {
        (self.normal.dot(x) - self.offset).abs() / self.normal.norm()
    }

    /// The point of the line closest to `x`.
    pub fn project(&self, x: Vec2) -> Vec2 {
        let n2 = self.normal.norm_sq();
        x - self.normal * ((self.normal.dot(x) - self.offset) / n2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleField {
    pub spec: CounterexampleSpec,
    pub field: GridField,
    pub creases: Vec<CreaseLine>,
}

impl CounterexampleField {
    pub fn distance_to_crease(&self, x: Vec2) -> f64 {
        self.creases.iter().map(|c| c.distance(x)).fold(f64::INFINITY, f64::min)
    }
}

/// Samples `u_f` on the grid covering `bounds` with `n` nodes along x.
pub fn build_uf(spec: &CounterexampleSpec, bounds: Rect, n: usize) -> Result<CounterexampleField> {
    spec.validate()?;
    let field = GridField::covering(bounds, n, |x| spec.eval(x))?;
    Ok(CounterexampleField {
        spec: spec.clone(),
        field,
        creases: spec.creases(),
    })
}

/// `w(x1)` lifted to the plane.
pub fn preiss_profile(bounds: Rect, n: usize) -> Result<GridField> {
    GridField::covering(bounds, n, |x| preiss_w(x.x))
}

pub fn aronsson(x: Vec2) -> f64 {
    x.x.abs().powf(4.0 / 3.0) - x.y.abs().powf(4.0 / 3.0)
}

/// `|x1|^(4/3) - |x2|^(4/3)`.
pub fn aronsson_exact(bounds: Rect, n: usize) -> Result<GridField> {
    GridField::covering(bounds, n, aronsson)
}
