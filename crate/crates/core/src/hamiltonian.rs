//! Convex coercive Hamiltonians on the plane: analytic families, grid-backed
//! data, normalization and minimizer search.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{Rect, Vec2};
use crate::grid::GridField;
use crate::optim::golden_min;

/// Default working box for "for all p" statements.
pub const WORKING_BOX: f64 = 4.0;

/// Anything that can be evaluated pointwise as a convex function of `p`.
pub trait ConvexOracle: Sync {
    fn eval(&self, p: Vec2) -> f64;
}

impl<F: Fn(Vec2) -> f64 + Sync> ConvexOracle for F {
    fn eval(&self, p: Vec2) -> f64 {
        self(p)
    }
}

/// Grid data is evaluated by bilinear interpolation and is `+inf` outside the grid.
impl ConvexOracle for GridField {
    fn eval(&self, p: Vec2) -> f64 {
        self.interp(p).unwrap_or(f64::INFINITY)
    }
}

/// JSON family descriptor, e.g. `{"family":"power_norm","alpha":4,"power":1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyDescriptor {
    /// `coef |p - center|^2 + offset`.
    Quadratic {
        #[serde(default = "half")]
        coef: f64,
        #[serde(default)]
        center: Vec2,
        #[serde(default)]
        offset: f64,
    },
    /// `scale |p|_alpha^power`; `alpha` may be `"inf"`.
    PowerNorm {
        #[serde(with = "alpha_serde")]
        alpha: f64,
        #[serde(default = "one")]
        power: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Constant exactly on the segment `[a, b]`; `lambda` is the slope of the
    /// affine support that creates the flat edge.
    FlatEdge {
        a: Vec2,
        b: Vec2,
        #[serde(default = "one")]
        lambda: f64,
    },
    /// `p^T Q p / 2` with `Q` symmetric positive definite.
    Anisotropic { q: [[f64; 2]; 2] },
    /// Sampled values read from a grid CSV file.
    Grid { path: PathBuf },
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

mod alpha_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &f64, s: S) -> Result<S::Ok, S::Error> {
        if a.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*a)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Str(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                other => other.parse().map_err(de::Error::custom),
            },
        }
    }
}

/// Family tag carried by a built Hamiltonian, for reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Quadratic {
        coef: f64,
        center: Vec2,
        offset: f64,
    },
    PowerNorm {
        #[serde(with = "alpha_serde")]
        alpha: f64,
        power: f64,
        scale: f64,
    },
    FlatEdge {
        a: Vec2,
        b: Vec2,
        lambda: f64,
    },
    Anisotropic {
        q: [[f64; 2]; 2],
    },
    Grid {
        nx: usize,
        ny: usize,
        h: f64,
        origin: Vec2,
    },
    /// `(inner(p + shift) - base)^2`.
    Normalized {
        inner: Box<Family>,
        shift: Vec2,
        base: f64,
    },
}

#[derive(Clone, Debug)]
enum Kind {
    Quadratic {
        coef: f64,
        center: Vec2,
        offset: f64,
    },
    PowerNorm {
        alpha: f64,
        power: f64,
        scale: f64,
    },
    FlatEdge {
        mid: Vec2,
        normal: Vec2,
        half_len: f64,
        lambda: f64,
    },
    Anisotropic {
        q: [[f64; 2]; 2],
    },
    Grid {
        field: Arc<GridField>,
        outside_slope: f64,
    },
    Normalized {
        inner: Arc<Hamiltonian>,
        shift: Vec2,
        base: f64,
    },
}

/// A convex, coercive Hamiltonian exposed as an immutable evaluation oracle.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    kind: Kind,
    family: Family,
    minimizer: Vec2,
    min_value: f64,
    normalized: bool,
}

/// Result of [`find_minimum`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Minimum {
    pub point: Vec2,
    pub value: f64,
    /// Positional tolerance of the search.
    pub tol: f64,
}

impl ConvexOracle for Hamiltonian {
    #[inline]
    fn eval(&self, p: Vec2) -> f64 {
        Hamiltonian::eval(self, p)
    }
}

impl Hamiltonian {
    /// `|p|^2 / 2`.
    pub fn quadratic() -> Self {
        Self::quadratic_with(0.5, Vec2::ZERO, 0.0).expect("valid")
    }

    /// `coef |p - center|^2 + offset`.
    pub fn quadratic_with(coef: f64, center: Vec2, offset: f64) -> Result<Self> {
        build_hamiltonian(&FamilyDescriptor::Quadratic { coef, center, offset })
    }

    /// `scale |p|_alpha^power`.
    pub fn power_norm(alpha: f64, power: f64, scale: f64) -> Result<Self> {
        build_hamiltonian(&FamilyDescriptor::PowerNorm { alpha, power, scale })
    }

    pub fn flat_edge(a: Vec2, b: Vec2, lambda: f64) -> Result<Self> {
        build_hamiltonian(&FamilyDescriptor::FlatEdge { a, b, lambda })
    }

    pub fn anisotropic(q: [[f64; 2]; 2]) -> Result<Self> {
        build_hamiltonian(&FamilyDescriptor::Anisotropic { q })
    }

    /// Grid-backed Hamiltonian; the samples must be convex within `tol`.
    pub fn from_grid(field: GridField, tol: f64) -> Result<Self> {
        check_grid_convexity(&field, tol)?;
        let outside_slope = 2.0 * field.lipschitz_estimate() + 1.0;
        let family = Family::Grid {
            nx: field.nx(),
            ny: field.ny(),
            h: field.spacing(),
            origin: field.origin(),
        };
        let bounds = field.bounds();
        let mut h = Hamiltonian {
            kind: Kind::Grid {
                field: Arc::new(field),
                outside_slope,
            },
            family,
            minimizer: Vec2::ZERO,
            min_value: 0.0,
            normalized: false,
        };
        let m = find_minimum_unchecked(&h, bounds)?;
        h.minimizer = m.point;
        h.min_value = m.value;
        h.normalized = m.point.norm() <= 1e-12 && m.value.abs() <= 1e-12;
        Ok(h)
    }

    #[inline]
    pub fn eval(&self, p: Vec2) -> f64 {
        match &self.kind {
            Kind::Quadratic { coef, center, offset } => coef * (p - *center).norm_sq() + offset,
            Kind::PowerNorm { alpha, power, scale } => {
                let n = p.lp_norm(*alpha);
                if *power == 1.0 {
                    scale * n
                } else if *power == 2.0 {
                    scale * n * n
                } else {
                    scale * n.powf(*power)
                }
            }
            Kind::FlatEdge {
                mid,
                normal,
                half_len,
                lambda,
            } => {
                let d = p - *mid;
                let base = 0.5 * d.norm_sq();
                let support = 0.5 * half_len * half_len + lambda * normal.dot(d);
                base.max(support)
            }
            Kind::Anisotropic { q } => {
                0.5 * (q[0][0] * p.x * p.x + (q[0][1] + q[1][0]) * p.x * p.y + q[1][1] * p.y * p.y)
            }
            Kind::Grid { field, outside_slope } => match field.interp(p) {
                Some(v) => v,
                None => {
                    let c = field.bounds().clamp(p);
                    field.interp_clamped(c) + outside_slope * (p - c).norm()
                }
            },
            Kind::Normalized { inner, shift, base } => {
                let d = inner.eval(p + *shift) - base;
                d * d
            }
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn minimizer(&self) -> Vec2 {
        self.minimizer
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    /// True when `H(0) = 0 = min H` and `H` is superlinear.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// The tilt `p0` applied by normalization (zero otherwise). A field `u`
    /// for the original Hamiltonian corresponds to `u(x) - p0.x` for the
    /// normalized one.
    pub fn shift(&self) -> Vec2 {
        match &self.kind {
            Kind::Normalized { shift, .. } => *shift,
            _ => Vec2::ZERO,
        }
    }

    /// The un-normalized Hamiltonian, if this one was produced by normalization.
    pub fn inner(&self) -> Option<&Hamiltonian> {
        match &self.kind {
            Kind::Normalized { inner, .. } => Some(inner),
            _ => None,
        }
    }

    /// True when `H(p)` depends on `|p|` only.
    pub fn is_radial(&self) -> bool {
        match &self.kind {
            Kind::Quadratic { center, .. } => *center == Vec2::ZERO,
            Kind::PowerNorm { alpha, .. } => *alpha == 2.0,
            Kind::Normalized { inner, shift, .. } => *shift == Vec2::ZERO && inner.is_radial(),
            _ => false,
        }
    }

    /// Largest `r` along the unit direction `dir` from the minimizer with
    /// `H(p0 + r dir) <= k`, by bracketing and bisection.
    pub fn radial_level(&self, dir: Vec2, k: f64) -> f64 {
        let p0 = self.minimizer;
        if k <= self.min_value {
            return 0.0;
        }
        let g = |r: f64| self.eval(p0 + dir * r) - k;
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut g_hi = g(hi);
        while g_hi <= 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return hi;
            }
            g_hi = g(hi);
        }
        let mut g_lo = g(lo);
        // Illinois variant of regula falsi, falling back to bisection when
        // the secant point leaves the bracket.
        let mut side = 0;
        for _ in 0..200 {
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            let mut m = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
            if !(m > lo && m < hi) {
                m = 0.5 * (lo + hi);
                if m <= lo || m >= hi {
                    break;
                }
            }
            let gm = g(m);
            if gm <= 0.0 {
                lo = m;
                g_lo = gm;
                if gm.abs() <= 1e-15 * (1.0 + k.abs()) {
                    // On the level: close the bracket from above if possible.
                    let up = m + 8.0 * f64::EPSILON * m.max(1e-300);
                    if up < hi && g(up) > 0.0 {
                        return m;
                    }
                }
                if side == -1 {
                    g_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = m;
                g_hi = gm;
                if side == 1 {
                    g_lo *= 0.5;
                }
                side = 1;
            }
        }
        lo
    }

    /// Upper bound on `|p|` over `{H <= k}`.
    pub fn lipschitz_bound(&self, k: f64) -> f64 {
        const DIRS: usize = 256;
        let mut r = 0.0f64;
        for j in 0..DIRS {
            let d = Vec2::polar(std::f64::consts::TAU * j as f64 / DIRS as f64);
            r = r.max(self.radial_level(d, k));
        }
        // Inscribed polygon vertices underestimate the radius of a convex
        // set star-shaped about p0 by at most the factor cos(pi / DIRS).
        let slack = 1.0 / (std::f64::consts::PI / DIRS as f64).cos();
        self.minimizer.norm() + r * slack
    }
}

fn check_family(desc: &FamilyDescriptor) -> Result<()> {
    match *desc {
        FamilyDescriptor::Quadratic { coef, center, offset } => {
            if !(coef > 0.0 && coef.is_finite()) {
                return Err(invalid("coef", "must be positive"));
            }
            if !center.is_finite() || !offset.is_finite() {
                return Err(invalid("center/offset", "must be finite"));
            }
        }
        FamilyDescriptor::PowerNorm { alpha, power, scale } => {
            if !(alpha >= 1.0) {
                return Err(invalid("alpha", format!("must lie in [1, inf], got {alpha}")));
            }
            if !(power >= 1.0 && power.is_finite()) {
                return Err(invalid("power", format!("must be >= 1, got {power}")));
            }
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(invalid("scale", "must be positive"));
            }
        }
        FamilyDescriptor::FlatEdge { a, b, lambda } => {
            if !a.is_finite() || !b.is_finite() {
                return Err(invalid("a/b", "must be finite"));
            }
            if (b - a).norm() == 0.0 {
                return Err(invalid("b", "flat edge endpoints coincide (a = b)"));
            }
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(invalid("lambda", "must be positive"));
            }
        }
        FamilyDescriptor::Anisotropic { q } => {
            let sym = (q[0][1] - q[1][0]).abs() <= 1e-12 * (q[0][1].abs() + 1.0);
            let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
            if !sym || !(q[0][0] > 0.0) || !(det > 0.0) {
                return Err(invalid("q", "must be symmetric positive definite"));
            }
        }
        FamilyDescriptor::Grid { .. } => {}
    }
    Ok(())
}

/// Builds a Hamiltonian from a family descriptor. Grid descriptors read their
/// CSV file relative to the working directory.
pub fn build_hamiltonian(desc: &FamilyDescriptor) -> Result<Hamiltonian> {
    check_family(desc)?;
    let h = match desc.clone() {
        FamilyDescriptor::Quadratic { coef, center, offset } => Hamiltonian {
            kind: Kind::Quadratic { coef, center, offset },
            family: Family::Quadratic { coef, center, offset },
            minimizer: center,
            min_value: offset,
            normalized: center == Vec2::ZERO && offset == 0.0,
        },
        FamilyDescriptor::PowerNorm { alpha, power, scale } => Hamiltonian {
            kind: Kind::PowerNorm { alpha, power, scale },
            family: Family::PowerNorm { alpha, power, scale },
            minimizer: Vec2::ZERO,
            min_value: 0.0,
            normalized: power > 1.0,
        },
        FamilyDescriptor::FlatEdge { a, b, lambda } => {
            // H = max(|p - m|^2 / 2, l^2/2 + lambda n.(p - m)): the affine
            // support dominates exactly on a region containing [a, b], where
            // it is constant because n is perpendicular to b - a.
            let mid = (a + b) * 0.5;
            let dir = (b - a).normalized();
            let normal = Vec2::new(dir.y, -dir.x);
            let half_len = 0.5 * (b - a).norm();
            let tau = -lambda + lambda.hypot(half_len);
            Hamiltonian {
                kind: Kind::FlatEdge {
                    mid,
                    normal,
                    half_len,
                    lambda,
                },
                family: Family::FlatEdge { a, b, lambda },
                minimizer: mid - normal * tau,
                min_value: 0.5 * tau * tau,
                normalized: false,
            }
        }
        FamilyDescriptor::Anisotropic { q } => Hamiltonian {
            kind: Kind::Anisotropic { q },
            family: Family::Anisotropic { q },
            minimizer: Vec2::ZERO,
            min_value: 0.0,
            normalized: true,
        },
        FamilyDescriptor::Grid { path } => {
            let field = GridField::read_csv(&path)?;
            return Hamiltonian::from_grid(field, 1e-9);
        }
    };
    Ok(h)
}

/// Rejects grid samples that violate midpoint convexity along rows, columns
/// and both diagonals by more than `tol`.
pub fn check_grid_convexity(field: &GridField, tol: f64) -> Result<()> {
    let (nx, ny) = (field.nx() as isize, field.ny() as isize);
    let scale = field.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for (di, dj) in [(1isize, 0isize), (0, 1), (1, 1), (1, -1)] {
        for j in 0..ny {
            for i in 0..nx {
                let (il, jl, ir, jr) = (i - di, j - dj, i + di, j + dj);
                if il < 0 || jl < 0 || ir >= nx || jr >= ny || jl >= ny || jr < 0 {
                    continue;
                }
                let at = |a: isize, b: isize| field.at(a as usize, b as usize);
                let excess = at(i, j) - 0.5 * (at(il, jl) + at(ir, jr));
                if excess > tol * scale {
                    return Err(Error::NonConvexGrid {
                        left: field.point(il as usize, jl as usize),
                        center: field.point(i as usize, j as usize),
                        right: field.point(ir as usize, jr as usize),
                        excess,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Minimizes `H` over `search_box` by nested golden-section search: the
/// partial minimum `x -> min_y H(x, y)` of a convex function is convex, so
/// both levels are unimodal. A coarse scan guards against non-convex input.
pub fn find_minimum(h: &Hamiltonian, search_box: Rect) -> Result<Minimum> {
    find_minimum_unchecked(h, search_box)
}

fn find_minimum_unchecked<F: ConvexOracle + ?Sized>(h: &F, search_box: Rect) -> Result<Minimum> {
    const SCAN: usize = 41;
    let diam = search_box.diameter();
    let mut scan_best = search_box.min;
    let mut scan_v = f64::INFINITY;
    for j in 0..SCAN {
        for i in 0..SCAN {
            let p = search_box.min
                + Vec2::new(
                    search_box.width() * i as f64 / (SCAN - 1) as f64,
                    search_box.height() * j as f64 / (SCAN - 1) as f64,
                );
            let v = h.eval(p);
            if v < scan_v {
                scan_v = v;
                scan_best = p;
            }
        }
    }
    let tol = 1e-13 * (1.0 + diam);
    let (ymin, ymax) = (search_box.min.y, search_box.max.y);
    let inner = |x: f64| golden_min(|y| h.eval(Vec2::new(x, y)), ymin, ymax, tol);
    let (x, _) = golden_min(|x| inner(x).1, search_box.min.x, search_box.max.x, tol);
    let (y, v) = inner(x);
    let best = Vec2::new(x, y);
    if !v.is_finite() || v > scan_v + 1e-9 * (1.0 + scan_v.abs()) {
        return Err(Error::MinimizerNotConverged {
            best: if v.is_finite() { best } else { scan_best },
            value: v.min(scan_v),
        });
    }
    let margin = 1e-9 * (1.0 + diam);
    if search_box.inner_distance(best) <= margin {
        return Err(Error::MinimumOnBoundary { at: best });
    }
    Ok(Minimum {
        point: best,
        value: v,
        tol,
    })
}

/// `H~(p) = (H(p + p0) - H(p0))^2`, which satisfies `H~(0) = 0 = min` and
/// superlinear growth while keeping the level-set geometry of `H`.
/// Already-normalized input is returned unchanged.
pub fn normalize_hamiltonian(h: &Hamiltonian) -> Result<Hamiltonian> {
    if h.normalized {
        return Ok(h.clone());
    }
    let (p0, base) = match h.family {
        Family::Grid { .. } => (h.minimizer, h.min_value),
        Family::Quadratic { .. } | Family::PowerNorm { .. } | Family::FlatEdge { .. } | Family::Anisotropic { .. } => {
            (h.minimizer, h.min_value)
        }
        Family::Normalized { .. } => unreachable!("normalized Hamiltonians carry the flag"),
    };
    // Cross-check the recorded minimizer with the search on the working box.
    let mut search = Rect::centered(WORKING_BOX.max(2.0 * p0.norm() + 1.0));
    let found = loop {
        match find_minimum(h, search) {
            Ok(m) => break m,
            Err(Error::MinimumOnBoundary { .. }) if search.width() < 1e6 => search = search.scaled(2.0),
            Err(e) => return Err(e),
        }
    };
    let (p0, base) = if found.value < base - 1e-12 * (1.0 + base.abs()) {
        (found.point, found.value)
    } else {
        (p0, base)
    };
    Ok(Hamiltonian {
        family: Family::Normalized {
            inner: Box::new(h.family.clone()),
            shift: p0,
            base,
        },
        kind: Kind::Normalized {
            inner: Arc::new(h.clone()),
            shift: p0,
            base,
        },
        minimizer: Vec2::ZERO,
        min_value: 0.0,
        normalized: true,
    })
}
