use super::{BackendKind, Lattice, SymplecticBackend};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Closed-form smooth functions in chart coordinates.
///
/// Tori use coordinates on the unit cube; the sphere uses (φ, ζ) and the
/// Cartesian components X, Y, Z of the unit embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FieldExpr {
    Constant(f64),
    /// cos(2π·freq·x_axis)
    Cos { axis: usize, freq: i32 },
    /// sin(2π·freq·x_axis)
    Sin { axis: usize, freq: i32 },
    SphereX,
    SphereY,
    SphereZ,
    Sum(Vec<FieldExpr>),
    Product(Vec<FieldExpr>),
    Scaled(f64, Box<FieldExpr>),
}

impl FieldExpr {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            FieldExpr::Constant(c) => *c,
            FieldExpr::Cos { axis, freq } => (2.0 * PI * *freq as f64 * p[*axis]).cos(),
            FieldExpr::Sin { axis, freq } => (2.0 * PI * *freq as f64 * p[*axis]).sin(),
            FieldExpr::SphereX => (1.0 - p[1] * p[1]).max(0.0).sqrt() * p[0].cos(),
            FieldExpr::SphereY => (1.0 - p[1] * p[1]).max(0.0).sqrt() * p[0].sin(),
            FieldExpr::SphereZ => p[1],
            FieldExpr::Sum(ts) => ts.iter().map(|t| t.eval(p)).sum(),
            FieldExpr::Product(ts) => ts.iter().map(|t| t.eval(p)).product(),
            FieldExpr::Scaled(c, t) => c * t.eval(p),
        }
    }

    /// Exact chart gradient.
    pub fn grad(&self, p: &[f64]) -> Vec<f64> {
        let d = p.len();
        let mut g = vec![0.0; d];
        match self {
            FieldExpr::Constant(_) => {}
            FieldExpr::Cos { axis, freq } => {
                let w = 2.0 * PI * *freq as f64;
                g[*axis] = -w * (w * p[*axis]).sin();
            }
            FieldExpr::Sin { axis, freq } => {
                let w = 2.0 * PI * *freq as f64;
                g[*axis] = w * (w * p[*axis]).cos();
            }
            FieldExpr::SphereX | FieldExpr::SphereY => {
                let r = (1.0 - p[1] * p[1]).max(1e-300).sqrt();
                let (s, c) = p[0].sin_cos();
                if *self == FieldExpr::SphereX {
                    g[0] = -r * s;
                    g[1] = -p[1] / r * c;
                } else {
                    g[0] = r * c;
                    g[1] = -p[1] / r * s;
                }
            }
            FieldExpr::SphereZ => g[1] = 1.0,
            FieldExpr::Sum(ts) => {
                for t in ts {
                    for (gi, ti) in g.iter_mut().zip(t.grad(p)) {
                        *gi += ti;
                    }
                }
            }
            FieldExpr::Product(ts) => {
                let vals: Vec<f64> = ts.iter().map(|t| t.eval(p)).collect();
                for (i, t) in ts.iter().enumerate() {
                    let others: f64 = vals.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).product();
                    for (gi, ti) in g.iter_mut().zip(t.grad(p)) {
                        *gi += others * ti;
                    }
                }
            }
            FieldExpr::Scaled(c, t) => {
                for (gi, ti) in g.iter_mut().zip(t.grad(p)) {
                    *gi = c * ti;
                }
            }
        }
        g
    }

    pub fn is_constant(&self) -> bool {
        match self {
            FieldExpr::Constant(_) => true,
            FieldExpr::Sum(ts) | FieldExpr::Product(ts) => ts.iter().all(|t| t.is_constant()),
            FieldExpr::Scaled(c, t) => *c == 0.0 || t.is_constant(),
            _ => false,
        }
    }

    pub fn describe(&self) -> String {
        const AXES: [&str; 4] = ["x1", "y1", "x2", "y2"];
        match self {
            FieldExpr::Constant(c) => format!("{c}"),
            FieldExpr::Cos { axis, freq } => format!("cos({}pi*{})", 2 * freq, AXES[*axis]),
            FieldExpr::Sin { axis, freq } => format!("sin({}pi*{})", 2 * freq, AXES[*axis]),
            FieldExpr::SphereX => "X".into(),
            FieldExpr::SphereY => "Y".into(),
            FieldExpr::SphereZ => "Z".into(),
            FieldExpr::Sum(ts) => ts.iter().map(|t| t.describe()).collect::<Vec<_>>().join(" + "),
            FieldExpr::Product(ts) => ts.iter().map(|t| t.describe()).collect::<Vec<_>>().join(" * "),
            FieldExpr::Scaled(c, t) => format!("{c} * {}", t.describe()),
        }
    }

    /// Parse the small grammar used in run configurations:
    /// sums of products of constants, `cos(2pi*x)`, `sin(4pi*y2)`, `X`, `Y`, `Z`.
    /// On the 2-torus `x`, `y` name the two axes; on the 4-torus `x1 y1 x2 y2`.
    pub fn parse(src: &str) -> Result<Self> {
        let compact: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(Error::Invalid("empty field expression".into()));
        }
        let terms = split_top(&compact, '+');
        let mut sum = Vec::new();
        for term in terms {
            let mut prod = Vec::new();
            for factor in split_top(term, '*') {
                prod.push(parse_factor(factor)?);
            }
            sum.push(if prod.len() == 1 { prod.pop().unwrap() } else { FieldExpr::Product(prod) });
        }
        Ok(if sum.len() == 1 { sum.pop().unwrap() } else { FieldExpr::Sum(sum) })
    }
}

fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_factor(f: &str) -> Result<FieldExpr> {
    match f {
        "X" => return Ok(FieldExpr::SphereX),
        "Y" => return Ok(FieldExpr::SphereY),
        "Z" => return Ok(FieldExpr::SphereZ),
        _ => {}
    }
    if let Ok(c) = f.parse::<f64>() {
        return Ok(FieldExpr::Constant(c));
    }
    let bad = || Error::Invalid(format!("cannot parse field factor `{f}`"));
    let (func, rest) = if let Some(r) = f.strip_prefix("cos(") {
        (0, r)
    } else if let Some(r) = f.strip_prefix("sin(") {
        (1, r)
    } else {
        return Err(bad());
    };
    let inner = rest.strip_suffix(')').ok_or_else(bad)?.replace('*', "");
    let pi = inner.find("pi").ok_or_else(bad)?;
    let mult: i32 = if pi == 0 { 1 } else { inner[..pi].parse().map_err(|_| bad())? };
    if mult % 2 != 0 {
        return Err(Error::Invalid(format!("`{f}` is not periodic on the unit torus")));
    }
    let axis = match &inner[pi + 2..] {
        "x" | "x1" => 0,
        "y" | "y1" => 1,
        "x2" => 2,
        "y2" => 3,
        _ => return Err(bad()),
    };
    let freq = mult / 2;
    Ok(if func == 0 { FieldExpr::Cos { axis, freq } } else { FieldExpr::Sin { axis, freq } })
}

/// Real function sampled at the backend sites.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub expr: Option<FieldExpr>,
}

impl ScalarField {
    pub fn from_expr(backend: &SymplecticBackend, expr: FieldExpr) -> Self {
        let values = (0..backend.sites()).map(|s| expr.eval(&backend.point(s))).collect();
        Self { values, expr: Some(expr) }
    }

    pub fn from_values(backend: &SymplecticBackend, values: Vec<f64>) -> Result<Self> {
        if values.len() != backend.sites() {
            return Err(Error::Mismatch(format!("{} values for {} sites", values.len(), backend.sites())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite field value".into()));
        }
        Ok(Self { values, expr: None })
    }

    pub fn constant(backend: &SymplecticBackend, c: f64) -> Self {
        Self::from_expr(backend, FieldExpr::Constant(c))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn product(&self, other: &ScalarField) -> ScalarField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        let expr = match (&self.expr, &other.expr) {
            (Some(a), Some(b)) => Some(FieldExpr::Product(vec![a.clone(), b.clone()])),
            _ => None,
        };
        ScalarField { values, expr }
    }

    pub fn shifted(&self, c: f64) -> ScalarField {
        ScalarField {
            values: self.values.iter().map(|v| v + c).collect(),
            expr: self.expr.clone().map(|e| FieldExpr::Sum(vec![e, FieldExpr::Constant(c)])),
        }
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        ScalarField {
            values: self.values.iter().map(|v| v * c).collect(),
            expr: self.expr.clone().map(|e| FieldExpr::Scaled(c, Box::new(e))),
        }
    }

    pub fn describe(&self) -> String {
        self.expr.as_ref().map(|e| e.describe()).unwrap_or_else(|| "sampled".into())
    }
}

/// {f,g} = Σ ∂_μf (ω⁻¹)^{μν} ∂_νg.
///
/// Centered differences on tori, exact chart gradients on the sphere. The sum
/// runs over μ < ν with (∂_μf∂_νg − ∂_νf∂_μg), so swapping f and g negates the
/// result bit for bit.
pub fn poisson_bracket(f: &ScalarField, g: &ScalarField, backend: &SymplecticBackend) -> Result<ScalarField> {
    let sites = backend.sites();
    if f.values.len() != sites || g.values.len() != sites {
        return Err(Error::Mismatch("fields live on a different backend".into()));
    }
    let winv = backend.omega_inverse();
    let d = backend.real_dim();
    let combine = |df: &[f64], dg: &[f64]| {
        let mut v = 0.0;
        for mu in 0..d {
            for nu in (mu + 1)..d {
                let w = winv[(mu, nu)];
                if w != 0.0 {
                    v += w * (df[mu] * dg[nu] - df[nu] * dg[mu]);
                }
            }
        }
        v
    };
    let values = match &backend.lattice {
        Lattice::Torus(grid) => {
            let diff = |vals: &[f64], s: usize| -> Vec<f64> {
                (0..d)
                    .map(|mu| (vals[grid.shift(s, mu, 1)] - vals[grid.shift(s, mu, -1)]) / (2.0 * grid.h))
                    .collect()
            };
            (0..sites).map(|s| combine(&diff(&f.values, s), &diff(&g.values, s))).collect()
        }
        Lattice::Sphere(_) => {
            let (fe, ge) = match (&f.expr, &g.expr) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Unsupported("sphere brackets need closed-form fields".into())),
            };
            (0..sites)
                .map(|s| {
                    let p = backend.point(s);
                    combine(&fe.grad(&p), &ge.grad(&p))
                })
                .collect()
        }
    };
    debug_assert!(backend.kind() == BackendKind::Sphere2 || backend.torus().is_some());
    Ok(ScalarField { values, expr: None })
}
