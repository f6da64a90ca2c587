//! Spatial domains, time grids and velocity fields.
//!
//! Fields are immutable after construction and evaluation is a pure function
//! of `(t, x)`, so a single [`VelocityField`] can be shared by any number of
//! workers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{dot, norm};

/// Relative tolerance used to decide whether a coordinate sits on a face.
const FACE_EPS: f64 = 1e-12;

/// Closed axis-aligned box `∏ [lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SpatialDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Config(format!(
                "domain bounds must be nonempty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "domain axis {i}: need lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(xi, (lo, hi))| *lo <= *xi && *xi <= *hi)
    }

    pub fn diameter(&self) -> f64 {
        let d: Vec<f64> = self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect();
        norm(&d)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Euclidean projection onto the box.
    pub fn clamp(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Euclidean distance from `x` to the box.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let e = if *xi < self.lower[i] {
                self.lower[i] - xi
            } else if *xi > self.upper[i] {
                xi - self.upper[i]
            } else {
                0.0
            };
            s += e * e;
        }
        libm::sqrt(s)
    }

    pub(crate) fn on_lower_face(&self, x: &[f64], i: usize) -> bool {
        x[i] <= self.lower[i] + FACE_EPS * (self.upper[i] - self.lower[i])
    }

    pub(crate) fn on_upper_face(&self, x: &[f64], i: usize) -> bool {
        x[i] >= self.upper[i] - FACE_EPS * (self.upper[i] - self.lower[i])
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Argument(format!(
                "point has dimension {}, domain has {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.contains(x) {
            return Err(Error::Domain(format!("point {x:?} outside the spatial domain")));
        }
        Ok(())
    }
}

/// Strictly increasing time nodes `t_start = nodes[0] < … < nodes[n] = t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("time grid needs n_steps >= 1".into()));
        }
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::Config(format!(
                "time grid needs t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        let h = (t_end - t_start) / n_steps as f64;
        let mut nodes: Vec<f64> = (0..=n_steps).map(|k| t_start + k as f64 * h).collect();
        nodes[n_steps] = t_end;
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Config("time grid needs at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) || nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("time grid nodes must be finite and strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t_start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t_end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Step length of cell `k` (between nodes `k` and `k+1`).
    pub fn dt(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn max_dt(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the node equal to `t` up to a relative tolerance of 1e-9 of
    /// the smallest step.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let i = self.nodes.partition_point(|&n| n < t - tol);
        (i < self.nodes.len() && libm::fabs(self.nodes[i] - t) <= tol).then_some(i)
    }
}

/// A hyperplane `{z : normal·z = offset}` across which a field may jump.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn level(&self, z: &[f64]) -> f64 {
        dot(&self.normal, z) - self.offset
    }

    /// Orthogonal projection of `z` onto the plane; exact for axis normals.
    pub fn project(&self, z: &mut [f64]) {
        let nn = dot(&self.normal, &self.normal);
        let axis = self.normal.iter().filter(|v| **v != 0.0).count() == 1;
        if axis {
            let i = self.normal.iter().position(|v| *v != 0.0).unwrap_or(0);
            z[i] = self.offset / self.normal[i];
        } else {
            let s = self.level(z) / nn;
            for (zi, ni) in z.iter_mut().zip(&self.normal) {
                *zi -= s * ni;
            }
        }
    }
}

/// Multilinear interpolant of vector samples on a regular grid over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    shape: Vec<usize>,
    /// Samples in row-major order over `shape`, `dim` components each.
    values: Vec<f64>,
}

impl GridField {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let d = shape.len();
        if d == 0 || shape.iter().any(|&n| n < 2) {
            return Err(Error::Config("grid field needs at least two samples per axis".into()));
        }
        let count: usize = shape.iter().product();
        if values.len() != count * d {
            return Err(Error::Config(format!(
                "grid field expects {} values, got {}",
                count * d,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid field values must be finite".into()));
        }
        Ok(Self { shape, values })
    }

    fn eval(&self, domain: &SpatialDomain, x: &[f64], out: &mut [f64]) {
        let d = self.shape.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for i in 0..d {
            let n = self.shape[i];
            let h = (domain.upper()[i] - domain.lower()[i]) / (n - 1) as f64;
            let s = ((x[i] - domain.lower()[i]) / h).clamp(0.0, (n - 1) as f64);
            let b = (libm::floor(s) as usize).min(n - 2);
            base[i] = b;
            frac[i] = s - b as f64;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for i in 0..d {
                let bit = (corner >> i) & 1;
                w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
                flat = flat * self.shape[i] + base[i] + bit;
            }
            if w == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.values[flat * d + c];
            }
        }
    }
}

/// Velocity field families.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    /// `b ≡ v`.
    Constant(Vec<f64>),
    /// `b(x) = 2 sqrt(max(x, 0))`, 1-D.
    Sqrt,
    /// `b = +1` for `x <= 0`, `-1` for `x > 0`, 1-D.
    Sign1d,
    /// `b = -sign(x)` with `sign(0) = 0`, 1-D.
    CompressiveSign,
    /// `b(x) = ω (-x_2, x_1)`.
    Rotating2d { omega: f64 },
    /// The compressive sign field convolved with the box kernel of half width
    /// `eps`: `b(x) = -clamp(x/eps, -1, 1)`.
    MollifiedSign { eps: f64 },
    /// `b(x) = a x`.
    Linear { a: f64 },
    /// `b(x) = a x^2`, 1-D.
    Square { a: f64 },
    /// Multilinear interpolation of grid samples.
    Grid(GridField),
}

/// A velocity field `b(t, x)` over a spatial domain with a declared
/// linear-growth constant.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    kind: FieldKind,
    domain: SpatialDomain,
    growth_c: f64,
    id: String,
    params: Vec<f64>,
}

pub const REGISTRY_IDS: &[&str] = &[
    "constant",
    "sqrt",
    "sign1d",
    "compressive-sign",
    "rotating-2d",
    "mollified-sign",
    "linear",
    "square",
];

impl VelocityField {
    /// Builds a field from its registry id and parameter vector.
    pub fn from_registry(
        id: &str,
        params: &[f64],
        growth_c: f64,
        domain: SpatialDomain,
    ) -> Result<Self> {
        let d = domain.dim();
        let need_1d = |name: &str| -> Result<()> {
            if d != 1 {
                return Err(Error::Config(format!("field `{name}` is one-dimensional, domain has dim {d}")));
            }
            Ok(())
        };
        let param = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
        let kind = match id {
            "constant" => {
                if params.len() != d {
                    return Err(Error::Config(format!(
                        "field `constant` needs {d} params (the velocity), got {}",
                        params.len()
                    )));
                }
                FieldKind::Constant(params.to_vec())
            }
            "sqrt" => {
                need_1d(id)?;
                FieldKind::Sqrt
            }
            "sign1d" => {
                need_1d(id)?;
                FieldKind::Sign1d
            }
            "compressive-sign" => {
                need_1d(id)?;
                FieldKind::CompressiveSign
            }
            "rotating-2d" => {
                if d != 2 {
                    return Err(Error::Config(format!("field `rotating-2d` needs dim 2, got {d}")));
                }
                FieldKind::Rotating2d { omega: param(0, 1.0) }
            }
            "mollified-sign" => {
                need_1d(id)?;
                let eps = param(0, f64::NAN);
                if !(eps > 0.0) {
                    return Err(Error::Config("field `mollified-sign` needs params = [eps > 0]".into()));
                }
                FieldKind::MollifiedSign { eps }
            }
            "linear" => FieldKind::Linear { a: param(0, 1.0) },
            "square" => {
                need_1d(id)?;
                FieldKind::Square { a: param(0, 1.0) }
            }
            other => return Err(Error::Config(format!("unknown field registry id `{other}`"))),
        };
        if let FieldKind::Linear { a } | FieldKind::Square { a } | FieldKind::Rotating2d { omega: a } = kind {
            if !a.is_finite() {
                return Err(Error::Config(format!("field `{id}` parameter must be finite")));
            }
        }
        Self::new(kind, growth_c, domain).map(|mut f| {
            f.id = id.into();
            f.params = params.to_vec();
            f
        })
    }

    pub fn new(kind: FieldKind, growth_c: f64, domain: SpatialDomain) -> Result<Self> {
        if !(growth_c >= 0.0 && growth_c.is_finite()) {
            return Err(Error::Config(format!("growth_c must be finite and >= 0, got {growth_c}")));
        }
        if let FieldKind::Constant(v) = &kind {
            if v.len() != domain.dim() || v.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config("constant field velocity must match the domain dimension".into()));
            }
        }
        if let FieldKind::Grid(g) = &kind {
            if g.shape.len() != domain.dim() {
                return Err(Error::Config("grid field dimension must match the domain".into()));
            }
        }
        let id = match &kind {
            FieldKind::Constant(_) => "constant",
            FieldKind::Sqrt => "sqrt",
            FieldKind::Sign1d => "sign1d",
            FieldKind::CompressiveSign => "compressive-sign",
            FieldKind::Rotating2d { .. } => "rotating-2d",
            FieldKind::MollifiedSign { .. } => "mollified-sign",
            FieldKind::Linear { .. } => "linear",
            FieldKind::Square { .. } => "square",
            FieldKind::Grid(_) => "grid",
        };
        Ok(Self { kind, domain, growth_c, id: id.into(), params: Vec::new() })
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn domain(&self) -> &SpatialDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn growth_c(&self) -> f64 {
        self.growth_c
    }

    /// Evaluates `b(t, x)` into `out`.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.domain.check(x)?;
        self.eval_unchecked(t, x, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite velocity at t={t}, x={x:?}")));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, x, &mut out)?;
        Ok(out)
    }

    pub(crate) fn eval_unchecked(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            FieldKind::Constant(v) => out.copy_from_slice(v),
            FieldKind::Sqrt => out[0] = 2.0 * libm::sqrt(x[0].max(0.0)),
            FieldKind::Sign1d => out[0] = if x[0] <= 0.0 { 1.0 } else { -1.0 },
            FieldKind::CompressiveSign => {
                out[0] = if x[0] > 0.0 {
                    -1.0
                } else if x[0] < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            FieldKind::Rotating2d { omega } => {
                out[0] = -omega * x[1];
                out[1] = omega * x[0];
            }
            FieldKind::MollifiedSign { eps } => out[0] = -(x[0] / eps).clamp(-1.0, 1.0),
            FieldKind::Linear { a } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = a * xi;
                }
            }
            FieldKind::Square { a } => out[0] = a * x[0] * x[0],
            FieldKind::Grid(g) => g.eval(&self.domain, x, out),
        }
    }

    /// Registered discontinuity surfaces of the field.
    pub fn discontinuities(&self) -> Vec<Hyperplane> {
        match self.kind {
            FieldKind::Sign1d | FieldKind::CompressiveSign => {
                vec![Hyperplane { normal: vec![1.0], offset: 0.0 }]
            }
            _ => Vec::new(),
        }
    }

    /// Closed-form essential supremum of `xi·b(t, ·)` over `B_delta(x) ∩ Ω`,
    /// when the family admits one.
    pub fn exact_support(&self, t: f64, x: &[f64], xi: &[f64], delta: f64) -> Option<f64> {
        if let FieldKind::Constant(v) = &self.kind {
            return Some(dot(xi, v));
        }
        if self.dim() != 1 {
            return None;
        }
        let a = (x[0] - delta).max(self.domain.lower()[0]);
        let b = (x[0] + delta).min(self.domain.upper()[0]);
        let s = xi[0];
        let eval = |z: f64| {
            let mut o = [0.0];
            self.eval_unchecked(t, &[z], &mut o);
            s * o[0]
        };
        match self.kind {
            FieldKind::Sign1d | FieldKind::CompressiveSign => {
                // +1 on the part of the ball left of 0, -1 on the part right of 0
                let has_left = a < 0.0;
                let has_right = b > 0.0;
                let mut best = f64::NEG_INFINITY;
                if has_left {
                    best = best.max(s);
                }
                if has_right {
                    best = best.max(-s);
                }
                Some(best)
            }
            FieldKind::Sqrt | FieldKind::MollifiedSign { .. } | FieldKind::Linear { .. } => {
                Some(eval(a).max(eval(b)))
            }
            FieldKind::Square { .. } => {
                let mut best = eval(a).max(eval(b));
                if a < 0.0 && b > 0.0 {
                    best = best.max(eval(0.0));
                }
                Some(best)
            }
            _ => None,
        }
    }
}

/// Report of the admissibility diagnostics of a field on a sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldDiagnostics {
    pub growth_violations: usize,
    pub osl_modulus_estimate: f64,
    pub tangent_violations: usize,
}

/// Evaluates the field; out-of-domain points are a domain error.
pub fn eval_velocity(field: &VelocityField, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    field.eval(t, x)
}

/// True iff `v` lies in the tangent cone of the box at `x`.
pub fn tangent_cone_admissible(domain: &SpatialDomain, x: &[f64], v: &[f64], tol: f64) -> Result<bool> {
    domain.check(x)?;
    for i in 0..domain.dim() {
        if domain.on_lower_face(x, i) && v[i] < -tol {
            return Ok(false);
        }
        if domain.on_upper_face(x, i) && v[i] > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Zeroes the outward components of `v` on the faces active at `x`.
pub fn clamp_to_tangent_cone(domain: &SpatialDomain, x: &[f64], v: &mut [f64]) {
    for i in 0..domain.dim() {
        if domain.on_lower_face(x, i) && v[i] < 0.0 {
            v[i] = 0.0;
        }
        if domain.on_upper_face(x, i) && v[i] > 0.0 {
            v[i] = 0.0;
        }
    }
}

/// Counts samples violating `|b(t,x)| <= growth_c (1 + |x|)`.
pub fn check_growth(field: &VelocityField, samples: &[(f64, Vec<f64>)]) -> Result<FieldDiagnostics> {
    if samples.is_empty() {
        return Err(Error::Argument("check_growth needs at least one sample".into()));
    }
    let mut out = vec![0.0; field.dim()];
    let mut violations = 0;
    let mut tangent_violations = 0;
    for (t, x) in samples {
        field.eval_into(*t, x, &mut out)?;
        let bound = field.growth_c() * (1.0 + norm(x));
        if norm(&out) > bound * (1.0 + 1e-12) + 1e-300 {
            violations += 1;
        }
        if !tangent_cone_admissible(field.domain(), x, &out, 0.0)? {
            tangent_violations += 1;
        }
    }
    Ok(FieldDiagnostics {
        growth_violations: violations,
        osl_modulus_estimate: f64::NAN,
        tangent_violations,
    })
}

/// Largest one-sided Lipschitz quotient `⟨b(y)-b(x), y-x⟩ / |y-x|^2` over the pairs.
pub fn estimate_osl_modulus(field: &VelocityField, t: f64, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for (x, y) in pairs {
        let dx: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let n2 = dot(&dx, &dx);
        if n2 == 0.0 {
            return Err(Error::Argument(format!("coincident pair {x:?}")));
        }
        let bx = field.eval(t, x)?;
        let by = field.eval(t, y)?;
        let db: Vec<f64> = by.iter().zip(&bx).map(|(a, b)| a - b).collect();
        best = best.max(dot(&db, &dx) / n2);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(lo: f64, hi: f64) -> SpatialDomain {
        SpatialDomain::interval(lo, hi).unwrap()
    }

    #[test]
    fn registry_examples() {
        let d2 = SpatialDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let c = VelocityField::from_registry("constant", &[1.0, 0.0], 1.0, d2).unwrap();
        assert_eq!(c.eval(0.3, &[0.2, -0.5]).unwrap(), vec![1.0, 0.0]);

        let s = VelocityField::from_registry("sign1d", &[], 1.0, line(-1.0, 1.0)).unwrap();
        assert_eq!(s.eval(0.0, &[0.0]).unwrap(), vec![1.0]);
        assert_eq!(s.eval(0.0, &[0.5]).unwrap(), vec![-1.0]);

        let q = VelocityField::from_registry("sqrt", &[], 1.0, line(-4.0, 4.0)).unwrap();
        assert_eq!(q.eval(0.0, &[4.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn eval_errors() {
        let s = VelocityField::from_registry("sign1d", &[], 1.0, line(-1.0, 1.0)).unwrap();
        assert!(matches!(s.eval(0.0, &[1.5]), Err(Error::Domain(_))));
        let e = VelocityField::from_registry("warp-drive", &[], 1.0, line(-1.0, 1.0)).unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn tangent_cone_cases() {
        let d = SpatialDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(tangent_cone_admissible(&d, &[0.5, 0.5], &[-7.0, 3.0], 0.0).unwrap());
        assert!(!tangent_cone_admissible(&d, &[1.0, 0.5], &[1.0, 0.0], 1e-12).unwrap());
        assert!(tangent_cone_admissible(&d, &[0.0, 0.0], &[1.0, 1.0], 0.0).unwrap());
        assert!(tangent_cone_admissible(&d, &[2.0, 0.0], &[1.0, 1.0], 0.0).is_err());
    }

    /// liminf over λ = 2^-k of d(x + λv, Ω)/λ; zero iff v is tangent.
    fn tangent_oracle(d: &SpatialDomain, x: &[f64], v: &[f64]) -> f64 {
        (10..40)
            .map(|k| {
                let lam = libm::ldexp(1.0, -k);
                let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + lam * b).collect();
                d.distance(&y) / lam
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn tangent_cone_matches_distance_oracle() {
        let d = SpatialDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let points = [[0.0, 0.0], [1.0, 0.0], [0.3, 1.0], [0.5, 0.5], [1.0, 1.0]];
        let dirs = [[1.0, 1.0], [-1.0, 0.0], [0.0, 1.0], [1.0, -0.5], [-0.2, -0.3]];
        for x in &points {
            for v in &dirs {
                let oracle = tangent_oracle(&d, x, v) < 1e-9;
                assert_eq!(tangent_cone_admissible(&d, x, v, 0.0).unwrap(), oracle, "x={x:?} v={v:?}");
            }
            assert!(tangent_cone_admissible(&d, x, &[0.0, 0.0], 0.0).unwrap());
        }
    }

    #[test]
    fn growth_examples() {
        let dom = line(-1.0, 4.0);
        let c = VelocityField::from_registry("constant", &[2.5], 2.5, dom.clone()).unwrap();
        let samples: Vec<(f64, Vec<f64>)> = (0..50).map(|i| (0.0, vec![-1.0 + 0.1 * i as f64])).collect();
        assert_eq!(check_growth(&c, &samples).unwrap().growth_violations, 0);

        let s = VelocityField::from_registry("sign1d", &[], 1.0, line(-1.0, 1.0)).unwrap();
        let samples: Vec<(f64, Vec<f64>)> = (0..=20).map(|i| (0.0, vec![-1.0 + 0.1 * i as f64])).collect();
        assert_eq!(check_growth(&s, &samples).unwrap().growth_violations, 0);

        let q = VelocityField::from_registry("square", &[1.0], 1.0, dom).unwrap();
        let d = check_growth(&q, &[(0.0, vec![3.0]), (0.0, vec![0.5])]).unwrap();
        assert!(d.growth_violations >= 1);
        assert!(check_growth(&q, &[]).is_err());
    }

    #[test]
    fn osl_examples() {
        let dom = line(-1.0, 1.0);
        let lin = VelocityField::from_registry("linear", &[-1.0], 1.0, dom.clone()).unwrap();
        let pairs = vec![(vec![-0.3], vec![0.9]), (vec![0.1], vec![0.2])];
        assert!((estimate_osl_modulus(&lin, 0.0, &pairs).unwrap() + 1.0).abs() < 1e-14);

        let cs = VelocityField::from_registry("compressive-sign", &[], 1.0, dom.clone()).unwrap();
        let pairs: Vec<_> = [0.1, 0.4, 0.8].iter().map(|a| (vec![-a], vec![*a])).collect();
        assert!(estimate_osl_modulus(&cs, 0.0, &pairs).unwrap() < 0.0);

        let sq = VelocityField::from_registry("sqrt", &[], 1.0, dom).unwrap();
        for a in [0.25f64, 0.01, 1e-4] {
            let v = estimate_osl_modulus(&sq, 0.0, &[(vec![0.0], vec![a])]).unwrap();
            assert!((v - 2.0 / a.sqrt()).abs() < 1e-9 * v);
        }
        assert!(estimate_osl_modulus(&sq, 0.0, &[(vec![0.1], vec![0.1])]).is_err());
    }

    #[test]
    fn grid_field_interpolates_linear_data_exactly() {
        let dom = SpatialDomain::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        let shape = vec![3, 5];
        let mut values = Vec::new();
        for i in 0..3 {
            for j in 0..5 {
                let x = i as f64;
                let y = -1.0 + 0.5 * j as f64;
                values.push(x + 2.0 * y);
                values.push(-y);
            }
        }
        let g = VelocityField::new(FieldKind::Grid(GridField::new(shape, values).unwrap()), 4.0, dom).unwrap();
        let b = g.eval(0.0, &[1.3, 0.35]).unwrap();
        assert!((b[0] - (1.3 + 0.7)).abs() < 1e-14);
        assert!((b[1] + 0.35).abs() < 1e-14);
    }

    #[test]
    fn time_grid_lookup() {
        let g = TimeGrid::uniform(0.0, 1.0, 64).unwrap();
        assert_eq!(g.index_of(0.5), Some(32));
        assert_eq!(g.index_of(0.501), None);
        assert!(TimeGrid::uniform(1.0, 0.0, 4).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }
}
