//! Filippov envelopes represented by support-function tables.
//!
//! The essential supremum of `ξ·b` over a ball is approximated by a plain
//! maximum over low-discrepancy samples (a scrambled Halton sequence), so
//! values on Lebesgue-null sets are almost surely never seen. Registry fields
//! with a closed-form supremum can bypass sampling with [`SupportMode::Exact`].

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::math::{dist, dot};

const PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Unit directions `ξ` on the sphere used to tabulate supports.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dim: usize,
    dirs: Vec<f64>,
}

impl DirectionSet {
    /// `{+e_i, -e_i}`; for `d = 1` this is the exact set `{+1, -1}`.
    pub fn axes(dim: usize) -> Self {
        let mut dirs = vec![0.0; 2 * dim * dim];
        for i in 0..dim {
            dirs[(2 * i) * dim + i] = 1.0;
            dirs[(2 * i + 1) * dim + i] = -1.0;
        }
        Self { dim, dirs }
    }

    /// `n` equally spaced angles starting at angle 0.
    pub fn circle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config("a 2-D direction set needs at least 3 directions".into()));
        }
        let mut dirs = Vec::with_capacity(2 * n);
        for k in 0..n {
            let a = 2.0 * core::f64::consts::PI * k as f64 / n as f64;
            dirs.push(libm::cos(a));
            dirs.push(libm::sin(a));
        }
        Ok(Self { dim: 2, dirs })
    }

    /// `{±1}` in 1-D, 32 directions in 2-D, the signed axes otherwise.
    pub fn default_for(dim: usize) -> Self {
        match dim {
            2 => Self::circle(32).expect("32 directions"),
            d => Self::axes(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dirs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.dirs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.dirs.chunks_exact(self.dim)
    }

    /// Index of the direction equal to `xi` (within 1e-12).
    pub fn find(&self, xi: &[f64]) -> Option<usize> {
        self.iter().position(|d| dist(d, xi) <= 1e-12)
    }

    fn is_axis_set(&self) -> bool {
        let d = self.dim;
        self.len() == 2 * d
            && self.dirs.chunks_exact(d).enumerate().all(|(k, xi)| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                xi.iter().enumerate().all(|(i, v)| *v == if i == k / 2 { sign } else { 0.0 })
            })
    }
}

/// How supporting values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupportMode {
    /// Maximum over quasi-random ball samples.
    Sampled,
    /// Closed-form supremum when the field provides one, sampling otherwise.
    #[default]
    ExactWhenAvailable,
}

/// Everything needed to build an envelope at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeParams {
    pub dirs: Arc<DirectionSet>,
    /// Strictly decreasing radii; the last one is the radius actually used.
    pub delta_schedule: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub mode: SupportMode,
}

impl EnvelopeParams {
    /// Default radii `{0.2, 0.1, 0.05, 0.025}·diam(Ω)`, 64 samples per ball.
    pub fn defaults(field: &VelocityField, seed: u64) -> Self {
        let diam = field.domain().diameter();
        Self {
            dirs: Arc::new(DirectionSet::default_for(field.dim())),
            delta_schedule: [0.2, 0.1, 0.05, 0.025].iter().map(|f| f * diam).collect(),
            samples: 64,
            seed,
            mode: SupportMode::ExactWhenAvailable,
        }
    }

    pub fn delta_final(&self) -> f64 {
        *self.delta_schedule.last().unwrap_or(&0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_schedule.is_empty()
            || self.delta_schedule.iter().any(|d| !(*d > 0.0 && d.is_finite()))
            || self.delta_schedule.windows(2).any(|w| !(w[1] < w[0]))
        {
            return Err(Error::Config("delta_schedule must be positive and strictly decreasing".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples per ball must be >= 1".into()));
        }
        Ok(())
    }
}

/// Scrambled Halton points in `B_δ(x) ∩ Ω`.
fn ball_samples(field: &VelocityField, x: &[f64], delta: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    let d = field.dim();
    let dom = field.domain();
    let lo: Vec<f64> = (0..d).map(|i| (x[i] - delta).max(dom.lower()[i])).collect();
    let hi: Vec<f64> = (0..d).map(|i| (x[i] + delta).min(dom.upper()[i])).collect();
    if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
        return Err(Error::Numerical(format!("empty ball intersection at {x:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64).collect();
    let mut out = Vec::with_capacity(m * d);
    let mut y = vec![0.0; d];
    let max_tries = 64 * m + 64;
    let mut n = 1u64;
    while out.len() < m * d && (n as usize) <= max_tries {
        for i in 0..d {
            let u = (radical_inverse(n, PRIMES[i % PRIMES.len()]) + shift[i]) % 1.0;
            y[i] = lo[i] + u * (hi[i] - lo[i]);
        }
        n += 1;
        if d == 1 || dist(&y, x) <= delta {
            out.extend_from_slice(&y);
        }
    }
    if out.is_empty() {
        return Err(Error::Numerical(format!("no ball samples accepted at {x:?}")));
    }
    Ok(out)
}

fn radical_inverse(mut n: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while n > 0 {
        r += (n % b) as f64 * f;
        n /= b;
        f *= inv;
    }
    r
}

/// `h_δ(t, x, ξ)`: max of `ξ·b(t, y)` over `m` quasi-random `y ∈ B_δ(x) ∩ Ω`.
pub fn support_function(
    field: &VelocityField,
    t: f64,
    x: &[f64],
    xi: &[f64],
    delta: f64,
    m: usize,
    seed: u64,
) -> Result<f64> {
    if !(delta > 0.0) || m == 0 {
        return Err(Error::Argument("support_function needs delta > 0 and m >= 1".into()));
    }
    if !field.domain().contains(x) {
        return Err(Error::Domain(format!("support point {x:?} outside the domain")));
    }
    let pts = ball_samples(field, x, delta, m, seed)?;
    let mut b = vec![0.0; field.dim()];
    let mut best = f64::NEG_INFINITY;
    for y in pts.chunks_exact(field.dim()) {
        field.eval_unchecked(t, y, &mut b);
        best = best.max(dot(xi, &b));
    }
    Ok(best)
}

/// Result of [`essential_support`].
#[derive(Debug, Clone, PartialEq)]
pub struct EssentialSupport {
    /// Value at the smallest radius.
    pub value: f64,
    /// One value per radius of the schedule.
    pub sequence: Vec<f64>,
    /// False if the sequence increased by more than 1e-9 at some step
    /// (a sampling artifact, reported rather than raised).
    pub monotone: bool,
}

fn support_at(
    field: &VelocityField,
    t: f64,
    x: &[f64],
    xi: &[f64],
    delta: f64,
    params: (usize, u64, SupportMode),
) -> Result<f64> {
    let (m, seed, mode) = params;
    if mode == SupportMode::ExactWhenAvailable {
        if let Some(h) = field.exact_support(t, x, xi, delta) {
            return Ok(h);
        }
    }
    support_function(field, t, x, xi, delta, m, seed)
}

/// `h(t, x, ξ)` read off at the last radius of a decreasing schedule.
pub fn essential_support(
    field: &VelocityField,
    t: f64,
    x: &[f64],
    xi: &[f64],
    delta_schedule: &[f64],
    m: usize,
    seed: u64,
) -> Result<EssentialSupport> {
    essential_support_with(field, t, x, xi, delta_schedule, (m, seed, SupportMode::Sampled))
}

fn essential_support_with(
    field: &VelocityField,
    t: f64,
    x: &[f64],
    xi: &[f64],
    delta_schedule: &[f64],
    params: (usize, u64, SupportMode),
) -> Result<EssentialSupport> {
    if delta_schedule.is_empty() || delta_schedule.windows(2).any(|w| !(w[1] < w[0])) || delta_schedule[0] <= 0.0
    {
        return Err(Error::Argument("delta schedule must be positive and strictly decreasing".into()));
    }
    let mut sequence = Vec::with_capacity(delta_schedule.len());
    for &delta in delta_schedule {
        sequence.push(support_at(field, t, x, xi, delta, params)?);
    }
    let monotone = sequence.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    Ok(EssentialSupport { value: *sequence.last().unwrap(), sequence, monotone })
}

/// The polyhedral outer approximation `{v : ξ·v <= h(ξ) for all table ξ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilippovEnvelope {
    pub t: f64,
    pub x: Vec<f64>,
    pub dirs: Arc<DirectionSet>,
    pub support: Vec<f64>,
    pub delta_used: f64,
    pub samples_per_ball: usize,
    /// False when some direction's δ-sequence was not monotone.
    pub monotone: bool,
}

impl FilippovEnvelope {
    /// Builds an envelope directly from a support table.
    pub fn from_support(dirs: Arc<DirectionSet>, support: Vec<f64>) -> Result<Self> {
        if support.len() != dirs.len() || support.iter().any(|h| !h.is_finite()) {
            return Err(Error::Argument("support table must be finite with one value per direction".into()));
        }
        Ok(Self {
            t: 0.0,
            x: vec![0.0; dirs.dim()],
            dirs,
            support,
            delta_used: 0.0,
            samples_per_ball: 0,
            monotone: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dirs.dim()
    }

    /// Support value in direction `xi` if `xi` is in the table.
    pub fn support_at(&self, xi: &[f64]) -> Option<f64> {
        self.dirs.find(xi).map(|i| self.support[i])
    }

    fn scale(&self) -> f64 {
        1.0 + self.support.iter().fold(0.0f64, |a, h| a.max(libm::fabs(*h)))
    }

    /// True when the table uses the signed axes, so the set is a box.
    fn is_box(&self) -> bool {
        self.dirs.is_axis_set()
    }

    /// `(lo, hi)` of a box table along axis `i`.
    fn bounds(&self, i: usize) -> (f64, f64) {
        (-self.support[2 * i + 1], self.support[2 * i])
    }

    fn check_box(&self, tol: f64) -> Result<()> {
        if (0..self.dim()).any(|i| {
            let (l, h) = self.bounds(i);
            l > h + tol
        }) {
            return Err(Error::Numerical("inconsistent support table (empty box)".into()));
        }
        Ok(())
    }

    /// Vertices of the outer polygon (2-D tables).
    pub fn vertices(&self) -> Result<Vec<[f64; 2]>> {
        if self.dim() != 2 {
            return Err(Error::Argument("vertex enumeration is implemented for d = 2".into()));
        }
        let tol = 1e-10 * self.scale();
        let n = self.dirs.len();
        let mut verts: Vec<[f64; 2]> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (self.dirs.get(i), self.dirs.get(j));
                let det = a[0] * b[1] - a[1] * b[0];
                if libm::fabs(det) < 1e-12 {
                    continue;
                }
                let (hi, hj) = (self.support[i], self.support[j]);
                let v = [(hi * b[1] - hj * a[1]) / det, (a[0] * hj - b[0] * hi) / det];
                if self.distance_raw(&v) <= tol && !verts.iter().any(|w| dist(w, &v) <= tol) {
                    verts.push(v);
                }
            }
        }
        if verts.is_empty() {
            return Err(Error::Numerical("support table describes an empty set".into()));
        }
        Ok(verts)
    }

    fn distance_raw(&self, y: &[f64]) -> f64 {
        self.dirs
            .iter()
            .zip(&self.support)
            .map(|(xi, h)| dot(xi, y) - h)
            .fold(0.0, f64::max)
    }

    /// A point of the envelope maximizing `xi·v`.
    pub fn extreme_point(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if self.is_box() {
            self.check_box(1e-10 * self.scale())?;
            return Ok((0..self.dim())
                .map(|i| {
                    let (lo, hi) = self.bounds(i);
                    if xi[i] > 0.0 {
                        hi
                    } else if xi[i] < 0.0 {
                        lo
                    } else {
                        0.5 * (lo + hi)
                    }
                })
                .collect());
        }
        let verts = self.vertices()?;
        let mut best = verts[0];
        let mut val = dot(xi, &best);
        for v in &verts[1..] {
            let s = dot(xi, v);
            if s > val {
                val = s;
                best = *v;
            }
        }
        Ok(best.to_vec())
    }

    /// Checks the sub-additivity witness `h(ξ1)+h(ξ2) >= |ξ1+ξ2| h(ξ̂)` on every
    /// pair whose normalized sum is in the table; returns the violation count.
    pub fn convexity_violations(&self, tol: f64) -> usize {
        let n = self.dirs.len();
        let d = self.dim();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let s: Vec<f64> = (0..d).map(|k| self.dirs.get(i)[k] + self.dirs.get(j)[k]).collect();
                let len = libm::sqrt(dot(&s, &s));
                if len < 1e-12 {
                    continue;
                }
                let u: Vec<f64> = s.iter().map(|c| c / len).collect();
                if let Some(k) = self.dirs.find(&u) {
                    if self.support[i] + self.support[j] < len * self.support[k] - tol {
                        count += 1;
                    }
                }
            }
        }
        count
    }
}

/// Tabulates `h(t, x, ·)` over `dirs` at the final radius of the schedule.
pub fn filippov_envelope(
    field: &VelocityField,
    t: f64,
    x: &[f64],
    params: &EnvelopeParams,
) -> Result<FilippovEnvelope> {
    if x.len() != field.dim() || params.dirs.dim() != field.dim() {
        return Err(Error::Argument("envelope dimension mismatch".into()));
    }
    if !field.domain().contains(x) {
        return Err(Error::Domain(format!("envelope point {x:?} outside the domain")));
    }
    let exact = params.mode == SupportMode::ExactWhenAvailable
        && field.exact_support(t, x, params.dirs.get(0), params.delta_final()).is_some();
    let mut support = Vec::with_capacity(params.dirs.len());
    let mut monotone = true;
    for xi in params.dirs.iter() {
        if exact {
            // exact suprema are monotone in δ by construction
            let h = field.exact_support(t, x, xi, params.delta_final()).unwrap_or(f64::NAN);
            support.push(h);
        } else {
            let e = essential_support_with(
                field,
                t,
                x,
                xi,
                &params.delta_schedule,
                (params.samples, params.seed, params.mode),
            )?;
            monotone &= e.monotone;
            support.push(e.value);
        }
    }
    if support.iter().any(|h| !h.is_finite()) {
        return Err(Error::Numerical(format!("non-finite support value at {x:?}")));
    }
    Ok(FilippovEnvelope {
        t,
        x: x.to_vec(),
        dirs: params.dirs.clone(),
        support,
        delta_used: params.delta_final(),
        samples_per_ball: if exact { 0 } else { params.samples },
        monotone,
    })
}

/// `max(0, max_ξ (ξ·y − h(ξ)))` over the table directions.
pub fn set_distance(env: &FilippovEnvelope, y: &[f64]) -> f64 {
    env.distance_raw(y)
}

pub fn membership(env: &FilippovEnvelope, v: &[f64], tol: f64) -> bool {
    set_distance(env, v) <= tol
}

/// Euclidean projection onto the outer approximation (box tables in any
/// dimension, general polygons in 2-D).
pub fn project_to_envelope(env: &FilippovEnvelope, y: &[f64]) -> Result<Vec<f64>> {
    let tol = 1e-12 * env.scale();
    if env.is_box() {
        env.check_box(tol)?;
        return Ok(y
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (lo, hi) = env.bounds(i);
                if lo > hi {
                    0.5 * (lo + hi)
                } else {
                    v.clamp(lo, hi)
                }
            })
            .collect());
    }
    if env.dim() != 2 {
        return Err(Error::Argument("projection is implemented for box tables and d = 2".into()));
    }
    if set_distance(env, y) <= 0.0 {
        return Ok(y.to_vec());
    }
    let verts = env.vertices()?;
    let mut best = verts[0].to_vec();
    let mut best_d = dist(&best, y);
    for v in &verts[1..] {
        let d = dist(v, y);
        if d < best_d {
            best_d = d;
            best = v.to_vec();
        }
    }
    let feas = 1e-10 * env.scale();
    for (xi, h) in env.dirs.iter().zip(&env.support) {
        let s = dot(xi, y) - h;
        if s <= 0.0 {
            continue;
        }
        let p = [y[0] - s * xi[0], y[1] - s * xi[1]];
        if env.distance_raw(&p) <= feas {
            let d = dist(&p, y);
            if d < best_d {
                best_d = d;
                best = p.to_vec();
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpatialDomain;

    fn field(id: &str, lo: f64, hi: f64, params: &[f64]) -> VelocityField {
        VelocityField::from_registry(id, params, 1.0, SpatialDomain::interval(lo, hi).unwrap()).unwrap()
    }

    fn sampled(f: &VelocityField, schedule: &[f64], m: usize) -> EnvelopeParams {
        EnvelopeParams {
            dirs: Arc::new(DirectionSet::axes(f.dim())),
            delta_schedule: schedule.to_vec(),
            samples: m,
            seed: 7,
            mode: SupportMode::Sampled,
        }
    }

    #[test]
    fn support_function_examples() {
        let c = field("constant", -1.0, 1.0, &[0.7]);
        assert_eq!(support_function(&c, 0.0, &[0.2], &[-1.0], 0.3, 16, 1).unwrap(), -0.7);
        let s = field("sign1d", -1.0, 1.0, &[]);
        assert_eq!(support_function(&s, 0.0, &[0.0], &[1.0], 0.1, 64, 3).unwrap(), 1.0);
        assert_eq!(support_function(&s, 0.0, &[0.5], &[1.0], 0.1, 64, 3).unwrap(), -1.0);
        assert!(support_function(&s, 0.0, &[0.5], &[1.0], 0.0, 64, 3).is_err());
    }

    #[test]
    fn brute_force_ball_maximum_matches() {
        // the sampled maximum equals the brute-force maximum over the same samples
        let q = field("sqrt", -1.0, 2.0, &[]);
        let pts = ball_samples(&q, &[1.0], 0.05, 64, 11).unwrap();
        let brute = pts.iter().map(|y| 2.0 * y.max(0.0).sqrt()).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(support_function(&q, 0.0, &[1.0], &[1.0], 0.05, 64, 11).unwrap(), brute);
        assert!(pts.iter().all(|y| (y - 1.0).abs() <= 0.05));
    }

    #[test]
    fn essential_support_examples() {
        let s = field("sign1d", -1.0, 1.0, &[]);
        let e = essential_support(&s, 0.0, &[0.0], &[-1.0], &[0.2, 0.1, 0.05], 64, 5).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(e.monotone);

        let q = field("sqrt", -1.0, 2.0, &[]);
        let e = essential_support(&q, 0.0, &[1.0], &[1.0], &[0.2, 0.1, 0.05], 256, 5).unwrap();
        let exact = 2.0 * 1.05f64.sqrt();
        assert!(e.value <= exact && exact - e.value < 1e-3, "{}", e.value);
        assert!(e.monotone);
        assert!(essential_support(&q, 0.0, &[1.0], &[1.0], &[0.1, 0.2], 8, 5).is_err());
    }

    #[test]
    fn envelope_examples() {
        let s = field("sign1d", -1.0, 1.0, &[]);
        let env = filippov_envelope(&s, 0.0, &[0.0], &sampled(&s, &[0.2, 0.1, 0.05], 64)).unwrap();
        assert_eq!(env.support_at(&[1.0]), Some(1.0));
        assert_eq!(env.support_at(&[-1.0]), Some(1.0));

        let c = field("constant", -1.0, 1.0, &[0.3]);
        let env = filippov_envelope(&c, 0.0, &[0.1], &sampled(&c, &[0.2, 0.1], 8)).unwrap();
        assert_eq!(env.support, vec![0.3, -0.3]);

        let q = field("sqrt", -1.0, 1.0, &[]);
        let mut last = f64::INFINITY;
        for delta in [0.1, 0.01, 0.001] {
            let env = filippov_envelope(&q, 0.0, &[0.0], &sampled(&q, &[delta], 128)).unwrap();
            let up = env.support_at(&[1.0]).unwrap();
            assert!(up <= 2.0 * delta.sqrt() + 1e-15 && up < last);
            assert_eq!(env.support_at(&[-1.0]), Some(0.0));
            last = up;
        }
    }

    #[test]
    fn exact_mode_agrees_with_sampling() {
        for (id, x) in [("sqrt", 0.7), ("sign1d", 0.01), ("mollified-sign", -0.02), ("linear", 0.4)] {
            let f = field(id, -1.0, 1.0, &[0.05]);
            for xi in [[1.0], [-1.0]] {
                let exact = f.exact_support(0.0, &[x], &xi, 0.05).unwrap();
                let s = support_function(&f, 0.0, &[x], &xi, 0.05, 4096, 2).unwrap();
                assert!(s <= exact + 1e-12 && exact - s < 1e-2, "{id} {xi:?}: {s} vs {exact}");
            }
        }
    }

    #[test]
    fn distance_and_membership() {
        let dirs = Arc::new(DirectionSet::axes(1));
        let f = FilippovEnvelope::from_support(dirs.clone(), vec![1.0, 1.0]).unwrap();
        assert_eq!(set_distance(&f, &[0.0]), 0.0);
        assert_eq!(set_distance(&f, &[3.0]), 2.0);
        assert!(membership(&f, &[0.99], 1e-9));
        assert!(!membership(&f, &[1.01], 1e-9));
        let single = FilippovEnvelope::from_support(dirs, vec![0.4, -0.4]).unwrap();
        assert_eq!(set_distance(&single, &[0.4]), 0.0);
        let zero = FilippovEnvelope::from_support(Arc::new(DirectionSet::axes(1)), vec![0.0, 0.0]).unwrap();
        assert!(membership(&zero, &[0.0], 1e-6));
    }

    #[test]
    fn projection_cases() {
        let f = FilippovEnvelope::from_support(Arc::new(DirectionSet::axes(1)), vec![1.0, 1.0]).unwrap();
        assert_eq!(project_to_envelope(&f, &[3.0]).unwrap(), vec![1.0]);
        assert_eq!(project_to_envelope(&f, &[0.5]).unwrap(), vec![0.5]);

        // a box from a constant field widened by w, in a 2-D table of 8 directions
        let v = [0.3, -0.2];
        let w = 0.25;
        let dirs = Arc::new(DirectionSet::circle(8).unwrap());
        let support: Vec<f64> = dirs
            .iter()
            .map(|xi| dot(xi, &v) + w * (xi[0].abs() + xi[1].abs()))
            .collect();
        let env = FilippovEnvelope::from_support(dirs, support).unwrap();
        let y = [v[0] + 1.0, v[1] + 1.0];
        let p = project_to_envelope(&env, &y).unwrap();
        let clamp = [v[0] + w, v[1] + w];
        assert!(dist(&p, &clamp) < 1e-12, "{p:?}");
        assert!(set_distance(&env, &p) <= 1e-10);
        let y = [v[0] + 1.0, v[1] + 0.1];
        let p = project_to_envelope(&env, &y).unwrap();
        assert!(dist(&p, &[v[0] + w, v[1] + 0.1]) < 1e-12, "{p:?}");
    }

    #[test]
    fn singleton_polygon_projects_to_its_point() {
        let v = [0.5, 1.5];
        let dirs = Arc::new(DirectionSet::circle(32).unwrap());
        let support: Vec<f64> = dirs.iter().map(|xi| dot(xi, &v)).collect();
        let env = FilippovEnvelope::from_support(dirs, support).unwrap();
        let p = project_to_envelope(&env, &[3.0, -2.0]).unwrap();
        assert!(dist(&p, &v) < 1e-9);
        let e = env.extreme_point(&[0.0, 1.0]).unwrap();
        assert!(dist(&e, &v) < 1e-9);
    }

    #[test]
    fn two_dimensional_envelope_is_sound_and_convex() {
        let dom = SpatialDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let f = VelocityField::from_registry("rotating-2d", &[1.0], 1.0, dom).unwrap();
        let mut p = EnvelopeParams::defaults(&f, 3);
        p.samples = 128;
        let x = [0.3, -0.4];
        let env = filippov_envelope(&f, 0.0, &x, &p).unwrap();
        // outer-approximation soundness on fresh samples of the same ball
        let pts = ball_samples(&f, &x, p.delta_final(), 128, p.seed).unwrap();
        for y in pts.chunks_exact(2) {
            let b = f.eval(0.0, y).unwrap();
            assert!(set_distance(&env, &b) <= 1e-12);
        }
        assert_eq!(env.convexity_violations(1e-12), 0);
        assert!(env.monotone);
    }
}
