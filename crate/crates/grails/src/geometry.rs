//! Convex bodies in parameter space: membership, chords and interior points.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, SparseVec};

pub const MEMBERSHIP_TOL: f64 = 1e-9;
pub const CHORD_TOL: f64 = 1e-6;
pub const PROJECTION_ITERS: usize = 500;
pub const PROJECTION_RESTARTS: usize = 20;

/// Distance kept from a violated boundary when projecting onto it, so that
/// alternating projections terminate with strictly feasible points.
const PROJECTION_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn of(self, z: &[f64]) -> f64 {
        match self {
            Norm::L1 => z.iter().map(|v| v.abs()).sum(),
            Norm::L2 => norm2(z),
            Norm::Linf => z.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// `{z : ⟨normal, z⟩ ≤ offset}`
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: SparseVec,
    offset: f64,
    normal_norm: f64,
}

impl Halfspace {
    pub fn new(normal: &[f64], offset: f64) -> Result<Self> {
        Self::from_sparse(SparseVec::from_dense(normal), offset)
    }

    pub fn from_sparse(normal: SparseVec, offset: f64) -> Result<Self> {
        if normal.is_zero() {
            return invalid("halfspace normal is the zero vector");
        }
        if !offset.is_finite() {
            return invalid("halfspace offset must be finite");
        }
        let normal_norm = normal.norm_sq().sqrt();
        Ok(Halfspace { normal, offset, normal_norm })
    }

    pub fn normal(&self) -> &SparseVec {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `offset − ⟨normal, z⟩`; nonnegative inside.
    pub fn slack(&self, z: &[f64]) -> f64 {
        self.offset - self.normal.dot(z)
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.slack(z) >= -tol
    }

    /// Moves `z` orthogonally so that it sits `margin` inside the boundary, if it is not already.
    fn push_inside(&self, z: &mut [f64], margin: f64) {
        let s = self.slack(z) - margin * self.normal_norm;
        if s < 0.0 {
            self.normal.axpy_into(s / (self.normal_norm * self.normal_norm), z);
        }
    }

    fn max_dim(&self) -> usize {
        self.normal.max_index().map_or(0, |m| m + 1)
    }
}

/// `‖z[start..start+len]‖₂ ≤ radius`
#[derive(Debug, Clone, PartialEq)]
pub struct BallBlock {
    pub start: usize,
    pub len: usize,
    pub radius: f64,
}

impl BallBlock {
    fn slice<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        &z[self.start..self.start + self.len]
    }

    fn project(&self, z: &mut [f64]) {
        let r = norm2(self.slice(z));
        if r > self.radius {
            let s = self.radius / r * (1.0 - 1e-12);
            for v in &mut z[self.start..self.start + self.len] {
                *v *= s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Base {
    Ball { norm: Norm, radius: f64 },
    /// Intersection of halfspaces and per-block L2 balls.
    Polytope { halfspaces: Vec<Halfspace>, blocks: Vec<BallBlock> },
}

/// Bounded convex body: a base set intersected with extra halfspaces.
#[derive(Debug, Clone)]
pub struct ParamBody {
    dim: usize,
    base: Arc<Base>,
    extra: Vec<Halfspace>,
    tol: f64,
}

impl ParamBody {
    pub fn ball(dim: usize, norm: Norm, radius: f64) -> Result<Self> {
        if dim == 0 {
            return invalid("body dimension must be positive");
        }
        if !(radius.is_finite() && radius > 0.0) {
            return invalid("ball radius must be finite and positive");
        }
        Ok(ParamBody { dim, base: Arc::new(Base::Ball { norm, radius }), extra: vec![], tol: MEMBERSHIP_TOL })
    }

    /// Errors if some coordinate ray is unbounded.
    pub fn polytope(dim: usize, halfspaces: Vec<Halfspace>, blocks: Vec<BallBlock>) -> Result<Self> {
        if dim == 0 {
            return invalid("body dimension must be positive");
        }
        if halfspaces.iter().any(|h| h.max_dim() > dim) {
            return invalid("halfspace dimension exceeds body dimension");
        }
        if blocks.iter().any(|b| b.start + b.len > dim || !(b.radius > 0.0)) {
            return invalid("ball block out of range or with nonpositive radius");
        }
        for k in 0..dim {
            if blocks.iter().any(|b| (b.start..b.start + b.len).contains(&k)) {
                continue;
            }
            for sign in [1.0, -1.0] {
                let blocked = halfspaces
                    .iter()
                    .any(|h| h.normal.iter().any(|(j, v)| j == k && v * sign > 0.0));
                // A single halfspace bounding the coordinate ray is necessary; combined with
                // all 2·dim rays this is the sanity check, not a full recession-cone test.
                if !blocked {
                    return invalid(format!("polytope unbounded along {}e_{k}", if sign > 0.0 { "+" } else { "-" }));
                }
            }
        }
        Ok(ParamBody {
            dim,
            base: Arc::new(Base::Polytope { halfspaces, blocks }),
            extra: vec![],
            tol: MEMBERSHIP_TOL,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn extra_halfspaces(&self) -> &[Halfspace] {
        &self.extra
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Same base (shared), extra halfspaces appended.
    pub fn with_halfspaces(&self, more: impl IntoIterator<Item = Halfspace>) -> Result<Self> {
        let mut body = self.clone();
        for h in more {
            if h.max_dim() > self.dim {
                return invalid("halfspace dimension exceeds body dimension");
            }
            body.extra.push(h);
        }
        Ok(body)
    }

    /// Base-polytope halfspaces followed by the extra ones.
    pub fn halfspaces(&self) -> impl Iterator<Item = &Halfspace> {
        let base: &[Halfspace] = match &*self.base {
            Base::Polytope { halfspaces, .. } => halfspaces,
            Base::Ball { .. } => &[],
        };
        base.iter().chain(self.extra.iter())
    }

    pub fn num_halfspaces(&self) -> usize {
        self.halfspaces().count()
    }

    pub fn membership(&self, z: &[f64]) -> Result<bool> {
        if z.len() != self.dim {
            return invalid(format!("point has dimension {}, body has {}", z.len(), self.dim));
        }
        Ok(self.contains(z))
    }

    /// Membership without the dimension check.
    pub fn contains(&self, z: &[f64]) -> bool {
        self.base_contains(z) && self.extra.iter().all(|h| h.contains(z, self.tol))
    }

    fn base_contains(&self, z: &[f64]) -> bool {
        match &*self.base {
            Base::Ball { norm, radius } => norm.of(z) <= radius + self.tol,
            Base::Polytope { halfspaces, blocks } => {
                halfspaces.iter().all(|h| h.contains(z, self.tol))
                    && blocks.iter().all(|b| norm2(b.slice(z)) <= b.radius + self.tol)
            }
        }
    }

    /// Exact chord through `z` along `d` when the base admits a closed form (everything except
    /// L1 balls). The interval always contains 0.
    pub fn chord(&self, z: &[f64], d: &[f64]) -> Option<(f64, f64)> {
        let mut iv = (f64::NEG_INFINITY, f64::INFINITY);
        match &*self.base {
            Base::Ball { norm: Norm::L2, radius } => clip_ball(&mut iv, z, d, *radius),
            Base::Ball { norm: Norm::Linf, radius } => {
                for (zk, dk) in z.iter().zip(d) {
                    if *dk != 0.0 {
                        let (a, b) = ((-radius - zk) / dk, (radius - zk) / dk);
                        iv.0 = iv.0.max(a.min(b));
                        iv.1 = iv.1.min(a.max(b));
                    }
                }
            }
            Base::Ball { norm: Norm::L1, .. } => return None,
            Base::Polytope { blocks, .. } => {
                for b in blocks {
                    clip_ball(&mut iv, b.slice(z), b.slice(d), b.radius);
                }
            }
        }
        for h in self.halfspaces() {
            clip_halfspace(&mut iv, h.slack(z), h.normal.dot(d));
        }
        Some((iv.0.min(0.0), iv.1.max(0.0)))
    }

    /// A point of the base set (not uniform for non-ball bases).
    pub fn random_base_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut g: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        match &*self.base {
            Base::Ball { norm: Norm::Linf, radius } => {
                g.iter_mut().for_each(|v| *v = radius * (2.0 * rng.random::<f64>() - 1.0));
            }
            Base::Ball { norm, radius } => {
                let len = norm.of(&g).max(1e-300);
                let r = radius * rng.random::<f64>().powf(1.0 / self.dim as f64);
                g.iter_mut().for_each(|v| *v *= r / len);
            }
            Base::Polytope { .. } => g.iter_mut().for_each(|v| *v *= 0.1),
        }
        g
    }

    fn project_base(&self, z: &mut [f64]) {
        match &*self.base {
            Base::Ball { norm: Norm::Linf, radius } => {
                z.iter_mut().for_each(|v| *v = v.clamp(-radius, *radius));
            }
            Base::Ball { norm, radius } => {
                // Ray to the origin; norms are homogeneous so the crossing is exact.
                let len = norm.of(z);
                if len > *radius {
                    let s = radius / len * (1.0 - 1e-12);
                    z.iter_mut().for_each(|v| *v *= s);
                }
            }
            Base::Polytope { blocks, .. } => blocks.iter().for_each(|b| b.project(z)),
        }
    }
}

fn clip_halfspace(iv: &mut (f64, f64), slack: f64, rate: f64) {
    if rate > 0.0 {
        iv.1 = iv.1.min(slack / rate);
    } else if rate < 0.0 {
        iv.0 = iv.0.max(slack / rate);
    }
}

fn clip_ball(iv: &mut (f64, f64), z: &[f64], d: &[f64], radius: f64) {
    let a = dot(d, d);
    if a == 0.0 {
        return;
    }
    let b = dot(z, d);
    let c = dot(z, z) - radius * radius;
    let disc = (b * b - a * c).max(0.0).sqrt();
    // Stable roots of a t² + 2 b t + c.
    let q = -(b + b.signum() * disc);
    let (r1, r2) = if q != 0.0 { (q / a, c / q) } else { (disc / a, -disc / a) };
    iv.0 = iv.0.max(r1.min(r2));
    iv.1 = iv.1.min(r1.max(r2));
}

/// Chord by exponential expansion then bisection on the membership oracle.
pub fn chord_endpoints(body: &ParamBody, point: &[f64], direction: &[f64], tol: f64) -> Result<(f64, f64)> {
    if !body.membership(point)? {
        return invalid("chord start point is outside the body");
    }
    if direction.len() != body.dim || (norm2(direction) - 1.0).abs() > 1e-9 {
        return invalid("chord direction must be a unit vector of body dimension");
    }
    if !(tol > 0.0) {
        return invalid("chord tolerance must be positive");
    }
    let at = |t: f64| -> bool {
        let p: Vec<f64> = point.iter().zip(direction).map(|(z, d)| z + t * d).collect();
        body.contains(&p)
    };
    let mut ends = [0.0; 2];
    for (k, sign) in [-1.0, 1.0].into_iter().enumerate() {
        let (mut inside, mut outside) = (0.0, tol);
        while at(sign * outside) {
            inside = outside;
            outside *= 2.0;
            if outside > 1e15 {
                return Err(Error::InvalidArgument("body is unbounded along the chord".into()));
            }
        }
        while outside - inside > tol {
            let mid = 0.5 * (inside + outside);
            if at(sign * mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        ends[k] = sign * inside;
    }
    Ok((ends[0], ends[1]))
}

/// Outcome of an interior-point search.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Found(Vec<f64>),
    /// The conic solve showed that no ball of positive radius fits in the body.
    Empty,
    /// Alternating projections gave up without a certificate.
    Unknown,
}

/// Largest inscribed radius below which a body counts as empty.
pub const MIN_INRADIUS: f64 = 1e-9;
/// Cap on the inscribed radius, which keeps the centre problem bounded.
const INRADIUS_CAP: f64 = 1.0;

/// Centre of a large inscribed Euclidean ball, from the conic program
/// `max t` s.t. `⟨a, z⟩ + ‖a‖ t ≤ b` for every halfspace and `‖z_B‖ + t ≤ r` for every ball.
/// `None` when the base is an L1 ball or the solver fails to converge.
pub fn chebyshev_center(body: &ParamBody) -> Option<(Vec<f64>, f64)> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

    let dim = body.dim;
    let t = dim;
    let (mut rows, mut cols, mut vals, mut rhs) = (vec![], vec![], vec![], vec![]);
    let mut push = |entries: &mut dyn Iterator<Item = (usize, f64)>, b: f64, rhs: &mut Vec<f64>| {
        let r = rhs.len();
        for (c, v) in entries {
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        rhs.push(b);
    };
    for h in body.halfspaces() {
        push(&mut h.normal.iter().chain([(t, h.normal_norm)]), h.offset, &mut rhs);
    }
    push(&mut [(t, 1.0)].into_iter(), INRADIUS_CAP, &mut rhs);
    let mut socs: Vec<(usize, usize, f64)> = vec![];
    match &*body.base {
        Base::Ball { norm: Norm::L1, .. } => return None,
        Base::Ball { norm: Norm::Linf, radius } => {
            for k in 0..dim {
                push(&mut [(k, 1.0), (t, 1.0)].into_iter(), *radius, &mut rhs);
                push(&mut [(k, -1.0), (t, 1.0)].into_iter(), *radius, &mut rhs);
            }
        }
        Base::Ball { norm: Norm::L2, radius } => socs.push((0, dim, *radius)),
        Base::Polytope { blocks, .. } => socs.extend(blocks.iter().map(|b| (b.start, b.len, b.radius))),
    }
    let linear = rhs.len();
    let mut cones = vec![SupportedConeT::NonnegativeConeT(linear)];
    for &(start, len, radius) in &socs {
        // (r − t, z_B) in the second-order cone.
        push(&mut [(t, 1.0)].into_iter(), radius, &mut rhs);
        for k in start..start + len {
            push(&mut [(k, -1.0)].into_iter(), 0.0, &mut rhs);
        }
        cones.push(SupportedConeT::SecondOrderConeT(len + 1));
    }
    let a = CscMatrix::new_from_triplets(rhs.len(), dim + 1, rows, cols, vals);
    let p = CscMatrix::zeros((dim + 1, dim + 1));
    let mut q = vec![0.0; dim + 1];
    q[t] = -1.0;
    let settings = DefaultSettings { verbose: false, ..DefaultSettings::default() };
    let mut solver = DefaultSolver::new(&p, &q, &a, &rhs, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let x = &solver.solution.x;
            Some((x[..dim].to_vec(), x[t]))
        }
        _ => None,
    }
}

/// Interior point search: the warm start if it is a member, then the conic centre problem
/// for polytope bases, then alternating projections, then the centre problem for ball bases.
pub fn locate_interior_point<R: Rng + ?Sized>(
    body: &ParamBody,
    rng: &mut R,
    max_attempts: usize,
    warm: Option<&[f64]>,
) -> Probe {
    if let Some(w) = warm {
        if w.len() == body.dim && body.contains(w) {
            return Probe::Found(w.to_vec());
        }
    }
    let conic = || match chebyshev_center(body) {
        Some((z, r)) if r > MIN_INRADIUS && body.contains(&z) => Some(Probe::Found(z)),
        Some((_, r)) if r <= MIN_INRADIUS => Some(Probe::Empty),
        _ => None,
    };
    let polytope = matches!(&*body.base, Base::Polytope { .. });
    if polytope {
        if let Some(p) = conic() {
            return p;
        }
    }
    if let Some(z) = project_search(body, rng, max_attempts, warm) {
        return Probe::Found(z);
    }
    if !polytope {
        if let Some(p) = conic() {
            return p;
        }
    }
    Probe::Unknown
}

pub fn find_interior_point<R: Rng + ?Sized>(
    body: &ParamBody,
    rng: &mut R,
    max_attempts: usize,
    warm: Option<&[f64]>,
) -> Option<Vec<f64>> {
    match locate_interior_point(body, rng, max_attempts, warm) {
        Probe::Found(z) => Some(z),
        _ => None,
    }
}

/// Alternating projections from random base points; `warm` seeds the first attempt.
fn project_search<R: Rng + ?Sized>(
    body: &ParamBody,
    rng: &mut R,
    max_attempts: usize,
    warm: Option<&[f64]>,
) -> Option<Vec<f64>> {
    let halfspaces: Vec<&Halfspace> = body.halfspaces().collect();
    for attempt in 0..max_attempts {
        let mut z = match warm {
            Some(w) if attempt == 0 && w.len() == body.dim => w.to_vec(),
            _ => body.random_base_point(rng),
        };
        body.project_base(&mut z);
        for _ in 0..PROJECTION_ITERS {
            if body.contains(&z) {
                return Some(z);
            }
            for h in &halfspaces {
                h.push_inside(&mut z, PROJECTION_MARGIN);
            }
            body.project_base(&mut z);
        }
        if body.contains(&z) {
            return Some(z);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Certified by the witness point.
    Feasible(Vec<f64>),
    /// Best-effort report after the restart budget ran out.
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

pub fn feasibility<R: Rng + ?Sized>(body: &ParamBody, budget: usize, rng: &mut R) -> Feasibility {
    match find_interior_point(body, rng, budget, None) {
        Some(z) => Feasibility::Feasible(z),
        None => Feasibility::Infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_ball(d: usize) -> ParamBody {
        ParamBody::ball(d, Norm::L2, 1.0).unwrap()
    }

    fn box01(d: usize) -> ParamBody {
        let mut hs = vec![];
        for k in 0..d {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            hs.push(Halfspace::new(&e, 1.0).unwrap());
            e[k] = -1.0;
            hs.push(Halfspace::new(&e, 0.0).unwrap());
        }
        ParamBody::polytope(d, hs, vec![]).unwrap()
    }

    #[test]
    fn membership_examples() {
        let b = unit_ball(3);
        assert!(b.membership(&[0.0; 3]).unwrap());
        let cut = b.with_halfspaces([Halfspace::new(&[1.0, 0.0, 0.0], -2.0).unwrap()]).unwrap();
        assert!(!cut.membership(&[0.0; 3]).unwrap());
        let z = [1.0 + MEMBERSHIP_TOL / 2.0, 0.0, 0.0];
        assert!(b.membership(&z).unwrap());
        assert!(matches!(b.membership(&[0.0; 2]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_normal_rejected() {
        assert!(Halfspace::new(&[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn unbounded_polytope_rejected() {
        let h = Halfspace::new(&[1.0, 0.0], 1.0).unwrap();
        assert!(ParamBody::polytope(2, vec![h], vec![]).is_err());
    }

    #[test]
    fn interior_point_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = unit_ball(4);
        let z = find_interior_point(&b, &mut rng, 20, None).unwrap();
        assert!(norm2(&z) <= 1.0 + MEMBERSHIP_TOL);

        let half = b.with_halfspaces([Halfspace::new(&[-1.0, 0.0, 0.0, 0.0], -0.5).unwrap()]).unwrap();
        let z = find_interior_point(&half, &mut rng, 20, None).unwrap();
        assert!(half.membership(&z).unwrap());
        assert!(z[0] >= 0.5 - MEMBERSHIP_TOL);

        let empty = b.with_halfspaces([Halfspace::new(&[-1.0, 0.0, 0.0, 0.0], -2.0).unwrap()]).unwrap();
        assert_eq!(feasibility(&empty, 20, &mut rng), Feasibility::Infeasible);
        let lower = b.with_halfspaces([Halfspace::new(&[1.0, 0.0, 0.0, 0.0], 0.0).unwrap()]).unwrap();
        assert!(feasibility(&lower, 20, &mut rng).is_feasible());
    }

    #[test]
    fn chord_examples() {
        let b = unit_ball(2);
        let (lo, hi) = chord_endpoints(&b, &[0.0, 0.0], &[1.0, 0.0], CHORD_TOL).unwrap();
        assert!((lo + 1.0).abs() <= CHORD_TOL && (hi - 1.0).abs() <= CHORD_TOL);
        let (lo, hi) = chord_endpoints(&b, &[0.5, 0.0], &[1.0, 0.0], CHORD_TOL).unwrap();
        assert!((lo + 1.5).abs() <= CHORD_TOL && (hi - 0.5).abs() <= CHORD_TOL);
        assert!(chord_endpoints(&b, &[2.0, 0.0], &[1.0, 0.0], CHORD_TOL).is_err());
    }

    #[test]
    fn box_chords_match_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 3;
        let b = box01(d);
        for _ in 0..50 {
            let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let axis = rng.random_range(0..d);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut dir = vec![0.0; d];
            dir[axis] = sign;
            let (lo, hi) = chord_endpoints(&b, &p, &dir, CHORD_TOL).unwrap();
            let (elo, ehi) = if sign > 0.0 { (-p[axis], 1.0 - p[axis]) } else { (p[axis] - 1.0, p[axis]) };
            assert!((lo - elo).abs() <= CHORD_TOL && (hi - ehi).abs() <= CHORD_TOL);
            let (alo, ahi) = b.chord(&p, &dir).unwrap();
            assert!((alo - elo).abs() < 1e-12 && (ahi - ehi).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_ball_uses_bisection_path() {
        let b = ParamBody::ball(2, Norm::L1, 1.0).unwrap();
        assert!(b.chord(&[0.0, 0.0], &[1.0, 0.0]).is_none());
        let s = 0.5f64.sqrt();
        let (lo, hi) = chord_endpoints(&b, &[0.0, 0.0], &[s, s], CHORD_TOL).unwrap();
        assert!((hi - s).abs() <= CHORD_TOL && (lo + s).abs() <= CHORD_TOL);
    }
}
