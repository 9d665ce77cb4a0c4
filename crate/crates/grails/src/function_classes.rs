//! Sampling-oracle constructions: linear, RBF-kernel and (strongly) convex classes as convex
//! parameter bodies with a linear evaluation map, plus finite parameter families.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{BallBlock, Halfspace, Norm, ParamBody, MEMBERSHIP_TOL};
use crate::linalg::{LinearMap, SparseVec};

pub const EIGEN_CLAMP: f64 = 1e-10;
pub const DEFAULT_NORM_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPool {
    points: Vec<Vec<f64>>,
}

impl ArmPool {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else { return invalid("arm pool is empty") };
        let d = first.len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return invalid("arm points must share a positive dimension");
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("arm coordinates must be finite");
        }
        Ok(ArmPool { points })
    }

    /// `n` evenly spaced points on `[lo, hi]`.
    pub fn grid_1d(n: usize, lo: f64, hi: f64) -> Result<Self> {
        let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        Self::new((0..n).map(|i| vec![lo + step * i as f64]).collect())
    }

    /// `k × k` evenly spaced points on `[lo, hi]²`, row-major.
    pub fn grid_2d(k: usize, lo: f64, hi: f64) -> Result<Self> {
        let step = if k > 1 { (hi - lo) / (k - 1) as f64 } else { 0.0 };
        let mut pts = Vec::with_capacity(k * k);
        for a in 0..k {
            for b in 0..k {
                pts.push(vec![lo + step * a as f64, lo + step * b as f64]);
            }
        }
        Self::new(pts)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn d(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// `Σ coeffs_i · f(x_i) ≤ bound` over the prediction vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
}

impl OutputConstraint {
    pub fn upper(i: usize, hi: f64) -> Self {
        OutputConstraint { coeffs: vec![(i, 1.0)], bound: hi }
    }

    pub fn lower(i: usize, lo: f64) -> Self {
        OutputConstraint { coeffs: vec![(i, -1.0)], bound: -lo }
    }

    /// `f(x_i) ≥ f(x_j)`
    pub fn at_least(i: usize, j: usize) -> Self {
        OutputConstraint { coeffs: vec![(j, 1.0), (i, -1.0)], bound: 0.0 }
    }

    pub fn holds(&self, predictions: &[f64], tol: f64) -> bool {
        self.coeffs.iter().map(|&(i, c)| c * predictions[i]).sum::<f64>() <= self.bound + tol
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorKnowledge {
    /// `(i, j)` means `f(x_i) ≥ f(x_j)`.
    pub pairwise: Vec<(usize, usize)>,
    pub halfspaces: Vec<OutputConstraint>,
}

impl PriorKnowledge {
    pub fn constraints(&self) -> Vec<OutputConstraint> {
        self.pairwise
            .iter()
            .map(|&(i, j)| OutputConstraint::at_least(i, j))
            .chain(self.halfspaces.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClass {
    pub norm: Norm,
    pub radius: f64,
    pub arms: ArmPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub sigma: f64,
}

impl RbfKernel {
    /// `exp(−‖x − x′‖² / (2σ²))`
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn gram(&self, arms: &ArmPool) -> DMatrix<f64> {
        let n = arms.n();
        DMatrix::from_fn(n, n, |i, j| self.eval(arms.point(i), arms.point(j)))
    }
}

/// RKHS ball. Parameters live in whitened coordinates `β = K^{1/2} α`, where the ball is
/// Euclidean and uniform sampling is unchanged by the linear map.
#[derive(Debug, Clone)]
pub struct KernelClass {
    pub kernel: Option<RbfKernel>,
    pub bound: f64,
    pub arms: ArmPool,
    gram: DMatrix<f64>,
    gram_root: DMatrix<f64>,
    gram_root_inv: DMatrix<f64>,
}

impl KernelClass {
    pub fn rbf(sigma: f64, bound: f64, arms: ArmPool) -> Result<Self> {
        if !(sigma > 0.0) {
            return invalid("kernel bandwidth must be positive");
        }
        let k = RbfKernel { sigma };
        let gram = k.gram(&arms);
        let mut class = Self::with_gram(gram, bound, arms)?;
        class.kernel = Some(k);
        Ok(class)
    }

    pub fn with_gram(gram: DMatrix<f64>, bound: f64, arms: ArmPool) -> Result<Self> {
        let n = arms.n();
        if gram.nrows() != n || gram.ncols() != n {
            return invalid("gram matrix must be n × n");
        }
        if (&gram - gram.transpose()).amax() > 1e-9 {
            return invalid("gram matrix must be symmetric");
        }
        if !(bound > 0.0) {
            return invalid("norm bound must be positive");
        }
        let eig = SymmetricEigen::new(gram.clone());
        let vals = eig.eigenvalues.map(|v| v.max(EIGEN_CLAMP));
        let u = &eig.eigenvectors;
        let gram_root = u * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * u.transpose();
        let gram_root_inv = u * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt())) * u.transpose();
        Ok(KernelClass { kernel: None, bound, arms, gram, gram_root, gram_root_inv })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_root(&self) -> &DMatrix<f64> {
        &self.gram_root
    }

    /// `Kα`
    pub fn evaluate_alpha(&self, alpha: &[f64]) -> Vec<f64> {
        (&self.gram * DVector::from_column_slice(alpha)).iter().copied().collect()
    }

    /// `Σ_j α_j k(x, x_j)` at an arbitrary point.
    pub fn expansion_at(&self, alpha: &[f64], x: &[f64]) -> Option<f64> {
        let k = self.kernel?;
        Some(alpha.iter().zip(self.arms.points()).map(|(a, xj)| a * k.eval(x, xj)).sum())
    }

    /// `sqrt(αᵀKα)`
    pub fn rkhs_norm(&self, alpha: &[f64]) -> f64 {
        let a = DVector::from_column_slice(alpha);
        a.dot(&(&self.gram * &a)).max(0.0).sqrt()
    }

    pub fn whiten(&self, alpha: &[f64]) -> Vec<f64> {
        (&self.gram_root * DVector::from_column_slice(alpha)).iter().copied().collect()
    }

    pub fn unwhiten(&self, beta: &[f64]) -> Vec<f64> {
        (&self.gram_root_inv * DVector::from_column_slice(beta)).iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexClass {
    pub arms: ArmPool,
    pub value_bound: f64,
    pub grad_bound: f64,
    /// Strong-convexity modulus α ≥ 0.
    pub modulus: f64,
}

impl ConvexClass {
    /// Parameters `(ŷ_1..ŷ_n, g_1..g_n)` for a function with known values and gradients.
    pub fn params_for(&self, f: impl Fn(&[f64]) -> f64, grad: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let mut p: Vec<f64> = self.arms.points().iter().map(|x| f(x)).collect();
        for x in self.arms.points() {
            p.extend(grad(x));
        }
        p
    }

    /// `ŷ_j − ŷ_i + g_jᵀ(x_i − x_j) ≤ −(α/2)‖x_i − x_j‖²`, i.e. the lower support at `x_j` holds at `x_i`.
    fn support_constraint(&self, i: usize, j: usize) -> Result<Halfspace> {
        let n = self.arms.n();
        let d = self.arms.d();
        let (xi, xj) = (self.arms.point(i), self.arms.point(j));
        let mut pairs = vec![(j, 1.0), (i, -1.0)];
        let mut d2 = 0.0;
        for k in 0..d {
            pairs.push((n + j * d + k, xi[k] - xj[k]));
            d2 += (xi[k] - xj[k]).powi(2);
        }
        Halfspace::from_sparse(SparseVec::from_pairs(pairs), -0.5 * self.modulus * d2)
    }

    fn base_body(&self) -> Result<ParamBody> {
        let n = self.arms.n();
        let d = self.arms.d();
        if !(self.value_bound > 0.0 && self.grad_bound > 0.0 && self.modulus >= 0.0) {
            return invalid("convex class needs positive bounds and a nonnegative modulus");
        }
        let dim = n * (d + 1);
        let mut hs = Vec::new();
        let unit = |k: usize, s: f64| SparseVec::from_pairs([(k, s)]);
        for i in 0..n {
            hs.push(Halfspace::from_sparse(unit(i, 1.0), self.value_bound)?);
            hs.push(Halfspace::from_sparse(unit(i, -1.0), self.value_bound)?);
        }
        let mut blocks = Vec::new();
        if d == 1 {
            for i in 0..n {
                hs.push(Halfspace::from_sparse(unit(n + i, 1.0), self.grad_bound)?);
                hs.push(Halfspace::from_sparse(unit(n + i, -1.0), self.grad_bound)?);
            }
            // On sorted 1-D arms the consecutive constraints imply all pairwise ones.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| self.arms.point(a)[0].total_cmp(&self.arms.point(b)[0]));
            for w in order.windows(2) {
                if self.arms.point(w[0])[0] == self.arms.point(w[1])[0] {
                    return invalid("convex class arms must be distinct");
                }
                hs.push(self.support_constraint(w[0], w[1])?);
                hs.push(self.support_constraint(w[1], w[0])?);
            }
        } else {
            for i in 0..n {
                blocks.push(BallBlock { start: n + i * d, len: d, radius: self.grad_bound });
                for j in 0..n {
                    if i != j {
                        hs.push(self.support_constraint(i, j)?);
                    }
                }
            }
        }
        ParamBody::polytope(dim, hs, blocks)
    }

    /// Checks every pairwise inequality directly.
    pub fn satisfies_all_pairs(&self, params: &[f64], tol: f64) -> bool {
        let n = self.arms.n();
        (0..n).all(|i| (0..n).all(|j| i == j || self.support_constraint(i, j).map_or(false, |h| h.contains(params, tol))))
    }
}

#[derive(Debug, Clone)]
pub enum FunctionClass {
    Linear(LinearClass),
    Kernel(KernelClass),
    Convex(ConvexClass),
}

impl FunctionClass {
    pub fn arms(&self) -> &ArmPool {
        match self {
            FunctionClass::Linear(c) => &c.arms,
            FunctionClass::Kernel(c) => &c.arms,
            FunctionClass::Convex(c) => &c.arms,
        }
    }

    /// Predictions at the arms. Kernel parameters are the expansion coefficients `α`.
    pub fn evaluate(&self, params: &[f64]) -> Result<Vec<f64>> {
        let arms = self.arms();
        let expect = match self {
            FunctionClass::Linear(_) => arms.d(),
            FunctionClass::Kernel(_) => arms.n(),
            FunctionClass::Convex(_) => arms.n() * (arms.d() + 1),
        };
        if params.len() != expect {
            return invalid(format!("expected {expect} parameters, got {}", params.len()));
        }
        Ok(match self {
            FunctionClass::Linear(c) => c.arms.points().iter().map(|x| crate::linalg::dot(x, params)).collect(),
            FunctionClass::Kernel(c) => c.evaluate_alpha(params),
            FunctionClass::Convex(c) => params[..c.arms.n()].to_vec(),
        })
    }
}

/// A convex parameter body and the linear map from parameters to predictions.
#[derive(Debug, Clone)]
pub struct ConvexModel {
    pub body: ParamBody,
    pub map: LinearMap,
}

impl ConvexModel {
    pub fn n(&self) -> usize {
        self.map.output_dim()
    }

    pub fn predict(&self, params: &[f64]) -> Vec<f64> {
        self.map.apply(params)
    }

    /// `None` when some constraint is unsatisfiable independently of the parameters.
    pub fn to_halfspaces(&self, constraints: &[OutputConstraint]) -> Option<Vec<Halfspace>> {
        let mut out = Vec::with_capacity(constraints.len());
        for c in constraints {
            let normal = self.map.pullback(&c.coeffs);
            if normal.is_zero() {
                if c.bound < -MEMBERSHIP_TOL {
                    return None;
                }
                continue;
            }
            out.push(Halfspace::from_sparse(normal, c.bound).ok()?);
        }
        Some(out)
    }

    /// Halfspaces for `lo ≤ prediction_i ≤ hi`; infinite sides are omitted.
    pub fn halfspace_for_label(&self, i: usize, lo: f64, hi: f64) -> Option<Vec<Halfspace>> {
        let mut cs = Vec::new();
        if hi.is_finite() {
            cs.push(OutputConstraint::upper(i, hi));
        }
        if lo.is_finite() {
            cs.push(OutputConstraint::lower(i, lo));
        }
        self.to_halfspaces(&cs)
    }

    pub fn constrained(&self, constraints: &[OutputConstraint]) -> Option<ParamBody> {
        self.body.with_halfspaces(self.to_halfspaces(constraints)?).ok()
    }
}

pub fn build_body(class: &FunctionClass, prior: &PriorKnowledge) -> Result<ConvexModel> {
    let arms = class.arms();
    let n = arms.n();
    let model = match class {
        FunctionClass::Linear(c) => ConvexModel {
            body: ParamBody::ball(arms.d(), c.norm, c.radius)?,
            map: LinearMap::from_dense_rows(arms.points()),
        },
        FunctionClass::Kernel(c) => {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| c.gram_root.row(i).iter().copied().collect()).collect();
            ConvexModel { body: ParamBody::ball(n, Norm::L2, c.bound)?, map: LinearMap::from_dense_rows(&rows) }
        }
        FunctionClass::Convex(c) => ConvexModel {
            body: c.base_body()?,
            map: LinearMap::new((0..n).map(|i| SparseVec::from_pairs([(i, 1.0)])).collect(), n * (arms.d() + 1)),
        },
    };
    let cs = prior.constraints();
    if cs.iter().any(|c| c.coeffs.iter().any(|&(i, _)| i >= n)) {
        return invalid("prior constraint references an arm out of range");
    }
    let hs = model
        .to_halfspaces(&cs)
        .ok_or_else(|| Error::InvalidArgument("prior constraints are unsatisfiable".into()))?;
    Ok(ConvexModel { body: model.body.with_halfspaces(hs)?, map: model.map })
}

/// Coefficients `α` with `‖K^{1/2}α‖₂ = target_norm`.
pub fn random_rkhs_function<R: Rng + ?Sized>(class: &KernelClass, target_norm: f64, rng: &mut R) -> Result<Vec<f64>> {
    let n = class.arms.n();
    if !(0.0..=class.bound).contains(&target_norm) {
        return invalid("target norm must lie in [0, B]");
    }
    if target_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _ in 0..10 {
        let alpha: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = crate::linalg::norm2(&class.whiten(&alpha));
        if norm > 1e-12 {
            return Ok(alpha.iter().map(|a| a * target_norm / norm).collect());
        }
    }
    Err(Error::NotFound("could not draw a coefficient vector with nonzero RKHS norm".into()))
}

/// Finite weighted family of parameters with precomputed predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModel {
    params: Vec<Vec<f64>>,
    predictions: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl FiniteModel {
    pub fn new(params: Vec<Vec<f64>>, predictions: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let m = predictions.len();
        if m == 0 || params.len() != m {
            return invalid("finite family must be nonempty with one parameter per prediction vector");
        }
        let n = predictions[0].len();
        if n == 0 || predictions.iter().any(|p| p.len() != n) {
            return invalid("prediction vectors must share a positive length");
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; m]);
        if weights.len() != m || weights.iter().any(|w| !(*w > 0.0)) {
            return invalid("weights must be positive, one per atom");
        }
        Ok(FiniteModel { params, predictions, weights })
    }

    /// Atoms are the label vectors themselves.
    pub fn from_labels(labels: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(labels.clone(), labels, None)
    }

    /// Atoms of a linear class; each must lie in the class's ball.
    pub fn from_linear_atoms(class: &LinearClass, atoms: Vec<Vec<f64>>) -> Result<Self> {
        let model = build_body(&FunctionClass::Linear(class.clone()), &PriorKnowledge::default())?;
        for a in &atoms {
            if !model.body.membership(a)? {
                return invalid("atom lies outside the class body");
            }
        }
        let preds = atoms.iter().map(|a| model.predict(a)).collect();
        Self::new(atoms, preds, None)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n(&self) -> usize {
        self.predictions[0].len()
    }

    pub fn params(&self, atom: usize) -> &[f64] {
        &self.params[atom]
    }

    pub fn predictions(&self, atom: usize) -> &[f64] {
        &self.predictions[atom]
    }

    pub fn weight(&self, atom: usize) -> f64 {
        self.weights[atom]
    }

    pub fn satisfies(&self, atom: usize, constraints: &[OutputConstraint]) -> bool {
        constraints.iter().all(|c| c.holds(&self.predictions[atom], MEMBERSHIP_TOL))
    }

    /// `(atom, weight)` pairs satisfying every constraint.
    pub fn support(&self, constraints: &[OutputConstraint]) -> Vec<(usize, f64)> {
        (0..self.len()).filter(|&a| self.satisfies(a, constraints)).map(|a| (a, self.weights[a])).collect()
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Convex(ConvexModel),
    Finite(FiniteModel),
}

/// Ground-truth parameters, used for auditing runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Truth {
    Params(Vec<f64>),
    Atom(usize),
}

impl Model {
    pub fn n(&self) -> usize {
        match self {
            Model::Convex(m) => m.n(),
            Model::Finite(m) => m.n(),
        }
    }

    pub fn truth_predictions(&self, truth: &Truth) -> Result<Vec<f64>> {
        match (self, truth) {
            (Model::Convex(m), Truth::Params(p)) if p.len() == m.body.dimension() => Ok(m.predict(p)),
            (Model::Finite(m), Truth::Atom(a)) if *a < m.len() => Ok(m.predictions(*a).to_vec()),
            _ => invalid("truth does not match the model kind"),
        }
    }

    /// Whether the truth lies in the model set cut by `constraints`.
    pub fn truth_satisfies(&self, truth: &Truth, constraints: &[OutputConstraint]) -> bool {
        match (self, truth) {
            (Model::Convex(m), Truth::Params(p)) => {
                m.body.contains(p) && constraints.iter().all(|c| c.holds(&m.predict(p), MEMBERSHIP_TOL))
            }
            (Model::Finite(m), Truth::Atom(a)) => m.satisfies(*a, constraints),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{hit_and_run_sample, ChainConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> ArmPool {
        ArmPool::grid_1d(n, 0.0, 1.0).unwrap()
    }

    #[test]
    fn linear_body_and_evaluation() {
        let arms = ArmPool::new(vec![vec![1.0, 2.0], vec![0.0, -1.0]]).unwrap();
        let class = FunctionClass::Linear(LinearClass { norm: Norm::L2, radius: 1.0, arms });
        let m = build_body(&class, &PriorKnowledge::default()).unwrap();
        assert_eq!(m.body.dimension(), 2);
        assert_eq!(m.predict(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(class.evaluate(&[0.5, 0.25]).unwrap(), vec![1.0, -0.25]);
        assert!(class.evaluate(&[0.5]).is_err());
    }

    #[test]
    fn needle_arm_evaluation() {
        // x_i = (i/n)e_1 + 10 e_{i+1}, a = e_1 + e_{j+1}.
        let n = 6;
        let arms: Vec<Vec<f64>> = (1..=n)
            .map(|i| {
                let mut x = vec![0.0; n + 1];
                x[0] = i as f64 / n as f64;
                x[i] = 10.0;
                x
            })
            .collect();
        let class = FunctionClass::Linear(LinearClass { norm: Norm::L2, radius: 2.0, arms: ArmPool::new(arms).unwrap() });
        let j = 4;
        let mut a = vec![0.0; n + 1];
        a[0] = 1.0;
        a[j] = 1.0;
        let p = class.evaluate(&a).unwrap();
        for i in 1..=n {
            let expect = if i == j { j as f64 / n as f64 + 10.0 } else { i as f64 / n as f64 };
            assert!((p[i - 1] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_identity_gram() {
        let arms = line(3);
        let class = KernelClass::with_gram(DMatrix::identity(3, 3), 1.0, arms).unwrap();
        assert_eq!(class.evaluate_alpha(&[1.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let m = build_body(&FunctionClass::Kernel(class.clone()), &PriorKnowledge::default()).unwrap();
        assert_eq!(m.predict(&class.whiten(&[1.0, 0.0, 0.0])), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn kernel_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let class = KernelClass::rbf(0.3, 1.0, line(8)).unwrap();
        let alpha = random_rkhs_function(&class, 0.9, &mut rng).unwrap();
        assert!((crate::linalg::norm2(&class.whiten(&alpha)) - 0.9).abs() < 1e-9);
        assert!((class.rkhs_norm(&alpha) - 0.9).abs() < 1e-7);
        let k_alpha = class.evaluate_alpha(&alpha);
        for i in 0..8 {
            let direct = class.expansion_at(&alpha, class.arms.point(i)).unwrap();
            assert!((direct - k_alpha[i]).abs() < 1e-9);
        }
        let m = build_body(&FunctionClass::Kernel(class.clone()), &PriorKnowledge::default()).unwrap();
        let via_beta = m.predict(&class.whiten(&alpha));
        for i in 0..8 {
            assert!((via_beta[i] - k_alpha[i]).abs() < 1e-6);
        }
        assert_eq!(random_rkhs_function(&class, 0.0, &mut rng).unwrap(), vec![0.0; 8]);
        let other = random_rkhs_function(&class, 0.9, &mut rng).unwrap();
        assert_ne!(alpha, other);
        assert!(random_rkhs_function(&class, 2.0, &mut rng).is_err());
    }

    #[test]
    fn convex_two_arms_contains_zero() {
        let class = ConvexClass { arms: line(2), value_bound: 1.0, grad_bound: 1.0, modulus: 0.0 };
        let m = build_body(&FunctionClass::Convex(class), &PriorKnowledge::default()).unwrap();
        assert_eq!(m.body.dimension(), 4);
        assert!(m.body.membership(&[0.0; 4]).unwrap());
    }

    #[test]
    fn convex_reduction_matches_pairwise() {
        // Consecutive-slope constraints on 1-D arms equal the full pairwise system.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for modulus in [0.0, 2.0] {
            let class = ConvexClass { arms: line(6), value_bound: 3.0, grad_bound: 6.0, modulus };
            let m = build_body(&FunctionClass::Convex(class.clone()), &PriorKnowledge::default()).unwrap();
            for _ in 0..2000 {
                let p: Vec<f64> = (0..12).map(|k| if k < 6 { rng.random_range(-3.0..3.0) } else { rng.random_range(-6.0..6.0) }).collect();
                assert_eq!(m.body.contains(&p), class.satisfies_all_pairs(&p, MEMBERSHIP_TOL));
            }
            let f = |x: &[f64]| modulus * (x[0] - 0.4).powi(2);
            let g = |x: &[f64]| vec![2.0 * modulus * (x[0] - 0.4)];
            let p = class.params_for(f, g);
            assert!(m.body.contains(&p));
        }
    }

    #[test]
    fn convex_samples_are_convex() {
        let class = ConvexClass { arms: line(5), value_bound: 1.0, grad_bound: 4.0, modulus: 0.0 };
        let m = build_body(&FunctionClass::Convex(class), &PriorKnowledge::default()).unwrap();
        let s = hit_and_run_sample(&m.body, &[0.0; 10], &ChainConfig::with_seed(1), 300).unwrap();
        let xs: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
        for p in &s {
            for a in 0..5 {
                for b in a + 1..5 {
                    for c in b + 1..5 {
                        let w = (xs[c] - xs[b]) / (xs[c] - xs[a]);
                        assert!(p[b] <= w * p[a] + (1.0 - w) * p[c] + 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn prior_pairwise_holds_on_samples() {
        let class = KernelClass::rbf(0.2, 1.0, line(6)).unwrap();
        let prior = PriorKnowledge { pairwise: vec![(0, 5), (2, 3)], halfspaces: vec![] };
        let m = build_body(&FunctionClass::Kernel(class), &prior).unwrap();
        let s = hit_and_run_sample(&m.body, &[0.0; 6], &ChainConfig::with_seed(9), 500).unwrap();
        for z in &s {
            let f = m.predict(z);
            assert!(f[0] >= f[5] - 1e-7 && f[2] >= f[3] - 1e-7);
        }
        let bad = PriorKnowledge { pairwise: vec![(0, 9)], halfspaces: vec![] };
        assert!(build_body(&FunctionClass::Kernel(KernelClass::rbf(0.2, 1.0, line(6)).unwrap()), &bad).is_err());
    }

    #[test]
    fn label_halfspaces() {
        let arms = ArmPool::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = build_body(&FunctionClass::Linear(LinearClass { norm: Norm::L2, radius: 1.0, arms }), &PriorKnowledge::default()).unwrap();
        let one = m.halfspace_for_label(0, f64::NEG_INFINITY, 0.5).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].normal().to_dense(2), vec![1.0, 0.0]);
        assert_eq!(one[0].offset(), 0.5);
        assert_eq!(m.halfspace_for_label(1, 0.25, 0.75).unwrap().len(), 2);
    }
}
