//! Instance generators. Every instance is realizable: the truth is a member of its class and
//! its labels are the truth's predictions (rounded onto the grid when one is declared).

use std::sync::Arc;

use grails::function_classes::{
    build_body, random_rkhs_function, ArmPool, ConvexClass, FiniteModel, FunctionClass, KernelClass, LinearClass, Model,
    PriorKnowledge, RbfKernel, Truth,
};
use grails::geometry::Norm;
use grails::grails::{FiniteClass, Oracle};
use grails::sampler::derive_seed;
use grails::version_space::OutputGrid;
use grails::{Error, Result};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Tag {
    Prop6Linear,
    Thresholds,
    CoupledThresholds,
    RegretGap,
    LossGap,
    TwoArmTradeoff,
    OfulBad,
    RkhsRandom,
    RkhsPriorKnowledge,
    ConvexQuadratic,
    StronglyConvexGrid,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Prop6Linear => "prop6_linear",
            Tag::Thresholds => "thresholds",
            Tag::CoupledThresholds => "coupled_thresholds",
            Tag::RegretGap => "regret_gap",
            Tag::LossGap => "loss_gap",
            Tag::TwoArmTradeoff => "two_arm_tradeoff",
            Tag::OfulBad => "oful_bad",
            Tag::RkhsRandom => "rkhs_random",
            Tag::RkhsPriorKnowledge => "rkhs_prior_knowledge",
            Tag::ConvexQuadratic => "convex_quadratic",
            Tag::StronglyConvexGrid => "strongly_convex_grid",
        }
    }

    pub fn default_size(self) -> usize {
        match self {
            Tag::Prop6Linear => 16,
            Tag::Thresholds => 16,
            Tag::CoupledThresholds => 4,
            Tag::RegretGap => 8,
            Tag::LossGap => 8,
            Tag::TwoArmTradeoff => 2,
            Tag::OfulBad => 32,
            Tag::RkhsRandom => 10,
            Tag::RkhsPriorKnowledge => 100,
            Tag::ConvexQuadratic => 300,
            Tag::StronglyConvexGrid => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub tag: Tag,
    /// Main size parameter; its meaning depends on the tag (arms, blocks, grid side, ...).
    pub size: usize,
    pub seed: u64,
    /// Index of the true function for finite classes; `None` picks the tag default.
    #[serde(default)]
    pub truth: Option<usize>,
    /// RBF bandwidth for the kernel tags.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Number of random pairwise constraints (prior-knowledge tag).
    #[serde(default)]
    pub constraints: usize,
    /// Gap parameter of the two-arm instance.
    #[serde(default)]
    pub gap: Option<f64>,
}

impl InstanceSpec {
    pub fn new(tag: Tag, size: usize, seed: u64) -> Self {
        InstanceSpec { tag, size, seed, truth: None, sigma: None, constraints: 0, gap: None }
    }

    pub fn with_truth(mut self, truth: usize) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_constraints(mut self, count: usize) -> Self {
        self.constraints = count;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSpec {
    Finite { functions: Vec<Vec<f64>> },
    LinearAtoms { norm: Norm, radius: f64, atoms: Vec<Vec<f64>> },
    Kernel { sigma: f64, bound: f64, prior: PriorKnowledge },
    Convex { value_bound: f64, grad_bound: f64, modulus: f64, prior: PriorKnowledge },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub spec: InstanceSpec,
    pub arms: Vec<Vec<f64>>,
    pub class: ClassSpec,
    /// Output grid for discrete instances; `None` for continuous outputs.
    pub grid: Option<Vec<f64>>,
    pub truth: Truth,
    pub labels: Vec<f64>,
}

/// Default RKHS norm bound and the truth's norm as a fraction of it.
pub const RKHS_BOUND: f64 = 1.0;
pub const RKHS_TRUTH_FRACTION: f64 = 0.9;
pub const DEFAULT_SIGMA_2D: f64 = 0.1;
pub const DEFAULT_SIGMA_1D: f64 = 0.075;
pub const CONVEX_SCALE: f64 = 5.0;
pub const CONVEX_VALUE_BOUND: f64 = 6.0;
pub const CONVEX_GRAD_BOUND: f64 = 11.0;
pub const LOSS_GAP_VALUES: (f64, f64, f64) = (0.0, 1.0, 20.0);
pub const DEFAULT_TWO_ARM_GAP: f64 = 10.0;
pub const STRONG_CONVEXITY: f64 = 2.0;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

fn line(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![i as f64]).collect()
}

/// Finite label table plus the index of the truth.
fn finite(spec: &InstanceSpec, arms: Vec<Vec<f64>>, functions: Vec<Vec<f64>>, default_truth: usize) -> Result<Instance> {
    let t = spec.truth.unwrap_or(default_truth);
    if t >= functions.len() {
        return invalid(format!("truth index {t} out of range for {} functions", functions.len()));
    }
    let fc = FiniteClass::new(functions.clone())?;
    Ok(Instance {
        spec: spec.clone(),
        arms,
        labels: functions[t].clone(),
        grid: Some(fc.grid().values().to_vec()),
        class: ClassSpec::Finite { functions },
        truth: Truth::Atom(t),
    })
}

fn seeded_truth(spec: &InstanceSpec, count: usize) -> usize {
    ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x7A)).random_range(0..count)
}

pub fn generate(spec: &InstanceSpec) -> Result<Instance> {
    let s = spec.size;
    match spec.tag {
        Tag::Prop6Linear => {
            if s < 2 {
                return invalid("prop6_linear needs n >= 2");
            }
            // f_j(x_i) = 0 if i = j+1, 1 if i >= j, 10 otherwise (1-based, first match wins).
            let f = |j: usize, i: usize| if i == j + 1 { 0.0 } else if i >= j { 1.0 } else { 10.0 };
            let arms: Vec<Vec<f64>> = (1..=s)
                .map(|i| {
                    let mut x = vec![0.0; s + 1];
                    x[0] = i as f64 / s as f64;
                    x[i] = 10.0;
                    x
                })
                .collect();
            let atoms: Vec<Vec<f64>> = (1..=s)
                .map(|j| {
                    let mut a = vec![0.0; s + 1];
                    for i in 1..=s {
                        a[i] = f(j, i) / 10.0;
                    }
                    a
                })
                .collect();
            let radius = atoms.iter().map(|a| Norm::L2.of(a)).fold(0.0, f64::max) * (1.0 + 1e-9);
            let t = spec.truth.unwrap_or(s - 1);
            if t >= s {
                return invalid("truth index out of range");
            }
            let labels = (1..=s).map(|i| f(t + 1, i)).collect();
            Ok(Instance {
                spec: spec.clone(),
                arms,
                class: ClassSpec::LinearAtoms { norm: Norm::L2, radius, atoms },
                grid: Some(vec![0.0, 1.0, 10.0]),
                truth: Truth::Atom(t),
                labels,
            })
        }
        Tag::Thresholds => {
            if s < 2 {
                return invalid("thresholds needs n >= 2");
            }
            let fs = (0..s).map(|i| (0..s).map(|j| if j <= i { 1.0 } else { 0.0 }).collect()).collect();
            finite(spec, line(s), fs, seeded_truth(spec, s))
        }
        Tag::CoupledThresholds => {
            if s < 1 {
                return invalid("coupled_thresholds needs m >= 1");
            }
            let (m, l) = (s, s + 1);
            let n = m * l + m;
            let mut fs = vec![vec![-1.0; n]];
            for i in 1..=m {
                fs.push(
                    (1..=n)
                        .map(|j| {
                            let block = (l * (i - 1) + 1..=i * l).contains(&j);
                            let thresh = (m * l + 1..=m * l + i).contains(&j);
                            if block || thresh { 1.0 } else { -1.0 }
                        })
                        .collect(),
                );
            }
            finite(spec, line(n), fs, m)
        }
        Tag::RegretGap => {
            if s < 2 {
                return invalid("regret_gap needs n >= 2");
            }
            let n = s;
            let fs = (1..=n)
                .map(|i| {
                    (1..=2 * n)
                        .map(|j| {
                            if j == i {
                                0.0
                            } else if j <= n {
                                1.0
                            } else if j >= 2 * n - i {
                                2.0
                            } else {
                                1.0
                            }
                        })
                        .collect()
                })
                .collect();
            finite(spec, line(2 * n), fs, seeded_truth(spec, n))
        }
        Tag::LossGap => {
            if s < 2 || s % 2 == 1 {
                return invalid("loss_gap needs an even m >= 2");
            }
            let m = s;
            let (ystar, ytilde, ybar) = LOSS_GAP_VALUES;
            let n = m + m / 2;
            let fs = (1..=m)
                .map(|j| {
                    (1..=n)
                        .map(|i| {
                            if i <= m / 2 {
                                if i == j.div_ceil(2) { ystar } else { ybar }
                            } else if i == m / 2 + j {
                                ystar
                            } else {
                                ytilde
                            }
                        })
                        .collect()
                })
                .collect();
            finite(spec, line(n), fs, seeded_truth(spec, m))
        }
        Tag::TwoArmTradeoff => {
            let d = spec.gap.unwrap_or(DEFAULT_TWO_ARM_GAP);
            if d <= 2.0 {
                return invalid("two_arm_tradeoff needs a gap above 2");
            }
            let fs = vec![vec![d, d - 1.0], vec![1.0, d / 2.0 + 1.0]];
            finite(spec, line(2), fs, seeded_truth(spec, 2))
        }
        Tag::OfulBad => {
            if s < 2 {
                return invalid("oful_bad needs n >= 2");
            }
            let n = s;
            let fs = (1..=n)
                .map(|i| {
                    (1..=2 * n)
                        .map(|j| if j == i { 0.0 } else if (n + 1..=n + i).contains(&j) { 0.5 } else { 1.0 })
                        .collect()
                })
                .collect();
            finite(spec, line(2 * n), fs, n - 1)
        }
        Tag::StronglyConvexGrid => {
            if !(2..=6).contains(&s) {
                return invalid("strongly_convex_grid needs 2 <= K <= 6");
            }
            // Rounded α-strongly convex quadratics on X = [K] over Y = {0, 1, 2}.
            let grid = OutputGrid::new(vec![0.0, 1.0, 2.0])?;
            let mut fs: Vec<Vec<f64>> = vec![];
            for c in 1..=s {
                for b in [0.0, 0.6] {
                    let f: Vec<f64> =
                        (1..=s).map(|x| grid.round(STRONG_CONVEXITY / 2.0 * (x as f64 - c as f64).powi(2) + b)).collect();
                    if !fs.contains(&f) {
                        fs.push(f);
                    }
                }
            }
            let k = seeded_truth(spec, fs.len());
            let mut inst = finite(spec, line(s), fs, k)?;
            inst.grid = Some(grid.values().to_vec());
            Ok(inst)
        }
        Tag::RkhsRandom | Tag::RkhsPriorKnowledge => {
            let two_d = spec.tag == Tag::RkhsRandom;
            let arms = if two_d {
                if s < 2 {
                    return invalid("rkhs_random needs a grid side >= 2");
                }
                ArmPool::grid_2d(s, 0.0, 1.0)?
            } else {
                if s < 2 {
                    return invalid("rkhs_prior_knowledge needs n >= 2");
                }
                ArmPool::grid_1d(s, 0.0, 6.0)?
            };
            let sigma = spec.sigma.unwrap_or(if two_d { DEFAULT_SIGMA_2D } else { DEFAULT_SIGMA_1D });
            let class = KernelClass::rbf(sigma, RKHS_BOUND, arms.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x4B));
            let alpha = random_rkhs_function(&class, RKHS_TRUTH_FRACTION * RKHS_BOUND, &mut rng)?;
            let labels = class.evaluate_alpha(&alpha);
            let pairs = random_pairs(&labels, spec.constraints, &mut rng);
            Ok(Instance {
                spec: InstanceSpec { sigma: Some(sigma), ..spec.clone() },
                arms: arms.points().to_vec(),
                class: ClassSpec::Kernel { sigma, bound: RKHS_BOUND, prior: PriorKnowledge { pairwise: pairs, halfspaces: vec![] } },
                grid: None,
                truth: Truth::Params(class.whiten(&alpha)),
                labels,
            })
        }
        Tag::ConvexQuadratic => {
            if s < 2 {
                return invalid("convex_quadratic needs n >= 2");
            }
            let arms = ArmPool::grid_1d(s, 0.0, 1.0)?;
            let xmin: f64 = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0xC0)).random_range(0.0..1.0);
            let class = ConvexClass { arms: arms.clone(), value_bound: CONVEX_VALUE_BOUND, grad_bound: CONVEX_GRAD_BOUND, modulus: 0.0 };
            let params =
                class.params_for(|x| CONVEX_SCALE * (x[0] - xmin).powi(2), |x| vec![2.0 * CONVEX_SCALE * (x[0] - xmin)]);
            let labels = arms.points().iter().map(|x| CONVEX_SCALE * (x[0] - xmin).powi(2)).collect();
            Ok(Instance {
                spec: spec.clone(),
                arms: arms.points().to_vec(),
                class: ClassSpec::Convex {
                    value_bound: CONVEX_VALUE_BOUND,
                    grad_bound: CONVEX_GRAD_BOUND,
                    modulus: 0.0,
                    prior: PriorKnowledge::default(),
                },
                grid: None,
                truth: Truth::Params(params),
                labels,
            })
        }
    }
}

/// `count` distinct random pairs `(i, j)`, oriented so that `labels[i] ≥ labels[j]`.
fn random_pairs<R: Rng + ?Sized>(labels: &[f64], count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let n = labels.len();
    let mut all: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    all.shuffle(rng);
    all.truncate(count);
    all.into_iter().map(|(i, j)| if labels[i] >= labels[j] { (i, j) } else { (j, i) }).collect()
}

impl Instance {
    pub fn n(&self) -> usize {
        self.arms.len()
    }

    pub fn oracle(&self) -> Result<Oracle> {
        Oracle::new(self.labels.clone())
    }

    pub fn output_grid(&self) -> Option<OutputGrid> {
        self.grid.as_ref().map(|g| OutputGrid::new(g.clone()).expect("generated grids are valid"))
    }

    pub fn is_discrete(&self) -> bool {
        self.grid.is_some()
    }

    pub fn arm_pool(&self) -> Result<ArmPool> {
        ArmPool::new(self.arms.clone())
    }

    pub fn function_class(&self) -> Result<Option<FunctionClass>> {
        Ok(match &self.class {
            ClassSpec::Finite { .. } => None,
            ClassSpec::LinearAtoms { norm, radius, .. } => {
                Some(FunctionClass::Linear(LinearClass { norm: *norm, radius: *radius, arms: self.arm_pool()? }))
            }
            ClassSpec::Kernel { sigma, bound, .. } => Some(FunctionClass::Kernel(KernelClass::rbf(*sigma, *bound, self.arm_pool()?)?)),
            ClassSpec::Convex { value_bound, grad_bound, modulus, .. } => Some(FunctionClass::Convex(ConvexClass {
                arms: self.arm_pool()?,
                value_bound: *value_bound,
                grad_bound: *grad_bound,
                modulus: *modulus,
            })),
        })
    }

    pub fn prior(&self) -> PriorKnowledge {
        match &self.class {
            ClassSpec::Kernel { prior, .. } | ClassSpec::Convex { prior, .. } => prior.clone(),
            _ => PriorKnowledge::default(),
        }
    }

    /// The instance with its prior knowledge removed.
    pub fn without_prior(&self) -> Instance {
        let mut out = self.clone();
        match &mut out.class {
            ClassSpec::Kernel { prior, .. } | ClassSpec::Convex { prior, .. } => *prior = PriorKnowledge::default(),
            _ => {}
        }
        out
    }

    pub fn model(&self) -> Result<Arc<Model>> {
        Ok(Arc::new(match &self.class {
            ClassSpec::Finite { functions } => Model::Finite(FiniteModel::from_labels(functions.clone())?),
            ClassSpec::LinearAtoms { norm, radius, atoms } => Model::Finite(FiniteModel::from_linear_atoms(
                &LinearClass { norm: *norm, radius: *radius, arms: self.arm_pool()? },
                atoms.clone(),
            )?),
            _ => Model::Convex(build_body(&self.function_class()?.expect("convex class"), &self.prior())?),
        }))
    }

    /// The explicit label table, for the finite tags.
    pub fn finite_class(&self) -> Result<Option<FiniteClass>> {
        let rows = match &self.class {
            ClassSpec::Finite { functions } => functions.clone(),
            ClassSpec::LinearAtoms { atoms, .. } => {
                atoms.iter().map(|a| self.arms.iter().map(|x| grails::linalg::dot(a, x)).collect()).collect()
            }
            _ => return Ok(None),
        };
        Ok(Some(FiniteClass::new(rows)?))
    }

    pub fn gram(&self) -> Option<DMatrix<f64>> {
        match &self.class {
            ClassSpec::Kernel { sigma, .. } => Some(RbfKernel { sigma: *sigma }.gram(&self.arm_pool().ok()?)),
            _ => None,
        }
    }

    /// Truth's predictions (rounded onto the grid when discrete) equal the label vector, and the
    /// truth lies in the class body.
    pub fn realizability_check(&self) -> Result<bool> {
        let model = self.model()?;
        let preds = model.truth_predictions(&self.truth)?;
        let rounded: Vec<f64> = match self.output_grid() {
            Some(g) => preds.iter().map(|&p| g.round(p)).collect(),
            None => preds,
        };
        let close = rounded.iter().zip(&self.labels).all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0));
        Ok(close && model.truth_satisfies(&self.truth, &self.prior().constraints()))
    }
}
