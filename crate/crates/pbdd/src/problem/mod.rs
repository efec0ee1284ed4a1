//! Local objectives, constraint sets, and the partitioned problem.
//!
//! Node `i` owns a strongly convex objective `f_i` and a compact polyhedral
//! set `X_i`, both living in its local space (own block plus neighbouring
//! blocks). The global problem is
//!
//! ```text
//!     minimize    sum_i f_i(gather(x, i))
//!     subject to  gather(x, i) in X_i   for every node i.
//! ```
//!
//! Every constraint set carries explicit box bounds, so each `X_i` is
//! compact; generators pick the boxes wide enough to stay inactive at the
//! optimum. A strictly feasible witness point is stored with the instance,
//! which keeps strong duality assumptions checkable.

pub mod generate;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blockspace::{BlockLayout, BlockVector, LocalVector, Neighborhoods};
use crate::error::Error;
use crate::graph::Graph;
use crate::Result;

/// `f(y) = 1/2 y' H y + g' y + c` with `H` symmetric positive definite.
/// The standard hand-off format between objectives and direct solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

/// Scalar concave utility on a node's own rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    /// `U(x) = weight * ln(x)`; needs a positive lower rate bound.
    Log { weight: f64 },
    /// `U(x) = -weight * (x - target)^2`, strongly concave everywhere.
    Quadratic { weight: f64, target: f64 },
}

impl Utility {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Utility::Log { weight } => weight * x.ln(),
            Utility::Quadratic { weight, target } => -weight * (x - target) * (x - target),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Log { weight } => weight / x,
            Utility::Quadratic { weight, target } => -2.0 * weight * (x - target),
        }
    }

    /// Bounds on `(-U)''` over `[lo, hi]`.
    fn curvature_range(&self, lo: f64, hi: f64) -> (f64, f64) {
        match *self {
            Utility::Log { weight } => (weight / (hi * hi), weight / (lo * lo)),
            Utility::Quadratic { weight, .. } => (2.0 * weight, 2.0 * weight),
        }
    }
}

/// A node's local objective in minimization form.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `f(y) = y' Q y + r' y + constant`, `Q` symmetric positive definite.
    Quadratic {
        q: DMatrix<f64>,
        r: DVector<f64>,
        constant: f64,
        /// Cached `Q + Q'` (the Hessian), built once at construction.
        hessian: DMatrix<f64>,
        sigma: f64,
        smoothness: f64,
    },
    /// `f(y) = -U(y_0) + sum_k reg_k y_k^2`: negated utility on the own
    /// slot plus quadratic regularization on every slot. `own_lo/own_hi`
    /// are the rate bounds of the own slot, needed to bound the curvature
    /// of logarithmic utilities.
    RegularizedUtility {
        utility: Utility,
        reg: DVector<f64>,
        own_lo: f64,
        own_hi: f64,
        sigma: f64,
        smoothness: f64,
    },
}

impl Objective {
    /// Builds a quadratic objective, computing its curvature range from a
    /// symmetric eigendecomposition of `Q + Q'`.
    pub fn quadratic(q: DMatrix<f64>, r: DVector<f64>, constant: f64) -> Result<Self> {
        let d = q.nrows();
        if q.ncols() != d || r.len() != d || d == 0 {
            return Err(Error::InvalidParameter("quadratic objective shape mismatch".into()));
        }
        let scale = q.amax().max(1.0);
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::InvalidParameter(format!(
                "quadratic matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let hessian = &q + q.transpose();
        let eigs = hessian.clone().symmetric_eigenvalues();
        let sigma = eigs.min();
        let smoothness = eigs.max();
        if sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "quadratic objective is not strongly convex (min Hessian eigenvalue {sigma:.3e})"
            )));
        }
        Ok(Objective::Quadratic { q, r, constant, hessian, sigma, smoothness })
    }

    /// Builds a regularized-utility objective. All regularization weights
    /// must be positive; log utilities additionally need `own_lo > 0`.
    pub fn regularized_utility(
        utility: Utility,
        reg: DVector<f64>,
        own_lo: f64,
        own_hi: f64,
    ) -> Result<Self> {
        if reg.is_empty() {
            return Err(Error::InvalidParameter("empty regularization vector".into()));
        }
        if reg.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParameter("regularization weights must be positive".into()));
        }
        if own_lo >= own_hi {
            return Err(Error::InvalidParameter("own-rate interval is empty".into()));
        }
        match utility {
            Utility::Log { weight } if weight <= 0.0 || own_lo <= 0.0 => {
                return Err(Error::InvalidParameter(
                    "log utility needs a positive weight and a positive lower rate bound".into(),
                ));
            }
            Utility::Quadratic { weight, .. } if weight <= 0.0 => {
                return Err(Error::InvalidParameter("utility weight must be positive".into()));
            }
            _ => {}
        }
        let (curv_lo, curv_hi) = utility.curvature_range(own_lo, own_hi);
        let mut sigma = curv_lo + 2.0 * reg[0];
        let mut smoothness = curv_hi + 2.0 * reg[0];
        for k in 1..reg.len() {
            sigma = sigma.min(2.0 * reg[k]);
            smoothness = smoothness.max(2.0 * reg[k]);
        }
        Ok(Objective::RegularizedUtility { utility, reg, own_lo, own_hi, sigma, smoothness })
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic { r, .. } => r.len(),
            Objective::RegularizedUtility { reg, .. } => reg.len(),
        }
    }

    pub fn value(&self, y: &DVector<f64>) -> f64 {
        match self {
            Objective::Quadratic { q, r, constant, .. } => (q * y).dot(y) + r.dot(y) + constant,
            Objective::RegularizedUtility { utility, reg, .. } => {
                let mut v = -utility.value(y[0]);
                for k in 0..reg.len() {
                    v += reg[k] * y[k] * y[k];
                }
                v
            }
        }
    }

    pub fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Objective::Quadratic { r, hessian, .. } => hessian * y + r,
            Objective::RegularizedUtility { utility, reg, .. } => {
                let mut g = DVector::zeros(reg.len());
                for k in 0..reg.len() {
                    g[k] = 2.0 * reg[k] * y[k];
                }
                g[0] -= utility.derivative(y[0]);
                g
            }
        }
    }

    /// Strong-convexity modulus.
    pub fn sigma(&self) -> f64 {
        match self {
            Objective::Quadratic { sigma, .. } => *sigma,
            Objective::RegularizedUtility { sigma, .. } => *sigma,
        }
    }

    /// Gradient Lipschitz constant (over the rate box for log utilities).
    pub fn smoothness(&self) -> f64 {
        match self {
            Objective::Quadratic { smoothness, .. } => *smoothness,
            Objective::RegularizedUtility { smoothness, .. } => *smoothness,
        }
    }

    /// Exact quadratic representation, when one exists. Quadratic-utility
    /// objectives qualify; log utilities do not.
    pub fn quadratic_form(&self) -> Option<QuadraticForm> {
        match self {
            Objective::Quadratic { r, constant, hessian, .. } => Some(QuadraticForm {
                hessian: hessian.clone(),
                linear: r.clone(),
                constant: *constant,
            }),
            Objective::RegularizedUtility { utility, reg, .. } => match *utility {
                Utility::Log { .. } => None,
                Utility::Quadratic { weight, target } => {
                    let d = reg.len();
                    let mut hessian = DMatrix::zeros(d, d);
                    for k in 0..d {
                        hessian[(k, k)] = 2.0 * reg[k];
                    }
                    hessian[(0, 0)] += 2.0 * weight;
                    let mut linear = DVector::zeros(d);
                    linear[0] = -2.0 * weight * target;
                    Some(QuadraticForm { hessian, linear, constant: weight * target * target })
                }
            },
        }
    }
}

/// A compact polyhedron `{ y : A y <= b, lo <= y <= hi }`. The box part is
/// always present.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl PolyConstraint {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d || a.ncols() != d && a.nrows() > 0 || a.nrows() != b.len() {
            return Err(Error::InvalidParameter("constraint shape mismatch".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l >= h) {
            return Err(Error::InvalidParameter("empty box bounds".into()));
        }
        let a = if a.nrows() == 0 { DMatrix::zeros(0, d) } else { a };
        Ok(PolyConstraint { a, b, lo, hi })
    }

    /// Box-only constraint set.
    pub fn box_only(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        let d = lo.len();
        Self::new(DMatrix::zeros(0, d), DVector::zeros(0), lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Number of half-space rows (excluding the box).
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Largest constraint violation at `y`; non-positive means feasible.
    pub fn violation(&self, y: &DVector<f64>) -> f64 {
        let mut v = f64::NEG_INFINITY;
        for k in 0..self.dim() {
            v = v.max(self.lo[k] - y[k]).max(y[k] - self.hi[k]);
        }
        if self.rows() > 0 {
            let ay = &self.a * y;
            for k in 0..self.rows() {
                v = v.max(ay[k] - self.b[k]);
            }
        }
        v
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.violation(y) <= tol
    }

    /// Clamp to the box part only.
    pub fn clamp_to_box(&self, y: &mut DVector<f64>) {
        for k in 0..self.dim() {
            y[k] = y[k].clamp(self.lo[k], self.hi[k]);
        }
    }
}

/// A block-structured problem instance tied to a communication graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedProblem {
    graph: Graph,
    layout: BlockLayout,
    nbhd: Neighborhoods,
    objectives: Vec<Objective>,
    constraints: Vec<PolyConstraint>,
    sigma: Vec<f64>,
    witness: BlockVector,
    scenario: String,
    seed: u64,
}

impl PartitionedProblem {
    pub fn new(
        graph: Graph,
        layout: BlockLayout,
        objectives: Vec<Objective>,
        constraints: Vec<PolyConstraint>,
        witness: BlockVector,
        scenario: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        let nbhd = Neighborhoods::new(&graph, &layout)?;
        let n = graph.n();
        if objectives.len() != n || constraints.len() != n {
            return Err(Error::InvalidParameter(format!(
                "expected {n} objectives and constraints, got {} and {}",
                objectives.len(),
                constraints.len()
            )));
        }
        for i in 0..n {
            let d = nbhd.local_dim(i);
            if objectives[i].dim() != d {
                return Err(Error::InvalidParameter(format!(
                    "objective {i} has dim {} but the local space has dim {d}",
                    objectives[i].dim()
                )));
            }
            if constraints[i].dim() != d {
                return Err(Error::InvalidParameter(format!(
                    "constraint {i} has dim {} but the local space has dim {d}",
                    constraints[i].dim()
                )));
            }
        }
        if witness.values.len() != layout.total() {
            return Err(Error::InvalidParameter("witness length mismatch".into()));
        }
        let sigma: Vec<f64> = objectives.iter().map(Objective::sigma).collect();
        let problem = PartitionedProblem {
            graph,
            layout,
            nbhd,
            objectives,
            constraints,
            sigma,
            witness,
            scenario: scenario.into(),
            seed,
        };
        let margin = problem.witness_margin();
        if margin <= 0.0 {
            return Err(Error::NoInteriorPoint(format!(
                "witness violates a constraint by {:.3e}",
                -margin
            )));
        }
        Ok(problem)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn neighborhoods(&self) -> &Neighborhoods {
        &self.nbhd
    }

    pub fn objective(&self, i: usize) -> &Objective {
        &self.objectives[i]
    }

    pub fn constraint(&self, i: usize) -> &PolyConstraint {
        &self.constraints[i]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigma[i]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn witness(&self) -> &BlockVector {
        &self.witness
    }

    pub fn scenario(&self) -> &str {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn local_dim(&self, i: usize) -> usize {
        self.nbhd.local_dim(i)
    }

    /// Smallest distance of the witness to any constraint boundary, over
    /// all nodes. Positive means strictly feasible everywhere.
    pub fn witness_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for i in 0..self.n() {
            let y = self.nbhd.gather(&self.witness, i);
            margin = margin.min(-self.constraints[i].violation(&y.values));
        }
        margin
    }

    /// Global objective `F(x) = sum_i f_i(gather(x, i))`.
    pub fn global_value(&self, x: &BlockVector) -> f64 {
        (0..self.n())
            .map(|i| self.objectives[i].value(&self.nbhd.gather(x, i).values))
            .sum()
    }

    /// Gradient of the global objective.
    pub fn global_gradient(&self, x: &BlockVector) -> DVector<f64> {
        let mut g = DVector::zeros(self.layout.total());
        for i in 0..self.n() {
            let local = self.nbhd.gather(x, i);
            let gi = self.objectives[i].gradient(&local.values);
            self.nbhd.scatter_add(i, &gi, &mut g);
        }
        g
    }

    /// Whether `gather(x, i) in X_i` holds for every node.
    pub fn globally_feasible(&self, x: &BlockVector, tol: f64) -> bool {
        (0..self.n()).all(|i| {
            self.constraints[i].contains(&self.nbhd.gather(x, i).values, tol)
        })
    }

    /// Assembles the whole problem as one quadratic form over `R^N`, when
    /// every local objective is exactly quadratic.
    pub fn global_quadratic_form(&self) -> Option<QuadraticForm> {
        let total = self.layout.total();
        let mut hessian = DMatrix::zeros(total, total);
        let mut linear = DVector::zeros(total);
        let mut constant = 0.0;
        for i in 0..self.n() {
            let form = self.objectives[i].quadratic_form()?;
            let members = self.nbhd.members(i).to_vec();
            for &jr in &members {
                for (a, ga) in self.nbhd.slot(i, jr).zip(self.layout.block_range(jr)) {
                    linear[ga] += form.linear[a];
                    for &jc in &members {
                        for (b, gb) in self.nbhd.slot(i, jc).zip(self.layout.block_range(jc)) {
                            hessian[(ga, gb)] += form.hessian[(a, b)];
                        }
                    }
                }
            }
            constant += form.constant;
        }
        Some(QuadraticForm { hessian, linear, constant })
    }

    pub fn gather(&self, x: &BlockVector, i: usize) -> LocalVector {
        self.nbhd.gather(x, i)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&file::InstanceFile::from(self))
            .expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: file::InstanceFile = serde_json::from_str(text)?;
        f.into_problem()
    }
}

/// On-disk instance schema (`pbdd-instance-v1`). Matrices are stored dense,
/// row-major.
mod file {
    use super::*;

    pub const FORMAT: &str = "pbdd-instance-v1";

    #[derive(Serialize, Deserialize)]
    pub struct MatrixFile {
        pub rows: usize,
        pub cols: usize,
        pub data: Vec<f64>,
    }

    impl MatrixFile {
        fn from_matrix(m: &DMatrix<f64>) -> Self {
            let mut data = Vec::with_capacity(m.nrows() * m.ncols());
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    data.push(m[(r, c)]);
                }
            }
            MatrixFile { rows: m.nrows(), cols: m.ncols(), data }
        }

        fn into_matrix(self) -> Result<DMatrix<f64>> {
            if self.data.len() != self.rows * self.cols {
                return Err(Error::InvalidData(format!(
                    "matrix data has {} entries, expected {}x{}",
                    self.data.len(),
                    self.rows,
                    self.cols
                )));
            }
            Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
        }
    }

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    pub enum ObjectiveFile {
        Quadratic {
            q: MatrixFile,
            r: Vec<f64>,
            constant: f64,
        },
        RegularizedUtility {
            utility: Utility,
            reg: Vec<f64>,
            own_lo: f64,
            own_hi: f64,
        },
    }

    #[derive(Serialize, Deserialize)]
    pub struct ConstraintFile {
        pub a: MatrixFile,
        pub b: Vec<f64>,
        pub lo: Vec<f64>,
        pub hi: Vec<f64>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct NodeFile {
        pub objective: ObjectiveFile,
        pub constraint: ConstraintFile,
    }

    #[derive(Serialize, Deserialize)]
    pub struct InstanceFile {
        pub format: String,
        pub scenario: String,
        pub seed: u64,
        pub graph: Graph,
        pub layout: BlockLayout,
        pub nodes: Vec<NodeFile>,
        pub sigma: Vec<f64>,
        pub witness: Vec<f64>,
    }

    impl From<&PartitionedProblem> for InstanceFile {
        fn from(p: &PartitionedProblem) -> Self {
            let nodes = (0..p.n())
                .map(|i| NodeFile {
                    objective: match &p.objectives[i] {
                        Objective::Quadratic { q, r, constant, .. } => ObjectiveFile::Quadratic {
                            q: MatrixFile::from_matrix(q),
                            r: r.iter().copied().collect(),
                            constant: *constant,
                        },
                        Objective::RegularizedUtility { utility, reg, own_lo, own_hi, .. } => {
                            ObjectiveFile::RegularizedUtility {
                                utility: utility.clone(),
                                reg: reg.iter().copied().collect(),
                                own_lo: *own_lo,
                                own_hi: *own_hi,
                            }
                        }
                    },
                    constraint: ConstraintFile {
                        a: MatrixFile::from_matrix(&p.constraints[i].a),
                        b: p.constraints[i].b.iter().copied().collect(),
                        lo: p.constraints[i].lo.iter().copied().collect(),
                        hi: p.constraints[i].hi.iter().copied().collect(),
                    },
                })
                .collect();
            InstanceFile {
                format: FORMAT.to_string(),
                scenario: p.scenario.clone(),
                seed: p.seed,
                graph: p.graph.clone(),
                layout: p.layout.clone(),
                nodes,
                sigma: p.sigma.clone(),
                witness: p.witness.values.iter().copied().collect(),
            }
        }
    }

    impl InstanceFile {
        pub fn into_problem(self) -> Result<PartitionedProblem> {
            if self.format != FORMAT {
                return Err(Error::InvalidData(format!(
                    "unsupported instance format {:?}, expected {FORMAT:?}",
                    self.format
                )));
            }
            let mut objectives = Vec::with_capacity(self.nodes.len());
            let mut constraints = Vec::with_capacity(self.nodes.len());
            for node in self.nodes {
                objectives.push(match node.objective {
                    ObjectiveFile::Quadratic { q, r, constant } => Objective::quadratic(
                        q.into_matrix()?,
                        DVector::from_vec(r),
                        constant,
                    )?,
                    ObjectiveFile::RegularizedUtility { utility, reg, own_lo, own_hi } => {
                        Objective::regularized_utility(
                            utility,
                            DVector::from_vec(reg),
                            own_lo,
                            own_hi,
                        )?
                    }
                });
                constraints.push(PolyConstraint::new(
                    node.constraint.a.into_matrix()?,
                    DVector::from_vec(node.constraint.b),
                    DVector::from_vec(node.constraint.lo),
                    DVector::from_vec(node.constraint.hi),
                )?);
            }
            let witness = BlockVector::from_vec(&self.layout, self.witness)?;
            let problem = PartitionedProblem::new(
                self.graph,
                self.layout,
                objectives,
                constraints,
                witness,
                self.scenario,
                self.seed,
            )?;
            // The stored moduli are kept authoritative for reproducibility;
            // they just have to agree with the recomputed ones.
            for (i, (&stored, recomputed)) in
                self.sigma.iter().zip(problem.sigma.iter()).enumerate()
            {
                if (stored - recomputed).abs() > 1e-8 * (1.0 + stored.abs()) {
                    return Err(Error::InvalidData(format!(
                        "stored sigma[{i}] = {stored} disagrees with recomputed {recomputed}"
                    )));
                }
            }
            Ok(problem)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_quadratic() -> Objective {
        // Q = [[2, 0.5], [0.5, 1]], eigenvalues (3 +- sqrt(2))/2.
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = DVector::from_vec(vec![1.0, -1.0]);
        Objective::quadratic(q, r, 0.25).unwrap()
    }

    #[test]
    fn quadratic_value_and_gradient() {
        let f = small_quadratic();
        let y = DVector::from_vec(vec![1.0, 2.0]);
        // y'Qy = 2 + 2*0.5*2 + 4 = 8; r'y = -1; + 0.25.
        assert_relative_eq!(f.value(&y), 7.25, epsilon = 1e-14);
        // grad = 2Qy + r = (6, 5) + (1, -1) = (7, 4).
        assert_eq!(f.gradient(&y).as_slice(), &[7.0, 4.0]);
    }

    #[test]
    fn quadratic_sigma_is_twice_min_eigenvalue() {
        let f = small_quadratic();
        let expected = 3.0 - 2.0_f64.sqrt(); // 2 * (3 - sqrt 2)/2
        assert_relative_eq!(f.sigma(), expected, epsilon = 1e-12);
        assert_relative_eq!(f.smoothness(), 3.0 + 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn indefinite_quadratic_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let r = DVector::zeros(2);
        assert!(Objective::quadratic(q, r, 0.0).is_err());
    }

    #[test]
    fn asymmetric_quadratic_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert!(Objective::quadratic(q, DVector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let objectives = vec![
            small_quadratic(),
            Objective::regularized_utility(
                Utility::Log { weight: 2.0 },
                DVector::from_vec(vec![0.3, 0.1, 0.2]),
                0.5,
                4.0,
            )
            .unwrap(),
            Objective::regularized_utility(
                Utility::Quadratic { weight: 1.5, target: 2.0 },
                DVector::from_vec(vec![0.2, 0.4]),
                0.0,
                3.0,
            )
            .unwrap(),
        ];
        let mut rng = crate::rng::stream(17, 0);
        for f in &objectives {
            for _ in 0..10 {
                let y = DVector::from_fn(f.dim(), |_, _| crate::rng::uniform(&mut rng, 0.6, 3.0));
                let g = f.gradient(&y);
                let h = 1e-6;
                for k in 0..f.dim() {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[k] += h;
                    ym[k] -= h;
                    let fd = (f.value(&yp) - f.value(&ym)) / (2.0 * h);
                    let denom = g[k].abs().max(1.0);
                    assert!(
                        (fd - g[k]).abs() / denom <= 1e-6,
                        "fd mismatch: coord {k}, analytic {}, fd {fd}",
                        g[k]
                    );
                }
            }
        }
    }

    #[test]
    fn strong_convexity_inequality_holds_on_samples() {
        let f = Objective::regularized_utility(
            Utility::Log { weight: 1.0 },
            DVector::from_vec(vec![0.5, 0.25]),
            0.2,
            5.0,
        )
        .unwrap();
        let mut rng = crate::rng::stream(3, 0);
        for _ in 0..200 {
            let a = DVector::from_fn(2, |_, _| crate::rng::uniform(&mut rng, 0.2, 5.0));
            let b = DVector::from_fn(2, |_, _| crate::rng::uniform(&mut rng, 0.2, 5.0));
            let lhs = (f.gradient(&a) - f.gradient(&b)).dot(&(&a - &b));
            let rhs = f.sigma() * (&a - &b).norm_squared();
            assert!(lhs >= rhs - 1e-10, "monotonicity violated: {lhs} < {rhs}");
        }
    }

    #[test]
    fn quadratic_utility_has_exact_quadratic_form() {
        let f = Objective::regularized_utility(
            Utility::Quadratic { weight: 1.5, target: 2.0 },
            DVector::from_vec(vec![0.2, 0.4]),
            0.0,
            3.0,
        )
        .unwrap();
        let form = f.quadratic_form().unwrap();
        let mut rng = crate::rng::stream(8, 0);
        for _ in 0..20 {
            let y = DVector::from_fn(2, |_, _| crate::rng::uniform(&mut rng, -2.0, 2.0));
            let quad = 0.5 * (&form.hessian * &y).dot(&y) + form.linear.dot(&y) + form.constant;
            assert_relative_eq!(quad, f.value(&y), epsilon = 1e-12);
            assert_relative_eq!(
                (&form.hessian * &y + &form.linear - f.gradient(&y)).norm(),
                0.0,
                epsilon = 1e-12
            );
        }
        assert!(Objective::regularized_utility(
            Utility::Log { weight: 1.0 },
            DVector::from_vec(vec![0.5]),
            0.1,
            1.0
        )
        .unwrap()
        .quadratic_form()
        .is_none());
    }

    #[test]
    fn constraint_violation_and_membership() {
        let c = PolyConstraint::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![3.0]),
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![10.0, 10.0]),
        )
        .unwrap();
        assert!(c.contains(&DVector::from_vec(vec![1.0, 1.0]), 0.0));
        assert!(!c.contains(&DVector::from_vec(vec![2.0, 2.0]), 1e-9));
        assert_relative_eq!(c.violation(&DVector::from_vec(vec![2.0, 2.0])), 1.0);
        assert_relative_eq!(c.violation(&DVector::from_vec(vec![-0.5, 1.0])), 0.5);
    }

    #[test]
    fn empty_box_rejected() {
        assert!(PolyConstraint::box_only(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0])
        )
        .is_err());
    }
}
