//! Continuous convex functions on `R^n` with exact value and subgradient oracles.
//!
//! Structural variants are convex by construction. [`BlackBox`] wraps
//! arbitrary oracles; callers that consume its subgradients check them with
//! [`validate_subgradient`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::vecspace::{Matrix, Vector};

/// Largest argument accepted by the exponential kernel.
pub const EXP_ARG_LIMIT: f64 = 700.0;

/// Tie tolerance when choosing the active piece of a max-affine function.
pub const ACTIVE_PIECE_TIE: f64 = 1e-12;

/// Probe count used whenever the library checks a black-box subgradient.
pub const ORACLE_PROBES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarKernel {
    /// `0` for `t <= 0`, `t^2` for `t >= 0`.
    ReluSquare,
    Square,
    Abs,
    Exp,
}

impl ScalarKernel {
    pub fn value(self, t: f64) -> Result<f64> {
        Ok(match self {
            ScalarKernel::ReluSquare => {
                if t <= 0.0 {
                    0.0
                } else {
                    t * t
                }
            }
            ScalarKernel::Square => t * t,
            ScalarKernel::Abs => t.abs(),
            ScalarKernel::Exp => {
                if t > EXP_ARG_LIMIT {
                    return Err(Error::Range(format!("exp argument {t} exceeds {EXP_ARG_LIMIT}")));
                }
                t.exp()
            }
        })
    }

    /// Chosen element of the subdifferential. `Abs` picks 0 at its kink.
    pub fn derivative(self, t: f64) -> Result<f64> {
        Ok(match self {
            ScalarKernel::ReluSquare => {
                if t <= 0.0 {
                    0.0
                } else {
                    2.0 * t
                }
            }
            ScalarKernel::Square => 2.0 * t,
            ScalarKernel::Abs => {
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ScalarKernel::Exp => {
                if t > EXP_ARG_LIMIT {
                    return Err(Error::Range(format!("exp argument {t} exceeds {EXP_ARG_LIMIT}")));
                }
                t.exp()
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarKernel::ReluSquare => "relu_square",
            ScalarKernel::Square => "square",
            ScalarKernel::Abs => "abs",
            ScalarKernel::Exp => "exp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "relu_square" => ScalarKernel::ReluSquare,
            "square" => ScalarKernel::Square,
            "abs" => ScalarKernel::Abs,
            "exp" => ScalarKernel::Exp,
            _ => return None,
        })
    }

    /// Whether `kernel(c*t - s) -> inf` as `t -> inf` for a direction with `c != 0`,
    /// independent of the sign of `c`.
    pub fn grows_both_ways(self) -> bool {
        matches!(self, ScalarKernel::Square | ScalarKernel::Abs)
    }
}

/// `1/2 x^T A x + <b, x> + c` with `A` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    a: Matrix,
    b: Vector,
    c: f64,
}

impl Quadratic {
    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Vector {
        &self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub slope: Vector,
    pub offset: f64,
}

/// `max_i <a_i, x> + c_i`
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffine {
    pieces: Vec<AffinePiece>,
}

impl MaxAffine {
    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    /// Index of the lowest piece attaining the max within [`ACTIVE_PIECE_TIE`].
    pub fn active_piece(&self, z: &Vector) -> usize {
        let values: Vec<f64> = self.pieces.iter().map(|p| p.slope.dot(z) + p.offset).collect();
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        values.iter().position(|v| *v >= max - ACTIVE_PIECE_TIE).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTerm {
    pub weight: f64,
    pub kernel: ScalarKernel,
    pub direction: Vector,
    pub shift: f64,
}

impl ScalarTerm {
    fn argument(&self, z: &Vector) -> f64 {
        self.direction.dot(z) - self.shift
    }
}

/// `sum_i w_i * kernel_i(<a_i, x> - s_i)`
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarComposite {
    dim: usize,
    terms: Vec<ScalarTerm>,
}

impl ScalarComposite {
    pub fn terms(&self) -> &[ScalarTerm] {
        &self.terms
    }
}

/// `base + <l, x> + c0`
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePlus {
    base: Box<ConvexFunction>,
    l: Vector,
    c0: f64,
}

impl AffinePlus {
    pub fn base(&self) -> &ConvexFunction {
        &self.base
    }
    pub fn l(&self) -> &Vector {
        &self.l
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
}

pub type ValueOracle = Arc<dyn Fn(&Vector) -> Result<f64> + Send + Sync>;
pub type SubgradientOracle = Arc<dyn Fn(&Vector) -> Result<Vector> + Send + Sync>;

/// Opaque value/subgradient oracle pair.
///
/// The oracles may be called from several worker threads at once.
#[derive(Clone)]
pub struct BlackBox {
    dim: usize,
    value: ValueOracle,
    subgradient: SubgradientOracle,
}

impl BlackBox {
    pub fn new(dim: usize, value: ValueOracle, subgradient: SubgradientOracle) -> Self {
        BlackBox { dim, value, subgradient }
    }
}

impl fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBox").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl PartialEq for BlackBox {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && Arc::ptr_eq(&self.value, &other.value)
            && Arc::ptr_eq(&self.subgradient, &other.subgradient)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexFunction {
    Quadratic(Quadratic),
    MaxAffine(MaxAffine),
    ScalarComposite(ScalarComposite),
    AffinePlus(AffinePlus),
    Sum(Vec<ConvexFunction>),
    BlackBox(BlackBox),
}

impl ConvexFunction {
    pub fn quadratic(a: Matrix, b: Vector, c: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidInput(format!(
                "quadratic matrix must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        b.check_dim(a.rows())?;
        if !c.is_finite() {
            return Err(Error::InvalidInput("quadratic constant must be finite".into()));
        }
        let scale = a.max_abs().max(1.0);
        if !a.is_symmetric(1e-12 * scale) {
            return Err(Error::NotConvex("quadratic matrix is not symmetric".into()));
        }
        let lambda_min = smallest_eigenvalue_estimate(&a);
        if lambda_min < -1e-10 * gershgorin_bound(&a).max(f64::MIN_POSITIVE) {
            return Err(Error::NotConvex(format!(
                "quadratic matrix has negative eigenvalue estimate {lambda_min:e}"
            )));
        }
        Ok(ConvexFunction::Quadratic(Quadratic { a, b, c }))
    }

    pub fn max_affine(pieces: Vec<AffinePiece>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::InvalidInput("max-affine needs at least one piece".into()))?;
        let dim = first.slope.dim();
        for p in &pieces {
            p.slope.check_dim(dim)?;
            if !p.offset.is_finite() {
                return Err(Error::InvalidInput("max-affine offset must be finite".into()));
            }
        }
        Ok(ConvexFunction::MaxAffine(MaxAffine { pieces }))
    }

    pub fn scalar_composite(dim: usize, terms: Vec<ScalarTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        for t in &terms {
            t.direction.check_dim(dim)?;
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(Error::NotConvex(format!("term weight {} must be positive", t.weight)));
            }
            if t.direction.is_zero() {
                return Err(Error::InvalidInput("term direction must be nonzero".into()));
            }
            if !t.shift.is_finite() {
                return Err(Error::InvalidInput("term shift must be finite".into()));
            }
        }
        Ok(ConvexFunction::ScalarComposite(ScalarComposite { dim, terms }))
    }

    pub fn affine_plus(base: ConvexFunction, l: Vector, c0: f64) -> Result<Self> {
        l.check_dim(base.dim())?;
        if !c0.is_finite() {
            return Err(Error::InvalidInput("affine constant must be finite".into()));
        }
        Ok(ConvexFunction::AffinePlus(AffinePlus { base: Box::new(base), l, c0 }))
    }

    pub fn sum(parts: Vec<ConvexFunction>) -> Result<Self> {
        let dim = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("sum needs at least one part".into()))?
            .dim();
        for p in &parts {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
        }
        Ok(ConvexFunction::Sum(parts))
    }

    /// `<l, x> + c0`, represented over the zero quadratic.
    pub fn affine(l: Vector, c0: f64) -> Result<Self> {
        let n = l.dim();
        let zero = ConvexFunction::quadratic(Matrix::diagonal(&vec![0.0; n]), Vector::zeros(n), 0.0)?;
        ConvexFunction::affine_plus(zero, l, c0)
    }

    pub fn black_box(bb: BlackBox) -> Self {
        ConvexFunction::BlackBox(bb)
    }

    /// Hides the structure of `f` behind its oracles.
    pub fn as_black_box(f: &ConvexFunction) -> Self {
        let fv = f.clone();
        let fs = f.clone();
        ConvexFunction::BlackBox(BlackBox::new(
            f.dim(),
            Arc::new(move |z| fv.eval(z)),
            Arc::new(move |z| fs.subgradient(z)),
        ))
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexFunction::Quadratic(q) => q.b.dim(),
            ConvexFunction::MaxAffine(m) => m.pieces[0].slope.dim(),
            ConvexFunction::ScalarComposite(s) => s.dim,
            ConvexFunction::AffinePlus(a) => a.l.dim(),
            ConvexFunction::Sum(parts) => parts[0].dim(),
            ConvexFunction::BlackBox(bb) => bb.dim,
        }
    }

    /// True when any constituent is a black box.
    pub fn has_black_box(&self) -> bool {
        match self {
            ConvexFunction::BlackBox(_) => true,
            ConvexFunction::AffinePlus(a) => a.base.has_black_box(),
            ConvexFunction::Sum(parts) => parts.iter().any(|p| p.has_black_box()),
            _ => false,
        }
    }

    pub fn eval(&self, z: &Vector) -> Result<f64> {
        z.check_dim(self.dim())?;
        let v = self.eval_unchecked(z)?;
        if !v.is_finite() {
            return Err(Error::Range(format!("function value {v} is not finite")));
        }
        Ok(v)
    }

    fn eval_unchecked(&self, z: &Vector) -> Result<f64> {
        match self {
            ConvexFunction::Quadratic(q) => {
                let az = q.a.mul_vec(z);
                Ok(0.5 * z.dot(&az) + q.b.dot(z) + q.c)
            }
            ConvexFunction::MaxAffine(m) => Ok(m
                .pieces
                .iter()
                .map(|p| p.slope.dot(z) + p.offset)
                .fold(f64::NEG_INFINITY, f64::max)),
            ConvexFunction::ScalarComposite(s) => {
                let mut total = 0.0;
                for t in &s.terms {
                    total += t.weight * t.kernel.value(t.argument(z))?;
                }
                Ok(total)
            }
            ConvexFunction::AffinePlus(a) => Ok(a.base.eval_unchecked(z)? + a.l.dot(z) + a.c0),
            ConvexFunction::Sum(parts) => {
                let mut total = parts[0].eval_unchecked(z)?;
                for p in &parts[1..] {
                    total += p.eval_unchecked(z)?;
                }
                Ok(total)
            }
            ConvexFunction::BlackBox(bb) => (bb.value)(z),
        }
    }

    /// One deterministic element of the subdifferential at `z`.
    pub fn subgradient(&self, z: &Vector) -> Result<Vector> {
        z.check_dim(self.dim())?;
        let g = self.subgradient_unchecked(z)?;
        g.check_dim(self.dim())?;
        if g.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Range("subgradient is not finite".into()));
        }
        Ok(g)
    }

    fn subgradient_unchecked(&self, z: &Vector) -> Result<Vector> {
        match self {
            ConvexFunction::Quadratic(q) => Ok(&q.a.mul_vec(z) + &q.b),
            ConvexFunction::MaxAffine(m) => Ok(m.pieces[m.active_piece(z)].slope.clone()),
            ConvexFunction::ScalarComposite(s) => {
                let mut g = Vector::zeros(s.dim);
                for t in &s.terms {
                    let d = t.kernel.derivative(t.argument(z))?;
                    if d != 0.0 {
                        g = g.add_scaled(t.weight * d, &t.direction);
                    }
                }
                Ok(g)
            }
            ConvexFunction::AffinePlus(a) => Ok(&a.base.subgradient_unchecked(z)? + &a.l),
            ConvexFunction::Sum(parts) => {
                let mut g = parts[0].subgradient_unchecked(z)?;
                for p in &parts[1..] {
                    g = &g + &p.subgradient_unchecked(z)?;
                }
                Ok(g)
            }
            ConvexFunction::BlackBox(bb) => (bb.subgradient)(z),
        }
    }

    pub fn sample(&self, z: &Vector) -> Result<SubgradientSample> {
        Ok(SubgradientSample { point: z.clone(), xi: self.subgradient(z)? })
    }
}

/// A claimed subgradient `xi` of some function at `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientSample {
    pub point: Vector,
    pub xi: Vector,
}

const PROBE_SCALES: [f64; 5] = [1e-2, 1e-1, 1.0, 10.0, 100.0];

/// Checks `f(y) >= f(p) + <xi, y - p> - 1e-8 (1 + |f(y)|)` at `probes` seeded
/// points around `p`. Probes where `f` cannot be evaluated are skipped.
pub fn validate_subgradient(
    f: &ConvexFunction,
    sample: &SubgradientSample,
    probes: usize,
    seed: u64,
) -> bool {
    let n = f.dim();
    if sample.point.dim() != n || sample.xi.dim() != n {
        return false;
    }
    let fp = match f.eval(&sample.point) {
        Ok(v) => v,
        Err(_) => return false,
    };
    (0..probes).all(|k| {
        let mut rng = rng::substream(seed, Purpose::SubgradientProbe, k as u64);
        let scale = PROBE_SCALES[k % PROBE_SCALES.len()];
        let step = rng::gaussian_vector(&mut rng, n, scale);
        let y = &sample.point + &step;
        match f.eval(&y) {
            Ok(fy) => fy >= fp + sample.xi.dot(&step) - 1e-8 * (1.0 + fy.abs()),
            Err(_) => true,
        }
    })
}

/// [`validate_subgradient`] with [`ORACLE_PROBES`] probes, as an error.
pub fn check_subgradient(f: &ConvexFunction, sample: &SubgradientSample, seed: u64) -> Result<()> {
    if validate_subgradient(f, sample, ORACLE_PROBES, seed) {
        Ok(())
    } else {
        Err(Error::InvalidSubgradient { point: sample.point.as_slice().to_vec() })
    }
}

/// Max over seeded triples of the normalized convexity violation
/// `(g(lx + (1-l)y) - l g(x) - (1-l) g(y)) / (1 + |g(x)| + |g(y)|)`, floored at 0.
pub fn convexity_defect<G>(g: G, dim: usize, triples: usize, scale: f64, seed: u64) -> Result<f64>
where
    G: Fn(&Vector) -> Result<f64>,
{
    let mut worst = 0.0f64;
    for k in 0..triples {
        let mut r = rng::substream(seed, Purpose::ResidualProbe, k as u64);
        let x = rng::gaussian_vector(&mut r, dim, scale);
        let y = rng::gaussian_vector(&mut r, dim, scale);
        let lambda: f64 = r.random();
        let m = x.scaled(lambda).add_scaled(1.0 - lambda, &y);
        let (gx, gy, gm) = (g(&x)?, g(&y)?, g(&m)?);
        let gap = gm - lambda * gx - (1.0 - lambda) * gy;
        worst = worst.max(gap / (1.0 + gx.abs() + gy.abs()));
    }
    Ok(worst)
}

fn gershgorin_bound(a: &Matrix) -> f64 {
    (0..a.rows())
        .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue estimate of a symmetric matrix: 64 power-iteration steps
/// on `s I - A`, with `s` a Gershgorin bound on the spectrum.
pub fn smallest_eigenvalue_estimate(a: &Matrix) -> f64 {
    let n = a.rows();
    let s = gershgorin_bound(a);
    if s == 0.0 {
        return 0.0;
    }
    let diag_min = (0..n).map(|i| a.get(i, i)).fold(f64::INFINITY, f64::min);
    let mut r = rng::substream(0x5eed, Purpose::SubgradientProbe, u64::MAX);
    let mut x = rng::unit_vector(&mut r, n);
    let mut rayleigh = 0.0;
    for _ in 0..64 {
        let ax = a.mul_vec(&x);
        let bx = x.scaled(s).add_scaled(-1.0, &ax);
        rayleigh = x.dot(&bx);
        let norm = bx.norm();
        if norm == 0.0 {
            break;
        }
        x = bx.scaled(1.0 / norm);
    }
    (s - rayleigh).min(diag_min)
}
