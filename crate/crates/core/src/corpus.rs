//! Named example families and a graded corpus with exact ground truth.

use crate::decomp::Decomposition;
use crate::error::Result;
use crate::funcrepr::{AffinePiece, ConvexFunction, ScalarKernel, ScalarTerm};
use crate::rng::{self, Purpose};
use crate::specfile::FunctionSpec;
use crate::vecspace::{Matrix, SpanAccumulator, Subspace, Vector};

/// Known `X_f`, `Y_f` and `v_f`, built independently of the decomposition code.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub x_space: Subspace,
    pub y_space: Subspace,
    pub v: Vector,
}

impl Truth {
    fn new(x_space: Subspace, v: Vector) -> Self {
        let y_space = x_space.orthogonal_complement();
        Truth { x_space, y_space, v }
    }

    fn full(n: usize) -> Self {
        Truth::new(Subspace::full(n), Vector::zeros(n))
    }

    /// `"X=<dim>;Y=<dim>;|v|=<norm>"`
    pub fn summary(&self) -> String {
        format!("X={};Y={};|v|={}", self.x_space.dim(), self.y_space.dim(), self.v.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub name: String,
    pub f: ConvexFunction,
    pub truth: Option<Truth>,
    pub tags: Vec<String>,
}

impl CorpusEntry {
    fn new(name: String, f: ConvexFunction, truth: Truth, tags: &[&str]) -> Self {
        let mut tags: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
        if truth.y_space.dim() >= 1 {
            tags.push("flat-directions".into());
        }
        CorpusEntry { name, f, truth: Some(truth), tags }
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn to_spec(&self) -> Result<FunctionSpec> {
        FunctionSpec::from_function(&self.f)
    }

    /// The ground truth as a decomposition of `f`.
    pub fn truth_decomposition(&self) -> Option<Result<Decomposition>> {
        self.truth
            .as_ref()
            .map(|t| Decomposition::from_parts(&self.f, t.x_space.clone(), t.v.clone()))
    }
}

fn check_n(n: usize) {
    assert!(n >= 1, "family size must be at least 1");
}

fn coordinate_relu(n: usize, weight: impl Fn(usize) -> f64, shift: impl Fn(usize) -> f64) -> ConvexFunction {
    let terms = (1..=n)
        .map(|k| ScalarTerm {
            weight: weight(k),
            kernel: ScalarKernel::ReluSquare,
            direction: Vector::unit(n, k - 1),
            shift: shift(k),
        })
        .collect();
    ConvexFunction::scalar_composite(n, terms).expect("valid coordinate terms")
}

/// `sum_n |x_n|^2 / 2^n`, i.e. `A = diag(2 / 2^n)`. Panics if `n == 0`.
pub fn make_weighted_quadratic(n: usize) -> CorpusEntry {
    check_n(n);
    let diag: Vec<f64> = (1..=n).map(|k| 2.0 * 0.5f64.powi(k as i32)).collect();
    let f = ConvexFunction::quadratic(Matrix::diagonal(&diag), Vector::zeros(n), 0.0).expect("diagonal PSD");
    CorpusEntry::new(
        format!("weighted-quadratic-N{n}"),
        f,
        Truth::full(n),
        &["strict-min-at-0", "coercive", "paper-example", "quadratic"],
    )
}

/// `sum_n theta(x_n)`: not directionally coercive, yet flat on no line. Panics if `n == 0`.
pub fn make_example_gamma(n: usize) -> CorpusEntry {
    check_n(n);
    CorpusEntry::new(
        format!("example-gamma-N{n}"),
        coordinate_relu(n, |_| 1.0, |_| 0.0),
        Truth::full(n),
        &["paper-counterexample", "paper-example", "composite"],
    )
}

/// `sum_n 2^-n theta(x_n - n)`. Panics if `n == 0`.
pub fn make_example33(n: usize) -> CorpusEntry {
    check_n(n);
    CorpusEntry::new(
        format!("example33-N{n}"),
        coordinate_relu(n, |k| 0.5f64.powi(k as i32), |k| k as f64),
        Truth::full(n),
        &["no-strict-min-limit", "paper-example", "composite"],
    )
}

/// Truncation sizes of the named families in the graded corpus.
pub const FAMILY_SIZES: [usize; 5] = [1, 2, 4, 8, 16];

struct Draws {
    seed: u64,
    next: u64,
}

impl Draws {
    fn gaussian(&mut self, dim: usize, scale: f64) -> Vector {
        let mut r = rng::substream(self.seed, Purpose::Corpus, self.next);
        self.next += 1;
        rng::gaussian_vector(&mut r, dim, scale)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let g = self.gaussian(1, 1.0)[0];
        // squash a normal draw into (lo, hi)
        lo + (hi - lo) * 0.5 * (1.0 + (g / 2.0).tanh())
    }

    /// `k` orthonormal vectors in `R^n`.
    fn frame(&mut self, n: usize, k: usize) -> Vec<Vector> {
        let mut acc = SpanAccumulator::new(n, 1e-6).expect("positive tolerance");
        while acc.rank() < k {
            let g = self.gaussian(n, 1.0);
            acc.push(&g).expect("matching dimension");
        }
        acc.finish().basis().to_vec()
    }
}

fn span_of(n: usize, vs: &[Vector]) -> Subspace {
    Subspace::span(n, vs, 1e-9).expect("matching dimension")
}

fn drift(x: &Subspace, l: &Vector) -> Vector {
    x.complement_project(l).expect("matching dimension")
}

fn psd_quadratic(d: &mut Draws, n: usize, r: usize) -> (ConvexFunction, Truth) {
    let u = d.frame(n, r);
    let lambdas: Vec<f64> = (0..r).map(|_| d.uniform(0.5, 4.0)).collect();
    let weighted: Vec<(f64, &Vector)> = lambdas.iter().cloned().zip(u.iter()).collect();
    let a = Matrix::sum_of_outer(n, &weighted);
    let b = d.gaussian(n, 1.0);
    let c = d.uniform(-1.0, 1.0);
    let x = span_of(n, &u);
    let v = drift(&x, &b);
    let f = ConvexFunction::quadratic(a, b, c).expect("PSD by construction");
    (f, Truth::new(x, v))
}

/// `max_j <+-u_j, .>` over an orthonormal `u_1..u_k`, plus a drift `<l, .>`.
fn cross_polytope(d: &mut Draws, n: usize, k: usize) -> (ConvexFunction, Truth) {
    let u = d.frame(n, k);
    let mut pieces = Vec::with_capacity(2 * k);
    for uj in &u {
        pieces.push(AffinePiece { slope: uj.clone(), offset: 0.0 });
        pieces.push(AffinePiece { slope: -uj, offset: 0.0 });
    }
    let l = d.gaussian(n, 1.0);
    let x = span_of(n, &u);
    let v = drift(&x, &l);
    let base = ConvexFunction::max_affine(pieces).expect("nonempty pieces");
    let f = ConvexFunction::affine_plus(base, l, 0.5).expect("matching dimension");
    (f, Truth::new(x, v))
}

/// Scalar composite with directions in a random `k`-dimensional subspace.
fn subspace_composite(d: &mut Draws, n: usize, k: usize, kernel: ScalarKernel, scale: f64) -> (ConvexFunction, Truth) {
    let u = d.frame(n, k);
    let mut terms = Vec::new();
    let mut dirs = Vec::new();
    for j in 0..k + 1 {
        let coeffs = d.gaussian(k, 1.0);
        let mut a = Vector::zeros(n);
        for (i, uj) in u.iter().enumerate() {
            a = a.add_scaled(coeffs[i], uj);
        }
        // the first k directions are the frame itself so the span is all of it
        let a = if j < k { u[j].scaled(scale) } else { a.scaled(scale) };
        dirs.push(a.clone());
        terms.push(ScalarTerm { weight: d.uniform(0.5, 2.0), kernel, direction: a, shift: d.uniform(-1.0, 1.0) });
    }
    let f = ConvexFunction::scalar_composite(n, terms).expect("valid terms");
    (f, Truth::new(span_of(n, &dirs), Vector::zeros(n)))
}

/// Deterministic corpus: the named families at [`FAMILY_SIZES`], random PSD
/// quadratics of deficient rank, max-affine functions with slopes in a known
/// subspace plus drift, scalar composites in a known subspace, sums and affine
/// shifts of these, and plain affine functions. Every entry carries exact truth.
pub fn make_graded_corpus(seed: u64) -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for n in FAMILY_SIZES {
        out.push(make_weighted_quadratic(n));
    }
    for n in FAMILY_SIZES {
        out.push(make_example_gamma(n));
    }
    for n in FAMILY_SIZES {
        out.push(make_example33(n));
    }

    let mut d = Draws { seed, next: 0 };
    for (n, r) in [(2, 1), (3, 1), (3, 2), (4, 2), (5, 3), (6, 5), (8, 4), (12, 5), (16, 7)] {
        let (f, truth) = psd_quadratic(&mut d, n, r);
        out.push(CorpusEntry::new(format!("psd-quadratic-n{n}-r{r}"), f, truth, &["quadratic"]));
    }
    for (n, k) in [(2, 1), (3, 2), (4, 1), (6, 3), (8, 5), (12, 4)] {
        let (f, truth) = cross_polytope(&mut d, n, k);
        out.push(CorpusEntry::new(format!("max-affine-n{n}-k{k}"), f, truth, &["max-affine"]));
    }
    for (n, k, kernel, scale) in [
        (3, 2, ScalarKernel::Abs, 1.0),
        (4, 4, ScalarKernel::Abs, 1.0),
        (5, 2, ScalarKernel::Exp, 0.1),
        (6, 3, ScalarKernel::ReluSquare, 1.0),
        (4, 3, ScalarKernel::Square, 0.5),
    ] {
        let (f, truth) = subspace_composite(&mut d, n, k, kernel, scale);
        out.push(CorpusEntry::new(
            format!("{}-composite-n{n}-k{k}", kernel.name().replace('_', "-")),
            f,
            truth,
            &["composite"],
        ));
    }

    for (n, r, k) in [(4, 1, 1), (6, 2, 2), (8, 3, 2), (16, 4, 6)] {
        let (q, tq) = psd_quadratic(&mut d, n, r);
        let (m, tm) = cross_polytope(&mut d, n, k);
        let mut basis = tq.x_space.basis().to_vec();
        basis.extend_from_slice(tm.x_space.basis());
        let x = span_of(n, &basis);
        let xi0 = &q.subgradient(&Vector::zeros(n)).expect("finite") + &m.subgradient(&Vector::zeros(n)).expect("finite");
        let v = drift(&x, &xi0);
        let f = ConvexFunction::sum(vec![q, m]).expect("matching dimensions");
        out.push(CorpusEntry::new(format!("sum-n{n}-r{r}-k{k}"), f, Truth::new(x, v), &["sum"]));
    }

    for base in [make_example_gamma(3), make_example33(4), make_weighted_quadratic(5)] {
        let n = base.dim();
        let l = d.gaussian(n, 1.0);
        let f = ConvexFunction::affine_plus(base.f, l, 1.0).expect("matching dimension");
        let mut tags: Vec<&str> = vec!["affine-shift"];
        if base.tags.iter().any(|t| t == "coercive") {
            tags.push("coercive");
        }
        out.push(CorpusEntry::new(format!("shifted-{}", base.name), f, Truth::full(n), &tags));
    }
    for n in [2, 5] {
        let l = d.gaussian(n, 1.0);
        let f = ConvexFunction::affine(l.clone(), -0.5).expect("finite");
        out.push(CorpusEntry::new(format!("affine-n{n}"), f, Truth::new(Subspace::zero(n), l), &["affine"]));
    }
    out
}
