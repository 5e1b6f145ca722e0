//! Brute-force oracles for cross-checking `convexdecomp` on small inputs.
//!
//! Each oracle takes a route disjoint from the library's: Jacobi
//! eigendecomposition instead of Gram-Schmidt ranks, exhaustive grids instead
//! of directed search.

use convexdecomp::funcrepr::MaxAffine;
use convexdecomp::vecspace::{subspace_distance, SpanAccumulator};
use convexdecomp::{ConvexFunction, Error, Matrix, Result, Subspace, Vector};

/// Largest matrix accepted by [`nullspace_oracle`].
pub const NULLSPACE_MAX_DIM: usize = 64;
/// Eigenvalues with `|lambda| <= NULL_THRESHOLD * max |lambda|` count as zero.
pub const NULL_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Quantity {
    Subspace(Subspace),
    Vector(Vector),
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub quantity: String,
    pub main_value: Quantity,
    pub oracle_value: Quantity,
    pub discrepancy: f64,
}

impl OracleReport {
    pub fn subspaces(quantity: &str, main: Subspace, oracle: Subspace) -> Result<Self> {
        let discrepancy = subspace_distance(&main, &oracle)?;
        Ok(Self::make(quantity, Quantity::Subspace(main), Quantity::Subspace(oracle), discrepancy))
    }

    pub fn vectors(quantity: &str, main: Vector, oracle: Vector) -> Result<Self> {
        oracle.check_dim(main.dim())?;
        let discrepancy = (&main - &oracle).norm();
        Ok(Self::make(quantity, Quantity::Vector(main), Quantity::Vector(oracle), discrepancy))
    }

    pub fn scalars(quantity: &str, main: f64, oracle: f64) -> Self {
        Self::make(quantity, Quantity::Scalar(main), Quantity::Scalar(oracle), (main - oracle).abs())
    }

    fn make(quantity: &str, main_value: Quantity, oracle_value: Quantity, discrepancy: f64) -> Self {
        OracleReport { quantity: quantity.to_string(), main_value, oracle_value, discrepancy }
    }
}

/// Eigenvalues and eigenvectors (as columns of the returned row-major
/// matrix) of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &Matrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.rows();
    if !a.is_square() || !a.is_symmetric(1e-12 * a.max_abs().max(1.0)) {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    let mut m = a.to_rows();
    let mut vecs: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let total: f64 = m.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in vecs.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| m[i][i]).collect(), vecs))
}

/// Null space of a symmetric matrix from its full eigendecomposition.
pub fn nullspace_oracle(a: &Matrix) -> Result<Subspace> {
    let n = a.rows();
    if n > NULLSPACE_MAX_DIM {
        return Err(Error::InvalidInput(format!("dimension {n} exceeds {NULLSPACE_MAX_DIM}")));
    }
    let (lambdas, vecs) = jacobi_eigen(a)?;
    let top = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let null: Vec<Vector> = (0..n)
        .filter(|&j| lambdas[j].abs() <= NULL_THRESHOLD * top)
        .map(|j| Vector::new((0..n).map(|i| vecs[i][j]).collect()).expect("finite eigenvector"))
        .collect();
    Subspace::span(n, &null, 1e-9)
}

/// `(t, f(x + t v))` for each `t`, uninterpreted.
pub fn ray_table(f: &ConvexFunction, x: &Vector, v: &Vector, ts: &[f64]) -> Result<Vec<(f64, f64)>> {
    x.check_dim(f.dim())?;
    v.check_dim(f.dim())?;
    ts.iter().map(|&t| Ok((t, f.eval(&x.add_scaled(t, v))?))).collect()
}

/// Exhaustive minimum over the grid `[-radius, radius]^d` with
/// `points_per_axis` points per axis. Ties go to the first point in
/// row-major order (last coordinate fastest).
pub fn grid_argmin(f: &ConvexFunction, radius: f64, points_per_axis: usize) -> Result<(Vector, f64)> {
    let d = f.dim();
    if d > 3 {
        return Err(Error::Precondition(format!("grid search needs dimension <= 3, got {d}")));
    }
    if points_per_axis < 2 {
        return Err(Error::InvalidInput("need at least 2 points per axis".into()));
    }
    let step = 2.0 * radius / (points_per_axis - 1) as f64;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| -radius + i as f64 * step).collect();
        let val = f.eval(&Vector::new(x.clone())?).unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(_, b)| val < *b) {
            best = Some((x, val));
        }
        let mut k = d;
        loop {
            if k == 0 {
                let (x, val) = best.expect("at least one grid point");
                return Ok((Vector::new(x)?, val));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < points_per_axis {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Span of all pairwise slope differences of a max-affine function.
pub fn pairwise_diff_span_oracle(f: &MaxAffine) -> Subspace {
    let pieces = f.pieces();
    let n = pieces[0].slope.dim();
    let mut acc = SpanAccumulator::new(n, 1e-9).expect("positive tolerance");
    for i in 0..pieces.len() {
        for j in i + 1..pieces.len() {
            acc.push(&(&pieces[i].slope - &pieces[j].slope)).expect("matching dimension");
        }
    }
    acc.finish()
}

/// `g - <xi, .>` as a function, for grid searches over shifted objectives.
pub fn shifted(f: &ConvexFunction, xi: &Vector) -> Result<ConvexFunction> {
    ConvexFunction::affine_plus(f.clone(), -xi, 0.0)
}
