//! Dense vectors, orthonormal subspace bases and projections.

use std::ops::{Add, Index, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite vector in `R^n`. Also stands in for linear forms via the inner product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("vector must have positive dimension".into()));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("entry {i} is not finite")));
        }
        Ok(Vector(entries))
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        Vector(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// The `i`-th standard basis vector (0-based).
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Vector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|x| s * x).collect())
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch { expected, found: self.dim() });
        }
        Ok(())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        Vector(self.0.iter().map(|a| -a).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::InvalidInput("matrix must have at least one row".into()));
        }
        let n_cols = rows[0].len();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch { expected: n_cols, found: row.len() });
            }
            data.extend(row);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows: n_rows, cols: n_cols, data })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Matrix { rows: n, cols: n, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::diagonal(&vec![1.0; n])
    }

    /// `sum_k w_k u_k u_k^T`
    pub fn sum_of_outer(dim: usize, weighted: &[(f64, &Vector)]) -> Self {
        let mut data = vec![0.0; dim * dim];
        for (w, u) in weighted {
            for i in 0..dim {
                for j in 0..dim {
                    data[i * dim + j] += w * u[i] * u[j];
                }
            }
        }
        Matrix { rows: dim, cols: dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        Vector((0..self.rows).map(|i| dot(self.row(i), x.as_slice())).collect())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

/// A linear subspace of `R^n` given by an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient_dim: usize,
    basis: Vec<Vector>,
    tol: f64,
}

/// Incremental rank-revealing span builder (modified Gram-Schmidt, one
/// reorthogonalization pass).
///
/// A candidate is rejected as dependent iff its residual after projection has
/// norm `<= tol * max(1, |candidate|)`.
#[derive(Debug, Clone)]
pub struct SpanAccumulator {
    ambient_dim: usize,
    basis: Vec<Vector>,
    tol: f64,
}

impl SpanAccumulator {
    pub fn new(ambient_dim: usize, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("span tolerance must be positive, got {tol}")));
        }
        Ok(SpanAccumulator { ambient_dim, basis: Vec::new(), tol })
    }

    pub fn seeded(start: &Subspace) -> Self {
        SpanAccumulator {
            ambient_dim: start.ambient_dim,
            basis: start.basis.clone(),
            tol: start.tol,
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Offers a candidate; returns whether it enlarged the span.
    pub fn push(&mut self, candidate: &Vector) -> Result<bool> {
        candidate.check_dim(self.ambient_dim)?;
        if self.basis.len() == self.ambient_dim {
            return Ok(false);
        }
        let scale = candidate.norm();
        let mut r = candidate.as_slice().to_vec();
        for _pass in 0..2 {
            for b in &self.basis {
                let c = dot(&r, b.as_slice());
                for (ri, bi) in r.iter_mut().zip(b.as_slice()) {
                    *ri -= c * bi;
                }
            }
        }
        let rn = dot(&r, &r).sqrt();
        if rn <= self.tol * scale.max(1.0) {
            return Ok(false);
        }
        r.iter_mut().for_each(|x| *x /= rn);
        self.basis.push(Vector(r));
        Ok(true)
    }

    pub fn finish(self) -> Subspace {
        Subspace { ambient_dim: self.ambient_dim, basis: self.basis, tol: self.tol }
    }

    pub fn snapshot(&self) -> Subspace {
        self.clone().finish()
    }
}

impl Subspace {
    /// Orthonormal basis of `span(vectors)`, processed in input order.
    pub fn span<'a, I>(ambient_dim: usize, vectors: I, tol: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Vector>,
    {
        let mut acc = SpanAccumulator::new(ambient_dim, tol)?;
        for v in vectors {
            acc.push(v)?;
        }
        Ok(acc.finish())
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Subspace { ambient_dim, basis: Vec::new(), tol: 1e-9 }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: (0..ambient_dim).map(|i| Vector::unit(ambient_dim, i)).collect(),
            tol: 1e-9,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_zero(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `sum_i <b_i, z> b_i`
    pub fn project(&self, z: &Vector) -> Result<Vector> {
        z.check_dim(self.ambient_dim)?;
        let mut out = vec![0.0; self.ambient_dim];
        for b in &self.basis {
            let c = b.dot(z);
            for (o, bi) in out.iter_mut().zip(b.as_slice()) {
                *o += c * bi;
            }
        }
        Ok(Vector(out))
    }

    /// `z - project(z)`
    pub fn complement_project(&self, z: &Vector) -> Result<Vector> {
        let p = self.project(z)?;
        Ok(z - &p)
    }

    /// Coordinates of `P z` in this basis.
    pub fn coordinates(&self, z: &Vector) -> Result<Vec<f64>> {
        z.check_dim(self.ambient_dim)?;
        Ok(self.basis.iter().map(|b| b.dot(z)).collect())
    }

    /// Linear combination of the basis with the given coordinates.
    pub fn embed(&self, coords: &[f64]) -> Result<Vector> {
        if coords.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: coords.len() });
        }
        let mut out = vec![0.0; self.ambient_dim];
        for (c, b) in coords.iter().zip(&self.basis) {
            for (o, bi) in out.iter_mut().zip(b.as_slice()) {
                *o += c * bi;
            }
        }
        Ok(Vector(out))
    }

    /// Orthonormal basis of the orthogonal complement, completed from the
    /// standard basis.
    pub fn orthogonal_complement(&self) -> Subspace {
        let mut acc = SpanAccumulator::seeded(self);
        let own = self.dim();
        // A standard basis vector contributes a residual of norm at least
        // 1/sqrt(n) for some choice, so a loose threshold is safe here.
        acc.tol = 0.5 / (self.ambient_dim as f64).sqrt();
        for i in 0..self.ambient_dim {
            if acc.rank() == self.ambient_dim {
                break;
            }
            acc.push(&Vector::unit(self.ambient_dim, i))
                .expect("unit vector has ambient dimension");
        }
        let mut complement = acc.finish();
        complement.basis.drain(..own);
        complement.tol = self.tol;
        complement
    }

    /// Max over unit `u` in `self` of `dist(u, other)`: the spectral norm of the
    /// residual of this basis off `other`.
    fn directed_gap(&self, other: &Subspace) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let n = self.ambient_dim;
        let residuals: Vec<f64> = self
            .basis
            .iter()
            .flat_map(|b| other.complement_project(b).expect("matching ambient dims").0)
            .collect();
        let m = nalgebra::DMatrix::from_column_slice(n, self.dim(), &residuals);
        m.singular_values().iter().fold(0.0f64, |a, s| a.max(*s))
    }
}

/// Distance between subspaces: `sin` of the largest principal angle when the
/// dimensions agree, `1` otherwise.
pub fn subspace_distance(a: &Subspace, b: &Subspace) -> Result<f64> {
    if a.ambient_dim != b.ambient_dim {
        return Err(Error::DimensionMismatch { expected: a.ambient_dim, found: b.ambient_dim });
    }
    if a.dim() != b.dim() {
        return Ok(1.0);
    }
    Ok(a.directed_gap(b).max(b.directed_gap(a)).clamp(0.0, 1.0))
}
