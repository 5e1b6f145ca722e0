//! Canonical decomposition `f(z) = c_f(P_X z) + <v_f, z>`.
//!
//! `X_f` is the span of all subgradient differences and `Y_f = X_f^perp` is
//! the set of directions `v` along which `f(z0 + t v) - f(z0) - t <xi0, v>`
//! vanishes identically. Structural functions get closed forms for `X_f`;
//! black boxes are sampled. Either way the complement is cross-checked
//! against the flat-line characterization before a decomposition is returned.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funcrepr::{check_subgradient, validate_subgradient, ConvexFunction, MaxAffine, ORACLE_PROBES};
use crate::rng::{self, Purpose};
use crate::vecspace::{subspace_distance, SpanAccumulator, Subspace, Vector};

/// Relative tolerance of the flat-line test.
pub const FLAT_TOL: f64 = 1e-8;

/// Allowed disagreement between `X_f^perp` and the flat-line subspace.
pub const CHARACTERIZATION_TOL: f64 = 1e-6;

/// Strict-activity margin for max-affine piece retention.
pub const PIECE_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DecompConfig {
    /// Minimum number of sample points for the sampled path; `None` means `64 * dim`.
    pub samples: Option<usize>,
    pub seed: u64,
    pub tol_rank: f64,
    /// Line parameters for the flat-line test.
    pub ts: Vec<f64>,
    pub stability_batches: usize,
}

impl Default for DecompConfig {
    fn default() -> Self {
        DecompConfig {
            samples: None,
            seed: 0,
            tol_rank: 1e-9,
            ts: vec![1.0, -1.0, 4.0, -4.0, 16.0, -16.0, 64.0, -64.0, 256.0, -256.0],
            stability_batches: 3,
        }
    }
}

impl DecompConfig {
    pub fn with_seed(seed: u64) -> Self {
        DecompConfig { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == Some(0) {
            return Err(Error::InvalidInput("samples must be at least 1".into()));
        }
        if !(self.tol_rank > 0.0) {
            return Err(Error::InvalidInput("tol_rank must be positive".into()));
        }
        if !(self.ts.iter().any(|t| *t > 0.0) && self.ts.iter().any(|t| *t < 0.0)) {
            return Err(Error::InvalidInput("ts must contain both signs".into()));
        }
        if self.ts.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("ts must be finite".into()));
        }
        Ok(())
    }

    fn min_samples(&self, dim: usize) -> usize {
        self.samples.unwrap_or(64 * dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompMethod {
    /// Closed form from the representation.
    Exact,
    /// Subgradient differences at `samples` seeded points.
    Sampled { samples: usize },
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub x_space: Subspace,
    pub y_space: Subspace,
    /// Drift `v_f`, orthogonal to `x_space`.
    pub v: Vector,
    pub z0: Vector,
    pub xi0: Vector,
    /// `f(z0) - <xi0, z0>`, the attained lower bound of `f - <xi0, .>`.
    pub a: f64,
    pub method: DecompMethod,
    f: ConvexFunction,
}

impl Decomposition {
    /// `c_f(u)` for `u` given in coordinates of the `x_space` basis.
    pub fn core(&self, coords: &[f64]) -> Result<f64> {
        let x = self.x_space.embed(coords)?;
        Ok(self.f.eval(&x)? - self.v.dot(&x))
    }

    /// `c_f(P_X z)`
    pub fn core_at(&self, z: &Vector) -> Result<f64> {
        self.core(&self.x_space.coordinates(z)?)
    }

    /// `c_f(P_X z) + <v_f, z>`
    pub fn reconstruct(&self, z: &Vector) -> Result<f64> {
        Ok(self.core_at(z)? + self.v.dot(z))
    }

    /// Decomposition with a given `X_f` and drift, base point `0`.
    pub fn from_parts(f: &ConvexFunction, x_space: Subspace, v: Vector) -> Result<Self> {
        let n = f.dim();
        if x_space.ambient_dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x_space.ambient_dim() });
        }
        v.check_dim(n)?;
        let z0 = Vector::zeros(n);
        let xi0 = f.subgradient(&z0)?;
        let a = f.eval(&z0)?;
        let y_space = x_space.orthogonal_complement();
        Ok(Decomposition { x_space, y_space, v, z0, xi0, a, method: DecompMethod::Exact, f: f.clone() })
    }

    pub fn function(&self) -> &ConvexFunction {
        &self.f
    }

    /// Same decomposition with a replaced drift. Used to probe the residual checks.
    pub fn with_drift(&self, v: Vector) -> Result<Self> {
        v.check_dim(self.v.dim())?;
        Ok(Decomposition { v, ..self.clone() })
    }
}

/// `max_t |f(z0 + t v) - f(z0) - t <xi0, v>|`
pub fn flat_line_defect(
    f: &ConvexFunction,
    z0: &Vector,
    xi0: &Vector,
    v: &Vector,
    ts: &[f64],
) -> Result<f64> {
    let f0 = f.eval(z0)?;
    let slope = xi0.dot(v);
    let mut worst = 0.0f64;
    for &t in ts {
        let ft = f.eval(&z0.add_scaled(t, v))?;
        worst = worst.max((ft - f0 - t * slope).abs());
    }
    Ok(worst)
}

/// Flat-line membership test: defect `<= FLAT_TOL * (1 + |f(z0)|)`.
pub fn is_flat_line(f: &ConvexFunction, z0: &Vector, xi0: &Vector, v: &Vector, ts: &[f64]) -> Result<bool> {
    let f0 = f.eval(z0)?;
    Ok(flat_line_defect(f, z0, xi0, v, ts)? <= FLAT_TOL * (1.0 + f0.abs()))
}

/// Pieces that are strictly active (by [`PIECE_MARGIN`]) at some probe point:
/// `200 * dim` seeded samples plus points on both sides of every pairwise
/// bisector. Exact duplicates keep their lowest index.
pub fn retained_pieces(m: &MaxAffine, seed: u64) -> Vec<usize> {
    let pieces = m.pieces();
    let n = pieces[0].slope.dim();
    let distinct: Vec<usize> = (0..pieces.len())
        .filter(|&i| (0..i).all(|j| pieces[j] != pieces[i]))
        .collect();
    if distinct.len() == 1 {
        return distinct;
    }
    let mut retained = vec![false; pieces.len()];
    let mut mark = |z: &Vector| {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        let mut second = f64::NEG_INFINITY;
        for &i in &distinct {
            let val = pieces[i].slope.dot(z) + pieces[i].offset;
            if val > best.0 {
                second = best.0;
                best = (val, i);
            } else if val > second {
                second = val;
            }
        }
        if best.0 > second + PIECE_MARGIN {
            retained[best.1] = true;
        }
    };
    for k in 0..200 * n {
        mark(&rng::multiscale_point(seed, Purpose::PieceRetention, k as u64, n));
    }
    for (pi, &i) in distinct.iter().enumerate() {
        for &j in &distinct[pi + 1..] {
            let d = &pieces[i].slope - &pieces[j].slope;
            let dn2 = d.dot(&d);
            if dn2 == 0.0 {
                continue;
            }
            let unit = d.scaled(1.0 / dn2.sqrt());
            let foot = d.scaled(-(pieces[i].offset - pieces[j].offset) / dn2);
            for tau in [1e-3, 1.0, 1e3] {
                mark(&foot.add_scaled(tau, &unit));
                mark(&foot.add_scaled(-tau, &unit));
            }
        }
    }
    let kept: Vec<usize> = (0..pieces.len()).filter(|&i| retained[i]).collect();
    if kept.is_empty() {
        vec![m.active_piece(&Vector::zeros(n))]
    } else {
        kept
    }
}

/// Closed-form `X_f` for structural functions; `None` if a black box is involved.
pub fn exact_coercive_space(f: &ConvexFunction, config: &DecompConfig) -> Option<Result<Subspace>> {
    if f.has_black_box() {
        return None;
    }
    Some(exact_space(f, config))
}

fn exact_space(f: &ConvexFunction, config: &DecompConfig) -> Result<Subspace> {
    let n = f.dim();
    let tol = config.tol_rank;
    match f {
        ConvexFunction::Quadratic(q) => {
            let cols: Vec<Vector> = (0..n).map(|j| q.a().column(j)).collect();
            Subspace::span(n, &cols, tol)
        }
        ConvexFunction::MaxAffine(m) => {
            let kept = retained_pieces(m, config.seed);
            let first = &m.pieces()[kept[0]].slope;
            let diffs: Vec<Vector> = kept[1..].iter().map(|&i| &m.pieces()[i].slope - first).collect();
            Subspace::span(n, &diffs, tol)
        }
        ConvexFunction::ScalarComposite(s) => {
            Subspace::span(n, s.terms().iter().map(|t| &t.direction), tol)
        }
        ConvexFunction::AffinePlus(a) => exact_space(a.base(), config),
        ConvexFunction::Sum(parts) => {
            let spaces = parts.iter().map(|p| exact_space(p, config)).collect::<Result<Vec<_>>>()?;
            Subspace::span(n, spaces.iter().flat_map(|s| s.basis()), tol)
        }
        ConvexFunction::BlackBox(_) => unreachable!("guarded by has_black_box"),
    }
}

/// Span of `xi(z_i) - xi_ref` over seeded multi-scale sample points, grown in
/// batches until the rank has been stable for `stability_batches` batches
/// (and at least `samples` points were used) or is full.
///
/// Returns the subspace and the number of samples consumed. Black-box
/// subgradients are validated before use.
pub fn sample_coercive_space(
    f: &ConvexFunction,
    xi_ref: &Vector,
    config: &DecompConfig,
) -> Result<(Subspace, usize)> {
    config.validate()?;
    let n = f.dim();
    xi_ref.check_dim(n)?;
    let min_samples = config.min_samples(n);
    let cap = (100 * n).max(min_samples);
    let batch = (min_samples / 16).max(1);
    let check = f.has_black_box();

    let mut acc = SpanAccumulator::new(n, config.tol_rank)?;
    let mut used = 0usize;
    let mut stable = 0usize;
    loop {
        if acc.rank() == n || (used >= min_samples && stable >= config.stability_batches) {
            return Ok((acc.finish(), used));
        }
        if used >= cap {
            return Err(Error::Inconclusive { samples: used, partial: Box::new(acc.finish()) });
        }
        let end = (used + batch).min(cap);
        let subgradients: Vec<Result<Vector>> = (used..end)
            .into_par_iter()
            .map(|i| {
                let z = rng::multiscale_point(config.seed, Purpose::DecompSample, i as u64, n);
                let sample = f.sample(&z)?;
                if check {
                    check_subgradient(f, &sample, config.seed ^ (i as u64).rotate_left(32))?;
                }
                Ok(sample.xi)
            })
            .collect();
        let before = acc.rank();
        for xi in subgradients {
            acc.push(&(&xi? - xi_ref))?;
        }
        used = end;
        if acc.rank() > before {
            stable = 0;
        } else {
            stable += 1;
        }
    }
}

/// Keeps the candidates that pass the flat-line test at `(z0, xi0)` and
/// returns their span.
pub fn flat_subspace(
    f: &ConvexFunction,
    z0: &Vector,
    xi0: &Vector,
    candidates: &[Vector],
    config: &DecompConfig,
) -> Result<Subspace> {
    let mut kept = Vec::new();
    for c in candidates {
        if is_flat_line(f, z0, xi0, c, &config.ts)? {
            kept.push(c.clone());
        }
    }
    Subspace::span(f.dim(), &kept, config.tol_rank)
}

/// `Y_f`: closed form for structural functions, otherwise the complement of
/// the sampled `X_f` filtered by the flat-line test at `(z0, xi0)`.
pub fn constancy_space(
    f: &ConvexFunction,
    z0: &Vector,
    xi0: &Vector,
    config: &DecompConfig,
) -> Result<Subspace> {
    config.validate()?;
    let n = f.dim();
    z0.check_dim(n)?;
    xi0.check_dim(n)?;
    let base = crate::funcrepr::SubgradientSample { point: z0.clone(), xi: xi0.clone() };
    if !validate_subgradient(f, &base, ORACLE_PROBES, config.seed) {
        return Err(Error::InvalidSubgradient { point: z0.as_slice().to_vec() });
    }
    match exact_coercive_space(f, config) {
        Some(x) => Ok(x?.orthogonal_complement()),
        None => {
            let (x, _) = sample_coercive_space(f, xi0, config)?;
            let candidates = x.orthogonal_complement();
            flat_subspace(f, z0, xi0, candidates.basis(), config)
        }
    }
}

/// Computes `X_f`, `Y_f`, `v_f` and the core with base point `z0 = 0`.
pub fn decompose(f: &ConvexFunction, config: &DecompConfig) -> Result<Decomposition> {
    config.validate()?;
    let n = f.dim();
    let z0 = Vector::zeros(n);
    let base = f.sample(&z0)?;
    if f.has_black_box() {
        check_subgradient(f, &base, config.seed)?;
    }
    let xi0 = base.xi;

    let (x_space, method) = match exact_coercive_space(f, config) {
        Some(x) => (x?, DecompMethod::Exact),
        None => {
            let (x, used) = sample_coercive_space(f, &xi0, config)?;
            (x, DecompMethod::Sampled { samples: used })
        }
    };
    let y_space = x_space.orthogonal_complement();

    let flat = flat_subspace(f, &z0, &xi0, y_space.basis(), config)?;
    let gap = subspace_distance(&flat, &y_space)?;
    if gap > CHARACTERIZATION_TOL {
        return Err(Error::Inconsistent(format!(
            "complement of the subgradient-difference span (dim {}) is not flat: \
             flat part has dim {}, distance {gap:e}",
            y_space.dim(),
            flat.dim()
        )));
    }

    let v = x_space.complement_project(&xi0)?;
    let a = f.eval(&z0)? - xi0.dot(&z0);
    Ok(Decomposition { x_space, y_space, v, z0, xi0, a, method, f: f.clone() })
}

/// Max residuals of the decomposition identities over seeded probes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecompResiduals {
    /// `|f(z) - c_f(P_X z) - <v, z>|`
    pub reconstruction_abs: f64,
    /// Same, divided by `1 + |f(z)|`.
    pub reconstruction_rel: f64,
    /// `|phi(z + y) - phi(z)|` for `phi = f - <xi0, .>` and `y` in `Y_f`.
    pub quotient_abs: f64,
    /// Same, divided by `1 + |phi(z)|`.
    pub quotient_rel: f64,
    /// `|<xi(z2) - xi(z1), y>|` for `y` in the `Y_f` basis.
    pub orthogonality_abs: f64,
    /// Same, divided by `1 + max(|xi(z1)|, |xi(z2)|)`.
    pub orthogonality_rel: f64,
}

impl DecompResiduals {
    pub fn max_rel(&self) -> f64 {
        self.reconstruction_rel.max(self.quotient_rel).max(self.orthogonality_rel)
    }
}

/// Probes the reconstruction identity, quotient well-definedness and
/// orthogonality of subgradient differences to `Y_f`. Probes where `f`
/// cannot be evaluated are skipped.
pub fn verify_decomposition(f: &ConvexFunction, d: &Decomposition, probes: usize, seed: u64) -> DecompResiduals {
    let n = f.dim();
    let per_probe: Vec<DecompResiduals> = (0..probes)
        .into_par_iter()
        .map(|k| {
            let mut out = DecompResiduals::default();
            let mut r = rng::substream(seed, Purpose::ResidualProbe, k as u64);
            let scale = rng::SAMPLE_SCALES[k % 3];
            let z = rng::gaussian_vector(&mut r, n, scale);
            if let (Ok(fz), Ok(rec)) = (f.eval(&z), d.reconstruct(&z)) {
                out.reconstruction_abs = (fz - rec).abs();
                out.reconstruction_rel = out.reconstruction_abs / (1.0 + fz.abs());
            }
            if !d.y_space.is_zero() {
                let coords: Vec<f64> = rng::gaussian_vector(&mut r, d.y_space.dim(), scale).into_vec();
                let y = d.y_space.embed(&coords).expect("coordinate count matches");
                let zy = &z + &y;
                if let (Ok(fz), Ok(fzy)) = (f.eval(&z), f.eval(&zy)) {
                    let phi_z = fz - d.xi0.dot(&z);
                    let phi_zy = fzy - d.xi0.dot(&zy);
                    out.quotient_abs = (phi_zy - phi_z).abs();
                    out.quotient_rel = out.quotient_abs / (1.0 + phi_z.abs());
                }
                let z2 = rng::gaussian_vector(&mut r, n, scale);
                if let (Ok(g1), Ok(g2)) = (f.subgradient(&z), f.subgradient(&z2)) {
                    let diff = &g2 - &g1;
                    let denom = 1.0 + g1.norm().max(g2.norm());
                    for b in d.y_space.basis() {
                        let o = diff.dot(b).abs();
                        out.orthogonality_abs = out.orthogonality_abs.max(o);
                        out.orthogonality_rel = out.orthogonality_rel.max(o / denom);
                    }
                }
            }
            out
        })
        .collect();
    per_probe.into_iter().fold(DecompResiduals::default(), |acc, p| DecompResiduals {
        reconstruction_abs: acc.reconstruction_abs.max(p.reconstruction_abs),
        reconstruction_rel: acc.reconstruction_rel.max(p.reconstruction_rel),
        quotient_abs: acc.quotient_abs.max(p.quotient_abs),
        quotient_rel: acc.quotient_rel.max(p.quotient_rel),
        orthogonality_abs: acc.orthogonality_abs.max(p.orthogonality_abs),
        orthogonality_rel: acc.orthogonality_rel.max(p.orthogonality_rel),
    })
}
