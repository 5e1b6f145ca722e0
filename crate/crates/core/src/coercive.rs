//! Directional coercivity.
//!
//! - [`directional_verdict`]: certified from structure, refuted by a flat ray,
//!   or merely evidenced by a ray scan.
//! - [`build_witness`]: a linear form `xi` with `f - xi` directionally
//!   coercive, assembled from subgradients at boundary points of the
//!   sublevel set `{psi <= 1}` with weights `2^-(n+1) / max(1, |xi_n|)`.
//! - [`strict_minimum_witness`]: a slope `xi0` for which `f - xi0` has a strict
//!   minimizer (grid search, dimension at most 3).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::decomp::{decompose, DecompConfig};
use crate::error::{Error, Result};
use crate::funcrepr::{check_subgradient, ConvexFunction, SubgradientSample};
use crate::rng::{self, Purpose};
use crate::vecspace::{Subspace, Vector};

/// A ray refutes coercivity when `f(x + T v) - f(x)` stays at or below this...
pub const REFUTE_GAP: f64 = 1.0;
/// ...and the terminal slope estimate is at or below this.
pub const REFUTE_SLOPE: f64 = 1e-9;

/// Sublevel value defining `C = {psi <= 1}`.
pub const WITNESS_LEVEL: f64 = 1.0;
/// Boundary points satisfy `|psi(x_n) - 1| <= BOUNDARY_TOL`.
pub const BOUNDARY_TOL: f64 = 1e-10;
/// Directions along which `psi <= 1` out to this parameter are treated as recession rays.
pub const RECESSION_CUTOFF: f64 = 1e6;
const BISECTION_STEPS: usize = 200;

/// Points used by the lower-envelope check in [`verify_witness`].
pub const ENVELOPE_PROBES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Certified,
    Refuted,
    Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ray {
    pub origin: Vector,
    pub direction: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanStats {
    pub rays_checked: usize,
    pub max_t: f64,
    pub min_terminal_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityVerdict {
    pub status: VerdictStatus,
    pub refuting_ray: Option<Ray>,
    pub evidence: Option<ScanStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayScan {
    /// Seeded random directions, on top of the coordinate and flat directions.
    pub rays: usize,
    pub seed: u64,
    pub max_t: f64,
}

impl Default for RayScan {
    fn default() -> Self {
        RayScan { rays: 500, seed: 0, max_t: 1e4 }
    }
}

/// Structural sufficient conditions for directional coercivity.
pub fn certify(f: &ConvexFunction) -> bool {
    match f {
        ConvexFunction::Quadratic(q) => is_positive_definite(q.a()),
        ConvexFunction::AffinePlus(a) => matches!(a.base(), ConvexFunction::Quadratic(_)) && certify(a.base()),
        ConvexFunction::ScalarComposite(s) => {
            // Every kernel is bounded below, so f -> inf along v iff some term
            // does: Square/Abs need <a, v> != 0, ReluSquare/Exp need <a, v> > 0.
            let mut generators = Vec::new();
            for t in s.terms() {
                generators.push(t.direction.clone());
                if t.kernel.grows_both_ways() {
                    generators.push(-&t.direction);
                }
            }
            positively_spans(f.dim(), &generators)
        }
        ConvexFunction::Sum(parts) => parts.iter().all(certify),
        _ => false,
    }
}

fn is_positive_definite(a: &crate::vecspace::Matrix) -> bool {
    let n = a.rows();
    let floor = 1e-12 * a.max_abs();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > floor) {
            return false;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    true
}

/// Whether nonnegative combinations of `generators` cover `R^n`: the set must
/// span, and `-g` must lie in the generated cone for every generator `g`.
pub fn positively_spans(n: usize, generators: &[Vector]) -> bool {
    match Subspace::span(n, generators, 1e-9) {
        Ok(s) if s.dim() == n => {}
        _ => return false,
    }
    generators.iter().all(|g| {
        let (_, residual) = nnls(generators, &-g);
        residual <= 1e-9 * g.norm().max(1.0)
    })
}

/// Lawson-Hanson nonnegative least squares: `min |G x - b|`, `x >= 0`, with
/// the columns of `G` given as vectors. Returns `(x, residual norm)`.
pub fn nnls(columns: &[Vector], b: &Vector) -> (Vec<f64>, f64) {
    let m = columns.len();
    let n = b.dim();
    let g = DMatrix::from_fn(n, m, |i, j| columns[j][i]);
    let bv = DVector::from_column_slice(b.as_slice());
    let mut x = DVector::zeros(m);
    let mut passive = vec![false; m];
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0) * b.norm().max(1.0);
    let tol = 1e-13 * scale * m.max(1) as f64;

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(n, idx.len(), |i, k| g[(i, idx[k])]);
        let sol = sub
            .svd(true, true)
            .solve(&bv, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut full = DVector::zeros(m);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = sol[k];
        }
        full
    };

    for _outer in 0..3 * m + 3 {
        let w = g.transpose() * (&bv - &g * &x);
        let candidate = (0..m)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        for _inner in 0..3 * m + 3 {
            let s = solve_passive(&passive);
            if (0..m).filter(|&k| passive[k]).all(|k| s[k] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in (0..m).filter(|&k| passive[k] && s[k] <= 0.0) {
                alpha = alpha.min(x[k] / (x[k] - s[k]));
            }
            x += (s - &x) * alpha;
            for k in 0..m {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    let residual = (&g * &x - &bv).norm();
    (x.iter().cloned().collect(), residual)
}

struct RayOutcome {
    refutes: bool,
    slope: f64,
}

fn probe_ray(f: &ConvexFunction, direction: &Vector, max_t: f64) -> RayOutcome {
    let origin = Vector::zeros(f.dim());
    let values = (
        f.eval(&origin),
        f.eval(&origin.add_scaled(max_t, direction)),
        f.eval(&origin.add_scaled(0.5 * max_t, direction)),
    );
    match values {
        (Ok(f0), Ok(ft), Ok(fh)) => {
            let slope = (ft - fh) / (0.5 * max_t);
            RayOutcome { refutes: ft - f0 <= REFUTE_GAP && slope <= REFUTE_SLOPE, slope }
        }
        // overflow along the ray means growth
        _ => RayOutcome { refutes: false, slope: f64::INFINITY },
    }
}

/// Scan directions in order: `+e_1, -e_1, ..., +e_n, -e_n`, then `+-` the
/// flat-space basis, then seeded random unit directions.
pub fn scan_directions(f: &ConvexFunction, scan: &RayScan) -> Vec<Vector> {
    let n = f.dim();
    let mut dirs = Vec::with_capacity(2 * n + scan.rays);
    for i in 0..n {
        let e = Vector::unit(n, i);
        dirs.push(-&e);
        dirs.insert(dirs.len() - 1, e);
    }
    if let Ok(d) = decompose(f, &DecompConfig::with_seed(scan.seed)) {
        for y in d.y_space.basis() {
            dirs.push(y.clone());
            dirs.push(-y);
        }
    }
    for k in 0..scan.rays {
        let mut r = rng::substream(scan.seed, Purpose::Ray, k as u64);
        dirs.push(rng::unit_vector(&mut r, n));
    }
    dirs
}

pub fn directional_verdict(f: &ConvexFunction, scan: &RayScan) -> Result<CoercivityVerdict> {
    if !(scan.max_t >= 1.0) {
        return Err(Error::InvalidInput(format!("max_t must be at least 1, got {}", scan.max_t)));
    }
    if certify(f) {
        return Ok(CoercivityVerdict { status: VerdictStatus::Certified, refuting_ray: None, evidence: None });
    }
    let dirs = scan_directions(f, scan);
    let outcomes: Vec<RayOutcome> = dirs.par_iter().map(|d| probe_ray(f, d, scan.max_t)).collect();
    let stats = ScanStats {
        rays_checked: dirs.len(),
        max_t: scan.max_t,
        min_terminal_slope: outcomes.iter().map(|o| o.slope).fold(f64::INFINITY, f64::min),
    };
    match outcomes.iter().position(|o| o.refutes) {
        Some(i) => Ok(CoercivityVerdict {
            status: VerdictStatus::Refuted,
            refuting_ray: Some(Ray { origin: Vector::zeros(f.dim()), direction: dirs[i].clone() }),
            evidence: Some(stats),
        }),
        None => Ok(CoercivityVerdict { status: VerdictStatus::Evidence, refuting_ray: None, evidence: Some(stats) }),
    }
}

/// `f(x + max_t v) - f(x)` along a stored ray, recomputed from scratch.
pub fn ray_gap(f: &ConvexFunction, ray: &Ray, max_t: f64) -> Result<f64> {
    Ok(f.eval(&ray.origin.add_scaled(max_t, &ray.direction))? - f.eval(&ray.origin)?)
}

/// Seeded points per sphere in [`sphere_growth_radius`].
pub const SPHERE_POINTS: usize = 512;
/// Largest radius tried by [`sphere_growth_radius`].
pub const SPHERE_MAX_RADIUS: f64 = 1048576.0;

/// First radius `R = 1, 2, 4, ..., 2^20` at which `f > f(0) + 1` at every one
/// of [`SPHERE_POINTS`] seeded points of the sphere `|x| = R`.
pub fn sphere_growth_radius(f: &ConvexFunction, seed: u64) -> Result<Option<f64>> {
    let n = f.dim();
    let f0 = f.eval(&Vector::zeros(n))?;
    let dirs: Vec<Vector> = (0..SPHERE_POINTS)
        .map(|k| rng::unit_vector(&mut rng::substream(seed, Purpose::SpherePoint, k as u64), n))
        .collect();
    let mut radius = 1.0;
    while radius <= SPHERE_MAX_RADIUS {
        let min = dirs
            .par_iter()
            .map(|u| f.eval(&u.scaled(radius)).unwrap_or(f64::INFINITY))
            .reduce(|| f64::INFINITY, f64::min);
        if min > f0 + 1.0 {
            return Ok(Some(radius));
        }
        radius *= 2.0;
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    /// Unit direction the boundary point was found along.
    pub direction: Vector,
    /// `x_n` with `psi(x_n) ~ 1`.
    pub point: Vector,
    pub psi: f64,
    /// `xi_n`, a subgradient of `psi` at `x_n`.
    pub xi: Vector,
    /// `2^-(n+1) / max(1, |xi_n|)`
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRay {
    pub direction: Vector,
    /// Largest parameter tried; `psi` stayed at or below the level up to here.
    pub reached_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub xi: Vector,
    pub trace: Vec<TraceEntry>,
    pub skipped: Vec<SkippedRay>,
    /// `psi(x) = f(x) - f0 - <xi0, x>`
    pub xi0: Vector,
    pub f0: f64,
    pub level: f64,
}

impl Witness {
    pub fn psi(&self, f: &ConvexFunction, x: &Vector) -> Result<f64> {
        Ok(f.eval(x)? - self.f0 - self.xi0.dot(x))
    }

    /// `xi0 + xi`: the linear form subtracted from `f` itself, since `xi`
    /// coercivizes `psi`.
    pub fn functional(&self) -> Vector {
        &self.xi0 + &self.xi
    }
}

fn witness_weight(index: usize, xi_norm: f64) -> f64 {
    0.5f64.powi(index as i32 + 1) / xi_norm.max(1.0)
}

enum Boundary {
    Hit { t: f64, psi: f64 },
    Recedes { reached_t: f64 },
}

fn find_boundary<P: Fn(f64) -> f64>(psi: P) -> Boundary {
    let level = WITNESS_LEVEL;
    let mut lo = 0.0;
    let mut t = 1.0;
    let hi = loop {
        let p = psi(t);
        if (p - level).abs() <= BOUNDARY_TOL {
            return Boundary::Hit { t, psi: p };
        }
        if p > level {
            break t;
        }
        lo = t;
        if t > RECESSION_CUTOFF {
            return Boundary::Recedes { reached_t: t };
        }
        t *= 2.0;
    };
    let (mut lo, mut hi) = (lo, hi);
    let (mut best_t, mut best_p) = (hi, psi(hi));
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = psi(mid);
        if (p - level).abs() < (best_p - level).abs() {
            best_t = mid;
            best_p = p;
        }
        if (p - level).abs() <= BOUNDARY_TOL {
            break;
        }
        if p > level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Boundary::Hit { t: best_t, psi: best_p }
}

/// Builds a coercivizing linear form for `f`, which must not be affine along
/// any line (`Y_f = {0}`).
///
/// Boundary points of `{psi <= 1}` are collected along `+e_1, -e_1, ...` and
/// then seeded random unit directions until `n_terms` are found. Directions
/// on which `psi` stays below the level up to [`RECESSION_CUTOFF`] are
/// recorded as skipped. The result depends on this order.
pub fn build_witness(f: &ConvexFunction, n_terms: usize, seed: u64) -> Result<Witness> {
    if n_terms == 0 {
        return Err(Error::InvalidInput("n_terms must be at least 1".into()));
    }
    let n = f.dim();
    let d = decompose(f, &DecompConfig::with_seed(seed))?;
    if let Some(flat) = d.y_space.basis().first() {
        return Err(Error::FlatDirection(flat.clone()));
    }
    let origin = Vector::zeros(n);
    let f0 = f.eval(&origin)?;
    let xi0 = d.xi0.clone();
    let check = f.has_black_box();
    let psi_at = |x: &Vector| -> f64 {
        match f.eval(x) {
            Ok(v) => v - f0 - xi0.dot(x),
            Err(_) => f64::INFINITY,
        }
    };

    let max_directions = 2 * n + 8 * n_terms + 64;
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut skipped = Vec::new();
    let mut xi = Vector::zeros(n);
    for k in 0..max_directions {
        if trace.len() == n_terms {
            break;
        }
        let dir = if k < 2 * n {
            let e = Vector::unit(n, k / 2);
            if k % 2 == 0 {
                e
            } else {
                -&e
            }
        } else {
            let mut r = rng::substream(seed, Purpose::WitnessDirection, (k - 2 * n) as u64);
            rng::unit_vector(&mut r, n)
        };
        match find_boundary(|t| psi_at(&dir.scaled(t))) {
            Boundary::Recedes { reached_t } => skipped.push(SkippedRay { direction: dir, reached_t }),
            Boundary::Hit { t, psi } => {
                let point = dir.scaled(t);
                let sample = f.sample(&point)?;
                if check {
                    check_subgradient(f, &sample, seed ^ (k as u64).rotate_left(17))?;
                }
                let xi_n = &sample.xi - &xi0;
                let weight = witness_weight(trace.len() + 1, xi_n.norm());
                xi = xi.add_scaled(weight, &xi_n);
                trace.push(TraceEntry { direction: dir, point, psi, xi: xi_n, weight });
            }
        }
    }
    if trace.is_empty() {
        return Err(Error::Precondition("every probed direction is a recession direction".into()));
    }
    Ok(Witness { xi, trace, skipped, xi0, f0, level: WITNESS_LEVEL })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessCheck {
    /// Verdict for `psi - <xi, .>`, i.e. `f - <xi0 + xi, .>` up to a constant.
    pub verdict: CoercivityVerdict,
    /// Max of `(max(0, psi(x_n) + <xi_n, x - x_n>) - psi(x)) / (1 + |psi(x)|)`, floored at 0.
    pub envelope_violation: f64,
}

/// Ray scan of `f - <w.functional(), .>` plus the lower-envelope bound
/// `psi(x) >= sup_n max(0, psi(x_n) + <xi_n, x - x_n>)` at seeded points.
pub fn verify_witness(f: &ConvexFunction, w: &Witness, scan: &RayScan) -> Result<WitnessCheck> {
    let n = f.dim();
    w.xi.check_dim(n)?;
    w.xi0.check_dim(n)?;
    let shifted = ConvexFunction::affine_plus(f.clone(), -&w.functional(), 0.0)?;
    let verdict = directional_verdict(&shifted, scan)?;
    let violations: Vec<f64> = (0..ENVELOPE_PROBES)
        .into_par_iter()
        .map(|k| {
            let x = rng::multiscale_point(scan.seed, Purpose::EnvelopeProbe, k as u64, n);
            let Ok(psi) = w.psi(f, &x) else { return 0.0 };
            let bound = w
                .trace
                .iter()
                .map(|e| e.psi + e.xi.dot(&(&x - &e.point)))
                .fold(0.0f64, f64::max);
            ((bound - psi) / (1.0 + psi.abs())).max(0.0)
        })
        .collect();
    let envelope_violation = violations.into_iter().fold(0.0, f64::max);
    Ok(WitnessCheck { verdict, envelope_violation })
}

/// Rank of the trace subgradients: they separate points iff this equals the dimension.
pub fn separation_rank(w: &Witness) -> usize {
    let n = w.xi.dim();
    Subspace::span(n, w.trace.iter().map(|e| &e.xi), 1e-9)
        .map(|s| s.dim())
        .unwrap_or(0)
}

/// Checks that each trace entry's subgradient is valid for `psi` at its point.
pub fn trace_subgradients_valid(f: &ConvexFunction, w: &Witness, seed: u64) -> Result<bool> {
    let psi = ConvexFunction::affine_plus(f.clone(), -&w.xi0, -w.f0)?;
    Ok(w.trace.iter().enumerate().all(|(k, e)| {
        let s = SubgradientSample { point: e.point.clone(), xi: e.xi.clone() };
        crate::funcrepr::validate_subgradient(&psi, &s, crate::funcrepr::ORACLE_PROBES, seed + k as u64)
    }))
}

/// Radius of the confirmation probes around a candidate minimizer.
pub const STRICT_PROBE_RADIUS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrictMinimum {
    pub xi0: Vector,
    pub minimizer: Vector,
    pub value: f64,
}

fn check_small_dim(f: &ConvexFunction, grid: usize) -> Result<()> {
    if f.dim() > 3 {
        return Err(Error::Precondition(format!("grid search needs dimension <= 3, got {}", f.dim())));
    }
    if grid < 64 {
        return Err(Error::InvalidInput(format!("grid must be at least 64 points per axis, got {grid}")));
    }
    Ok(())
}

fn grid_points(center: &[f64], half_width: f64, per_axis: usize) -> impl Iterator<Item = Vector> + '_ {
    let d = center.len();
    let total = per_axis.pow(d as u32);
    let step = 2.0 * half_width / (per_axis - 1) as f64;
    (0..total).map(move |mut idx| {
        let mut x = vec![0.0; d];
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = center[k] - half_width + (idx % per_axis) as f64 * step;
            idx /= per_axis;
        }
        Vector::from_vec_unchecked(x)
    })
}

/// Strict minimizer of `f - <xi, .>` inside `[-radius, radius]^d`, if the
/// grid minimum is interior and survives refinement and probing.
pub fn strict_minimizer_for_slope(
    f: &ConvexFunction,
    xi: &Vector,
    grid: usize,
    radius: f64,
) -> Result<Option<Vector>> {
    check_small_dim(f, grid)?;
    xi.check_dim(f.dim())?;
    let d = f.dim();
    let g = |x: &Vector| f.eval(x).map(|v| v - xi.dot(x)).unwrap_or(f64::INFINITY);

    let zero = vec![0.0; d];
    let (mut best_idx, mut best, mut best_val) = (0usize, Vector::zeros(d), f64::INFINITY);
    for (idx, x) in grid_points(&zero, radius, grid).enumerate() {
        let val = g(&x);
        if val < best_val {
            best_idx = idx;
            best = x;
            best_val = val;
        }
    }
    let mut idx = best_idx;
    for _ in 0..d {
        let i = idx % grid;
        if i == 0 || i == grid - 1 {
            return Ok(None);
        }
        idx /= grid;
    }

    let mut half = 2.0 * (2.0 * radius / (grid - 1) as f64);
    while half > 1e-13 * best.norm().max(1.0) {
        let center = best.as_slice().to_vec();
        for x in grid_points(&center, half, 17) {
            let val = g(&x);
            if val < best_val {
                best = x;
                best_val = val;
            }
        }
        half /= 4.0;
    }

    let mut dirs: Vec<Vector> = (0..d).map(|i| Vector::unit(d, i)).collect();
    for k in 0..(8 * d - d) {
        let mut r = rng::substream(0, Purpose::StrictMinProbe, k as u64);
        dirs.push(rng::unit_vector(&mut r, d));
    }
    let strict = dirs.iter().all(|u| {
        g(&best.add_scaled(STRICT_PROBE_RADIUS, u)) > best_val
            && g(&best.add_scaled(-STRICT_PROBE_RADIUS, u)) > best_val
    });
    Ok(strict.then_some(best))
}

/// Searches candidate slopes (subgradients at the origin, at `+-2^k e_i` for
/// `2^k <= radius/2`, then at seeded points) for one that makes the minimum of
/// `f - xi0` strict. Dimension at most 3.
pub fn strict_minimum_witness(f: &ConvexFunction, grid: usize, radius: f64) -> Result<Option<StrictMinimum>> {
    check_small_dim(f, grid)?;
    let d = f.dim();
    let mut points = vec![Vector::zeros(d)];
    let mut step = 1.0;
    while step <= 0.5 * radius {
        for i in 0..d {
            let e = Vector::unit(d, i).scaled(step);
            points.push(e.clone());
            points.push(-&e);
        }
        step *= 2.0;
    }
    for k in 0..16 {
        let mut r = rng::substream(0, Purpose::StrictMinProbe, 1_000 + k);
        points.push(rng::gaussian_vector(&mut r, d, 0.25 * radius));
    }
    let mut tried: Vec<Vector> = Vec::new();
    for p in points {
        let Ok(xi0) = f.subgradient(&p) else { continue };
        if tried.contains(&xi0) {
            continue;
        }
        if let Some(minimizer) = strict_minimizer_for_slope(f, &xi0, grid, radius)? {
            let value = f.eval(&minimizer)? - xi0.dot(&minimizer);
            return Ok(Some(StrictMinimum { xi0, minimizer, value }));
        }
        tried.push(xi0);
    }
    Ok(None)
}

/// Checks that `f(x + t e_m) == f(x)` exactly at 33 equispaced `t` in the open
/// interval `(-(m - x_m), m - x_m)`; `m` is 1-based.
pub fn flat_segment_check(f: &ConvexFunction, x: &Vector, m: usize) -> Result<bool> {
    let n = f.dim();
    x.check_dim(n)?;
    if m == 0 || m > n {
        return Err(Error::Precondition(format!("coordinate {m} outside 1..={n}")));
    }
    let half = m as f64 - x[m - 1];
    if !(half > 0.0) {
        return Err(Error::Precondition(format!("need x_{m} < {m}, got {}", x[m - 1])));
    }
    let fx = f.eval(x)?;
    let e = Vector::unit(n, m - 1);
    for k in 1..=33 {
        let t = -half + 2.0 * half * k as f64 / 34.0;
        if f.eval(&x.add_scaled(t, &e))? != fx {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest `L` with `f(x + t e_m) = f(x)` for `|t| < L`, for a scalar composite
/// (1-based `m`). Infinite when no term involves coordinate `m`.
pub fn flat_half_length(f: &ConvexFunction, x: &Vector, m: usize) -> Result<f64> {
    let ConvexFunction::ScalarComposite(s) = f else {
        return Err(Error::Precondition("flat half-length needs a scalar composite".into()));
    };
    x.check_dim(f.dim())?;
    if m == 0 || m > f.dim() {
        return Err(Error::Precondition(format!("coordinate {m} outside 1..={}", f.dim())));
    }
    let mut half = f64::INFINITY;
    for t in s.terms() {
        let c = t.direction[m - 1];
        if c == 0.0 {
            continue;
        }
        match t.kernel {
            crate::funcrepr::ScalarKernel::ReluSquare => {
                let slack = t.shift - t.direction.dot(x);
                half = half.min((slack / c.abs()).max(0.0));
            }
            _ => return Ok(0.0),
        }
    }
    Ok(half)
}

/// Minimizer of `f - <xi, .>` for a separable scalar composite (every term
/// direction a multiple of one coordinate vector), found per coordinate by
/// bisection on the derivative. `None` if some coordinate has no strict minimum.
pub fn separable_strict_minimizer(f: &ConvexFunction, xi: &Vector) -> Result<Option<Vector>> {
    let ConvexFunction::ScalarComposite(s) = f else {
        return Err(Error::Precondition("separable minimizer needs a scalar composite".into()));
    };
    let n = f.dim();
    xi.check_dim(n)?;
    let mut by_coord: Vec<Vec<(f64, crate::funcrepr::ScalarKernel, f64, f64)>> = vec![Vec::new(); n];
    for t in s.terms() {
        let nz: Vec<usize> = (0..n).filter(|&i| t.direction[i] != 0.0).collect();
        if nz.len() != 1 {
            return Err(Error::Precondition("term direction is not a coordinate direction".into()));
        }
        by_coord[nz[0]].push((t.weight, t.kernel, t.direction[nz[0]], t.shift));
    }
    let mut out = Vec::with_capacity(n);
    for (j, terms) in by_coord.iter().enumerate() {
        let deriv = |u: f64| -> f64 {
            let mut total = -xi[j];
            for &(w, k, a, s) in terms {
                total += w * a * k.derivative(a * u - s).unwrap_or(f64::INFINITY);
            }
            total
        };
        let value = |u: f64| -> f64 {
            let mut total = -xi[j] * u;
            for &(w, k, a, s) in terms {
                total += w * k.value(a * u - s).unwrap_or(f64::INFINITY);
            }
            total
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while deriv(lo) >= 0.0 {
            lo *= 2.0;
            if lo < -1e12 {
                return Ok(None);
            }
        }
        while deriv(hi) <= 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Ok(None);
            }
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        let delta = 1e-6 * u.abs().max(1.0);
        let fu = value(u);
        if !(value(u - delta) > fu && value(u + delta) > fu) {
            return Ok(None);
        }
        out.push(u);
    }
    Ok(Some(Vector::from_vec_unchecked(out)))
}
