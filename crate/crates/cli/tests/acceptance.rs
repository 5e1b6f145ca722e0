//! Acceptance criteria. Prints one `PASS`/`FAIL` line per criterion and
//! exits nonzero when any criterion fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use convexdecomp::coercive::{
    build_witness, directional_verdict, flat_segment_check, sphere_growth_radius, strict_minimizer_for_slope,
    strict_minimum_witness, verify_witness, RayScan,
};
use convexdecomp::corpus::{make_example33, make_example_gamma, make_graded_corpus, CorpusEntry};
use convexdecomp::decomp::{
    constancy_space, decompose, flat_subspace, is_flat_line, retained_pieces, verify_decomposition,
};
use convexdecomp::funcrepr::{AffinePiece, MaxAffine};
use convexdecomp::rng::{self, Purpose};
use convexdecomp::vecspace::subspace_distance;
use convexdecomp::{ConvexFunction, DecompConfig, Matrix, Subspace, Vector, VerdictStatus};
use convexdecomp_cli::{sweep_row, Family};
use convexdecomp_testkit::{grid_argmin, nullspace_oracle, pairwise_diff_span_oracle, ray_table, shifted};
use rayon::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_convexdecomp");

type Outcome = Result<String, String>;
type RunOutput = (String, Option<i32>, Vec<u8>);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn v(x: &[f64]) -> Vector {
    Vector::new(x.to_vec()).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(name: &str) -> impl Fn(E) -> String + '_ {
    move |e| format!("{name}: {e}")
}

fn reconstruction(corpus: &[CorpusEntry]) -> Outcome {
    let start = Instant::now();
    let results: Vec<(String, f64)> = corpus
        .par_iter()
        .map(|e| {
            let d = decompose(&e.f, &DecompConfig::with_seed(0)).map_err(err(&e.name))?;
            let r = verify_decomposition(&e.f, &d, 1000, 1);
            Ok((e.name.clone(), r.reconstruction_rel))
        })
        .collect::<Result<_, String>>()?;
    let secs = start.elapsed().as_secs_f64();
    let (worst_name, worst) = results.iter().max_by(|a, b| a.1.total_cmp(&b.1)).cloned().unwrap();
    ensure(corpus.len() >= 40, || format!("corpus has only {} entries", corpus.len()))?;
    ensure(worst <= 1e-7, || format!("{worst_name}: relative residual {worst:e}"))?;
    ensure(secs <= 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} entries, max relative residual {worst:.2e} ({worst_name}), {secs:.1} s", corpus.len()))
}

/// Sampled subgradient-difference span of the black box against the complement
/// of the directions that pass the flat-line probe on the same black box.
fn characterization(corpus: &[CorpusEntry]) -> Outcome {
    let config = DecompConfig::with_seed(0);
    let results: Vec<(String, f64)> = corpus
        .par_iter()
        .map(|e| {
            let name = &e.name;
            let bb = ConvexFunction::as_black_box(&e.f);
            let sampled = decompose(&bb, &config).map_err(err(name))?;
            let structural = decompose(&e.f, &config).map_err(err(name))?;
            let n = e.dim();
            let z0 = Vector::zeros(n);
            let xi0 = bb.subgradient(&z0).map_err(err(name))?;
            let mut candidates: Vec<Vector> = structural.y_space.basis().to_vec();
            candidates.extend(sampled.y_space.basis().iter().cloned());
            candidates.extend((0..n).map(|i| Vector::unit(n, i)));
            let flat = flat_subspace(&bb, &z0, &xi0, &candidates, &config).map_err(err(name))?;
            let dist = subspace_distance(&sampled.x_space, &flat.orthogonal_complement()).map_err(err(name))?;
            for x in sampled.x_space.basis() {
                ensure(!is_flat_line(&bb, &z0, &xi0, x, &config.ts).map_err(err(name))?, || {
                    format!("{name}: sampled X direction passes the flat-line probe")
                })?;
            }
            let y = constancy_space(&bb, &z0, &xi0, &config).map_err(err(name))?;
            let dist = dist.max(subspace_distance(&y, &flat).map_err(err(name))?);
            Ok((name.clone(), dist))
        })
        .collect::<Result<_, String>>()?;
    let (worst_name, worst) = results.iter().max_by(|a, b| a.1.total_cmp(&b.1)).cloned().unwrap();
    ensure(worst <= 1e-6, || format!("{worst_name}: distance {worst:e}"))?;
    Ok(format!("{} black boxes, max distance {worst:.2e}", results.len()))
}

const LINE_TS: [f64; 6] = [1.0, -1.0, 10.0, -10.0, 100.0, -100.0];

fn base_point_entry(e: &CorpusEntry) -> Result<[f64; 3], String> {
    let name = &e.name;
    let n = e.dim();
    let bb = ConvexFunction::as_black_box(&e.f);
    let config = DecompConfig::with_seed(0);
    let mut spaces: Vec<Subspace> = Vec::new();
    let mut worst = [0.0f64; 3];
    for k in 0..10u64 {
        let z = rng::multiscale_point(91, Purpose::DecompSample, k, n);
        let xi = bb.subgradient(&z).map_err(err(name))?;
        let y = constancy_space(&bb, &z, &xi, &config).map_err(err(name))?;
        let fz = bb.eval(&z).map_err(err(name))?;
        let basis = y.basis();
        // (1) sums of flat directions are flat
        for i in 0..basis.len() {
            for j in i..basis.len() {
                let s = &basis[i] + &basis[j];
                ensure(is_flat_line(&bb, &z, &xi, &s, &config.ts).map_err(err(name))?, || {
                    format!("{name}: sum of Y basis vectors {i},{j} is not flat at base point {k}")
                })?;
            }
        }
        // (3) f is affine with slope <xi, y> along every flat direction
        for y in basis {
            for t in LINE_TS {
                let lhs = bb.eval(&z.add_scaled(t, y)).map_err(err(name))?;
                let gap = (lhs - fz - t * xi.dot(y)).abs() / (1.0 + fz.abs());
                worst[1] = worst[1].max(gap);
            }
        }
        spaces.push(y);
    }
    // (2) independence of the base point
    for a in 0..spaces.len() {
        for b in a + 1..spaces.len() {
            worst[0] = worst[0].max(subspace_distance(&spaces[a], &spaces[b]).map_err(err(name))?);
        }
    }
    // (4) subgradient differences annihilate Y_f
    let d = decompose(&bb, &config).map_err(err(name))?;
    worst[2] = verify_decomposition(&bb, &d, 10, 92).orthogonality_rel;
    Ok(worst)
}

fn base_points(corpus: &[CorpusEntry]) -> Outcome {
    let results: Vec<(String, [f64; 3])> = corpus
        .par_iter()
        .map(|e| Ok((e.name.clone(), base_point_entry(e)?)))
        .collect::<Result<_, String>>()?;
    let mut worst = [0.0f64; 3];
    for (name, w) in &results {
        ensure(w[0] <= 1e-7, || format!("{name}: base points disagree by {:e}", w[0]))?;
        ensure(w[1] <= 1e-8, || format!("{name}: flat-line affinity defect {:e}", w[1]))?;
        ensure(w[2] <= 1e-8, || format!("{name}: orthogonality residual {:e}", w[2]))?;
        for i in 0..3 {
            worst[i] = worst[i].max(w[i]);
        }
    }
    Ok(format!(
        "{} entries x 10 base points, base-point distance {:.1e}, affinity {:.1e}, orthogonality {:.1e}",
        results.len(),
        worst[0],
        worst[1],
        worst[2]
    ))
}

fn witness(corpus: &[CorpusEntry]) -> Outcome {
    let scan = RayScan { rays: 500, seed: 5, max_t: 1e4 };
    let mut count = 0;
    let mut max_norm = 0.0f64;
    for e in corpus {
        let name = &e.name;
        let d = decompose(&e.f, &DecompConfig::with_seed(0)).map_err(err(name))?;
        if !d.y_space.is_zero() || e.dim() > 8 {
            continue;
        }
        count += 1;
        let w = build_witness(&e.f, 2 * e.dim(), 0).map_err(err(name))?;
        max_norm = max_norm.max(w.xi.norm());
        ensure(w.xi.norm() <= 0.5 + 1e-12, || format!("{name}: |xi| = {}", w.xi.norm()))?;
        for (i, entry) in w.trace.iter().enumerate() {
            let target = 0.5f64.powi(i as i32 + 2);
            let norm = entry.xi.norm();
            let ok = if norm <= 1.0 {
                entry.weight == target
            } else {
                (entry.weight * norm - target).abs() <= 1e-15 * target
            };
            ensure(ok, || format!("{name}: weight {} is {} for |xi_n| = {norm}", i + 1, entry.weight))?;
        }
        let check = verify_witness(&e.f, &w, &scan).map_err(err(name))?;
        ensure(check.verdict.status != VerdictStatus::Refuted, || {
            format!("{name}: refuted along {:?}", check.verdict.refuting_ray)
        })?;
    }
    let theta = make_example_gamma(1).f;
    let w = build_witness(&theta, 1, 0).map_err(err("theta"))?;
    ensure(w.xi.as_slice() == [0.25], || format!("theta witness is {:?}", w.xi))?;
    Ok(format!("{count} coercive-direction entries, max |xi| {max_norm:.4}, theta xi = 0.25 with one term"))
}

fn identities() -> Outcome {
    let theta = make_example_gamma(1).f;
    let th = |t: f64| theta.eval(&v(&[t])).unwrap();
    ensure(th(-1.0) == 0.0 && th(2.0) == 4.0, || format!("theta(-1) = {}, theta(2) = {}", th(-1.0), th(2.0)))?;

    let n = 4;
    let gamma = make_example_gamma(n).f;
    let e1 = Vector::unit(n, 0);
    let neg = ray_table(&gamma, &Vector::zeros(n), &-&e1, &[1.0, 10.0, 100.0]).map_err(err("gamma"))?;
    ensure(neg.iter().all(|(_, y)| *y == 0.0), || format!("gamma along -e1: {neg:?}"))?;

    let w = build_witness(&gamma, 2 * n, 0).map_err(err("gamma"))?;
    for m in 0..n {
        let mut xi = w.xi.clone().into_vec();
        xi[m] = 0.0;
        let g = shifted(&gamma, &v(&xi)).map_err(err("gamma"))?;
        let dir = -&Vector::unit(n, m);
        let ray = ray_table(&g, &Vector::zeros(n), &dir, &[1.0, 10.0, 100.0, 1e4]).map_err(err("gamma"))?;
        ensure(ray.iter().all(|(_, y)| *y == 0.0), || format!("coordinate {m} zeroed: {ray:?}"))?;
        let verdict = directional_verdict(&g, &RayScan { rays: 20, seed: 0, max_t: 1e4 }).map_err(err("gamma"))?;
        ensure(verdict.status == VerdictStatus::Refuted, || format!("coordinate {m} zeroed: not refuted"))?;
    }

    for big_n in [1, 2, 4, 8, 16] {
        let f = make_example33(big_n).f;
        for m in 1..=big_n {
            let ok = flat_segment_check(&f, &Vector::zeros(big_n), m).map_err(err("example33"))?;
            ensure(ok, || format!("example33 N={big_n}: flat segment check fails at m={m}"))?;
        }
    }
    Ok("theta(-1)=0, theta(2)=4, gamma recession rays, witness coordinates, example33 flat segments".into())
}

fn sphere_growth(corpus: &[CorpusEntry]) -> Outcome {
    let scan = RayScan { rays: 50, seed: 0, max_t: 1e4 };
    let mut count = 0;
    let mut max_r = 0.0f64;
    for e in corpus {
        let verdict = directional_verdict(&e.f, &scan).map_err(err(&e.name))?;
        if verdict.status != VerdictStatus::Certified {
            continue;
        }
        count += 1;
        let r = sphere_growth_radius(&e.f, 3).map_err(err(&e.name))?;
        let r = r.ok_or_else(|| format!("{}: no growth up to radius 2^20", e.name))?;
        max_r = max_r.max(r);
    }
    ensure(count > 0, || "no certified entries".into())?;
    Ok(format!("{count} certified entries, largest growth radius {max_r}"))
}

fn strict_minimum() -> Outcome {
    let theta = make_example_gamma(1).f;
    let m = strict_minimum_witness(&theta, 801, 4.0)
        .map_err(err("theta"))?
        .ok_or("theta: no strict minimum found")?;
    ensure(m.xi0.as_slice() == [2.0], || format!("theta slope {:?}", m.xi0))?;
    ensure((m.minimizer[0] - 1.0).abs() <= 0.01, || format!("theta minimizer {:?}", m.minimizer))?;

    let ex = make_example33(2).f;
    let xi = v(&[0.5, 0.25]);
    let x = strict_minimizer_for_slope(&ex, &xi, 161, 4.0)
        .map_err(err("example33"))?
        .ok_or("example33: no strict minimizer")?;
    ensure((x[0] - 1.5).abs() <= 0.01 && (x[1] - 2.5).abs() <= 0.01, || format!("example33 minimizer {x:?}"))?;
    let (g, _) = grid_argmin(&shifted(&ex, &xi).map_err(err("example33"))?, 4.0, 161).map_err(err("grid"))?;
    ensure((&g - &x).norm() <= 2.0 * 0.05 * 2f64.sqrt(), || format!("grid argmin {g:?} vs {x:?}"))?;

    let mut last = 0.0;
    for n in [2, 4, 8, 16] {
        let row = sweep_row(Family::Example33, n, 0).map_err(err("sweep"))?;
        let norm = row.minimizer_norm.ok_or_else(|| format!("sweep N={n}: no minimizer"))?;
        let closed = (1..=n).map(|k| (k as f64 + 0.5).powi(2)).sum::<f64>().sqrt();
        ensure((norm - closed).abs() <= 1e-9 * closed, || format!("sweep N={n}: {norm} vs closed form {closed}"))?;
        ensure(norm > last, || format!("sweep N={n}: norm {norm} does not exceed {last}"))?;
        last = norm;
    }
    Ok(format!("theta (2, {:.4}), example33 ({:.4}, {:.4}), sweep norms increasing", m.minimizer[0], x[0], x[1]))
}

fn seeded_psd(k: u64) -> Matrix {
    let mut r = rng::substream(2024, Purpose::Corpus, k);
    let n = 2 + (k as usize % 15);
    let rank = 1 + (k as usize * 7) % (n - 1);
    let factors: Vec<Vector> = (0..rank).map(|_| rng::gaussian_vector(&mut r, n, 1.0)).collect();
    let weighted: Vec<(f64, &Vector)> = factors.iter().map(|f| (1.0, f)).collect();
    Matrix::sum_of_outer(n, &weighted)
}

fn seeded_max_affine(k: u64) -> MaxAffine {
    let mut r = rng::substream(2025, Purpose::Corpus, k);
    let n = 1 + (k as usize % 6);
    let pieces = 2 + (k as usize % 5);
    let low = 1 + (k as usize % n.max(1));
    let basis: Vec<Vector> = (0..low).map(|_| rng::gaussian_vector(&mut r, n, 1.0)).collect();
    let list = (0..pieces)
        .map(|_| {
            let coeffs = rng::gaussian_vector(&mut r, low, 1.0);
            let slope = basis.iter().zip(coeffs.as_slice()).fold(Vector::zeros(n), |acc, (b, c)| acc.add_scaled(*c, b));
            AffinePiece { slope, offset: rng::gaussian_vector(&mut r, 1, 1.0)[0] }
        })
        .collect();
    let ConvexFunction::MaxAffine(m) = ConvexFunction::max_affine(list).unwrap() else { unreachable!() };
    m
}

fn max_affine_of(f: &ConvexFunction) -> Option<&MaxAffine> {
    match f {
        ConvexFunction::MaxAffine(m) => Some(m),
        ConvexFunction::AffinePlus(a) => max_affine_of(a.base()),
        _ => None,
    }
}

fn oracles(corpus: &[CorpusEntry]) -> Outcome {
    let config = DecompConfig::with_seed(0);
    let mut null_worst = 0.0f64;
    for k in 0..50u64 {
        let a = seeded_psd(k);
        let n = a.rows();
        let f = ConvexFunction::quadratic(a.clone(), Vector::zeros(n), 0.0).map_err(err("psd"))?;
        let d = decompose(&f, &config).map_err(err("psd"))?;
        let oracle = nullspace_oracle(&a).map_err(err("jacobi"))?;
        let dist = subspace_distance(&d.y_space, &oracle).map_err(err("psd"))?;
        ensure(dist <= 1e-7, || format!("psd matrix {k} (n={n}): distance {dist:e}"))?;
        null_worst = null_worst.max(dist);
    }

    let mut inputs: Vec<MaxAffine> = corpus.iter().filter_map(|e| max_affine_of(&e.f).cloned()).collect();
    let from_corpus = inputs.len();
    inputs.extend((0..30).map(seeded_max_affine));
    let mut span_worst = 0.0f64;
    for (k, m) in inputs.iter().enumerate() {
        let kept: Vec<AffinePiece> = retained_pieces(m, 0).into_iter().map(|i| m.pieces()[i].clone()).collect();
        let f = ConvexFunction::max_affine(kept).map_err(err("max-affine"))?;
        let ConvexFunction::MaxAffine(retained) = &f else { unreachable!() };
        let d = decompose(&f, &config).map_err(err("max-affine"))?;
        let dist = subspace_distance(&d.x_space, &pairwise_diff_span_oracle(retained)).map_err(err("max-affine"))?;
        ensure(dist <= 1e-7, || format!("max-affine input {k}: distance {dist:e}"))?;
        span_worst = span_worst.max(dist);
    }
    Ok(format!(
        "50 PSD matrices (max distance {null_worst:.1e}), {} max-affine inputs incl. {from_corpus} from corpus (max distance {span_worst:.1e})",
        inputs.len()
    ))
}

fn cli(args: &[&str], threads: &str) -> (Option<i32>, Vec<u8>) {
    let out = Command::new(BIN).args(args).env("CONVEXDECOMP_THREADS", threads).output().unwrap();
    (out.status.code(), out.stdout)
}

fn full_run(dir: &Path, threads: &str) -> Result<Vec<RunOutput>, String> {
    let corpus_dir = dir.join(format!("corpus-{threads}"));
    let mut runs = Vec::new();
    let (code, stdout) = cli(&["corpus", "--seed", "0", "--out-dir", corpus_dir.to_str().unwrap()], threads);
    ensure(code == Some(0), || format!("corpus command exited with {code:?}"))?;
    runs.push(("corpus".to_string(), code, stdout));
    let manifest = fs::read(corpus_dir.join("manifest.csv")).map_err(|e| e.to_string())?;
    runs.push(("manifest.csv".to_string(), Some(0), manifest));

    let mut specs: Vec<_> = fs::read_dir(&corpus_dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    specs.sort();
    for spec in &specs {
        let name = spec.file_name().unwrap().to_string_lossy().into_owned();
        runs.push((name.clone(), Some(0), fs::read(spec).map_err(|e| e.to_string())?));
        let path = spec.to_str().unwrap();
        let commands: [&[&str]; 4] = [
            &["decompose", path, "--seed", "3"],
            &["decompose", path, "--seed", "3", "--black-box"],
            &["coercivity", path, "--seed", "3", "--rays", "100"],
            &["witness", path, "--seed", "3", "--verify-rays", "100"],
        ];
        for args in commands {
            let (code, stdout) = cli(args, threads);
            runs.push((format!("{} {name}", args[1..].join(" ")), code, stdout));
        }
    }
    Ok(runs)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let one = full_run(dir.path(), "1")?;
    let eight = full_run(dir.path(), "8")?;
    let again = full_run(dir.path(), "1")?;
    ensure(one.len() == eight.len() && one.len() == again.len(), || "run lengths differ".into())?;
    for ((a, b), c) in one.iter().zip(&eight).zip(&again) {
        ensure(a.1 == b.1 && a.2 == b.2, || format!("{}: threads 1 and 8 differ", a.0.replace(dir.path().to_str().unwrap(), "")))?;
        ensure(a.1 == c.1 && a.2 == c.2, || format!("{}: repeated run differs", a.0))?;
    }
    let nonzero = one.iter().filter(|r| r.1 != Some(0)).count();
    Ok(format!("{} outputs byte-identical across 3 runs ({nonzero} with nonzero exit)", one.len()))
}

fn main() {
    let corpus = make_graded_corpus(0);
    let criteria: Vec<Criterion> = vec![
        ("decomposition identity", Box::new(|| reconstruction(&corpus))),
        ("characterization agreement", Box::new(|| characterization(&corpus))),
        ("base-point independence", Box::new(|| base_points(&corpus))),
        ("witness construction", Box::new(|| witness(&corpus))),
        ("exact identities", Box::new(identities)),
        ("sphere growth of certified entries", Box::new(|| sphere_growth(&corpus))),
        ("strict-minimum witness", Box::new(strict_minimum)),
        ("oracle equivalence", Box::new(|| oracles(&corpus))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
