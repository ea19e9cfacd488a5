//! End-to-end acceptance checks, one PASS/FAIL line per criterion.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use analytic_discs::bishop::{self, BishopOptions, GraphManifold};
use analytic_discs::conjugation::{self, ConjugationKind};
use analytic_discs::frames::{self, FrameLoop, StructuredFrame};
use analytic_discs::globevnik::{self, AttachmentTarget, FixedCenterFamily};
use analytic_discs::twist;
use analytic_discs::{BoundaryFunction, BoundaryGrid, C64};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Ledger {
    lines: Vec<(bool, String)>,
}

impl Ledger {
    fn check(&mut self, id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        let line = format!(
            "{} {id:>2} {name}: {detail} ({:.2}s of {}s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
        // written to the handle directly so the line survives test output capture
        let _ = writeln!(std::io::stdout().lock(), "{line}");
        self.lines.push((ok, line));
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn grid(s: usize) -> BoundaryGrid {
    BoundaryGrid::new(s).unwrap()
}

fn random_band_limited(rng: &mut ChaCha8Rng, g: BoundaryGrid, band: usize) -> BoundaryFunction {
    let a: Vec<(f64, f64)> = (0..=band).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let vals = g
        .thetas()
        .iter()
        .map(|&t| a.iter().enumerate().map(|(k, (c, s))| c * (k as f64 * t).cos() + s * (k as f64 * t).sin()).sum())
        .collect();
    BoundaryFunction::from_real_components(vec![vals], g).unwrap()
}

fn conjugation_identities() -> Outcome {
    let g = grid(256);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u = random_band_limited(&mut rng, g, 64);
        let t = conjugation::conjugate(&u, ConjugationKind::AtCenter).map_err(e)?;
        let tt = conjugation::conjugate(&t, ConjugationKind::AtCenter).map_err(e)?;
        let mean = u.mean()[0];
        let double = (0..256).map(|k| (tt.values(0)[k] + u.values(0)[k] - mean).norm()).fold(0.0, f64::max);
        let centered = t.mean()[0].norm();
        let t1 = conjugation::conjugate(&u, ConjugationKind::AtOne).map_err(e)?;
        let at_one = t1.values(0)[0].norm();
        let mut mass = 0.0f64;
        for tk in [&t, &t1] {
            let f = u.add(&tk.scale(C64::new(0.0, 1.0))).map_err(e)?;
            mass = mass.max(conjugation::negative_spectrum_mass(&f));
        }
        worst = worst.max(double).max(centered).max(at_one).max(mass);
    }
    ensure(worst < 1e-10, || format!("worst identity defect {worst:e}"))?;
    Ok(format!("worst identity defect {worst:e}"))
}

fn quadric_closed_form() -> Outcome {
    let m = GraphManifold::quadric(1, 1).map_err(e)?;
    let rho0 = 0.1;
    let g = grid(256);
    let sol = bishop::reference_disc(&m, rho0, g, BishopOptions::default()).map_err(e)?;
    let y = sol.disc.y_part(1);
    let dev = (0..256)
        .map(|k| (y[0][k] + 2.0 * rho0 * rho0 * g.theta(k).sin()).abs())
        .fold(0.0, f64::max);
    let residual = sol.attachment_residual(&m);
    ensure(dev < 1e-10 && residual < 1e-10, || format!("Y deviation {dev:e}, residual {residual:e}"))?;
    Ok(format!("Y deviation {dev:e}, residual {residual:e}"))
}

fn flat_r1(m: usize, n: usize, g: BoundaryGrid) -> Result<(bishop::BishopSolution, FrameLoop), String> {
    let man = GraphManifold::flat(m, n).map_err(e)?;
    let sol = bishop::reference_disc(&man, 0.1, g, BishopOptions::default()).map_err(e)?;
    let frame = bishop::build_r1_frame(&man, &sol, BishopOptions::default()).map_err(e)?;
    Ok((sol, frame))
}

fn r1_index_table() -> Outcome {
    for (m, n) in [(1, 1), (1, 2), (2, 1)] {
        let (_, frame) = flat_r1(m, n, grid(256))?;
        let p = frames::partial_indices(&frame).map_err(e)?;
        let total = frames::total_index(&frame).map_err(e)?;
        let mut want = vec![0; m + n];
        want[0] = 2;
        ensure(p.partial == want && total == 2, || format!("(m, n) = ({m}, {n}): {:?}, total {total}", p.partial))?;
    }
    Ok("(2, 0, …) with total 2 for all three shapes".into())
}

fn twisted_profile(base: &FrameLoop, ells: &[u32]) -> Result<(), String> {
    let theta = StructuredFrame::from_r1(base).map_err(e)?;
    let tw = twist::twist_frame(base, &theta, ells, twist::INDEX_EPS).map_err(e)?;
    let p = frames::partial_indices(&tw).map_err(e)?;
    let total = frames::total_index(&tw).map_err(e)?;
    let mut want: Vec<i64> = ells.iter().map(|&l| 2 * i64::from(l)).collect();
    want[0] += 2;
    want.sort_by(|a, b| b.cmp(a));
    let sum: i64 = want.iter().sum();
    ensure(p.partial == want && total == sum, || format!("ells {ells:?}: {:?} total {total}, want {want:?}", p.partial))
}

fn index_law() -> Outcome {
    let (_, base2) = flat_r1(1, 1, grid(256))?;
    for a in 0..3 {
        for b in 0..3 {
            twisted_profile(&base2, &[a, b])?;
        }
    }
    let (_, base3) = flat_r1(2, 1, grid(256))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let ells: Vec<u32> = (0..3).map(|_| rng.random_range(0..3)).collect();
        twisted_profile(&base3, &ells)?;
    }
    Ok(format!("9 exhaustive N=2 cases and 10 random N=3 cases at eps {}", twist::INDEX_EPS))
}

fn twist_invariants() -> Outcome {
    let eps = twist::DEFAULT_EPS;
    let mut worst_imag = 0.0f64;
    let mut min_h = f64::INFINITY;
    for ell in [0, 1, 2, 3, 5] {
        let t = twist::make_twist_auto(ell, eps).map_err(e)?;
        let w = t.winding().map_err(e)?;
        ensure(w == i64::from(ell), || format!("winding {w} for ell {ell}"))?;
        worst_imag = worst_imag.max(t.main_arc_imag());
        min_h = min_h.min(t.min_abs_h());
    }
    ensure(worst_imag < 1e-8 && min_h > 0.0, || format!("main-arc imag {worst_imag:e}, min |h| {min_h:e}"))?;
    Ok(format!("main-arc imag {worst_imag:e}, min |h| {min_h:e}"))
}

fn pipeline_family(n: usize, target_strength: Option<f64>) -> Result<FixedCenterFamily, String> {
    let (sol, frame) = flat_r1(n - 1, 1, grid(256))?;
    let theta = StructuredFrame::from_r1(&frame).map_err(e)?;
    let mut ells = vec![2; n];
    ells[0] = 1;
    let tw = twist::twist_structured(&theta, &ells, twist::INDEX_EPS).map_err(e)?;
    let x = tw.frame().map_err(e)?;
    let target = match target_strength {
        None => AttachmentTarget::linear(&x),
        Some(s) => AttachmentTarget::quadratic(&x, s),
    }
    .map_err(e)?;
    FixedCenterFamily::new(target, &sol.disc, &tw, globevnik::SOLVER_TOL).map_err(e)
}

fn dimension_law() -> Outcome {
    let g = grid(128);
    for n in [2usize, 3] {
        for code in 0..3usize.pow(n as u32) {
            let ks: Vec<i32> = (0..n).map(|j| (code / 3usize.pow(j as u32) % 3) as i32).collect();
            let frame = FrameLoop::diagonal_powers(g, &ks).map_err(e)?;
            let dim = frames::holomorphic_section_dim(&frame, 8).map_err(e)?;
            let want: usize = ks.iter().map(|&k| 2 * k as usize + 1).sum();
            ensure(dim == want, || format!("diag {ks:?}: {dim}, want {want}"))?;
        }
    }
    for n in [2usize, 3] {
        let (_, base) = flat_r1(n - 1, 1, grid(256))?;
        let theta = StructuredFrame::from_r1(&base).map_err(e)?;
        let mut ells = vec![2; n];
        ells[0] = 1;
        let tw = twist::twist_frame(&base, &theta, &ells, twist::INDEX_EPS).map_err(e)?;
        let dim = frames::holomorphic_section_dim(&tw, 96).map_err(e)?;
        ensure(dim == 5 * n, || format!("twisted N={n}: {dim}, want {}", 5 * n))?;
    }
    Ok("diagonal loops for N = 2, 3 and twisted (4, …, 4) frames".into())
}

fn random_u(rng: &mut ChaCha8Rng, g: BoundaryGrid, n: usize, size: f64) -> BoundaryFunction {
    let comps = (0..n)
        .map(|_| {
            let u = random_band_limited(rng, g, 8);
            u.values(0).iter().map(|v| size * v.re).collect()
        })
        .collect();
    BoundaryFunction::from_real_components(comps, g).unwrap()
}

fn implicit_solver() -> Outcome {
    let g = grid(256);
    let (_, r1) = flat_r1(1, 1, g)?;
    let linear = AttachmentTarget::linear(&r1).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sup = 0.0f64;
    for _ in 0..50 {
        let u = random_u(&mut rng, g, 2, 0.01);
        sup = sup.max(globevnik::solve_phi(&linear, &u, globevnik::SOLVER_TOL).map_err(e)?.max_abs());
    }
    ensure(sup < 1e-12, || format!("linear sup |φ| {sup:e}"))?;
    let quad = AttachmentTarget::quadratic(&r1, 0.5).map_err(e)?;
    let mut worst = 0.0f64;
    let mut deriv = 0.0f64;
    for _ in 0..5 {
        let u = random_u(&mut rng, g, 2, 0.01);
        let f = globevnik::solve_phi(&quad, &u, 1e-12).map_err(e)?;
        let t0 = conjugation::conjugate(&f, ConjugationKind::AtCenter).map_err(e)?;
        for k in 0..256 {
            let mut p = vec![C64::new(0.0, 0.0); 2];
            for l in 0..2 {
                let a = C64::new(u.values(l)[k].re - t0.values(l)[k].re, f.values(l)[k].re);
                for r in 0..2 {
                    p[r] += r1.matrix(k)[(r, l)] * a;
                }
            }
            for v in quad.eval(k, &p) {
                worst = worst.max(v.abs());
            }
        }
        let dir = u.scale(C64::new(100.0, 0.0));
        let h = 1e-4;
        let plus = globevnik::solve_phi(&quad, &dir.scale(C64::new(h, 0.0)), 1e-15).map_err(e)?;
        let minus = globevnik::solve_phi(&quad, &dir.scale(C64::new(-h, 0.0)), 1e-15).map_err(e)?;
        deriv = deriv.max(plus.sub(&minus).map_err(e)?.max_abs() / (2.0 * h) / dir.max_abs());
    }
    ensure(worst < 1e-10 && deriv < 1e-5, || format!("quadratic residual {worst:e}, |Dφ(0)| {deriv:e}"))?;
    Ok(format!("linear sup {sup:e}; quadratic residual {worst:e}, |Dφ(0)| {deriv:e}"))
}

fn fixed_center() -> Outcome {
    let n = 2;
    let family = pipeline_family(n, None)?;
    let d = family.free_dim();
    // the 5^d cube inscribed in the ball of radius 0.01
    let half = 0.01 / (d as f64).sqrt();
    let axis: Vec<f64> = (0..5).map(|i| -half + half * i as f64 / 2.0).collect();
    let mut worst = 0.0f64;
    for idx in 0..5usize.pow(d as u32) {
        let t: Vec<f64> = (0..d).map(|j| axis[idx / 5usize.pow(j as u32) % 5]).collect();
        let disc = family.disc(&t).map_err(e)?;
        let shift = disc
            .disc
            .center_value()
            .iter()
            .zip(family.center())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        worst = worst.max(shift);
    }
    ensure(worst < 1e-9, || format!("center moved by {worst:e}"))?;
    Ok(format!("625 discs, max center shift {worst:e}"))
}

fn angles(k: usize) -> Vec<f64> {
    (0..k).map(|i| i as f64 * std::f64::consts::TAU / k as f64).collect()
}

fn leading_order() -> Outcome {
    let family = pipeline_family(2, None)?;
    let r = globevnik::derivative_check(&family, 0.1, &angles(16)).map_err(e)?;
    let ratio = r.get_f64("ratio").unwrap_or(f64::NAN);
    ensure((3.0..=5.0).contains(&ratio), || format!("error ratio {ratio}"))?;
    Ok(format!("error ratio {ratio:.3}"))
}

fn foliation() -> Outcome {
    let rho_eps = 0.05;
    let mut out = Vec::new();
    for n in [2, 3] {
        let family = pipeline_family(n, None)?;
        let r = globevnik::foliation_rank(&family, rho_eps, &angles(16), None, globevnik::RANK_TOL).map_err(e)?;
        let smin = r.get_f64("sigma_min").unwrap_or(f64::NAN);
        ensure(r.pass && smin > 1e-6 * rho_eps, || format!("N={n}: σ_min {smin:e}, ranks {:?}", r.values["ranks"]))?;
        out.push(format!("N={n} σ_min {smin:.3e}"));
    }
    Ok(out.join(", "))
}

fn random_loop(rng: &mut ChaCha8Rng, g: BoundaryGrid, powers: &[i32]) -> FrameLoop {
    let n = powers.len();
    let c = |rng: &mut ChaCha8Rng, s: f64| C64::new(rng.random_range(-s..s), rng.random_range(-s..s));
    let p1 = DMatrix::from_fn(n, n, |_, _| c(rng, 0.1));
    let p2 = DMatrix::from_fn(n, n, |_, _| c(rng, 0.05));
    FrameLoop::diagonal_powers(g, powers)
        .unwrap()
        .left_mul(|z| DMatrix::<C64>::identity(n, n) + &p1 * z + &p2 * (z * z))
        .unwrap()
}

fn random_real_invertible(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rng.random_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 })
}

fn invariance() -> Outcome {
    let g = grid(128);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in ["gauge", "permutation", "shift"] {
        for _ in 0..25 {
            let n = rng.random_range(2..4);
            let powers: Vec<i32> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let f = random_loop(&mut rng, g, &powers);
            let base = frames::partial_indices(&f).map_err(e)?;
            let (other, shift) = match kind {
                "gauge" => (f.right_mul_real(&random_real_invertible(&mut rng, n)).map_err(e)?, 0),
                "permutation" => {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    (f.permute_columns(&perm).map_err(e)?, 0)
                }
                _ => {
                    let k = rng.random_range(-1..3);
                    (f.shift(k), 2 * i64::from(k))
                }
            };
            let p = frames::partial_indices(&other).map_err(e)?;
            let want: Vec<i64> = base.partial.iter().map(|v| v + shift).collect();
            ensure(p.partial == want && p.total == base.total + shift * n as i64, || {
                format!("{kind}: {:?} vs {:?} (powers {powers:?})", p.partial, base.partial)
            })?;
        }
    }
    Ok("25 loops each for gauge, permutation and shift".into())
}

fn cli_determinism() -> Outcome {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/flat.json");
    let dir = tempfile::tempdir().map_err(e)?;
    let mut results = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_discs"))
            .arg("full-pipeline")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(e)?;
        ensure(status.status.code() == Some(0), || format!("run {run} exited with {:?}", status.status.code()))?;
        results.push(std::fs::read(out.join("results.json")).map_err(e)?);
    }
    ensure(results[0] == results[1], || "results.json differs between runs".into())?;
    Ok(format!("exit 0 twice, {} identical bytes", results[0].len()))
}

#[test]
fn acceptance() {
    let mut ledger = Ledger { lines: Vec::new() };
    let s = Duration::from_secs;
    ledger.check(1, "conjugation identities", s(1), conjugation_identities);
    ledger.check(2, "quadric closed form", s(1), quadric_closed_form);
    ledger.check(3, "flat R1 index table", s(10), r1_index_table);
    ledger.check(4, "twisted index law", s(60), index_law);
    ledger.check(5, "twist invariants", s(5), twist_invariants);
    ledger.check(6, "section dimension law", s(30), dimension_law);
    ledger.check(7, "implicit solver", s(30), implicit_solver);
    ledger.check(8, "fixed center", s(60), fixed_center);
    ledger.check(9, "leading-order derivative law", s(30), leading_order);
    ledger.check(10, "foliation rank", s(30), foliation);
    ledger.check(11, "index invariance", s(60), invariance);
    ledger.check(12, "CLI determinism", s(120), cli_determinism);
    let failed: Vec<&String> = ledger.lines.iter().filter(|(ok, _)| !ok).map(|(_, l)| l).collect();
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("\n"));
}
