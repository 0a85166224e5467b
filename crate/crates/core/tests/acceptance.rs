//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line with
//! its measured numbers; the test fails if any criterion fails.
//!
//! Lines are written straight to the process stdout so they show up even when
//! the harness captures test output.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rulecover::eval::evaluate_labels;
use rulecover::io;
use rulecover::isometry::{shape_registration, IsometryConfig};
use rulecover::mesh::Surface;
use rulecover::pose::{p3p_solve, rotation_geodesic_distance, Pose};
use rulecover::report::Report;
use rulecover::solver::{brute_force_oracle, lp_lower_bound};
use rulecover::synth::{synth_isometric_instance, synth_template_instance, SynthSpec};
use rulecover::template::{template_image_registration, TemplateMatchConfig};
use rulecover::{
    solve_exact, solve_relaxed, CoveringProgram, Error, Mode, Registration, SolverConfig, SolverResult,
};

const LP_TOL: f64 = 1e-7;
const RATIOS: [f64; 8] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
const SEEDS: u64 = 5;
const MIN_INLIER_RECALL: f64 = 0.95;
const RELAXED_GAP: f64 = 0.2;
const P3P_TOL: f64 = 1e-6;
const TEMPLATE_PRECISION: f64 = 0.95;
const TEMPLATE_OUTLIER_RECALL: f64 = 0.90;
const TEMPLATE_SEED: u64 = 0;
const TEMPLATE_BUDGET: f64 = 20.0;

fn say(line: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(n: usize, title: &str, ok: bool, detail: String) -> Verdict {
    say(format!("criterion {n} [{title}]: {} | {detail}", if ok { "PASS" } else { "FAIL" }));
    Verdict { ok, detail }
}

fn random_program(rng: &mut ChaCha8Rng) -> CoveringProgram {
    let p = rng.random_range(1..=18);
    let c = rng.random_range(0..=40);
    let constraints = (0..c)
        .map(|_| {
            let size = [1usize, 2, 4][rng.random_range(0..3)].min(p);
            rand::seq::index::sample(rng, p, size).into_vec()
        })
        .collect();
    CoveringProgram::new(p, constraints).unwrap()
}

fn trace_ok(r: &SolverResult) -> bool {
    let monotone = r.trace.windows(2).all(|w| {
        w[1].upper_bound <= w[0].upper_bound && w[1].lower_bound >= w[0].lower_bound - LP_TOL
    });
    let closed = match r.trace.last() {
        Some(last) if r.optimal => {
            last.upper_bound == r.objective && last.upper_bound as f64 - last.lower_bound < 1.0 - LP_TOL
        }
        Some(_) => true,
        None => false,
    };
    monotone && closed
}

fn solver(budget: f64) -> SolverConfig {
    SolverConfig {
        time_budget: budget,
        ..SolverConfig::default()
    }
}

struct Programs {
    programs: Vec<CoveringProgram>,
    exact: Vec<SolverResult>,
}

fn criterion_1() -> (Verdict, Programs) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let programs: Vec<CoveringProgram> = (0..200).map(|_| random_program(&mut rng)).collect();
    let mut mismatches = 0;
    let mut infeasible = 0;
    let mut exact = Vec::new();
    for prog in &programs {
        let (want, _) = brute_force_oracle(prog).unwrap();
        let r = solve_exact(prog, &solver(60.0)).unwrap();
        mismatches += usize::from(r.objective != want || !r.optimal);
        infeasible += usize::from(!prog.is_satisfied_by(&r.labels));
        exact.push(r);
    }
    let elapsed = start.elapsed();
    let ok = mismatches == 0 && infeasible == 0 && elapsed < Duration::from_secs(60);
    let v = verdict(
        1,
        "solver oracle equivalence",
        ok,
        format!("200 programs, {mismatches} objective mismatches, {infeasible} infeasible labelings, {elapsed:.2?} (< 60 s)"),
    );
    (v, Programs { programs, exact })
}

struct SweepRow {
    ratio: f64,
    exact: Registration,
    exact_recall: f64,
    relaxed_recall: f64,
}

struct Sweep {
    rows: Vec<SweepRow>,
}

fn isometric_run(ratio: f64, seed: u64, mode: Mode) -> (Registration, rulecover::eval::EvalReport, Duration) {
    let inst = synth_isometric_instance(&SynthSpec::isometric(100, ratio, seed)).unwrap();
    let config = IsometryConfig {
        mode,
        seed,
        solver: solver(30.0),
        ..IsometryConfig::default()
    };
    let start = Instant::now();
    let (src, tgt) = (Surface::Mesh(inst.source), Surface::Mesh(inst.target));
    let reg = shape_registration(&src, &tgt, &inst.matches, &config).unwrap();
    let elapsed = start.elapsed();
    let eval = evaluate_labels(&reg.labels, inst.matches.gt_labels.as_ref().unwrap()).unwrap();
    (reg, eval, elapsed)
}

fn criterion_2_3() -> (Verdict, Verdict, Sweep) {
    let mut rows = Vec::new();
    let mut missed_total = 0;
    let mut worst_recall: f64 = 1.0;
    let mut slowest = Duration::ZERO;
    let mut uncertified = 0;
    for &ratio in &RATIOS {
        for seed in 0..SEEDS {
            let (reg, eval, elapsed) = isometric_run(ratio, seed, Mode::Exact);
            let (_, relaxed, _) = isometric_run(ratio, seed, Mode::Relaxed);
            missed_total += eval.outliers_missed;
            worst_recall = worst_recall.min(eval.recall);
            slowest = slowest.max(elapsed);
            uncertified += usize::from(!reg.certified());
            rows.push(SweepRow {
                ratio,
                exact: reg,
                exact_recall: eval.recall,
                relaxed_recall: relaxed.recall,
            });
        }
    }
    let ok2 = missed_total == 0
        && worst_recall >= MIN_INLIER_RECALL
        && slowest < Duration::from_secs(30)
        && uncertified == 0;
    let v2 = verdict(
        2,
        "exact at high outlier ratios",
        ok2,
        format!(
            "40 instances, {missed_total} outliers missed, worst inlier recall {worst_recall:.3} (>= {MIN_INLIER_RECALL}), \
             slowest {slowest:.2?} (< 30 s), {uncertified} uncertified"
        ),
    );

    let worst_low = rows
        .iter()
        .filter(|r| r.ratio <= 0.4 + 1e-12)
        .map(|r| r.relaxed_recall)
        .fold(1.0, f64::min);
    let at_07: Vec<&SweepRow> = rows.iter().filter(|r| (r.ratio - 0.7).abs() < 1e-12).collect();
    let exact_07 = at_07.iter().map(|r| r.exact_recall).sum::<f64>() / at_07.len() as f64;
    let relaxed_07 = at_07.iter().map(|r| r.relaxed_recall).sum::<f64>() / at_07.len() as f64;
    let min_gap = at_07
        .iter()
        .map(|r| r.exact_recall - r.relaxed_recall)
        .fold(f64::INFINITY, f64::min);
    let ok3 = worst_low >= MIN_INLIER_RECALL && min_gap >= RELAXED_GAP;
    let curve: Vec<String> = RATIOS
        .iter()
        .map(|&ratio| {
            let rs: Vec<f64> = rows
                .iter()
                .filter(|r| (r.ratio - ratio).abs() < 1e-12)
                .map(|r| r.relaxed_recall)
                .collect();
            format!("{ratio:.1}:{:.2}", rs.iter().sum::<f64>() / rs.len() as f64)
        })
        .collect();
    let v3 = verdict(
        3,
        "relaxed breakdown",
        ok3,
        format!(
            "worst relaxed recall at ratio <= 0.4 {worst_low:.3} (>= {MIN_INLIER_RECALL}); at 0.7 exact {exact_07:.3} vs relaxed \
             {relaxed_07:.3}, smallest per-seed gap {min_gap:.3} (>= {RELAXED_GAP}); relaxed recall curve {}",
            curve.join(" ")
        ),
    );
    (v2, v3, Sweep { rows })
}

fn criterion_4(programs: &Programs, sweep: &Sweep) -> Verdict {
    let mut checked = 0;
    let mut bad = 0;
    for r in &programs.exact {
        checked += 1;
        bad += usize::from(!trace_ok(r));
    }
    for row in &sweep.rows {
        for r in row.exact.clusters.iter().filter_map(|c| c.result.as_ref()) {
            checked += 1;
            bad += usize::from(!trace_ok(r) || !r.optimal);
        }
    }
    verdict(
        4,
        "branch-and-bound trace properties",
        bad == 0,
        format!("{checked} traces, {bad} violating monotonicity or the unit-gap certificate"),
    )
}

fn criterion_5(programs: &Programs) -> Verdict {
    let mut above = 0;
    for (prog, exact) in programs.programs.iter().zip(&programs.exact) {
        let lp = lp_lower_bound(prog, &vec![None; prog.num_vars()], LP_TOL).unwrap();
        above += usize::from(lp > exact.objective as f64 + LP_TOL);
    }
    let cycle = CoveringProgram::new(3, vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
    let lp = solve_relaxed(&cycle, &solver(10.0)).unwrap().lower_bound;
    let ilp = solve_exact(&cycle, &solver(10.0)).unwrap().objective;
    let ok = above == 0 && (lp - 1.5).abs() <= 1e-7 && ilp == 2;
    verdict(
        5,
        "LP bound sanity",
        ok,
        format!("{above}/200 LP optima above the integer optimum; odd cycle LP {lp:.9} (1.5 +- 1e-7), ILP {ilp} (2)"),
    )
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut recovered = 0;
    for _ in 0..1000 {
        let rotation = Rotation3::from_euler_angles(
            rng.random_range(-3.1..3.1),
            rng.random_range(-1.5..1.5),
            rng.random_range(-3.1..3.1),
        );
        let translation = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(4.0..8.0));
        let truth = Pose::new(*rotation.matrix(), translation).unwrap();
        let points: [Point3<f64>; 3] = std::array::from_fn(|_| {
            Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let bearings = points.map(|p| truth.transform(&p).coords.normalize());
        let Ok(poses) = p3p_solve(&points, &bearings) else {
            continue;
        };
        let hit = poses.iter().any(|p| {
            rotation_geodesic_distance(&p.rotation, &truth.rotation).unwrap() <= P3P_TOL
                && (p.translation - truth.translation).norm() / truth.translation.norm() <= P3P_TOL
        });
        recovered += usize::from(hit);
    }
    let mut degenerate = 0;
    for _ in 0..200 {
        let base = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let points = [base, base + dir, base + 2.5 * dir];
        let shift = Vector3::new(0.0, 0.0, 6.0);
        let bearings = points.map(|p| (p.coords + shift).normalize());
        degenerate += usize::from(matches!(p3p_solve(&points, &bearings), Err(Error::DegenerateConfiguration(_))));
    }
    let ok = recovered >= 999 && degenerate == 200;
    verdict(
        6,
        "P3P correctness",
        ok,
        format!("{recovered}/1000 recovered within {P3P_TOL:e} (>= 999); {degenerate}/200 collinear inputs rejected"),
    )
}

fn criterion_7() -> Verdict {
    let inst = synth_template_instance(&SynthSpec::template(225, 0.3, TEMPLATE_SEED)).unwrap();
    let gt = inst.matches.gt_labels.as_ref().unwrap();
    let run = |mode: Mode| {
        let config = TemplateMatchConfig {
            mode,
            solver: solver(TEMPLATE_BUDGET),
            ..TemplateMatchConfig::default()
        };
        let start = Instant::now();
        let reg = template_image_registration(&inst.template, &inst.image, &inst.matches, &inst.intrinsics, &config)
            .unwrap();
        let elapsed = start.elapsed();
        let eval = evaluate_labels(&reg.labels, gt).unwrap();
        (reg, eval, elapsed)
    };
    let (reg, exact, elapsed) = run(Mode::Exact);
    let (_, local, _) = run(Mode::LocalFilter);
    let ok = exact.precision >= TEMPLATE_PRECISION
        && exact.outlier_recall >= TEMPLATE_OUTLIER_RECALL
        && local.recall < exact.recall
        && elapsed < Duration::from_secs(30);
    verdict(
        7,
        "template pipeline",
        ok,
        format!(
            "225 points, {} outliers, seed {TEMPLATE_SEED}: exact precision {:.3} (>= {TEMPLATE_PRECISION}), outlier recall {:.3} \
             (>= {TEMPLATE_OUTLIER_RECALL}), inlier recall {:.3}, objective {} lower bound {:.2} certified {}; local filtering \
             inlier recall {:.3} (< exact); {elapsed:.2?} (< 30 s)",
            gt.outlier_count(),
            exact.precision,
            exact.outlier_recall,
            exact.recall,
            reg.objective(),
            reg.lower_bound(),
            reg.certified(),
            local.recall,
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut times = Vec::new();
    let mut all_optimal = true;
    for n in [50, 100, 150, 200] {
        let inst = synth_isometric_instance(&SynthSpec::isometric(n, 0.5, 8)).unwrap();
        let config = IsometryConfig {
            clusters: Some(1),
            seed: 8,
            solver: solver(120.0),
            ..IsometryConfig::default()
        };
        let (src, tgt) = (Surface::Mesh(inst.source), Surface::Mesh(inst.target));
        // best of three damps scheduler noise on the small sizes
        let mut best = Duration::MAX;
        for _ in 0..3 {
            let start = Instant::now();
            let reg = shape_registration(&src, &tgt, &inst.matches, &config).unwrap();
            best = best.min(start.elapsed());
            all_optimal &= reg.certified();
        }
        times.push((n, best));
    }
    let monotone = times.windows(2).all(|w| w[1].1 >= w[0].1);
    let largest = times.last().unwrap().1;
    let ok = all_optimal && monotone && largest < Duration::from_secs(120);
    let listing: Vec<String> = times.iter().map(|(n, t)| format!("{n}:{t:.2?}")).collect();
    verdict(
        8,
        "scaling sanity",
        ok,
        format!(
            "single cluster, 50% outliers, times {} (non-decreasing: {monotone}), all certified: {all_optimal}",
            listing.join(" ")
        ),
    )
}

fn criterion_9() -> Verdict {
    let shapes = || {
        let inst = synth_isometric_instance(&SynthSpec::isometric(100, 0.4, 9)).unwrap();
        let config = IsometryConfig {
            clusters: Some(3),
            seed: 9,
            ..IsometryConfig::default()
        };
        let (src, tgt) = (Surface::Mesh(inst.source.clone()), Surface::Mesh(inst.target.clone()));
        let reg = shape_registration(&src, &tgt, &inst.matches, &config).unwrap();
        let eval = evaluate_labels(&reg.labels, inst.matches.gt_labels.as_ref().unwrap()).unwrap();
        (inst, Report::new("match-shapes", &config, &reg, Some(eval), None).unwrap().to_json().unwrap())
    };
    let template = || {
        let inst = synth_template_instance(&SynthSpec::template(64, 0.3, 9)).unwrap();
        let config = TemplateMatchConfig {
            clusters: 2,
            seed: 9,
            ..TemplateMatchConfig::default()
        };
        let reg = template_image_registration(&inst.template, &inst.image, &inst.matches, &inst.intrinsics, &config)
            .unwrap();
        (inst, Report::new("match-template", &config, &reg, None, None).unwrap().to_json().unwrap())
    };
    let (iso, a) = shapes();
    let (_, b) = shapes();
    let (tpl, c) = template();
    let (_, d) = template();
    let identical = a == b && c == d;

    let here = std::path::Path::new("acceptance");
    let round_trips = [
        io::parse_obj(&io::emit_obj(&iso.source), here).unwrap() == iso.source,
        io::parse_ply(&io::emit_ply(&iso.target), here).unwrap() == iso.target,
        io::parse_matches(&io::emit_matches(&iso.matches), here).unwrap() == iso.matches,
        io::parse_points3(&io::emit_points3(&tpl.template), here).unwrap() == tpl.template,
        io::parse_points2(&io::emit_points2(&tpl.image), here).unwrap() == tpl.image,
        io::parse_intrinsics(&io::emit_intrinsics(&tpl.intrinsics), here).unwrap() == tpl.intrinsics,
        Report::from_json(&a).unwrap().to_json().unwrap() == a,
    ];
    let passed = round_trips.iter().filter(|&&x| x).count();
    let ok = identical && passed == round_trips.len();
    verdict(
        9,
        "round trips and determinism",
        ok,
        format!(
            "report JSON byte-identical across runs: {identical} ({} and {} bytes); {passed}/{} format round trips exact",
            a.len(),
            c.len(),
            round_trips.len(),
        ),
    )
}

#[test]
fn acceptance() {
    let (v1, programs) = criterion_1();
    let (v2, v3, sweep) = criterion_2_3();
    let v4 = criterion_4(&programs, &sweep);
    let v5 = criterion_5(&programs);
    let v6 = criterion_6();
    let v7 = criterion_7();
    let v8 = criterion_8();
    let v9 = criterion_9();
    let all = [v1, v2, v3, v4, v5, v6, v7, v8, v9];
    let failed: Vec<String> = all
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.ok)
        .map(|(i, v)| format!("criterion {}: {}", i + 1, v.detail))
        .collect();
    say(format!("acceptance: {}/9 criteria pass", 9 - failed.len()));
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}
