//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skelfilter::io::{frame_to_line, parse_stream, write_frames, write_trajectory_to};
use skelfilter::kabsch::rotation_angle_between;
use skelfilter::kalman::KalmanState;
use skelfilter::metrics::{acc, mae, std as std_metric};
use skelfilter::permanence::{measurement_variance, KeypointFilterState};
use skelfilter::pipeline::run_stream;
use skelfilter::sim::{body_from_height, generate};
use skelfilter::spatial::{adjust_confidences, estimate_height, evaluate, gate_by_distance};
use skelfilter::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, Box<dyn FnOnce() -> Outcome>, Option<Duration>);

fn timed(f: impl FnOnce() -> Outcome, budget: Option<Duration>) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    out.detail = format!("{} [{:.2} s]", out.detail, elapsed.as_secs_f64());
    if let Some(b) = budget {
        if elapsed > b {
            out.pass = false;
            out.detail += &format!(" exceeds {:.0} s budget", b.as_secs_f64());
        }
    }
    out
}

/// Exhaustive minimum over matchings of size `min(rows, cols)`, summed in row
/// order like the solver output.
fn brute_force_min(cost: &CostMatrix) -> f64 {
    fn go(cost: &CostMatrix, k: usize, used: &mut [bool], pairs: &mut Vec<(usize, usize)>, best: &mut f64) {
        let tall = cost.rows() > cost.cols();
        let (short, long) = if tall {
            (cost.cols(), cost.rows())
        } else {
            (cost.rows(), cost.cols())
        };
        if k == short {
            let mut sorted = pairs.clone();
            sorted.sort_unstable();
            *best = best.min(assignment_cost(cost, &sorted));
            return;
        }
        for other in 0..long {
            if !used[other] {
                used[other] = true;
                pairs.push(if tall { (other, k) } else { (k, other) });
                go(cost, k + 1, used, pairs, best);
                pairs.pop();
                used[other] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    let long = cost.rows().max(cost.cols());
    go(cost, 0, &mut vec![false; long], &mut Vec::new(), &mut best);
    best
}

fn c1_assignment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (n, m) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let cost = CostMatrix::from_rows(&rows);
        if assignment_cost(&cost, &solve_assignment(&cost)) != brute_force_min(&cost) {
            mismatches += 1;
        }
    }
    Outcome::new(
        mismatches == 0,
        format!("{mismatches}/1000 matrices differ from exhaustive minimum"),
    )
}

fn c2_height_example() -> Outcome {
    let s = Skeleton::from_keypoints([
        (Joint::LeftElbow, Keypoint::new(Point3::new(0.2, 0.1, 1.5), 0.9)),
        (Joint::LeftWrist, Keypoint::new(Point3::new(0.2, -0.15, 1.5), 0.9)),
    ]);
    let h = estimate_height(&s, &default_graph(), &SpatialConfig::default());
    let pass = h.is_some_and(|h| (h - 1.712).abs() <= 0.005);
    Outcome::new(pass, format!("height {:?} m for a 0.25 m forearm", h))
}

fn c3_covariance_law() -> Outcome {
    let cfg = PermanenceConfig::default();
    let at_beta = measurement_variance(0.2, &cfg);
    let values: Vec<f64> = (0..=100)
        .map(|k| measurement_variance(k as f64 / 100.0, &cfg))
        .collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        at_beta == 1.0 && decreasing,
        format!("R(0.2) = {at_beta}, strictly decreasing on 0.00..=1.00: {decreasing}"),
    )
}

fn c4_occlusion_permanence() -> Outcome {
    let dt = 1.0 / 30.0;
    let v = Point3::new(0.35, -0.12, 0.2);
    let start = Point3::new(0.1, -0.3, 1.6);
    let at = |k: usize| start + v * (k as f64 * dt);
    let (visible, occluded) = (90, 20);
    let end = visible + occluded;

    let model = PermanenceModel::new(PermanenceConfig::default()).unwrap();
    let mut pf = KeypointFilterState::new(0.0, at(0), 1.0, &model, ChaCha8Rng::seed_from_u64(3));
    let mut pf_out = at(0);
    for k in 1..=end {
        let obs = (k <= visible).then(|| (at(k), 1.0));
        pf_out = pf.step(obs, dt, true, &model).position;
    }
    let pf_err = (pf_out - at(end)).norm();

    let mut drifts = Vec::new();
    for cfg in [KalmanConfig::constant_velocity(), KalmanConfig::constant_acceleration()] {
        let mut kf = KalmanState::new(at(0), &cfg);
        for k in 1..=end {
            kf.predict(dt, &cfg);
            if k <= visible {
                kf.update(at(k), &cfg);
            }
        }
        drifts.push((kf.position() - at(end)).norm() * 1e3);
    }
    Outcome::new(
        pf_err < 1e-3,
        format!(
            "permanence error {:.4} mm after {occluded} occluded frames; coasting drift kf1 {:.2e} mm, kf2 {:.2e} mm",
            pf_err * 1e3,
            drifts[0],
            drifts[1]
        ),
    )
}

fn table(task: Task, seed: u64, with_ee: bool) -> Vec<MetricReport> {
    let out = generate(&ScenarioSpec::new(task, 20.0, 2, seed)).unwrap();
    let truth = out.trajectory(0, Joint::LeftWrist);
    FilterKind::ALL
        .iter()
        .map(|kind| {
            let r = run_stream(&out.measurements, &PipelineConfig::with_filter(*kind)).unwrap();
            MetricReport::compute(&truth, &r.operator_joint, with_ee.then_some(&r.end_effector)).unwrap()
        })
        .collect()
}

fn c5_table_one_direction() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for task in [Task::T0Sinusoid, Task::T3HeavyOcclusion] {
        for seed in [1, 2] {
            let reports = table(task, seed, false);
            let perm = &reports[3];
            let raw = &reports[0];
            let mae_ok = reports[..3].iter().all(|r| perm.mae_mm < r.mae_mm);
            let ratio = perm.std_mm / raw.std_mm;
            pass &= mae_ok && ratio <= 0.5;
            lines.push(format!(
                "{}/s{seed}: MAE {} | STD ratio {:.0}%",
                task.label(),
                reports
                    .iter()
                    .map(|r| format!("{} {:.1}", r.label, r.mae_mm))
                    .collect::<Vec<_>>()
                    .join(" "),
                ratio * 100.0
            ));
        }
    }
    Outcome::new(pass, lines.join("; "))
}

fn c6_table_two_direction() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in [1, 2] {
        let reports = table(Task::T1Interaction, seed, true);
        let safety: Vec<f64> = reports.iter().map(|r| r.safety_std_mm.unwrap()).collect();
        let perm = safety[3];
        pass &= perm < safety[0] && safety[..3].iter().all(|s| perm < *s);
        lines.push(format!(
            "t1/s{seed}: safety std {}",
            reports
                .iter()
                .zip(&safety)
                .map(|(r, s)| format!("{} {:.1}", r.label, s))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    Outcome::new(pass, lines.join("; "))
}

fn c7_kabsch_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_rot, mut worst_trans) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let axis = Unit::new_normalize(Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        let rotation = Rotation3::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI));
        let translation = Point3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let source: Vec<Point3> = (0..10)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let target: Vec<Point3> = source.iter().map(|p| rotation * p + translation).collect();
        let fit = kabsch_align(&source, &target).unwrap();
        worst_rot = worst_rot.max(rotation_angle_between(&fit.rotation, &rotation));
        worst_trans = worst_trans.max((fit.translation - translation).norm());
    }
    Outcome::new(
        worst_rot < 1e-9 && worst_trans < 1e-9,
        format!("worst rotation error {worst_rot:.2e} rad, translation error {worst_trans:.2e} m over 100 trials"),
    )
}

fn c8_metric_identities() -> Outcome {
    let dt = 1.0 / 30.0;
    let grid = |f: &dyn Fn(f64) -> Point3| {
        Trajectory::new("x", (0..90).map(|k| (k as f64 * dt, f(k as f64 * dt))).collect()).unwrap()
    };
    let a = grid(&|t| Point3::new(t.sin(), 0.3 * t, (2.0 * t).cos()));
    let offset = grid(&|t| Point3::new(t.sin() + 0.03, 0.3 * t, (2.0 * t).cos() + 0.04));
    let accel = Point3::new(0.8, -0.4, 0.2);
    let linear = grid(&|t| Point3::new(0.1, 0.2, 0.3) * t);
    let quadratic = grid(&|t| Point3::new(0.1, 0.2, 0.3) * t + accel * (0.5 * t * t));

    let self_zero = mae(&a, &a).unwrap() == 0.0 && std_metric(&a, &a).unwrap() == 0.0 && acc(&a, &a).unwrap() == 0.0;
    let (m, s) = (mae(&a, &offset).unwrap(), std_metric(&a, &offset).unwrap());
    let offset_ok = (m - 50.0).abs() < 1e-9 && s.abs() < 1e-9;
    let acc_lq = acc(&linear, &quadratic).unwrap();
    let acc_ok = (acc_lq - accel.norm()).abs() < 1e-6;
    Outcome::new(
        self_zero && offset_ok && acc_ok,
        format!(
            "self-comparison zero: {self_zero}; offset MAE {m:.9} mm STD {s:.2e} mm; ACC {acc_lq:.9} vs {:.9} m/s^2",
            accel.norm()
        ),
    )
}

fn chain_bytes(seed: u64) -> Vec<u8> {
    let sim = generate(&ScenarioSpec::new(Task::T1Interaction, 6.0, 2, seed)).unwrap();
    let mut bytes = Vec::new();
    write_frames(&mut bytes, &sim.truth).unwrap();
    let mut measured = Vec::new();
    write_frames(&mut measured, &sim.measurements).unwrap();
    let frames = parse_stream(measured.as_slice()).unwrap();
    bytes.extend(&measured);
    let truth = sim.trajectory(0, Joint::LeftWrist);
    let mut reports = Vec::new();
    for kind in FilterKind::ALL {
        let cfg = PipelineConfig {
            seed,
            ..PipelineConfig::with_filter(kind)
        };
        let r = run_stream(&frames, &cfg).unwrap();
        for f in &r.frames {
            bytes.extend(frame_to_line(f).as_bytes());
        }
        write_trajectory_to(&mut bytes, &r.target).unwrap();
        write_trajectory_to(&mut bytes, &r.end_effector).unwrap();
        reports.push(MetricReport::compute(&truth, &r.operator_joint, Some(&r.end_effector)).unwrap());
    }
    bytes.extend(serde_json::to_vec(&reports).unwrap());
    bytes
}

fn c9_determinism_throughput() -> Outcome {
    let identical = chain_bytes(21) == chain_bytes(21);
    let sim = generate(&ScenarioSpec::new(Task::T1Interaction, 20.0, 2, 22)).unwrap();
    let cfg = PipelineConfig::with_filter(FilterKind::Permanence);
    let start = Instant::now();
    run_stream(&sim.measurements, &cfg).unwrap();
    let fps = sim.measurements.len() as f64 / start.elapsed().as_secs_f64();
    Outcome::new(
        identical && fps >= 30.0,
        format!("byte-identical chain: {identical}; permanence run {fps:.0} frames/s on 2 persons"),
    )
}

fn c10_spatial_rules() -> Outcome {
    let graph = default_graph();
    let cfg = SpatialConfig::default();
    let mut checks = Vec::new();

    let mut body = body_from_height(1.75).map_positions(|p| p + Point3::new(0.0, 0.0, 2.0));
    body.keypoints.remove(&Joint::Root);
    body.keypoints.values_mut().for_each(|k| k.confidence = 0.5);
    let evaluated = evaluate(&body, &graph, &cfg).unwrap();
    let reward = 1.0 + 2.0 * cfg.reward;
    checks.push((
        "all-valid x(1+2r)",
        evaluated
            .keypoints
            .values()
            .all(|k| (k.confidence - 0.5 * reward).abs() < 1e-12),
    ));

    let mut bent = evaluated.clone();
    bent.keypoints.values_mut().for_each(|k| k.confidence = 0.5);
    let elbow = bent.position(Joint::LeftElbow).unwrap();
    bent.insert(
        Joint::LeftElbow,
        Keypoint::new(elbow + Point3::new(0.25, 0.0, 0.0), 0.5),
    );
    let adjusted = adjust_confidences(&bent, &graph, &cfg);
    let penalty = 1.0 - 2.0 * cfg.penalty;
    checks.push((
        "two-invalid x(1-2p)",
        (adjusted.get(Joint::LeftElbow).unwrap().confidence - 0.5 * penalty).abs() < 1e-12,
    ));

    let mut confident = evaluated.clone();
    confident.keypoints.values_mut().for_each(|k| k.confidence = 0.95);
    let clamped = adjust_confidences(&confident, &graph, &cfg);
    checks.push(("clamp at 1", clamped.keypoints.values().all(|k| k.confidence == 1.0)));

    let at = |z: f64| Skeleton::from_keypoints([(Joint::Root, Keypoint::new(Point3::new(0.0, 0.0, z), 1.0))]);
    let boundary = gate_by_distance(&at(3.0), &cfg).unwrap();
    let beyond = gate_by_distance(&at(3.0 + 1e-9), &cfg).unwrap();
    checks.push(("gate keeps 3.0 m, drops 3.0 m + 1 nm", boundary && !beyond));

    let pass = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(n, ok)| format!("{n}: {ok}"))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome::new(pass, detail)
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: Vec<Criterion> = vec![
        ("1 assignment oracle", Box::new(c1_assignment_oracle), secs(5)),
        ("2 height worked example", Box::new(c2_height_example), None),
        ("3 covariance law", Box::new(c3_covariance_law), None),
        ("4 occlusion permanence", Box::new(c4_occlusion_permanence), secs(1)),
        (
            "5 tracking quality direction (t0, t3)",
            Box::new(c5_table_one_direction),
            secs(30),
        ),
        (
            "6 safety distance direction (t1)",
            Box::new(c6_table_two_direction),
            secs(10),
        ),
        ("7 kabsch recovery", Box::new(c7_kabsch_recovery), None),
        ("8 metric identities", Box::new(c8_metric_identities), None),
        (
            "9 determinism and throughput",
            Box::new(c9_determinism_throughput),
            None,
        ),
        ("10 spatial rules", Box::new(c10_spatial_rules), None),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let out = timed(run, budget);
        println!(
            "{} criterion {name}: {}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
        failed += usize::from(!out.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
