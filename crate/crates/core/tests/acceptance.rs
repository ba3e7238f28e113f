//! End-to-end acceptance checks. Runs without the libtest harness so that every
//! criterion prints one result line; exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use drivedist::analysis::{
    paired_design_distances, paired_design_means, segment_distances, AnalysisConfig, Design, DistanceDesignOptions,
    Panel,
};
use drivedist::dtw::{align_values, AlignConfig};
use drivedist::metrics::{coarse_distance, fine_distance};
use drivedist::model::{Segment, SessionType, CHANNELS};
use drivedist::report::{analyze_panel, AnalyzeOptions};
use drivedist::simgen::{
    generate_panel_with, generate_session, DistractionEffect, DriverProfile, EffectMap, SessionLayout,
};
use drivedist::stats::{paired_t_test, paired_test, wilcoxon_signed_rank, TestKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{binary, brute_force_dtw, t_two_sided_by_quadrature, wilcoxon_enumerated};

const ALPHA: f64 = 0.05;
/// Sakoe-Chiba radius (10 s at 10 Hz) for the many-seed Monte Carlo runs.
const MC_BAND: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn ds1_effect(speed_shift: f64, hr_shift: f64) -> EffectMap {
    let mut effects = EffectMap::new();
    effects.insert(
        SessionType::DS1,
        DistractionEffect {
            speed_shift,
            hr_shift,
            ..DistractionEffect::none()
        },
    );
    effects
}

fn ds1_panel(effects: &EffectMap, seed: u64) -> Panel {
    let sessions = generate_panel_with(
        &SessionLayout::default(),
        16,
        effects,
        seed,
        &[SessionType::DS1, SessionType::DS4],
    )
    .unwrap();
    Panel::new(sessions).unwrap()
}

fn banded_options(test: TestKind) -> DistanceDesignOptions {
    DistanceDesignOptions {
        config: AnalysisConfig {
            align: AlignConfig::banded(MC_BAND),
            ..AnalysisConfig::default()
        },
        test,
        allow_partial: true,
    }
}

fn ints(v: &[i64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let q: Vec<i64> = (0..rng.random_range(1..=12))
            .map(|_| rng.random_range(0..=10))
            .collect();
        let r: Vec<i64> = (0..rng.random_range(1..=12))
            .map(|_| rng.random_range(0..=10))
            .collect();
        let dtw = align_values(&ints(&q), &ints(&r), &AlignConfig::default())
            .unwrap()
            .distance;
        if dtw != brute_force_dtw(&q, &r, 1) as f64 {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("200 pairs, {mismatches} mismatches against path enumeration, {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_coverage, mut failures) = (0.0f64, 0);
    for _ in 0..1000 {
        let w = [2, 5, 10][rng.random_range(0..3)];
        let n = rng.random_range(w..=200);
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(0.0..10.0)).collect() };
        let (q, r, s) = (draw(), draw(), draw());

        let fine = fine_distance(&q, &r, w).unwrap();
        let mut coverage = vec![0.0; n];
        for i in 0..=n - w {
            for c in &mut coverage[i..i + w] {
                *c += 1.0;
            }
        }
        let lhs: f64 = fine.values.iter().map(|v| 1.0 - v).sum();
        let rhs: f64 = (0..n).map(|j| coverage[j] * (r[j] - q[j]).abs()).sum();
        worst_coverage = worst_coverage.max((lhs - rhs).abs());

        let d = |a: &[f64], b: &[f64]| coarse_distance(a, b).unwrap();
        let symmetric = d(&q, &r) == d(&r, &q);
        let identity = d(&q, &q) == 0.0;
        let triangle = d(&q, &s) <= (d(&q, &r) + d(&r, &s)) * (1.0 + 1e-12);
        if !(symmetric && identity && triangle) {
            failures += 1;
        }
    }
    outcome(
        worst_coverage <= 1e-9 && failures == 0,
        format!("1000 pairs, worst coverage gap {worst_coverage:.1e}, {failures} coarse metric failures"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_w, mut cases) = (0.0f64, 0);
    for n in 1..=16 {
        for _ in 0..8 {
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(-10..=10) as f64).collect();
            if d.iter().all(|v| *v == 0.0) {
                continue;
            }
            let p = wilcoxon_signed_rank(&d, &vec![0.0; n]).unwrap().p_value;
            worst_w = worst_w.max((p - wilcoxon_enumerated(&d)).abs());
            cases += 1;
        }
    }
    let mut worst_t = 0.0f64;
    for df in [3usize, 9, 15] {
        for _ in 0..10 {
            let x: Vec<f64> = (0..=df).map(|_| rng.random_range(-1.0..2.0)).collect();
            let r = paired_t_test(&x, &vec![0.0; df + 1]).unwrap();
            worst_t = worst_t.max((r.p_value - t_two_sided_by_quadrature(r.statistic, df as f64)).abs());
        }
    }
    let w = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
    let t = paired_t_test(&[1.0, 1.0, 2.0, 0.0], &[0.0; 4]).unwrap();
    let fixed = w.p_value == 0.25 && w.statistic == 6.0 && t.statistic == 6f64.sqrt();
    outcome(
        worst_w <= 1e-12 && worst_t <= 1e-9 && fixed,
        format!(
            "{cases} signed-rank cases (worst gap {worst_w:.1e}), 30 t cases (worst gap {worst_t:.1e}), fixed cases {}",
            if fixed { "exact" } else { "wrong" }
        ),
    )
}

fn criterion_4() -> Outcome {
    let profile = DriverProfile::random("P1", 4);
    let baseline = generate_session(&profile, SessionType::DS4, &DistractionEffect::none(), 4).unwrap();
    let session = baseline
        .retyped(SessionType::DS1, Some(SessionLayout::default().markers()))
        .unwrap();
    let mut bad = Vec::new();
    for channel in CHANNELS {
        let report = segment_distances(&session, &baseline, channel, &AnalysisConfig::default()).unwrap();
        let zero = Segment::ALL.iter().all(|&s| report.coarse(s) == 0.0);
        let ones = Segment::ALL
            .iter()
            .all(|&s| report.fine(s).values.iter().all(|v| *v == 1.0));
        if !(zero && ones) {
            bad.push(channel);
        }
    }
    outcome(
        bad.is_empty(),
        format!("{} channels checked, failing: {bad:?}", CHANNELS.len()),
    )
}

fn criterion_5() -> Outcome {
    let effects = ds1_effect(-0.2, 10.0);
    let mut options = AnalyzeOptions::new(Design::Distances, TestKind::WilcoxonSignedRank);
    options.allow_partial = true;
    options.channels = vec!["VS".into(), "HR".into()];
    let (mut vs, mut hr, mut excluded) = (0, 0, 0);
    let mut slowest = Duration::ZERO;
    for seed in 0..100 {
        let panel = ds1_panel(&effects, seed);
        let start = Instant::now();
        let report = analyze_panel(&panel, &options).unwrap();
        slowest = slowest.max(start.elapsed());
        vs += report.p_value(SessionType::DS1, "VS").is_some_and(|p| p < ALPHA) as u32;
        hr += report.p_value(SessionType::DS1, "HR").is_some_and(|p| p < ALPHA) as u32;
        excluded += report.tests.iter().map(|t| t.excluded.len()).sum::<usize>();
    }

    // Full panel: five sessions and every channel, unbanded.
    let mut all = EffectMap::new();
    for t in SessionType::DISTRACTIONS {
        all.insert(t, effects[&SessionType::DS1]);
    }
    let panel =
        Panel::new(generate_panel_with(&SessionLayout::default(), 16, &all, 100, &SessionType::ALL).unwrap()).unwrap();
    let mut full = AnalyzeOptions::new(Design::Distances, TestKind::WilcoxonSignedRank);
    full.allow_partial = true;
    let start = Instant::now();
    analyze_panel(&panel, &full).unwrap();
    let full_time = start.elapsed();

    outcome(
        vs >= 90 && hr >= 80 && full_time < Duration::from_secs(60),
        format!(
            "VS {vs}/100, HR {hr}/100 rejected; {excluded} participant exclusions; \
             slowest two-channel analysis {slowest:.2?}; full 16x5 session, 11 channel analysis {full_time:.2?}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let effects = EffectMap::new();
    let channels = ["VS", "HR", "Steering"];
    let tests = [TestKind::PairedT, TestKind::WilcoxonSignedRank];
    let seeds = 500;
    // [channel][design][test]
    let mut rejections = [[[0u32; 2]; 2]; 3];
    let mut excluded = 0;
    for seed in 0..seeds {
        let panel = ds1_panel(&effects, 10_000 + seed);
        for (c, channel) in channels.iter().enumerate() {
            for (k, &test) in tests.iter().enumerate() {
                let p = paired_design_means(&panel, SessionType::DS1, channel, test)
                    .unwrap()
                    .result
                    .p_value;
                rejections[c][0][k] += (p < ALPHA) as u32;
            }
            let d = paired_design_distances(&panel, SessionType::DS1, channel, &banded_options(tests[1])).unwrap();
            excluded += d.design.excluded.len();
            let before: Vec<f64> = d.design.pairs.iter().map(|p| p.before).collect();
            let during: Vec<f64> = d.design.pairs.iter().map(|p| p.during).collect();
            for (k, &test) in tests.iter().enumerate() {
                let p = paired_test(test, &before, &during).unwrap().p_value;
                rejections[c][1][k] += (p < ALPHA) as u32;
            }
        }
    }
    let mut pass = true;
    let mut cells = Vec::new();
    for (c, channel) in channels.iter().enumerate() {
        for (g, design) in ["means", "distances"].iter().enumerate() {
            for (k, test) in ["t", "wilcoxon"].iter().enumerate() {
                let rate = rejections[c][g][k] as f64 / seeds as f64;
                pass &= (0.01..=0.11).contains(&rate);
                cells.push(format!("{channel}/{design}/{test} {rate:.3}"));
            }
        }
    }
    outcome(
        pass,
        format!("{seeds} null panels, {excluded} exclusions; {}", cells.join(", ")),
    )
}

fn criterion_7() -> Outcome {
    let effects = ds1_effect(-0.05, 0.0);
    let seeds = 200;
    let (mut means, mut distances) = (0, 0);
    for seed in 0..seeds {
        let panel = ds1_panel(&effects, 20_000 + seed);
        let p = paired_design_means(&panel, SessionType::DS1, "VS", TestKind::PairedT)
            .unwrap()
            .result
            .p_value;
        means += (p < ALPHA) as u32;
        let d = paired_design_distances(
            &panel,
            SessionType::DS1,
            "VS",
            &banded_options(TestKind::WilcoxonSignedRank),
        )
        .unwrap();
        distances += (d.design.result.p_value < ALPHA) as u32;
    }
    let (rm, rd) = (means as f64 / seeds as f64, distances as f64 / seeds as f64);
    outcome(
        rm >= rd,
        format!("VS shift -0.05 over {seeds} seeds: means design {rm:.3}, distances design {rd:.3}"),
    )
}

fn cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(binary()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn shape(path: &Path) -> (usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    let cols = rows[0].split(',').count();
    assert!(
        rows.iter().all(|r| r.split(',').count() == cols),
        "ragged {}",
        path.display()
    );
    (rows.len() - 1, cols - 1)
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel");
    let p = |path: &Path| path.to_str().unwrap().to_string();
    cli(&[
        "simulate",
        "--participants",
        "16",
        "--seed",
        "8",
        "--effect",
        "VS:-0.2,HR:+10",
        "--out",
        &p(&panel),
    ]);
    let distances = dir.path().join("d.json");
    let means = dir.path().join("m.json");
    cli(&[
        "analyze",
        "--panel",
        &p(&panel),
        "--design",
        "distances",
        "--test",
        "wilcoxon",
        "--allow-partial",
        "--out",
        &p(&distances),
    ]);
    cli(&[
        "analyze",
        "--panel",
        &p(&panel),
        "--design",
        "means",
        "--test",
        "ttest",
        "--out",
        &p(&means),
    ]);

    let mut shapes = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, expected: (usize, usize)| {
        let got = shape(&dir.path().join(name));
        pass &= got == expected;
        shapes.push(format!("{name} {}x{}", got.0, got.1));
    };
    for t in SessionType::DISTRACTIONS {
        check(&format!("d_relative_distances_{t}.csv"), (18, 3));
    }
    check("d_relative_summary.csv", (4, 6));
    check("m_p_values_means.csv", (4, 4));
    check("d_p_values_distances.csv", (4, 11));

    let header = |name: &str| {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    let headers = [
        header("d_relative_distances_DS1.csv") == "Participant,HR,VS,Brake",
        header("m_p_values_means.csv") == "Distraction,HR,Brake,VS,RPM",
        header("d_p_values_distances.csv")
            == "Distraction,HR,Gear,Brake,Accelerator,Clutch,Steering,AccLat,AccLong,LanePos,VS,RPM",
    ];
    pass &= headers.iter().all(|h| *h);
    outcome(
        pass,
        format!(
            "rows x value columns: {}; headers {}",
            shapes.join(", "),
            if headers.iter().all(|h| *h) { "match" } else { "differ" }
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |path: &Path| path.to_str().unwrap().to_string();
    let mut reports = Vec::new();
    for run in 0..2 {
        let panel = dir.path().join(format!("panel{run}"));
        let out = dir.path().join(format!("report{run}.json"));
        cli(&[
            "simulate",
            "--participants",
            "16",
            "--seed",
            "9",
            "--effect",
            "VS:-0.2,HR:+10",
            "--out",
            &p(&panel),
        ]);
        cli(&[
            "analyze",
            "--panel",
            &p(&panel),
            "--design",
            "distances",
            "--band",
            "100",
            "--allow-partial",
            "--out",
            &p(&out),
        ]);
        reports.push(std::fs::read(&out).unwrap());
    }
    outcome(
        reports[0] == reports[1] && !reports[0].is_empty(),
        format!(
            "two runs, {} and {} bytes, identical: {}",
            reports[0].len(),
            reports[1].len(),
            reports[0] == reports[1]
        ),
    )
}

fn main() {
    let criteria: [fn() -> Outcome; 9] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ];
    let mut failed = 0;
    for (k, criterion) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += !result.pass as u32;
        println!(
            "criterion {}: {} ({}) [{:.1?}]",
            k + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed()
        );
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
}
