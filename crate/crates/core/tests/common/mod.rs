//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use drivedist::model::{SegmentMarkers, Series, Session, SessionType};

/// Minimum cost over every monotone path from (0, 0) to (n-1, m-1) with steps
/// (1,1), (1,0), (0,1), found by enumerating the paths one by one.
/// The diagonal step (and the origin cell) cost `w_diag` times the local cost.
pub fn brute_force_dtw(q: &[i64], r: &[i64], w_diag: i64) -> i64 {
    fn walk(q: &[i64], r: &[i64], w: i64, i: usize, j: usize, acc: i64, best: &mut i64) {
        if i == q.len() - 1 && j == r.len() - 1 {
            *best = (*best).min(acc);
            return;
        }
        if i + 1 < q.len() && j + 1 < r.len() {
            walk(q, r, w, i + 1, j + 1, acc + w * (q[i + 1] - r[j + 1]).abs(), best);
        }
        if i + 1 < q.len() {
            walk(q, r, w, i + 1, j, acc + (q[i + 1] - r[j]).abs(), best);
        }
        if j + 1 < r.len() {
            walk(q, r, w, i, j + 1, acc + (q[i] - r[j + 1]).abs(), best);
        }
    }
    let mut best = i64::MAX;
    walk(q, r, w_diag, 0, 0, w_diag * (q[0] - r[0]).abs(), &mut best);
    best
}

/// Two-sided signed-rank p-value by listing all 2^n sign patterns.
pub fn wilcoxon_enumerated(differences: &[f64]) -> f64 {
    let d: Vec<f64> = differences.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut e = k;
        while e + 1 < n && d[order[e + 1]].abs() == d[order[k]].abs() {
            e += 1;
        }
        let rank = (k + e) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=e] {
            ranks[idx] = rank;
        }
        k = e + 1;
    }
    let observed: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let (mut at_least, mut at_most) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w >= observed - 1e-9 {
            at_least += 1;
        }
        if w <= observed + 1e-9 {
            at_most += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * at_least.min(at_most) as f64 / total).min(1.0)
}

/// Gamma at integer and half-integer points from its recurrences.
pub fn gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round() as i64;
    assert!(twice >= 1 && (2.0 * x - twice as f64).abs() < 1e-12);
    let mut g = if twice % 2 == 0 {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut t = if twice % 2 == 0 { 1.0 } else { 0.5 };
    while t < x - 1e-12 {
        g *= t;
        t += 1.0;
    }
    g
}

pub fn t_density(t: f64, df: f64) -> f64 {
    let norm =
        gamma_half_integer((df + 1.0) / 2.0) / ((df * std::f64::consts::PI).sqrt() * gamma_half_integer(df / 2.0));
    norm * (1.0 + t * t / df).powf(-(df + 1.0) / 2.0)
}

/// Two-sided tail `P(|T| >= |t|)` by composite Simpson integration of the density on `[0, |t|]`.
pub fn t_two_sided_by_quadrature(t: f64, df: f64) -> f64 {
    let upper = t.abs();
    let intervals = 20_000;
    let h = upper / intervals as f64;
    let mut sum = t_density(0.0, df) + t_density(upper, df);
    for k in 1..intervals {
        let x = k as f64 * h;
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * t_density(x, df);
    }
    1.0 - 2.0 * sum * h / 3.0
}

/// Textbook two-pass mean and sample variance.
pub fn two_pass(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// A baseline session on a 10 Hz clock with the given channels.
pub fn baseline_session(participant: &str, channels: &[(&str, Vec<f64>)]) -> Session {
    let series = channels
        .iter()
        .map(|(name, values)| Series::regular(*name, 0.0, 10.0, values.clone()).unwrap())
        .collect();
    Session::new(participant, SessionType::DS4, series, None).unwrap()
}

/// A distraction session on a 10 Hz clock with the given channels and markers.
pub fn distraction_session(
    participant: &str,
    session_type: SessionType,
    channels: &[(&str, Vec<f64>)],
    markers: SegmentMarkers,
) -> Session {
    let series = channels
        .iter()
        .map(|(name, values)| Series::regular(*name, 0.0, 10.0, values.clone()).unwrap())
        .collect();
    Session::new(participant, session_type, series, Some(markers)).unwrap()
}

/// Path to the built command-line binary.
pub fn binary() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_BIN_EXE_drivedist"))
}
