//! Deterministic synthetic driving sessions with injectable distraction effects.
//!
//! Each process (speed, heart rate, steering, pedals, lane position) draws
//! from its own ChaCha stream of the session seed, so the sample path of one
//! channel never depends on how many numbers another channel consumed, on the
//! session type, or on the effect. With a zero effect, two sessions generated
//! from the same seed are identical.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::DEFAULT_WINDOW;
use crate::model::{regular_clock, FeatureLabel, SegmentMarkers, Series, Session, SessionType};

/// Bumped whenever the generated sample paths change.
pub const GENERATOR_VERSION: &str = "simgen-1";

const STREAM_SPEED: u64 = 1;
const STREAM_HR: u64 = 2;
const STREAM_STEERING: u64 = 3;
const STREAM_BRAKE: u64 = 4;
const STREAM_ACCELERATOR: u64 = 5;
const STREAM_RPM: u64 = 6;
const STREAM_LANE: u64 = 7;
const STREAM_PROFILE: u64 = 8;

const GEAR_THRESHOLDS: [f64; 4] = [15.0, 30.0, 45.0, 60.0];
const GEAR_HYSTERESIS: f64 = 3.0;
const GEAR_RATIOS: [f64; 5] = [110.0, 65.0, 45.0, 35.0, 28.0];
const CURVE_PEAK_DEG: f64 = 25.0;
const BRAKE_PULSE_S: f64 = 3.0;
const CLUTCH_HOLD_S: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub participant_id: String,
    /// km/h
    pub target_speed: f64,
    /// 1/s
    pub speed_reversion_rate: f64,
    /// Stationary standard deviation of speed, km/h.
    pub speed_noise: f64,
    /// bpm
    pub hr_baseline: f64,
    /// Stationary standard deviation of the slow heart-rate drift, bpm.
    pub hr_noise: f64,
    /// degrees
    pub steering_noise: f64,
    /// events per minute
    pub brake_event_rate: f64,
    pub rng_seed: u64,
}

impl DriverProfile {
    /// Draws a plausible driver from `seed`.
    pub fn random(participant_id: impl Into<String>, seed: u64) -> Self {
        let mut rng = stream(seed, STREAM_PROFILE);
        Self {
            participant_id: participant_id.into(),
            target_speed: rng.random_range(45.0..60.0),
            speed_reversion_rate: rng.random_range(0.2..0.5),
            speed_noise: rng.random_range(2.0..4.0),
            hr_baseline: rng.random_range(65.0..85.0),
            hr_noise: rng.random_range(2.0..4.0),
            steering_noise: rng.random_range(1.0..3.0),
            brake_event_rate: rng.random_range(0.5..2.0),
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.speed_reversion_rate,
            self.speed_noise,
            self.hr_noise,
            self.steering_noise,
            self.brake_event_rate,
        ];
        if !(self.target_speed > 0.0) || rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "driver profile {} needs a positive target speed and non-negative rates",
                self.participant_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistractionEffect {
    /// Relative change of target speed, e.g. -0.2 for 20% slower.
    pub speed_shift: f64,
    /// bpm added to the heart-rate level.
    pub hr_shift: f64,
    /// Scales steering and lane-position noise.
    pub steering_noise_multiplier: f64,
    /// Seconds over which the effect ramps in linearly.
    pub onset_ramp: f64,
}

impl DistractionEffect {
    pub const DEFAULT_ONSET_RAMP: f64 = 2.0;

    pub fn none() -> Self {
        Self {
            speed_shift: 0.0,
            hr_shift: 0.0,
            steering_noise_multiplier: 1.0,
            onset_ramp: Self::DEFAULT_ONSET_RAMP,
        }
    }

    pub fn is_none(&self) -> bool {
        self.speed_shift == 0.0 && self.hr_shift == 0.0 && self.steering_noise_multiplier == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.speed_shift.is_finite()
            && self.speed_shift > -1.0
            && self.hr_shift.is_finite()
            && self.steering_noise_multiplier >= 0.0
            && self.steering_noise_multiplier.is_finite()
            && self.onset_ramp >= 0.0
            && self.onset_ramp.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid distraction effect {self:?}")))
        }
    }
}

impl Default for DistractionEffect {
    fn default() -> Self {
        Self::none()
    }
}

/// Session timing. Markers fall at `before_s` and `before_s + during_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionLayout {
    pub rate_hz: f64,
    pub before_s: f64,
    pub during_s: f64,
    pub after_s: f64,
    /// Smallest window the segments must accommodate.
    pub min_window: usize,
}

impl Default for SessionLayout {
    fn default() -> Self {
        Self {
            rate_hz: 10.0,
            before_s: 120.0,
            during_s: 120.0,
            after_s: 120.0,
            min_window: DEFAULT_WINDOW,
        }
    }
}

impl SessionLayout {
    pub fn samples(&self) -> usize {
        ((self.before_s + self.during_s + self.after_s) * self.rate_hz).round() as usize
    }

    pub fn segment_samples(&self) -> [usize; 3] {
        [self.before_s, self.during_s, self.after_s].map(|s| (s * self.rate_hz).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::InvalidConfig("sampling rate must be positive".into()));
        }
        let w = self.min_window.max(1);
        if self.segment_samples().iter().any(|&n| n < w) {
            return Err(Error::InvalidConfig(format!(
                "every segment needs at least {w} samples, layout gives {:?}",
                self.segment_samples()
            )));
        }
        Ok(())
    }

    /// Distraction markers with a curve and a straight inside the distraction.
    pub fn markers(&self) -> SegmentMarkers {
        let start = self.before_s;
        let end = self.before_s + self.during_s;
        let (curve, straight) = self.feature_windows();
        SegmentMarkers::new(start, end)
            .with_feature(FeatureLabel::Curve, curve.0, curve.1)
            .with_feature(FeatureLabel::Straight, straight.0, straight.1)
    }

    fn feature_windows(&self) -> ((f64, f64), (f64, f64)) {
        let start = self.before_s;
        let d = self.during_s;
        (
            (start + 0.25 * d, start + 0.5 * d),
            (start + 0.625 * d, start + 0.95 * d),
        )
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// SplitMix64 finaliser, used to derive independent child seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn participant_seed(master_seed: u64, index: usize) -> u64 {
    mix_seed(mix_seed(master_seed) ^ (index as u64 + 1))
}

pub fn session_seed(participant_seed: u64, session_type: SessionType) -> u64 {
    mix_seed(participant_seed ^ ((session_type.index() as u64 + 1) << 32))
}

pub fn participant_id(index: usize) -> String {
    format!("P{}", index + 1)
}

/// Mean-reverting process sampled exactly at step `dt` around a moving mean.
struct Ou {
    decay: f64,
    shock: f64,
    x: f64,
}

impl Ou {
    /// Starts from the stationary distribution around `mean`.
    fn new(rate: f64, sd: f64, dt: f64, mean: f64, rng: &mut ChaCha8Rng) -> Self {
        let decay = (-rate * dt).exp();
        Self {
            decay,
            shock: (1.0 - decay * decay).max(0.0).sqrt(),
            x: mean + sd * normal(rng),
        }
    }

    fn step(&mut self, mean: f64, sd: f64, rng: &mut ChaCha8Rng) -> f64 {
        self.x = mean + (self.x - mean) * self.decay + sd * self.shock * normal(rng);
        self.x
    }
}

fn initial_gear(speed: f64) -> usize {
    1 + GEAR_THRESHOLDS.iter().filter(|&&t| speed > t).count()
}

fn next_gear(gear: usize, speed: f64) -> usize {
    if gear < 5 && speed > GEAR_THRESHOLDS[gear - 1] + GEAR_HYSTERESIS {
        gear + 1
    } else if gear > 1 && speed < GEAR_THRESHOLDS[gear - 2] - GEAR_HYSTERESIS {
        gear - 1
    } else {
        gear
    }
}

/// One session of every channel for `profile`.
pub fn generate_session(
    profile: &DriverProfile,
    session_type: SessionType,
    effect: &DistractionEffect,
    seed: u64,
) -> Result<Session> {
    generate_session_with(&SessionLayout::default(), profile, session_type, effect, seed)
}

pub fn generate_session_with(
    layout: &SessionLayout,
    profile: &DriverProfile,
    session_type: SessionType,
    effect: &DistractionEffect,
    seed: u64,
) -> Result<Session> {
    layout.validate()?;
    profile.validate()?;
    effect.validate()?;
    let effect = if session_type.is_baseline() {
        DistractionEffect::none()
    } else {
        *effect
    };

    let n = layout.samples();
    let dt = 1.0 / layout.rate_hz;
    let times = regular_clock(0.0, layout.rate_hz, n);
    let (d_start, d_end) = (layout.before_s, layout.before_s + layout.during_s);
    let ramp = |t: f64| {
        if t < d_start || t >= d_end {
            0.0
        } else if effect.onset_ramp <= 0.0 {
            1.0
        } else {
            ((t - d_start) / effect.onset_ramp).min(1.0)
        }
    };
    let (curve, _) = layout.feature_windows();
    // an S-bend: left then right, so the template averages to zero over the curve
    let curvature = |t: f64| {
        if t >= curve.0 && t < curve.1 {
            CURVE_PEAK_DEG * (2.0 * PI * (t - curve.0) / (curve.1 - curve.0)).sin()
        } else {
            0.0
        }
    };

    // speed
    let mut rng = stream(seed, STREAM_SPEED);
    let mut ou = Ou::new(
        profile.speed_reversion_rate,
        profile.speed_noise,
        dt,
        profile.target_speed,
        &mut rng,
    );
    let mut vs = Vec::with_capacity(n);
    for (k, &t) in times.iter().enumerate() {
        let mean = profile.target_speed * (1.0 + effect.speed_shift * ramp(t));
        let x = if k == 0 {
            ou.x
        } else {
            ou.step(mean, profile.speed_noise, &mut rng)
        };
        vs.push(x.max(0.0));
    }

    // heart rate: slow drift plus beat-to-beat noise
    let mut rng = stream(seed, STREAM_HR);
    let mut drift = Ou::new(1.0 / 30.0, profile.hr_noise, dt, 0.0, &mut rng);
    let mut hr = Vec::with_capacity(n);
    for (k, &t) in times.iter().enumerate() {
        let d = if k == 0 {
            drift.x
        } else {
            drift.step(0.0, profile.hr_noise, &mut rng)
        };
        hr.push(profile.hr_baseline + effect.hr_shift * ramp(t) + d + normal(&mut rng));
    }

    // steering and lane position share the noise multiplier
    let scale = |t: f64| 1.0 + (effect.steering_noise_multiplier - 1.0) * ramp(t);
    let mut rng = stream(seed, STREAM_STEERING);
    let mut wobble = Ou::new(1.0, profile.steering_noise, dt, 0.0, &mut rng);
    let mut steering = Vec::with_capacity(n);
    for (k, &t) in times.iter().enumerate() {
        let sd = profile.steering_noise * scale(t);
        let w = if k == 0 {
            wobble.x * scale(t)
        } else {
            wobble.step(0.0, sd, &mut rng)
        };
        steering.push(curvature(t) + w);
    }
    let mut rng = stream(seed, STREAM_LANE);
    let mut lane_ou = Ou::new(0.2, 0.25, dt, 0.0, &mut rng);
    let mut lane = Vec::with_capacity(n);
    for (k, &t) in times.iter().enumerate() {
        let x = if k == 0 {
            lane_ou.x * scale(t)
        } else {
            lane_ou.step(0.0, 0.25 * scale(t), &mut rng)
        };
        lane.push(x);
    }

    // brake pulses
    let mut rng = stream(seed, STREAM_BRAKE);
    let pulse_len = (BRAKE_PULSE_S * layout.rate_hz).round().max(1.0) as usize;
    let start_prob = (profile.brake_event_rate / 60.0 * dt).min(1.0);
    let mut brake = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let u: f64 = rng.random();
        if u < start_prob {
            let amp: f64 = rng.random_range(0.3..0.8);
            for j in 0..pulse_len.min(n - k) {
                brake[k + j] = amp * (PI * (j as f64 + 0.5) / pulse_len as f64).sin();
            }
            k += pulse_len;
        } else {
            k += 1;
        }
    }

    let mut rng = stream(seed, STREAM_ACCELERATOR);
    let mut pedal = Ou::new(0.5, 0.05, dt, 0.0, &mut rng);
    let accelerator: Vec<f64> = (0..n)
        .map(|k| {
            let p = if k == 0 {
                pedal.x
            } else {
                pedal.step(0.0, 0.05, &mut rng)
            };
            if brake[k] > 0.0 {
                0.0
            } else {
                (0.15 + 0.004 * vs[k] + p).clamp(0.0, 1.0)
            }
        })
        .collect();

    // drivetrain
    let mut rng = stream(seed, STREAM_RPM);
    let hold = (CLUTCH_HOLD_S * layout.rate_hz).round() as usize;
    let mut gear_now = initial_gear(vs[0]);
    let mut clutch_left = 0usize;
    let mut gear = Vec::with_capacity(n);
    let mut clutch = Vec::with_capacity(n);
    let mut rpm = Vec::with_capacity(n);
    for &v in &vs {
        let g = next_gear(gear_now, v);
        if g != gear_now {
            clutch_left = hold;
            gear_now = g;
        }
        clutch.push(if clutch_left > 0 { 1.0 } else { 0.0 });
        clutch_left = clutch_left.saturating_sub(1);
        gear.push(gear_now as f64);
        rpm.push((800.0 + v * GEAR_RATIOS[gear_now - 1] + 20.0 * normal(&mut rng)).max(700.0));
    }

    let acc_long: Vec<f64> = (0..n)
        .map(|k| if k == 0 { 0.0 } else { (vs[k] - vs[k - 1]) / 3.6 / dt })
        .collect();
    let acc_lat: Vec<f64> = vs
        .iter()
        .zip(&steering)
        .map(|(v, s)| {
            let speed = v / 3.6;
            speed * speed * (s.to_radians() / 15.0) / 2.7
        })
        .collect();

    let pid = profile.participant_id.clone();
    let make = |name: &str, values: Vec<f64>| Series::new(name, times.clone(), values);
    let channels = vec![
        make("HR", hr)?,
        make("Gear", gear)?,
        make("Brake", brake)?,
        make("Accelerator", accelerator)?,
        make("Clutch", clutch)?,
        make("Steering", steering)?,
        make("AccLat", acc_lat)?,
        make("AccLong", acc_long)?,
        make("LanePos", lane)?,
        make("VS", vs)?,
        make("RPM", rpm)?,
    ];
    let markers = (!session_type.is_baseline()).then(|| layout.markers());
    Session::new(pid, session_type, channels, markers)
}

/// Effects per distraction session type. Missing entries mean no effect.
pub type EffectMap = BTreeMap<SessionType, DistractionEffect>;

/// `n` drivers with all five sessions each.
pub fn generate_panel(n_participants: usize, effects: &EffectMap, master_seed: u64) -> Result<Vec<Session>> {
    generate_panel_with(
        &SessionLayout::default(),
        n_participants,
        effects,
        master_seed,
        &SessionType::ALL,
    )
}

/// Like [`generate_panel`] but only for the listed session types.
pub fn generate_panel_with(
    layout: &SessionLayout,
    n_participants: usize,
    effects: &EffectMap,
    master_seed: u64,
    session_types: &[SessionType],
) -> Result<Vec<Session>> {
    if n_participants < 2 {
        return Err(Error::InvalidConfig("a panel needs at least two participants".into()));
    }
    let per_participant: Vec<Result<Vec<Session>>> = (0..n_participants)
        .into_par_iter()
        .map(|i| {
            let seed = participant_seed(master_seed, i);
            let profile = DriverProfile::random(participant_id(i), seed);
            session_types
                .iter()
                .map(|&t| {
                    let effect = effects.get(&t).copied().unwrap_or_default();
                    generate_session_with(layout, &profile, t, &effect, session_seed(seed, t))
                })
                .collect()
        })
        .collect();
    let mut sessions = Vec::new();
    for group in per_participant {
        sessions.extend(group?);
    }
    Ok(sessions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSession {
    pub session_type: SessionType,
    pub data: String,
    pub meta: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParticipant {
    pub profile: DriverProfile,
    pub sessions: Vec<ManifestSession>,
}

/// Provenance record written next to a generated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelManifest {
    pub generator: String,
    pub master_seed: u64,
    pub layout: SessionLayout,
    pub effects: EffectMap,
    pub participants: Vec<ManifestParticipant>,
}

pub fn session_file_stem(participant: &str, session_type: SessionType) -> String {
    format!("{participant}_{session_type}")
}

/// Generates a panel and writes every session plus `manifest.json` into `dir`.
pub fn write_panel(dir: &Path, n_participants: usize, effects: &EffectMap, master_seed: u64) -> Result<PanelManifest> {
    let layout = SessionLayout::default();
    let sessions = generate_panel(n_participants, effects, master_seed)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut participants: Vec<ManifestParticipant> = (0..n_participants)
        .map(|i| ManifestParticipant {
            profile: DriverProfile::random(participant_id(i), participant_seed(master_seed, i)),
            sessions: Vec::new(),
        })
        .collect();
    for (k, session) in sessions.iter().enumerate() {
        let i = k / SessionType::ALL.len();
        let stem = session_file_stem(session.participant_id(), session.session_type());
        let data: PathBuf = dir.join(format!("{stem}.csv"));
        let meta = io::meta_path_for(&data);
        io::write_session(session, &data, &meta)?;
        let entry = &mut participants[i];
        entry.sessions.push(ManifestSession {
            session_type: session.session_type(),
            data: format!("{stem}.csv"),
            meta: format!("{stem}.json"),
            seed: session_seed(entry.profile.rng_seed, session.session_type()),
        });
    }
    let manifest = PanelManifest {
        generator: GENERATOR_VERSION.to_string(),
        master_seed,
        layout,
        effects: effects.clone(),
        participants,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
