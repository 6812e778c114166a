//! Audio-driven gesture synthesis.
//!
//! The procedural generator reads an RMS envelope from the line audio,
//! detects onsets, and lays one arm stroke per onset over a style-specific
//! base posture and a slow torso sway. External generators plug in through
//! [`GestureAdapter`] and must honour the same output contract.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::kinematics::{parse_bvh, Joint, MotionClip, Skeleton, Vec3, JOINT_CHANNELS, ROOT_CHANNELS};
use crate::model::StyleTag;
use crate::speech::{encode_wav, AudioClip};

pub const FRAME_RATE: f64 = 60.0;

/// Wrist speed (cm/s) above which a local speed maximum counts as a
/// gesture stroke. Sway and stroke recovery stay well below it.
pub const STROKE_SPEED_THRESHOLD: f64 = 150.0;

/// Largest stroke amplitude in radians.
pub const MAX_STROKE_AMPLITUDE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("audio clip is shorter than one analysis window")]
    ClipTooShort,
    #[error("gesture adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("gesture adapter output invalid: {0}")]
    AdapterOutputInvalid(String),
}

/// RMS amplitude per analysis frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub values: Vec<f64>,
    pub frame_hop: f64,
    pub window: f64,
}

impl Envelope {
    /// Center time of frame `k` in seconds.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.frame_hop + self.window / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeParams {
    pub frame_hop: f64,
    pub window: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self { frame_hop: 0.020, window: 0.050 }
    }
}

pub fn compute_envelope(clip: &AudioClip, params: EnvelopeParams) -> Result<Envelope, MotionError> {
    let duration = clip.duration();
    if clip.is_empty() || duration + 1e-12 < params.window {
        return Err(MotionError::ClipTooShort);
    }
    let sr = clip.sample_rate as f64;
    let count = ((duration - params.window) / params.frame_hop + 1e-9).floor() as usize + 1;
    let win = ((params.window * sr).round() as usize).max(1);
    let values = (0..count)
        .map(|k| {
            let start = (k as f64 * params.frame_hop * sr).round() as usize;
            let end = (start + win).min(clip.samples.len());
            if end <= start {
                return 0.0;
            }
            let sum: f64 = (start..end).map(|i| clip.normalized(i).powi(2)).sum();
            (sum / (end - start) as f64).sqrt()
        })
        .collect();
    Ok(Envelope { values, frame_hop: params.frame_hop, window: params.window })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnsetParams {
    /// Minimum frame-to-frame rise.
    pub threshold: f64,
    pub noise_floor: f64,
    pub refractory: f64,
}

impl Default for OnsetParams {
    fn default() -> Self {
        Self { threshold: 0.08, noise_floor: 0.02, refractory: 0.200 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnsetList {
    pub times: Vec<f64>,
    pub frames: Vec<usize>,
    pub threshold: f64,
    pub refractory: f64,
}

/// Rising-edge onset picker. Frame 0 is compared against silence.
pub fn detect_onsets(env: &Envelope, params: OnsetParams) -> OnsetList {
    let mut times = Vec::new();
    let mut frames = Vec::new();
    let mut prev = 0.0;
    let mut last: Option<f64> = None;
    for (k, &v) in env.values.iter().enumerate() {
        let t = env.time(k);
        let rested = last.is_none_or(|l| t - l >= params.refractory - 1e-9);
        if v - prev > params.threshold && v > params.noise_floor && rested {
            times.push(t);
            frames.push(k);
            last = Some(t);
        }
        prev = v;
    }
    OnsetList { times, frames, threshold: params.threshold, refractory: params.refractory }
}

/// Canonical joint names, depth-first.
pub const CANONICAL_JOINTS: [&str; 17] = [
    "Hips",
    "Spine",
    "Spine1",
    "Neck",
    "Head",
    "LeftArm",
    "LeftForeArm",
    "LeftHand",
    "RightArm",
    "RightForeArm",
    "RightHand",
    "LeftUpLeg",
    "LeftLeg",
    "LeftFoot",
    "RightUpLeg",
    "RightLeg",
    "RightFoot",
];

mod joint {
    pub const SPINE: usize = 1;
    pub const SPINE1: usize = 2;
    pub const NECK: usize = 3;
    pub const HEAD: usize = 4;
    pub const LEFT_ARM: usize = 5;
    pub const LEFT_FOREARM: usize = 6;
    pub const LEFT_HAND: usize = 7;
    pub const RIGHT_ARM: usize = 8;
    pub const RIGHT_FOREARM: usize = 9;
    pub const RIGHT_HAND: usize = 10;
}

/// Index of the left and right wrist joints in the canonical skeleton.
pub const WRISTS: [usize; 2] = [joint::LEFT_HAND, joint::RIGHT_HAND];

/// 17-joint, 170 cm, T-pose, Y-up skeleton facing +Z.
pub fn canonical_skeleton() -> Skeleton {
    let v = Vec3::new;
    #[rustfmt::skip]
    let layout: [(usize, Vec3, Option<Vec3>); 17] = [
        (usize::MAX, v(0.0, 95.0, 0.0), None),
        (0, v(0.0, 10.0, 0.0), None),
        (1, v(0.0, 15.0, 0.0), None),
        (2, v(0.0, 22.0, 0.0), None),
        (3, v(0.0, 10.0, 0.0), Some(v(0.0, 18.0, 0.0))),
        (2, v(17.0, 20.0, 0.0), None),
        (5, v(28.0, 0.0, 0.0), None),
        (6, v(25.0, 0.0, 0.0), Some(v(16.0, 0.0, 0.0))),
        (2, v(-17.0, 20.0, 0.0), None),
        (8, v(-28.0, 0.0, 0.0), None),
        (9, v(-25.0, 0.0, 0.0), Some(v(-16.0, 0.0, 0.0))),
        (0, v(9.0, -5.0, 0.0), None),
        (11, v(0.0, -42.0, 0.0), None),
        (12, v(0.0, -40.0, 0.0), Some(v(0.0, -8.0, 14.0))),
        (0, v(-9.0, -5.0, 0.0), None),
        (14, v(0.0, -42.0, 0.0), None),
        (15, v(0.0, -40.0, 0.0), Some(v(0.0, -8.0, 14.0))),
    ];
    let joints = layout
        .iter()
        .zip(CANONICAL_JOINTS)
        .map(|((parent, offset, end), name)| Joint {
            name: name.to_string(),
            parent: (*parent != usize::MAX).then_some(*parent),
            offset: *offset,
            channels: if *parent == usize::MAX { ROOT_CHANNELS.to_vec() } else { JOINT_CHANNELS.to_vec() },
            end_site: *end,
        })
        .collect();
    Skeleton::new(joints).expect("canonical skeleton is well formed")
}

/// Per-style gesture parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleParams {
    /// Per canonical joint, Euler ZXY degrees added to the rest pose.
    pub base_posture: [[f64; 3]; 17],
    /// Radians.
    pub stroke_amplitude: f64,
    /// Seconds, rise plus recovery.
    pub stroke_duration: f64,
    pub sway_frequency: f64,
    /// Radians.
    pub sway_amplitude: f64,
    pub energy_gain: f64,
}

struct Row {
    stroke: f64,
    duration: f64,
    sway_hz: f64,
    sway: f64,
    gain: f64,
    spine_pitch: f64,
    head_pitch: f64,
    arm_drop: f64,
    elbow: f64,
}

#[rustfmt::skip]
fn style_row(style: StyleTag) -> Row {
    let r = |stroke, duration, sway_hz, sway, gain, spine_pitch, head_pitch, arm_drop, elbow| Row {
        stroke, duration, sway_hz, sway, gain, spine_pitch, head_pitch, arm_drop, elbow,
    };
    use StyleTag::*;
    match style {
        Agreement    => r(0.55, 0.60, 0.40, 0.030, 1.4,  2.0,  4.0, 72.0, 25.0),
        Angry        => r(0.85, 0.50, 0.60, 0.040, 1.8,  6.0,  2.0, 62.0, 40.0),
        Disagreement => r(0.60, 0.60, 0.45, 0.035, 1.5,  0.0, -3.0, 68.0, 30.0),
        Distracted   => r(0.35, 0.80, 0.25, 0.060, 1.1, -2.0, -8.0, 76.0, 15.0),
        Flirty       => r(0.45, 0.70, 0.35, 0.070, 1.3, -3.0,  6.0, 74.0, 30.0),
        Happy        => r(0.70, 0.60, 0.50, 0.045, 1.5, -4.0, -5.0, 68.0, 25.0),
        Laughing     => r(0.75, 0.55, 0.90, 0.060, 1.6,  8.0, -6.0, 66.0, 35.0),
        Oration      => r(0.90, 0.70, 0.30, 0.030, 1.7, -2.0, -4.0, 58.0, 35.0),
        Neutral      => r(0.50, 0.60, 0.35, 0.030, 1.4,  0.0,  0.0, 72.0, 25.0),
        Old          => r(0.30, 0.90, 0.20, 0.020, 1.0, 14.0,  8.0, 78.0, 35.0),
        Pensive      => r(0.35, 0.80, 0.25, 0.025, 1.1,  4.0, 10.0, 76.0, 45.0),
        Relaxed      => r(0.40, 0.80, 0.25, 0.050, 1.2, -3.0, -2.0, 80.0, 15.0),
        Sad          => r(0.25, 0.90, 0.20, 0.020, 1.0, 10.0, 15.0, 82.0, 10.0),
        Sarcastic    => r(0.55, 0.60, 0.40, 0.040, 1.4,  0.0, -6.0, 70.0, 35.0),
        Scared       => r(0.50, 0.45, 0.80, 0.030, 1.4,  8.0,  6.0, 60.0, 60.0),
        Sneaky       => r(0.30, 0.70, 0.30, 0.030, 1.1, 10.0,  4.0, 70.0, 45.0),
        Still        => r(0.00, 0.60, 0.00, 0.000, 0.0,  0.0,  0.0, 75.0, 20.0),
        Threatening  => r(0.80, 0.55, 0.30, 0.025, 1.7,  8.0, -2.0, 60.0, 45.0),
        Tired        => r(0.25, 0.90, 0.20, 0.030, 1.0,  8.0, 12.0, 84.0, 10.0),
    }
}

impl StyleParams {
    pub fn for_style(style: StyleTag) -> Self {
        let row = style_row(style);
        let mut posture = [[0.0; 3]; 17];
        // channel layout is [Z, X, Y]
        posture[joint::SPINE1][1] = row.spine_pitch;
        posture[joint::HEAD][1] = row.head_pitch;
        posture[joint::LEFT_ARM][0] = -row.arm_drop;
        posture[joint::RIGHT_ARM][0] = row.arm_drop;
        posture[joint::LEFT_FOREARM][2] = -row.elbow;
        posture[joint::RIGHT_FOREARM][2] = row.elbow;
        Self {
            base_posture: posture,
            stroke_amplitude: row.stroke,
            stroke_duration: row.duration,
            sway_frequency: row.sway_hz,
            sway_amplitude: row.sway,
            energy_gain: row.gain,
        }
    }
}

/// One planned arm stroke.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stroke {
    /// Time of peak wrist speed, equal to the triggering onset.
    pub onset: f64,
    /// Radians.
    pub amplitude: f64,
    pub left: bool,
    pub rise: f64,
    pub fall: f64,
}

impl Stroke {
    fn start(&self) -> f64 {
        self.onset - self.rise / 2.0
    }

    /// Raised-cosine rise then slower raised-cosine recovery, peaking at 1.
    fn weight(&self, t: f64) -> f64 {
        let u = t - self.start();
        if u <= 0.0 || u >= self.rise + self.fall {
            0.0
        } else if u < self.rise {
            0.5 * (1.0 - (std::f64::consts::PI * u / self.rise).cos())
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (u - self.rise) / self.fall).cos())
        }
    }
}

/// Strokes for a clip: one per onset, alternating arms starting left.
pub fn plan_strokes(clip: &AudioClip, style: StyleTag) -> Result<Vec<Stroke>, MotionError> {
    let env = compute_envelope(clip, EnvelopeParams::default())?;
    let onsets = detect_onsets(&env, OnsetParams::default());
    let params = StyleParams::for_style(style);
    let rise = (params.stroke_duration * 0.25).max(0.12);
    let fall = (params.stroke_duration - rise).max(rise);
    let strokes = onsets
        .times
        .iter()
        .zip(&onsets.frames)
        .enumerate()
        .map(|(n, (&t, &k))| {
            let horizon = k + (0.2 / env.frame_hop).round() as usize;
            let peak = env.values[k..=horizon.min(env.values.len() - 1)].iter().cloned().fold(0.0, f64::max);
            let amplitude = (params.stroke_amplitude * params.energy_gain * peak).min(MAX_STROKE_AMPLITUDE);
            Stroke { onset: t, amplitude, left: n % 2 == 0, rise, fall }
        })
        .filter(|s| s.amplitude > 0.0)
        .collect();
    Ok(strokes)
}

/// Total stroke energy (sum of squared amplitudes).
pub fn stroke_energy(strokes: &[Stroke]) -> f64 {
    strokes.iter().map(|s| s.amplitude * s.amplitude).sum()
}

/// Procedural gesture clip on the canonical skeleton, one frame per 1/60 s.
pub fn synthesize_gestures(clip: &AudioClip, style: StyleTag) -> Result<MotionClip, MotionError> {
    let strokes = plan_strokes(clip, style)?;
    let params = StyleParams::for_style(style);
    let skeleton = canonical_skeleton();
    let n_frames = (clip.duration() * FRAME_RATE).floor() as usize + 1;
    let width = skeleton.channel_count();
    let two_pi = 2.0 * std::f64::consts::PI;

    let frames = (0..n_frames)
        .map(|f| {
            let t = f as f64 / FRAME_RATE;
            let mut row = vec![0.0; width];
            for j in 0..skeleton.len() {
                let start = skeleton.channel_start(j) + if j == 0 { 3 } else { 0 };
                row[start..start + 3].copy_from_slice(&params.base_posture[j]);
            }
            let sway = params.sway_amplitude.to_degrees() * (two_pi * params.sway_frequency * t).sin();
            let sway2 = params.sway_amplitude.to_degrees() * (two_pi * params.sway_frequency * 0.5 * t + 1.0).sin();
            let at = |j: usize| skeleton.channel_start(j);
            row[at(joint::SPINE) + 2] += sway;
            row[at(joint::SPINE1)] += 0.5 * sway2;
            row[at(joint::NECK) + 1] += 0.3 * sway2;

            for arm in [true, false] {
                let lift = strokes
                    .iter()
                    .filter(|s| s.left == arm)
                    .map(|s| s.amplitude * s.weight(t))
                    .fold(0.0, f64::max)
                    .to_degrees();
                if lift == 0.0 {
                    continue;
                }
                let side = if arm { 1.0 } else { -1.0 };
                let (upper, fore, hand) = if arm {
                    (joint::LEFT_ARM, joint::LEFT_FOREARM, joint::LEFT_HAND)
                } else {
                    (joint::RIGHT_ARM, joint::RIGHT_FOREARM, joint::RIGHT_HAND)
                };
                row[at(upper)] += side * 0.8 * lift;
                row[at(upper) + 2] -= side * 0.5 * lift;
                row[at(fore) + 2] -= side * 0.6 * lift;
                row[at(hand) + 1] += 0.3 * lift;
            }
            row
        })
        .collect();
    Ok(MotionClip { skeleton, frames, frame_time: 1.0 / FRAME_RATE })
}

/// Where gesture clips come from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum GestureAdapter {
    #[default]
    Procedural,
    /// Executable receiving WAV bytes on stdin and the style name as its
    /// last argument, writing BVH text to stdout.
    Command { program: String, args: Vec<String> },
    /// Endpoint accepting `POST ?style=<name>` with a WAV body, answering BVH text.
    Http { endpoint: String },
}

const ADAPTER_TIMEOUT: Duration = Duration::from_secs(60);

impl GestureAdapter {
    /// Reads `S2S_GESTURE_ADAPTER` (`procedural` | `external`) and `S2S_GESTURE_ENDPOINT`.
    pub fn from_env() -> Result<Self, MotionError> {
        match std::env::var("S2S_GESTURE_ADAPTER").as_deref() {
            Err(_) | Ok("procedural") | Ok("") => Ok(Self::Procedural),
            Ok("external") => {
                let endpoint = std::env::var("S2S_GESTURE_ENDPOINT")
                    .map_err(|_| MotionError::AdapterUnavailable("S2S_GESTURE_ENDPOINT is not set".into()))?;
                Ok(Self::external(&endpoint))
            }
            Ok(other) => Err(MotionError::AdapterUnavailable(format!("unknown adapter {other:?}"))),
        }
    }

    /// HTTP(S) URLs become [`GestureAdapter::Http`]; anything else is a command.
    pub fn external(endpoint: &str) -> Self {
        if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            Self::Http { endpoint: endpoint.to_string() }
        } else {
            Self::Command { program: endpoint.to_string(), args: Vec::new() }
        }
    }

    pub fn generate(&self, clip: &AudioClip, style: StyleTag) -> Result<MotionClip, MotionError> {
        let text = match self {
            Self::Procedural => return synthesize_gestures(clip, style),
            Self::Command { program, args } => run_command(program, args, &encode_wav(clip), style)?,
            Self::Http { endpoint } => {
                let client = reqwest::blocking::Client::builder()
                    .timeout(ADAPTER_TIMEOUT)
                    .build()
                    .map_err(|e| MotionError::AdapterUnavailable(e.to_string()))?;
                let mut url = reqwest::Url::parse(endpoint).map_err(|e| MotionError::AdapterUnavailable(e.to_string()))?;
                url.query_pairs_mut().append_pair("style", style.name());
                let resp = client
                    .post(url)
                    .header(reqwest::header::CONTENT_TYPE, "audio/wav")
                    .body(encode_wav(clip))
                    .send()
                    .map_err(|e| MotionError::AdapterUnavailable(e.to_string()))?;
                if !resp.status().is_success() {
                    return Err(MotionError::AdapterUnavailable(format!("HTTP {}", resp.status().as_u16())));
                }
                resp.text().map_err(|e| MotionError::AdapterUnavailable(e.to_string()))?
            }
        };
        let motion = parse_bvh(&text).map_err(|e| MotionError::AdapterOutputInvalid(e.to_string()))?;
        check_adapter_output(&motion, clip)?;
        Ok(motion)
    }
}

/// The contract every adapter output must meet: canonical skeleton and a
/// duration within one frame of the audio.
pub fn check_adapter_output(motion: &MotionClip, audio: &AudioClip) -> Result<(), MotionError> {
    if !motion.skeleton.same_topology(&canonical_skeleton()) {
        return Err(MotionError::AdapterOutputInvalid("skeleton differs from the canonical skeleton".into()));
    }
    let drift = (motion.duration() - audio.duration()).abs();
    if drift > motion.frame_time + 1e-9 {
        return Err(MotionError::AdapterOutputInvalid(format!(
            "motion lasts {:.3} s but audio lasts {:.3} s",
            motion.duration(),
            audio.duration()
        )));
    }
    Ok(())
}

fn run_command(program: &str, args: &[String], wav: &[u8], style: StyleTag) -> Result<String, MotionError> {
    let mut child = Command::new(program)
        .args(args)
        .arg(style.name())
        .env("S2S_GESTURE_STYLE", style.name())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| MotionError::AdapterUnavailable(format!("{program}: {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = wav.to_vec();
    // the child may stop reading early; a broken pipe is not our failure
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(&input);
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut out = String::new();
        stdout.read_to_string(&mut out).map(|_| out)
    });

    let deadline = Instant::now() + ADAPTER_TIMEOUT;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(5)),
            Ok(None) => {
                let _ = child.kill();
                return Err(MotionError::AdapterUnavailable(format!("{program}: timed out")));
            }
            Err(e) => return Err(MotionError::AdapterUnavailable(e.to_string())),
        }
    };
    let _ = writer.join();
    let out = reader
        .join()
        .map_err(|_| MotionError::AdapterUnavailable("reader thread panicked".into()))?
        .map_err(|e| MotionError::AdapterOutputInvalid(format!("stdout is not UTF-8 text: {e}")))?;
    if !status.success() {
        return Err(MotionError::AdapterUnavailable(format!("{program}: exited with {status}")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;

    fn sine(amplitude: f64, seconds: f64, freq: f64) -> AudioClip {
        let sr = 22050u32;
        let n = (seconds * sr as f64) as usize;
        let samples = (0..n)
            .map(|i| (amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() * i16::MAX as f64).round() as i16)
            .collect();
        AudioClip::new(samples, sr)
    }

    #[test]
    fn silence_envelope_is_zero() {
        let env = compute_envelope(&AudioClip::silence(1.0, 22050), EnvelopeParams::default()).unwrap();
        assert_eq!(env.values.len(), 48);
        assert!(env.values.iter().all(|v| *v == 0.0));
        assert!(detect_onsets(&env, OnsetParams::default()).times.is_empty());
    }

    #[test]
    fn sine_envelope_matches_rms() {
        let env = compute_envelope(&sine(0.8, 1.0, 441.0), EnvelopeParams::default()).unwrap();
        let expected = 0.8 / 2f64.sqrt();
        for v in &env.values {
            assert!((v - expected).abs() / expected < 0.01, "{v}");
        }
    }

    #[test]
    fn short_clip_rejected() {
        assert!(matches!(
            compute_envelope(&AudioClip::silence(0.04, 22050), EnvelopeParams::default()),
            Err(MotionError::ClipTooShort)
        ));
        assert!(matches!(synthesize_gestures(&AudioClip::new(vec![], 22050), StyleTag::Happy), Err(MotionError::ClipTooShort)));
    }

    #[test]
    fn refractory_merges_close_bursts() {
        let sr = 22050usize;
        let mut samples = vec![0i16; sr];
        for start in [0.30, 0.40] {
            let s0 = (start * sr as f64) as usize;
            let s1 = s0 + (0.05 * sr as f64) as usize;
            for (i, s) in samples.iter_mut().enumerate().take(s1).skip(s0) {
                *s = (0.8 * (i as f64 * 0.1).sin() * i16::MAX as f64) as i16;
            }
        }
        let env = compute_envelope(&AudioClip::new(samples, 22050), EnvelopeParams::default()).unwrap();
        assert_eq!(detect_onsets(&env, OnsetParams::default()).times.len(), 1);
    }

    #[test]
    fn frame_count_and_still_style() {
        let audio = crate::speech::OfflineSynth::default().render("one two three, four.", "stub-f1", StyleTag::Still).unwrap();
        let clip = synthesize_gestures(&audio, StyleTag::Still).unwrap();
        assert_eq!(clip.frames.len(), (audio.duration() * 60.0).floor() as usize + 1);
        let base = StyleParams::for_style(StyleTag::Still).base_posture;
        for row in &clip.frames {
            for (j, posture) in base.iter().enumerate() {
                let start = clip.skeleton.channel_start(j) + if j == 0 { 3 } else { 0 };
                for c in 0..3 {
                    assert!((row[start + c] - posture[c]).to_radians().abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn canonical_skeleton_shape() {
        let s = canonical_skeleton();
        assert_eq!(s.len(), 17);
        assert_eq!(crate::kinematics::rest_height(&s), 170.0);
        assert_eq!(s.channel_count(), 6 + 16 * 3);
    }

    #[test]
    fn base_posture_lowers_arms() {
        let audio = AudioClip::silence(0.5, 22050);
        let clip = synthesize_gestures(&audio, StyleTag::Neutral).unwrap();
        let pose = forward_kinematics(&clip, 0).unwrap();
        let shoulder = pose.positions[joint::LEFT_ARM];
        let wrist = pose.positions[joint::LEFT_HAND];
        assert!(wrist.y < shoulder.y - 30.0);
        assert!(wrist.z > shoulder.z);
    }

    #[test]
    fn every_style_has_params() {
        for s in StyleTag::ALL {
            let p = StyleParams::for_style(*s);
            assert!(p.stroke_amplitude >= 0.0 && p.sway_amplitude >= 0.0 && p.energy_gain >= 0.0);
        }
        let still = StyleParams::for_style(StyleTag::Still);
        assert_eq!((still.stroke_amplitude, still.sway_amplitude), (0.0, 0.0));
    }

    #[test]
    fn adapter_env_parsing() {
        assert_eq!(GestureAdapter::external("http://x/y"), GestureAdapter::Http { endpoint: "http://x/y".into() });
        assert_eq!(
            GestureAdapter::external("/bin/gen"),
            GestureAdapter::Command { program: "/bin/gen".into(), args: vec![] }
        );
    }
}
