//! Camera placement from a shot plan: shot size sets the framed vertical
//! extent and thus the distance, the angle sets the camera pitch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Vec3;
use crate::model::{ShotAngle, ShotType};

pub const DEFAULT_FOV_VERTICAL: f64 = 40.0;
pub const DEFAULT_EYE_RATIO: f64 = 0.93;
/// Horizontal spacing of two characters in conversation, meters.
pub const CONVERSATION_SPACING: f64 = 1.2;
/// Azimuth of the over-the-shoulder camera from the speaker-listener axis.
pub const OVER_SHOULDER_AZIMUTH: f64 = 30.0;
/// Viewport aspect used when both characters must fit a long shot.
pub const PREVIEW_ASPECT: f64 = 16.0 / 9.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubjectBounds {
    pub floor_center: Vec3,
    /// Meters.
    pub height: f64,
    pub eye_height: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CameraError {
    #[error("subject bounds invalid: need 0 < eye_height <= height")]
    InvalidBounds,
    #[error("speaker and listener stand at the same spot")]
    SubjectsCoincident,
}

impl SubjectBounds {
    pub fn new(floor_center: Vec3, height: f64) -> Self {
        Self { floor_center, height, eye_height: DEFAULT_EYE_RATIO * height }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let finite = self.floor_center.iter().all(|v| v.is_finite()) && self.height.is_finite() && self.eye_height.is_finite();
        if !finite || self.eye_height <= 0.0 || self.eye_height > self.height {
            return Err(CameraError::InvalidBounds);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: [f64; 3],
    #[serde(rename = "lookAt")]
    pub look_at: [f64; 3],
    #[serde(rename = "fovVertical")]
    pub fov_vertical: f64,
    pub roll: f64,
}

impl CameraPose {
    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn look_at(&self) -> Vec3 {
        Vec3::from(self.look_at)
    }

    pub fn distance(&self) -> f64 {
        (self.look_at() - self.position()).norm()
    }

    /// Signed elevation of the view direction in degrees (negative = down).
    pub fn pitch(&self) -> f64 {
        let d = self.look_at() - self.position();
        d.y.atan2((d.x * d.x + d.z * d.z).sqrt()).to_degrees()
    }

    /// Projects `p` to normalized image coordinates in [-1, 1]² when visible.
    pub fn project(&self, p: &Vec3, aspect: f64) -> Option<(f64, f64)> {
        let forward = (self.look_at() - self.position()).normalize();
        let right = forward.cross(&Vec3::y()).normalize();
        let up = right.cross(&forward);
        let rel = p - self.position();
        let z = rel.dot(&forward);
        if z <= 0.0 {
            return None;
        }
        let half = (self.fov_vertical / 2.0).to_radians().tan();
        Some((rel.dot(&right) / z / (half * aspect), rel.dot(&up) / z / half))
    }

    pub fn contains(&self, p: &Vec3, aspect: f64) -> bool {
        self.project(p, aspect).is_some_and(|(x, y)| x.abs() <= 1.0 && y.abs() <= 1.0)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("pose serializes");
        s.push('\n');
        s
    }
}

/// Framing constants; all cinematography choices live here.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramingConfig {
    pub fov_vertical: f64,
    pub close_up_fraction: f64,
    pub medium_fraction: f64,
    pub long_fraction: f64,
    pub high_pitch: f64,
    pub low_pitch: f64,
}

impl Default for FramingConfig {
    fn default() -> Self {
        Self {
            fov_vertical: DEFAULT_FOV_VERTICAL,
            close_up_fraction: 0.35,
            medium_fraction: 0.70,
            long_fraction: 1.30,
            high_pitch: -25.0,
            low_pitch: 15.0,
        }
    }
}

impl FramingConfig {
    /// Framed vertical extent for `shot` as a fraction of subject height.
    pub fn fraction(&self, shot: ShotType) -> f64 {
        match shot {
            ShotType::CloseUp => self.close_up_fraction,
            ShotType::Medium => self.medium_fraction,
            ShotType::Long => self.long_fraction,
        }
    }

    /// Height of the framed band's center above the floor, as a fraction of height.
    fn band_center(&self, shot: ShotType) -> f64 {
        match shot {
            // band hangs from the top of the head
            ShotType::CloseUp | ShotType::Medium => 1.0 - self.fraction(shot) / 2.0,
            ShotType::Long => 0.5,
        }
    }

    pub fn distance(&self, height: f64, shot: ShotType) -> f64 {
        let extent = self.fraction(shot) * height;
        (extent / 2.0) / (self.fov_vertical / 2.0).to_radians().tan()
    }
}

/// Camera for one subject seen from horizontal direction `toward_camera`.
fn frame_from(bounds: &SubjectBounds, shot: ShotType, angle: ShotAngle, toward_camera: Vec3, cfg: &FramingConfig) -> CameraPose {
    let d = cfg.distance(bounds.height, shot);
    let base = bounds.floor_center;
    let (target_y, pitch) = match angle {
        ShotAngle::EyeLevel => (bounds.eye_height, 0.0),
        ShotAngle::High => (cfg.band_center(shot) * bounds.height, cfg.high_pitch),
        ShotAngle::Low => (cfg.band_center(shot) * bounds.height, cfg.low_pitch),
    };
    let look_at = Vec3::new(base.x, base.y + target_y, base.z);
    let (sp, cp) = pitch.to_radians().sin_cos();
    // camera sits opposite the view direction
    let position = if pitch == 0.0 {
        look_at + toward_camera * d
    } else {
        look_at + toward_camera * (d * cp) - Vec3::y() * (d * sp)
    };
    CameraPose { position: position.into(), look_at: look_at.into(), fov_vertical: cfg.fov_vertical, roll: 0.0 }
}

/// Frames a single subject from the front (+Z side).
pub fn frame_subject(bounds: &SubjectBounds, shot: ShotType, angle: ShotAngle) -> Result<CameraPose, CameraError> {
    frame_subject_with(bounds, shot, angle, &FramingConfig::default())
}

pub fn frame_subject_with(
    bounds: &SubjectBounds,
    shot: ShotType,
    angle: ShotAngle,
    cfg: &FramingConfig,
) -> Result<CameraPose, CameraError> {
    bounds.validate()?;
    Ok(frame_from(bounds, shot, angle, Vec3::z(), cfg))
}

/// Where [`two_shot_layout`] stands each character.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoShot {
    pub camera: CameraPose,
    pub speaker: SubjectBounds,
    pub listener: SubjectBounds,
}

fn body_points(b: &SubjectBounds) -> [Vec3; 2] {
    [b.floor_center, b.floor_center + Vec3::y() * b.height]
}

/// Over-the-shoulder framing of the speaker.
///
/// The characters are re-placed `CONVERSATION_SPACING` apart on their
/// shared axis, facing each other. The camera frames the speaker as
/// [`frame_subject`] would, but from 30° off the axis on the listener's
/// side, turned toward the audience side of the stage (+Z, or +X when the
/// axis runs along Z). Long shots dolly back along the view ray until both
/// bodies fit a 16:9 frame.
pub fn two_shot_layout(
    speaker: &SubjectBounds,
    listener: &SubjectBounds,
    shot: ShotType,
    angle: ShotAngle,
) -> Result<TwoShot, CameraError> {
    let cfg = FramingConfig::default();
    speaker.validate()?;
    listener.validate()?;
    let mut axis = listener.floor_center - speaker.floor_center;
    axis.y = 0.0;
    if axis.norm() < 1e-9 {
        return Err(CameraError::SubjectsCoincident);
    }
    let u = axis.normalize();
    let mid = (speaker.floor_center + listener.floor_center) / 2.0;
    let mid = Vec3::new(mid.x, speaker.floor_center.y, mid.z);
    let placed_speaker = SubjectBounds { floor_center: mid - u * (CONVERSATION_SPACING / 2.0), ..*speaker };
    let placed_listener = SubjectBounds {
        floor_center: Vec3::new(mid.x, listener.floor_center.y, mid.z) + u * (CONVERSATION_SPACING / 2.0),
        ..*listener
    };

    let mut side = Vec3::new(-u.z, 0.0, u.x);
    let audience = if u.x.abs() < 1e-9 { Vec3::x() } else { Vec3::z() };
    if side.dot(&audience) < 0.0 {
        side = -side;
    }
    let (s, c) = OVER_SHOULDER_AZIMUTH.to_radians().sin_cos();
    let toward_camera = (u * c + side * s).normalize();

    let mut camera = frame_from(&placed_speaker, shot, angle, toward_camera, &cfg);
    if shot == ShotType::Long {
        let points: Vec<Vec3> = body_points(&placed_speaker).into_iter().chain(body_points(&placed_listener)).collect();
        let look = camera.look_at();
        let back = camera.position() - look;
        let fits = |k: f64| {
            let pose = CameraPose { position: (look + back * k).into(), ..camera };
            points.iter().all(|p| pose.contains(p, PREVIEW_ASPECT))
        };
        if !fits(1.0) {
            let mut hi = 2.0;
            while !fits(hi) && hi < 1e3 {
                hi *= 2.0;
            }
            let mut lo = hi / 2.0;
            for _ in 0..60 {
                let m = 0.5 * (lo + hi);
                if fits(m) {
                    hi = m;
                } else {
                    lo = m;
                }
            }
            camera.position = (look + back * hi).into();
        }
    }
    Ok(TwoShot { camera, speaker: placed_speaker, listener: placed_listener })
}
