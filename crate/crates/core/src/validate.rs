//! Whole-bundle checks: manifest schema and invariants, decodable assets,
//! audio/motion synchronization and bone lengths of retargeted clips.

use std::fmt;
use std::path::Path;

use crate::camera::CameraPose;
use crate::characters::Catalog;
use crate::kinematics::{forward_kinematics, parse_bvh, MotionClip};
use crate::model::{validate_line, AssetKind, SceneBundle};
use crate::motion::canonical_skeleton;
use crate::pipeline::MANIFEST;
use crate::speech::{decode_wav, AudioClip};

/// Relative tolerance on bone length in retargeted clips.
pub const BONE_LENGTH_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    /// Bundle-relative path of the offending file.
    pub asset: String,
    pub message: String,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.asset, self.message)
    }
}

fn problem(asset: impl Into<String>, message: impl Into<String>) -> Problem {
    Problem { asset: asset.into(), message: message.into() }
}

/// Largest relative deviation of any bone from its rest length over all frames.
pub fn max_bone_stretch(clip: &MotionClip) -> f64 {
    let skel = &clip.skeleton;
    let mut worst: f64 = 0.0;
    for f in 0..clip.frames.len() {
        let pose = forward_kinematics(clip, f).expect("frame in range");
        for (i, joint) in skel.joints().iter().enumerate() {
            if let Some(p) = joint.parent {
                let rest = joint.offset.norm();
                if rest > 1e-9 {
                    let len = (pose.positions[i] - pose.positions[p]).norm();
                    worst = worst.max((len - rest).abs() / rest);
                }
            }
            if let (Some(end), Some(world)) = (joint.end_site, pose.end_sites[i]) {
                let rest = end.norm();
                if rest > 1e-9 {
                    worst = worst.max(((world - pose.positions[i]).norm() - rest).abs() / rest);
                }
            }
        }
    }
    worst
}

fn read(dir: &Path, rel: &str) -> Result<Vec<u8>, Problem> {
    if rel.split('/').any(|p| p == ".." || p.is_empty()) || rel.starts_with('/') {
        return Err(problem(rel, "asset path escapes the bundle"));
    }
    std::fs::read(dir.join(rel)).map_err(|e| problem(rel, format!("cannot read: {e}")))
}

fn read_bvh(dir: &Path, rel: &str) -> Result<MotionClip, Problem> {
    let bytes = read(dir, rel)?;
    let text = String::from_utf8(bytes).map_err(|_| problem(rel, "not UTF-8 text"))?;
    parse_bvh(&text).map_err(|e| problem(rel, e.to_string()))
}

/// Checks one complete line's assets.
fn check_line_assets(dir: &Path, bundle: &SceneBundle, i: usize, catalog: &Catalog, out: &mut Vec<Problem>) {
    let assets = &bundle.assets[i];
    for kind in AssetKind::ALL {
        if let Some(rel) = assets.get(kind) {
            if rel != kind.relative_path(i) {
                out.push(problem(rel, format!("expected at {}", kind.relative_path(i))));
            }
        }
    }
    let audio: Option<AudioClip> = assets.audio.as_deref().and_then(|rel| {
        read(dir, rel)
            .and_then(|b| decode_wav(&b).map_err(|e| problem(rel, e.to_string())))
            .map_err(|p| out.push(p))
            .ok()
    });
    let motion = assets.motion.as_deref().and_then(|rel| read_bvh(dir, rel).map_err(|p| out.push(p)).ok());
    if let (Some(audio), Some(motion), Some(rel)) = (&audio, &motion, assets.motion.as_deref()) {
        if !motion.skeleton.same_topology(&canonical_skeleton()) {
            out.push(problem(rel, "skeleton differs from the canonical gesture skeleton"));
        }
        let drift = (motion.duration() - audio.duration()).abs();
        if drift > motion.frame_time + 1e-9 {
            out.push(problem(rel, format!("duration off audio by {drift:.4} s (limit one frame)")));
        }
    }
    if let Some(rel) = assets.anim.as_deref() {
        if let Ok(anim) = read_bvh(dir, rel).map_err(|p| out.push(p)) {
            let model = bundle.cast.get(&bundle.lines[i].id).and_then(|m| catalog.get(&m.model_id));
            if let Some(character) = model {
                if !anim.skeleton.same_topology(&character.skeleton) {
                    out.push(problem(rel, format!("skeleton differs from character {:?}", character.id())));
                }
            }
            if let Some(motion) = &motion {
                if anim.frames.len() != motion.frames.len() {
                    out.push(problem(rel, "frame count differs from the gesture clip"));
                }
            }
            let stretch = max_bone_stretch(&anim);
            if stretch > BONE_LENGTH_TOLERANCE {
                out.push(problem(rel, format!("bone length deviates by {stretch:.2e} (relative)")));
            }
        }
    }
    if let Some(rel) = assets.camera.as_deref() {
        if let Ok(bytes) = read(dir, rel).map_err(|p| out.push(p)) {
            match serde_json::from_slice::<CameraPose>(&bytes) {
                Ok(pose) => {
                    let finite = pose.position.iter().chain(&pose.look_at).all(|v| v.is_finite());
                    if !finite || !(pose.fov_vertical > 0.0 && pose.fov_vertical < 180.0) {
                        out.push(problem(rel, "camera pose is not finite or has a bad field of view"));
                    }
                }
                Err(e) => out.push(problem(rel, format!("not a camera pose: {e}"))),
            }
        }
    }
}

/// Every problem found in the bundle at `dir`; empty means valid.
pub fn validate_bundle(dir: &Path, catalog: &Catalog) -> Vec<Problem> {
    let text = match std::fs::read_to_string(dir.join(MANIFEST)) {
        Ok(t) => t,
        Err(e) => return vec![problem(MANIFEST, format!("cannot read: {e}"))],
    };
    let bundle = match SceneBundle::from_json(&text) {
        Ok(b) => b,
        Err(e) => return vec![problem(MANIFEST, format!("schema: {e}"))],
    };
    let mut out: Vec<Problem> = bundle.check_invariants().into_iter().map(|v| problem(MANIFEST, v.to_string())).collect();
    if !out.is_empty() {
        return out;
    }
    for (i, line) in bundle.lines.iter().enumerate() {
        let value = serde_json::to_value(line).expect("line serializes");
        if let Err(e) = validate_line(&value) {
            out.push(problem(MANIFEST, format!("line {i}: {e}")));
        }
        if !bundle.speakers.contains(&line.id) {
            out.push(problem(MANIFEST, format!("line {i}: speaker {:?} not in the speaker list", line.id)));
        }
        if let Some(member) = bundle.cast.get(&line.id) {
            if catalog.get(&member.model_id).is_none() {
                out.push(problem(MANIFEST, format!("line {i}: unknown character model {:?}", member.model_id)));
            }
        }
        check_line_assets(dir, &bundle, i, catalog, &mut out);
    }
    out
}
