use std::collections::{BTreeMap, HashSet};

use nalgebra::{Matrix3, Rotation3, Unit};
use thiserror::Error;

use super::euler::euler_from_matrix;
use super::fk::{forward_kinematics, local_rotation};
use super::{Axis, MotionClip, Skeleton, Vec3};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RetargetError {
    #[error("invalid joint map: {0}")]
    MapInvalid(String),
    #[error("mapped bone at joint {0:?} has zero length")]
    DegenerateBone(String),
    #[error("skeleton {0} has zero rest height")]
    DegenerateSkeleton(&'static str),
    #[error("joint {0:?} needs three distinct rotation channels to receive rotations")]
    UnsupportedChannels(String),
}

/// Partial source-joint to target-joint name mapping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JointMap {
    pairs: BTreeMap<String, String>,
}

impl JointMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: impl Into<String>, target: impl Into<String>) {
        self.pairs.insert(source.into(), target.into());
    }

    /// Maps every joint of `skeleton` to itself.
    pub fn identity(skeleton: &Skeleton) -> Self {
        let mut map = Self::new();
        for j in skeleton.joints() {
            map.insert(j.name.clone(), j.name.clone());
        }
        map
    }

    /// Parses `source = target` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, RetargetError> {
        let mut map = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((src, dst)) = line.split_once('=') else {
                return Err(RetargetError::MapInvalid(format!("line {}: expected `source = target`", n + 1)));
            };
            let (src, dst) = (src.trim(), dst.trim());
            if src.is_empty() || dst.is_empty() {
                return Err(RetargetError::MapInvalid(format!("line {}: empty joint name", n + 1)));
            }
            if map.pairs.contains_key(src) {
                return Err(RetargetError::MapInvalid(format!("line {}: {src:?} mapped twice", n + 1)));
            }
            map.insert(src, dst);
        }
        Ok(map)
    }

    pub fn to_text(&self) -> String {
        self.pairs.iter().map(|(s, t)| format!("{s} = {t}\n")).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(s, t)| (s.as_str(), t.as_str()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks injectivity and that both endpoints exist. Returns, per
    /// target joint, the mapped source joint index.
    fn resolve(&self, source: &Skeleton, target: &Skeleton) -> Result<Vec<Option<usize>>, RetargetError> {
        let mut seen = HashSet::new();
        let mut out = vec![None; target.len()];
        for (s, t) in self.iter() {
            let si = source.index_of(s).ok_or_else(|| RetargetError::MapInvalid(format!("source joint {s:?} not found")))?;
            let ti = target.index_of(t).ok_or_else(|| RetargetError::MapInvalid(format!("target joint {t:?} not found")))?;
            if !seen.insert(ti) {
                return Err(RetargetError::MapInvalid(format!("target joint {t:?} mapped more than once")));
            }
            out[ti] = Some(si);
        }
        Ok(out)
    }
}

/// Rest-pose extent along Y over joints and end sites.
pub fn rest_height(skeleton: &Skeleton) -> f64 {
    let mut world = Vec::with_capacity(skeleton.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in skeleton.joints() {
        let p = match j.parent {
            None => j.offset,
            Some(p) => world[p] + j.offset,
        };
        world.push(p);
        for y in std::iter::once(p.y).chain(j.end_site.map(|e| (p + e).y)) {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    hi - lo
}

fn rotation_axes(skel: &Skeleton, joint: usize) -> Option<[Axis; 3]> {
    let axes: Vec<Axis> = skel.joint(joint).channels.iter().filter_map(|c| c.rotation_axis()).collect();
    match axes.as_slice() {
        [a, b, c] => Some([*a, *b, *c]),
        _ => None,
    }
}

/// Rest direction of the bone leaving `joint`, preferring the child that
/// the map pairs across both skeletons.
fn bone_vectors(
    source: &Skeleton,
    target: &Skeleton,
    mapping: &[Option<usize>],
    ti: usize,
    si: usize,
) -> Option<(Vec3, Vec3)> {
    for tc in target.children(ti) {
        if let Some(sc) = mapping[tc] {
            if source.joint(sc).parent == Some(si) {
                return Some((source.joint(sc).offset, target.joint(tc).offset));
            }
        }
    }
    let first = |skel: &Skeleton, i: usize| skel.children(i).next().map(|c| skel.joint(c).offset).or(skel.joint(i).end_site);
    match (first(source, si), first(target, ti)) {
        (Some(s), Some(t)) => Some((s, t)),
        _ => None,
    }
}

/// Shortest-arc rotation taking direction `from` onto `to`.
fn align(from: &Vec3, to: &Vec3) -> Matrix3<f64> {
    let (a, b) = (from.normalize(), to.normalize());
    if let Some(r) = Rotation3::rotation_between(&a, &b) {
        return r.into_inner();
    }
    // antiparallel: half turn about any perpendicular axis
    let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let axis = Unit::new_normalize(a.cross(&helper));
    Rotation3::from_axis_angle(&axis, std::f64::consts::PI).into_inner()
}

/// Transfers joint rotations onto `target`.
///
/// For a mapped joint with rest correction `C` (aligning the source rest
/// bone onto the target rest bone), the target's world orientation is the
/// source's world orientation times `C⁻¹`; its local rotation follows from
/// the target parent's actual world orientation. When parent and child share
/// the same correction this is `C · R_source · C⁻¹`. Unmapped joints stay at
/// rest and root translation is scaled by the rest-height ratio.
pub fn retarget(clip: &MotionClip, target: &Skeleton, map: &JointMap) -> Result<MotionClip, RetargetError> {
    let source = &clip.skeleton;
    let mapping = map.resolve(source, target)?;

    let mut corrections: Vec<Matrix3<f64>> = vec![Matrix3::identity(); target.len()];
    for ti in 0..target.len() {
        let Some(si) = mapping[ti] else { continue };
        if rotation_axes(target, ti).is_none() && !target.joint(ti).channels.is_empty() {
            return Err(RetargetError::UnsupportedChannels(target.joint(ti).name.clone()));
        }
        if let Some((s, t)) = bone_vectors(source, target, &mapping, ti, si) {
            if s.norm() < 1e-9 {
                return Err(RetargetError::DegenerateBone(source.joint(si).name.clone()));
            }
            if t.norm() < 1e-9 {
                return Err(RetargetError::DegenerateBone(target.joint(ti).name.clone()));
            }
            corrections[ti] = align(&s, &t);
        }
    }

    let source_height = rest_height(source);
    let target_height = rest_height(target);
    if source_height <= 0.0 {
        return Err(RetargetError::DegenerateSkeleton("source"));
    }
    if target_height <= 0.0 {
        return Err(RetargetError::DegenerateSkeleton("target"));
    }
    let scale = target_height / source_height;

    let mut frames = Vec::with_capacity(clip.frames.len());
    for f in 0..clip.frames.len() {
        let pose = forward_kinematics(clip, f).expect("frame index in range");
        let mut world: Vec<Matrix3<f64>> = Vec::with_capacity(target.len());
        let mut row = vec![0.0; target.channel_count()];
        for ti in 0..target.len() {
            let joint = target.joint(ti);
            let parent_world = joint.parent.map_or(Matrix3::identity(), |p| world[p]);
            let start = target.channel_start(ti);
            match mapping[ti] {
                None => world.push(parent_world),
                Some(si) => {
                    let desired = pose.rotations[si] * corrections[ti].transpose();
                    let local = parent_world.transpose() * desired;
                    let src_joint = source.joint(si);
                    let src_values = clip.joint_channels(f, si);
                    let src_local = local_rotation(&src_joint.channels, src_values);
                    let verbatim = src_joint.channels == joint.channels && (local - src_local).norm() < 1e-12;
                    if verbatim {
                        for (k, c) in joint.channels.iter().enumerate() {
                            if c.rotation_axis().is_some() {
                                row[start + k] = src_values[k];
                            }
                        }
                    } else if let Some(order) = rotation_axes(target, ti) {
                        let angles = euler_from_matrix(order, &local);
                        let mut a = 0;
                        for (k, c) in joint.channels.iter().enumerate() {
                            if c.rotation_axis().is_some() {
                                row[start + k] = angles[a];
                                a += 1;
                            }
                        }
                    }
                    world.push(parent_world * local_rotation(&joint.channels, &row[start..start + joint.channels.len()]));
                }
            }
        }
        // root translation
        let src_root = source.joint(0);
        let mut translation = Vec3::zeros();
        for (c, v) in src_root.channels.iter().zip(clip.joint_channels(f, 0)) {
            if let Some(axis) = c.position_axis() {
                translation[axis] = *v;
            }
        }
        for (k, c) in target.joint(0).channels.iter().enumerate() {
            if let Some(axis) = c.position_axis() {
                row[k] = translation[axis] * scale;
            }
        }
        frames.push(row);
    }
    Ok(MotionClip { skeleton: target.clone(), frames, frame_time: clip.frame_time })
}
