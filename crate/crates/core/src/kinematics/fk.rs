use nalgebra::Matrix3;

use super::euler::axis_rotation;
use super::{Channel, MotionClip, Vec3};
use super::bvh::BvhError;

/// World-space joint state for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Matrix3<f64>>,
    /// World position of each joint's end site, when it has one.
    pub end_sites: Vec<Option<Vec3>>,
}

/// Local rotation from channel values, composed in declared channel order.
pub fn local_rotation(channels: &[Channel], values: &[f64]) -> Matrix3<f64> {
    channels
        .iter()
        .zip(values)
        .filter_map(|(c, v)| c.rotation_axis().map(|axis| axis_rotation(axis, *v)))
        .fold(Matrix3::identity(), |acc, r| acc * r)
}

fn local_translation(channels: &[Channel], values: &[f64]) -> Vec3 {
    let mut t = Vec3::zeros();
    for (c, v) in channels.iter().zip(values) {
        if let Some(axis) = c.position_axis() {
            t[axis] += *v;
        }
    }
    t
}

pub fn forward_kinematics(clip: &MotionClip, frame: usize) -> Result<Pose, BvhError> {
    if frame >= clip.frames.len() {
        return Err(BvhError::IndexOutOfRange { index: frame, frames: clip.frames.len() });
    }
    let skel = &clip.skeleton;
    let n = skel.len();
    let mut positions = Vec::with_capacity(n);
    let mut rotations: Vec<Matrix3<f64>> = Vec::with_capacity(n);
    let mut end_sites = Vec::with_capacity(n);
    for (i, joint) in skel.joints().iter().enumerate() {
        let values = clip.joint_channels(frame, i);
        let local_r = local_rotation(&joint.channels, values);
        let local_t = joint.offset + local_translation(&joint.channels, values);
        let (pos, rot) = match joint.parent {
            None => (local_t, local_r),
            Some(p) => (positions[p] + rotations[p] * local_t, rotations[p] * local_r),
        };
        end_sites.push(joint.end_site.map(|e| pos + rot * e));
        positions.push(pos);
        rotations.push(rot);
    }
    Ok(Pose { positions, rotations, end_sites })
}
