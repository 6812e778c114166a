//! Skeletons, motion clips, BVH text I/O, forward kinematics and
//! rest-pose-corrected retargeting.
//!
//! Coordinates are Y-up, right-handed, offsets in centimeters, rotation
//! channels in degrees. A joint's local rotation is the product of its
//! rotation channels in declared order, so `Zrotation Xrotation Yrotation`
//! means `Rz * Rx * Ry`.

mod bvh;
mod euler;
mod fk;
mod retarget;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use thiserror::Error;

pub use bvh::{parse_bvh, write_bvh, BvhError};
pub use euler::{euler_from_matrix, matrix_from_euler, Axis};
pub use fk::{forward_kinematics, local_rotation, Pose};
pub use retarget::{rest_height, retarget, JointMap, RetargetError};

pub type Vec3 = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }

    pub fn rotation_axis(self) -> Option<Axis> {
        match self {
            Channel::Xrotation => Some(Axis::X),
            Channel::Yrotation => Some(Axis::Y),
            Channel::Zrotation => Some(Axis::Z),
            _ => None,
        }
    }

    pub fn position_axis(self) -> Option<usize> {
        match self {
            Channel::Xposition => Some(0),
            Channel::Yposition => Some(1),
            Channel::Zposition => Some(2),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return Err(()),
        })
    }
}

/// Root channel layout used by generated clips.
pub const ROOT_CHANNELS: [Channel; 6] = [
    Channel::Xposition,
    Channel::Yposition,
    Channel::Zposition,
    Channel::Zrotation,
    Channel::Xrotation,
    Channel::Yrotation,
];

/// Rotation-only channel layout used by generated clips.
pub const JOINT_CHANNELS: [Channel; 3] = [Channel::Zrotation, Channel::Xrotation, Channel::Yrotation];

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub channels: Vec<Channel>,
    pub end_site: Option<Vec3>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SkeletonError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("joint {0} must be the only root")]
    BadRoot(usize),
    #[error("joint {0:?} appears twice")]
    DuplicateName(String),
    #[error("joint {0:?} is not in depth-first order after its parent")]
    BadOrder(String),
    #[error("joint {0:?} has a non-finite offset")]
    NonFinite(String),
}

/// A joint tree stored in depth-first order; `joints[0]` is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    channel_starts: Vec<usize>,
    channel_count: usize,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self, SkeletonError> {
        if joints.is_empty() {
            return Err(SkeletonError::Empty);
        }
        let mut names = HashSet::new();
        // Open ancestor chain while walking depth-first.
        let mut chain: Vec<usize> = Vec::new();
        for (i, j) in joints.iter().enumerate() {
            if !names.insert(j.name.as_str()) {
                return Err(SkeletonError::DuplicateName(j.name.clone()));
            }
            let finite = j.offset.iter().all(|v| v.is_finite())
                && j.end_site.is_none_or(|e| e.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(SkeletonError::NonFinite(j.name.clone()));
            }
            match j.parent {
                None if i == 0 => chain.push(0),
                None => return Err(SkeletonError::BadRoot(i)),
                Some(_) if i == 0 => return Err(SkeletonError::BadRoot(0)),
                Some(p) => {
                    while chain.last().is_some_and(|&top| top != p) {
                        chain.pop();
                    }
                    if chain.is_empty() {
                        return Err(SkeletonError::BadOrder(j.name.clone()));
                    }
                    chain.push(i);
                }
            }
        }
        let mut channel_starts = Vec::with_capacity(joints.len());
        let mut count = 0;
        for j in &joints {
            channel_starts.push(count);
            count += j.channels.len();
        }
        Ok(Self { joints, channel_starts, channel_count: count })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joint(&self, i: usize) -> &Joint {
        &self.joints[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.joints.iter().enumerate().filter(move |(_, j)| j.parent == Some(i)).map(|(k, _)| k)
    }

    /// Total channel values per frame.
    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    /// Index of joint `i`'s first channel within a frame row.
    pub fn channel_start(&self, i: usize) -> usize {
        self.channel_starts[i]
    }

    /// Same tree shape and names, ignoring offsets.
    pub fn same_topology(&self, other: &Skeleton) -> bool {
        self.joints.len() == other.joints.len()
            && self
                .joints
                .iter()
                .zip(&other.joints)
                .all(|(a, b)| a.name == b.name && a.parent == b.parent && a.channels == b.channels)
    }

    /// Copy with every offset and end site multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Skeleton {
        let joints = self
            .joints
            .iter()
            .map(|j| Joint { offset: j.offset * factor, end_site: j.end_site.map(|e| e * factor), ..j.clone() })
            .collect();
        Skeleton::new(joints).expect("scaling keeps the tree valid")
    }
}

/// Skeleton plus per-frame channel rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub skeleton: Skeleton,
    /// One row per frame, `skeleton.channel_count()` values each.
    pub frames: Vec<Vec<f64>>,
    pub frame_time: f64,
}

impl MotionClip {
    /// Time of the last frame.
    pub fn duration(&self) -> f64 {
        self.frames.len().saturating_sub(1) as f64 * self.frame_time
    }

    /// Channel values of `joint` in `frame`.
    pub fn joint_channels(&self, frame: usize, joint: usize) -> &[f64] {
        let start = self.skeleton.channel_start(joint);
        let n = self.skeleton.joint(joint).channels.len();
        &self.frames[frame][start..start + n]
    }

    pub fn is_consistent(&self) -> bool {
        !self.frames.is_empty()
            && self.frame_time > 0.0
            && self.frames.iter().all(|f| f.len() == self.skeleton.channel_count())
    }
}
