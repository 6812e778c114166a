//! BVH 1.0 text reader and writer.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Channel, Joint, MotionClip, Skeleton, SkeletonError, Vec3};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BvhError {
    #[error("line {line}: expected {expected}")]
    SyntaxError { line: usize, expected: String },
    #[error("line {line}: expected {expected} channel values, found {found}")]
    ChannelCountMismatch { line: usize, expected: usize, found: usize },
    #[error("header declares {declared} frames but {found} rows follow")]
    FrameCountMismatch { declared: usize, found: usize },
    #[error("clip has no frames")]
    EmptyClip,
    #[error("frame {index} out of range ({frames} frames)")]
    IndexOutOfRange { index: usize, frames: usize },
    #[error("invalid skeleton: {0}")]
    Skeleton(#[from] SkeletonError),
}

fn syntax(line: usize, expected: &str) -> BvhError {
    BvhError::SyntaxError { line, expected: expected.to_string() }
}

/// Whitespace token stream with 1-based line numbers.
struct Tokens<'a> {
    lines: Vec<&'a str>,
    line: usize,
    rest: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let lines: Vec<&str> = text.lines().collect();
        let first = lines.first().copied().unwrap_or("");
        Self { lines, line: 0, rest: first.split_whitespace() }
    }

    /// Line number of the most recent token (1-based).
    fn line_no(&self) -> usize {
        self.line + 1
    }

    fn next(&mut self) -> Option<&'a str> {
        loop {
            if let Some(tok) = self.rest.next() {
                return Some(tok);
            }
            if self.line + 1 >= self.lines.len() {
                return None;
            }
            self.line += 1;
            self.rest = self.lines[self.line].split_whitespace();
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), BvhError> {
        match self.next() {
            Some(t) if t == word => Ok(()),
            _ => Err(syntax(self.line_no(), &format!("`{word}`"))),
        }
    }

    fn word(&mut self, what: &str) -> Result<&'a str, BvhError> {
        self.next().ok_or_else(|| syntax(self.line_no(), what))
    }

    fn number(&mut self) -> Result<f64, BvhError> {
        let line = self.line_no();
        self.next()
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| syntax(line.max(self.line_no()), "a finite number"))
    }

    fn vec3(&mut self) -> Result<Vec3, BvhError> {
        Ok(Vec3::new(self.number()?, self.number()?, self.number()?))
    }

    /// Unread tokens on the current line.
    fn line_remainder(&mut self) -> Vec<&'a str> {
        self.rest.by_ref().collect()
    }
}

struct Partial {
    joint: Joint,
    has_offset: bool,
}

pub fn parse_bvh(text: &str) -> Result<MotionClip, BvhError> {
    let mut tok = Tokens::new(text);
    tok.expect("HIERARCHY")?;
    tok.expect("ROOT")?;
    let root_name = tok.word("root name")?;
    tok.expect("{")?;

    let mut joints: Vec<Partial> = vec![Partial {
        joint: Joint { name: root_name.to_string(), parent: None, offset: Vec3::zeros(), channels: Vec::new(), end_site: None },
        has_offset: false,
    }];
    let mut stack = vec![0usize];

    while let Some(&top) = stack.last() {
        let t = tok.word("OFFSET, CHANNELS, JOINT, End Site or `}`")?;
        match t {
            "OFFSET" => {
                joints[top].joint.offset = tok.vec3()?;
                joints[top].has_offset = true;
            }
            "CHANNELS" => {
                let line = tok.line_no();
                let n: usize = tok.word("channel count")?.parse().map_err(|_| syntax(line, "channel count"))?;
                if n > 6 {
                    return Err(syntax(line, "at most 6 channels"));
                }
                let mut chans = Vec::with_capacity(n);
                for _ in 0..n {
                    let name = tok.word("channel name")?;
                    let c = name.parse::<Channel>().map_err(|_| syntax(tok.line_no(), "a channel name"))?;
                    if chans.contains(&c) {
                        return Err(syntax(tok.line_no(), "distinct channel names"));
                    }
                    chans.push(c);
                }
                joints[top].joint.channels = chans;
            }
            "JOINT" => {
                let name = tok.word("joint name")?;
                tok.expect("{")?;
                joints.push(Partial {
                    joint: Joint { name: name.to_string(), parent: Some(top), offset: Vec3::zeros(), channels: Vec::new(), end_site: None },
                    has_offset: false,
                });
                stack.push(joints.len() - 1);
            }
            "End" => {
                tok.expect("Site")?;
                tok.expect("{")?;
                tok.expect("OFFSET")?;
                let e = tok.vec3()?;
                tok.expect("}")?;
                joints[top].joint.end_site = Some(e);
            }
            "}" => {
                if !joints[top].has_offset {
                    return Err(syntax(tok.line_no(), &format!("OFFSET for joint {}", joints[top].joint.name)));
                }
                stack.pop();
            }
            _ => return Err(syntax(tok.line_no(), "OFFSET, CHANNELS, JOINT, End Site or `}`")),
        }
    }

    tok.expect("MOTION")?;
    tok.expect("Frames:")?;
    let line = tok.line_no();
    let declared: usize = tok.word("frame count")?.parse().map_err(|_| syntax(line, "frame count"))?;
    tok.expect("Frame")?;
    tok.expect("Time:")?;
    let frame_time = tok.number()?;
    if frame_time <= 0.0 {
        return Err(syntax(tok.line_no(), "a positive frame time"));
    }
    if !tok.line_remainder().is_empty() {
        return Err(syntax(tok.line_no(), "end of line after frame time"));
    }

    let skeleton = Skeleton::new(joints.into_iter().map(|p| p.joint).collect())?;
    let width = skeleton.channel_count();

    let mut frames = Vec::new();
    for (offset, row) in tok.lines[tok.line + 1..].iter().enumerate() {
        let line = tok.line + 2 + offset;
        let mut values = Vec::with_capacity(width);
        for t in row.split_whitespace() {
            let v = t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| syntax(line, "a finite number"))?;
            values.push(v);
        }
        if values.is_empty() {
            continue;
        }
        if values.len() != width {
            return Err(BvhError::ChannelCountMismatch { line, expected: width, found: values.len() });
        }
        frames.push(values);
    }
    if frames.len() != declared {
        return Err(BvhError::FrameCountMismatch { declared, found: frames.len() });
    }
    if frames.is_empty() {
        return Err(BvhError::EmptyClip);
    }
    Ok(MotionClip { skeleton, frames, frame_time })
}

fn fmt_vec(v: &Vec3) -> String {
    format!("{:.6} {:.6} {:.6}", v.x, v.y, v.z)
}

/// Serializes a clip. Channel values use 6 decimals; the frame time is
/// written in shortest round-trip form so it parses back exactly.
pub fn write_bvh(clip: &MotionClip) -> Result<String, BvhError> {
    if clip.frames.is_empty() {
        return Err(BvhError::EmptyClip);
    }
    let skel = &clip.skeleton;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); skel.len()];
    for (i, j) in skel.joints().iter().enumerate() {
        if let Some(p) = j.parent {
            children[p].push(i);
        }
    }
    let mut out = String::from("HIERARCHY\n");

    enum Step {
        Open(usize, usize),
        Close(usize, usize),
    }
    let mut work = vec![Step::Open(0, 0)];
    while let Some(step) = work.pop() {
        match step {
            Step::Open(i, depth) => {
                let j = skel.joint(i);
                let pad = "\t".repeat(depth);
                let kw = if j.parent.is_none() { "ROOT" } else { "JOINT" };
                let _ = writeln!(out, "{pad}{kw} {}\n{pad}{{", j.name);
                let _ = writeln!(out, "{pad}\tOFFSET {}", fmt_vec(&j.offset));
                let names: Vec<&str> = j.channels.iter().map(|c| c.name()).collect();
                if names.is_empty() {
                    let _ = writeln!(out, "{pad}\tCHANNELS 0");
                } else {
                    let _ = writeln!(out, "{pad}\tCHANNELS {} {}", names.len(), names.join(" "));
                }
                work.push(Step::Close(i, depth));
                for &c in children[i].iter().rev() {
                    work.push(Step::Open(c, depth + 1));
                }
            }
            Step::Close(i, depth) => {
                let j = skel.joint(i);
                let pad = "\t".repeat(depth);
                if let Some(e) = &j.end_site {
                    let _ = writeln!(out, "{pad}\tEnd Site\n{pad}\t{{\n{pad}\t\tOFFSET {}\n{pad}\t}}", fmt_vec(e));
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }

    let _ = writeln!(out, "MOTION\nFrames: {}\nFrame Time: {}", clip.frames.len(), clip.frame_time);
    for row in &clip.frames {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:.6}");
        }
        out.push('\n');
    }
    Ok(out)
}
