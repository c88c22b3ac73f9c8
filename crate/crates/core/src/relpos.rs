//! The 28-D relative position record between a reference box and a target box.
//!
//! Layout (fixed order):
//!
//! | index  | meaning                                                   |
//! |--------|-----------------------------------------------------------|
//! | 0      | relative angle, target minus reference, in (−π, π]        |
//! | 1      | signed offset between the closest edges along local x     |
//! | 2      | signed offset between the closest edges along local y     |
//! | 3..19  | edge pair, one-hot at `3 + 4·h + v`                       |
//! | 19..23 | attachment: none / x only / y only / both axes            |
//! | 23..28 | alignment: 0°, 90°, 180°, 270°, other                     |
//!
//! Edge-pair case indices follow `2·(reference edge is max) + (target edge is max)`.

use core::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Obb, Pose};
use crate::math::{abs, argmax, normalize_angle};

pub const RELPOS_DIM: usize = 28;
pub const EDGE_START: usize = 3;
pub const ATTACH_START: usize = 19;
pub const ALIGN_START: usize = 23;

pub const ATTACH_NONE: usize = 0;
pub const ATTACH_X: usize = 1;
pub const ATTACH_Y: usize = 2;
pub const ATTACH_BOTH: usize = 3;
pub const ALIGN_OTHER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("target sizes must be positive, got {0:?}")]
    DegenerateSize([f64; 2]),
    #[error("bit group `{group}` must be exactly one-hot")]
    NotOneHot { group: &'static str },
}

/// How child placements are stored in the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionMode {
    /// Angle, closest-edge offsets and indicator bits.
    #[default]
    Relative,
    /// Absolute `(x, y, angle)` of the target's anchor object.
    Absolute,
    /// Relative angle plus the center-to-center translation in the reference frame.
    CenterTranslation,
}

impl PositionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PositionMode::Relative => "relative",
            PositionMode::Absolute => "absolute",
            PositionMode::CenterTranslation => "center_translation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Edge coincidence tolerance for the attachment bits, meters.
    pub attach_tol: f64,
    /// Angular tolerance for the alignment bits, radians.
    pub align_tol: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            attach_tol: 0.05,
            align_tol: 5.0 * PI / 180.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelPos28 {
    pub values: [f64; RELPOS_DIM],
}

impl Default for RelPos28 {
    fn default() -> Self {
        Self {
            values: [0.0; RELPOS_DIM],
        }
    }
}

/// Which group of bits a check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitGroup {
    Edge,
    Attach,
    Align,
}

impl BitGroup {
    fn range(self) -> core::ops::Range<usize> {
        match self {
            BitGroup::Edge => EDGE_START..ATTACH_START,
            BitGroup::Attach => ATTACH_START..ALIGN_START,
            BitGroup::Align => ALIGN_START..RELPOS_DIM,
        }
    }

    fn name(self) -> &'static str {
        match self {
            BitGroup::Edge => "edge",
            BitGroup::Attach => "attach",
            BitGroup::Align => "align",
        }
    }
}

impl RelPos28 {
    pub fn from_slice(v: &[f64]) -> Self {
        let mut values = [0.0; RELPOS_DIM];
        values.copy_from_slice(&v[..RELPOS_DIM]);
        Self { values }
    }

    pub fn angle(&self) -> f64 {
        self.values[0]
    }

    pub fn offsets(&self) -> [f64; 2] {
        [self.values[1], self.values[2]]
    }

    pub fn set_offsets(&mut self, off: [f64; 2]) {
        self.values[1] = off[0];
        self.values[2] = off[1];
    }

    /// Per-group argmax.
    pub fn hardened_index(&self, group: BitGroup) -> usize {
        argmax(&self.values[group.range()])
    }

    /// `(h, v)` edge cases after hardening.
    pub fn edge_cases(&self) -> (usize, usize) {
        let i = self.hardened_index(BitGroup::Edge);
        (i / 4, i % 4)
    }

    pub fn attach(&self) -> usize {
        self.hardened_index(BitGroup::Attach)
    }

    pub fn align(&self) -> usize {
        self.hardened_index(BitGroup::Align)
    }

    /// Replaces every bit group by its one-hot argmax.
    pub fn hardened(&self) -> Self {
        let mut out = *self;
        for g in [BitGroup::Edge, BitGroup::Attach, BitGroup::Align] {
            out.set_one_hot(g, self.hardened_index(g));
        }
        out
    }

    /// Strict check that every group holds exactly one 1 and zeros elsewhere.
    pub fn check_one_hot(&self) -> Result<(), CodecError> {
        for g in [BitGroup::Edge, BitGroup::Attach, BitGroup::Align] {
            let bits = &self.values[g.range()];
            let ones = bits.iter().filter(|b| **b == 1.0).count();
            let zeros = bits.iter().filter(|b| **b == 0.0).count();
            if ones != 1 || ones + zeros != bits.len() {
                return Err(CodecError::NotOneHot { group: g.name() });
            }
        }
        Ok(())
    }

    pub fn set_one_hot(&mut self, group: BitGroup, index: usize) {
        for (j, x) in self.values[group.range()].iter_mut().enumerate() {
            *x = if j == index { 1.0 } else { 0.0 };
        }
    }
}

/// Target angle minus reference angle, wrapped to (−π, π].
pub fn relative_angle(reference: &Obb, target: &Obb) -> f64 {
    normalize_angle(target.angle - reference.angle)
}

/// Closest pair of edges along one axis between two intervals.
///
/// Returns `(case, offset)` with `case = 2·(ref edge is max) + (tgt edge is max)`
/// and `offset = tgt_edge − ref_edge`. Ties go to the lowest case.
pub fn closest_edge_case(reference: [f64; 2], target: [f64; 2]) -> (usize, f64) {
    let mut best = (0usize, target[0] - reference[0]);
    for case in 1..4 {
        let off = target[case & 1] - reference[case >> 1];
        if abs(off) < abs(best.1) {
            best = (case, off);
        }
    }
    best
}

fn alignment_bucket(angle: f64, tol: f64) -> usize {
    for (k, target) in [0.0, FRAC_PI_2, PI, -FRAC_PI_2].iter().enumerate() {
        let d = abs(normalize_angle(angle - target));
        if d <= tol {
            return k;
        }
    }
    ALIGN_OTHER
}

pub fn snapped_angle(bucket: usize) -> f64 {
    match bucket {
        0 => 0.0,
        1 => FRAC_PI_2,
        2 => PI,
        _ => -FRAC_PI_2,
    }
}

/// Target box expressed in the reference frame and rotated to axis alignment:
/// returns `(center, half extents)`.
fn target_in_reference(reference: &Obb, target: &Obb) -> ([f64; 2], [f64; 2]) {
    let local = reference.pose().inverse().apply(target.center);
    (local, target.half_extents())
}

/// Encodes `target` relative to `reference`.
pub fn encode_relpos(reference: &Obb, target: &Obb, cfg: &CodecConfig) -> RelPos28 {
    let angle = relative_angle(reference, target);
    let (c, h) = target_in_reference(reference, target);
    let rh = reference.half_extents();
    let (hcase, hoff) = closest_edge_case([-rh[0], rh[0]], [c[0] - h[0], c[0] + h[0]]);
    let (vcase, voff) = closest_edge_case([-rh[1], rh[1]], [c[1] - h[1], c[1] + h[1]]);
    let align = alignment_bucket(angle, cfg.align_tol);
    let attach = if align == ALIGN_OTHER {
        ATTACH_NONE
    } else {
        match (abs(hoff) <= cfg.attach_tol, abs(voff) <= cfg.attach_tol) {
            (true, true) => ATTACH_BOTH,
            (true, false) => ATTACH_X,
            (false, true) => ATTACH_Y,
            (false, false) => ATTACH_NONE,
        }
    };
    let mut rp = RelPos28::default();
    rp.values[0] = angle;
    rp.values[1] = hoff;
    rp.values[2] = voff;
    rp.values[EDGE_START + 4 * hcase + vcase] = 1.0;
    rp.values[ATTACH_START + attach] = 1.0;
    rp.values[ALIGN_START + align] = 1.0;
    rp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOptions {
    /// Enforce exact attachment/alignment indicated by the bit groups.
    pub snap: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { snap: true }
    }
}

/// Reconstructs the target box in the reference's frame of reference.
///
/// Bit groups are hardened by argmax first. The returned box has
/// elevation 0; vertical placement belongs to the caller.
pub fn decode_relpos(
    reference: &Obb,
    rp: &RelPos28,
    target_size: [f64; 3],
    opts: DecodeOptions,
) -> Result<Obb, CodecError> {
    if !(target_size[0] > 0.0 && target_size[1] > 0.0) {
        return Err(CodecError::DegenerateSize([target_size[0], target_size[1]]));
    }
    let align = rp.align();
    let attach = rp.attach();
    let mut angle = rp.angle();
    let [mut hoff, mut voff] = rp.offsets();
    if opts.snap {
        if align != ALIGN_OTHER {
            angle = snapped_angle(align);
        }
        if attach == ATTACH_X || attach == ATTACH_BOTH {
            hoff = 0.0;
        }
        if attach == ATTACH_Y || attach == ATTACH_BOTH {
            voff = 0.0;
        }
    }
    let (hcase, vcase) = rp.edge_cases();
    let rh = reference.half_extents();
    let th = [target_size[0] * 0.5, target_size[1] * 0.5];
    let center_along = |case: usize, off: f64, r: f64, t: f64| {
        let ref_edge = if case >> 1 == 1 { r } else { -r };
        let tgt_edge = ref_edge + off;
        if case & 1 == 1 {
            tgt_edge - t
        } else {
            tgt_edge + t
        }
    };
    let local = [
        center_along(hcase, hoff, rh[0], th[0]),
        center_along(vcase, voff, rh[1], th[1]),
    ];
    let pose = reference.pose();
    Ok(Obb {
        center: pose.apply(local),
        elevation: 0.0,
        size: target_size,
        angle: normalize_angle(reference.angle + angle),
    })
}

/// Ablation encodings. `anchor` is the target's anchor object, used by
/// [`PositionMode::Absolute`].
pub fn encode_position(
    mode: PositionMode,
    reference: &Obb,
    target: &Obb,
    anchor: &Obb,
    cfg: &CodecConfig,
) -> RelPos28 {
    match mode {
        PositionMode::Relative => encode_relpos(reference, target, cfg),
        PositionMode::Absolute => {
            let mut rp = RelPos28::default();
            rp.values[0] = anchor.center[0];
            rp.values[1] = anchor.center[1];
            rp.values[2] = anchor.angle;
            rp
        }
        PositionMode::CenterTranslation => {
            let mut rp = RelPos28::default();
            let local = reference.pose().inverse().apply(target.center);
            rp.values[0] = relative_angle(reference, target);
            rp.values[1] = local[0];
            rp.values[2] = local[1];
            rp
        }
    }
}

/// Inverse of [`PositionMode::CenterTranslation`] encoding.
pub fn decode_center_translation(
    reference: &Obb,
    rp: &RelPos28,
    target_size: [f64; 3],
) -> Result<Obb, CodecError> {
    if !(target_size[0] > 0.0 && target_size[1] > 0.0) {
        return Err(CodecError::DegenerateSize([target_size[0], target_size[1]]));
    }
    let pose = reference.pose();
    Ok(Obb {
        center: pose.apply([rp.values[1], rp.values[2]]),
        elevation: 0.0,
        size: target_size,
        angle: normalize_angle(reference.angle + rp.values[0]),
    })
}

/// Pose of the anchor object stored by [`PositionMode::Absolute`].
pub fn absolute_pose(rp: &RelPos28) -> Pose {
    Pose::new(normalize_angle(rp.values[2]), [rp.values[0], rp.values[1]])
}
