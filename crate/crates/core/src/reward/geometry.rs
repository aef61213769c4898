use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::RewardError;

/// A point or displacement in meters (velocities in m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Length of the projection onto the horizontal plane.
    pub fn xy_norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        (*self - *other).norm()
    }

    pub fn xy_distance(&self, other: &Vec3) -> f64 {
        (*self - *other).xy_norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn component(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut f64 {
        match axis {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

/// Axis-aligned box given by its center and strictly positive half extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedBox {
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl AlignedBox {
    pub fn new(center: Vec3, half_extents: Vec3) -> Result<Self, RewardError> {
        let b = Self { center, half_extents };
        b.validate()?;
        Ok(b)
    }

    /// A cube with the given edge length.
    pub fn cube(center: Vec3, edge: f64) -> Result<Self, RewardError> {
        let h = edge / 2.0;
        Self::new(center, Vec3::new(h, h, h))
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !self.center.is_finite() || !self.half_extents.is_finite() {
            return Err(RewardError::InvalidGeometry(format!(
                "non-finite box {self:?}"
            )));
        }
        let h = self.half_extents;
        if h.x <= 0.0 || h.y <= 0.0 || h.z <= 0.0 {
            return Err(RewardError::InvalidGeometry(format!(
                "half extents must be positive, got {h:?}"
            )));
        }
        Ok(())
    }

    pub fn min_corner(&self) -> Vec3 {
        self.center - self.half_extents
    }

    pub fn max_corner(&self) -> Vec3 {
        self.center + self.half_extents
    }

    pub fn bottom(&self) -> f64 {
        self.center.z - self.half_extents.z
    }

    pub fn top(&self) -> f64 {
        self.center.z + self.half_extents.z
    }

    /// Volume from the corner coordinates. Computing it the same way as the
    /// intersection keeps identical boxes at an IoU of exactly 1.
    pub fn volume(&self) -> f64 {
        let lo = self.min_corner();
        let hi = self.max_corner();
        (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z)
    }

    /// Overlap length of the two boxes along each axis (zero when separated).
    pub fn axis_overlaps(&self, other: &AlignedBox) -> [f64; 3] {
        let (alo, ahi) = (self.min_corner(), self.max_corner());
        let (blo, bhi) = (other.min_corner(), other.max_corner());
        let mut out = [0.0; 3];
        for (axis, o) in out.iter_mut().enumerate() {
            let lo = alo.component(axis).max(blo.component(axis));
            let hi = ahi.component(axis).min(bhi.component(axis));
            *o = (hi - lo).max(0.0);
        }
        out
    }

    pub fn intersection_volume(&self, other: &AlignedBox) -> f64 {
        let [x, y, z] = self.axis_overlaps(other);
        x * y * z
    }

    /// True when the footprints on the horizontal plane overlap with positive area.
    pub fn footprint_overlaps(&self, other: &AlignedBox) -> bool {
        let [x, y, _] = self.axis_overlaps(other);
        x > 0.0 && y > 0.0
    }

    pub fn translated(&self, by: Vec3) -> AlignedBox {
        AlignedBox { center: self.center + by, half_extents: self.half_extents }
    }
}

/// Intersection-over-union of two axis-aligned boxes, in `[0, 1]`.
pub fn goal_overlap(block: &AlignedBox, goal: &AlignedBox) -> Result<f64, RewardError> {
    block.validate()?;
    goal.validate()?;
    let inter = block.intersection_volume(goal);
    if inter == 0.0 {
        return Ok(0.0);
    }
    let union = block.volume() + goal.volume() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}
