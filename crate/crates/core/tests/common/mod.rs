#![allow(dead_code)]

use kcac_core::reward::{AlignedBox, RewardContext, Vec3, WorldSnapshot};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EDGE: f64 = 0.065;

pub fn cube(x: f64, y: f64, z: f64) -> AlignedBox {
    AlignedBox::cube(Vec3::new(x, y, z), EDGE).unwrap()
}

fn point(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(0.0..hi))
}

pub fn random_snapshot(rng: &mut ChaCha8Rng, step: u64) -> WorldSnapshot {
    let h = EDGE / 2.0;
    let b1 = point(rng, -0.06, 0.06);
    let b2 = point(rng, -0.2, 0.2);
    // effector sometimes within the 0.02 contact threshold of block 1
    let effector = if rng.random_bool(0.3) {
        b1 + Vec3::new(rng.random_range(-0.015..0.015), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01))
    } else {
        point(rng, -0.25, 0.25)
    };
    WorldSnapshot {
        effector,
        effector_velocity: Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
        block_1: cube(b1.x, b1.y, h + b1.z * 0.1),
        block_2: cube(b2.x, b2.y, h + b2.z),
        goal_1: cube(0.0, 0.0, h),
        goal_2: cube(0.0, 0.0, h + EDGE),
        grip_engaged: rng.random_bool(0.5),
        step_index: step,
    }
}

pub fn random_context(rng: &mut ChaCha8Rng) -> RewardContext {
    let k = rng.random_range(1..150u64);
    let init = random_snapshot(rng, 0);
    let prev = random_snapshot(rng, k);
    let curr = random_snapshot(rng, k + 1);
    RewardContext::new(prev, curr, init).unwrap()
}

/// Overlap ratio computed directly from corner coordinates.
pub fn iou_oracle(a: &AlignedBox, b: &AlignedBox) -> f64 {
    let (amin, amax) = (a.min_corner().to_array(), a.max_corner().to_array());
    let (bmin, bmax) = (b.min_corner().to_array(), b.max_corner().to_array());
    let mut inter = 1.0;
    let mut va = 1.0;
    let mut vb = 1.0;
    for i in 0..3 {
        inter *= (amax[i].min(bmax[i]) - amin[i].max(bmin[i])).max(0.0);
        va *= amax[i] - amin[i];
        vb *= bmax[i] - bmin[i];
    }
    inter / (va + vb - inter)
}

/// The refined stacking reward written out term by term.
pub fn refined_oracle(ctx: &RewardContext) -> f64 {
    let (p, c) = (&ctx.prev, &ctx.curr);
    let d = |a: Vec3, b: Vec3| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
    let dxy = |a: Vec3, b: Vec3| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    let (o2c, o2p) = (c.block_2.center, p.block_2.center);
    let (g2c, g2p) = (c.goal_2.center, p.goal_2.center);
    let approach = d(o2c, c.effector) - d(o2p, p.effector);
    let vertical = (o2c.z - g2c.z).abs() - (o2p.z - g2p.z).abs();
    let horizontal = dxy(o2c, g2c) - dxy(o2p, g2p);
    let dv = c.effector_velocity - p.effector_velocity;
    let vel = (dv.x * dv.x + dv.y * dv.y + dv.z * dv.z).sqrt();
    -750.0 * approach - 250.0 * vertical - 125.0 * horizontal
        + 0.5 * iou_oracle(&c.block_1, &c.goal_1)
        + iou_oracle(&c.block_2, &c.goal_2)
        + 0.005 * vel
}

/// Fraction-of-union estimate from an `n³` voxel grid over the joint bounding box.
pub fn voxel_iou(a: &AlignedBox, b: &AlignedBox, n: usize) -> f64 {
    let lo = a.min_corner().to_array();
    let lo_b = b.min_corner().to_array();
    let hi = a.max_corner().to_array();
    let hi_b = b.max_corner().to_array();
    let lo: Vec<f64> = (0..3).map(|i| lo[i].min(lo_b[i])).collect();
    let hi: Vec<f64> = (0..3).map(|i| hi[i].max(hi_b[i])).collect();
    let inside = |bx: &AlignedBox, p: [f64; 3]| {
        let (mn, mx) = (bx.min_corner().to_array(), bx.max_corner().to_array());
        (0..3).all(|i| p[i] >= mn[i] && p[i] <= mx[i])
    };
    let (mut both, mut either) = (0u64, 0u64);
    for i in 0..n {
        let x = lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / n as f64;
        for j in 0..n {
            let y = lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / n as f64;
            for k in 0..n {
                let z = lo[2] + (k as f64 + 0.5) * (hi[2] - lo[2]) / n as f64;
                let (ia, ib) = (inside(a, [x, y, z]), inside(b, [x, y, z]));
                both += (ia && ib) as u64;
                either += (ia || ib) as u64;
            }
        }
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

pub fn random_box_pair(rng: &mut ChaCha8Rng) -> (AlignedBox, AlignedBox) {
    let mut b = || {
        let c = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.0..0.1));
        let h = Vec3::new(rng.random_range(0.01..0.05), rng.random_range(0.01..0.05), rng.random_range(0.01..0.05));
        AlignedBox::new(c, h).unwrap()
    };
    (b(), b())
}
