//! Test support: random scenes and a brute-force relation oracle written
//! from box corners, sharing no code with the library's geometry.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sgalign_core::spatial::RelationConfig;
use sgalign_core::{NodeId, ObjectNode, Predicate, SceneGraph, Vec3, ViewerPose};

/// Coordinates snapped to multiples of 1/8 keep every sum and product
/// exact, so threshold ties are decided identically by both sides.
fn coord(rng: &mut ChaCha8Rng, lo: f64, hi: f64, snapped: bool) -> f64 {
    let v = rng.gen_range(lo..hi);
    if snapped {
        (v * 8.0).round() / 8.0
    } else {
        v
    }
}

fn extent(rng: &mut ChaCha8Rng, snapped: bool) -> f64 {
    let v = coord(rng, 0.05, 1.2, snapped);
    if v <= 0.0 {
        0.125
    } else {
        v
    }
}

/// Up to 10 boxes in a 8 m room. Some boxes rest on, float above, or sit
/// inside earlier ones so every predicate occurs.
pub fn random_scene(rng: &mut ChaCha8Rng, snapped: bool) -> SceneGraph {
    let count = rng.gen_range(0..=10);
    let mut nodes: Vec<ObjectNode> = Vec::with_capacity(count);
    for id in 0..count as NodeId {
        let h = Vec3::new(
            extent(rng, snapped),
            extent(rng, snapped),
            extent(rng, snapped) / 2.0,
        );
        let mut c = Vec3::new(
            coord(rng, -4.0, 4.0, snapped),
            coord(rng, -4.0, 4.0, snapped),
            h.z,
        );
        if let Some(base) =
            (!nodes.is_empty()).then(|| nodes[rng.gen_range(0..nodes.len())].clone())
        {
            let jitter = |rng: &mut ChaCha8Rng| coord(rng, -0.5, 0.5, snapped);
            match rng.gen_range(0..5) {
                0 => {
                    c = Vec3::new(
                        base.centroid.x + jitter(rng),
                        base.centroid.y + jitter(rng),
                        base.centroid.z + base.half_extents.z + h.z,
                    );
                }
                1 => {
                    let lift = coord(rng, 0.0, 1.0, snapped);
                    c = Vec3::new(
                        base.centroid.x,
                        base.centroid.y,
                        base.centroid.z + base.half_extents.z + h.z + lift,
                    );
                }
                2 => {
                    let hx = base.half_extents.x / 2.0;
                    let hy = base.half_extents.y / 2.0;
                    let hz = base.half_extents.z / 2.0;
                    let inner = Vec3::new(hx, hy, hz);
                    let sink = if rng.gen_bool(0.5) { 0.0 } else { hz * 1.5 };
                    c = Vec3::new(base.centroid.x, base.centroid.y, base.centroid.z + sink);
                    nodes.push(ObjectNode::new(id, format!("item{id}"), c, inner));
                    continue;
                }
                _ => {}
            }
        }
        nodes.push(ObjectNode::new(id, format!("item{id}"), c, h));
    }
    SceneGraph::from_parts("random", nodes, vec![]).expect("generated nodes are valid")
}

pub fn random_pose(rng: &mut ChaCha8Rng) -> ViewerPose {
    ViewerPose::new(
        Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 1.6),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

fn aabb(n: &ObjectNode) -> Aabb {
    let c = [n.centroid.x, n.centroid.y, n.centroid.z];
    let h = [n.half_extents.x, n.half_extents.y, n.half_extents.z];
    Aabb {
        lo: [c[0] - h[0], c[1] - h[1], c[2] - h[2]],
        hi: [c[0] + h[0], c[1] + h[1], c[2] + h[2]],
    }
}

fn overlap(a: &Aabb, b: &Aabb, axis: usize) -> f64 {
    let lo = if a.lo[axis] > b.lo[axis] {
        a.lo[axis]
    } else {
        b.lo[axis]
    };
    let hi = if a.hi[axis] < b.hi[axis] {
        a.hi[axis]
    } else {
        b.hi[axis]
    };
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

fn separation(a: &Aabb, b: &Aabb, axis: usize) -> f64 {
    let d1 = a.lo[axis] - b.hi[axis];
    let d2 = b.lo[axis] - a.hi[axis];
    let d = if d1 > d2 { d1 } else { d2 };
    if d > 0.0 {
        d
    } else {
        0.0
    }
}

fn size(b: &Aabb, axis: usize) -> f64 {
    b.hi[axis] - b.lo[axis]
}

fn oracle_vertical(a: &ObjectNode, b: &ObjectNode, cfg: &RelationConfig) -> Option<Predicate> {
    let (ba, bb) = (aabb(a), aabb(b));
    let inter = overlap(&ba, &bb, 0) * overlap(&ba, &bb, 1) * overlap(&ba, &bb, 2);
    let vol_a = size(&ba, 0) * size(&ba, 1) * size(&ba, 2);
    let contained = inter / vol_a;
    let foot_a = size(&ba, 0) * size(&ba, 1);
    let foot_b = size(&bb, 0) * size(&bb, 1);
    let smaller = if foot_a < foot_b { foot_a } else { foot_b };
    let ratio = overlap(&ba, &bb, 0) * overlap(&ba, &bb, 1) / smaller;

    let mut found = Vec::new();
    if contained >= cfg.inside_min {
        found.push(Predicate::Inside);
    }
    if contained >= cfg.embed_min && contained < cfg.embed_max && overlap(&ba, &bb, 2) > 0.0 {
        found.push(Predicate::Embed);
    }
    let contact = (ba.hi[2] - bb.lo[2]).abs() <= cfg.contact_eps;
    if ratio >= cfg.overlap_min && contact && a.centroid.z < b.centroid.z {
        found.push(Predicate::Support);
    }
    if ratio >= cfg.overlap_min && ba.lo[2] - bb.hi[2] > cfg.contact_eps {
        found.push(Predicate::Above);
    }
    // precedence as listed: inside, embed, support, above
    found.first().copied()
}

/// Relations of one unordered pair `(a, b)` with `a.id < b.id`.
pub fn oracle_pair(
    a: &ObjectNode,
    b: &ObjectNode,
    cfg: &RelationConfig,
) -> BTreeSet<(NodeId, Predicate, NodeId)> {
    let mut out = BTreeSet::new();
    let (ba, bb) = (aabb(a), aabb(b));
    let dx = separation(&ba, &bb, 0);
    let dy = separation(&ba, &bb, 1);
    let gap = (dx * dx + dy * dy).sqrt();
    if gap <= cfg.close_max {
        out.insert((a.id, Predicate::Close, b.id));
    }
    if gap >= cfg.far_min {
        out.insert((a.id, Predicate::Far, b.id));
    }
    if let Some(p) = oracle_vertical(a, b, cfg) {
        out.insert((a.id, p, b.id));
    }
    if let Some(p) = oracle_vertical(b, a, cfg) {
        out.insert((b.id, p, a.id));
    }
    out
}
