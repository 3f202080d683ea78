//! Geometric relation inference over axis-aligned boxes, viewer-dependent
//! (allocentric) relations, and the verification pass that cleans an edge
//! set.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene_graph::{NodeId, ObjectNode, Predicate, SceneGraph, SpatialRelation, ViewerPose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationConfig {
    /// Max footprint gap (m) for `close`.
    pub close_max: f64,
    /// Min footprint gap (m) for `far`.
    pub far_min: f64,
    /// Vertical contact tolerance (m).
    pub contact_eps: f64,
    /// Min footprint intersection over the smaller footprint.
    pub overlap_min: f64,
    pub inside_min: f64,
    pub embed_min: f64,
    pub embed_max: f64,
    /// Half-width (rad) of the front and back sectors.
    pub sector_half_angle: f64,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            close_max: 1.5,
            far_min: 3.0,
            contact_eps: 0.05,
            overlap_min: 0.25,
            inside_min: 0.9,
            embed_min: 0.3,
            embed_max: 0.9,
            sector_half_angle: FRAC_PI_4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelationError {
    #[error("invalid relation config: {0}")]
    InvalidConfig(&'static str),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

impl RelationConfig {
    pub fn validate(&self) -> Result<(), RelationError> {
        let all_finite = [
            self.close_max,
            self.far_min,
            self.contact_eps,
            self.overlap_min,
            self.inside_min,
            self.embed_min,
            self.embed_max,
            self.sector_half_angle,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(RelationError::InvalidConfig("values must be finite"));
        }
        if self.close_max <= 0.0 || self.far_min <= 0.0 || self.contact_eps <= 0.0 {
            return Err(RelationError::InvalidConfig("distances must be positive"));
        }
        if self.close_max >= self.far_min {
            return Err(RelationError::InvalidConfig(
                "close_max must be below far_min",
            ));
        }
        if !(0.0..=1.0).contains(&self.overlap_min) {
            return Err(RelationError::InvalidConfig(
                "overlap_min must lie in [0, 1]",
            ));
        }
        if !(self.embed_min < self.embed_max && self.embed_max <= self.inside_min) {
            return Err(RelationError::InvalidConfig(
                "expected embed_min < embed_max <= inside_min",
            ));
        }
        if !(self.sector_half_angle > 0.0 && self.sector_half_angle < PI / 2.0) {
            return Err(RelationError::InvalidConfig(
                "sector_half_angle must lie in (0, pi/2)",
            ));
        }
        Ok(())
    }
}

/// Pairwise box measurements shared by inference and verification.
#[derive(Debug, Clone, Copy)]
struct PairGeometry {
    gap_xy: f64,
    /// Footprint intersection over the smaller footprint.
    overlap_ratio: f64,
    /// Intersection extent along z.
    overlap_z: f64,
    intersection_volume: f64,
}

fn interval_overlap(c1: f64, h1: f64, c2: f64, h2: f64) -> f64 {
    ((c1 + h1).min(c2 + h2) - (c1 - h1).max(c2 - h2)).max(0.0)
}

fn pair_geometry(a: &ObjectNode, b: &ObjectNode) -> PairGeometry {
    let (ca, ha, cb, hb) = (a.centroid, a.half_extents, b.centroid, b.half_extents);
    let dx = ((ca.x - cb.x).abs() - (ha.x + hb.x)).max(0.0);
    let dy = ((ca.y - cb.y).abs() - (ha.y + hb.y)).max(0.0);
    let ix = interval_overlap(ca.x, ha.x, cb.x, hb.x);
    let iy = interval_overlap(ca.y, ha.y, cb.y, hb.y);
    let iz = interval_overlap(ca.z, ha.z, cb.z, hb.z);
    let smaller_footprint = (4.0 * ha.x * ha.y).min(4.0 * hb.x * hb.y);
    PairGeometry {
        gap_xy: dx.hypot(dy),
        overlap_ratio: ix * iy / smaller_footprint,
        overlap_z: iz,
        intersection_volume: ix * iy * iz,
    }
}

fn volume(n: &ObjectNode) -> f64 {
    8.0 * n.half_extents.x * n.half_extents.y * n.half_extents.z
}

/// Horizontal gap between the footprints of two boxes, 0 when they overlap.
pub fn footprint_gap(a: &ObjectNode, b: &ObjectNode) -> f64 {
    pair_geometry(a, b).gap_xy
}

fn in_contact(lower: &ObjectNode, upper: &ObjectNode, cfg: &RelationConfig) -> bool {
    (lower.top() - upper.bottom()).abs() <= cfg.contact_eps
}

/// The vertical predicate for the ordered pair `(a, b)`, highest precedence
/// first: inside, embed, support, above.
fn vertical_predicate(a: &ObjectNode, b: &ObjectNode, cfg: &RelationConfig) -> Option<Predicate> {
    let geo = pair_geometry(a, b);
    let containment = geo.intersection_volume / volume(a);
    if containment >= cfg.inside_min {
        return Some(Predicate::Inside);
    }
    if containment >= cfg.embed_min && containment < cfg.embed_max && geo.overlap_z > 0.0 {
        return Some(Predicate::Embed);
    }
    let overlapping = geo.overlap_ratio >= cfg.overlap_min;
    if overlapping && in_contact(a, b, cfg) && a.centroid.z < b.centroid.z {
        return Some(Predicate::Support);
    }
    if overlapping && a.bottom() - b.top() > cfg.contact_eps {
        return Some(Predicate::Above);
    }
    None
}

/// Infers the stored relation set of a graph from node geometry. Output is
/// sorted and independent of node insertion order.
pub fn infer_relations(g: &SceneGraph, cfg: &RelationConfig) -> Vec<SpatialRelation> {
    let nodes: Vec<&ObjectNode> = g.nodes().collect();
    let mut out = BTreeSet::new();
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            let gap = footprint_gap(a, b);
            if gap <= cfg.close_max {
                out.insert(SpatialRelation::new(a.id, Predicate::Close, b.id));
            } else if gap >= cfg.far_min {
                out.insert(SpatialRelation::new(a.id, Predicate::Far, b.id));
            }
            for (s, o) in [(a, b), (b, a)] {
                if let Some(p) = vertical_predicate(s, o, cfg) {
                    out.insert(SpatialRelation::new(s.id, p, o.id));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Classifies where `other` lies relative to `subject` as seen with the
/// viewer's heading: both centroids go into the viewer frame and the
/// horizontal offset `other - subject` is binned into four sectors.
///
/// Returns `(predicate, other_id)` meaning "other is `predicate` of subject",
/// sorted by id. Nodes at the subject's horizontal position are omitted.
pub fn allocentric(
    viewer: &ViewerPose,
    subject_id: NodeId,
    g: &SceneGraph,
    cfg: &RelationConfig,
) -> Result<Vec<(Predicate, NodeId)>, RelationError> {
    let subject = g
        .get_node(subject_id)
        .ok_or(RelationError::UnknownNode(subject_id))?;
    let to_view = |n: &ObjectNode| view_frame(viewer, n.centroid.x, n.centroid.y);
    let (sx, sy) = to_view(subject);
    let mut out = Vec::new();
    for other in g.nodes().filter(|n| n.id != subject_id) {
        let (ox, oy) = to_view(other);
        let (lateral, forward) = (ox - sx, oy - sy);
        if lateral == 0.0 && forward == 0.0 {
            continue;
        }
        out.push((sector(lateral, forward, cfg.sector_half_angle), other.id));
    }
    Ok(out)
}

/// Viewer-frame horizontal coordinates: x to the viewer's right, y forward.
fn view_frame(viewer: &ViewerPose, x: f64, y: f64) -> (f64, f64) {
    let (dx, dy) = (x - viewer.position.x, y - viewer.position.y);
    let (sin, cos) = viewer.yaw().sin_cos();
    // rotate by -yaw
    (dx * cos + dy * sin, -dx * sin + dy * cos)
}

fn sector(right: f64, forward: f64, half_angle: f64) -> Predicate {
    // angle from the forward axis, positive to the left
    let theta = (-right).atan2(forward);
    if theta.abs() <= half_angle {
        Predicate::InFront
    } else if theta.abs() >= PI - half_angle {
        Predicate::Behind
    } else if theta > 0.0 {
        Predicate::Left
    } else {
        Predicate::Right
    }
}

/// All allocentric relations of the graph as `other predicate subject`
/// triples, sorted.
pub fn allocentric_all(
    viewer: &ViewerPose,
    g: &SceneGraph,
    cfg: &RelationConfig,
) -> Vec<SpatialRelation> {
    let mut out: Vec<SpatialRelation> = g
        .node_ids()
        .flat_map(|s| {
            allocentric(viewer, s, g, cfg)
                .unwrap_or_default()
                .into_iter()
                .map(move |(p, o)| SpatialRelation::new(o, p, s))
        })
        .collect();
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    SelfRelation,
    NotStorable,
    DanglingEndpoint,
    Duplicate,
    LowerPrecedence,
    ContradictoryAbove,
    ProximityConflict,
    NoContact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub relation: SpatialRelation,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub removed: Vec<Removal>,
}

impl VerifyReport {
    fn drop(&mut self, relation: SpatialRelation, reason: RemovalReason) {
        self.removed.push(Removal { relation, reason });
    }

    pub fn is_clean(&self) -> bool {
        self.removed.is_empty()
    }
}

/// Cleans a relation set against the graph geometry. Rules, in order:
/// self-relations; non-storable predicates and dangling endpoints;
/// duplicate triples; one vertical predicate per ordered pair; mutual
/// `above`; `close` together with `far`; `support` without contact.
pub fn verify(
    relations: &[SpatialRelation],
    g: &SceneGraph,
    cfg: &RelationConfig,
) -> (Vec<SpatialRelation>, VerifyReport) {
    verify_anchored(relations, g, cfg, None)
}

/// Like [`verify`], but `anchor` wins every conflict it takes part in and
/// is exempt from the geometric contact check. Used when a relation is
/// asserted by the user.
pub fn verify_anchored(
    relations: &[SpatialRelation],
    g: &SceneGraph,
    cfg: &RelationConfig,
    anchor: Option<SpatialRelation>,
) -> (Vec<SpatialRelation>, VerifyReport) {
    let anchor = anchor.map(SpatialRelation::canonical);
    let is_anchor = |r: &SpatialRelation| Some(*r) == anchor;
    let mut report = VerifyReport::default();

    let mut staged = Vec::with_capacity(relations.len());
    for &rel in relations {
        if rel.subject == rel.object {
            report.drop(rel, RemovalReason::SelfRelation);
        } else {
            staged.push(rel);
        }
    }

    let mut kept = BTreeSet::new();
    for rel in staged {
        if rel.predicate.is_allocentric() {
            report.drop(rel, RemovalReason::NotStorable);
            continue;
        }
        if !g.contains_node(rel.subject) || !g.contains_node(rel.object) {
            report.drop(rel, RemovalReason::DanglingEndpoint);
            continue;
        }
        if !kept.insert(rel.canonical()) {
            report.drop(rel, RemovalReason::Duplicate);
        }
    }

    // one vertical predicate per ordered pair
    let mut best: BTreeMap<(NodeId, NodeId), SpatialRelation> = BTreeMap::new();
    for rel in kept.iter().filter(|r| r.predicate.is_vertical()) {
        let key = (rel.subject, rel.object);
        let better = match best.get(&key) {
            None => true,
            Some(cur) if is_anchor(cur) => false,
            Some(cur) => {
                is_anchor(rel) || rel.predicate.vertical_rank() < cur.predicate.vertical_rank()
            }
        };
        if better {
            best.insert(key, *rel);
        }
    }
    let losers: Vec<SpatialRelation> = kept
        .iter()
        .filter(|r| r.predicate.is_vertical() && best.get(&(r.subject, r.object)) != Some(r))
        .copied()
        .collect();
    for rel in losers {
        kept.remove(&rel);
        report.drop(rel, RemovalReason::LowerPrecedence);
    }

    // mutual above, judged against the set before this rule runs
    let mutual: Vec<SpatialRelation> = kept
        .iter()
        .filter(|r| r.predicate == Predicate::Above)
        .filter(|r| kept.contains(&SpatialRelation::new(r.object, Predicate::Above, r.subject)))
        .copied()
        .collect();
    for rel in mutual {
        let reverse = SpatialRelation::new(rel.object, Predicate::Above, rel.subject);
        let drop = if is_anchor(&rel) {
            false
        } else if is_anchor(&reverse) {
            true
        } else {
            let (a, b) = (node(g, rel.subject), node(g, rel.object));
            a.centroid.z <= b.centroid.z
        };
        if drop {
            kept.remove(&rel);
            report.drop(rel, RemovalReason::ContradictoryAbove);
        }
    }

    // close and far on the same pair
    let conflicted: Vec<(NodeId, NodeId)> = kept
        .iter()
        .filter(|r| r.predicate == Predicate::Close)
        .filter(|r| kept.contains(&SpatialRelation::new(r.subject, Predicate::Far, r.object)))
        .map(|r| (r.subject, r.object))
        .collect();
    for (a, b) in conflicted {
        let close = SpatialRelation::new(a, Predicate::Close, b);
        let far = SpatialRelation::new(a, Predicate::Far, b);
        let gap = footprint_gap(node(g, a), node(g, b));
        let (drop_close, drop_far) = if is_anchor(&close) {
            (false, true)
        } else if is_anchor(&far) {
            (true, false)
        } else if gap <= cfg.close_max {
            (false, true)
        } else if gap >= cfg.far_min {
            (true, false)
        } else {
            (true, true)
        };
        for (rel, dropped) in [(close, drop_close), (far, drop_far)] {
            if dropped {
                kept.remove(&rel);
                report.drop(rel, RemovalReason::ProximityConflict);
            }
        }
    }

    let detached: Vec<SpatialRelation> = kept
        .iter()
        .filter(|r| r.predicate == Predicate::Support && !is_anchor(r))
        .filter(|r| !in_contact(node(g, r.subject), node(g, r.object), cfg))
        .copied()
        .collect();
    for rel in detached {
        kept.remove(&rel);
        report.drop(rel, RemovalReason::NoContact);
    }

    (kept.into_iter().collect(), report)
}

fn node(g: &SceneGraph, id: NodeId) -> &ObjectNode {
    g.get_node(id)
        .expect("endpoint checked during verification")
}
