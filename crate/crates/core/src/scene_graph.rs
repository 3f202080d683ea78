//! Object-level 3D scene graph: nodes are object instances with an
//! axis-aligned box and free-text attributes, edges are stored spatial
//! relations. All reads and writes of a graph go through [`SceneGraph`].

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

/// A point or vector in the scene frame (meters, z up).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn add(&self, other: &Vec3) -> Vec3 {
        Vec3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

/// The five attribute categories an object may carry, in rendering order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeCategory {
    Color,
    Texture,
    Shape,
    Material,
    Affordance,
}

impl AttributeCategory {
    pub const ALL: [AttributeCategory; 5] = [
        AttributeCategory::Color,
        AttributeCategory::Texture,
        AttributeCategory::Shape,
        AttributeCategory::Material,
        AttributeCategory::Affordance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeCategory::Color => "color",
            AttributeCategory::Texture => "texture",
            AttributeCategory::Shape => "shape",
            AttributeCategory::Material => "material",
            AttributeCategory::Affordance => "affordance",
        }
    }
}

impl fmt::Display for AttributeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributeCategory {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttributeCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| GraphError::UnknownAttributeCategory(s.to_string()))
    }
}

pub type Attributes = BTreeMap<AttributeCategory, Vec<String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: NodeId,
    pub label: String,
    pub centroid: Vec3,
    pub half_extents: Vec3,
    #[serde(default)]
    pub attributes: Attributes,
}

impl ObjectNode {
    pub fn new(id: NodeId, label: impl Into<String>, centroid: Vec3, half_extents: Vec3) -> Self {
        Self {
            id,
            label: label.into(),
            centroid,
            half_extents,
            attributes: Attributes::new(),
        }
    }

    pub fn with_attribute(mut self, category: AttributeCategory, values: &[&str]) -> Self {
        self.attributes
            .insert(category, values.iter().map(|v| v.to_string()).collect());
        self
    }

    pub fn min_corner(&self) -> Vec3 {
        Vec3::new(
            self.centroid.x - self.half_extents.x,
            self.centroid.y - self.half_extents.y,
            self.centroid.z - self.half_extents.z,
        )
    }

    pub fn max_corner(&self) -> Vec3 {
        Vec3::new(
            self.centroid.x + self.half_extents.x,
            self.centroid.y + self.half_extents.y,
            self.centroid.z + self.half_extents.z,
        )
    }

    pub fn top(&self) -> f64 {
        self.centroid.z + self.half_extents.z
    }

    pub fn bottom(&self) -> f64 {
        self.centroid.z - self.half_extents.z
    }

    /// Inclusive point-in-box test.
    pub fn contains_point(&self, p: &Vec3) -> bool {
        (p.x - self.centroid.x).abs() <= self.half_extents.x
            && (p.y - self.centroid.y).abs() <= self.half_extents.y
            && (p.z - self.centroid.z).abs() <= self.half_extents.z
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let invalid = |reason: &str| GraphError::InvalidNode {
            id: self.id,
            reason: reason.to_string(),
        };
        if self.label.trim().is_empty() {
            return Err(invalid("label must be non-empty"));
        }
        if self.label != self.label.to_lowercase() {
            return Err(invalid("label must be lowercase"));
        }
        if !self.centroid.is_finite() {
            return Err(invalid("centroid must be finite"));
        }
        let h = self.half_extents;
        if !(h.is_finite() && h.x > 0.0 && h.y > 0.0 && h.z > 0.0) {
            return Err(invalid("half_extents must be strictly positive"));
        }
        Ok(())
    }
}

/// Relation predicates. The first six are the only ones ever stored; the
/// inverse and viewer-dependent ones exist only at read time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Close,
    Far,
    Support,
    Inside,
    Embed,
    Above,
    Below,
    SupportedBy,
    Contains,
    Left,
    Right,
    InFront,
    Behind,
}

impl Predicate {
    pub const STORED: [Predicate; 6] = [
        Predicate::Close,
        Predicate::Far,
        Predicate::Support,
        Predicate::Inside,
        Predicate::Embed,
        Predicate::Above,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Close => "close",
            Predicate::Far => "far",
            Predicate::Support => "support",
            Predicate::Inside => "inside",
            Predicate::Embed => "embed",
            Predicate::Above => "above",
            Predicate::Below => "below",
            Predicate::SupportedBy => "supported_by",
            Predicate::Contains => "contains",
            Predicate::Left => "left",
            Predicate::Right => "right",
            Predicate::InFront => "in_front",
            Predicate::Behind => "behind",
        }
    }

    pub fn is_stored(self) -> bool {
        Self::STORED.contains(&self)
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Predicate::Close | Predicate::Far)
    }

    pub fn is_vertical(self) -> bool {
        matches!(
            self,
            Predicate::Inside | Predicate::Embed | Predicate::Support | Predicate::Above
        )
    }

    pub fn is_allocentric(self) -> bool {
        matches!(
            self,
            Predicate::Left | Predicate::Right | Predicate::InFront | Predicate::Behind
        )
    }

    /// Read-time inverse of a stored vertical predicate.
    pub fn inverse(self) -> Option<Predicate> {
        match self {
            Predicate::Above => Some(Predicate::Below),
            Predicate::Support => Some(Predicate::SupportedBy),
            Predicate::Inside => Some(Predicate::Contains),
            Predicate::Below => Some(Predicate::Above),
            Predicate::SupportedBy => Some(Predicate::Support),
            Predicate::Contains => Some(Predicate::Inside),
            _ => None,
        }
    }

    /// Vertical precedence rank, lower wins: inside > embed > support > above.
    pub fn vertical_rank(self) -> Option<u8> {
        match self {
            Predicate::Inside => Some(0),
            Predicate::Embed => Some(1),
            Predicate::Support => Some(2),
            Predicate::Above => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Predicate {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        const ALL: [Predicate; 13] = [
            Predicate::Close,
            Predicate::Far,
            Predicate::Support,
            Predicate::Inside,
            Predicate::Embed,
            Predicate::Above,
            Predicate::Below,
            Predicate::SupportedBy,
            Predicate::Contains,
            Predicate::Left,
            Predicate::Right,
            Predicate::InFront,
            Predicate::Behind,
        ];
        ALL.into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| GraphError::UnknownPredicate(s.to_string()))
    }
}

/// A directed, labeled relation `subject predicate object`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpatialRelation {
    pub subject: NodeId,
    pub predicate: Predicate,
    pub object: NodeId,
}

impl SpatialRelation {
    pub fn new(subject: NodeId, predicate: Predicate, object: NodeId) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }

    /// Symmetric predicates are stored with the smaller id as subject;
    /// inverse predicates are flipped onto their stored counterpart.
    pub fn canonical(self) -> Self {
        if self.predicate.is_symmetric() && self.subject > self.object {
            return Self::new(self.object, self.predicate, self.subject);
        }
        match self.predicate {
            Predicate::Below | Predicate::SupportedBy | Predicate::Contains => {
                let stored = self.predicate.inverse().expect("inverse predicate");
                Self::new(self.object, stored, self.subject)
            }
            _ => self,
        }
    }

    pub fn touches(&self, id: NodeId) -> bool {
        self.subject == id || self.object == id
    }

    /// Unordered endpoint pair.
    pub fn pair(&self) -> (NodeId, NodeId) {
        (self.subject.min(self.object), self.subject.max(self.object))
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// Viewer position and heading. Yaw is counterclockwise about z with 0
/// facing +y, kept in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViewerPose {
    pub position: Vec3,
    yaw: f64,
}

impl ViewerPose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("node id {0} already exists")]
    DuplicateId(NodeId),
    #[error("node id {0} was deleted and cannot be reused")]
    RetiredId(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("invalid node {id}: {reason}")]
    InvalidNode { id: NodeId, reason: String },
    #[error("self-relation on node {0} is not allowed")]
    SelfRelation(NodeId),
    #[error("predicate '{0}' cannot be stored")]
    NonCanonicalPredicate(Predicate),
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("unknown attribute category '{0}'")]
    UnknownAttributeCategory(String),
    #[error("dangling edge {0}: endpoint missing")]
    DanglingEdge(SpatialRelation),
    #[error("symmetric edge {0} must have subject < object")]
    NonCanonicalSymmetric(SpatialRelation),
}

/// One mutation of a [`SceneGraph`].
#[derive(Debug, Clone, PartialEq)]
pub enum GraphChange {
    SetLabel(NodeId, String),
    SetAttributes(NodeId, AttributeCategory, Vec<String>),
    InsertEdge(SpatialRelation),
    RemoveEdge(SpatialRelation),
    RemoveNode(NodeId),
}

#[derive(Debug, Clone, Default)]
pub struct SceneGraph {
    scene_id: String,
    nodes: BTreeMap<NodeId, ObjectNode>,
    edges: BTreeSet<SpatialRelation>,
    revision: u64,
    retired: BTreeSet<NodeId>,
}

impl SceneGraph {
    pub fn new(scene_id: impl Into<String>) -> Self {
        Self {
            scene_id: scene_id.into(),
            ..Default::default()
        }
    }

    /// Builds a graph at revision 0 from nodes and stored edges, checking
    /// every invariant. Symmetric edges are canonicalized.
    pub fn from_parts(
        scene_id: impl Into<String>,
        nodes: impl IntoIterator<Item = ObjectNode>,
        edges: impl IntoIterator<Item = SpatialRelation>,
    ) -> Result<Self, GraphError> {
        let mut g = SceneGraph::new(scene_id);
        for node in nodes {
            g.add_node(node)?;
        }
        for edge in edges {
            let edge = g.check_edge(edge)?;
            g.edges.insert(edge);
        }
        g.revision = 0;
        Ok(g)
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn set_scene_id(&mut self, scene_id: impl Into<String>) {
        self.scene_id = scene_id.into();
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ObjectNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = &SpatialRelation> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn contains_edge(&self, rel: &SpatialRelation) -> bool {
        self.edges.contains(&rel.canonical())
    }

    pub fn get_node(&self, id: NodeId) -> Option<&ObjectNode> {
        self.nodes.get(&id)
    }

    pub fn add_node(&mut self, node: ObjectNode) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        if self.retired.contains(&node.id) {
            return Err(GraphError::RetiredId(node.id));
        }
        node.validate()?;
        self.nodes.insert(node.id, node);
        self.revision += 1;
        Ok(())
    }

    /// Stored edges touching `id`, sorted. With `include_inverses`, edges in
    /// which `id` is the object of an invertible predicate are also returned
    /// rewritten from `id`'s side (above/below, support/supported_by,
    /// inside/contains).
    pub fn edges_of(
        &self,
        id: NodeId,
        include_inverses: bool,
    ) -> Result<Vec<SpatialRelation>, GraphError> {
        if !self.contains_node(id) {
            return Err(GraphError::UnknownNode(id));
        }
        let stored: Vec<SpatialRelation> = self
            .edges
            .iter()
            .filter(|e| e.touches(id))
            .copied()
            .collect();
        let mut out = stored.clone();
        if include_inverses {
            out.extend(stored.iter().filter(|e| e.object == id).filter_map(|e| {
                e.predicate
                    .inverse()
                    .map(|inv| SpatialRelation::new(id, inv, e.subject))
            }));
        }
        Ok(out)
    }

    /// Stored edges between two nodes, either direction.
    pub fn edges_between(&self, a: NodeId, b: NodeId) -> Vec<SpatialRelation> {
        self.edges
            .iter()
            .filter(|e| e.pair() == (a.min(b), a.max(b)))
            .copied()
            .collect()
    }

    /// Checks a relation against the stored-edge invariants and returns its
    /// canonical form.
    pub fn check_edge(&self, rel: SpatialRelation) -> Result<SpatialRelation, GraphError> {
        if rel.subject == rel.object {
            return Err(GraphError::SelfRelation(rel.subject));
        }
        if !rel.predicate.is_stored() {
            return Err(GraphError::NonCanonicalPredicate(rel.predicate));
        }
        for id in [rel.subject, rel.object] {
            if !self.contains_node(id) {
                return Err(GraphError::UnknownNode(id));
            }
        }
        Ok(rel.canonical())
    }

    /// Applies one change. Returns whether the graph changed; no-op changes
    /// (inserting a present edge, removing an absent one) leave the revision
    /// untouched.
    pub fn mutate(&mut self, change: GraphChange) -> Result<bool, GraphError> {
        let changed = match change {
            GraphChange::SetLabel(id, label) => {
                let node = self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))?;
                let mut updated = node.clone();
                updated.label = label;
                updated.validate()?;
                self.nodes.insert(id, updated);
                true
            }
            GraphChange::SetAttributes(id, category, values) => {
                let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
                if values.is_empty() {
                    node.attributes.remove(&category);
                } else {
                    node.attributes.insert(category, values);
                }
                true
            }
            GraphChange::InsertEdge(rel) => {
                let rel = self.check_edge(rel)?;
                self.edges.insert(rel)
            }
            GraphChange::RemoveEdge(rel) => {
                if rel.subject == rel.object {
                    return Err(GraphError::SelfRelation(rel.subject));
                }
                for id in [rel.subject, rel.object] {
                    if !self.contains_node(id) {
                        return Err(GraphError::UnknownNode(id));
                    }
                }
                self.edges.remove(&rel.canonical())
            }
            GraphChange::RemoveNode(id) => {
                if self.nodes.remove(&id).is_none() {
                    return Err(GraphError::UnknownNode(id));
                }
                self.edges.retain(|e| !e.touches(id));
                self.retired.insert(id);
                true
            }
        };
        if changed {
            self.revision += 1;
        }
        Ok(changed)
    }

    /// Full invariant check over nodes and edges.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (id, node) in &self.nodes {
            if *id != node.id {
                return Err(GraphError::InvalidNode {
                    id: node.id,
                    reason: format!("stored under key {id}"),
                });
            }
            node.validate()?;
        }
        for edge in &self.edges {
            if edge.subject == edge.object {
                return Err(GraphError::SelfRelation(edge.subject));
            }
            if !edge.predicate.is_stored() {
                return Err(GraphError::NonCanonicalPredicate(edge.predicate));
            }
            if edge.predicate.is_symmetric() && edge.subject > edge.object {
                return Err(GraphError::NonCanonicalSymmetric(*edge));
            }
            if !self.contains_node(edge.subject) || !self.contains_node(edge.object) {
                return Err(GraphError::DanglingEdge(*edge));
            }
        }
        Ok(())
    }

    /// Equality of scene id, nodes and edges; ignores revision history.
    pub fn content_eq(&self, other: &SceneGraph) -> bool {
        self.scene_id == other.scene_id && self.nodes == other.nodes && self.edges == other.edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: NodeId, label: &str, x: f64) -> ObjectNode {
        ObjectNode::new(id, label, Vec3::new(x, 0.0, 0.5), Vec3::new(0.5, 0.5, 0.5))
    }

    fn three_nodes() -> SceneGraph {
        let mut g = SceneGraph::new("t");
        for (id, label) in [(1, "table"), (2, "mug"), (3, "lamp")] {
            g.add_node(unit(id, label, id as f64 * 2.0)).unwrap();
        }
        g
    }

    #[test]
    fn add_node_bumps_revision() {
        let mut g = SceneGraph::new("t");
        g.add_node(unit(0, "box", 0.0)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.revision(), 1);
    }

    #[test]
    fn add_duplicate_is_rejected() {
        let mut g = SceneGraph::new("t");
        g.add_node(unit(0, "box", 0.0)).unwrap();
        let err = g.add_node(unit(0, "box", 1.0)).unwrap_err();
        assert_eq!(err, GraphError::DuplicateId(0));
        assert!(err.to_string().contains('0'));
        assert_eq!(g.revision(), 1);
    }

    #[test]
    fn node_validation() {
        let bad = ObjectNode::new(1, "box", Vec3::default(), Vec3::new(0.1, 0.0, 0.1));
        assert!(matches!(
            bad.validate(),
            Err(GraphError::InvalidNode { .. })
        ));
        let upper = ObjectNode::new(1, "Box", Vec3::default(), Vec3::new(0.1, 0.1, 0.1));
        assert!(upper.validate().is_err());
        let empty = ObjectNode::new(1, " ", Vec3::default(), Vec3::new(0.1, 0.1, 0.1));
        assert!(empty.validate().is_err());
    }

    #[test]
    fn get_node_absent_and_after_delete() {
        let mut g = three_nodes();
        assert!(g.get_node(999).is_none());
        assert!(g.get_node(3).is_some());
        g.mutate(GraphChange::RemoveNode(3)).unwrap();
        assert!(g.get_node(3).is_none());
        assert_eq!(
            g.add_node(unit(3, "lamp", 0.0)),
            Err(GraphError::RetiredId(3))
        );
    }

    #[test]
    fn edges_of_with_inverse() {
        let mut g = three_nodes();
        g.mutate(GraphChange::InsertEdge(SpatialRelation::new(
            1,
            Predicate::Support,
            2,
        )))
        .unwrap();
        assert_eq!(
            g.edges_of(2, true).unwrap(),
            vec![
                SpatialRelation::new(1, Predicate::Support, 2),
                SpatialRelation::new(2, Predicate::SupportedBy, 1),
            ]
        );
        assert_eq!(g.edges_of(2, false).unwrap().len(), 1);
        assert!(g.edges_of(3, true).unwrap().is_empty());
        assert_eq!(g.edges_of(42, true), Err(GraphError::UnknownNode(42)));
    }

    #[test]
    fn symmetric_edges_are_returned_once() {
        let mut g = three_nodes();
        g.mutate(GraphChange::InsertEdge(SpatialRelation::new(
            3,
            Predicate::Close,
            2,
        )))
        .unwrap();
        let a = g.edges_of(3, true).unwrap();
        assert_eq!(a, vec![SpatialRelation::new(2, Predicate::Close, 3)]);
        assert_eq!(g.edges_of(2, true).unwrap(), a);
    }

    #[test]
    fn mutate_label_and_errors() {
        let mut g = three_nodes();
        let rev = g.revision();
        g.mutate(GraphChange::SetLabel(2, "coffee mug".into()))
            .unwrap();
        assert_eq!(g.get_node(2).unwrap().label, "coffee mug");
        assert_eq!(g.revision(), rev + 1);

        let self_rel = SpatialRelation::new(2, Predicate::Above, 2);
        assert_eq!(
            g.mutate(GraphChange::InsertEdge(self_rel)),
            Err(GraphError::SelfRelation(2))
        );
        let left = SpatialRelation::new(1, Predicate::Left, 2);
        assert_eq!(
            g.mutate(GraphChange::InsertEdge(left)),
            Err(GraphError::NonCanonicalPredicate(Predicate::Left))
        );
        assert_eq!(
            g.mutate(GraphChange::SetLabel(9, "x".into())),
            Err(GraphError::UnknownNode(9))
        );
        assert_eq!(g.revision(), rev + 1);
    }

    #[test]
    fn inverse_predicates_are_not_stored() {
        let mut g = three_nodes();
        assert_eq!(
            g.mutate(GraphChange::InsertEdge(SpatialRelation::new(
                2,
                Predicate::Below,
                1
            ))),
            Err(GraphError::NonCanonicalPredicate(Predicate::Below))
        );
        let below = SpatialRelation::new(2, Predicate::Below, 1).canonical();
        assert_eq!(below, SpatialRelation::new(1, Predicate::Above, 2));
    }

    #[test]
    fn remove_node_cascades() {
        let mut g = three_nodes();
        for rel in [
            SpatialRelation::new(1, Predicate::Support, 3),
            SpatialRelation::new(2, Predicate::Close, 3),
            SpatialRelation::new(1, Predicate::Far, 2),
        ] {
            g.mutate(GraphChange::InsertEdge(rel)).unwrap();
        }
        g.mutate(GraphChange::RemoveNode(3)).unwrap();
        assert!(g.get_node(3).is_none());
        assert_eq!(g.edge_count(), 1);
        g.validate().unwrap();
    }

    #[test]
    fn noop_changes_keep_revision() {
        let mut g = three_nodes();
        let rel = SpatialRelation::new(1, Predicate::Close, 2);
        assert!(g.mutate(GraphChange::InsertEdge(rel)).unwrap());
        let rev = g.revision();
        assert!(!g.mutate(GraphChange::InsertEdge(rel)).unwrap());
        assert!(!g
            .mutate(GraphChange::RemoveEdge(SpatialRelation::new(
                1,
                Predicate::Far,
                2
            )))
            .unwrap());
        assert_eq!(g.revision(), rev);
        let _ = g.edges_of(1, true).unwrap();
        assert_eq!(g.revision(), rev);
    }

    #[test]
    fn yaw_normalization() {
        assert_eq!(ViewerPose::new(Vec3::default(), PI).yaw(), -PI);
        assert!((ViewerPose::new(Vec3::default(), 3.0 * PI / 2.0).yaw() + PI / 2.0).abs() < 1e-12);
        assert_eq!(ViewerPose::new(Vec3::default(), 0.25).yaw(), 0.25);
    }
}
