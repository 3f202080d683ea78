//! The agent toolset: five reasoning tools, four alignment tools and two
//! response tools. Each tool returns a machine payload plus the rendered
//! observation the agent sees next.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::graph_text::{
    attribute_text, relation_sentence, render_objects, render_relations, RenderedObservation,
};
use crate::scene_graph::{
    AttributeCategory, GraphChange, GraphError, NodeId, ObjectNode, Predicate, SceneGraph,
    SpatialRelation, Vec3, ViewerPose,
};
use crate::spatial::{allocentric, verify_anchored, RelationConfig};

/// A user mark: a node picked in the graph panel or a point picked in the
/// scene view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Click {
    Node { object_id: NodeId },
    Point { point: Vec3 },
}

impl Click {
    pub fn is_valid(&self) -> bool {
        match self {
            Click::Node { .. } => true,
            Click::Point { point } => point.is_finite(),
        }
    }
}

impl fmt::Display for Click {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Click::Node { object_id } => write!(f, "object id {object_id}"),
            Click::Point { point } => write!(f, "point {}", format_point(point)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub id: NodeId,
    pub label: String,
    pub centroid: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ToolPayload {
    Objects(Vec<ObjectNode>),
    Object(ObjectNode),
    Relations(Vec<SpatialRelation>),
    Point(Vec3),
    Highlights(Vec<Highlight>),
    Answer(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub payload: ToolPayload,
    pub observation: RenderedObservation,
    pub graph_changed: bool,
}

impl ToolResult {
    fn read(payload: ToolPayload, observation: RenderedObservation) -> Self {
        Self {
            payload,
            observation,
            graph_changed: false,
        }
    }
}

/// Tool failures. The display text is what the agent observes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToolError {
    #[error("No object is currently marked.")]
    NoMark,
    #[error("Error: the marked point is not a finite coordinate.")]
    InvalidMark,
    #[error("Error: there is no object with id {0}.")]
    UnknownObject(NodeId),
    #[error("Error: the scene graph contains no objects.")]
    EmptyGraph,
    #[error("Error: calculate_mid_point needs at least one point.")]
    NoPoints,
    #[error("Error: got {names} names for {objects} objects; the lists must have equal length.")]
    LengthMismatch { names: usize, objects: usize },
    #[error("Error: object names must not be empty.")]
    EmptyName,
    #[error("Error: cannot parse attribute '{0}'. Use 'category: value' with category one of color, texture, shape, material, affordance.")]
    UnparseableAttribute(String),
    #[error(
        "Error: '{0}' is viewer-dependent; viewer-dependent relations are computed, not stored."
    )]
    AllocentricRelation(String),
    #[error("Error: unknown relation '{0}'. Use one of: close, far, support, on, inside, contains, embed, above, below.")]
    UnknownRelation(String),
    #[error("Error: an object cannot be related to itself (id {0}).")]
    SelfRelation(NodeId),
    #[error("Error: invalid input for {tool}: {message}")]
    BadInput { tool: ToolName, message: String },
    #[error("Error: {0}")]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    QueryForObjects,
    QueryForRelations,
    FindMarkedObject,
    CalculateMidPoint,
    FindObjectClosest,
    UpdateName,
    UpdateAttributes,
    AddRelation,
    DeleteRelation,
    PostProcess,
    FinalAnswer,
}

impl ToolName {
    pub const ALL: [ToolName; 11] = [
        ToolName::QueryForObjects,
        ToolName::QueryForRelations,
        ToolName::FindMarkedObject,
        ToolName::CalculateMidPoint,
        ToolName::FindObjectClosest,
        ToolName::UpdateName,
        ToolName::UpdateAttributes,
        ToolName::AddRelation,
        ToolName::DeleteRelation,
        ToolName::PostProcess,
        ToolName::FinalAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        self.descriptor().name
    }

    /// Whether the tool may change the graph.
    pub fn is_update(self) -> bool {
        matches!(
            self,
            ToolName::UpdateName
                | ToolName::UpdateAttributes
                | ToolName::AddRelation
                | ToolName::DeleteRelation
        )
    }

    pub fn descriptor(self) -> &'static ToolDescriptor {
        &DESCRIPTORS[self as usize]
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Text,
    TextList,
    Id,
    IdList,
    Point,
    PointList,
}

impl ParamKind {
    pub fn type_name(self) -> &'static str {
        match self {
            ParamKind::Text => "string",
            ParamKind::TextList => "list[string]",
            ParamKind::Id => "integer",
            ParamKind::IdList => "list[integer]",
            ParamKind::Point => "point [x, y, z]",
            ParamKind::PointList => "list[point]",
        }
    }

    /// Shallow JSON type check.
    pub fn accepts(self, value: &Value) -> bool {
        let is_id = |v: &Value| v.as_u64().is_some_and(|n| n <= u64::from(NodeId::MAX));
        let is_point = |v: &Value| {
            v.as_array()
                .is_some_and(|a| a.len() == 3 && a.iter().all(|c| c.as_f64().is_some()))
        };
        match self {
            ParamKind::Text => value.is_string(),
            ParamKind::TextList => value
                .as_array()
                .is_some_and(|a| a.iter().all(Value::is_string)),
            ParamKind::Id => is_id(value),
            ParamKind::IdList => value.as_array().is_some_and(|a| a.iter().all(is_id)),
            ParamKind::Point => is_point(value),
            ParamKind::PointList => value.as_array().is_some_and(|a| a.iter().all(is_point)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
}

/// Machine-readable tool signature, used in prompts and exported by the
/// service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToolDescriptor {
    pub name: &'static str,
    pub params: &'static [ParamSpec],
    pub returns: &'static str,
    pub description: &'static str,
}

impl ToolDescriptor {
    /// `name(param: type, ...) -> returns: description`
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{}: {}", p.name, p.kind.type_name()))
            .collect();
        format!(
            "{}({}) -> {}: {}",
            self.name,
            params.join(", "),
            self.returns,
            self.description
        )
    }
}

const fn param(name: &'static str, kind: ParamKind) -> ParamSpec {
    ParamSpec { name, kind }
}

static DESCRIPTORS: [ToolDescriptor; 11] = [
    ToolDescriptor {
        name: "query_for_objects",
        params: &[param("query", ParamKind::Text)],
        returns: "List[Object]",
        description: "Find the objects whose labels and attributes match a text query.",
    },
    ToolDescriptor {
        name: "query_for_relations",
        params: &[param("object_ids", ParamKind::IdList)],
        returns: "List[Relation]",
        description: "List the stored relations that involve the given objects.",
    },
    ToolDescriptor {
        name: "find_marked_object",
        params: &[],
        returns: "Object",
        description: "Describe the object the user last clicked.",
    },
    ToolDescriptor {
        name: "calculate_mid_point",
        params: &[param("points", ParamKind::PointList)],
        returns: "Point",
        description: "Average a list of points.",
    },
    ToolDescriptor {
        name: "find_object_closest",
        params: &[param("point", ParamKind::Point)],
        returns: "Object",
        description: "Find the object whose center is nearest to a point.",
    },
    ToolDescriptor {
        name: "update_name",
        params: &[
            param("names", ParamKind::TextList),
            param("object_ids", ParamKind::IdList),
        ],
        returns: "List[Object]",
        description: "Rename objects, one new label per id.",
    },
    ToolDescriptor {
        name: "update_attributes",
        params: &[
            param("object_id", ParamKind::Id),
            param("attributes", ParamKind::TextList),
        ],
        returns: "Object",
        description: "Set attribute values on an object.",
    },
    ToolDescriptor {
        name: "add_relation",
        params: &[
            param("subject_id", ParamKind::Id),
            param("object_id", ParamKind::Id),
            param("relation", ParamKind::Text),
        ],
        returns: "List[Relation]",
        description: "Store a relation between two objects.",
    },
    ToolDescriptor {
        name: "delete_relation",
        params: &[
            param("subject_id", ParamKind::Id),
            param("object_id", ParamKind::Id),
            param("relation", ParamKind::Text),
        ],
        returns: "List[Relation]",
        description: "Delete a stored relation between two objects.",
    },
    ToolDescriptor {
        name: "post_process",
        params: &[param("object_ids", ParamKind::IdList)],
        returns: "List[Object]",
        description: "Choose the objects to highlight for the user.",
    },
    ToolDescriptor {
        name: "final_answer",
        params: &[param("answer", ParamKind::Text)],
        returns: "String",
        description: "Give the answer shown to the user and end the turn.",
    },
];

pub fn descriptors() -> &'static [ToolDescriptor] {
    &DESCRIPTORS
}

fn format_point(p: &Vec3) -> String {
    format!("({}, {}, {})", p.x, p.y, p.z)
}

fn node(g: &SceneGraph, id: NodeId) -> Result<&ObjectNode, ToolError> {
    g.get_node(id).ok_or(ToolError::UnknownObject(id))
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Equal up to a trailing plural `s` or `es`.
fn word_matches(a: &str, b: &str) -> bool {
    fn plural_of(plural: &str, singular: &str) -> bool {
        plural
            .strip_prefix(singular)
            .is_some_and(|rest| rest == "s" || rest == "es")
    }
    a == b || plural_of(a, b) || plural_of(b, a)
}

pub fn query_for_objects(query: &str, g: &SceneGraph) -> ToolResult {
    let tokens = tokenize(query);
    let mut candidates: Vec<&ObjectNode> = g
        .nodes()
        .filter(|n| {
            let label = tokenize(&n.label);
            !label.is_empty()
                && label
                    .iter()
                    .all(|l| tokens.iter().any(|t| word_matches(t, l)))
        })
        .collect();

    let label_words: BTreeSet<String> =
        candidates.iter().flat_map(|n| tokenize(&n.label)).collect();
    for token in tokens
        .iter()
        .filter(|t| !label_words.iter().any(|l| word_matches(t, l)))
    {
        let has = |n: &ObjectNode| {
            n.attributes
                .values()
                .flatten()
                .any(|v| v.to_lowercase() == *token)
        };
        if candidates.iter().any(|n| has(n)) {
            candidates.retain(|n| has(n));
        }
    }

    let objects: Vec<ObjectNode> = candidates.into_iter().cloned().collect();
    let observation = if objects.is_empty() {
        RenderedObservation::plain(format!("No objects matching '{query}' were found."))
    } else {
        let ids: Vec<NodeId> = objects.iter().map(|n| n.id).collect();
        render_objects(&ids, g).expect("ids come from the graph")
    };
    ToolResult::read(ToolPayload::Objects(objects), observation)
}

/// Stored relations of the given objects, with inverse readings, as the
/// payload. When several objects are queried, their pairwise viewer-relative
/// relations under `viewer` are appended to the observation.
pub fn query_for_relations(
    ids: &[NodeId],
    g: &SceneGraph,
    viewer: &ViewerPose,
    cfg: &RelationConfig,
) -> Result<ToolResult, ToolError> {
    let mut relations = BTreeSet::new();
    for &id in ids {
        relations.extend(
            g.edges_of(id, true)
                .map_err(|_| ToolError::UnknownObject(id))?,
        );
    }
    let relations: Vec<SpatialRelation> = relations.into_iter().collect();

    let queried: BTreeSet<NodeId> = ids.iter().copied().collect();
    let mut rendered = relations.clone();
    if queried.len() > 1 {
        for &subject in &queried {
            let around = allocentric(viewer, subject, g, cfg)
                .map_err(|_| ToolError::UnknownObject(subject))?;
            rendered.extend(
                around
                    .into_iter()
                    .filter(|(_, other)| queried.contains(other))
                    .map(|(p, other)| SpatialRelation::new(other, p, subject)),
            );
        }
    }

    let observation = if rendered.is_empty() {
        let list: Vec<String> = queried.iter().map(|id| id.to_string()).collect();
        RenderedObservation::plain(format!(
            "No relations were found for the objects with id {}.",
            list.join(", ")
        ))
    } else {
        render_relations(&rendered, g).expect("relations come from the graph")
    };
    Ok(ToolResult::read(
        ToolPayload::Relations(relations),
        observation,
    ))
}

/// Index of the node minimizing centroid distance, lowest id on ties.
fn nearest<'a>(nodes: impl Iterator<Item = &'a ObjectNode>, p: &Vec3) -> Option<&'a ObjectNode> {
    let mut best: Option<(&ObjectNode, f64)> = None;
    for n in nodes {
        let d = n.centroid.distance(p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((n, d));
        }
    }
    best.map(|(n, _)| n)
}

/// Resolves a mark to a node: the clicked id, or the box containing the
/// clicked point (nearest centroid among several), or else the nearest
/// centroid overall.
pub fn resolve_click(click: &Click, g: &SceneGraph) -> Result<ObjectNode, ToolError> {
    match click {
        Click::Node { object_id } => node(g, *object_id).cloned(),
        Click::Point { point } => {
            if !point.is_finite() {
                return Err(ToolError::InvalidMark);
            }
            if g.is_empty() {
                return Err(ToolError::EmptyGraph);
            }
            nearest(g.nodes().filter(|n| n.contains_point(point)), point)
                .or_else(|| nearest(g.nodes(), point))
                .cloned()
                .ok_or(ToolError::EmptyGraph)
        }
    }
}

pub fn find_marked_object(mark: Option<&Click>, g: &SceneGraph) -> Result<ToolResult, ToolError> {
    let click = mark.ok_or(ToolError::NoMark)?;
    let found = resolve_click(click, g)?;
    let observation = render_objects(&[found.id], g).expect("resolved node exists");
    Ok(ToolResult::read(ToolPayload::Object(found), observation))
}

pub fn calculate_mid_point(points: &[Vec3]) -> Result<ToolResult, ToolError> {
    if points.is_empty() {
        return Err(ToolError::NoPoints);
    }
    let n = points.len() as f64;
    let sum = points.iter().fold(Vec3::default(), |acc, p| acc.add(p));
    let mid = Vec3::new(sum.x / n, sum.y / n, sum.z / n);
    let observation =
        RenderedObservation::plain(format!("The midpoint is {}.", format_point(&mid)));
    Ok(ToolResult::read(ToolPayload::Point(mid), observation))
}

pub fn find_object_closest(point: &Vec3, g: &SceneGraph) -> Result<ToolResult, ToolError> {
    let found = nearest(g.nodes(), point)
        .cloned()
        .ok_or(ToolError::EmptyGraph)?;
    let observation = render_objects(&[found.id], g).expect("node exists");
    Ok(ToolResult::read(ToolPayload::Object(found), observation))
}

pub fn update_name(
    names: &[String],
    ids: &[NodeId],
    g: &mut SceneGraph,
) -> Result<ToolResult, ToolError> {
    if names.len() != ids.len() {
        return Err(ToolError::LengthMismatch {
            names: names.len(),
            objects: ids.len(),
        });
    }
    let names: Vec<String> = names
        .iter()
        .map(|n| {
            n.split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase()
        })
        .collect();
    if names.iter().any(String::is_empty) {
        return Err(ToolError::EmptyName);
    }
    for &id in ids {
        node(g, id)?;
    }
    let mut lines = Vec::new();
    let mut changed = false;
    for (name, &id) in names.iter().zip(ids) {
        changed |= g.mutate(GraphChange::SetLabel(id, name.clone()))?;
        lines.push(format!("The object (id: {id}) is now labeled '{name}'."));
    }
    let objects = ids
        .iter()
        .map(|&id| node(g, id).cloned())
        .collect::<Result<_, _>>()?;
    Ok(ToolResult {
        payload: ToolPayload::Objects(objects),
        observation: RenderedObservation::plain(lines.join("\n")),
        graph_changed: changed,
    })
}

const COLOR_WORDS: &[&str] = &[
    "beige",
    "black",
    "blue",
    "brown",
    "cyan",
    "gold",
    "golden",
    "gray",
    "green",
    "grey",
    "magenta",
    "maroon",
    "navy",
    "orange",
    "pink",
    "purple",
    "red",
    "silver",
    "tan",
    "teal",
    "turquoise",
    "violet",
    "white",
    "yellow",
];

const SHAPE_WORDS: &[&str] = &[
    "circular",
    "conical",
    "cubic",
    "cuboid",
    "curved",
    "cylindrical",
    "flat",
    "hexagonal",
    "oval",
    "rectangular",
    "round",
    "spherical",
    "square",
    "triangular",
];

/// Parses `category: v1, v2` or a bare color or shape word.
pub fn parse_attribute(text: &str) -> Result<(AttributeCategory, Vec<String>), ToolError> {
    let unparseable = || ToolError::UnparseableAttribute(text.to_string());
    let values = |raw: &str| -> Vec<String> {
        raw.split(',')
            .map(|v| {
                v.split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ")
                    .to_lowercase()
            })
            .filter(|v| !v.is_empty())
            .collect()
    };
    if let Some((category, rest)) = text.split_once(':') {
        let category: AttributeCategory = category
            .trim()
            .to_lowercase()
            .parse()
            .map_err(|_| unparseable())?;
        let values = values(rest);
        if values.is_empty() {
            return Err(unparseable());
        }
        return Ok((category, values));
    }
    let bare = text.trim().to_lowercase();
    if COLOR_WORDS.contains(&bare.as_str()) {
        Ok((AttributeCategory::Color, vec![bare]))
    } else if SHAPE_WORDS.contains(&bare.as_str()) {
        Ok((AttributeCategory::Shape, vec![bare]))
    } else {
        Err(unparseable())
    }
}

pub fn update_attributes(
    id: NodeId,
    attributes: &[String],
    g: &mut SceneGraph,
) -> Result<ToolResult, ToolError> {
    node(g, id)?;
    let mut grouped: BTreeMap<AttributeCategory, Vec<String>> = BTreeMap::new();
    for text in attributes {
        let (category, values) = parse_attribute(text)?;
        let slot = grouped.entry(category).or_default();
        for v in values {
            if !slot.contains(&v) {
                slot.push(v);
            }
        }
    }
    let mut changed = false;
    for (category, values) in grouped {
        changed |= g.mutate(GraphChange::SetAttributes(id, category, values))?;
    }
    let updated = node(g, id)?.clone();
    let observation = RenderedObservation::plain(format!(
        "The {} (id: {}) now has attributes: {}.",
        updated.label,
        updated.id,
        attribute_text(&updated)
    ));
    Ok(ToolResult {
        payload: ToolPayload::Object(updated),
        observation,
        graph_changed: changed,
    })
}

/// Maps relation wording onto a stored predicate, and whether subject and
/// object must be swapped.
pub fn normalize_relation(text: &str) -> Result<(Predicate, bool), ToolError> {
    let phrase = text
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    let mapped = match phrase.as_str() {
        "close" | "close to" | "near" | "next to" => (Predicate::Close, false),
        "far" | "far from" | "far away from" => (Predicate::Far, false),
        "support" | "supports" | "supporting" => (Predicate::Support, false),
        "on" | "on top of" | "onto" | "supported by" | "rests on" => (Predicate::Support, true),
        "inside" | "in" | "within" | "inside of" => (Predicate::Inside, false),
        "contains" | "contain" | "containing" => (Predicate::Inside, true),
        "embed" | "embedded" | "embedded in" => (Predicate::Embed, false),
        "above" | "over" => (Predicate::Above, false),
        "below" | "under" | "beneath" | "underneath" => (Predicate::Above, true),
        "left" | "left of" | "to the left of" | "right" | "right of" | "to the right of"
        | "front" | "in front" | "in front of" | "behind" | "in back of" => {
            return Err(ToolError::AllocentricRelation(text.to_string()))
        }
        _ => return Err(ToolError::UnknownRelation(text.to_string())),
    };
    Ok(mapped)
}

fn stored_relation(
    subject: NodeId,
    object: NodeId,
    relation: &str,
    g: &SceneGraph,
) -> Result<SpatialRelation, ToolError> {
    node(g, subject)?;
    node(g, object)?;
    if subject == object {
        return Err(ToolError::SelfRelation(subject));
    }
    let (predicate, swap) = normalize_relation(relation)?;
    let rel = if swap {
        SpatialRelation::new(object, predicate, subject)
    } else {
        SpatialRelation::new(subject, predicate, object)
    };
    Ok(rel.canonical())
}

/// Stores a user-asserted relation; conflicting relations of the same pair
/// are removed by a verification pass in which the new relation wins.
pub fn add_relation(
    subject: NodeId,
    object: NodeId,
    relation: &str,
    g: &mut SceneGraph,
    cfg: &RelationConfig,
) -> Result<ToolResult, ToolError> {
    let rel = stored_relation(subject, object, relation, g)?;
    let inserted = g.mutate(GraphChange::InsertEdge(rel))?;
    let pair = g.edges_between(subject, object);
    let (_, report) = verify_anchored(&pair, g, cfg, Some(rel));
    let mut lines = vec![format!(
        "{} {}",
        if inserted {
            "Added:"
        } else {
            "Already stored:"
        },
        relation_sentence(&rel, g).expect("endpoints exist")
    )];
    let mut removed_any = false;
    for removal in &report.removed {
        removed_any |= g.mutate(GraphChange::RemoveEdge(removal.relation))?;
        lines.push(format!(
            "Removed conflicting relation: {}",
            relation_sentence(&removal.relation, g).expect("endpoints exist")
        ));
    }
    Ok(ToolResult {
        payload: ToolPayload::Relations(g.edges_between(subject, object)),
        observation: RenderedObservation::plain(lines.join("\n")),
        graph_changed: inserted || removed_any,
    })
}

pub fn delete_relation(
    subject: NodeId,
    object: NodeId,
    relation: &str,
    g: &mut SceneGraph,
) -> Result<ToolResult, ToolError> {
    let rel = stored_relation(subject, object, relation, g)?;
    let removed = g.mutate(GraphChange::RemoveEdge(rel))?;
    let sentence = relation_sentence(&rel, g).expect("endpoints exist");
    let text = if removed {
        format!("Removed: {sentence}")
    } else {
        format!("There is no such relation stored: {sentence}")
    };
    Ok(ToolResult {
        payload: ToolPayload::Relations(g.edges_between(subject, object)),
        observation: RenderedObservation::plain(text),
        graph_changed: removed,
    })
}

pub fn post_process(ids: &[NodeId], g: &SceneGraph) -> Result<ToolResult, ToolError> {
    let unique: BTreeSet<NodeId> = ids.iter().copied().collect();
    let highlights = unique
        .iter()
        .map(|&id| {
            node(g, id).map(|n| Highlight {
                id: n.id,
                label: n.label.clone(),
                centroid: n.centroid,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let text = if highlights.is_empty() {
        "No objects to highlight.".to_string()
    } else {
        let list: Vec<String> = highlights
            .iter()
            .map(|h| format!("{} (id: {})", h.label, h.id))
            .collect();
        format!("Highlighted for the user: {}.", list.join(", "))
    };
    Ok(ToolResult::read(
        ToolPayload::Highlights(highlights),
        RenderedObservation::plain(text),
    ))
}

pub fn final_answer(answer: &str) -> ToolResult {
    let text = if answer.trim().is_empty() {
        tracing::warn!("final_answer called with an empty answer");
        "(empty answer)".to_string()
    } else {
        answer.to_string()
    };
    ToolResult::read(
        ToolPayload::Answer(answer.to_string()),
        RenderedObservation::plain(text),
    )
}

/// Mutable view of the session state a tool call runs against.
pub struct ToolContext<'a> {
    pub graph: &'a mut SceneGraph,
    pub mark: Option<Click>,
    pub viewer: ViewerPose,
    pub config: &'a RelationConfig,
}

#[derive(Deserialize)]
struct QueryArgs {
    query: String,
}

#[derive(Deserialize)]
struct IdsArgs {
    object_ids: Vec<NodeId>,
}

#[derive(Deserialize)]
struct PointsArgs {
    points: Vec<Vec3>,
}

#[derive(Deserialize)]
struct PointArgs {
    point: Vec3,
}

#[derive(Deserialize)]
struct RenameArgs {
    names: Vec<String>,
    object_ids: Vec<NodeId>,
}

#[derive(Deserialize)]
struct AttributeArgs {
    object_id: NodeId,
    attributes: Vec<String>,
}

#[derive(Deserialize)]
struct RelationArgs {
    subject_id: NodeId,
    object_id: NodeId,
    relation: String,
}

#[derive(Deserialize)]
struct AnswerArgs {
    answer: String,
}

/// Runs a tool from its name and JSON arguments.
pub fn execute(
    tool: ToolName,
    input: &Map<String, Value>,
    ctx: &mut ToolContext<'_>,
) -> Result<ToolResult, ToolError> {
    fn args<T: for<'de> Deserialize<'de>>(
        tool: ToolName,
        input: &Map<String, Value>,
    ) -> Result<T, ToolError> {
        serde_json::from_value(Value::Object(input.clone())).map_err(|e| ToolError::BadInput {
            tool,
            message: e.to_string(),
        })
    }

    match tool {
        ToolName::QueryForObjects => {
            let a: QueryArgs = args(tool, input)?;
            Ok(query_for_objects(&a.query, ctx.graph))
        }
        ToolName::QueryForRelations => {
            let a: IdsArgs = args(tool, input)?;
            query_for_relations(&a.object_ids, ctx.graph, &ctx.viewer, ctx.config)
        }
        ToolName::FindMarkedObject => find_marked_object(ctx.mark.as_ref(), ctx.graph),
        ToolName::CalculateMidPoint => {
            let a: PointsArgs = args(tool, input)?;
            calculate_mid_point(&a.points)
        }
        ToolName::FindObjectClosest => {
            let a: PointArgs = args(tool, input)?;
            find_object_closest(&a.point, ctx.graph)
        }
        ToolName::UpdateName => {
            let a: RenameArgs = args(tool, input)?;
            update_name(&a.names, &a.object_ids, ctx.graph)
        }
        ToolName::UpdateAttributes => {
            let a: AttributeArgs = args(tool, input)?;
            update_attributes(a.object_id, &a.attributes, ctx.graph)
        }
        ToolName::AddRelation => {
            let a: RelationArgs = args(tool, input)?;
            add_relation(
                a.subject_id,
                a.object_id,
                &a.relation,
                ctx.graph,
                ctx.config,
            )
        }
        ToolName::DeleteRelation => {
            let a: RelationArgs = args(tool, input)?;
            delete_relation(a.subject_id, a.object_id, &a.relation, ctx.graph)
        }
        ToolName::PostProcess => {
            let a: IdsArgs = args(tool, input)?;
            post_process(&a.object_ids, ctx.graph)
        }
        ToolName::FinalAnswer => {
            let a: AnswerArgs = args(tool, input)?;
            Ok(final_answer(&a.answer))
        }
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn scene() -> SceneGraph {
        let labels = ["table", "cup", "book", "box", "lamp", "chair"];
        let nodes = labels.iter().enumerate().map(|(i, l)| {
            ObjectNode::new(
                i as NodeId,
                *l,
                Vec3::new(i as f64 * 0.7, (i % 2) as f64, 0.5),
                Vec3::new(0.3, 0.3, 0.3),
            )
        });
        let cfg = RelationConfig::default();
        let g = SceneGraph::from_parts("p", nodes, vec![]).unwrap();
        let edges = crate::spatial::infer_relations(&g, &cfg);
        SceneGraph::from_parts("p", g.nodes().cloned().collect::<Vec<_>>(), edges).unwrap()
    }

    fn call() -> impl Strategy<Value = (ToolName, Value)> {
        let id = 0u32..7;
        let rel = prop::sample::select(vec![
            "close", "far", "on", "above", "below", "inside", "left",
        ]);
        prop_oneof![
            prop::sample::select(vec!["cup", "the book", "box", "tables"])
                .prop_map(|q| (ToolName::QueryForObjects, json!({"query": q}))),
            prop::collection::vec(id.clone(), 0..3)
                .prop_map(|ids| (ToolName::QueryForRelations, json!({"object_ids": ids}))),
            Just((ToolName::FindMarkedObject, json!({}))),
            Just((
                ToolName::CalculateMidPoint,
                json!({"points": [[0, 0, 0], [1, 1, 1]]})
            )),
            Just((
                ToolName::FindObjectClosest,
                json!({"point": [1.0, 0.5, 0.0]})
            )),
            (id.clone(), prop::sample::select(vec!["mug", "notebook"])).prop_map(|(i, n)| (
                ToolName::UpdateName,
                json!({"names": [n], "object_ids": [i]})
            )),
            (
                id.clone(),
                prop::sample::select(vec!["red", "material: wood", "wooden"])
            )
                .prop_map(|(i, a)| (
                    ToolName::UpdateAttributes,
                    json!({"object_id": i, "attributes": [a]})
                )),
            (id.clone(), id.clone(), rel.clone()).prop_map(|(a, b, r)| (
                ToolName::AddRelation,
                json!({"subject_id": a, "object_id": b, "relation": r})
            )),
            (id.clone(), id.clone(), rel).prop_map(|(a, b, r)| (
                ToolName::DeleteRelation,
                json!({"subject_id": a, "object_id": b, "relation": r})
            )),
            prop::collection::vec(id, 0..3)
                .prop_map(|ids| (ToolName::PostProcess, json!({"object_ids": ids}))),
            Just((ToolName::FinalAnswer, json!({"answer": "done"}))),
        ]
    }

    proptest! {
        #[test]
        fn only_update_tools_change_the_graph(calls in prop::collection::vec(call(), 1..30)) {
            let mut g = scene();
            let cfg = RelationConfig::default();
            for (tool, input) in calls {
                let before = g.revision();
                let mut ctx = ToolContext {
                    graph: &mut g,
                    mark: Some(Click::Node { object_id: 1 }),
                    viewer: ViewerPose::default(),
                    config: &cfg,
                };
                match execute(tool, input.as_object().unwrap(), &mut ctx) {
                    Ok(r) => {
                        prop_assert!(!r.observation.text.is_empty());
                        prop_assert_eq!(r.graph_changed, g.revision() != before);
                        if !tool.is_update() {
                            prop_assert!(!r.graph_changed);
                        }
                    }
                    Err(e) => {
                        prop_assert_eq!(g.revision(), before);
                        prop_assert!(!e.to_string().is_empty());
                    }
                }
                prop_assert!(g.validate().is_ok());
            }
        }

        #[test]
        fn rename_moves_query_membership(id in 0u32..6, name in prop::sample::select(vec!["mug", "sketchbook", "stool"])) {
            let mut g = scene();
            let old = g.get_node(id).unwrap().label.clone();
            update_name(&[name.to_string()], &[id], &mut g).unwrap();
            let found = |q: &str, g: &SceneGraph| match query_for_objects(q, g).payload {
                ToolPayload::Objects(o) => o.iter().map(|n| n.id).collect::<Vec<_>>(),
                _ => unreachable!(),
            };
            prop_assert!(found(name, &g).contains(&id));
            let others_have_old = g.nodes().any(|n| n.id != id && n.label == old);
            if !others_have_old && old != name {
                prop_assert!(!found(&old, &g).contains(&id));
            }
        }

        #[test]
        fn add_then_delete_restores_pair(a in 0u32..6, b in 0u32..6, rel in prop::sample::select(vec!["close", "far", "on", "above", "below", "inside", "embed"])) {
            prop_assume!(a != b);
            let mut g = scene();
            let cfg = RelationConfig::default();
            let before: BTreeSet<SpatialRelation> = g.edges_between(a, b).into_iter().collect();
            let added = add_relation(a, b, rel, &mut g, &cfg).unwrap();
            let conflicts: BTreeSet<SpatialRelation> = before
                .iter()
                .filter(|r| !g.contains_edge(r))
                .copied()
                .collect();
            if !conflicts.is_empty() {
                prop_assert!(added.observation.text.contains("Removed conflicting relation"));
            }
            let was_present = before.contains(&stored_relation(a, b, rel, &g).unwrap());
            delete_relation(a, b, rel, &mut g).unwrap();
            let after: BTreeSet<SpatialRelation> = g.edges_between(a, b).into_iter().collect();
            let mut expected: BTreeSet<SpatialRelation> = before.difference(&conflicts).copied().collect();
            if was_present {
                expected.remove(&stored_relation(a, b, rel, &g).unwrap());
            }
            prop_assert_eq!(after, expected);
        }
    }
}
