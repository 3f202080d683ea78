//! Text renderings of graphs and sub-graphs for the agent, the canonical
//! scene document format, and the token-based query ratio.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::scene_graph::{
    AttributeCategory, GraphError, NodeId, ObjectNode, Predicate, SceneGraph, SpatialRelation,
};
use crate::spatial::{infer_relations, verify, RelationConfig};

/// Observation text plus the graph content it was rendered from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RenderedObservation {
    pub text: String,
    pub token_count: usize,
    /// Nodes whose attribute sentence appears in `text`.
    pub source_ids: Vec<NodeId>,
    /// Relations whose sentence appears in `text`.
    #[serde(default)]
    pub source_edges: Vec<SpatialRelation>,
}

impl RenderedObservation {
    /// An observation that carries no retrieved graph content.
    pub fn plain(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            token_count: count_tokens(&text),
            text,
            source_ids: Vec::new(),
            source_edges: Vec::new(),
        }
    }
}

/// Number of maximal non-whitespace runs.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

fn lookup(g: &SceneGraph, id: NodeId) -> Result<&ObjectNode, RenderError> {
    g.get_node(id).ok_or(RenderError::UnknownNode(id))
}

/// `category: v1, v2; category: ...` in fixed category order, or `none`.
pub fn attribute_text(node: &ObjectNode) -> String {
    let parts: Vec<String> = AttributeCategory::ALL
        .iter()
        .filter_map(|c| {
            node.attributes
                .get(c)
                .filter(|values| !values.is_empty())
                .map(|values| format!("{}: {}", c, values.join(", ")))
        })
        .collect();
    if parts.is_empty() {
        "none".to_string()
    } else {
        parts.join("; ")
    }
}

pub fn object_sentence(node: &ObjectNode) -> String {
    format!(
        "The {} (id: {}) has attributes: {}.",
        node.label,
        node.id,
        attribute_text(node)
    )
}

/// One attribute sentence per object, ordered by id, duplicates collapsed.
pub fn render_objects(ids: &[NodeId], g: &SceneGraph) -> Result<RenderedObservation, RenderError> {
    let unique: BTreeSet<NodeId> = ids.iter().copied().collect();
    let sentences = unique
        .iter()
        .map(|&id| lookup(g, id).map(object_sentence))
        .collect::<Result<Vec<_>, _>>()?;
    let text = sentences.join("\n");
    Ok(RenderedObservation {
        token_count: count_tokens(&text),
        text,
        source_ids: unique.into_iter().collect(),
        source_edges: Vec::new(),
    })
}

pub fn predicate_phrase(p: Predicate) -> &'static str {
    match p {
        Predicate::Close => "close to",
        Predicate::Far => "far from",
        Predicate::Support => "supporting",
        Predicate::Inside => "inside",
        Predicate::Embed => "embedded in",
        Predicate::Above => "above",
        Predicate::Below => "below",
        Predicate::SupportedBy => "supported by",
        Predicate::Contains => "containing",
        Predicate::Left => "to the left of",
        Predicate::Right => "to the right of",
        Predicate::InFront => "in front of",
        Predicate::Behind => "behind",
    }
}

pub fn relation_sentence(rel: &SpatialRelation, g: &SceneGraph) -> Result<String, RenderError> {
    let s = lookup(g, rel.subject)?;
    let o = lookup(g, rel.object)?;
    Ok(format!(
        "The {} (id: {}) is {} the {} (id: {}).",
        s.label,
        s.id,
        predicate_phrase(rel.predicate),
        o.label,
        o.id
    ))
}

/// One sentence per relation, sorted by (subject, predicate, object).
pub fn render_relations(
    rels: &[SpatialRelation],
    g: &SceneGraph,
) -> Result<RenderedObservation, RenderError> {
    let unique: BTreeSet<SpatialRelation> = rels.iter().copied().collect();
    let sentences = unique
        .iter()
        .map(|r| relation_sentence(r, g))
        .collect::<Result<Vec<_>, _>>()?;
    let text = sentences.join("\n");
    Ok(RenderedObservation {
        token_count: count_tokens(&text),
        text,
        source_ids: Vec::new(),
        source_edges: unique.into_iter().collect(),
    })
}

/// Tokens of the deduplicated retrieved content over tokens of the whole
/// graph (every object sentence plus every stored edge sentence). `None`
/// for an empty graph.
pub fn query_ratio(observations: &[RenderedObservation], g: &SceneGraph) -> Option<f64> {
    let all_ids: Vec<NodeId> = g.node_ids().collect();
    let all_edges: Vec<SpatialRelation> = g.edges().copied().collect();
    let full = content_tokens(&all_ids, &all_edges, g);
    if full == 0 {
        return None;
    }
    let ids: Vec<NodeId> = observations
        .iter()
        .flat_map(|o| o.source_ids.iter().copied())
        .filter(|id| g.contains_node(*id))
        .collect();
    let edges: Vec<SpatialRelation> = observations
        .iter()
        .flat_map(|o| o.source_edges.iter())
        .filter(|r| r.subject != r.object && !r.predicate.is_allocentric())
        .map(|r| r.canonical())
        .filter(|r| g.contains_edge(r))
        .collect();
    let retrieved = content_tokens(&ids, &edges, g);
    Some((retrieved as f64 / full as f64).clamp(0.0, 1.0))
}

fn content_tokens(ids: &[NodeId], edges: &[SpatialRelation], g: &SceneGraph) -> usize {
    let objects = render_objects(ids, g).map(|o| o.token_count).unwrap_or(0);
    let relations = render_relations(edges, g)
        .map(|o| o.token_count)
        .unwrap_or(0);
    objects + relations
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    #[error("malformed scene document at line {line}, column {column} ({path}): {message}")]
    Malformed {
        line: usize,
        column: usize,
        /// Field path such as `objects[2].centroid`, `.` for the root.
        path: String,
        message: String,
    },
    #[error("schema violation ({rule}): {detail}")]
    Schema { rule: &'static str, detail: String },
}

impl DocumentError {
    /// Where in the document the problem lies.
    pub fn path(&self) -> &str {
        match self {
            DocumentError::Malformed { path, .. } => path,
            DocumentError::Schema { rule, .. } => match *rule {
                "dangling edge"
                | "self-relation"
                | "non-storable predicate"
                | "unknown predicate"
                | "symmetric edge order" => "edges",
                _ => "objects",
            },
        }
    }

    fn schema(rule: &'static str, detail: impl Into<String>) -> Self {
        DocumentError::Schema {
            rule,
            detail: detail.into(),
        }
    }
}

impl From<GraphError> for DocumentError {
    fn from(err: GraphError) -> Self {
        let rule = match &err {
            GraphError::DuplicateId(_) | GraphError::RetiredId(_) => "duplicate object id",
            GraphError::UnknownNode(_) | GraphError::DanglingEdge(_) => "dangling edge",
            GraphError::InvalidNode { .. } => "invalid object",
            GraphError::SelfRelation(_) => "self-relation",
            GraphError::NonCanonicalPredicate(_) => "non-storable predicate",
            GraphError::UnknownPredicate(_) => "unknown predicate",
            GraphError::UnknownAttributeCategory(_) => "unknown attribute category",
            GraphError::NonCanonicalSymmetric(_) => "symmetric edge order",
        };
        DocumentError::schema(rule, err.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneDocument {
    scene_id: String,
    objects: Vec<ObjectRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<EdgeRecord>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObjectRecord {
    id: i64,
    label: String,
    centroid: [f64; 3],
    half_extents: [f64; 3],
    #[serde(default)]
    attributes: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeRecord {
    subject: i64,
    predicate: String,
    object: i64,
}

fn node_id(raw: i64, what: &str) -> Result<NodeId, DocumentError> {
    NodeId::try_from(raw).map_err(|_| {
        DocumentError::schema(
            "non-negative id",
            format!("{what} id {raw} is out of range"),
        )
    })
}

fn parse_document(text: &str) -> Result<SceneDocument, DocumentError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        DocumentError::Malformed {
            line: inner.line(),
            column: inner.column(),
            path,
            message: inner.to_string(),
        }
    })
}

fn document_nodes(doc: &SceneDocument) -> Result<Vec<ObjectNode>, DocumentError> {
    let mut seen = BTreeSet::new();
    doc.objects
        .iter()
        .map(|rec| {
            let id = node_id(rec.id, "object")?;
            if !seen.insert(id) {
                return Err(DocumentError::schema(
                    "duplicate object id",
                    format!("object id {id} appears more than once"),
                ));
            }
            let mut node = ObjectNode::new(
                id,
                rec.label.clone(),
                rec.centroid.into(),
                rec.half_extents.into(),
            );
            for (category, values) in &rec.attributes {
                let category: AttributeCategory = category.parse()?;
                node.attributes.insert(category, values.clone());
            }
            node.validate()?;
            Ok(node)
        })
        .collect()
}

fn document_edges(
    records: &[EdgeRecord],
    ids: &BTreeSet<NodeId>,
) -> Result<Vec<SpatialRelation>, DocumentError> {
    records
        .iter()
        .map(|rec| {
            let subject = node_id(rec.subject, "edge subject")?;
            let object = node_id(rec.object, "edge object")?;
            let predicate: Predicate = rec.predicate.parse()?;
            let rel = SpatialRelation::new(subject, predicate, object);
            for id in [subject, object] {
                if !ids.contains(&id) {
                    return Err(DocumentError::schema(
                        "dangling edge",
                        format!("edge '{rel}' references unknown object {id}"),
                    ));
                }
            }
            Ok(rel)
        })
        .collect()
}

/// Parses a scene document. Returns the graph (revision 0) and whether the
/// document carried an explicit edge list.
pub fn parse_scene(text: &str) -> Result<(SceneGraph, bool), DocumentError> {
    let doc = parse_document(text)?;
    let nodes = document_nodes(&doc)?;
    let ids: BTreeSet<NodeId> = nodes.iter().map(|n| n.id).collect();
    let edges = match &doc.edges {
        Some(records) => document_edges(records, &ids)?,
        None => Vec::new(),
    };
    let graph = SceneGraph::from_parts(doc.scene_id.clone(), nodes, edges)?;
    Ok((graph, doc.edges.is_some()))
}

pub fn deserialize(text: &str) -> Result<SceneGraph, DocumentError> {
    parse_scene(text).map(|(g, _)| g)
}

/// Loads a scene document; when it has no edge list the relations are
/// inferred from geometry and verified.
pub fn ingest(text: &str, cfg: &RelationConfig) -> Result<SceneGraph, DocumentError> {
    let (graph, has_edges) = parse_scene(text)?;
    if has_edges {
        return Ok(graph);
    }
    let (edges, _) = verify(&infer_relations(&graph, cfg), &graph, cfg);
    let nodes: Vec<ObjectNode> = graph.nodes().cloned().collect();
    Ok(SceneGraph::from_parts(graph.scene_id(), nodes, edges)?)
}

/// Canonical scene document: sorted keys, objects by id, edges sorted.
/// Equal graphs give byte-identical text.
pub fn serialize(g: &SceneGraph) -> String {
    let doc = SceneDocument {
        scene_id: g.scene_id().to_string(),
        objects: g
            .nodes()
            .map(|n| ObjectRecord {
                id: i64::from(n.id),
                label: n.label.clone(),
                centroid: n.centroid.into(),
                half_extents: n.half_extents.into(),
                attributes: n
                    .attributes
                    .iter()
                    .map(|(c, v)| (c.as_str().to_string(), v.clone()))
                    .collect(),
            })
            .collect(),
        edges: Some(
            g.edges()
                .map(|e| EdgeRecord {
                    subject: i64::from(e.subject),
                    predicate: e.predicate.as_str().to_string(),
                    object: i64::from(e.object),
                })
                .collect(),
        ),
    };
    let value = serde_json::to_value(&doc).expect("scene document is always representable");
    let mut out = String::new();
    write_canonical(&sorted(value), 0, &mut out);
    out.push('\n');
    out
}

fn sorted(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

/// Two-space indented JSON; arrays of scalars stay on one line.
fn write_canonical(value: &Value, depth: usize, out: &mut String) {
    let indent = |d: usize| "  ".repeat(d);
    match value {
        Value::Object(map) if !map.is_empty() => {
            out.push_str("{\n");
            for (i, (k, v)) in map.iter().enumerate() {
                let _ = write!(out, "{}{}: ", indent(depth + 1), Value::String(k.clone()));
                write_canonical(v, depth + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            let _ = write!(out, "{}}}", indent(depth));
        }
        Value::Array(items) if items.iter().any(|v| v.is_object() || v.is_array()) => {
            out.push_str("[\n");
            for (i, v) in items.iter().enumerate() {
                out.push_str(&indent(depth + 1));
                write_canonical(v, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            let _ = write!(out, "{}]", indent(depth));
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}
