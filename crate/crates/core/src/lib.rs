//! Scene-graph reasoning and alignment workbench.
//!
//! A [`scene_graph::SceneGraph`] holds object nodes and stored spatial
//! relations. [`spatial`] infers and verifies relations, [`graph_text`]
//! renders observations and persists graphs, [`tools`] implements the agent
//! toolset, [`agent`] runs the plan/act/observe loop against a pluggable
//! backend and [`eval`] scores answers and alignment sessions.

pub mod agent;
pub mod eval;
pub mod graph_text;
pub mod scene_graph;
pub mod spatial;
pub mod tools;

pub use scene_graph::{
    AttributeCategory, GraphChange, GraphError, NodeId, ObjectNode, Predicate, SceneGraph,
    SpatialRelation, Vec3, ViewerPose,
};
pub use spatial::RelationConfig;
