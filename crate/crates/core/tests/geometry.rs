mod support;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgalign_core::graph_text::{deserialize, serialize};
use sgalign_core::spatial::{allocentric, infer_relations, verify, RelationConfig};
use sgalign_core::{NodeId, ObjectNode, Predicate, SceneGraph, SpatialRelation, Vec3, ViewerPose};

use support::{oracle_pair, random_pose, random_scene};

fn triples(rels: &[SpatialRelation]) -> BTreeSet<(NodeId, Predicate, NodeId)> {
    rels.iter()
        .map(|r| (r.subject, r.predicate, r.object))
        .collect()
}

#[test]
fn inference_matches_the_oracle_on_every_pair() {
    let cfg = RelationConfig::default();
    let start = Instant::now();
    let mut pairs = 0;
    let mut seen = BTreeSet::new();
    for seed in 0..400u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_scene(&mut rng, seed % 2 == 0);
        let inferred = triples(&infer_relations(&g, &cfg));
        let nodes: Vec<&ObjectNode> = g.nodes().collect();
        let mut expected = BTreeSet::new();
        for (i, a) in nodes.iter().enumerate() {
            for b in &nodes[i + 1..] {
                let want = oracle_pair(a, b, &cfg);
                let got: BTreeSet<_> = inferred
                    .iter()
                    .filter(|(s, _, o)| (*s, *o) == (a.id, b.id) || (*s, *o) == (b.id, a.id))
                    .copied()
                    .collect();
                assert_eq!(got, want, "seed {seed}, pair ({}, {})", a.id, b.id);
                seen.extend(want.iter().map(|t| t.1));
                expected.extend(want);
                pairs += 1;
            }
        }
        assert_eq!(inferred, expected, "seed {seed}");
    }
    assert!(pairs > 1000);
    for p in Predicate::STORED {
        assert!(seen.contains(&p), "generator never produced {p}");
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn verify_leaves_inference_unchanged() {
    let cfg = RelationConfig::default();
    for seed in 0..400u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_scene(&mut rng, seed % 2 == 1);
        let inferred = infer_relations(&g, &cfg);
        let (kept, report) = verify(&inferred, &g, &cfg);
        assert_eq!(kept, inferred, "seed {seed}");
        assert!(report.is_clean(), "seed {seed}: {report:?}");
    }
}

fn consistent(rels: &[SpatialRelation]) -> bool {
    let set: BTreeSet<_> = rels.iter().copied().collect();
    rels.iter().all(|r| match r.predicate {
        Predicate::Close => {
            !set.contains(&SpatialRelation::new(r.subject, Predicate::Far, r.object))
        }
        Predicate::Above => {
            !set.contains(&SpatialRelation::new(r.object, Predicate::Above, r.subject))
        }
        _ => true,
    }) && {
        let mut ordered = BTreeSet::new();
        rels.iter()
            .filter(|r| r.predicate.is_vertical())
            .all(|r| ordered.insert((r.subject, r.object)))
    }
}

#[test]
fn injected_conflicts_are_resolved() {
    let cfg = RelationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for seed in 0..300u64 {
        let g = random_scene(&mut ChaCha8Rng::seed_from_u64(seed), false);
        let ids: Vec<NodeId> = g.node_ids().collect();
        if ids.len() < 2 {
            continue;
        }
        let mut rels = infer_relations(&g, &cfg);
        for _ in 0..6 {
            let a = ids[rng.gen_range(0..ids.len())];
            let b = ids[rng.gen_range(0..ids.len())];
            if a == b {
                continue;
            }
            let (lo, hi) = (a.min(b), a.max(b));
            match rng.gen_range(0..3) {
                0 => rels.extend([
                    SpatialRelation::new(lo, Predicate::Close, hi),
                    SpatialRelation::new(lo, Predicate::Far, hi),
                ]),
                1 => rels.extend([
                    SpatialRelation::new(a, Predicate::Above, b),
                    SpatialRelation::new(b, Predicate::Above, a),
                ]),
                _ => rels.extend([
                    SpatialRelation::new(a, Predicate::Support, b),
                    SpatialRelation::new(a, Predicate::Above, b),
                ]),
            }
        }
        let (kept, _) = verify(&rels, &g, &cfg);
        assert!(consistent(&kept), "seed {seed}: {kept:?}");
        let (again, report) = verify(&kept, &g, &cfg);
        assert_eq!(again, kept);
        assert!(report.is_clean());
        checked += 1;
    }
    assert!(checked > 200);
}

#[test]
fn stated_conflict_examples() {
    let cfg = RelationConfig::default();
    let g = SceneGraph::from_parts(
        "c",
        vec![
            ObjectNode::new(1, "a", Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.5, 0.5, 0.5)),
            ObjectNode::new(2, "b", Vec3::new(1.4, 0.0, 0.5), Vec3::new(0.5, 0.5, 0.5)),
        ],
        vec![],
    )
    .unwrap();
    let (kept, _) = verify(
        &[
            SpatialRelation::new(1, Predicate::Close, 2),
            SpatialRelation::new(1, Predicate::Far, 2),
        ],
        &g,
        &cfg,
    );
    assert_eq!(kept, vec![SpatialRelation::new(1, Predicate::Close, 2)]);

    let (kept, _) = verify(
        &[
            SpatialRelation::new(1, Predicate::Support, 2),
            SpatialRelation::new(1, Predicate::Above, 2),
        ],
        &g,
        &cfg,
    );
    assert!(!kept.contains(&SpatialRelation::new(1, Predicate::Above, 2)));
}

fn opposite(p: Predicate) -> Predicate {
    match p {
        Predicate::Left => Predicate::Right,
        Predicate::Right => Predicate::Left,
        Predicate::InFront => Predicate::Behind,
        Predicate::Behind => Predicate::InFront,
        other => panic!("not allocentric: {other}"),
    }
}

fn translated(g: &SceneGraph, t: Vec3) -> SceneGraph {
    let nodes: Vec<ObjectNode> = g
        .nodes()
        .map(|n| ObjectNode {
            centroid: n.centroid.add(&t),
            ..n.clone()
        })
        .collect();
    SceneGraph::from_parts(g.scene_id(), nodes, vec![]).unwrap()
}

#[test]
fn allocentric_equivariance() {
    let cfg = RelationConfig::default();
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_scene(&mut rng, true);
        let pose = random_pose(&mut rng);
        let turned = ViewerPose::new(pose.position, pose.yaw() + PI);
        let t = Vec3::new(
            (rng.gen_range(-20.0..20.0) * 8.0_f64).round() / 8.0,
            (rng.gen_range(-20.0..20.0) * 8.0_f64).round() / 8.0,
            0.0,
        );
        let moved = translated(&g, t);
        let shifted = ViewerPose::new(pose.position.add(&t), pose.yaw());
        for id in g.node_ids() {
            let base = allocentric(&pose, id, &g, &cfg).unwrap();
            let flipped = allocentric(&turned, id, &g, &cfg).unwrap();
            assert_eq!(base.len(), flipped.len());
            for ((p, o), (q, o2)) in base.iter().zip(&flipped) {
                assert_eq!(o, o2);
                assert_eq!(opposite(*p), *q, "seed {seed}, subject {id}, other {o}");
            }
            assert_eq!(
                allocentric(&shifted, id, &moved, &cfg).unwrap(),
                base,
                "seed {seed}"
            );
        }
    }
}

#[test]
fn inferred_edges_are_never_allocentric() {
    let cfg = RelationConfig::default();
    for seed in 0..200u64 {
        let g = random_scene(&mut ChaCha8Rng::seed_from_u64(seed), seed % 3 == 0);
        assert!(infer_relations(&g, &cfg)
            .iter()
            .all(|r| r.predicate.is_stored()));
    }
}

#[test]
fn round_trip_on_random_scenes() {
    let cfg = RelationConfig::default();
    for seed in 0..200u64 {
        let g = random_scene(&mut ChaCha8Rng::seed_from_u64(seed), false);
        let g = SceneGraph::from_parts(
            "r",
            g.nodes().cloned().collect::<Vec<_>>(),
            infer_relations(&g, &cfg),
        )
        .unwrap();
        let text = serialize(&g);
        let back = deserialize(&text).unwrap();
        assert!(back.content_eq(&g), "seed {seed}");
        assert_eq!(serialize(&back), text);
    }
}

proptest! {
    #[test]
    fn insertion_order_does_not_matter(seed in any::<u64>(), rotate in 0usize..10) {
        let cfg = RelationConfig::default();
        let g = random_scene(&mut ChaCha8Rng::seed_from_u64(seed), false);
        let mut nodes: Vec<ObjectNode> = g.nodes().cloned().collect();
        if !nodes.is_empty() {
            let k = rotate % nodes.len();
            nodes.rotate_left(k);
        }
        nodes.reverse();
        let h = SceneGraph::from_parts("p", nodes, vec![]).unwrap();
        prop_assert_eq!(infer_relations(&g, &cfg), infer_relations(&h, &cfg));
    }
}
