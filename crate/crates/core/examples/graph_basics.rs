//! Builds a tiny classifier graph by hand: two leaf concepts over initial
//! features, feature-node copies of them, and a composite on top. Then seeds
//! a pool, spawns random copies of the composite and validates everything.
//!
//! cargo run --example graph_basics

use classigraph::features::{HaarKind, InitialFeature};
use classigraph::graph::{
    seed_initial_pool, spawn_feature_nodes, validate_graph, ClassifierGraph, ConceptKind, FeaturePool, FeatureSource,
    Geometry, GraphParams, InitialPoolConfig, Sampler,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut graph = ClassifierGraph::new(GraphParams::default());
    let mut pool = FeaturePool::default();
    let seeded = seed_initial_pool(&mut graph, &mut pool, &InitialPoolConfig::default())?;
    println!("initial pool: {} feature nodes", seeded.len());

    let edge = graph.add_concept_node(
        ConceptKind::Leaf { feature: InitialFeature::Haar { kind: HaarKind::TwoRectVert }, weights: vec![4.0], bias: -1.0 },
        0,
    )?;
    let texture = graph.add_concept_node(
        ConceptKind::Leaf {
            feature: InitialFeature::Gradient { cells: 1, bins: 4 },
            weights: vec![1.0, -1.0, 1.0, -1.0],
            bias: 0.0,
        },
        0,
    )?;

    // Feature nodes are cheap copies: a concept id plus location, scale and search area.
    let top = graph.add_feature_node(FeatureSource::Concept(edge), Geometry::new([0.5, 0.25], [0.5, 0.5], [0.1, 0.1]))?;
    let bottom = graph.add_feature_node(FeatureSource::Concept(texture), Geometry::new([0.5, 0.75], [0.5, 0.5], [0.0, 0.0]))?;
    let whole = graph.add_concept_node(ConceptKind::Composite { parents: vec![top, bottom], weights: vec![2.0, 2.0], bias: -2.0 }, 1)?;
    graph.register_class("thing", whole)?;

    // Parents must already exist, so a composite can never close a cycle.
    let dangling = ConceptKind::Composite { parents: vec![classigraph::graph::FeatureId(9999)], weights: vec![1.0], bias: 0.0 };
    println!("dangling parent rejected: {}", graph.check_concept(&dangling).unwrap_err());

    let sampler = Sampler { n_copies: 50, ..Sampler::desk() };
    let spawn = spawn_feature_nodes(&mut graph, &mut pool, whole, &sampler, 42, 1)?;
    println!("spawned {} copies of {whole}: {} new, {} duplicates", spawn.ids.len(), spawn.inserted, spawn.duplicates);

    validate_graph(&graph).map_err(|v| format!("{v:?}"))?;
    println!(
        "graph: {} concepts, {} feature nodes, depth of {whole} = {}, subgraph {:?}",
        graph.concept_count(),
        graph.feature_count(),
        graph.depth(whole),
        graph.subgraph(whole)
    );
    println!("pool: {} entries", pool.len());
    Ok(())
}
