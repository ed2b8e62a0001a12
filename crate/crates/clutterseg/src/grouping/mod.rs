//! Cross-view instance grouping over the leaf graph.

pub mod graph;
pub mod occupancy;

pub use graph::{
    construct_leaf_graph, dump_graph, group_and_rewire, group_by_similarity,
    substitute_residuals, GroupNode, LeafGraph, SimilarityContext,
};
pub use occupancy::{
    build_occupancy_table, compute_occupancy, project_cloud_to_frame, semantic_similarity,
    spatial_similarity, FrameProjection, NodeKey, SparseOccupancy,
};
