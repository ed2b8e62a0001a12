//! Cross-view leaf graph and the two-stage greedy grouping with rewiring,
//! followed by residual-node parent substitution.
//!
//! Nodes start as the leaves of every frame's forest; edges connect
//! cross-frame pairs and carry both similarities. Grouping repeatedly merges
//! the best pair above the stage threshold; merged nodes are rewired with
//! mean pairwise similarities over their constituents. Leaves left ungrouped
//! are residual; when all of a parent's leaf descendants are residual, the
//! parent replaces them and grouping reruns.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::embedding::Embedding;
use crate::grouping::occupancy::{
    semantic_similarity, spatial_similarity, NodeKey, SparseOccupancy,
};
use crate::mask::hierarchy::InstanceForest;

/// Everything needed to score a pair of mask nodes.
pub struct SimilarityContext<'a> {
    pub occupancies: &'a HashMap<NodeKey, SparseOccupancy>,
    pub forests: &'a [InstanceForest],
    /// Normalized super-voxel weights indexed by id.
    pub weights: &'a [f64],
    pub epsilon: f64,
    cache: HashMap<(NodeKey, NodeKey), (f64, f64)>,
}

impl<'a> SimilarityContext<'a> {
    pub fn new(
        occupancies: &'a HashMap<NodeKey, SparseOccupancy>,
        forests: &'a [InstanceForest],
        weights: &'a [f64],
        epsilon: f64,
    ) -> Self {
        SimilarityContext {
            occupancies,
            forests,
            weights,
            epsilon,
            cache: HashMap::new(),
        }
    }

    pub fn embedding(&self, key: NodeKey) -> &Embedding {
        &self.forests[key.frame as usize].nodes[key.node as usize].embedding
    }

    pub fn mask_area(&self, key: NodeKey) -> u32 {
        self.forests[key.frame as usize].nodes[key.node as usize].area
    }

    /// (spatial, semantic) similarity of a cross-frame mask-node pair.
    pub fn pair(&mut self, a: NodeKey, b: NodeKey) -> (f64, f64) {
        debug_assert_ne!(a.frame, b.frame, "same-frame pairs carry no similarity");
        let key = if a <= b { (a, b) } else { (b, a) };
        if let Some(&v) = self.cache.get(&key) {
            return v;
        }
        let empty: SparseOccupancy = Vec::new();
        let oa = self.occupancies.get(&key.0).unwrap_or(&empty);
        let ob = self.occupancies.get(&key.1).unwrap_or(&empty);
        let spat = spatial_similarity(oa, ob, self.weights, self.epsilon);
        let sem = semantic_similarity(self.embedding(key.0), self.embedding(key.1))
            .expect("embeddings in one bundle share a dimension");
        self.cache.insert(key, (spat, sem));
        (spat, sem)
    }

    /// Precompute pair similarities in parallel (results identical to lazy
    /// evaluation; only fills the cache).
    pub fn warm_cache(&mut self, pairs: &[(NodeKey, NodeKey)]) {
        let missing: Vec<(NodeKey, NodeKey)> = pairs
            .iter()
            .map(|&(a, b)| if a <= b { (a, b) } else { (b, a) })
            .filter(|k| !self.cache.contains_key(k))
            .collect();
        let empty: SparseOccupancy = Vec::new();
        let computed: Vec<_> = missing
            .par_iter()
            .map(|&(a, b)| {
                let oa = self.occupancies.get(&a).unwrap_or(&empty);
                let ob = self.occupancies.get(&b).unwrap_or(&empty);
                let spat = spatial_similarity(oa, ob, self.weights, self.epsilon);
                let sem = semantic_similarity(self.embedding(a), self.embedding(b))
                    .expect("embeddings in one bundle share a dimension");
                ((a, b), (spat, sem))
            })
            .collect();
        self.cache.extend(computed);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSims {
    pub spat: f64,
    pub sem: f64,
}

#[derive(Debug, Clone)]
pub struct GroupNode {
    pub id: u32,
    /// Constituent original mask nodes, sorted.
    pub members: Vec<NodeKey>,
    /// Frames covered by the members, sorted and deduplicated.
    pub frames: Vec<u32>,
    /// True once this node was produced by a merge.
    pub grouped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Spatial,
    Semantic,
}

impl EdgeSims {
    fn value(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Spatial => self.spat,
            Stage::Semantic => self.sem,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct GroupingStats {
    pub merges: usize,
    pub rejected_same_frame: usize,
    pub substitution_rounds: usize,
    pub substitutions: usize,
    pub original_leaf_count: usize,
    pub removed_by_substitution: usize,
    pub added_by_substitution: usize,
}

pub struct LeafGraph {
    pub nodes: BTreeMap<u32, GroupNode>,
    edges: BTreeMap<(u32, u32), EdgeSims>,
    adjacency: BTreeMap<u32, BTreeSet<u32>>,
    member_of: HashMap<NodeKey, u32>,
    next_id: u32,
    pub stats: GroupingStats,
}

impl LeafGraph {
    pub fn edge(&self, u: u32, v: u32) -> Option<&EdgeSims> {
        self.edges.get(&ordered(u, v))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&(u32, u32), &EdgeSims)> {
        self.edges.iter()
    }

    pub fn neighbors(&self, u: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency.get(&u).into_iter().flatten().copied()
    }

    fn insert_edge(&mut self, u: u32, v: u32, sims: EdgeSims) {
        self.edges.insert(ordered(u, v), sims);
        self.adjacency.entry(u).or_default().insert(v);
        self.adjacency.entry(v).or_default().insert(u);
    }

    fn remove_edge(&mut self, u: u32, v: u32) {
        self.edges.remove(&ordered(u, v));
        if let Some(s) = self.adjacency.get_mut(&u) {
            s.remove(&v);
        }
        if let Some(s) = self.adjacency.get_mut(&v) {
            s.remove(&u);
        }
    }

    fn remove_node(&mut self, u: u32) {
        let neighbors: Vec<u32> = self.neighbors(u).collect();
        for n in neighbors {
            self.remove_edge(u, n);
        }
        self.adjacency.remove(&u);
        if let Some(node) = self.nodes.remove(&u) {
            for m in node.members {
                self.member_of.remove(&m);
            }
        }
    }

    fn add_singleton(&mut self, key: NodeKey) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            id,
            GroupNode {
                id,
                members: vec![key],
                frames: vec![key.frame],
                grouped: false,
            },
        );
        self.adjacency.entry(id).or_default();
        self.member_of.insert(key, id);
        id
    }

    /// Sum of |Set(w)| over nodes; conserved by grouping, shifted by
    /// substitutions.
    pub fn total_member_count(&self) -> usize {
        self.nodes.values().map(|n| n.members.len()).sum()
    }

    /// Graph node currently containing the given mask node, if any.
    pub fn node_of_member(&self, key: NodeKey) -> Option<u32> {
        self.member_of.get(&key).copied()
    }
}

fn ordered(u: u32, v: u32) -> (u32, u32) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Mean pairwise similarities over cross-frame constituent pairs, or `None`
/// when every pair shares a frame.
fn mean_pair_sims(
    ctx: &mut SimilarityContext,
    members_a: &[NodeKey],
    members_b: &[NodeKey],
) -> Option<EdgeSims> {
    let (mut spat, mut sem, mut n) = (0.0, 0.0, 0usize);
    for &a in members_a {
        for &b in members_b {
            if a.frame == b.frame {
                continue;
            }
            let (s, m) = ctx.pair(a, b);
            spat += s;
            sem += m;
            n += 1;
        }
    }
    (n > 0).then(|| EdgeSims {
        spat: spat / n as f64,
        sem: sem / n as f64,
    })
}

/// Build the initial graph: one node per leaf, edges between all
/// cross-frame leaf pairs.
pub fn construct_leaf_graph(
    forests: &[InstanceForest],
    ctx: &mut SimilarityContext,
) -> LeafGraph {
    let mut graph = LeafGraph {
        nodes: BTreeMap::new(),
        edges: BTreeMap::new(),
        adjacency: BTreeMap::new(),
        member_of: HashMap::new(),
        next_id: 0,
        stats: GroupingStats::default(),
    };
    let mut ids: Vec<(u32, NodeKey)> = Vec::new();
    for forest in forests {
        for &leaf in &forest.leaves {
            let key = NodeKey {
                frame: forest.frame,
                node: leaf,
            };
            let id = graph.add_singleton(key);
            ids.push((id, key));
        }
    }
    graph.stats.original_leaf_count = ids.len();

    let mut pairs = Vec::new();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            if ids[i].1.frame != ids[j].1.frame {
                pairs.push((ids[i].1, ids[j].1));
            }
        }
    }
    ctx.warm_cache(&pairs);
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            let (ida, a) = ids[i];
            let (idb, b) = ids[j];
            if a.frame == b.frame {
                continue;
            }
            let (spat, sem) = ctx.pair(a, b);
            graph.insert_edge(ida, idb, EdgeSims { spat, sem });
        }
    }
    graph
}

pub enum MergeOutcome {
    Merged(u32),
    RejectedSameFrame,
}

/// Merge nodes u and v into a new node w and rewire w's edges as mean
/// pairwise similarities. A merge that would put two masks of one frame in
/// the same node is rejected and the offending edge removed.
pub fn group_and_rewire(
    graph: &mut LeafGraph,
    ctx: &mut SimilarityContext,
    u: u32,
    v: u32,
) -> MergeOutcome {
    let nu = &graph.nodes[&u];
    let nv = &graph.nodes[&v];
    if nu.frames.iter().any(|f| nv.frames.binary_search(f).is_ok()) {
        graph.remove_edge(u, v);
        graph.stats.rejected_same_frame += 1;
        return MergeOutcome::RejectedSameFrame;
    }

    let mut members: Vec<NodeKey> = nu.members.iter().chain(nv.members.iter()).copied().collect();
    members.sort_unstable();
    let mut frames: Vec<u32> = nu.frames.iter().chain(nv.frames.iter()).copied().collect();
    frames.sort_unstable();
    frames.dedup();

    let rewire_targets: BTreeSet<u32> = graph
        .neighbors(u)
        .chain(graph.neighbors(v))
        .filter(|&x| x != u && x != v)
        .collect();

    let w = graph.next_id;
    graph.next_id += 1;

    let mut new_edges = Vec::new();
    for &x in &rewire_targets {
        if let Some(sims) = mean_pair_sims(ctx, &members, &graph.nodes[&x].members) {
            new_edges.push((x, sims));
        }
    }

    graph.remove_node(u);
    graph.remove_node(v);
    for &m in &members {
        graph.member_of.insert(m, w);
    }
    graph.nodes.insert(
        w,
        GroupNode {
            id: w,
            members,
            frames,
            grouped: true,
        },
    );
    graph.adjacency.entry(w).or_default();
    for (x, sims) in new_edges {
        graph.insert_edge(w, x, sims);
    }
    graph.stats.merges += 1;
    MergeOutcome::Merged(w)
}

fn best_edge(graph: &LeafGraph, stage: Stage, threshold: f64) -> Option<(u32, u32)> {
    let mut best: Option<((u32, u32), f64)> = None;
    for (&pair, sims) in &graph.edges {
        let value = sims.value(stage);
        if value < threshold {
            continue;
        }
        // Strictly-greater keeps the lexicographically smallest pair on ties
        // (BTreeMap iterates in key order).
        match best {
            Some((_, bv)) if value <= bv => {}
            _ => best = Some((pair, value)),
        }
    }
    best.map(|(pair, _)| pair)
}

/// Two-stage greedy grouping: spatial similarity first, then semantic.
pub fn group_by_similarity(
    graph: &mut LeafGraph,
    ctx: &mut SimilarityContext,
    tau_spat: f64,
    tau_sem: f64,
) {
    for (stage, tau) in [(Stage::Spatial, tau_spat), (Stage::Semantic, tau_sem)] {
        while let Some((u, v)) = best_edge(graph, stage, tau) {
            group_and_rewire(graph, ctx, u, v);
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct SubstitutionReport {
    /// Substitute-and-regroup rounds actually executed.
    pub rounds: usize,
    /// Parent substitutions applied in total.
    pub substitutions: usize,
}

/// Replace residual leaves by their parent when all of the parent's other
/// leaf descendants are residual too, then regroup; repeats until no
/// substitution applies, bounded by the maximum tree depth.
pub fn substitute_residuals(
    graph: &mut LeafGraph,
    ctx: &mut SimilarityContext,
    tau_spat: f64,
    tau_sem: f64,
) -> SubstitutionReport {
    let max_rounds = ctx
        .forests
        .iter()
        .map(|f| f.max_depth())
        .max()
        .unwrap_or(0);
    let mut report = SubstitutionReport::default();

    for _ in 0..max_rounds {
        // Candidate parents of current residual singletons, deepest first so
        // one round only lifts one level.
        let mut candidates: Vec<NodeKey> = Vec::new();
        for node in graph.nodes.values() {
            if node.grouped || node.members.len() != 1 {
                continue;
            }
            let m = node.members[0];
            let forest = &ctx.forests[m.frame as usize];
            if let Some(parent) = forest.nodes[m.node as usize].parent {
                candidates.push(NodeKey {
                    frame: m.frame,
                    node: parent,
                });
            }
        }
        candidates.sort_unstable();
        candidates.dedup();

        let mut applied = 0usize;
        for parent in candidates {
            let forest = &ctx.forests[parent.frame as usize];
            // Judge each original leaf under the parent by the graph node
            // currently holding it (or its substituted ancestor).
            let mut to_remove: BTreeSet<u32> = BTreeSet::new();
            let mut all_residual = true;
            let mut any_present = false;
            for leaf in forest.leaf_descendants(parent.node) {
                let mut cursor = Some(leaf);
                let mut holder = None;
                while let Some(idx) = cursor {
                    if idx == parent.node {
                        break;
                    }
                    if let Some(g) = graph.node_of_member(NodeKey {
                        frame: parent.frame,
                        node: idx,
                    }) {
                        holder = Some(g);
                        break;
                    }
                    cursor = forest.nodes[idx as usize].parent;
                }
                match holder {
                    Some(g) => {
                        any_present = true;
                        let gn = &graph.nodes[&g];
                        if gn.grouped || gn.members.len() != 1 {
                            all_residual = false;
                            break;
                        }
                        to_remove.insert(g);
                    }
                    None => {
                        // Subtree already lifted above this parent.
                        all_residual = false;
                        break;
                    }
                }
            }
            if !all_residual || !any_present {
                continue;
            }

            for g in &to_remove {
                graph.remove_node(*g);
                graph.stats.removed_by_substitution += 1;
            }
            let new_id = graph.add_singleton(parent);
            graph.stats.added_by_substitution += 1;

            let others: Vec<u32> = graph
                .nodes
                .keys()
                .copied()
                .filter(|&x| x != new_id)
                .collect();
            for x in others {
                let sims = mean_pair_sims(ctx, &[parent], &graph.nodes[&x].members);
                if let Some(sims) = sims {
                    graph.insert_edge(new_id, x, sims);
                }
            }
            applied += 1;
        }

        if applied == 0 {
            break;
        }
        report.substitutions += applied;
        report.rounds += 1;
        group_by_similarity(graph, ctx, tau_spat, tau_sem);
    }

    graph.stats.substitution_rounds = report.rounds;
    graph.stats.substitutions = report.substitutions;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Embedding;
    use crate::mask::hierarchy::{InstanceForest, MaskNode};
    use crate::mask::rle::RleMask;

    fn unit(values: Vec<f64>) -> Embedding {
        Embedding::from_raw(values).unwrap()
    }

    fn leaf_node(frame: u32, mask_id: u32, e: Embedding) -> MaskNode {
        MaskNode {
            mask_id,
            frame,
            rle: RleMask::new(4, 4, vec![(0, 1)]).unwrap(),
            area: 1,
            parent: None,
            children: vec![],
            embedding: e,
        }
    }

    /// Forest of independent leaves (no hierarchy).
    fn flat_forest(frame: u32, embeddings: Vec<Embedding>) -> InstanceForest {
        let nodes: Vec<MaskNode> = embeddings
            .into_iter()
            .enumerate()
            .map(|(i, e)| leaf_node(frame, i as u32, e))
            .collect();
        let idx: Vec<u32> = (0..nodes.len() as u32).collect();
        InstanceForest {
            frame,
            nodes,
            roots: idx.clone(),
            leaves: idx,
            aliases: vec![],
        }
    }

    /// Forest with one parent (arena 0) and two child leaves (1, 2).
    fn split_forest(frame: u32, e: Embedding) -> InstanceForest {
        let mut parent = leaf_node(frame, 0, e.clone());
        parent.children = vec![1, 2];
        parent.area = 4;
        let mut l1 = leaf_node(frame, 1, e.clone());
        l1.parent = Some(0);
        let mut l2 = leaf_node(frame, 2, e);
        l2.parent = Some(0);
        InstanceForest {
            frame,
            nodes: vec![parent, l1, l2],
            roots: vec![0],
            leaves: vec![1, 2],
            aliases: vec![],
        }
    }

    fn key(frame: u32, node: u32) -> NodeKey {
        NodeKey { frame, node }
    }

    const EPS: f64 = 1e-12;

    #[test]
    fn edge_counts_follow_frame_constraint() {
        let e = unit(vec![1.0, 0.0]);
        let occ: HashMap<NodeKey, SparseOccupancy> = HashMap::new();
        let w: Vec<f64> = vec![];

        // 2 frames x 3 leaves -> 9 edges
        let forests = vec![
            flat_forest(0, vec![e.clone(), e.clone(), e.clone()]),
            flat_forest(1, vec![e.clone(), e.clone(), e.clone()]),
        ];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let graph = construct_leaf_graph(&forests, &mut ctx);
        assert_eq!(graph.edge_count(), 9);

        // single frame -> no edges
        let forests = vec![flat_forest(0, vec![e.clone(), e.clone()])];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let graph = construct_leaf_graph(&forests, &mut ctx);
        assert_eq!(graph.edge_count(), 0);

        // 3 frames x 2 leaves -> 12 edges
        let forests = vec![
            flat_forest(0, vec![e.clone(), e.clone()]),
            flat_forest(1, vec![e.clone(), e.clone()]),
            flat_forest(2, vec![e.clone(), e.clone()]),
        ];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let graph = construct_leaf_graph(&forests, &mut ctx);
        assert_eq!(graph.edge_count(), 12);
    }

    #[test]
    fn rewired_edge_is_the_mean_of_pairwise_similarities() {
        let e = unit(vec![1.0, 0.0]);
        // frames 0, 1, 2 with one leaf each; spatial sims controlled via
        // occupancy: s(a,c) = 0.8, s(b,c) = 0.6, s(a,b) = 0.48
        let forests = vec![
            flat_forest(0, vec![e.clone()]),
            flat_forest(1, vec![e.clone()]),
            flat_forest(2, vec![e.clone()]),
        ];
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 1.0)]);
        occ.insert(key(1, 0), vec![(0u32, 0.48)]);
        occ.insert(key(2, 0), vec![(0u32, 0.8)]);
        let w = vec![1.0];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);

        // merge node of frame 0 (id 0) with node of frame 1 (id 1)
        let outcome = group_and_rewire(&mut graph, &mut ctx, 0, 1);
        let MergeOutcome::Merged(wid) = outcome else {
            panic!("merge rejected");
        };
        let edge = graph.edge(wid, 2).expect("rewired edge");
        assert!((edge.spat - 0.7).abs() < 1e-9, "spat = {}", edge.spat);
        assert!((edge.sem - 1.0).abs() < 1e-9);
    }

    #[test]
    fn merge_without_shared_neighbors_leaves_no_edges() {
        let e = unit(vec![1.0, 0.0]);
        let forests = vec![
            flat_forest(0, vec![e.clone()]),
            flat_forest(1, vec![e.clone()]),
        ];
        let occ = HashMap::new();
        let w: Vec<f64> = vec![];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);
        let MergeOutcome::Merged(wid) = group_and_rewire(&mut graph, &mut ctx, 0, 1) else {
            panic!("merge rejected");
        };
        assert_eq!(graph.neighbors(wid).count(), 0);
        assert_eq!(graph.edge_count(), 0);
    }

    #[test]
    fn same_frame_merge_is_rejected_and_edge_removed() {
        let e = unit(vec![1.0, 0.0]);
        // two leaves in frame 0, two in frame 1; merge {0a,1a} and {0b,1b},
        // then try to merge the two groups (both span frames 0 and 1)
        let forests = vec![
            flat_forest(0, vec![e.clone(), e.clone()]),
            flat_forest(1, vec![e.clone(), e.clone()]),
        ];
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 1.0)]);
        occ.insert(key(1, 0), vec![(0u32, 1.0)]);
        occ.insert(key(0, 1), vec![(1u32, 1.0)]);
        occ.insert(key(1, 1), vec![(1u32, 1.0)]);
        let w = vec![0.5, 0.5];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);
        // graph ids: 0 = (f0,0), 1 = (f0,1), 2 = (f1,0), 3 = (f1,1)
        let MergeOutcome::Merged(w1) = group_and_rewire(&mut graph, &mut ctx, 0, 2) else {
            panic!()
        };
        let MergeOutcome::Merged(w2) = group_and_rewire(&mut graph, &mut ctx, 1, 3) else {
            panic!()
        };
        assert!(graph.edge(w1, w2).is_some());
        let before = graph.nodes.len();
        assert!(matches!(
            group_and_rewire(&mut graph, &mut ctx, w1, w2),
            MergeOutcome::RejectedSameFrame
        ));
        assert_eq!(graph.nodes.len(), before);
        assert!(graph.edge(w1, w2).is_none(), "offending edge removed");
    }

    #[test]
    fn below_threshold_graph_is_unchanged() {
        let ea = unit(vec![1.0, 0.0]);
        let eb = unit(vec![0.0, 1.0]);
        let forests = vec![flat_forest(0, vec![ea.clone()]), flat_forest(1, vec![eb])];
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 1.0)]);
        occ.insert(key(1, 0), vec![(1u32, 1.0)]);
        let w = vec![0.5, 0.5];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);
        group_by_similarity(&mut graph, &mut ctx, 0.5, 0.65);
        assert_eq!(graph.nodes.len(), 2);
        assert!(graph.nodes.values().all(|n| !n.grouped));
        assert_eq!(graph.stats.merges, 0);
    }

    #[test]
    fn no_edge_satisfies_stage_threshold_after_grouping() {
        let e = unit(vec![1.0, 0.0]);
        let forests = vec![
            flat_forest(0, vec![e.clone(), e.clone()]),
            flat_forest(1, vec![e.clone(), e.clone()]),
            flat_forest(2, vec![e.clone()]),
        ];
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 1.0)]);
        occ.insert(key(1, 0), vec![(0u32, 0.9)]);
        occ.insert(key(2, 0), vec![(0u32, 0.7)]);
        occ.insert(key(0, 1), vec![(1u32, 1.0)]);
        occ.insert(key(1, 1), vec![(1u32, 0.8)]);
        let w = vec![0.5, 0.5];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);
        let (tau_spat, tau_sem) = (0.5, 2.0); // semantic stage disabled
        group_by_similarity(&mut graph, &mut ctx, tau_spat, tau_sem);
        for (_, sims) in graph.edges() {
            assert!(sims.spat < tau_spat);
        }
    }

    #[test]
    fn residual_substitution_recovers_split_object() {
        let e = unit(vec![1.0, 0.0]);
        // frame 0: parent mask split into two fragment leaves; frame 1: one
        // full leaf. Fragment-vs-full similarity stays below threshold, the
        // parent matches the full leaf exactly.
        let forests = vec![split_forest(0, e.clone()), flat_forest(1, vec![e.clone()])];
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 1.0), (1u32, 1.0)]); // parent
        occ.insert(key(0, 1), vec![(0u32, 1.0)]); // fragment a
        occ.insert(key(0, 2), vec![(1u32, 1.0)]); // fragment b
        occ.insert(key(1, 0), vec![(0u32, 1.0), (1u32, 1.0)]); // full view
        let w = vec![0.5, 0.5];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);
        let (tau_spat, tau_sem) = (0.6, 2.0);
        group_by_similarity(&mut graph, &mut ctx, tau_spat, tau_sem);
        assert_eq!(graph.stats.merges, 0, "fragments must stay residual");

        let report = substitute_residuals(&mut graph, &mut ctx, tau_spat, tau_sem);
        assert_eq!(report.rounds, 1);
        assert_eq!(report.substitutions, 1);
        assert_eq!(graph.nodes.len(), 1, "parent grouped with the full view");
        let node = graph.nodes.values().next().unwrap();
        let mut members = node.members.clone();
        members.sort();
        assert_eq!(members, vec![key(0, 0), key(1, 0)]);
    }

    #[test]
    fn no_substitution_when_a_sibling_is_grouped() {
        let e = unit(vec![1.0, 0.0]);
        let forests = vec![split_forest(0, e.clone()), flat_forest(1, vec![e.clone()])];
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 1.0), (1u32, 1.0)]);
        occ.insert(key(0, 1), vec![(0u32, 1.0)]); // fragment a matches full
        occ.insert(key(0, 2), vec![(2u32, 1.0)]); // fragment b matches nothing
        occ.insert(key(1, 0), vec![(0u32, 1.0)]);
        let w = vec![0.4, 0.3, 0.3];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);
        let (tau_spat, tau_sem) = (0.6, 2.0);
        group_by_similarity(&mut graph, &mut ctx, tau_spat, tau_sem);
        assert_eq!(graph.stats.merges, 1, "fragment a groups with the full view");

        let before: Vec<u32> = graph.nodes.keys().copied().collect();
        let report = substitute_residuals(&mut graph, &mut ctx, tau_spat, tau_sem);
        assert_eq!(report.substitutions, 0);
        let after: Vec<u32> = graph.nodes.keys().copied().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn no_residuals_leaves_graph_unchanged() {
        let e = unit(vec![1.0, 0.0]);
        let forests = vec![
            flat_forest(0, vec![e.clone()]),
            flat_forest(1, vec![e.clone()]),
        ];
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 1.0)]);
        occ.insert(key(1, 0), vec![(0u32, 1.0)]);
        let w = vec![1.0];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);
        group_by_similarity(&mut graph, &mut ctx, 0.5, 0.65);
        assert_eq!(graph.nodes.len(), 1);
        let report = substitute_residuals(&mut graph, &mut ctx, 0.5, 0.65);
        assert_eq!(report.rounds, 0);
        assert_eq!(report.substitutions, 0);
    }

    #[test]
    fn member_count_ledger_is_conserved() {
        let e = unit(vec![1.0, 0.0]);
        let forests = vec![split_forest(0, e.clone()), flat_forest(1, vec![e.clone()])];
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 1.0), (1u32, 1.0)]);
        occ.insert(key(0, 1), vec![(0u32, 1.0)]);
        occ.insert(key(0, 2), vec![(1u32, 1.0)]);
        occ.insert(key(1, 0), vec![(0u32, 1.0), (1u32, 1.0)]);
        let w = vec![0.5, 0.5];
        let mut ctx = SimilarityContext::new(&occ, &forests, &w, EPS);
        let mut graph = construct_leaf_graph(&forests, &mut ctx);
        group_by_similarity(&mut graph, &mut ctx, 0.6, 2.0);
        substitute_residuals(&mut graph, &mut ctx, 0.6, 2.0);
        let expect = graph.stats.original_leaf_count - graph.stats.removed_by_substitution
            + graph.stats.added_by_substitution;
        assert_eq!(graph.total_member_count(), expect);
    }
}

/// Human-readable dump of nodes and edges for debugging and regression diffs.
pub fn dump_graph(graph: &LeafGraph) -> String {
    let mut out = String::new();
    for node in graph.nodes.values() {
        out.push_str(&format!(
            "node {} grouped={} frames={:?} members={:?}\n",
            node.id,
            node.grouped,
            node.frames,
            node.members
                .iter()
                .map(|m| (m.frame, m.node))
                .collect::<Vec<_>>()
        ));
    }
    for (&(u, v), sims) in graph.edges() {
        out.push_str(&format!(
            "edge {u} {v} s_spat={:.6} s_sem={:.6}\n",
            sims.spat, sims.sem
        ));
    }
    out
}
