//! Graph Voronoi partition of the topological graph by multi-source
//! Dijkstra, from one agent's view (local) and over all history nodes
//! (global).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::dtg::{AgentId, EroiId, EroiState, MrDtg, NodeId, NodeRef};

/// Vertex of a partition graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Uav(AgentId),
    Node(NodeRef),
}

/// Undirected weighted graph with a set of source vertices.
#[derive(Debug, Clone)]
pub struct SearchGraph<K> {
    keys: Vec<K>,
    index: BTreeMap<K, usize>,
    adj: Vec<Vec<(usize, f64)>>,
    sources: BTreeSet<K>,
}

impl<K: Ord + Copy> Default for SearchGraph<K> {
    fn default() -> Self {
        Self {
            keys: Vec::new(),
            index: BTreeMap::new(),
            adj: Vec::new(),
            sources: BTreeSet::new(),
        }
    }
}

impl<K: Ord + Copy> SearchGraph<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, k: K) -> usize {
        if let Some(i) = self.index.get(&k) {
            return *i;
        }
        let i = self.keys.len();
        self.keys.push(k);
        self.index.insert(k, i);
        self.adj.push(Vec::new());
        i
    }

    /// Adds both directions. Weights must be finite and non-negative.
    pub fn add_edge(&mut self, a: K, b: K, w: f64) {
        debug_assert!(w >= 0.0 && w.is_finite());
        let (i, j) = (self.add_node(a), self.add_node(b));
        self.adj[i].push((j, w));
        self.adj[j].push((i, w));
    }

    pub fn add_source(&mut self, k: K) {
        self.add_node(k);
        self.sources.insert(k);
    }

    pub fn contains(&self, k: &K) -> bool {
        self.index.contains_key(k)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &K> {
        self.keys.iter()
    }

    pub fn node_count(&self) -> usize {
        self.keys.len()
    }

    pub fn sources(&self) -> &BTreeSet<K> {
        &self.sources
    }

    pub fn neighbors(&self, k: &K) -> impl Iterator<Item = (K, f64)> + '_ {
        let i = self.index.get(k).copied();
        i.into_iter().flat_map(move |i| self.adj[i].iter().map(|(j, w)| (self.keys[*j], *w)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult<K> {
    pub owner: BTreeMap<K, K>,
    pub dist: BTreeMap<K, f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct Label(f64, usize);

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// One sweep from all sources at once. Labels compare by (distance, source
/// rank), so a tie goes to the smallest source.
pub fn multi_source_dijkstra<K: Ord + Copy>(g: &SearchGraph<K>) -> PartitionResult<K> {
    let n = g.keys.len();
    let sources: Vec<usize> = g.sources.iter().map(|s| g.index[s]).collect();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for (rank, &s) in sources.iter().enumerate() {
        let l = Label(0.0, rank);
        if best[s].is_none_or(|b| l < b) {
            best[s] = Some(l);
            heap.push(Reverse((l, s)));
        }
    }
    while let Some(Reverse((l, u))) = heap.pop() {
        if done[u] || best[u] != Some(l) {
            continue;
        }
        done[u] = true;
        for &(v, w) in &g.adj[u] {
            let cand = Label(l.0 + w, l.1);
            if !done[v] && best[v].is_none_or(|b| cand < b) {
                best[v] = Some(cand);
                heap.push(Reverse((cand, v)));
            }
        }
    }
    let mut owner = BTreeMap::new();
    let mut dist = BTreeMap::new();
    for (i, b) in best.iter().enumerate() {
        if let Some(Label(d, rank)) = b {
            owner.insert(g.keys[i], g.keys[sources[*rank]]);
            dist.insert(g.keys[i], *d);
        }
    }
    PartitionResult { owner, dist }
}

fn live_link(dtg: &MrDtg, r: &NodeRef) -> bool {
    match r {
        NodeRef::History(n) => dtg.node(*n).is_some(),
        NodeRef::Eroi(e) => dtg.eroi(*e).is_some_and(|x| x.state == EroiState::Active),
    }
}

/// The querying agent's neighbourhood: nodes it links to, active regions it
/// links to or that hang off those nodes, and the other agents linked to
/// any of them.
pub fn build_local_graph(dtg: &MrDtg, agent: AgentId) -> SearchGraph<Vertex> {
    let mut g = SearchGraph::new();
    g.add_source(Vertex::Uav(agent));
    let Some(own) = dtg.links_of(agent) else { return g };
    let mut hist: BTreeSet<NodeId> = BTreeSet::new();
    let mut erois: BTreeSet<EroiId> = BTreeSet::new();
    for r in own.keys().filter(|r| live_link(dtg, r)) {
        match r {
            NodeRef::History(n) => {
                hist.insert(*n);
            }
            NodeRef::Eroi(e) => {
                erois.insert(*e);
            }
        }
    }
    let mut eroi_edges = Vec::new();
    for eroi in dtg.erois() {
        if eroi.state != EroiState::Active {
            continue;
        }
        if let Some(edge) = dtg.eroi_edge(eroi.id) {
            let (_, n) = edge.id.as_eroi_edge().expect("region edge");
            if hist.contains(&n) {
                erois.insert(eroi.id);
                eroi_edges.push((n, eroi.id, edge.weight));
            }
        }
    }
    let included = |r: &NodeRef| match r {
        NodeRef::History(n) => hist.contains(n),
        NodeRef::Eroi(e) => erois.contains(e),
    };
    for (a, links) in dtg.uav_links() {
        let touching: Vec<(&NodeRef, &f64)> = links.iter().filter(|(r, _)| included(r)).collect();
        if *a != agent && touching.is_empty() {
            continue;
        }
        g.add_source(Vertex::Uav(*a));
        for (r, d) in touching {
            g.add_edge(Vertex::Uav(*a), Vertex::Node(*r), *d);
        }
    }
    for e in dtg.history_edges().values() {
        if let Some((x, y)) = e.id.as_history_edge() {
            if hist.contains(&x) && hist.contains(&y) {
                g.add_edge(Vertex::Node(e.id.a), Vertex::Node(e.id.b), e.weight);
            }
        }
    }
    for (n, e, w) in eroi_edges {
        g.add_edge(Vertex::Node(NodeRef::History(n)), Vertex::Node(NodeRef::Eroi(e)), w);
    }
    g
}

/// Regions of the local graph closest to `agent`, by ascending id, with
/// their graph distance.
pub fn local_partition(dtg: &MrDtg, agent: AgentId) -> BTreeMap<EroiId, f64> {
    let g = build_local_graph(dtg, agent);
    let r = multi_source_dijkstra(&g);
    r.owner
        .iter()
        .filter_map(|(v, o)| match (v, o) {
            (Vertex::Node(NodeRef::Eroi(e)), Vertex::Uav(a)) if *a == agent => Some((*e, r.dist[v])),
            _ => None,
        })
        .collect()
}

/// All history nodes and all agents; agents attach through their links.
pub fn build_global_graph(dtg: &MrDtg) -> SearchGraph<Vertex> {
    let mut g = SearchGraph::new();
    for n in dtg.nodes().keys() {
        g.add_node(Vertex::Node(NodeRef::History(*n)));
    }
    for (a, links) in dtg.uav_links() {
        g.add_source(Vertex::Uav(*a));
        for (r, d) in links {
            if let NodeRef::History(n) = r {
                if dtg.node(*n).is_some() {
                    g.add_edge(Vertex::Uav(*a), Vertex::Node(*r), *d);
                }
            }
        }
    }
    for e in dtg.history_edges().values() {
        if let Some((x, y)) = e.id.as_history_edge() {
            if dtg.node(x).is_some() && dtg.node(y).is_some() {
                g.add_edge(Vertex::Node(e.id.a), Vertex::Node(e.id.b), e.weight);
            }
        }
    }
    g
}

/// Owner of every reachable history node, as seen on this replica.
pub fn global_ownership(dtg: &MrDtg) -> BTreeMap<NodeId, (AgentId, f64)> {
    let r = multi_source_dijkstra(&build_global_graph(dtg));
    r.owner
        .iter()
        .filter_map(|(v, o)| match (v, o) {
            (Vertex::Node(NodeRef::History(n)), Vertex::Uav(a)) => Some((*n, (*a, r.dist[v]))),
            _ => None,
        })
        .collect()
}

/// History nodes owned by `agent`, with its graph distance to each.
pub fn global_partition(dtg: &MrDtg, agent: AgentId) -> BTreeMap<NodeId, f64> {
    global_ownership(dtg)
        .into_iter()
        .filter(|(_, (a, _))| *a == agent)
        .map(|(n, (_, d))| (n, d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtg::{eroi_layout, DtgConfig, EdgeId, TopoEdge};
    use crate::world::{Aabb, Vec3, VoxelGrid};
    use proptest::prelude::*;

    fn h(a: u16, c: u32) -> NodeRef {
        NodeRef::History(NodeId::new(a, c))
    }

    fn edge(x: NodeRef, y: NodeRef, w: f64) -> TopoEdge {
        let id = EdgeId::new(x, y).unwrap();
        let vp = id.as_eroi_edge().map(|_| 0);
        TopoEdge::new(id, vp, &[Vec3::zeros(), Vec3::new(w, 0.0, 0.0)], 0)
    }

    /// Three nodes in a row, four regions, two agents at either end.
    fn two_agent_replica() -> MrDtg {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(20.0, 5.0, 3.0));
        let grid = VoxelGrid::new(&bounds, 0.2);
        let (layout, erois) = eroi_layout(&bounds, &grid, &DtgConfig::default());
        let mut g = MrDtg::new(layout, erois);
        for c in 0..3 {
            g.add_node(NodeId::new(0, c), Vec3::new(5.0 * c as f64, 0.0, 0.0));
        }
        g.upsert_edge(edge(h(0, 0), h(0, 1), 5.0)).unwrap();
        g.upsert_edge(edge(h(0, 1), h(0, 2), 5.0)).unwrap();
        for (e, n, w) in [(0, h(0, 0), 1.0), (1, h(0, 1), 1.5), (2, h(0, 2), 1.0), (3, h(0, 2), 2.0)] {
            g.advance_eroi(e, EroiState::Active).unwrap();
            g.upsert_edge(edge(n, NodeRef::Eroi(e), w)).unwrap();
        }
        g.set_links(0, [(h(0, 0), 1.0), (h(0, 1), 3.0), (NodeRef::Eroi(0), 2.0)].into_iter().collect());
        g.set_links(1, [(h(0, 2), 1.0), (h(0, 1), 2.0), (NodeRef::Eroi(3), 1.0)].into_iter().collect());
        g
    }

    #[test]
    fn local_graph_keeps_only_the_neighbourhood() {
        let g = two_agent_replica();
        let lg = build_local_graph(&g, 0);
        assert!(lg.contains(&Vertex::Node(h(0, 0))));
        assert!(lg.contains(&Vertex::Node(h(0, 1))));
        assert!(!lg.contains(&Vertex::Node(h(0, 2))));
        assert!(!lg.contains(&Vertex::Node(NodeRef::Eroi(2))));
        assert!(!lg.contains(&Vertex::Node(NodeRef::Eroi(3))));
        assert_eq!(lg.sources().len(), 2);
        let mine = local_partition(&g, 0);
        assert_eq!(mine.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert_eq!(mine[&0], 2.0);
        let theirs = local_partition(&g, 1);
        assert_eq!(theirs.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn lone_agent_gets_every_local_region() {
        let mut g = two_agent_replica();
        g.set_links(1, BTreeMap::new());
        let mine = local_partition(&g, 0);
        assert_eq!(mine.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(global_partition(&g, 0).len(), 3);
        assert!(global_partition(&g, 1).is_empty());
    }

    #[test]
    fn global_cells_split_the_chain() {
        let g = two_agent_replica();
        let own = global_ownership(&g);
        assert_eq!(own.len(), 3);
        assert_eq!(own[&NodeId::new(0, 0)], (0, 1.0));
        assert_eq!(own[&NodeId::new(0, 1)], (1, 2.0));
        assert_eq!(own[&NodeId::new(0, 2)], (1, 1.0));
        let a: BTreeSet<_> = global_partition(&g, 0).into_keys().collect();
        let b: BTreeSet<_> = global_partition(&g, 1).into_keys().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), g.nodes().len());
    }

    #[test]
    fn agent_without_links_is_isolated() {
        let mut g = two_agent_replica();
        g.set_links(2, BTreeMap::new());
        assert!(local_partition(&g, 2).is_empty());
        assert!(global_partition(&g, 2).is_empty());
        assert!(local_partition(&g, 5).is_empty());
    }

    fn path(ws: &[f64]) -> SearchGraph<u32> {
        let mut g = SearchGraph::new();
        for (i, w) in ws.iter().enumerate() {
            g.add_edge(i as u32, i as u32 + 1, *w);
        }
        g
    }

    #[test]
    fn symmetric_tie_goes_to_smaller_source() {
        let mut g = path(&[1.0, 1.0]);
        g.add_source(2);
        g.add_source(0);
        let r = multi_source_dijkstra(&g);
        assert_eq!(r.owner[&1], 0);
        assert_eq!(r.dist[&1], 1.0);
    }

    #[test]
    fn nearer_source_wins() {
        let mut g = path(&[1.0, 3.0]);
        g.add_source(0);
        g.add_source(2);
        let r = multi_source_dijkstra(&g);
        assert_eq!(r.owner[&1], 0);
        assert_eq!(r.dist[&1], 1.0);
        assert_eq!(r.dist[&2], 0.0);
    }

    #[test]
    fn unreachable_nodes_are_absent() {
        let mut g = path(&[1.0]);
        g.add_node(7);
        g.add_source(0);
        let r = multi_source_dijkstra(&g);
        assert!(!r.owner.contains_key(&7));
        assert!(!r.dist.contains_key(&7));
        assert_eq!(r.owner.len(), 2);
    }

    /// Plain single-source Dijkstra over an adjacency matrix.
    fn single_source(n: usize, adj: &[Vec<Option<f64>>], s: usize) -> Vec<Option<f64>> {
        let mut dist: Vec<Option<f64>> = vec![None; n];
        let mut done = vec![false; n];
        dist[s] = Some(0.0);
        loop {
            let u = (0..n)
                .filter(|u| !done[*u] && dist[*u].is_some())
                .min_by(|a, b| dist[*a].unwrap().total_cmp(&dist[*b].unwrap()));
            let Some(u) = u else { break };
            done[u] = true;
            for v in 0..n {
                if let Some(w) = adj[u][v] {
                    let c = dist[u].unwrap() + w;
                    if dist[v].is_none_or(|d| c < d) {
                        dist[v] = Some(c);
                    }
                }
            }
        }
        dist
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn matches_per_source_argmin(
            n in 2usize..30,
            edges in prop::collection::vec((0usize..30, 0usize..30, 1u32..20), 0..80),
            srcs in prop::collection::btree_set(0usize..30, 1..4),
        ) {
            let mut g = SearchGraph::new();
            let mut adj = vec![vec![None; n]; n];
            for i in 0..n {
                g.add_node(i);
            }
            for (a, b, w) in edges {
                let (a, b, w) = (a % n, b % n, w as f64 * 0.5);
                if a == b {
                    continue;
                }
                g.add_edge(a, b, w);
                let slot: &mut Option<f64> = &mut adj[a][b];
                *slot = Some(slot.map_or(w, |x| x.min(w)));
                adj[b][a] = adj[a][b];
            }
            let srcs: BTreeSet<usize> = srcs.into_iter().map(|s| s % n).collect();
            for s in srcs.iter().rev() {
                g.add_source(*s);
            }
            let r = multi_source_dijkstra(&g);
            let per: Vec<Vec<Option<f64>>> = srcs.iter().map(|s| single_source(n, &adj, *s)).collect();
            for v in 0..n {
                let best = srcs
                    .iter()
                    .zip(&per)
                    .filter_map(|(s, d)| d[v].map(|d| (d, *s)))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                match best {
                    None => prop_assert!(!r.owner.contains_key(&v)),
                    Some((d, s)) => {
                        prop_assert_eq!(r.owner[&v], s);
                        prop_assert_eq!(r.dist[&v], d);
                    }
                }
            }
        }
    }
}
