//! Bi-level graph data model.
//!
//! [`SwGraph`] is the static execution graph over the counters a cell reports;
//! [`NwGraph`] is the topology over cells. [`BatchedGraph`] is the disjoint
//! union of `B` copies of an execution graph used for mini-batching.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static, directed execution graph over `K` counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SwGraph {
    node_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    edge_attrs: Vec<f64>,
}

impl SwGraph {
    /// Builds a graph from node names and name-addressed edges.
    ///
    /// Missing `attrs` default to 1.0 for every edge. Self-loops are kept when
    /// listed explicitly.
    pub fn build<S: AsRef<str>>(
        names: &[S],
        edges: &[(S, S)],
        attrs: Option<&[f64]>,
    ) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.as_ref(), i).is_some() {
                return Err(Error::DuplicateNode(name.as_ref().to_string()));
            }
        }
        let resolve = |n: &S| {
            index
                .get(n.as_ref())
                .copied()
                .ok_or_else(|| Error::DanglingEdge(n.as_ref().to_string()))
        };
        let edges = edges
            .iter()
            .map(|(s, d)| Ok((resolve(s)?, resolve(d)?)))
            .collect::<Result<Vec<_>>>()?;
        let names = names.iter().map(|n| n.as_ref().to_string()).collect();
        Self::from_indices(names, edges, attrs.map(<[f64]>::to_vec))
    }

    /// Builds a graph from index-addressed edges.
    pub fn from_indices(
        node_names: Vec<String>,
        edges: Vec<(usize, usize)>,
        edge_attrs: Option<Vec<f64>>,
    ) -> Result<Self> {
        let k = node_names.len();
        if k == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = HashMap::with_capacity(k);
        for name in &node_names {
            if seen.insert(name.as_str(), ()).is_some() {
                return Err(Error::DuplicateNode(name.clone()));
            }
        }
        for &(s, d) in &edges {
            if s >= k || d >= k {
                return Err(Error::DanglingEdge(format!("{}", s.max(d))));
            }
        }
        let edge_attrs = edge_attrs.unwrap_or_else(|| vec![1.0; edges.len()]);
        if edge_attrs.len() != edges.len() {
            return Err(Error::InvalidGraph(format!(
                "{} edge attributes for {} edges",
                edge_attrs.len(),
                edges.len()
            )));
        }
        if edge_attrs.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidGraph("non-finite edge attribute".into()));
        }
        Ok(Self {
            node_names,
            edges,
            edge_attrs,
        })
    }

    /// Chain `n0 -> n1 -> ... -> n(K-1)`.
    pub fn chain(node_names: Vec<String>) -> Result<Self> {
        let edges = (1..node_names.len()).map(|i| (i - 1, i)).collect();
        Self::from_indices(node_names, edges, None)
    }

    /// Forward execution DAG where node `i` feeds nodes `i+1 ..= i+fanout`.
    pub fn forward_dag(node_names: Vec<String>, fanout: usize) -> Result<Self> {
        let k = node_names.len();
        let mut edges = Vec::new();
        for i in 0..k {
            for j in i + 1..=(i + fanout).min(k.saturating_sub(1)) {
                edges.push((i, j));
            }
        }
        Self::from_indices(node_names, edges, None)
    }

    /// Same nodes, no edges: the disconnected baseline.
    pub fn without_edges(&self) -> Self {
        Self {
            node_names: self.node_names.clone(),
            edges: Vec::new(),
            edge_attrs: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_attrs(&self) -> &[f64] {
        &self.edge_attrs
    }

    /// Out-neighbours of `node`, in edge order, self-loops excluded.
    pub fn successors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |&&(s, d)| s == node && d != node)
            .map(|&(_, d)| d)
    }

    /// In-neighbours of `node`, in edge order, self-loops excluded.
    pub fn predecessors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |&&(s, d)| d == node && s != node)
            .map(|&(s, _)| s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SwGraphFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SwGraphFile = serde_json::from_str(text)?;
        file.into_graph()
    }
}

/// On-disk form: `{"nodes": [...], "edges": [[src, dst], ...], "attrs": [...]}`.
///
/// Endpoints are written as node indices; names are accepted on input.
#[derive(Debug, Serialize, Deserialize)]
struct SwGraphFile {
    nodes: Vec<String>,
    edges: Vec<[Endpoint; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attrs: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Endpoint {
    Index(usize),
    Name(String),
}

impl From<&SwGraph> for SwGraphFile {
    fn from(g: &SwGraph) -> Self {
        Self {
            nodes: g.node_names.clone(),
            edges: g
                .edges
                .iter()
                .map(|&(s, d)| [Endpoint::Index(s), Endpoint::Index(d)])
                .collect(),
            attrs: Some(g.edge_attrs.clone()),
        }
    }
}

impl SwGraphFile {
    fn into_graph(self) -> Result<SwGraph> {
        let lookup: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let resolve = |e: &Endpoint| match e {
            Endpoint::Index(i) => Ok(*i),
            Endpoint::Name(n) => lookup
                .get(n.as_str())
                .copied()
                .ok_or_else(|| Error::DanglingEdge(n.clone())),
        };
        let edges = self
            .edges
            .iter()
            .map(|[s, d]| Ok((resolve(s)?, resolve(d)?)))
            .collect::<Result<Vec<_>>>()?;
        SwGraph::from_indices(self.nodes, edges, self.attrs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Area {
    Airport,
    Downtown,
    Rural,
}

impl Area {
    pub const ALL: [Area; 3] = [Area::Airport, Area::Downtown, Area::Rural];

    pub fn as_str(self) -> &'static str {
        match self {
            Area::Airport => "airport",
            Area::Downtown => "downtown",
            Area::Rural => "rural",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub id: String,
    pub area: Area,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<(f64, f64)>,
}

/// How cells are related in the network graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelationRule {
    /// Cells in the same deployment area are fully connected.
    #[default]
    AreaComplete,
    /// Cells within Euclidean distance `r` of each other are connected.
    Radius(f64),
}

/// Topology over cells with an `N x N` relation matrix in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NwGraph {
    cells: Vec<CellMeta>,
    relation: Array2<f64>,
}

impl NwGraph {
    pub fn build(cells: Vec<CellMeta>, rule: RelationRule) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidGraph(
                "network graph needs at least one cell".into(),
            ));
        }
        let mut ids = HashMap::with_capacity(cells.len());
        for c in &cells {
            if ids.insert(c.id.as_str(), ()).is_some() {
                return Err(Error::DuplicateNode(c.id.clone()));
            }
        }
        let n = cells.len();
        let relation = match rule {
            RelationRule::AreaComplete => Array2::from_shape_fn((n, n), |(j, k)| {
                if j == k || cells[j].area == cells[k].area {
                    1.0
                } else {
                    0.0
                }
            }),
            RelationRule::Radius(r) => {
                let pos = cells
                    .iter()
                    .map(|c| {
                        c.position.ok_or_else(|| {
                            Error::InvalidGraph(format!(
                                "radius rule needs a position for cell `{}`",
                                c.id
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Array2::from_shape_fn((n, n), |(j, k)| {
                    let (dx, dy) = (pos[j].0 - pos[k].0, pos[j].1 - pos[k].1);
                    if j == k || (dx * dx + dy * dy).sqrt() <= r {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
        };
        Ok(Self { cells, relation })
    }

    /// Replaces the relation matrix, e.g. with per-round model similarities.
    pub fn with_relation(&self, relation: Array2<f64>) -> Result<Self> {
        let n = self.cells.len();
        if relation.dim() != (n, n) {
            return Err(Error::shape(format!(
                "relation is {:?}, expected ({n}, {n})",
                relation.dim()
            )));
        }
        for i in 0..n {
            if relation[[i, i]] != 1.0 {
                return Err(Error::InvalidGraph("relation diagonal must be 1".into()));
            }
        }
        if relation.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidGraph(
                "relation entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            cells: self.cells.clone(),
            relation,
        })
    }

    pub fn cells(&self) -> &[CellMeta] {
        &self.cells
    }

    pub fn relation(&self) -> &Array2<f64> {
        &self.relation
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// `B` disjoint copies of a `K`-node graph, laid out sample after sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedGraph {
    pub num_nodes: usize,
    /// Row 0 holds sources, row 1 destinations.
    pub edge_index: [Vec<usize>; 2],
    pub edge_attr: Vec<f64>,
    /// Sample index of every node copy.
    pub batch: Vec<usize>,
}

impl BatchedGraph {
    pub fn num_edges(&self) -> usize {
        self.edge_attr.len()
    }

    pub fn num_samples(&self) -> usize {
        self.batch.last().map_or(0, |&b| b + 1)
    }
}

/// Disjoint union of `batch_size` copies of `g`: edge `(u, v)` of sample `s`
/// becomes `(u + s*K, v + s*K)`.
pub fn disjoint_union_batch(g: &SwGraph, batch_size: usize) -> Result<BatchedGraph> {
    if batch_size < 1 {
        return Err(Error::InvalidArgument(
            "batch_size must be at least 1".into(),
        ));
    }
    let k = g.num_nodes();
    let e = g.num_edges();
    let mut src = Vec::with_capacity(e * batch_size);
    let mut dst = Vec::with_capacity(e * batch_size);
    let mut edge_attr = Vec::with_capacity(e * batch_size);
    let mut batch = Vec::with_capacity(k * batch_size);
    for s in 0..batch_size {
        let off = s * k;
        for (&(u, v), &a) in g.edges.iter().zip(&g.edge_attrs) {
            src.push(u + off);
            dst.push(v + off);
            edge_attr.push(a);
        }
        batch.extend(std::iter::repeat_n(s, k));
    }
    Ok(BatchedGraph {
        num_nodes: k * batch_size,
        edge_index: [src, dst],
        edge_attr,
        batch,
    })
}

/// Splits `n` cells across areas in the proportions 12/29/26 using
/// largest remainders. Returns counts in [`Area::ALL`] order.
pub fn area_split(n: usize) -> [usize; 3] {
    const WEIGHTS: [usize; 3] = [12, 29, 26];
    const TOTAL: usize = 67;
    let mut counts = [0usize; 3];
    let mut rems = [(0usize, 0usize); 3];
    for (i, w) in WEIGHTS.iter().enumerate() {
        counts[i] = n * w / TOTAL;
        rems[i] = (n * w % TOTAL, i);
    }
    let mut left = n - counts.iter().sum::<usize>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &rems {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn minimal_graph() {
        let g = SwGraph::build(&["a", "b"], &[("a", "b")], None).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.edge_attrs(), &[1.0]);
    }

    #[test]
    fn single_node_no_edges() {
        let g = SwGraph::build::<&str>(&["a"], &[], None).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (1, 0));
    }

    #[test]
    fn chain_of_24() {
        let g = SwGraph::chain(names(24)).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (24, 23));
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            SwGraph::build(&["a", "a"], &[], None),
            Err(Error::DuplicateNode(_))
        ));
        assert!(matches!(
            SwGraph::build(&["a"], &[("a", "z")], None),
            Err(Error::DanglingEdge(_))
        ));
        assert!(SwGraph::build(&["a", "b"], &[("a", "b")], Some(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn json_accepts_names() {
        let g = SwGraph::from_json(r#"{"nodes":["x","y"],"edges":[["x","y"]]}"#).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.edge_attrs(), &[1.0]);
    }

    #[test]
    fn json_field_names() {
        let g = SwGraph::build(&["a", "b"], &[("a", "b")], Some(&[0.5])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert_eq!(v["nodes"], serde_json::json!(["a", "b"]));
        assert_eq!(v["edges"], serde_json::json!([[0, 1]]));
        assert_eq!(v["attrs"], serde_json::json!([0.5]));
    }

    fn cell(id: &str, area: Area, pos: Option<(f64, f64)>) -> CellMeta {
        CellMeta {
            id: id.into(),
            area,
            position: pos,
        }
    }

    #[test]
    fn area_complete_same_area() {
        let cells = (0..3)
            .map(|i| cell(&format!("c{i}"), Area::Airport, None))
            .collect();
        let g = NwGraph::build(cells, RelationRule::AreaComplete).unwrap();
        assert!(g.relation().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn radius_far_apart_is_identity() {
        let cells = vec![
            cell("a", Area::Rural, Some((0.0, 0.0))),
            cell("b", Area::Rural, Some((3.0, 4.0))),
        ];
        let g = NwGraph::build(cells, RelationRule::Radius(1.0)).unwrap();
        assert_eq!(g.relation(), &Array2::<f64>::eye(2));
    }

    #[test]
    fn radius_needs_positions() {
        let cells = vec![cell("a", Area::Rural, None)];
        assert!(NwGraph::build(cells, RelationRule::Radius(1.0)).is_err());
    }

    #[test]
    fn reference_area_blocks() {
        let split = area_split(67);
        assert_eq!(split, [12, 29, 26]);
        let mut cells = Vec::new();
        for (area, &n) in Area::ALL.iter().zip(&split) {
            for i in 0..n {
                cells.push(cell(&format!("{}-{i}", area.as_str()), *area, None));
            }
        }
        let g = NwGraph::build(cells, RelationRule::AreaComplete).unwrap();
        let r = g.relation();
        let ones: f64 = r.sum();
        assert_eq!(ones as usize, 12 * 12 + 29 * 29 + 26 * 26);
        assert_eq!(r[[0, 11]], 1.0);
        assert_eq!(r[[11, 12]], 0.0);
        assert_eq!(r[[12, 40]], 1.0);
        assert_eq!(r[[40, 41]], 0.0);
        assert_eq!(r[[41, 66]], 1.0);
    }

    #[test]
    fn area_split_small() {
        assert_eq!(area_split(10), [2, 4, 4]);
        assert_eq!(area_split(1).iter().sum::<usize>(), 1);
    }

    #[test]
    fn union_offsets() {
        let g = SwGraph::build(&["a", "b"], &[("a", "b")], None).unwrap();
        let b = disjoint_union_batch(&g, 2).unwrap();
        assert_eq!(b.edge_index, [vec![0, 2], vec![1, 3]]);
        assert_eq!(b.batch, vec![0, 0, 1, 1]);
    }

    #[test]
    fn union_identity() {
        let g = SwGraph::forward_dag(names(5), 2).unwrap();
        let b = disjoint_union_batch(&g, 1).unwrap();
        let edges: Vec<_> = b.edge_index[0]
            .iter()
            .copied()
            .zip(b.edge_index[1].iter().copied())
            .collect();
        assert_eq!(edges, g.edges());
        assert!(b.batch.iter().all(|&s| s == 0));
    }

    #[test]
    fn union_of_reference_sizes() {
        let g = SwGraph::chain(names(24)).unwrap();
        let b = disjoint_union_batch(&g, 64).unwrap();
        assert_eq!(b.num_edges(), 1472);
        assert_eq!(b.batch.len(), 1536);
        assert!(disjoint_union_batch(&g, 0).is_err());
    }
}
