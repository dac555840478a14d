//! Street graphs: synthetic generation, components and BFS routing.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{point_segment_distance, Point};
use crate::rng::{stream_rng, Stream};

/// Road tiers; the raster has one channel per class.
pub const NUM_ROAD_CLASSES: usize = 3;
pub const ROAD_CLASS_NAMES: [&str; NUM_ROAD_CLASSES] = ["trunk", "primary", "residential"];

/// Undirected street graph. Serialized as
/// `{"nodes": [[x, y], ...], "edges": [[a, b, class], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetGraph {
    pub nodes: Vec<Point>,
    pub edges: Vec<(usize, usize, u8)>,
}

impl StreetGraph {
    pub fn new(nodes: Vec<Point>, edges: Vec<(usize, usize, u8)>) -> Result<Self> {
        let g = StreetGraph { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for &(a, b, _) in &self.edges {
            if a >= self.nodes.len() || b >= self.nodes.len() || a == b {
                return Err(Error::Generation(format!("invalid edge ({a}, {b})")));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b, _) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Component label per node, labels in order of smallest member id.
    pub fn components(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut label = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for s in 0..self.nodes.len() {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// The largest connected component, nodes re-indexed in original order.
    /// Ties go to the component holding the smallest node id.
    pub fn largest_component(&self) -> StreetGraph {
        if self.nodes.is_empty() {
            return self.clone();
        }
        let label = self.components();
        let ncomp = label.iter().max().map_or(0, |m| m + 1);
        let mut size = vec![0usize; ncomp];
        for &l in &label {
            size[l] += 1;
        }
        let best = (0..ncomp).fold(0, |b, c| if size[c] > size[b] { c } else { b });
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::with_capacity(size[best]);
        for (i, p) in self.nodes.iter().enumerate() {
            if label[i] == best {
                remap[i] = nodes.len();
                nodes.push(*p);
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|(a, _, _)| label[*a] == best)
            .map(|&(a, b, c)| (remap[a], remap[b], c))
            .collect();
        StreetGraph { nodes, edges }
    }

    /// Minimum-hop path from `a` to `b` (inclusive). Neighbours expand in
    /// ascending id order and the first discoverer becomes the parent, so
    /// ties resolve toward smaller ids.
    pub fn shortest_path(&self, a: usize, b: usize) -> Result<Vec<usize>> {
        self.shortest_path_with(&self.adjacency(), a, b)
    }

    pub fn shortest_path_with(&self, adj: &[Vec<usize>], a: usize, b: usize) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        if a >= n || b >= n {
            return Err(Error::NoPath { from: a, to: b });
        }
        if a == b {
            return Ok(vec![a]);
        }
        let mut parent = vec![usize::MAX; n];
        parent[a] = a;
        let mut queue = VecDeque::from([a]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    if v == b {
                        let mut path = vec![b];
                        let mut cur = b;
                        while cur != a {
                            cur = parent[cur];
                            path.push(cur);
                        }
                        path.reverse();
                        return Ok(path);
                    }
                    queue.push_back(v);
                }
            }
        }
        Err(Error::NoPath { from: a, to: b })
    }

    pub fn edge_segment(&self, e: usize) -> (Point, Point) {
        let (a, b, _) = self.edges[e];
        (self.nodes[a], self.nodes[b])
    }

    /// Distance from `p` to the nearest edge (or node, for an edgeless graph).
    pub fn distance_to_street(&self, p: Point) -> f64 {
        if self.edges.is_empty() {
            return self.nodes.iter().map(|n| n.dist(p)).fold(f64::INFINITY, f64::min);
        }
        self.edges
            .iter()
            .map(|&(a, b, _)| point_segment_distance(p, self.nodes[a], self.nodes[b]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: StreetGraph = serde_json::from_str(&text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Manhattan-like street lattice with `block_size` spacing over
/// `[0, w] x [0, h]`. Each street line (row or column) gets one road class
/// drawn from `class_weights`; every edge is then dropped independently with
/// probability `drop_fraction`, and the largest component is kept.
pub fn synth_street_graph(
    seed: u64,
    area: (f64, f64),
    block_size: f64,
    drop_fraction: f64,
    class_weights: &[f64],
) -> Result<StreetGraph> {
    if !(block_size > 0.0) {
        return Err(Error::Generation(format!("block size must be positive, got {block_size}")));
    }
    if !(0.0..0.5).contains(&drop_fraction) {
        return Err(Error::Generation(format!("drop fraction {drop_fraction} outside [0, 0.5)")));
    }
    if class_weights.is_empty() || class_weights.iter().any(|w| !(*w >= 0.0)) || class_weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Generation("class weights must be non-negative with positive sum".into()));
    }
    let nx = (area.0 / block_size).floor() as usize;
    let ny = (area.1 / block_size).floor() as usize;
    if nx == 0 && ny == 0 {
        return Err(Error::Generation(format!(
            "block size {block_size} leaves no street inside {} x {}",
            area.0, area.1
        )));
    }
    let mut rng = stream_rng(seed, Stream::Map, 0);
    let total: f64 = class_weights.iter().sum();
    let draw_class = |rng: &mut crate::rng::SimRng| -> u8 {
        let mut u = rng.random::<f64>() * total;
        for (c, w) in class_weights.iter().enumerate() {
            if u < *w {
                return c as u8;
            }
            u -= w;
        }
        (class_weights.len() - 1) as u8
    };
    let row_class: Vec<u8> = (0..=ny).map(|_| draw_class(&mut rng)).collect();
    let col_class: Vec<u8> = (0..=nx).map(|_| draw_class(&mut rng)).collect();

    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(Point::new(i as f64 * block_size, j as f64 * block_size));
        }
    }
    let mut edges = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if i < nx && rng.random::<f64>() >= drop_fraction {
                edges.push((id(i, j), id(i + 1, j), row_class[j]));
            }
            if j < ny && rng.random::<f64>() >= drop_fraction {
                edges.push((id(i, j), id(i, j + 1), col_class[i]));
            }
        }
    }
    let g = StreetGraph { nodes, edges }.largest_component();
    if g.edges.is_empty() {
        return Err(Error::Generation("generated street graph has no edges".into()));
    }
    Ok(g)
}
