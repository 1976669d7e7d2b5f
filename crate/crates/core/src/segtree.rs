//! Region-merge segmentation trees, their cuts, and the cut move proposal.
//!
//! A tree's leaves are superpixels; every internal node's region is the union
//! of its children's. A cut is a node set crossed exactly once by every
//! root-to-leaf path, so its regions partition the image.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Label, SegmentationImage};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Merge height at which this region forms (leaves usually 0).
    pub height: f64,
    /// Pixel count of the region.
    pub size: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegTree {
    width: usize,
    height: usize,
    nodes: Vec<Node>,
    root: NodeId,
    /// Leaf node owning each pixel.
    leaf_of_pixel: Vec<NodeId>,
    background: Option<NodeId>,
}

impl SegTree {
    /// Build from a parent array, per-node merge heights and the leaf owning
    /// each pixel.
    pub fn new(
        width: usize,
        height: usize,
        parents: &[Option<NodeId>],
        heights: &[f64],
        leaf_of_pixel: Vec<NodeId>,
        background: Option<NodeId>,
    ) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::InvalidTree("no nodes".into()));
        }
        if heights.len() != n {
            return Err(Error::InvalidTree("one height per node required".into()));
        }
        if leaf_of_pixel.len() != width * height {
            return Err(Error::InvalidTree("leaf map does not match image size".into()));
        }
        let roots: Vec<NodeId> = (0..n).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!("expected one root, found {}", roots.len())));
        }
        let mut nodes: Vec<Node> = heights
            .iter()
            .map(|&h| Node { parent: None, children: Vec::new(), height: h, size: 0 })
            .collect();
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n || p == i {
                    return Err(Error::InvalidTree(format!("node {i} has invalid parent {p}")));
                }
                nodes[i].parent = Some(p);
                nodes[p].children.push(i);
            }
        }
        // Every node must reach the root without revisiting.
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(p) = nodes[cur].parent {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidTree("parent links form a cycle".into()));
                }
            }
        }
        for &leaf in &leaf_of_pixel {
            if leaf >= n || !nodes[leaf].is_leaf() {
                return Err(Error::InvalidTree(format!("pixel assigned to non-leaf node {leaf}")));
            }
            nodes[leaf].size += 1;
        }
        let order = post_order(&nodes, roots[0]);
        for &i in &order {
            if nodes[i].is_leaf() {
                if nodes[i].size == 0 {
                    return Err(Error::InvalidTree(format!("leaf {i} has an empty region")));
                }
            } else {
                nodes[i].size = nodes[i].children.iter().map(|&c| nodes[c].size).sum();
            }
        }
        if let Some(b) = background {
            if b >= n {
                return Err(Error::InvalidTree(format!("background node {b} out of range")));
            }
        }
        Ok(Self { width, height, nodes, root: roots[0], leaf_of_pixel, background })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn background(&self) -> Option<NodeId> {
        self.background
    }

    pub fn leaf_of_pixel(&self) -> &[NodeId] {
        &self.leaf_of_pixel
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    /// Children before parents.
    pub fn post_order(&self) -> Vec<NodeId> {
        post_order(&self.nodes, self.root)
    }

    /// Sorted pixel indices of a node's region.
    pub fn region(&self, id: NodeId) -> Vec<usize> {
        (0..self.leaf_of_pixel.len())
            .filter(|&p| self.is_ancestor_or_self(id, self.leaf_of_pixel[p]))
            .collect()
    }

    pub fn is_ancestor_or_self(&self, ancestor: NodeId, mut node: NodeId) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    /// For a valid cut, the cut node covering each leaf.
    fn cut_owner(&self, cut: &TreeCut) -> Result<Vec<Option<NodeId>>> {
        let mut in_cut = vec![false; self.nodes.len()];
        for &c in cut.nodes() {
            if c >= self.nodes.len() {
                return Err(Error::InvalidCut(format!("node {c} not in tree")));
            }
            in_cut[c] = true;
        }
        let mut owner = vec![None; self.nodes.len()];
        for leaf in self.leaves() {
            let mut found = None;
            let mut cur = Some(leaf);
            while let Some(n) = cur {
                if in_cut[n] {
                    if found.is_some() {
                        return Err(Error::InvalidCut(format!("leaf {leaf} covered twice")));
                    }
                    found = Some(n);
                }
                cur = self.nodes[n].parent;
            }
            if found.is_none() {
                return Err(Error::InvalidCut(format!("leaf {leaf} not covered")));
            }
            owner[leaf] = found;
        }
        Ok(owner)
    }

    pub fn validate_cut(&self, cut: &TreeCut) -> Result<()> {
        self.cut_owner(cut).map(|_| ())
    }

    pub fn is_valid_cut(&self, cut: &TreeCut) -> bool {
        self.validate_cut(cut).is_ok()
    }

    /// Label the image by cut region: the i-th non-background cut node (in
    /// ascending node id order) gets label i+1, the background node gets 0.
    pub fn apply_cut(&self, cut: &TreeCut) -> Result<SegmentationImage> {
        let owner = self.cut_owner(cut)?;
        let mut label_of = vec![0 as Label; self.nodes.len()];
        let mut next: Label = 0;
        for &c in cut.nodes() {
            if Some(c) == self.background {
                continue;
            }
            next += 1;
            label_of[c] = next;
        }
        let labels = self
            .leaf_of_pixel
            .iter()
            .map(|&leaf| label_of[owner[leaf].expect("validated cut covers every leaf")])
            .collect();
        SegmentationImage::from_labels(self.width, self.height, labels)
    }

    /// Move the cut at `node` one level up or down.
    ///
    /// `Down` replaces the node by its `m` children. `Up` needs all of the
    /// node's siblings in the cut and replaces them with their parent. The
    /// returned ratio is `g(c | c') / g(c' | c)` for the proposal that picks a
    /// cut node uniformly and a direction with probability ½.
    pub fn move_node(&self, cut: &TreeCut, node: NodeId, dir: Direction) -> Result<Move> {
        if !cut.contains(node) {
            return Err(Error::NodeNotInCut(node));
        }
        let size = cut.len() as f64;
        match dir {
            Direction::Down => {
                let children = &self.nodes[node].children;
                if children.is_empty() {
                    return Ok(Move::Infeasible);
                }
                let m = children.len() as f64;
                let mut ids: Vec<NodeId> = cut.nodes().iter().copied().filter(|&c| c != node).collect();
                ids.extend_from_slice(children);
                let next = TreeCut::new(ids);
                let g_ratio = m * size / next.len() as f64;
                Ok(Move::Feasible { cut: next, g_ratio })
            }
            Direction::Up => {
                let Some(parent) = self.nodes[node].parent else {
                    return Ok(Move::Infeasible);
                };
                let siblings = &self.nodes[parent].children;
                if !siblings.iter().all(|&s| cut.contains(s)) {
                    return Ok(Move::Infeasible);
                }
                let m = siblings.len() as f64;
                let mut ids: Vec<NodeId> =
                    cut.nodes().iter().copied().filter(|c| !siblings.contains(c)).collect();
                ids.push(parent);
                let next = TreeCut::new(ids);
                let g_ratio = size / (m * next.len() as f64);
                Ok(Move::Feasible { cut: next, g_ratio })
            }
        }
    }

    pub fn root_cut(&self) -> TreeCut {
        TreeCut::new(vec![self.root])
    }

    pub fn leaf_cut(&self) -> TreeCut {
        TreeCut::new(self.leaves())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SegTreeFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: SegTreeFile = serde_json::from_str(s)?;
        file.into_tree()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn post_order(nodes: &[Node], root: NodeId) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut stack = vec![(root, false)];
    while let Some((n, expanded)) = stack.pop() {
        if expanded {
            out.push(n);
        } else {
            stack.push((n, true));
            for &c in nodes[n].children.iter().rev() {
                stack.push((c, false));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Move {
    Feasible { cut: TreeCut, g_ratio: f64 },
    Infeasible,
}

/// A set of tree nodes, kept sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeCut(Vec<NodeId>);

impl TreeCut {
    pub fn new(mut ids: Vec<NodeId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0.binary_search(&id).is_ok()
    }
}

/// Scores a tree cut. Values that are sums of per-node scores expose them via
/// `node_scores`, which enables the exact optimal-cut solver.
pub trait ValueFunction: Sync {
    fn evaluate(&self, tree: &SegTree, cut: &TreeCut) -> f64;

    fn node_scores(&self, _tree: &SegTree) -> Option<Vec<f64>> {
        None
    }
}

/// Explicit per-node scores.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveValue {
    pub scores: Vec<f64>,
}

impl ValueFunction for AdditiveValue {
    fn evaluate(&self, _tree: &SegTree, cut: &TreeCut) -> f64 {
        cut.nodes().iter().map(|&n| self.scores[n]).sum()
    }

    fn node_scores(&self, _tree: &SegTree) -> Option<Vec<f64>> {
        Some(self.scores.clone())
    }
}

/// Reference value: a region scores its image fraction times how long it
/// persists in the hierarchy (parent merge height minus its own), minus a
/// constant per segment. The root has no parent and persists for zero height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCoherence {
    pub segment_penalty: f64,
}

impl Default for RegionCoherence {
    fn default() -> Self {
        Self { segment_penalty: 1e-3 }
    }
}

impl RegionCoherence {
    pub fn node_score(&self, tree: &SegTree, id: NodeId) -> f64 {
        let node = tree.node(id);
        let parent_height = node.parent.map_or(node.height, |p| tree.node(p).height);
        let frac = node.size as f64 / tree.pixel_count() as f64;
        frac * (parent_height - node.height) - self.segment_penalty
    }
}

impl ValueFunction for RegionCoherence {
    fn evaluate(&self, tree: &SegTree, cut: &TreeCut) -> f64 {
        cut.nodes().iter().map(|&n| self.node_score(tree, n)).sum()
    }

    fn node_scores(&self, tree: &SegTree) -> Option<Vec<f64>> {
        Some((0..tree.len()).map(|n| self.node_score(tree, n)).collect())
    }
}

pub fn cut_value(cut: &TreeCut, value: &dyn ValueFunction, tree: &SegTree) -> f64 {
    value.evaluate(tree, cut)
}

/// Exact maximizer of an additive value by bottom-up dynamic programming.
/// On ties the shallower node wins (fewer segments).
pub fn optimal_cut(tree: &SegTree, value: &dyn ValueFunction) -> Result<TreeCut> {
    let scores = value.node_scores(tree).ok_or(Error::NotAdditive)?;
    if scores.len() != tree.len() {
        return Err(Error::InvalidArgument("one score per node required".into()));
    }
    let mut best = vec![0.0f64; tree.len()];
    let mut keep_self = vec![true; tree.len()];
    for n in tree.post_order() {
        let node = tree.node(n);
        if node.is_leaf() {
            best[n] = scores[n];
            continue;
        }
        let below: f64 = node.children.iter().map(|&c| best[c]).sum();
        if scores[n] >= below {
            best[n] = scores[n];
        } else {
            best[n] = below;
            keep_self[n] = false;
        }
    }
    let mut cut = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(n) = stack.pop() {
        if keep_self[n] {
            cut.push(n);
        } else {
            stack.extend_from_slice(&tree.node(n).children);
        }
    }
    Ok(TreeCut::new(cut))
}

#[derive(Serialize, Deserialize)]
struct SegTreeFile {
    schema: String,
    width: usize,
    height: usize,
    background: Option<NodeId>,
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    parent: Option<NodeId>,
    height: f64,
    /// Leaf pixels as (start, length) runs over row-major indices.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    runs: Vec<(usize, usize)>,
}

const SEGTREE_SCHEMA: &str = "mst.segtree/1";

impl From<&SegTree> for SegTreeFile {
    fn from(t: &SegTree) -> Self {
        let mut runs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); t.len()];
        let mut p = 0;
        while p < t.leaf_of_pixel.len() {
            let leaf = t.leaf_of_pixel[p];
            let start = p;
            while p < t.leaf_of_pixel.len() && t.leaf_of_pixel[p] == leaf {
                p += 1;
            }
            runs[leaf].push((start, p - start));
        }
        let nodes = t
            .nodes
            .iter()
            .zip(runs)
            .enumerate()
            .map(|(id, (n, runs))| NodeRecord { id, parent: n.parent, height: n.height, runs })
            .collect();
        Self {
            schema: SEGTREE_SCHEMA.into(),
            width: t.width,
            height: t.height,
            background: t.background,
            nodes,
        }
    }
}

impl SegTreeFile {
    fn into_tree(self) -> Result<SegTree> {
        if self.schema != SEGTREE_SCHEMA {
            return Err(Error::Format(format!("unsupported segtree schema {:?}", self.schema)));
        }
        let n = self.nodes.len();
        let mut parents = vec![None; n];
        let mut heights = vec![0.0; n];
        let total = self.width * self.height;
        let mut leaf_of_pixel = vec![usize::MAX; total];
        for rec in &self.nodes {
            if rec.id >= n {
                return Err(Error::Format(format!("node id {} out of range", rec.id)));
            }
            parents[rec.id] = rec.parent;
            heights[rec.id] = rec.height;
            for &(start, len) in &rec.runs {
                if start + len > total {
                    return Err(Error::Format("pixel run beyond image".into()));
                }
                for slot in &mut leaf_of_pixel[start..start + len] {
                    if *slot != usize::MAX {
                        return Err(Error::Format("pixel assigned to two leaves".into()));
                    }
                    *slot = rec.id;
                }
            }
        }
        if leaf_of_pixel.contains(&usize::MAX) {
            return Err(Error::Format("pixel not assigned to any leaf".into()));
        }
        SegTree::new(self.width, self.height, &parents, &heights, leaf_of_pixel, self.background)
    }
}
