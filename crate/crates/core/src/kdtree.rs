//! Binary kd-tree carrying per-node cell, count and weighted centroid.
//!
//! Nodes live in flat arenas: one `KdNode` record per node plus parallel
//! coordinate buffers for the cell bounds and the coordinate sums. Leaves
//! own a contiguous range of a leaf-ordered copy of the input points.

use std::cmp::Ordering;
use std::mem::size_of;

use crate::error::{Error, Result};
use crate::geometry::{add_assign, check_dim, Cell, Dataset};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub dim: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    /// Points `start..start + len` of the leaf-ordered point buffer.
    /// `uniform` is set when all of them are identical.
    Leaf {
        start: usize,
        len: usize,
        uniform: bool,
    },
    /// `split` is `None` for the synthetic nodes created by [`combine`].
    Internal {
        left: NodeId,
        right: NodeId,
        split: Option<Split>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdNode {
    pub count: usize,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    dim: usize,
    root: NodeId,
    nodes: Vec<KdNode>,
    bounds: Vec<f64>,
    sums: Vec<f64>,
    points: Vec<f64>,
    ids: Vec<usize>,
}

/// Borrowed handle to one node of a tree.
#[derive(Debug, Clone, Copy)]
pub struct NodeRef<'a> {
    tree: &'a KdTree,
    id: NodeId,
}

impl<'a> NodeRef<'a> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn count(&self) -> usize {
        self.tree.nodes[self.id].count
    }

    pub fn kind(&self) -> NodeKind {
        self.tree.nodes[self.id].kind
    }

    pub fn cell(&self) -> Cell<'a> {
        self.tree.cell(self.id)
    }

    pub fn wgt_cent(&self) -> &'a [f64] {
        self.tree.wgt_cent(self.id)
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind(), NodeKind::Leaf { .. })
    }

    pub fn children(&self) -> Option<(NodeRef<'a>, NodeRef<'a>)> {
        match self.kind() {
            NodeKind::Internal { left, right, .. } => Some((self.tree.node(left), self.tree.node(right))),
            NodeKind::Leaf { .. } => None,
        }
    }

    /// Points stored at a leaf with their original indices; empty for internal nodes.
    pub fn leaf_points(&self) -> impl Iterator<Item = (usize, &'a [f64])> + 'a {
        let (start, len) = match self.kind() {
            NodeKind::Leaf { start, len, .. } => (start, len),
            NodeKind::Internal { .. } => (0, 0),
        };
        let tree = self.tree;
        (start..start + len).map(move |i| (tree.ids[i], tree.stored_point(i)))
    }
}

struct Builder<'d> {
    data: &'d Dataset,
    leaf_capacity: usize,
    tree: KdTree,
}

impl Builder<'_> {
    fn push_node(&mut self) -> NodeId {
        let dim = self.tree.dim;
        self.tree.nodes.push(KdNode {
            count: 0,
            kind: NodeKind::Leaf {
                start: 0,
                len: 0,
                uniform: false,
            },
        });
        self.tree.bounds.resize(self.tree.bounds.len() + 2 * dim, 0.0);
        self.tree.sums.resize(self.tree.sums.len() + dim, 0.0);
        self.tree.nodes.len() - 1
    }

    fn build(&mut self, idx: &mut [usize]) -> NodeId {
        let dim = self.tree.dim;
        let id = self.push_node();

        // tight cell over this node's own points
        {
            let b = &mut self.tree.bounds[2 * dim * id..2 * dim * (id + 1)];
            let (lo, hi) = b.split_at_mut(dim);
            lo.copy_from_slice(self.data.point(idx[0]));
            hi.copy_from_slice(self.data.point(idx[0]));
            for &i in &idx[1..] {
                for ((l, h), x) in lo.iter_mut().zip(hi.iter_mut()).zip(self.data.point(i)) {
                    if *x < *l {
                        *l = *x;
                    }
                    if *x > *h {
                        *h = *x;
                    }
                }
            }
        }
        let (split_dim, extent) = self.tree.cell(id).widest_dim();
        let uniform = extent <= 0.0;

        if uniform || idx.len() <= self.leaf_capacity {
            let start = self.tree.ids.len();
            let sum = &mut self.tree.sums[dim * id..dim * (id + 1)];
            for &i in idx.iter() {
                let p = self.data.point(i);
                self.tree.points.extend_from_slice(p);
                self.tree.ids.push(i);
                add_assign(sum, p);
            }
            self.tree.nodes[id] = KdNode {
                count: idx.len(),
                kind: NodeKind::Leaf {
                    start,
                    len: idx.len(),
                    uniform,
                },
            };
            return id;
        }

        // lower median along the widest dimension; index breaks coordinate ties
        let left_len = idx.len().div_ceil(2);
        let data = self.data;
        let order = |a: &usize, b: &usize| -> Ordering {
            data.point(*a)[split_dim]
                .total_cmp(&data.point(*b)[split_dim])
                .then(a.cmp(b))
        };
        idx.select_nth_unstable_by(left_len - 1, order);
        let value = data.point(idx[left_len - 1])[split_dim];
        let (left_idx, right_idx) = idx.split_at_mut(left_len);

        let left = self.build(left_idx);
        let right = self.build(right_idx);

        let count = self.tree.nodes[left].count + self.tree.nodes[right].count;
        self.tree.set_sum_of_children(id, left, right);
        self.tree.nodes[id] = KdNode {
            count,
            kind: NodeKind::Internal {
                left,
                right,
                split: Some(Split {
                    dim: split_dim,
                    value,
                }),
            },
        };
        id
    }
}

impl KdTree {
    /// Builds a tree over every point of `data`. Leaves hold at most
    /// `leaf_capacity` points, except that a node whose points are all
    /// identical always becomes a single leaf.
    pub fn build(data: &Dataset, leaf_capacity: usize) -> Result<KdTree> {
        if data.is_empty() {
            return Err(Error::Empty("cannot build a kd-tree over no points"));
        }
        if leaf_capacity == 0 {
            return Err(Error::config("leaf capacity must be at least 1"));
        }
        let n = data.len();
        let dim = data.dim();
        let mut builder = Builder {
            data,
            leaf_capacity,
            tree: KdTree {
                dim,
                root: 0,
                nodes: Vec::with_capacity(2 * n / leaf_capacity + 1),
                bounds: Vec::new(),
                sums: Vec::new(),
                points: Vec::with_capacity(n * dim),
                ids: Vec::with_capacity(n),
            },
        };
        let mut idx: Vec<usize> = (0..n).collect();
        let root = builder.build(&mut idx);
        let mut tree = builder.tree;
        tree.root = root;
        Ok(tree)
    }

    fn set_sum_of_children(&mut self, id: NodeId, left: NodeId, right: NodeId) {
        let dim = self.dim;
        for j in 0..dim {
            self.sums[dim * id + j] = self.sums[dim * left + j] + self.sums[dim * right + j];
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> usize {
        self.nodes[self.root].count
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeRef<'_> {
        self.node(self.root)
    }

    pub fn node(&self, id: NodeId) -> NodeRef<'_> {
        NodeRef { tree: self, id }
    }

    pub fn cell(&self, id: NodeId) -> Cell<'_> {
        let b = &self.bounds[2 * self.dim * id..2 * self.dim * (id + 1)];
        let (lo, hi) = b.split_at(self.dim);
        Cell { lo, hi }
    }

    pub fn wgt_cent(&self, id: NodeId) -> &[f64] {
        &self.sums[self.dim * id..self.dim * (id + 1)]
    }

    pub(crate) fn raw_node(&self, id: NodeId) -> KdNode {
        self.nodes[id]
    }

    pub(crate) fn root_id(&self) -> NodeId {
        self.root
    }

    pub(crate) fn stored_point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Every stored point with its original index, in leaf order.
    pub fn points(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.ids
            .iter()
            .copied()
            .zip(self.points.chunks_exact(self.dim))
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        let mut stack = vec![(self.root, 0usize)];
        let mut deepest = 0;
        while let Some((id, d)) = stack.pop() {
            match self.nodes[id].kind {
                NodeKind::Leaf { .. } => deepest = deepest.max(d),
                NodeKind::Internal { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
        deepest
    }

    /// Bytes held by the arenas (capacity, not just length).
    pub fn heap_bytes(&self) -> usize {
        self.nodes.capacity() * size_of::<KdNode>()
            + (self.bounds.capacity() + self.sums.capacity() + self.points.capacity())
                * size_of::<f64>()
            + self.ids.capacity() * size_of::<usize>()
    }

    /// Walks the whole tree and checks the count, weighted-centroid and
    /// containment invariants. `tol` bounds the absolute error allowed on
    /// each coordinate of a weighted centroid.
    pub fn audit(&self, tol: f64) -> std::result::Result<(), String> {
        let dim = self.dim;
        let mut stack = vec![self.root];
        let mut seen_points = 0;
        while let Some(id) = stack.pop() {
            let node = self.nodes[id];
            let cell = self.cell(id);
            let mut expected = vec![0.0; dim];
            let count = match node.kind {
                NodeKind::Leaf {
                    start,
                    len,
                    uniform,
                } => {
                    for i in start..start + len {
                        let p = self.stored_point(i);
                        if !cell.contains(p) {
                            return Err(format!("node {id}: point {} outside its cell", self.ids[i]));
                        }
                        if uniform && p != self.stored_point(start) {
                            return Err(format!("node {id}: uniform leaf holds distinct points"));
                        }
                        add_assign(&mut expected, p);
                    }
                    seen_points += len;
                    len
                }
                NodeKind::Internal { left, right, .. } => {
                    for child in [left, right] {
                        let c = self.cell(child);
                        let inside = c
                            .lo
                            .iter()
                            .zip(c.hi)
                            .zip(cell.lo.iter().zip(cell.hi))
                            .all(|((cl, ch), (pl, ph))| pl <= cl && ch <= ph);
                        if !inside {
                            return Err(format!("node {id}: child {child} cell escapes parent"));
                        }
                        add_assign(&mut expected, self.wgt_cent(child));
                        stack.push(child);
                    }
                    self.nodes[left].count + self.nodes[right].count
                }
            };
            if count != node.count {
                return Err(format!("node {id}: count {} != {}", node.count, count));
            }
            for (a, b) in self.wgt_cent(id).iter().zip(&expected) {
                if (a - b).abs() > tol {
                    return Err(format!("node {id}: wgtCent off by {}", (a - b).abs()));
                }
            }
        }
        if seen_points != self.n_points() {
            return Err(format!("leaves hold {seen_points} points, root counts {}", self.n_points()));
        }
        Ok(())
    }

    /// Appends `other`'s arenas, returning the id its root now has.
    fn absorb(&mut self, other: KdTree) -> NodeId {
        let node_off = self.nodes.len();
        let point_off = self.ids.len();
        let id_off = self.n_points_stored();
        self.nodes.extend(other.nodes.into_iter().map(|mut node| {
            node.kind = match node.kind {
                NodeKind::Leaf {
                    start,
                    len,
                    uniform,
                } => NodeKind::Leaf {
                    start: start + point_off,
                    len,
                    uniform,
                },
                NodeKind::Internal { left, right, split } => NodeKind::Internal {
                    left: left + node_off,
                    right: right + node_off,
                    split,
                },
            };
            node
        }));
        self.bounds.extend(other.bounds);
        self.sums.extend(other.sums);
        self.points.extend(other.points);
        self.ids.extend(other.ids.into_iter().map(|i| i + id_off));
        other.root + node_off
    }

    fn n_points_stored(&self) -> usize {
        self.ids.len()
    }

    fn glue(&mut self, left: NodeId, right: NodeId) -> NodeId {
        let dim = self.dim;
        let id = self.nodes.len();
        self.nodes.push(KdNode {
            count: self.nodes[left].count + self.nodes[right].count,
            kind: NodeKind::Internal {
                left,
                right,
                split: None,
            },
        });
        let (l, r) = (self.cell(left), self.cell(right));
        let lo: Vec<f64> = l.lo.iter().zip(r.lo).map(|(a, b)| a.min(*b)).collect();
        let hi: Vec<f64> = l.hi.iter().zip(r.hi).map(|(a, b)| a.max(*b)).collect();
        self.bounds.extend(lo);
        self.bounds.extend(hi);
        self.sums.resize(self.sums.len() + dim, 0.0);
        self.set_sum_of_children(id, left, right);
        id
    }
}

/// Glues several trees under synthetic internal nodes without rebuilding.
///
/// Roots are paired left to right, level by level, until one remains. The
/// original indices of tree `t` are shifted by the total point count of
/// trees `0..t`, so the combined tree indexes the concatenation of the
/// inputs' datasets.
pub fn combine(trees: Vec<KdTree>) -> Result<KdTree> {
    if trees.len() < 2 {
        return Err(Error::config("combine needs at least two trees"));
    }
    let dim = trees[0].dim;
    for t in &trees {
        check_dim(dim, t.dim)?;
        if t.n_points() == 0 {
            return Err(Error::Empty("cannot combine an empty tree"));
        }
    }
    let mut iter = trees.into_iter();
    let mut out = iter.next().expect("length checked");
    let mut level = vec![out.root];
    for t in iter {
        level.push(out.absorb(t));
    }
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            match *pair {
                [a, b] => next.push(out.glue(a, b)),
                [a] => next.push(a),
                _ => unreachable!(),
            }
        }
        level = next;
    }
    out.root = level[0];
    Ok(out)
}
