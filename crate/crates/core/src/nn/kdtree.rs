//! Exact k-d tree over a target cloud.
//!
//! Kept in this module as the sequential counterpart to the tiled kernel: it
//! serves equivalence testing and latency comparison, not a separate search
//! feature set. Construction is deterministic — median split, axis cycling
//! x→y→z, coordinate ties broken by point index — and queries backtrack, so
//! results are exact and agree bit-for-bit with [`super::brute_force_nn`]
//! under the shared tie-break rule.

use crate::geometry::{squared_distance, Point3, PointCloud};

use super::NnError;

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Index of the pivot point in the original target cloud.
    point: u32,
    left: u32,
    right: u32,
}

/// Nearest-neighbor answer for a single query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub target_index: usize,
    pub squared_distance: f64,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    points: Vec<Point3>,
    root: u32,
}

impl KdTree {
    /// Builds a balanced tree over the target points.
    pub fn build(target: &PointCloud) -> Result<Self, NnError> {
        if target.is_empty() {
            return Err(NnError::EmptyCloud);
        }
        let points = target.points().to_vec();
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_recursive(&points, &mut ids, 0, &mut nodes);
        Ok(Self {
            nodes,
            points,
            root,
        })
    }

    /// Exact nearest neighbor with backtracking; ties go to the smallest
    /// target index, matching the streaming kernel.
    pub fn nn(&self, query: &Point3) -> Neighbor {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(self.root, query, 0, &mut best);
        Neighbor {
            target_index: best.1,
            squared_distance: best.0,
        }
    }

    fn search(&self, node: u32, query: &Point3, depth: usize, best: &mut (f64, usize)) {
        if node == NO_CHILD {
            return;
        }
        let n = self.nodes[node as usize];
        let index = n.point as usize;
        let point = &self.points[index];

        let d = squared_distance(query, point);
        if d < best.0 || (d == best.0 && index < best.1) {
            *best = (d, index);
        }

        let axis = depth % 3;
        let diff = coord(query, axis) - coord(point, axis);
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, depth + 1, best);
        // The far half-space can still hold a point at exactly the current
        // best distance with a smaller index, so prune only on strict excess.
        if diff * diff <= best.0 {
            self.search(far, query, depth + 1, best);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the point at the root (the pivot of the first median split).
    pub fn root_point_index(&self) -> usize {
        self.nodes[self.root as usize].point as usize
    }

    /// Walks every node, yielding the stored point indices.
    pub fn traverse_point_indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            if node == NO_CHILD {
                continue;
            }
            let n = self.nodes[node as usize];
            out.push(n.point as usize);
            stack.push(n.left);
            stack.push(n.right);
        }
        out
    }
}

fn coord(p: &Point3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn build_recursive(points: &[Point3], ids: &mut [u32], depth: usize, nodes: &mut Vec<Node>) -> u32 {
    if ids.is_empty() {
        return NO_CHILD;
    }
    let axis = depth % 3;
    ids.sort_unstable_by(|&a, &b| {
        coord(&points[a as usize], axis)
            .total_cmp(&coord(&points[b as usize], axis))
            .then(a.cmp(&b))
    });
    let mid = ids.len() / 2;
    let pivot = ids[mid];
    let (left_ids, rest) = ids.split_at_mut(mid);
    let right_ids = &mut rest[1..];

    let slot = nodes.len() as u32;
    nodes.push(Node {
        point: pivot,
        left: NO_CHILD,
        right: NO_CHILD,
    });
    let left = build_recursive(points, left_ids, depth + 1, nodes);
    let right = build_recursive(points, right_ids, depth + 1, nodes);
    nodes[slot as usize].left = left;
    nodes[slot as usize].right = right;
    slot
}
