//! Exact k-nearest-neighbor queries over 3D points.
//!
//! A static kd-tree with deterministic ordering: neighbors are ranked by
//! `(squared distance, index)`, so equidistant points always resolve to the
//! lower index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Point;

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Static kd-tree over a borrowed point slice.
#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Point],
    order: Vec<usize>,
    root: Node,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let n = order.len();
        let root = Self::build(points, &mut order, 0, n);
        Self { points, order, root }
    }

    fn build(points: &[Point], order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        let slice = &mut order[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap_or(0);
        if hi[axis] - lo[axis] <= 0.0 {
            return Node::Leaf { start, end };
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&i, &j| {
            points[i][axis].total_cmp(&points[j][axis]).then(i.cmp(&j))
        });
        let value = points[slice[mid]][axis];
        let split = start + mid;
        let left = Box::new(Self::build(points, order, start, split));
        let right = Box::new(Self::build(points, order, split, end));
        Node::Split { axis, value, left, right }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query`, closest first. `exclude` drops one
    /// index from the candidates (used to skip the query point itself).
    pub fn nearest(&self, query: &Point, k: usize, exclude: Option<usize>) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, query, k, exclude, &mut heap);
        let mut found = heap.into_vec();
        found.sort();
        found.into_iter().map(|c| c.index).collect()
    }

    fn search(
        &self,
        node: &Node,
        query: &Point,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match node {
            Node::Leaf { start, end } => {
                for &index in &self.order[*start..*end] {
                    if Some(index) == exclude {
                        continue;
                    }
                    let cand = Candidate { dist2: dist2(query, &self.points[index]), index };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(worst) = heap.peek() {
                        if cand < *worst {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let delta = query[*axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, exclude, heap);
                // `<=` keeps equidistant candidates with lower indices reachable.
                let bound = heap.peek().map_or(f64::INFINITY, |c| c.dist2);
                if heap.len() < k || delta * delta <= bound {
                    self.search(far, query, k, exclude, heap);
                }
            }
        }
    }

    /// k-NN lists for every point, excluding the point itself.
    pub fn neighbor_graph(&self, k: usize) -> Vec<Vec<usize>> {
        (0..self.points.len())
            .map(|i| self.nearest(&self.points[i], k, Some(i)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point], q: &Point, k: usize, exclude: Option<usize>) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, p)| (dist2(q, p), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points: Vec<Point> = (0..500)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let tree = KdTree::new(&points);
        for i in (0..500).step_by(7) {
            assert_eq!(tree.nearest(&points[i], 12, Some(i)), brute(&points, &points[i], 12, Some(i)));
        }
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        // Integer grid has many equidistant neighbors.
        let mut points = Vec::new();
        for x in 0..10 {
            for y in 0..10 {
                points.push([x as f64, y as f64, 0.0]);
            }
        }
        let tree = KdTree::new(&points);
        for i in 0..points.len() {
            assert_eq!(tree.nearest(&points[i], 8, Some(i)), brute(&points, &points[i], 8, Some(i)));
        }
    }

    #[test]
    fn fewer_points_than_k() {
        let points = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let tree = KdTree::new(&points);
        assert_eq!(tree.nearest(&points[0], 5, Some(0)), vec![1]);
    }
}
