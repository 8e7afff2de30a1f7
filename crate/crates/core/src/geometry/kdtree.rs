//! Static kd-tree over 3D points, used for k-nearest-neighbor queries against
//! point sets that never move after construction.

use nalgebra::Point3;

#[derive(Debug, Clone)]
struct Node {
    /// Index into the original point slice.
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// Exact nearest-neighbor index over a fixed point set.
///
/// Queries return squared distances; results match a brute-force scan exactly
/// (the tree only prunes, it never approximates).
#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    points: Vec<Point3<f64>>,
    root: i32,
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut indices, 0, &mut nodes);
        KdTree {
            nodes,
            points: points.to_vec(),
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_rec(
        points: &[Point3<f64>],
        indices: &mut [u32],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> i32 {
        if indices.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = indices.len() / 2;
        indices.select_nth_unstable_by(mid, |&a, &b| {
            let ka = points[a as usize][axis as usize];
            let kb = points[b as usize][axis as usize];
            ka.partial_cmp(&kb).unwrap().then(a.cmp(&b))
        });
        let point = indices[mid];
        let node_id = nodes.len() as i32;
        nodes.push(Node {
            point,
            axis,
            left: -1,
            right: -1,
        });
        let (lo, rest) = indices.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = Self::build_rec(points, lo, depth + 1, nodes);
        let right = Self::build_rec(points, hi, depth + 1, nodes);
        nodes[node_id as usize].left = left;
        nodes[node_id as usize].right = right;
        node_id
    }

    /// The `k` nearest points to `query`, as `(index, squared distance)`
    /// sorted by ascending distance (ties by ascending index).
    pub fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BoundedHeap::new(k);
        self.knn_rec(self.root, query, &mut heap);
        heap.into_sorted()
    }

    fn knn_rec(&self, node_id: i32, query: &Point3<f64>, heap: &mut BoundedHeap) {
        if node_id < 0 {
            return;
        }
        let node = &self.nodes[node_id as usize];
        let p = &self.points[node.point as usize];
        let d2 = (p - query).norm_squared();
        heap.push(node.point as usize, d2);

        let axis = node.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.knn_rec(near, query, heap);
        if delta * delta <= heap.bound() {
            self.knn_rec(far, query, heap);
        }
    }

    /// Nearest single point: `(index, squared distance)`.
    pub fn nearest(&self, query: &Point3<f64>) -> Option<(usize, f64)> {
        self.knn(query, 1).into_iter().next()
    }

    /// All points within squared distance `radius_sq` of `query` (unsorted).
    pub fn within(&self, query: &Point3<f64>, radius_sq: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.within_rec(self.root, query, radius_sq, &mut out);
        out
    }

    fn within_rec(
        &self,
        node_id: i32,
        query: &Point3<f64>,
        radius_sq: f64,
        out: &mut Vec<(usize, f64)>,
    ) {
        if node_id < 0 {
            return;
        }
        let node = &self.nodes[node_id as usize];
        let p = &self.points[node.point as usize];
        let d2 = (p - query).norm_squared();
        if d2 <= radius_sq {
            out.push((node.point as usize, d2));
        }
        let axis = node.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.within_rec(near, query, radius_sq, out);
        if delta * delta <= radius_sq {
            self.within_rec(far, query, radius_sq, out);
        }
    }
}

/// Max-heap of the current k best candidates, keyed by squared distance with
/// index as tie-breaker so results are order-independent.
struct BoundedHeap {
    k: usize,
    // (d2, index), worst candidate first
    entries: Vec<(f64, usize)>,
}

impl BoundedHeap {
    fn new(k: usize) -> Self {
        BoundedHeap {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    fn bound(&self) -> f64 {
        if self.entries.len() < self.k {
            f64::INFINITY
        } else {
            self.entries[0].0
        }
    }

    fn push(&mut self, index: usize, d2: f64) {
        if self.entries.len() < self.k {
            self.entries.push((d2, index));
            self.sift_up(self.entries.len() - 1);
        } else if (d2, index) < self.entries[0] {
            self.entries[0] = (d2, index);
            self.sift_down(0);
        }
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.entries[i] > self.entries[parent] {
                self.entries.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut largest = i;
            if l < self.entries.len() && self.entries[l] > self.entries[largest] {
                largest = l;
            }
            if r < self.entries.len() && self.entries[r] > self.entries[largest] {
                largest = r;
            }
            if largest == i {
                break;
            }
            self.entries.swap(i, largest);
            i = largest;
        }
    }

    fn into_sorted(self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.entries.into_iter().map(|(d, i)| (i, d)).collect();
        v.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        v
    }
}
