//! Exact nearest-neighbor search over 3D points.

use std::collections::HashMap;

use crate::Vec3;

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Static k-d tree answering exact nearest-neighbor queries.
pub struct KdTree {
    points: Vec<Vec3>,
    // Permutation of `points`; leaves own contiguous ranges of it.
    order: Vec<usize>,
    root: Option<Node>,
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = (!points.is_empty()).then(|| build(&points, &mut order, 0));
        Self { points, order, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and Euclidean distance of the nearest point, `None` when empty.
    /// Ties resolve to the lowest index.
    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        let root = self.root.as_ref()?;
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(root, query, usize::MAX, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    /// Nearest neighbor of the stored point `index` among the other stored points.
    pub fn nearest_other(&self, index: usize) -> Option<(usize, f64)> {
        let root = self.root.as_ref()?;
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(root, &self.points[index], index, &mut best);
        (best.0 != usize::MAX).then(|| (best.0, best.1.sqrt()))
    }

    fn search(&self, node: &Node, q: &Vec3, skip: usize, best: &mut (usize, f64)) {
        match node {
            Node::Leaf { start, end } => {
                for &i in self.order[*start..*end].iter().filter(|&&i| i != skip) {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, best);
                if diff * diff <= best.1 {
                    self.search(far, q, skip, best);
                }
            }
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], offset: usize) -> Node {
    if order.len() <= LEAF_SIZE {
        return Node::Leaf { start: offset, end: offset + order.len() };
    }
    let (mut lo, mut hi) = (points[order[0]], points[order[0]]);
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let axis = (hi - lo).imax();
    if hi[axis] - lo[axis] <= 0.0 {
        // All points coincide.
        return Node::Leaf { start: offset, end: offset + order.len() };
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[mid]][axis];
    let (left, right) = order.split_at_mut(mid);
    Node::Split {
        axis,
        value,
        left: Box::new(build(points, left, offset)),
        right: Box::new(build(points, right, offset + mid)),
    }
}

/// Incrementally filled uniform grid for "is any accepted point closer than r" queries.
pub struct RadiusGrid {
    radius: f64,
    cells: HashMap<[i64; 3], Vec<Vec3>>,
}

impl RadiusGrid {
    /// `radius` must be positive and finite.
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0 && radius.is_finite(), "grid radius must be positive");
        Self { radius, cells: HashMap::new() }
    }

    fn cell(&self, p: &Vec3) -> [i64; 3] {
        [
            (p.x / self.radius).floor() as i64,
            (p.y / self.radius).floor() as i64,
            (p.z / self.radius).floor() as i64,
        ]
    }

    pub fn insert(&mut self, p: Vec3) {
        let key = self.cell(&p);
        self.cells.entry(key).or_default().push(p);
    }

    /// True when some inserted point lies strictly closer than the radius.
    pub fn has_within(&self, p: &Vec3) -> bool {
        let c = self.cell(p);
        let r2 = self.radius * self.radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if bucket.iter().any(|q| (q - p).norm_squared() < r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_nearest(points: &[Vec3], q: &Vec3) -> f64 {
        points.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn empty_tree_has_no_neighbor() {
        assert!(KdTree::new(vec![]).nearest(&Vec3::zeros()).is_none());
    }

    #[test]
    fn coincident_points_build_and_query() {
        let tree = KdTree::new(vec![Vec3::new(1.0, 1.0, 1.0); 50]);
        let (i, d) = tree.nearest(&Vec3::new(1.0, 1.0, 2.0)).unwrap();
        assert_eq!(i, 0);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn radius_grid_uses_strict_distance() {
        let mut grid = RadiusGrid::new(1.0);
        grid.insert(Vec3::zeros());
        assert!(!grid.has_within(&Vec3::new(1.0, 0.0, 0.0)));
        assert!(grid.has_within(&Vec3::new(0.999, 0.0, 0.0)));
        assert!(grid.has_within(&Vec3::new(-0.5, -0.5, 0.5)));
    }

    proptest! {
        #[test]
        fn kd_tree_matches_brute_force(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -1.0f64..1.0), 1..300),
            qs in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0, -2.0f64..2.0), 1..30),
        ) {
            let points: Vec<Vec3> = pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let tree = KdTree::new(points.clone());
            for &(x, y, z) in &qs {
                let q = Vec3::new(x, y, z);
                let (i, d) = tree.nearest(&q).unwrap();
                prop_assert_eq!(d, brute_nearest(&points, &q));
                prop_assert_eq!((points[i] - q).norm(), d);
            }
            for (i, p) in points.iter().enumerate() {
                let others: Vec<Vec3> = points.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| *q).collect();
                match tree.nearest_other(i) {
                    None => prop_assert!(others.is_empty()),
                    Some((j, d)) => {
                        prop_assert!(j != i);
                        prop_assert_eq!(d, brute_nearest(&others, p));
                    }
                }
            }
        }
    }
}
