use nalgebra::Point3;

use crate::scene::Mesh;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Point3::new(f64::MAX, f64::MAX, f64::MAX),
            max: Point3::new(f64::MIN, f64::MIN, f64::MIN),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }

    fn of_triangle(corners: &[Point3<f64>; 3]) -> Aabb {
        let mut b = Aabb::empty();
        corners.iter().for_each(|p| b.grow(p));
        b
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Axis-aligned bounding-volume hierarchy over a mesh's non-degenerate
/// triangles, split at the median centroid along the widest axis.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    boxes: Vec<Aabb>,
}

impl Bvh {
    pub fn build(mesh: &Mesh) -> Bvh {
        let boxes: Vec<Aabb> = (0..mesh.num_triangles())
            .map(|f| Aabb::of_triangle(&mesh.corners(f)))
            .collect();
        let mut order: Vec<u32> = (0..mesh.num_triangles() as u32)
            .filter(|&f| !mesh.is_degenerate(f as usize))
            .collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let n = order.len();
            build_node(&boxes, &mut order, 0, n, &mut nodes);
        }
        Bvh {
            nodes,
            order,
            boxes,
        }
    }

    pub fn triangle_bounds(&self, face: usize) -> &Aabb {
        &self.boxes[face]
    }

    /// Triangles whose bounds overlap `query`, ascending.
    pub fn query(&self, query: &Aabb) -> Vec<u32> {
        let mut hits = Vec::new();
        if self.nodes.is_empty() {
            return hits;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bounds().overlaps(query) {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[start..end] {
                        if self.boxes[f as usize].overlaps(query) {
                            hits.push(f);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        hits.sort_unstable();
        hits
    }
}

fn build_node(boxes: &[Aabb], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let bounds = order[start..end]
        .iter()
        .fold(Aabb::empty(), |acc, &f| acc.union(&boxes[f as usize]));
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    let centroid = |f: u32| {
        let b = &boxes[f as usize];
        nalgebra::center(&b.min, &b.max)
    };
    let mut cb = Aabb::empty();
    for &f in &order[start..end] {
        cb.grow(&centroid(f));
    }
    let ext = cb.max - cb.min;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].sort_by(|&a, &b| {
        centroid(a)[axis]
            .total_cmp(&centroid(b)[axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf {
        bounds,
        start,
        end,
    });
    let left = build_node(boxes, order, start, mid, nodes);
    let right = build_node(boxes, order, mid, end, nodes);
    nodes[id] = Node::Inner {
        bounds,
        left,
        right,
    };
    id
}
