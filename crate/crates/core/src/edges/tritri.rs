use nalgebra::{Point3, Vector3};

/// Signed distances of `tri`'s corners to the plane `(origin, normal)`,
/// snapped to zero within a scale-relative tolerance.
fn plane_distances(tri: &[Point3<f64>; 3], origin: &Point3<f64>, normal: &Vector3<f64>, eps: f64) -> [f64; 3] {
    tri.map(|p| {
        let d = normal.dot(&(p - origin));
        if d.abs() <= eps {
            0.0
        } else {
            d
        }
    })
}

/// Points where `tri` meets the plane whose signed distances are `d`.
fn crossing_points(tri: &[Point3<f64>; 3], d: &[f64; 3]) -> Vec<Point3<f64>> {
    let mut pts = Vec::with_capacity(3);
    for k in 0..3 {
        if d[k] == 0.0 {
            pts.push(tri[k]);
        }
        let l = (k + 1) % 3;
        if d[k] * d[l] < 0.0 {
            let t = d[k] / (d[k] - d[l]);
            pts.push(tri[k] + (tri[l] - tri[k]) * t);
        }
    }
    pts
}

/// Extent of `pts` along `dir`: `(lo, lo_point, hi, hi_point)`.
fn extent(pts: &[Point3<f64>], dir: &Vector3<f64>) -> (f64, Point3<f64>, f64, Point3<f64>) {
    let mut lo = (f64::MAX, pts[0]);
    let mut hi = (f64::MIN, pts[0]);
    for p in pts {
        let s = dir.dot(&p.coords);
        if s < lo.0 {
            lo = (s, *p);
        }
        if s > hi.0 {
            hi = (s, *p);
        }
    }
    (lo.0, lo.1, hi.0, hi.1)
}

/// Intersection segment of two triangles, or `None` when they are disjoint,
/// coplanar, or touch in a single point.
pub fn triangle_intersection(
    t1: &[Point3<f64>; 3],
    t2: &[Point3<f64>; 3],
) -> Option<(Point3<f64>, Point3<f64>)> {
    let n1 = (t1[1] - t1[0]).cross(&(t1[2] - t1[0]));
    let n2 = (t2[1] - t2[0]).cross(&(t2[2] - t2[0]));
    let (l1, l2) = (n1.norm(), n2.norm());
    if l1 == 0.0 || l2 == 0.0 {
        return None;
    }
    let (n1, n2) = (n1 / l1, n2 / l2);
    let scale = t1
        .iter()
        .chain(t2.iter())
        .map(|p| p.coords.amax())
        .fold(1.0f64, f64::max);
    let eps = 1e-12 * scale;

    let d1 = plane_distances(t1, &t2[0], &n2, eps);
    if d1.iter().all(|&d| d > 0.0) || d1.iter().all(|&d| d < 0.0) || d1.iter().all(|&d| d == 0.0) {
        return None;
    }
    let d2 = plane_distances(t2, &t1[0], &n1, eps);
    if d2.iter().all(|&d| d > 0.0) || d2.iter().all(|&d| d < 0.0) {
        return None;
    }
    let dir = n1.cross(&n2);
    if dir.norm() < 1e-12 {
        return None;
    }
    let p1 = crossing_points(t1, &d1);
    let p2 = crossing_points(t2, &d2);
    if p1.is_empty() || p2.is_empty() {
        return None;
    }
    let (lo1, lp1, hi1, hp1) = extent(&p1, &dir);
    let (lo2, lp2, hi2, hp2) = extent(&p2, &dir);
    let (lo, lo_pt) = if lo1 >= lo2 { (lo1, lp1) } else { (lo2, lp2) };
    let (hi, hi_pt) = if hi1 <= hi2 { (hi1, hp1) } else { (hi2, hp2) };
    if hi - lo <= eps {
        return None;
    }
    Some((lo_pt, hi_pt))
}
