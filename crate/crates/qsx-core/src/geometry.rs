//! Small Euclidean helpers shared across the pipeline: point arithmetic in
//! arbitrary dimension, diameters, and exact segment-segment distance.

pub type Point = Vec<f64>;

pub fn sub(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Point {
    a.iter().map(|x| x * s).collect()
}

/// a + s * b
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Linear interpolation a + t * (b - a).
pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Point {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

pub fn diameter(points: &[Point]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max(dist(&points[i], &points[j]));
        }
    }
    d
}

pub fn set_distance(a: &[Point], b: &[Point]) -> f64 {
    let mut d = f64::INFINITY;
    for p in a {
        for q in b {
            d = d.min(dist(p, q));
        }
    }
    d
}

/// Distance from a point to the segment [a, b].
pub fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = sub(b, a);
    let denom = dot(&ab, &ab);
    if denom == 0.0 {
        return dist(p, a);
    }
    let t = (dot(&sub(p, a), &ab) / denom).clamp(0.0, 1.0);
    dist(p, &axpy(a, t, &ab))
}

/// Exact distance between segments [p1, q1] and [p2, q2] in any dimension.
///
/// Clamped minimization of the quadratic |(p1 + s d1) - (p2 + t d2)|^2.
pub fn segment_segment_distance(p1: &[f64], q1: &[f64], p2: &[f64], q2: &[f64]) -> f64 {
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(&d1, &d1);
    let e = dot(&d2, &d2);
    let f = dot(&d2, &r);

    if a == 0.0 && e == 0.0 {
        return norm(&r);
    }
    if a == 0.0 {
        return point_segment_distance(p1, p2, q2);
    }
    if e == 0.0 {
        return point_segment_distance(p2, p1, q1);
    }

    let b = dot(&d1, &d2);
    let c = dot(&d1, &r);
    let denom = a * e - b * b;

    let mut s = if denom != 0.0 {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    dist(&axpy(p1, s, &d1), &axpy(p2, t, &d2))
}

/// Zero-pad a point up to `dim` coordinates.
pub fn pad(p: &[f64], dim: usize) -> Point {
    let mut out = p.to_vec();
    out.resize(dim, 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_parallel() {
        let d = segment_segment_distance(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn segment_distance_crossing_offset() {
        // Perpendicular segments offset along z.
        let d = segment_segment_distance(
            &[-1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[0.0, -1.0, 0.5],
            &[0.0, 1.0, 0.5],
        );
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn segment_distance_endpoint_case() {
        let d = segment_segment_distance(&[0.0], &[1.0], &[3.0], &[5.0]);
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn point_segment_clamps() {
        let d = point_segment_distance(&[2.0, 1.0], &[0.0, 0.0], &[1.0, 0.0]);
        assert!((d - (2.0f64).sqrt()).abs() < 1e-12);
    }
}
