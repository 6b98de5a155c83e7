//! Bridge geometry: equilateral detours into fresh coordinate directions,
//! the interval-crowding bound, and the greedy dimension assignment that
//! keeps bridges over nearby gaps disjoint.

use std::collections::HashMap;
use std::sync::Mutex;

use once_cell::sync::Lazy;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QsxError, Result};
use crate::geometry::{self, Point};
use crate::metric::{relative_distance_interval_pair, PowerModulus};

const EQUILATERAL_TOL: f64 = 1e-12;

/// Calibration search parameters (seeded; results cached per modulus).
const CALIBRATION_SEED: u64 = 0x715c_a11b;
const CALIBRATION_SAMPLES: usize = 10_000;
const CALIBRATION_GROWTH: f64 = 1.25;
const CALIBRATION_MAX: f64 = 1e6;

/// Two image endpoints joined through an apex lifted into a fresh dimension.
///
/// The polyline [p, apex] + [apex, q] is the closure of the equilateral
/// triangle over the chord minus the chord itself. `dim_index` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bridge {
    pub p: Point,
    pub q: Point,
    pub apex: Point,
    pub dim_index: usize,
}

impl Bridge {
    pub fn chord_length(&self) -> f64 {
        geometry::dist(&self.p, &self.q)
    }

    /// Total polyline length: two equilateral sides.
    pub fn length(&self) -> f64 {
        2.0 * self.chord_length()
    }
}

/// Build the bridge over [p, q] lifted into (1-based) dimension k > n.
///
/// The apex is midpoint(p, q) + (sqrt(3)/2) |p - q| u, with u the unit
/// in-plane normal of positive e_k component obtained by orthonormalizing
/// (e_k - p) against (q - p).
pub fn make_bridge(p: &[f64], q: &[f64], k: usize, ambient: usize) -> Result<Bridge> {
    let dim = p.len().max(q.len()).max(k);
    let p = geometry::pad(p, dim);
    let q = geometry::pad(q, dim);
    if k <= ambient || k > dim {
        return Err(QsxError::BridgeDimensionNotFresh { dim: k, ambient });
    }
    let ki = k - 1;
    if p[ki] != 0.0 || q[ki] != 0.0 {
        return Err(QsxError::NonzeroBridgeCoordinate(k));
    }
    let chord = geometry::dist(&p, &q);
    if chord == 0.0 {
        return Err(QsxError::DegenerateBridge);
    }
    let d = geometry::scale(&geometry::sub(&q, &p), 1.0 / chord);
    // Endpoints carry zero k-th coordinate, so e_k is already orthogonal to
    // the chord and the Gram-Schmidt step leaves it untouched: the apex
    // rises straight out of the ambient plane. Anchoring the normal at the
    // point e_k instead would tilt it nearly in-plane once |p| dwarfs the
    // chord and same-dimension bridges would lose their uniform separation.
    let mut v = vec![0.0; dim];
    v[ki] = 1.0;
    let u_raw = geometry::axpy(&v, -geometry::dot(&v, &d), &d);
    let u = geometry::scale(&u_raw, 1.0 / geometry::norm(&u_raw));
    debug_assert!(u[ki] > 0.0);
    let mid = geometry::lerp(&p, &q, 0.5);
    let apex = geometry::axpy(&mid, 3.0f64.sqrt() / 2.0 * chord, &u);
    let b = Bridge {
        p,
        q,
        apex,
        dim_index: k,
    };
    debug_assert!({
        // Cancellation error scales with the coordinate magnitude, not the
        // chord, so the tolerance must account for both.
        let tol = EQUILATERAL_TOL * (chord + geometry::norm(&mid));
        let s1 = geometry::dist(&b.p, &b.apex);
        let s2 = geometry::dist(&b.q, &b.apex);
        (s1 - chord).abs() <= tol && (s2 - chord).abs() <= tol
    });
    Ok(b)
}

/// Constant-speed point on the bridge polyline, s in [0, 1].
pub fn bridge_point(b: &Bridge, s: f64) -> Result<Point> {
    if !(0.0..=1.0).contains(&s) {
        return Err(QsxError::ParameterOutOfRange(s));
    }
    Ok(if s <= 0.5 {
        geometry::lerp(&b.p, &b.apex, 2.0 * s)
    } else {
        geometry::lerp(&b.apex, &b.q, 2.0 * s - 1.0)
    })
}

/// Exact distance between two bridge polylines (segment arithmetic).
pub fn bridge_distance(a: &Bridge, b: &Bridge) -> f64 {
    let sides_a = [(&a.p, &a.apex), (&a.apex, &a.q)];
    let sides_b = [(&b.p, &b.apex), (&b.apex, &b.q)];
    let mut d = f64::INFINITY;
    for (p1, q1) in sides_a {
        for (p2, q2) in sides_b {
            d = d.min(geometry::segment_segment_distance(p1, q1, p2, q2));
        }
    }
    d
}

/// d* of two bridges; bridge diameter equals its chord length.
pub fn bridge_relative_distance(a: &Bridge, b: &Bridge) -> f64 {
    bridge_distance(a, b) / a.chord_length().min(b.chord_length())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrowdingCheck {
    pub count: usize,
    pub bound: f64,
    pub ok: bool,
}

/// Largest subfamily of disjoint closed intervals with pairwise relative
/// distance <= d, checked against the bound 2d + 3.
///
/// Exact maximum clique for up to 20 intervals, greedy above.
pub fn crowding_bound_check(intervals: &[(f64, f64)], d: f64) -> Result<CrowdingCheck> {
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].1 >= w[1].0) {
        return Err(QsxError::InvalidIntervalSet(
            "crowding check requires disjoint intervals".into(),
        ));
    }
    let n = sorted.len();
    let mut adj = vec![0u32; n];
    for i in 0..n {
        for j in i + 1..n {
            let dd = relative_distance_interval_pair(sorted[i], sorted[j])?;
            if dd <= d {
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
        }
    }
    let count = if n <= 20 {
        max_clique(&adj)
    } else {
        greedy_clique(&adj)
    };
    let bound = 2.0 * d + 3.0;
    Ok(CrowdingCheck {
        count,
        bound,
        ok: count as f64 <= bound,
    })
}

fn max_clique(adj: &[u32]) -> usize {
    fn expand(adj: &[u32], cand: u32, size: usize, best: &mut usize) {
        if size + cand.count_ones() as usize <= *best {
            return;
        }
        if cand == 0 {
            *best = (*best).max(size);
            return;
        }
        let mut c = cand;
        while c != 0 {
            if size + c.count_ones() as usize <= *best {
                return;
            }
            let v = c.trailing_zeros() as usize;
            c &= c - 1;
            expand(adj, c & adj[v], size + 1, best);
        }
    }
    let full = if adj.len() == 32 {
        u32::MAX
    } else {
        (1u32 << adj.len()) - 1
    };
    let mut best = 0;
    expand(adj, full, 0, &mut best);
    best
}

fn greedy_clique(adj: &[u32]) -> usize {
    let n = adj.len();
    let mut best = 0;
    for start in 0..n {
        let mut members = vec![start];
        for v in 0..n {
            if v != start && members.iter().all(|&m| adj[m] & (1 << v) != 0) {
                members.push(v);
            }
        }
        best = best.max(members.len());
    }
    best
}

/// Map from gap index to its (1-based) bridge dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionAssignment {
    pub gap_dims: Vec<usize>,
    pub threshold: f64,
    pub palette_size: usize,
    pub total_dim: usize,
}

/// A gap with the images of its endpoints.
#[derive(Debug, Clone)]
pub struct GapSpec {
    pub lo: f64,
    pub hi: f64,
    pub image_lo: Point,
    pub image_hi: Point,
}

static CALIBRATION_CACHE: Lazy<Mutex<HashMap<(u64, u64), f64>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// The conflict threshold C0: the smallest domain relative distance whose
/// image guarantee (via the quasisymmetric distortion bound) keeps same-dim
/// bridge relative distances >= 1 over a seeded randomized search.
pub fn calibrate_conflict_threshold(modulus: &PowerModulus) -> f64 {
    let key = (modulus.scale().to_bits(), modulus.exponent().to_bits());
    if let Some(&v) = CALIBRATION_CACHE.lock().unwrap().get(&key) {
        return v;
    }
    let mut c0 = 1.0f64;
    let value = loop {
        // Lower distortion bound of eq-style relative distance transport:
        // image pair d* >= (1/2) / eta(1 / C0).
        let guarantee = 0.5 / modulus.eval(1.0 / c0).expect("positive");
        if guarantee > 0.0 && worst_bridge_separation(guarantee) >= 1.0 {
            break c0;
        }
        c0 *= CALIBRATION_GROWTH;
        if c0 > CALIBRATION_MAX {
            log::warn!("conflict threshold calibration hit its cap");
            break CALIBRATION_MAX;
        }
    };
    log::info!("calibrated conflict threshold C0 = {value}");
    CALIBRATION_CACHE.lock().unwrap().insert(key, value);
    value
}

/// Minimal same-dimension bridge relative distance over random endpoint-pair
/// configurations whose pair relative distance equals `pair_rel`.
///
/// The apex plane is anchored at e_k, so bridge geometry is not translation
/// invariant; positions are drawn from the band the normalized, windowed
/// pipeline actually produces (|coordinate| <= 8) with chord scales down to
/// 1e-3 of it.
fn worst_bridge_separation(pair_rel: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
    let n = 2;
    let k = n + 1;
    let mut worst = f64::INFINITY;
    for _ in 0..CALIBRATION_SAMPLES {
        let dir = |rng: &mut ChaCha8Rng| {
            let mut v: Point = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nv = geometry::norm(&v);
            if nv == 0.0 {
                v[0] = 1.0;
            } else {
                v = geometry::scale(&v, 1.0 / nv);
            }
            v
        };
        let s1 = 10f64.powf(rng.gen_range(-3.0..0.0));
        let s2 = 10f64.powf(rng.gen_range(-3.0..0.0));
        let p1: Point = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let q1 = geometry::axpy(&p1, s1, &dir(&mut rng));
        let base: Point = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let sep_dir = dir(&mut rng);
        let pair_dir = dir(&mut rng);
        let target = pair_rel * s1.min(s2);

        // Bisection on the separation scalar: the pair distance is monotone
        // once the pairs are pulled apart.
        let place = |t: f64| {
            let p2 = geometry::axpy(&base, t, &sep_dir);
            let q2 = geometry::axpy(&p2, s2, &pair_dir);
            (p2, q2)
        };
        let pair_dist = |t: f64| {
            let (p2, q2) = place(t);
            let a = [p1.clone(), q1.clone()];
            let b = [p2, q2];
            geometry::set_distance(&a, &b)
        };
        let mut lo = 0.0;
        let mut hi = target + s1 + s2 + geometry::norm(&base) + 1.0;
        while pair_dist(hi) < target {
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if pair_dist(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (p2, q2) = place(hi);
        let b1 = make_bridge(&p1, &q1, k, n).expect("fresh dim");
        let b2 = make_bridge(&p2, &q2, k, n).expect("fresh dim");
        worst = worst.min(bridge_relative_distance(&b1, &b2));
    }
    worst
}

/// Greedily assign bridge dimensions so that gaps with closure relative
/// distance below the calibrated threshold never share one.
///
/// Gaps are processed in canonical order: decreasing length, ties by left
/// endpoint. The palette is {n+1, ..., N} with N = n + n0 + 1 and
/// n0 = ceil(2 C0 + 3).
pub fn assign_dimensions(
    gaps: &[GapSpec],
    ambient: usize,
    modulus: &PowerModulus,
    _uniform_perfectness: f64,
) -> Result<DimensionAssignment> {
    let c0 = calibrate_conflict_threshold(modulus);
    let n0 = (2.0 * c0 + 3.0).ceil() as usize;
    let total_dim = ambient + n0 + 1;
    let mut order: Vec<usize> = (0..gaps.len()).collect();
    order.sort_by(|&a, &b| {
        let la = gaps[a].hi - gaps[a].lo;
        let lb = gaps[b].hi - gaps[b].lo;
        lb.total_cmp(&la).then(gaps[a].lo.total_cmp(&gaps[b].lo))
    });
    let mut dims = vec![0usize; gaps.len()];
    for (rank, &g) in order.iter().enumerate() {
        let mut used = vec![false; total_dim - ambient];
        for &h in &order[..rank] {
            let d = relative_distance_interval_pair(
                (gaps[g].lo, gaps[g].hi),
                (gaps[h].lo, gaps[h].hi),
            )?;
            if d < c0 {
                used[dims[h] - ambient - 1] = true;
            }
        }
        let free = used.iter().position(|&u| !u).ok_or(QsxError::PaletteExhausted(g))?;
        dims[g] = ambient + 1 + free;
    }
    Ok(DimensionAssignment {
        gap_dims: dims,
        threshold: c0,
        palette_size: n0,
        total_dim,
    })
}

/// Build the bridges of an assignment in the assignment's total dimension.
pub fn build_bridges(gaps: &[GapSpec], assignment: &DimensionAssignment) -> Result<Vec<Bridge>> {
    gaps.iter()
        .zip(&assignment.gap_dims)
        .map(|(g, &k)| {
            let ambient = assignment.total_dim - assignment.palette_size - 1;
            make_bridge(
                &geometry::pad(&g.image_lo, assignment.total_dim),
                &geometry::pad(&g.image_hi, assignment.total_dim),
                k,
                ambient,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BridgePairReport {
    pub i: usize,
    pub j: usize,
    pub min_distance: f64,
    pub bridge_relative_distance: f64,
    pub endpoint_relative_distance: Option<f64>,
    /// Contact at a shared endpoint is allowed; anything else is a failure.
    pub shared_endpoint: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    pub pairs: Vec<BridgePairReport>,
    /// Ratio of bridge d* to endpoint-pair d*, the empirical two-sided
    /// comparability constant, over pairs where both are defined.
    pub comparability: Option<(f64, f64)>,
}

/// Pairwise separation diagnostics: exact segment distances (authoritative)
/// plus 64-point sampled relative distances per bridge.
pub fn bridge_separation_report(bridges: &[Bridge]) -> Result<SeparationReport> {
    const SAMPLES: usize = 64;
    let mut pairs = Vec::new();
    let mut ratio_lo = f64::INFINITY;
    let mut ratio_hi = 0.0f64;
    let mut any_ratio = false;
    for i in 0..bridges.len() {
        for j in i + 1..bridges.len() {
            let (a, b) = (&bridges[i], &bridges[j]);
            let shared_endpoint = [&a.p, &a.q]
                .iter()
                .any(|pa| [&b.p, &b.q].iter().any(|pb| geometry::dist(pa, pb) == 0.0));
            let exact = bridge_distance(a, b);
            if exact <= EQUILATERAL_TOL && !shared_endpoint {
                return Err(QsxError::IntersectingBridges {
                    i,
                    j,
                    dist: exact,
                });
            }
            // Sampled d* alongside the exact chart.
            let sample = |b: &Bridge| -> Vec<Point> {
                (0..SAMPLES)
                    .map(|s| bridge_point(b, s as f64 / (SAMPLES - 1) as f64).unwrap())
                    .collect()
            };
            let sa = sample(a);
            let sb = sample(b);
            let sampled_rel = geometry::set_distance(&sa, &sb)
                / a.chord_length().min(b.chord_length());
            let pts_a = vec![a.p.clone(), a.q.clone()];
            let pts_b = vec![b.p.clone(), b.q.clone()];
            let endpoint_rel = crate::metric::relative_distance_points(&pts_a, &pts_b).ok();
            if let Some(er) = endpoint_rel {
                if er > 0.0 && sampled_rel > 0.0 {
                    let r = sampled_rel / er;
                    ratio_lo = ratio_lo.min(r);
                    ratio_hi = ratio_hi.max(r);
                    any_ratio = true;
                }
            }
            pairs.push(BridgePairReport {
                i,
                j,
                min_distance: exact,
                bridge_relative_distance: sampled_rel,
                endpoint_relative_distance: endpoint_rel,
                shared_endpoint,
            });
        }
    }
    Ok(SeparationReport {
        pairs,
        comparability: any_ratio.then_some((ratio_lo, ratio_hi)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_unit_chord() {
        let b = make_bridge(&[0.0, 0.0], &[1.0, 0.0], 3, 2).unwrap();
        assert!((b.apex[0] - 0.5).abs() < 1e-15);
        assert!(b.apex[1].abs() < 1e-15);
        assert!((b.apex[2] - 3.0f64.sqrt() / 2.0).abs() < 1e-15);
        let side1 = geometry::dist(&b.p, &b.apex);
        let side2 = geometry::dist(&b.q, &b.apex);
        assert!((side1 - 1.0).abs() < 1e-12 && (side2 - 1.0).abs() < 1e-12);
        assert!((b.length() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bridge_scaled_chord_dim4() {
        let b = make_bridge(&[0.0, 0.0], &[2.0, 0.0], 4, 2).unwrap();
        assert!((b.apex[0] - 1.0).abs() < 1e-14);
        assert!(b.apex[1].abs() < 1e-14);
        assert!(b.apex[2].abs() < 1e-14);
        assert!((b.apex[3] - 3.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bridge_rejects_degenerate_and_stale_dims() {
        assert!(matches!(
            make_bridge(&[0.0, 0.0], &[0.0, 0.0], 3, 2),
            Err(QsxError::DegenerateBridge)
        ));
        assert!(matches!(
            make_bridge(&[0.0, 0.0], &[1.0, 0.0], 2, 2),
            Err(QsxError::BridgeDimensionNotFresh { .. })
        ));
        assert!(matches!(
            make_bridge(&[0.0, 0.0, 0.5], &[1.0, 0.0, 0.0], 3, 2),
            Err(QsxError::NonzeroBridgeCoordinate(3))
        ));
    }

    #[test]
    fn bridge_point_endpoints_and_apex() {
        let b = make_bridge(&[0.0, 0.0], &[1.0, 0.0], 3, 2).unwrap();
        assert_eq!(bridge_point(&b, 0.0).unwrap(), b.p);
        assert_eq!(bridge_point(&b, 1.0).unwrap(), b.q);
        assert_eq!(bridge_point(&b, 0.5).unwrap(), b.apex);
        assert!(bridge_point(&b, 1.5).is_err());
    }

    #[test]
    fn bridge_chart_bilipschitz_within_4() {
        let b = make_bridge(&[0.3, -0.2], &[1.4, 0.9], 3, 2).unwrap();
        let n = 200;
        let len = b.chord_length();
        let mut worst = 1.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let si = i as f64 / (n - 1) as f64;
                let sj = j as f64 / (n - 1) as f64;
                let chart = (sj - si) * len;
                let space = geometry::dist(
                    &bridge_point(&b, si).unwrap(),
                    &bridge_point(&b, sj).unwrap(),
                );
                worst = worst.max(chart / space).max(space / chart);
            }
        }
        assert!(worst <= 4.0 + 1e-9, "bi-Lipschitz constant {worst}");
    }

    #[test]
    fn crowding_examples() {
        let check = crowding_bound_check(&[(0.0, 1.0), (2.0, 3.0), (4.0, 5.0)], 3.0).unwrap();
        assert_eq!(check.count, 3);
        assert_eq!(check.bound, 9.0);
        assert!(check.ok);
        let single = crowding_bound_check(&[(0.0, 1.0)], 1.0).unwrap();
        assert_eq!(single.count, 1);
        assert_eq!(single.bound, 5.0);
        assert!(single.ok);
        assert!(crowding_bound_check(&[(0.0, 2.0), (1.0, 3.0)], 1.0).is_err());
    }

    #[test]
    fn assignment_far_gaps_share_a_dimension() {
        let g = |lo: f64, hi: f64| GapSpec {
            lo,
            hi,
            image_lo: vec![lo],
            image_hi: vec![hi],
        };
        let modulus = PowerModulus::identity();
        let c0 = calibrate_conflict_threshold(&modulus);
        let far = 2.0 * c0 + 10.0;
        let gaps = vec![g(0.0, 1.0), g(far, far + 1.0)];
        let a = assign_dimensions(&gaps, 1, &modulus, 1.0).unwrap();
        assert_eq!(a.gap_dims[0], 2);
        assert_eq!(a.gap_dims[1], 2);
    }

    #[test]
    fn assignment_conflicting_gaps_differ() {
        let g = |lo: f64, hi: f64| GapSpec {
            lo,
            hi,
            image_lo: vec![lo],
            image_hi: vec![hi],
        };
        let gaps = vec![g(0.0, 1.0), g(1.5, 2.5), g(3.0, 4.0)];
        let modulus = PowerModulus::identity();
        let a = assign_dimensions(&gaps, 1, &modulus, 1.0).unwrap();
        for i in 0..gaps.len() {
            for j in i + 1..gaps.len() {
                let d = relative_distance_interval_pair(
                    (gaps[i].lo, gaps[i].hi),
                    (gaps[j].lo, gaps[j].hi),
                )
                .unwrap();
                if d < a.threshold {
                    assert_ne!(a.gap_dims[i], a.gap_dims[j]);
                }
            }
        }
    }

    #[test]
    fn separation_report_distinct_dims_positive() {
        let b1 = make_bridge(&[0.0], &[1.0], 2, 1).unwrap();
        let b2 = make_bridge(&[2.0], &[3.0], 3, 1).unwrap();
        let rep = bridge_separation_report(&[b1, b2]).unwrap();
        assert!(rep.pairs[0].min_distance > 0.0);
    }

    #[test]
    fn shared_endpoint_contact_allowed() {
        let b1 = make_bridge(&[0.0], &[1.0], 2, 1).unwrap();
        let b2 = make_bridge(&[1.0], &[2.0], 3, 1).unwrap();
        let rep = bridge_separation_report(&[b1, b2]).unwrap();
        assert!(rep.pairs[0].shared_endpoint);
    }
}
