//! Interpolation across gaps: geometric endpoint sequences pulled from each
//! side, their mirror images partitioning the gap, and the piecewise-affine
//! map onto the bridge polyline.

use serde::{Deserialize, Serialize};

use crate::bridges::{bridge_point, Bridge};
use crate::error::{QsxError, Result};
use crate::geometry::{self, Point};
use crate::metric::{IntervalSet, PowerModulus};

/// Fraction of the side length by which an overshooting breakpoint may miss
/// the apex before the data is declared inconsistent with the modulus.
const OVERSHOOT_SLACK: f64 = 0.01;

/// Backoff keeping a clamped breakpoint strictly before the apex.
const APEX_BACKOFF: f64 = 1e-9;

pub fn compute_delta0(modulus: &PowerModulus) -> Result<f64> {
    Ok(modulus.invert(0.5)?.min(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapSide {
    Left,
    Right,
}

/// A geometric sequence of set points marching toward a gap endpoint, with
/// mirror images inside the gap. `sites[0]` is a_0; `mirrored` pairs with it
/// except that the first mirror is pinned to the gap midpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointSequence {
    pub anchor: f64,
    pub side: GapSide,
    pub sites: Vec<f64>,
    pub mirrored: Vec<f64>,
    pub delta0: f64,
    pub c: f64,
}

/// Nearest point of `set` to `target` within [lo, hi]; ties broken toward
/// `anchor`.
fn nearest_in_band(set: &IntervalSet, lo: f64, hi: f64, target: f64, anchor: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &(a, b) in set.intervals() {
        let (ca, cb) = (a.max(lo), b.min(hi));
        if ca > cb {
            continue;
        }
        let x = target.clamp(ca, cb);
        best = Some(match best {
            None => x,
            Some(y) => {
                let (dx, dy) = ((x - target).abs(), (y - target).abs());
                if dx < dy || (dx == dy && (x - anchor).abs() < (y - anchor).abs()) {
                    x
                } else {
                    y
                }
            }
        });
    }
    best
}

pub fn endpoint_sequence(
    set: &IntervalSet,
    gap: (f64, f64),
    side: GapSide,
    delta0: f64,
    c: f64,
    eps: f64,
) -> Result<EndpointSequence> {
    let (a_i, b_i) = gap;
    let len = b_i - a_i;
    if !(len > 0.0 && delta0 > 0.0 && delta0 <= 0.5 && c >= 1.0 && eps > 0.0) {
        return Err(QsxError::ParameterOutOfRange(delta0));
    }
    let anchor = match side {
        GapSide::Left => a_i,
        GapSide::Right => b_i,
    };
    // Signed direction away from the gap.
    let dir = match side {
        GapSide::Left => -1.0,
        GapSide::Right => 1.0,
    };
    let pick = |d_lo: f64, d_hi: f64, target_d: f64| -> Option<f64> {
        let (lo, hi) = if dir < 0.0 {
            (anchor - d_hi, anchor - d_lo)
        } else {
            (anchor + d_lo, anchor + d_hi)
        };
        nearest_in_band(set, lo, hi, anchor + dir * target_d, anchor)
    };
    let a0 = pick(len / (2.0 * c), len / 2.0, len / 2.0)
        .ok_or(QsxError::EmptySequenceBand { a: a_i, b: b_i })?;
    let mut sites = vec![a0];
    loop {
        let d = (sites.last().unwrap() - anchor).abs();
        let next = pick(delta0 / c * d, delta0 * d, delta0 * d)
            .ok_or(QsxError::EmptySequenceBand { a: a_i, b: b_i })?;
        if (next - anchor).abs() <= eps {
            break;
        }
        sites.push(next);
    }
    let mid = 0.5 * (a_i + b_i);
    let mirrored: Vec<f64> = sites
        .iter()
        .enumerate()
        .map(|(k, &x)| if k == 0 { mid } else { 2.0 * anchor - x })
        .collect();
    Ok(EndpointSequence {
        anchor,
        side,
        sites,
        mirrored,
        delta0,
        c,
    })
}

/// Piecewise-affine homeomorphism from a gap onto its bridge polyline,
/// stored as (domain point, constant-speed arclength position) breakpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapMap {
    pub gap: (f64, f64),
    pub bridge: Bridge,
    /// Strictly increasing in both coordinates; first entry (a_I, 0),
    /// midpoint (m_I, ½), last entry (b_I, 1).
    pub breakpoints: Vec<(f64, f64)>,
}

impl GapMap {
    pub fn eval(&self, x: f64) -> Result<Point> {
        let (a_i, b_i) = self.gap;
        if !(a_i..=b_i).contains(&x) {
            return Err(QsxError::ParameterOutOfRange(x));
        }
        let idx = self
            .breakpoints
            .partition_point(|&(d, _)| d <= x)
            .clamp(1, self.breakpoints.len() - 1);
        let (x0, s0) = self.breakpoints[idx - 1];
        let (x1, s1) = self.breakpoints[idx];
        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        bridge_point(&self.bridge, s0 + t * (s1 - s0))
    }
}

/// Arclength position on the bridge for an image-distance target measured
/// from one endpoint along its side. `from_start` selects the p-side.
fn side_arclength(dist: f64, side_len: f64, from_start: bool, x: f64) -> Result<f64> {
    let mut d = dist;
    if d >= side_len {
        let over = d / side_len - 1.0;
        if over >= OVERSHOOT_SLACK {
            return Err(QsxError::ModulusInconsistent {
                a: x,
                b: d,
                detail: format!(
                    "image increment {d:.6e} exceeds bridge side {side_len:.6e} by {:.2}%",
                    over * 100.0
                ),
            });
        }
        log::warn!("breakpoint at {x} overshoots the apex by {:.3}%; clamped", over * 100.0);
        d = side_len * (1.0 - APEX_BACKOFF);
    }
    let frac = d / (2.0 * side_len);
    Ok(if from_start { frac } else { 1.0 - frac })
}

pub fn build_gap_map(
    left: &EndpointSequence,
    right: &EndpointSequence,
    image_at: impl Fn(f64) -> Point,
    bridge: &Bridge,
) -> Result<GapMap> {
    let (a_i, b_i) = (left.anchor, right.anchor);
    let gap = (a_i, b_i);
    let mid = 0.5 * (a_i + b_i);
    let side_len = bridge.chord_length();
    let f_a = image_at(a_i);
    let f_b = image_at(b_i);

    let mut bps: Vec<(f64, f64)> = vec![(a_i, 0.0)];
    // Left-side mirrors enter the gap from a_I; deepest sequence entries sit
    // closest to a_I, so walk the sequence backwards.
    for k in (1..left.sites.len()).rev() {
        let d = geometry::dist(&image_at(left.sites[k]), &f_a);
        bps.push((left.mirrored[k], side_arclength(d, side_len, true, left.mirrored[k])?));
    }
    bps.push((mid, 0.5));
    for k in 1..right.sites.len() {
        let d = geometry::dist(&image_at(right.sites[k]), &f_b);
        bps.push((right.mirrored[k], side_arclength(d, side_len, false, right.mirrored[k])?));
    }
    bps.push((b_i, 1.0));

    for w in bps.windows(2) {
        if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
            return Err(QsxError::ModulusInconsistent {
                a: w[0].0,
                b: w[1].0,
                detail: "breakpoint positions not strictly increasing".into(),
            });
        }
    }
    Ok(GapMap {
        gap,
        bridge: bridge.clone(),
        breakpoints: bps,
    })
}

/// Smallest C with C⁻¹ ≤ ratio ≤ C over all consecutive partition interval
/// pairs, in both the domain and the image (arclength) charts.
pub fn neighbor_ratio_constant(gm: &GapMap) -> f64 {
    let n = gm.breakpoints.len();
    if n < 3 {
        return 1.0;
    }
    let mut c = 1.0f64;
    for w in gm.breakpoints.windows(3) {
        let (d1, d2) = (w[1].0 - w[0].0, w[2].0 - w[1].0);
        let (s1, s2) = (w[1].1 - w[0].1, w[2].1 - w[1].1);
        c = c.max(d1 / d2).max(d2 / d1).max(s1 / s2).max(s2 / s1);
    }
    c
}
