//! Foundational metric quantities: relative distance, relative-connectedness
//! and uniform-perfectness constants, weak-quasisymmetry constants, and
//! power-modulus arithmetic and fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QsxError, Result};
use crate::geometry::{self, Point};

/// Number of grid points for the envelope fit over the exponent range.
const FIT_GRID: usize = 512;
const FIT_ALPHA_MIN: f64 = 0.01;
const FIT_ALPHA_MAX: f64 = 1.0;

/// A finite sorted sample of E in R paired with image points in R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMap {
    sites: Vec<f64>,
    images: Vec<Point>,
    ambient_dim: usize,
}

impl SiteMap {
    pub fn new(sites: Vec<f64>, images: Vec<Point>) -> Result<Self> {
        if sites.len() < 2 {
            return Err(QsxError::InvalidSiteMap("need at least 2 sites".into()));
        }
        if sites.len() != images.len() {
            return Err(QsxError::InvalidSiteMap(format!(
                "{} sites but {} images",
                sites.len(),
                images.len()
            )));
        }
        if sites.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(QsxError::InvalidSiteMap(
                "sites must be strictly increasing".into(),
            ));
        }
        if sites.iter().any(|x| !x.is_finite()) {
            return Err(QsxError::InvalidSiteMap("non-finite site".into()));
        }
        let ambient_dim = images[0].len();
        if ambient_dim == 0 {
            return Err(QsxError::InvalidSiteMap("image dimension zero".into()));
        }
        if images.iter().any(|p| p.len() != ambient_dim) {
            return Err(QsxError::InvalidSiteMap(
                "inconsistent image dimensions".into(),
            ));
        }
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                if geometry::dist(&images[i], &images[j]) == 0.0 {
                    return Err(QsxError::InvalidSiteMap(format!(
                        "images of sites {} and {} coincide",
                        sites[i], sites[j]
                    )));
                }
            }
        }
        Ok(SiteMap {
            sites,
            images,
            ambient_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    pub fn images(&self) -> &[Point] {
        &self.images
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn site(&self, i: usize) -> f64 {
        self.sites[i]
    }

    pub fn image(&self, i: usize) -> &Point {
        &self.images[i]
    }
}

/// The power modulus eta(t) = C * max(t^alpha, t^(1/alpha)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModulus {
    scale: f64,
    exponent: f64,
}

impl PowerModulus {
    pub fn new(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(QsxError::InvalidModulus(format!("scale {scale} must be > 0")));
        }
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(QsxError::InvalidModulus(format!(
                "exponent {exponent} must lie in (0, 1]"
            )));
        }
        Ok(PowerModulus { scale, exponent })
    }

    pub fn identity() -> Self {
        PowerModulus {
            scale: 1.0,
            exponent: 1.0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// eta(t) = C * max(t^alpha, t^(1/alpha)).
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(QsxError::NegativeArgument(t));
        }
        let a = self.exponent;
        Ok(self.scale * t.powf(a).max(t.powf(1.0 / a)))
    }

    /// The unique t with eval(t) = s.
    pub fn invert(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(QsxError::NegativeArgument(s));
        }
        let a = self.exponent;
        let r = s / self.scale;
        Ok(if r <= 1.0 { r.powf(1.0 / a) } else { r.powf(a) })
    }
}

/// Disjoint closed intervals sorted by left endpoint; degenerate points allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(QsxError::InvalidIntervalSet("interval with hi < lo".into()));
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        if intervals.windows(2).any(|w| w[0].1 >= w[1].0) {
            return Err(QsxError::InvalidIntervalSet(
                "intervals must be pairwise disjoint".into(),
            ));
        }
        Ok(IntervalSet { intervals })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.intervals.first().map(|i| i.0).unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.intervals.last().map(|i| i.1).unwrap_or(f64::NAN)
    }

    pub fn diameter(&self) -> f64 {
        if self.intervals.is_empty() {
            0.0
        } else {
            self.max() - self.min()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Bounded components of the complement, in order.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        self.intervals
            .windows(2)
            .map(|w| (w[0].1, w[1].0))
            .collect()
    }

    /// Minimal distance to another interval set; 0 if they touch or overlap.
    pub fn distance_to(&self, other: &IntervalSet) -> f64 {
        let mut d = f64::INFINITY;
        for &(lo1, hi1) in &self.intervals {
            for &(lo2, hi2) in &other.intervals {
                let gap = if hi1 < lo2 {
                    lo2 - hi1
                } else if hi2 < lo1 {
                    lo1 - hi2
                } else {
                    0.0
                };
                d = d.min(gap);
            }
        }
        d
    }
}

/// Weak-quasisymmetry constant with the triple realizing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsConstants {
    pub weak_constant: f64,
    pub worst_triple: (f64, f64, f64),
    pub fitted_modulus: Option<PowerModulus>,
}

/// d*(A, B) = dist(A, B) / min(diam A, diam B) for finite point sets.
pub fn relative_distance_points(a: &[Point], b: &[Point]) -> Result<f64> {
    let da = geometry::diameter(a);
    let db = geometry::diameter(b);
    if a.len() < 2 || b.len() < 2 || da == 0.0 || db == 0.0 {
        return Err(QsxError::DiameterZero);
    }
    Ok(geometry::set_distance(a, b) / da.min(db))
}

/// d*(A, B) for interval sets; overlap yields 0, not an error.
pub fn relative_distance_intervals(a: &IntervalSet, b: &IntervalSet) -> Result<f64> {
    let da = a.diameter();
    let db = b.diameter();
    if a.is_empty() || b.is_empty() || da == 0.0 || db == 0.0 {
        return Err(QsxError::DiameterZero);
    }
    Ok(a.distance_to(b) / da.min(db))
}

/// Convenience for two bare intervals.
pub fn relative_distance_interval_pair(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    let da = a.1 - a.0;
    let db = b.1 - b.0;
    if da == 0.0 || db == 0.0 {
        return Err(QsxError::DiameterZero);
    }
    let d = if a.1 < b.0 {
        b.0 - a.1
    } else if b.1 < a.0 {
        a.0 - b.1
    } else {
        0.0
    };
    Ok(d / da.min(db))
}

/// Minimal M for which E is M-relatively connected.
///
/// For a finite E this is the largest ratio of consecutive distinct distances
/// from any point of E to the rest; 1 when no point sees two distinct
/// distances below its maximum.
pub fn relative_connectedness_constant(points: &[f64]) -> Result<f64> {
    let mut e: Vec<f64> = points.to_vec();
    e.sort_by(f64::total_cmp);
    e.dedup();
    if e.len() < 2 {
        return Err(QsxError::SingletonSet);
    }
    let mut m = 1.0f64;
    for &x in &e {
        let mut dists: Vec<f64> = e
            .iter()
            .filter(|&&y| y != x)
            .map(|&y| (y - x).abs())
            .collect();
        dists.sort_by(f64::total_cmp);
        dists.dedup();
        for w in dists.windows(2) {
            m = m.max(w[1] / w[0]);
        }
    }
    Ok(m)
}

/// Same annulus-based constant for finite sets in R^n.
pub fn relative_connectedness_constant_nd(points: &[Point]) -> Result<f64> {
    if points.len() < 2 {
        return Err(QsxError::SingletonSet);
    }
    let mut m = 1.0f64;
    for x in points {
        let mut dists: Vec<f64> = points
            .iter()
            .map(|y| geometry::dist(x, y))
            .filter(|&d| d > 0.0)
            .collect();
        dists.sort_by(f64::total_cmp);
        dists.dedup();
        for w in dists.windows(2) {
            m = m.max(w[1] / w[0]);
        }
    }
    Ok(m)
}

/// Min over distinct gap pairs of their relative distance; +inf when fewer
/// than two positive-length gaps exist (vacuous minimization, not an error).
pub fn uniform_perfectness_gap_constant(e: &IntervalSet) -> f64 {
    let gaps: Vec<(f64, f64)> = e
        .gaps()
        .into_iter()
        .filter(|&(a, b)| b > a)
        .collect();
    if gaps.len() < 2 {
        return f64::INFINITY;
    }
    let mut c = f64::INFINITY;
    for i in 0..gaps.len() {
        for j in i + 1..gaps.len() {
            if let Ok(d) = relative_distance_interval_pair(gaps[i], gaps[j]) {
                c = c.min(d);
            }
        }
    }
    c
}

/// Weak-quasisymmetry constant over a generic sampled map.
///
/// H = max over ordered triples (x, y, z) of distinct sites with
/// |x - y| <= |x - z| of |f(x) - f(y)| / |f(x) - f(z)|. Exhaustive O(m^3)
/// scan, parallel over x with a deterministic lexicographic tie-break.
pub fn weak_qs_constant_raw(sites: &[f64], images: &[Point]) -> Result<QsConstants> {
    let m = sites.len();
    if m < 3 {
        return Err(QsxError::NoAdmissibleTriples);
    }
    #[derive(Clone, Copy)]
    struct Best {
        h: f64,
        triple: (f64, f64, f64),
    }
    fn better(a: Best, b: Best) -> Best {
        if a.h > b.h {
            a
        } else if b.h > a.h {
            b
        } else if a.triple <= b.triple {
            a
        } else {
            b
        }
    }
    let init = Best {
        h: 0.0,
        triple: (f64::INFINITY, f64::INFINITY, f64::INFINITY),
    };
    let best = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut local = init;
            for j in 0..m {
                if j == i {
                    continue;
                }
                let dxy = (sites[i] - sites[j]).abs();
                let fxy = geometry::dist(&images[i], &images[j]);
                for k in 0..m {
                    if k == i || k == j {
                        continue;
                    }
                    let dxz = (sites[i] - sites[k]).abs();
                    if dxy > dxz {
                        continue;
                    }
                    let fxz = geometry::dist(&images[i], &images[k]);
                    let h = fxy / fxz;
                    local = better(
                        local,
                        Best {
                            h,
                            triple: (sites[i], sites[j], sites[k]),
                        },
                    );
                }
            }
            local
        })
        .reduce(|| init, better);
    Ok(QsConstants {
        weak_constant: best.h,
        worst_triple: best.triple,
        fitted_modulus: None,
    })
}

pub fn weak_qs_constant(map: &SiteMap) -> Result<QsConstants> {
    weak_qs_constant_raw(map.sites(), map.images())
}

/// Distance-ratio samples (t, rho) over all ordered triples of a site map.
pub fn ratio_samples(map: &SiteMap) -> Vec<(f64, f64)> {
    let m = map.len();
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if j == i {
                continue;
            }
            for k in 0..m {
                if k == i || k == j {
                    continue;
                }
                let t = (map.site(i) - map.site(j)).abs() / (map.site(i) - map.site(k)).abs();
                let rho = geometry::dist(map.image(i), map.image(j))
                    / geometry::dist(map.image(i), map.image(k));
                out.push((t, rho));
            }
        }
    }
    out
}

/// Tightest power-modulus envelope over ratio samples.
///
/// For each alpha on a logarithmic grid the envelope scale is forced:
/// C(alpha) = max over samples of rho / max(t^alpha, t^(1/alpha)), the
/// smallest scale whose modulus dominates every sample. Among these touching
/// envelopes the winner minimizes the mean log-looseness
/// mean(log(eta(t)/rho)), ties broken toward larger alpha. Minimizing C
/// alone degenerates: as alpha shrinks the t > 1 samples disappear under
/// t^(1/alpha) and the flattest modulus posts the smallest scale while
/// fitting the data worst.
pub fn fit_power_modulus(samples: &[(f64, f64)]) -> Result<PowerModulus> {
    if samples.is_empty() || samples.iter().any(|&(t, r)| !(t > 0.0) || !(r > 0.0)) {
        return Err(QsxError::DegenerateFitSamples);
    }
    let log_lo = FIT_ALPHA_MIN.ln();
    let log_hi = FIT_ALPHA_MAX.ln();
    let alpha_at = |g: usize| (log_lo + (log_hi - log_lo) * g as f64 / (FIT_GRID - 1) as f64).exp();
    let mut best = (f64::INFINITY, f64::INFINITY, FIT_ALPHA_MAX);
    for g in 0..FIT_GRID {
        let a = alpha_at(g);
        let mut c = 0.0f64;
        let mut log_sum = 0.0f64;
        for &(t, rho) in samples {
            let denom = t.powf(a).max(t.powf(1.0 / a));
            c = c.max(rho / denom);
            log_sum += (denom / rho).ln();
        }
        let loss = c.ln() + log_sum / samples.len() as f64;
        if loss <= best.0 {
            best = (loss, c, a);
        }
    }
    PowerModulus::new(best.1, best.2.min(1.0))
}

/// Smallest C' with C'^-1 |x-y|^(1/alpha) <= |f(x)-f(y)| <= C' |x-y|^alpha
/// over all site pairs, after rescaling domain and image diameters to 1.
pub fn holder_envelope(map: &SiteMap, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(QsxError::InvalidModulus(format!(
            "alpha {alpha} outside (0, 1]"
        )));
    }
    let dom_diam = map.site(map.len() - 1) - map.site(0);
    let img_diam = geometry::diameter(map.images());
    let mut c = 1.0f64;
    for i in 0..map.len() {
        for j in i + 1..map.len() {
            let dx = (map.site(i) - map.site(j)).abs() / dom_diam;
            let df = geometry::dist(map.image(i), map.image(j)) / img_diam;
            c = c.max(df / dx.powf(alpha));
            c = c.max(dx.powf(1.0 / alpha) / df);
        }
    }
    Ok(c)
}
