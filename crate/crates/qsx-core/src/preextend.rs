//! Preliminary extensions: normalization, periodization of a bounded sample,
//! unbounding by reflection, and fattening of isolated points into intervals
//! carrying affine maps.

use serde::{Deserialize, Serialize};

use crate::error::{QsxError, Result};
use crate::geometry::{self, Point};
use crate::metric::{IntervalSet, PowerModulus, SiteMap};

const NORM_TOL: f64 = 1e-9;

/// Fattened interval radius is one tenth of the nearest-neighbor distance.
const FATTEN_RADIUS_DIV: f64 = 10.0;

/// Similarities applied by `normalize`, kept for inversion.
///
/// normalized site  = (x - domain_shift) * domain_scale
/// normalized image = (f(x) - image_shift) * image_scale
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub domain_scale: f64,
    pub domain_shift: f64,
    pub image_scale: f64,
    pub image_shift: Point,
}

impl SimilarityRecord {
    pub fn identity(dim: usize) -> Self {
        SimilarityRecord {
            domain_scale: 1.0,
            domain_shift: 0.0,
            image_scale: 1.0,
            image_shift: vec![0.0; dim],
        }
    }

    pub fn to_normalized_domain(&self, x: f64) -> f64 {
        (x - self.domain_shift) * self.domain_scale
    }

    pub fn from_normalized_domain(&self, x: f64) -> f64 {
        x / self.domain_scale + self.domain_shift
    }

    /// Invert the image similarity; coordinates beyond the original ambient
    /// dimension are scaled back without translation.
    pub fn from_normalized_image(&self, y: &[f64]) -> Point {
        y.iter()
            .enumerate()
            .map(|(i, &v)| {
                let shift = self.image_shift.get(i).copied().unwrap_or(0.0);
                v / self.image_scale + shift
            })
            .collect()
    }
}

/// Rescale so that min E = 0, max E = 1, diam f(E) = 1 and f(0) sits at the
/// origin (hence max |f| <= 1).
pub fn normalize(map: &SiteMap) -> Result<(SiteMap, SimilarityRecord)> {
    let lo = map.site(0);
    let hi = map.site(map.len() - 1);
    let img_diam = geometry::diameter(map.images());
    let record = SimilarityRecord {
        domain_scale: 1.0 / (hi - lo),
        domain_shift: lo,
        image_scale: 1.0 / img_diam,
        image_shift: map.image(0).clone(),
    };
    let sites: Vec<f64> = map
        .sites()
        .iter()
        .map(|&x| record.to_normalized_domain(x))
        .collect();
    let images: Vec<Point> = map
        .images()
        .iter()
        .map(|p| geometry::scale(&geometry::sub(p, &record.image_shift), record.image_scale))
        .collect();
    Ok((SiteMap::new(sites, images)?, record))
}

pub fn is_normalized(map: &SiteMap) -> bool {
    map.site(0).abs() <= NORM_TOL
        && (map.site(map.len() - 1) - 1.0).abs() <= NORM_TOL
        && geometry::norm(map.image(0)) <= NORM_TOL
        && (geometry::diameter(map.images()) - 1.0).abs() <= NORM_TOL
}

/// Translated copies of a normalized map: site 2k + x maps to 2k e1 + f(x).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodizedMap {
    base: SiteMap,
    window: usize,
    materialized: SiteMap,
}

impl PeriodizedMap {
    pub fn base(&self) -> &SiteMap {
        &self.base
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn as_site_map(&self) -> &SiteMap {
        &self.materialized
    }

    /// Sites of the interior periods |k| <= K - 1, free of edge effects.
    pub fn interior_site_map(&self) -> Result<SiteMap> {
        let k = self.window as f64;
        let lo = -2.0 * (k - 1.0) - 0.5;
        let hi = 2.0 * (k - 1.0) + 1.5;
        let mut sites = Vec::new();
        let mut images = Vec::new();
        for (i, &x) in self.materialized.sites().iter().enumerate() {
            if x > lo && x < hi {
                sites.push(x);
                images.push(self.materialized.image(i).clone());
            }
        }
        SiteMap::new(sites, images)
    }
}

pub fn periodize(map: &SiteMap, window: usize) -> Result<PeriodizedMap> {
    if window == 0 {
        return Err(QsxError::InvalidSiteMap("window must be >= 1".into()));
    }
    if !is_normalized(map) {
        return Err(QsxError::NotNormalized);
    }
    let k = window as i64;
    let mut sites = Vec::with_capacity((2 * window + 1) * map.len());
    let mut images = Vec::with_capacity((2 * window + 1) * map.len());
    for period in -k..=k {
        let off = 2.0 * period as f64;
        for i in 0..map.len() {
            sites.push(off + map.site(i));
            let mut img = map.image(i).clone();
            img[0] += off;
            images.push(img);
        }
    }
    Ok(PeriodizedMap {
        base: map.clone(),
        window,
        materialized: SiteMap::new(sites, images)?,
    })
}

/// C0 = max(2, 1 / eta^-1(1/2)), the ladder ratio floor of the reflection.
pub fn reflection_ratio_floor(modulus: &PowerModulus) -> f64 {
    2.0f64.max(1.0 / modulus.invert(0.5).expect("1/2 >= 0"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReflectSide {
    Lower,
    Upper,
}

/// A half-bounded map made unbounded by reflecting a geometric ladder of
/// sites into a fresh coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectedMap {
    base: SiteMap,
    side: ReflectSide,
    ladder: Vec<f64>,
    ratio_floor: f64,
    lifted_dim: usize,
    materialized: SiteMap,
    truncated: bool,
}

impl ReflectedMap {
    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    pub fn ratio_floor(&self) -> f64 {
        self.ratio_floor
    }

    pub fn lifted_dim(&self) -> usize {
        self.lifted_dim
    }

    pub fn as_site_map(&self) -> &SiteMap {
        &self.materialized
    }

    /// True when the greedy ladder ran out of admissible sites before the
    /// edge of the sample.
    pub fn truncated(&self) -> bool {
        self.truncated
    }
}

/// Unbound a map with a minimum (or maximum) across that bound.
///
/// The ladder is chosen greedily: a1 = 1, then the smallest site >= C0 * ak,
/// accepted while <= M * C0 * ak. Reflected sites -ak receive images
/// (0, ..., 0, -|f(ak)|) in dimension n + 1.
pub fn reflect_unbounded(
    map: &SiteMap,
    side: ReflectSide,
    modulus: &PowerModulus,
    m_rel: f64,
) -> Result<ReflectedMap> {
    // Case 2 is Case 1 under x -> -x.
    let (sites, images): (Vec<f64>, Vec<Point>) = match side {
        ReflectSide::Lower => (map.sites().to_vec(), map.images().to_vec()),
        ReflectSide::Upper => (
            map.sites().iter().map(|&x| -x).rev().collect(),
            map.images().iter().rev().cloned().collect(),
        ),
    };
    let tol = NORM_TOL * (1.0 + sites.last().unwrap().abs());
    if sites[0].abs() > tol {
        return Err(QsxError::InvalidSiteMap(
            "reflect_unbounded requires min = 0 on the reflected side".into(),
        ));
    }
    if !sites.iter().any(|&x| (x - 1.0).abs() <= tol) {
        return Err(QsxError::MissingUnitSite);
    }

    let c0 = reflection_ratio_floor(modulus);
    let mut ladder = vec![1.0f64];
    let truncated;
    loop {
        let cur = *ladder.last().unwrap();
        let next = sites
            .iter()
            .copied()
            .find(|&x| x >= c0 * cur * (1.0 - 1e-12));
        match next {
            Some(x) if x <= m_rel * c0 * cur * (1.0 + 1e-12) => ladder.push(x),
            Some(_) | None => {
                // No admissible rung before the sample's edge.
                truncated = sites.last().copied().unwrap() > c0 * cur;
                break;
            }
        }
    }
    if truncated {
        log::warn!("reflection ladder truncated: no admissible rung in [C0*a, M*C0*a]");
    }

    let n = map.ambient_dim();
    let mut out_sites: Vec<f64> = Vec::new();
    let mut out_images: Vec<Point> = Vec::new();
    for a in ladder.iter().rev() {
        let idx = sites
            .iter()
            .position(|&x| (x - a).abs() <= tol)
            .expect("ladder entries are sites");
        out_sites.push(-a);
        let mut img = vec![0.0; n + 1];
        img[n] = -geometry::norm(&images[idx]);
        out_images.push(img);
    }
    for (i, &x) in sites.iter().enumerate() {
        out_sites.push(x);
        out_images.push(geometry::pad(&images[i], n + 1));
    }
    let materialized = SiteMap::new(out_sites, out_images)?;
    Ok(ReflectedMap {
        base: map.clone(),
        side,
        ladder,
        ratio_floor: c0,
        lifted_dim: n + 1,
        materialized,
        truncated,
    })
}

/// One fattened site: a closed interval around the center carrying an affine
/// map through f(center) with slope along e1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FatPiece {
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub center_image: Point,
}

impl FatPiece {
    pub fn radius(&self) -> f64 {
        self.center - self.lo
    }

    pub fn eval(&self, x: f64) -> Point {
        let mut img = self.center_image.clone();
        img[0] += self.slope * (x - self.center);
        img
    }
}

/// Disjoint fattened intervals replacing the isolated points of a sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FattenedSet {
    pieces: Vec<FatPiece>,
    modulus: PowerModulus,
    ambient_dim: usize,
}

impl FattenedSet {
    pub fn pieces(&self) -> &[FatPiece] {
        &self.pieces
    }

    pub fn modulus(&self) -> &PowerModulus {
        &self.modulus
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn interval_set(&self) -> IntervalSet {
        IntervalSet::new(self.pieces.iter().map(|p| (p.lo, p.hi)).collect())
            .expect("pieces are disjoint by construction")
    }

    /// Index of the piece containing x, if any.
    pub fn piece_at(&self, x: f64) -> Option<usize> {
        let i = self.pieces.partition_point(|p| p.hi < x);
        (i < self.pieces.len() && self.pieces[i].lo <= x).then_some(i)
    }

    /// Evaluate the hat extension at a point of the fattened set.
    pub fn eval(&self, x: f64) -> Option<Point> {
        self.piece_at(x).map(|i| self.pieces[i].eval(x))
    }
}

/// Replace every site by a closed interval of radius |x - pi(x)| / 10 with
/// the affine map of slope (1/eta(1)) |f(x) - f(pi(x))| / |x - pi(x)|.
pub fn fatten_isolated(map: &SiteMap, modulus: &PowerModulus) -> Result<FattenedSet> {
    let m = map.len();
    if m < 2 {
        return Err(QsxError::InvalidSiteMap("need >= 2 sites to fatten".into()));
    }
    let eta1 = modulus.scale();
    let mut pieces = Vec::with_capacity(m);
    for i in 0..m {
        // Nearest other site; sites are sorted.
        let j = if i == 0 {
            1
        } else if i == m - 1 {
            m - 2
        } else if map.site(i) - map.site(i - 1) <= map.site(i + 1) - map.site(i) {
            i - 1
        } else {
            i + 1
        };
        let gap = (map.site(i) - map.site(j)).abs();
        // Mutually nearest neighbors realize the domain ratio bound exactly;
        // shave the radius so rounding across wide scale ranges cannot dip
        // below it.
        let r = gap / FATTEN_RADIUS_DIV * (1.0 - 1e-7);
        let slope = geometry::dist(map.image(i), map.image(j)) / gap / eta1;
        pieces.push(FatPiece {
            center: map.site(i),
            lo: map.site(i) - r,
            hi: map.site(i) + r,
            slope,
            center_image: map.image(i).clone(),
        });
    }
    Ok(FattenedSet {
        pieces,
        modulus: *modulus,
        ambient_dim: map.ambient_dim(),
    })
}

/// Domain and image relative distances of one piece against the rest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceRatio {
    pub piece: usize,
    pub domain_ratio: f64,
    pub image_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FatteningReport {
    pub ratios: Vec<PieceRatio>,
    pub domain_bounds: (f64, f64),
    pub image_bounds: (f64, f64),
}

/// Check the fattening separation bounds: each piece must satisfy
/// d*(E_x, rest) in [4, 5] and the image analogue in [3, 5 eta(1)].
///
/// Ratios are taken against the piece's own diameter, matching the unbounded
/// setting the bounds are stated in.
pub fn verify_fattening_ratios(fat: &FattenedSet) -> Result<FatteningReport> {
    const TOL: f64 = 1e-9;
    let pieces = fat.pieces();
    if pieces.len() < 2 {
        return Err(QsxError::InvalidIntervalSet(
            "fattening report needs >= 2 pieces".into(),
        ));
    }
    let eta1 = fat.modulus().scale();
    let (dom_lo, dom_hi) = (4.0, 5.0);
    let (img_lo, img_hi) = (3.0, 5.0 * eta1);
    let mut ratios = Vec::with_capacity(pieces.len());
    for (i, p) in pieces.iter().enumerate() {
        let mut dom_dist = f64::INFINITY;
        let mut img_dist = f64::INFINITY;
        // Image sets sampled at piece endpoints and centers; exact because
        // the piece maps are affine.
        let p_img = [p.eval(p.lo), p.eval(p.center), p.eval(p.hi)];
        for (j, q) in pieces.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = if q.lo > p.hi {
                q.lo - p.hi
            } else {
                p.lo - q.hi
            };
            dom_dist = dom_dist.min(d);
            let q_img = [q.eval(q.lo), q.eval(q.center), q.eval(q.hi)];
            img_dist = img_dist.min(geometry::set_distance(&p_img, &q_img));
        }
        let domain_ratio = dom_dist / (p.hi - p.lo);
        let image_ratio = img_dist / geometry::diameter(&p_img.to_vec());
        if domain_ratio < dom_lo - TOL || domain_ratio > dom_hi + TOL {
            return Err(QsxError::FatteningRatioViolation {
                piece: i,
                kind: "domain",
                ratio: domain_ratio,
                lo: dom_lo,
                hi: dom_hi,
            });
        }
        if image_ratio < img_lo - TOL || image_ratio > img_hi + TOL {
            return Err(QsxError::FatteningRatioViolation {
                piece: i,
                kind: "image",
                ratio: image_ratio,
                lo: img_lo,
                hi: img_hi,
            });
        }
        ratios.push(PieceRatio {
            piece: i,
            domain_ratio,
            image_ratio,
        });
    }
    Ok(FatteningReport {
        ratios,
        domain_bounds: (dom_lo, dom_hi),
        image_bounds: (img_lo, img_hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric;

    fn sm(sites: &[f64], f: impl Fn(f64) -> Vec<f64>) -> SiteMap {
        SiteMap::new(sites.to_vec(), sites.iter().map(|&x| f(x)).collect()).unwrap()
    }

    #[test]
    fn normalize_two_sites() {
        let m = sm(&[3.0, 5.0], |x| vec![2.0 * (x - 3.0)]);
        let (n, rec) = normalize(&m).unwrap();
        assert_eq!(n.sites(), &[0.0, 1.0]);
        assert_eq!(n.images(), &[vec![0.0], vec![1.0]]);
        assert_eq!(rec.from_normalized_domain(1.0), 5.0);
    }

    #[test]
    fn normalize_idempotent() {
        let m = sm(&[0.0, 0.5, 1.0], |x| vec![x]);
        let (n, rec) = normalize(&m).unwrap();
        assert_eq!(n, m);
        assert_eq!(rec, SimilarityRecord::identity(1));
    }

    #[test]
    fn normalize_planar() {
        let m = SiteMap::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.0]],
        )
        .unwrap();
        let (n, _) = normalize(&m).unwrap();
        assert_eq!(n.sites(), &[0.0, 0.5, 1.0]);
        assert!((geometry::diameter(n.images()) - 1.0).abs() < 1e-12);
        assert_eq!(n.image(0), &vec![0.0, 0.0]);
    }

    #[test]
    fn periodize_identity_tiles() {
        let m = sm(&[0.0, 1.0], |x| vec![x]);
        let p = periodize(&m, 1).unwrap();
        assert_eq!(p.as_site_map().sites(), &[-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        let flat: Vec<f64> = p.as_site_map().images().iter().map(|v| v[0]).collect();
        assert_eq!(flat, &[-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        let h = metric::weak_qs_constant(p.as_site_map()).unwrap();
        assert!((h.weak_constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodize_planar_offsets_first_coordinate() {
        let m = SiteMap::new(vec![0.0, 1.0], vec![vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = periodize(&m, 1).unwrap();
        let idx = p
            .as_site_map()
            .sites()
            .iter()
            .position(|&x| x == 2.0)
            .unwrap();
        assert_eq!(p.as_site_map().image(idx), &vec![2.0, 0.0]);
    }

    #[test]
    fn periodize_rejects_unnormalized() {
        let m = sm(&[0.0, 2.0], |x| vec![x]);
        assert!(matches!(periodize(&m, 1), Err(QsxError::NotNormalized)));
    }

    #[test]
    fn ratio_floor_examples() {
        assert_eq!(reflection_ratio_floor(&PowerModulus::identity()), 2.0);
        let m = PowerModulus::new(2.0, 0.5).unwrap();
        assert!((reflection_ratio_floor(&m) - 16.0).abs() < 1e-9);
    }

    #[test]
    fn reflect_greedy_ladder() {
        let m = sm(&[0.0, 1.0, 2.0, 4.0, 8.0, 16.0], |x| vec![x]);
        let big_m = metric::relative_connectedness_constant(m.sites()).unwrap();
        let r =
            reflect_unbounded(&m, ReflectSide::Lower, &PowerModulus::identity(), big_m).unwrap();
        assert_eq!(r.ladder(), &[1.0, 2.0, 4.0, 8.0, 16.0]);
        let sm = r.as_site_map();
        let idx = sm.sites().iter().position(|&x| x == -4.0).unwrap();
        assert_eq!(sm.image(idx), &vec![0.0, -4.0]);
        // Ratio bounds hold by construction.
        for w in r.ladder().windows(2) {
            let ratio = w[1] / w[0];
            assert!(ratio >= r.ratio_floor() - 1e-12);
            assert!(ratio <= big_m * r.ratio_floor() + 1e-12);
        }
    }

    #[test]
    fn reflect_requires_unit_site() {
        let m = sm(&[0.0, 0.5, 3.0], |x| vec![x]);
        let e = reflect_unbounded(&m, ReflectSide::Lower, &PowerModulus::identity(), 10.0);
        assert!(matches!(e, Err(QsxError::MissingUnitSite)));
    }

    #[test]
    fn fatten_basic() {
        let m = sm(&[0.0, 1.0, 3.0], |x| vec![x]);
        let fat = fatten_isolated(&m, &PowerModulus::identity()).unwrap();
        let p1 = &fat.pieces()[1];
        // Radius d/10 minus the rounding shave.
        assert!((p1.lo - 0.9).abs() < 1e-6 && (p1.hi - 1.1).abs() < 1e-6);
        assert!((p1.slope - 1.0).abs() < 1e-12);
        // d*(E_1, rest) = 4 up to the shave: dist 0.8, diam 0.2.
        let report = verify_fattening_ratios(&fat).unwrap();
        assert!((report.ratios[1].domain_ratio - 4.0).abs() < 1e-5);
        assert!(report.ratios[1].domain_ratio >= 4.0);
        for r in &report.ratios {
            assert!(r.domain_ratio >= 4.0 - 1e-9 && r.domain_ratio <= 5.0 + 1e-9);
            assert!(r.image_ratio >= 3.0 - 1e-9 && r.image_ratio <= 5.0 + 1e-9);
        }
    }

    #[test]
    fn fatten_two_points_exact() {
        let m = sm(&[0.0, 1.0], |x| vec![x]);
        let fat = fatten_isolated(&m, &PowerModulus::identity()).unwrap();
        let report = verify_fattening_ratios(&fat).unwrap();
        for r in &report.ratios {
            assert!(r.domain_ratio >= 4.0 && (r.domain_ratio - 4.0).abs() < 1e-5);
        }
    }

    #[test]
    fn fatten_preserves_site_values() {
        let m = sm(&[0.0, 1.0, 3.0], |x| vec![x * x]);
        let fat = fatten_isolated(&m, &PowerModulus::identity()).unwrap();
        for (i, p) in fat.pieces().iter().enumerate() {
            assert_eq!(p.eval(p.center), *m.image(i));
        }
    }
}
