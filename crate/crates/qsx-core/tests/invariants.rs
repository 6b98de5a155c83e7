use proptest::prelude::*;
use qsx_core::assemble::{extend, ExtensionConfig};
use qsx_core::bridges::{bridge_point, crowding_bound_check, make_bridge};
use qsx_core::metric::{
    fit_power_modulus, ratio_samples, relative_distance_interval_pair, weak_qs_constant_raw,
    SiteMap,
};
use qsx_core::preextend::{fatten_isolated, normalize, verify_fattening_ratios};
use qsx_core::Point;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn sites_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, 2..max_len).prop_map(|incs| {
        let mut x = 0.0;
        let mut out = vec![0.0];
        for e in incs {
            x += 10f64.powf(e);
            out.push(x);
        }
        out
    })
}

fn power_images(sites: &[f64], alpha: f64) -> Vec<Point> {
    let hi = *sites.last().unwrap();
    sites.iter().map(|&x| vec![(x / hi).powf(alpha)]).collect()
}

proptest! {
    #[test]
    fn relative_distance_symmetric_and_scale_invariant(
        a0 in -10.0f64..10.0, al in 1e-3f64..10.0,
        gap in 1e-3f64..10.0, bl in 1e-3f64..10.0,
        lambda in 1e-2f64..1e2,
    ) {
        let a = (a0, a0 + al);
        let b = (a.1 + gap, a.1 + gap + bl);
        let d = relative_distance_interval_pair(a, b).unwrap();
        let d_sym = relative_distance_interval_pair(b, a).unwrap();
        prop_assert!((d - d_sym).abs() <= 1e-12 * d.max(1.0));
        let scale = |(x, y): (f64, f64)| (lambda * x, lambda * y);
        let d_sc = relative_distance_interval_pair(scale(a), scale(b)).unwrap();
        prop_assert!((d - d_sc).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn fitted_modulus_dominates_every_sample(
        samples in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 2..40),
    ) {
        let samples: Vec<(f64, f64)> = samples
            .into_iter()
            .map(|(t, r)| (10f64.powf(t), 10f64.powf(r)))
            .collect();
        let fit = fit_power_modulus(&samples).unwrap();
        prop_assert!(fit.scale() > 0.0);
        prop_assert!(fit.exponent() > 0.0 && fit.exponent() <= 1.0);
        for &(t, rho) in &samples {
            prop_assert!(rho <= fit.eval(t).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn weak_constant_invariant_under_reversal(
        sites in sites_strategy(10),
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let images: Vec<Point> = sites
            .iter()
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        prop_assume!(sites.len() >= 3);
        let h = weak_qs_constant_raw(&sites, &images).unwrap().weak_constant;
        let rev_sites: Vec<f64> = sites.iter().rev().map(|&x| -x).collect();
        let rev_images: Vec<Point> = images.iter().rev().cloned().collect();
        let h_rev = weak_qs_constant_raw(&rev_sites, &rev_images).unwrap().weak_constant;
        prop_assert!((h - h_rev).abs() <= 1e-12 * h);
    }

    #[test]
    fn fattening_ratio_bounds_hold(
        sites in sites_strategy(16),
        alpha in 0.5f64..1.0,
    ) {
        prop_assume!(sites.len() >= 3);
        let map = SiteMap::new(sites.clone(), power_images(&sites, alpha)).unwrap();
        let (norm, _) = normalize(&map).unwrap();
        let modulus = fit_power_modulus(&ratio_samples(&norm)).unwrap();
        let fat = fatten_isolated(&norm, &modulus).unwrap();
        let report = verify_fattening_ratios(&fat).unwrap();
        prop_assert!(report.domain_bounds.0 >= 4.0);
        prop_assert!(report.domain_bounds.1 <= 5.0);
    }

    #[test]
    fn crowding_stays_within_bound(
        widths in proptest::collection::vec((-2.0f64..1.0, -3.0f64..1.0), 1..20),
        d_exp in -1.0f64..1.0,
    ) {
        let mut x = 0.0;
        let mut intervals = Vec::new();
        for (wl, wg) in widths {
            let len = 10f64.powf(wl);
            intervals.push((x, x + len));
            x += len + 10f64.powf(wg);
        }
        let check = crowding_bound_check(&intervals, 10f64.powf(d_exp)).unwrap();
        prop_assert!(check.ok, "count {} > bound {}", check.count, check.bound);
    }

    #[test]
    fn bridge_is_equilateral_with_bilipschitz_chart(
        px in -100.0f64..100.0, py in -100.0f64..100.0,
        qx in -100.0f64..100.0, qy in -100.0f64..100.0,
        s1 in 0.0f64..1.0, s2 in 0.0f64..1.0,
    ) {
        let p = vec![px, py];
        let q = vec![qx, qy];
        prop_assume!(dist(&p, &q) > 1e-3);
        let b = make_bridge(&p, &q, 3, 2).unwrap();
        let chord = b.chord_length();
        prop_assert!((dist(&b.p, &b.apex) - chord).abs() <= 1e-9 * chord);
        prop_assert!((dist(&b.q, &b.apex) - chord).abs() <= 1e-9 * chord);
        prop_assert!(dist(&bridge_point(&b, 0.0).unwrap(), &b.p) <= 1e-9 * chord);
        prop_assert!(dist(&bridge_point(&b, 1.0).unwrap(), &b.q) <= 1e-9 * chord);
        prop_assert!(dist(&bridge_point(&b, 0.5).unwrap(), &b.apex) <= 1e-9 * chord);
        // Constant-speed chart is 4-bi-Lipschitz against |s1 - s2| * length.
        let d = dist(
            &bridge_point(&b, s1).unwrap(),
            &bridge_point(&b, s2).unwrap(),
        );
        let arc = (s1 - s2).abs() * b.length();
        prop_assert!(d <= arc * (1.0 + 1e-9));
        prop_assert!(d >= arc / 4.0 - 1e-9 * chord);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn extension_restricts_to_data(
        sites in sites_strategy(8),
        alpha in 0.6f64..0.9,
    ) {
        prop_assume!(sites.len() >= 3);
        let map = SiteMap::new(sites.clone(), power_images(&sites, alpha)).unwrap();
        let modulus = fit_power_modulus(&ratio_samples(&map)).unwrap();
        let ext = extend(&map, &modulus, &ExtensionConfig::default()).unwrap();
        for (i, &x) in sites.iter().enumerate() {
            let fx = ext.evaluate(x).unwrap();
            let want = map.image(i);
            let err = fx
                .iter()
                .zip(want.iter().chain(std::iter::repeat(&0.0)))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            prop_assert!(err <= 1e-9, "site {x}: deviation {err}");
        }
    }

    #[test]
    fn extension_roundtrips_through_json(
        sites in sites_strategy(6),
        alpha in 0.6f64..0.9,
        probe in 0.0f64..1.0,
    ) {
        prop_assume!(sites.len() >= 3);
        let map = SiteMap::new(sites.clone(), power_images(&sites, alpha)).unwrap();
        let modulus = fit_power_modulus(&ratio_samples(&map)).unwrap();
        let ext = extend(&map, &modulus, &ExtensionConfig::default()).unwrap();
        let json = serde_json::to_string(&ext).unwrap();
        let back: qsx_core::ExtensionMap = serde_json::from_str(&json).unwrap();
        let (lo, hi) = ext.window();
        let x = lo + probe * (hi - lo);
        let a = ext.evaluate(x).unwrap();
        let b = back.evaluate(x).unwrap();
        prop_assert!(dist(&a, &b) <= 1e-12);
    }
}
