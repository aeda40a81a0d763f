use plaquekit::eval::*;
use plaquekit::raster::BBox;
use plaquekit::titration::*;
use plaquekit::welldetect::Layout;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook two-pass mean and sample variance.
fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn bland_altman_matches_hand_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let n = rng.gen_range(2..60);
        let gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..150.0_f64).round()).collect();
        let pred: Vec<f64> = gt
            .iter()
            .map(|g| (g + rng.gen_range(-12.0..12.0_f64)).max(0.0).round())
            .collect();
        let d: Vec<f64> = pred.iter().zip(&gt).map(|(p, g)| p - g).collect();
        let (bias, sd) = mean_sd(&d);
        let s = bland_altman(&gt, &pred).unwrap();
        assert!((s.bias - bias).abs() <= 1e-9);
        assert!((s.sd - sd).abs() <= 1e-9);
        assert!((s.loa_low - (bias - 1.96 * sd)).abs() <= 1e-9);
        assert!((s.loa_high - (bias + 1.96 * sd)).abs() <= 1e-9);
        assert!((s.loa_high + s.loa_low - 2.0 * s.bias).abs() <= 1e-9);
        assert!((s.loa_high - s.loa_low - 2.0 * 1.96 * s.sd).abs() <= 1e-9);
        // swapping roles negates every difference
        let r = bland_altman(&pred, &gt).unwrap();
        assert!((r.bias + s.bias).abs() <= 1e-9);
        assert!((r.loa_high + s.loa_low).abs() <= 1e-9 && (r.loa_low + s.loa_high).abs() <= 1e-9);
    }
}

#[test]
fn reported_limits_imply_reported_bias() {
    let (lo, hi) = (-9.69, 11.20);
    assert!(((lo + hi) / 2.0 - 0.76_f64).abs() <= 0.01);
}

#[test]
fn pearson_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.gen_range(3..50);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.7 + rng.gen_range(-3.0..3.0)).collect();
        let nf = n as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        let direct = (nf * sxy - sx * sy) / ((nf * sxx - sx * sx).sqrt() * (nf * syy - sy * sy).sqrt());
        let r = pearson(&x, &y).unwrap();
        assert!((r - direct).abs() <= 1e-12, "{r} {direct}");
        let xt: Vec<f64> = x.iter().map(|v| 3.0 * v - 5.0).collect();
        assert!((pearson(&xt, &y).unwrap() - r).abs() <= 1e-12);
    }
}

/// Exact two-sided p by enumerating every split of the pooled ranks.
fn exact_mwu_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, _) = midranks(&pooled);
    let n = pooled.len();
    let na = a.len();
    let mean = (na * (n - na)) as f64 / 2.0;
    let u_of = |mask: u32| {
        let r: f64 = (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        r - (na * (na + 1)) as f64 / 2.0
    };
    let observed = (u_of((1u32 << na) - 1) - mean).abs();
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        if (u_of(mask) - mean).abs() >= observed - 1e-9 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

#[test]
fn mann_whitney_three_by_three() {
    let (a, b) = ([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]);
    assert!((exact_mwu_p(&a, &b) - 0.1).abs() < 1e-12);
    let r = mann_whitney_u(&a, &b).unwrap();
    assert!((r.p_two_sided - exact_mwu_p(&a, &b)).abs() <= 0.03);
}

#[test]
fn mann_whitney_u_counts_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let a: Vec<f64> = (0..rng.gen_range(1..9)).map(|_| rng.gen_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..rng.gen_range(1..9)).map(|_| rng.gen_range(0..6) as f64).collect();
        let pairs: f64 = a
            .iter()
            .flat_map(|x| {
                b.iter().map(move |y| {
                    if x > y {
                        1.0
                    } else if x == y {
                        0.5
                    } else {
                        0.0
                    }
                })
            })
            .sum();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.u, pairs);
        let s = mann_whitney_u(&b, &a).unwrap();
        assert!((r.p_two_sided - s.p_two_sided).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&r.p_two_sided));
    }
}

fn boxes() -> impl Strategy<Value = Vec<BBox>> {
    prop::collection::vec((0usize..60, 0usize..60, 4usize..20, 4usize..20), 0..7)
        .prop_map(|v| v.into_iter().map(|(x, y, w, h)| BBox { x, y, w, h }).collect())
}

proptest! {
    #[test]
    fn matching_is_one_to_one(gt in boxes(), pred in boxes(), t in 0.05f64..1.0) {
        let m = match_detections(&gt, &pred, t);
        prop_assert_eq!(m.pairs.len() + m.unmatched_gt.len(), gt.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_pred.len(), pred.len());
        let mut g: Vec<usize> = m.pairs.iter().map(|p| p.gt).collect();
        let mut p: Vec<usize> = m.pairs.iter().map(|p| p.pred).collect();
        g.sort_unstable(); g.dedup();
        p.sort_unstable(); p.dedup();
        prop_assert_eq!(g.len(), m.pairs.len());
        prop_assert_eq!(p.len(), m.pairs.len());
        prop_assert!(m.pairs.iter().all(|p| p.iou >= t));
    }

    #[test]
    fn recall_non_increasing(gt in boxes(), pred in boxes()) {
        let th: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
        let s = pr_sweep(&gt, &pred, &th);
        for w in s.windows(2) {
            prop_assert!(w[1].recall <= w[0].recall + 1e-12);
        }
        prop_assert!(s.iter().all(|p| (0.0..=1.0).contains(&p.precision) && (0.0..=1.0).contains(&p.recall)));
    }

    #[test]
    fn symmetric_error_is_symmetric(a in 0.0f64..500.0, b in 0.01f64..500.0) {
        let e = symmetric_error(a, b).unwrap();
        prop_assert!((e - symmetric_error(b, a).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn titer_scale_law(counts in prop::collection::vec(1usize..12, 1..7), k in 1usize..8) {
        let layout = Layout::new(1, counts.len()).unwrap();
        let scheme = serial_scheme(2, 10.0, TraversalOrder::RowMajor, layout, 1, 0.1).unwrap();
        let policy = CountablePolicy { min_count: 1, max_count: 1000 };
        let wells = |m: usize| -> Vec<WellCount> {
            counts.iter().enumerate().map(|(c, &n)| WellCount { row: 0, col: c, count: Some(n * m), excluded: None }).collect()
        };
        let base = plate_titer(&wells(1), &scheme, &policy).unwrap();
        let scaled = plate_titer(&wells(k), &scheme, &policy).unwrap();
        for (a, b) in base.per_well.iter().zip(&scaled.per_well) {
            let ratio = b.pfu_per_ml.unwrap() / a.pfu_per_ml.unwrap();
            prop_assert!((ratio - k as f64).abs() < 1e-9 * k as f64);
        }
        let shift = scaled.plate_titer_log10.unwrap() - base.plate_titer_log10.unwrap();
        prop_assert!((shift - (k as f64).log10()).abs() < 1e-9);
    }

    #[test]
    fn excluded_wells_do_not_contribute(counts in prop::collection::vec(0usize..200, 1..8)) {
        let layout = Layout::new(1, counts.len()).unwrap();
        let scheme = serial_scheme(3, 10.0, TraversalOrder::RowMajor, layout, 1, 0.1).unwrap();
        let wells: Vec<WellCount> = counts.iter().enumerate()
            .map(|(c, &n)| WellCount { row: 0, col: c, count: Some(n), excluded: None }).collect();
        let full = plate_titer(&wells, &scheme, &CountablePolicy::default()).unwrap();
        let kept: Vec<WellCount> = wells.iter().zip(&full.per_well).filter(|(_, t)| t.included).map(|(w, _)| w.clone()).collect();
        let trimmed = plate_titer(&kept, &scheme, &CountablePolicy::default()).unwrap();
        prop_assert_eq!(full.plate_titer_log10, trimmed.plate_titer_log10);
        prop_assert_eq!(full.n_included, kept.len());
    }
}

#[test]
fn tenfold_series_has_zero_spread() {
    let layout = Layout::new(1, 4).unwrap();
    let scheme = serial_scheme(1, 10.0, TraversalOrder::RowMajor, layout, 1, 0.1).unwrap();
    let counts = [50_000usize, 5_000, 500, 50];
    let wells: Vec<WellCount> = counts
        .iter()
        .enumerate()
        .map(|(c, &n)| WellCount {
            row: 0,
            col: c,
            count: Some(n),
            excluded: None,
        })
        .collect();
    let policy = CountablePolicy {
        min_count: 1,
        max_count: usize::MAX,
    };
    let t = plate_titer(&wells, &scheme, &policy).unwrap();
    let logs: Vec<f64> = t.per_well.iter().map(|w| w.log10_pfu_per_ml.unwrap()).collect();
    assert!(logs.iter().all(|l| (l - logs[0]).abs() <= 1e-9), "{logs:?}");
    assert!(t.sd_log10.unwrap() <= 1e-9);
}
