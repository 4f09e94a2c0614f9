use ndarray::Array2;
use proptest::prelude::*;
use ttf_core::eval::{mape, mape_a, mape_p, EvalReport, PredictionRecord};
use ttf_core::ltv::{ChannelId, Day, LtvCurve, LtvDataset};
use ttf_core::preprocess::{inverse_robust_scale, moving_average, robust_scale, robust_scale_columns};
use ttf_core::synth::{describe, generate, GeneratorConfig};
use ttf_core::training::{mse_loss, utilitarian_loss};
use ttf_core::trapezoid::{build_window, WindowSpec};
use ttf_core::HolidayCalendar;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-50.0..50.0f64, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..12, 1usize..6)
}

fn naive_average(m: &Array2<f64>, w: usize) -> Array2<f64> {
    let (l, k) = m.dim();
    let half = (w / 2) as i64;
    Array2::from_shape_fn((l, k), |(p, j)| {
        let centre = m[[p, j]];
        let mut acc = 0.0;
        for r in 0..w as i64 {
            let idx = (p as i64 + r - half).clamp(0, l as i64 - 1) as usize;
            acc += m[[idx, j]] - centre;
        }
        centre + acc / w as f64
    })
}

proptest! {
    #[test]
    fn robust_scale_round_trips(col in prop::collection::vec(-1e3..1e3f64, 2..40)) {
        let (scaled, params) = robust_scale(&col);
        let back = inverse_robust_scale(&scaled, &params);
        for (a, b) in col.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn robust_scale_is_affine_invariant(
        col in prop::collection::vec(-1e2..1e2f64, 4..30),
        alpha in 0.1..10.0f64,
        beta in -5.0..5.0f64,
    ) {
        let (a, pa) = robust_scale(&col);
        prop_assume!(!pa.fallback);
        let moved: Vec<f64> = col.iter().map(|x| alpha * x + beta).collect();
        let (b, _) = robust_scale(&moved);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn padding_stays_zero((l, k) in shape(), seed in any::<u64>()) {
        let m = Array2::from_shape_fn((l, k), |(p, j)| ((seed >> (p % 32)) as f64 + j as f64 * 3.7 + p as f64).sin() + 2.0);
        let from: Vec<usize> = (0..k).map(|j| j.min(l)).collect();
        let (out, params) = robust_scale_columns(m.view(), &from).unwrap();
        prop_assert_eq!(params.len(), k);
        for j in 0..k {
            for p in 0..from[j] {
                prop_assert_eq!(out[[p, j]], 0.0);
            }
        }
    }

    #[test]
    fn moving_average_matches_naive_oracle(m in shape().prop_flat_map(|(l, k)| matrix(l, k)), w in 1usize..12) {
        let l = m.nrows();
        prop_assume!(w <= l);
        let fast = moving_average(m.view(), w).unwrap();
        prop_assert_eq!(fast, naive_average(&m, w));
    }

    #[test]
    fn moving_average_preserves_constants((l, k) in shape(), c in -1e6..1e6f64, w in 1usize..12) {
        prop_assume!(w <= l);
        let m = Array2::from_elem((l, k), c);
        prop_assert_eq!(moving_average(m.view(), w).unwrap(), m);
    }

    #[test]
    fn utilitarian_ignores_other_columns(
        pred in matrix(5, 4),
        target in matrix(5, 4),
        noise in matrix(5, 4),
    ) {
        let mut perturbed = pred.clone();
        for j in 0..3 {
            for i in 0..5 {
                perturbed[[i, j]] += noise[[i, j]] * 1e6;
            }
        }
        let a = utilitarian_loss(pred.view(), target.view()).unwrap();
        let b = utilitarian_loss(perturbed.view(), target.view()).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn single_column_losses_agree(pred in matrix(7, 1), target in matrix(7, 1)) {
        let u = utilitarian_loss(pred.view(), target.view()).unwrap();
        let m = mse_loss(pred.view(), target.view()).unwrap();
        prop_assert!((u - m).abs() <= 1e-15 * u.max(1.0));
    }

    #[test]
    fn equal_weights_reduce_to_plain_mean(
        pairs in prop::collection::vec((prop::collection::vec(0.1..10.0f64, 3), prop::collection::vec(0.1..10.0f64, 3)), 1..8),
        users in 1u64..1000,
    ) {
        let records: Vec<PredictionRecord> = pairs.iter().map(|(p, a)| record(p.clone(), a.clone(), users, vec![1.0])).collect();
        let plain = pairs.iter().map(|(p, a)| mape(p, a).unwrap()).sum::<f64>() / pairs.len() as f64;
        prop_assert!((mape_p(&records).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn mape_a_ignores_mass_distribution(
        prefix in prop::collection::vec(0.1..10.0f64, 2),
        pred in prop::collection::vec(0.1..10.0f64, 4),
        actual in prop::collection::vec(0.1..10.0f64, 4),
        rot in 0usize..4,
    ) {
        let a = mape_a(&[record(pred.clone(), actual.clone(), 3, prefix.clone())], 6).unwrap();
        let mut p2 = pred.clone();
        p2.rotate_left(rot);
        let mut a2 = actual.clone();
        a2.reverse();
        let b = mape_a(&[record(p2, a2, 3, prefix)], 6).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip(
        curves in prop::collection::vec((0usize..3, 0i32..20, prop::collection::vec(0.0..1e4f64, 1..6), 1u64..100), 1..12)
    ) {
        let ds = LtvDataset::from_curves(curves.iter().enumerate().map(|(i, (c, d, v, u))| {
            LtvCurve::new(
                ChannelId::new(format!("c{c}")).unwrap(),
                Day::from_offset(*d + 40 * i as i32),
                v.clone(),
                *u,
            )
            .unwrap()
        }))
        .unwrap();
        let bytes = ds.to_csv_bytes().unwrap();
        let back = LtvDataset::read_csv(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.to_csv_bytes().unwrap(), bytes);
        for (a, b) in ds.curves().zip(back.curves()) {
            prop_assert_eq!(a, b);
        }
    }
}

fn record(pred: Vec<f64>, actual: Vec<f64>, users: u64, prefix: Vec<f64>) -> PredictionRecord {
    PredictionRecord {
        channel: ChannelId::new("c").unwrap(),
        activation: Day::from_offset(0),
        predicted: pred,
        actual,
        user_count: users,
        observed_prefix: prefix,
    }
}

#[test]
fn weighting_dominance() {
    let a = record(vec![1.1, 1.2], vec![1.0, 1.0], 1_000_000, vec![1.0]);
    let b = record(vec![3.0, 1.0], vec![1.0, 1.0], 1, vec![1.0]);
    let v = mape_p(&[a.clone(), b]).unwrap();
    assert!((v - mape(&a.predicted, &a.actual).unwrap()).abs() < 1e-4);
}

#[test]
fn report_recomposes_from_channels() {
    let mut records = Vec::new();
    for (i, ch) in ["a", "b", "c"].iter().enumerate() {
        for d in 0..4 {
            records.push(PredictionRecord {
                channel: ChannelId::new(*ch).unwrap(),
                activation: Day::from_offset(d),
                predicted: vec![1.0 + 0.1 * d as f64, 2.0 + i as f64],
                actual: vec![1.0, 2.0],
                user_count: 1 + (d as u64 * 7 + i as u64 * 13) % 11,
                observed_prefix: vec![3.0, 1.0],
            });
        }
    }
    let r = EvalReport::from_records(&records, 4, "fp").unwrap();
    assert!((r.mape_p - mape_p(&records).unwrap()).abs() < 1e-12);
    assert!((r.mape_a - mape_a(&records, 4).unwrap()).abs() < 1e-12);
    assert_eq!(r.per_channel.len(), 3);
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
}

#[test]
fn generator_is_deterministic_and_noisy() {
    let cfg = GeneratorConfig {
        channels: 2,
        first_date: Day::from_ymd(2023, 1, 1).unwrap(),
        last_date: Day::from_ymd(2023, 4, 30).unwrap(),
        max_retention_days: 30,
        ..Default::default()
    };
    let cal = HolidayCalendar::new([Day::from_ymd(2023, 2, 14).unwrap()]);
    let a = generate(&cfg, &cal).unwrap().to_csv_bytes().unwrap();
    let b = generate(&cfg, &cal).unwrap().to_csv_bytes().unwrap();
    assert_eq!(a, b);

    let noisy = describe(&generate(&cfg, &cal).unwrap());
    let quiet = describe(&generate(&GeneratorConfig { volatility: 0.0, ..cfg.clone() }, &cal).unwrap());
    assert!(noisy.values.cv > quiet.values.cv);
    assert_eq!(describe(&LtvDataset::default()).channels, 0);
}

#[test]
fn holiday_boost_doubles_values() {
    let cfg = GeneratorConfig {
        channels: 2,
        first_date: Day::from_ymd(2023, 1, 1).unwrap(),
        last_date: Day::from_ymd(2023, 3, 31).unwrap(),
        max_retention_days: 30,
        holiday_boost: 1.0,
        ..Default::default()
    };
    let holiday = Day::from_ymd(2023, 2, 14).unwrap();
    let with = generate(&cfg, &HolidayCalendar::new([holiday])).unwrap();
    let without = generate(&cfg, &HolidayCalendar::default()).unwrap();
    let mut hits = 0;
    for (a, b) in with.curves().zip(without.curves()) {
        for (i, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
            if a.activation().plus(i as i64) == holiday {
                assert_eq!(*x, 2.0 * y);
                hits += 1;
            } else {
                assert_eq!(x, y);
            }
        }
    }
    assert!(hits > 0);
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn autocorr(x: &[f64], lag: usize) -> f64 {
    pearson(&x[..x.len() - lag], &x[lag..])
}

#[test]
fn weekly_periodicity_and_coherence() {
    let cfg = GeneratorConfig {
        channels: 3,
        first_date: Day::from_ymd(2023, 1, 1).unwrap(),
        last_date: Day::from_ymd(2023, 6, 30).unwrap(),
        max_retention_days: 40,
        volatility: 0.0,
        drift_prob: 0.0,
        holiday_boost: 0.0,
        ..Default::default()
    };
    let ds = generate(&cfg, &HolidayCalendar::default()).unwrap();
    for ch in ds.channels() {
        let day0: Vec<f64> = ds.channel_curves(&ch).map(|c| c.values()[0]).collect();
        let r7 = autocorr(&day0, 7);
        assert!(r7 > autocorr(&day0, 5) && r7 > autocorr(&day0, 6), "{ch}");
    }

    let cfg = GeneratorConfig { volatility: 0.05, ..cfg };
    let ds = generate(&cfg, &HolidayCalendar::default()).unwrap();
    for ch in ds.channels() {
        let curves: Vec<_> = ds.channel_curves(&ch).collect();
        for pair in curves.windows(2).take(60) {
            // Same calendar dates: day i+1 of the older curve, day i of the newer.
            let older = &pair[0].values()[1..];
            let newer = &pair[1].values()[..older.len()];
            assert!(pearson(older, newer) > 0.9);
        }
    }
}

#[test]
fn window_matches_direct_lookup() {
    let ch = ChannelId::new("z").unwrap();
    let ds = LtvDataset::from_curves((0..12).map(|t| {
        let v: Vec<f64> = (0..20).map(|i| (100 * t + i) as f64).collect();
        LtvCurve::new(ch.clone(), Day::from_offset(t), v, 1).unwrap()
    }))
    .unwrap();
    let spec = WindowSpec::new(3, 4, 3, 2).unwrap();
    let w = build_window(&ds, &ch, Day::from_offset(1), spec, true).unwrap();
    let l = spec.input_len();
    for j in 0..3 {
        let act = 1 + 2 * j as i32;
        for p in 0..l {
            let expect = if p < 2 * j { 0.0 } else { (100 * act + (p - 2 * j) as i32) as f64 };
            assert_eq!(w.input[[p, j]], expect);
        }
        let info = l - 2 * j;
        for h in 0..4 {
            assert_eq!(w.target.as_ref().unwrap()[[h, j]], (100 * act + (info + h) as i32) as f64);
        }
    }
}
