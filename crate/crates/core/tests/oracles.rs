//! Library-level checks against independent oracles.

use rand_distr::{Distribution, StandardNormal};
use rclust::dataio::{load_ucr_tsv, synth_dataset, write_ucr_tsv, DatasetSource, SynthKind};
use rclust::kernelbank::{fit_bank, BankConfig, BiasMode};
use rclust::pipeline::{run_protocol, PipelineConfig};
use rclust::rng::{derive_indexed, derive_stream};
use rclust::stats::special::{chi2_pdf, chi2_sf};
use rclust::stats::{friedman_test, holm_adjust, wilcoxon_exact_p};

/// Composite Simpson rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut sum = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn chi_square_tail_matches_quadrature() {
    for df in [1.0, 2.0, 3.0, 7.0, 19.0, 20.0] {
        for x in [0.5, 2.0, 5.5, 12.0, 30.0] {
            let upper = x + 400.0;
            let tail = simpson(|t| chi2_pdf(t, df), x, upper, 400_000);
            let got = chi2_sf(x, df);
            assert!((got - tail).abs() < 1e-8, "df {df}, x {x}: {got} vs {tail}");
        }
    }
}

#[test]
fn friedman_is_calibrated_under_the_null() {
    let (n, k, reps) = (20, 4, 2000);
    let mut rejected = 0;
    for r in 0..reps {
        let mut s = derive_indexed(11, "friedman-null", r).unwrap();
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| StandardNormal.sample(&mut s)).collect()).collect();
        rejected += usize::from(friedman_test(&scores, 0.05).unwrap().rejected);
    }
    let rate = rejected as f64 / reps as f64;
    assert!((0.03..=0.07).contains(&rate), "rate {rate}");
}

#[test]
fn wilcoxon_exact_matches_sign_enumeration() {
    // distinct magnitudes: every sign pattern equally likely under the null
    let d: [f64; 8] = [0.3, -1.1, 2.4, 0.9, -0.2, 1.7, 3.3, -0.6];
    let ranks: Vec<f64> = {
        let mut idx: Vec<usize> = (0..d.len()).collect();
        idx.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
        let mut r = vec![0.0; d.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = (pos + 1) as f64;
        }
        r
    };
    let total: f64 = ranks.iter().sum();
    let plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let w = plus.min(total - plus);
    let m = d.len();
    let extreme = (0..1u32 << m)
        .filter(|mask| {
            let p: f64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            p.min(total - p) <= w
        })
        .count();
    let want = extreme as f64 / (1u32 << m) as f64;
    let got = wilcoxon_exact_p(&d, &[0.0; 8]).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn holm_on_sorted_control_comparisons() {
    // p-values of eight control comparisons, already sorted
    let p = [1e-6, 4e-4, 2e-3, 0.009, 0.02, 0.03, 0.2, 0.6];
    let d = holm_adjust(&p, 0.05).unwrap();
    let sig: Vec<bool> = d.iter().map(|x| x.significant).collect();
    assert_eq!(sig, [true, true, true, true, false, false, false, false]);
}

#[test]
fn tsv_round_trip_then_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = derive_stream(31, "noise").unwrap();
    let ds = synth_dataset(SynthKind::BlobsSine, 40, 100, 2, &mut s).unwrap();
    let train = dir.path().join("desk_TRAIN.tsv");
    write_ucr_tsv(&ds, &train).unwrap();
    let loaded = load_ucr_tsv(&DatasetSource::single(&train)).unwrap();
    assert_eq!(loaded.values(), ds.values());
    assert_eq!(loaded.name, "desk");

    let cfg = PipelineConfig {
        bank: BankConfig {
            num_features: 200,
            ..BankConfig::default()
        },
        runs: 4,
        ..PipelineConfig::new(2)
    };
    let a = run_protocol(&loaded, &cfg, 3).unwrap();
    let b = run_protocol(&ds, &cfg, 3).unwrap();
    assert_eq!(a.ari_runs(), b.ari_runs());
    assert!(a.best_ari.unwrap() >= 0.9);
}

#[test]
fn legacy_and_permuted_banks_differ_only_in_bias_order() {
    let mut s = derive_stream(5, "noise").unwrap();
    let ds = synth_dataset(SynthKind::WhiteNoise, 8, 300, 1, &mut s).unwrap();
    let permuted = fit_bank(&BankConfig::default(), &ds).unwrap();
    let legacy = fit_bank(
        &BankConfig {
            bias_mode: BiasMode::LegacySorted,
            ..BankConfig::default()
        },
        &ds,
    )
    .unwrap();
    let mut a: Vec<f64> = permuted.features.iter().map(|f| f.quantile_level).collect();
    let b: Vec<f64> = legacy.features.iter().map(|f| f.quantile_level).collect();
    assert!(b.windows(2).all(|w| w[0] < w[1]));
    assert_ne!(a, b);
    a.sort_by(f64::total_cmp);
    assert_eq!(a, b);
    for (x, y) in permuted.features.iter().zip(&legacy.features) {
        assert_eq!((&x.weights, x.dilation), (&y.weights, y.dilation));
    }
}
