//! Data pipeline properties: normalization round trips, split soundness,
//! sampler uniformity, and preset schema consistency.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sca_bench::data::{
    normalize_columns, split, synth_regression, ColumnAffine, NormalizeKind, SplitSpec,
};
use sca_core::data::MinibatchSampler;
use sca_core::linalg::Mat;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalization_round_trips(
        values in prop::collection::vec(-1e6f64..1e6, 2..40),
    ) {
        let n = values.len();
        let mut m = Mat::from_vec(n, 1, values.clone()).unwrap();
        let params = normalize_columns(&mut m, NormalizeKind::Input);
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        for (i, v) in values.iter().enumerate() {
            let back = params[0].invert(m.get(i, 0));
            // tolerance scales with the column's spread
            prop_assert!((back - v).abs() <= 1e-12 * (1.0 + spread.abs()));
        }
    }

    #[test]
    fn normalized_values_stay_in_range(
        values in prop::collection::vec(-1e3f64..1e3, 2..40),
    ) {
        let n = values.len();
        let mut m = Mat::from_vec(n, 1, values).unwrap();
        normalize_columns(&mut m, NormalizeKind::Output);
        for i in 0..n {
            prop_assert!((-0.9..=0.9).contains(&m.get(i, 0)));
        }
    }
}

#[test]
fn split_indices_cover_everything_disjointly() {
    let ds = synth_regression(97, 4, 0.0, 3).unwrap();
    let (train, test) = split(
        &ds,
        &SplitSpec {
            test_fraction: 0.25,
            seed: 11,
        },
    )
    .unwrap();
    assert_eq!(train.len() + test.len(), 97);
    assert_eq!(test.len(), 24); // round(97 * 0.25)
    // every original target appears exactly as often across the two sides
    let mut all: Vec<f64> = train.targets.iter().chain(&test.targets).copied().collect();
    let mut orig = ds.targets.clone();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    orig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(all, orig);
}

#[test]
fn minibatch_inclusion_counts_pass_a_chi_square_check() {
    // N = 50, L = 10, 100k draws: inclusion count per index is
    // Binomial(100k, 0.2); the chi-square statistic against the uniform
    // expectation stays below the 49-dof 0.001 critical value (85.35) --
    // without-replacement draws make the statistic conservative
    let ds = synth_regression(50, 2, 0.0, 8).unwrap();
    let mut sampler = MinibatchSampler::new(4242);
    let draws = 100_000;
    let l = 10;
    let mut counts = [0u64; 50];
    for _ in 0..draws {
        let batch = sampler.draw(&ds, l).unwrap();
        for &i in &batch.indices {
            counts[i] += 1;
        }
    }
    let expected = (draws * l) as f64 / 50.0;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    assert!(stat < 85.35, "chi-square statistic {stat}");
}

#[test]
fn batches_vary_across_draws() {
    let ds = synth_regression(50, 2, 0.0, 8).unwrap();
    let mut sampler = MinibatchSampler::new(1);
    let a = sampler.draw(&ds, 10).unwrap();
    let b = sampler.draw(&ds, 10).unwrap();
    assert_ne!(a.indices, b.indices);
}

#[test]
fn constant_column_affine_is_stable() {
    let affine = ColumnAffine {
        src_min: 7.0,
        src_max: 7.0,
        dst_lo: -0.5,
        dst_hi: 0.5,
    };
    assert_eq!(affine.apply(7.0), 0.0);
    assert_eq!(affine.invert(0.0), 7.0);
}

#[test]
fn uci_presets_have_consistent_schemas() {
    for preset in sca_bench::data::uci_presets() {
        let (_, cols) = preset.expected_shape;
        assert!(preset.schema.target_column < cols, "{}", preset.name);
        for &c in &preset.schema.drop_columns {
            assert!(c < cols, "{}", preset.name);
            assert_ne!(c, preset.schema.target_column, "{}", preset.name);
        }
        // input layer widths the experiments use: features after dropping
        // target and identifier columns
        let features = cols - 1 - preset.schema.drop_columns.len();
        let expected = match preset.name {
            "casp" => 9,
            "parkinsons" => 19,
            "skillcraft" => 18,
            "wine" => 11,
            other => panic!("unknown preset {other}"),
        };
        assert_eq!(features, expected, "{}", preset.name);
    }
}

/// When the benchmark CSVs are present locally, they must load to the
/// published shapes. Skipped (passing) otherwise.
#[test]
fn local_uci_files_match_published_shapes() {
    let dir = std::env::var("SCA_BENCH_DATA_DIR").unwrap_or_else(|_| "../../data".to_string());
    for preset in sca_bench::data::uci_presets() {
        let path = std::path::Path::new(&dir).join(preset.filename);
        if !path.exists() {
            eprintln!("SKIP {}: {} not present", preset.name, path.display());
            continue;
        }
        let table = sca_bench::data::load_csv(&path, &preset.schema).unwrap();
        assert_eq!(
            (table.n_rows(), table.n_cols()),
            preset.expected_shape,
            "{}",
            preset.name
        );
    }
}

#[test]
fn sampler_streams_are_reproducible_across_consumers() {
    let ds = synth_regression(40, 3, 0.0, 5).unwrap();
    let mut a = MinibatchSampler::new(77);
    let mut b = MinibatchSampler::new(77);
    let mut r = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..20 {
        let l = r.gen_range(1..=40);
        assert_eq!(a.draw(&ds, l).unwrap().indices, b.draw(&ds, l).unwrap().indices);
    }
}
