//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS line with the measured values (visible with `--nocapture`).
//!
//! Every numeric check compares the library against a reference written
//! independently in this file, using direct textbook formulas and O(n²)
//! counting instead of the library's algorithms. Tolerances are pinned
//! next to each assertion. The suite needs no network, no pretrained
//! weights, and no external data.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relkit::augment::{augment, AugmentTarget, AugmentationPolicy, Paraphraser};
use relkit::crosslingual::{crosslingual_evaluate, IdentityClient, TranslationCache};
use relkit::data::{parse_dataset, serialize, LabeledPair, PairDataset, SplitName};
use relkit::encoder::{
    tokenize, EncoderConfig, HashTokenizer, Mode, PairTokenizer, RegressionModel,
};
use relkit::metrics::{
    confusion_matrix, discretize, evaluate, mae, mse, pearson, r_squared, spearman,
    PredictionSet, NUM_BINS,
};
use relkit::training::{load_checkpoint, save_checkpoint, train, TrainingConfig};
use relkit::Result;

// Reference implementations. Plain loops and direct formulas only; no
// shared code with the library under test.

fn ref_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn ref_mse(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.len() {
        sum += (a[i] - b[i]) * (a[i] - b[i]);
    }
    sum / a.len() as f64
}

fn ref_mae(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.len() {
        sum += (a[i] - b[i]).abs();
    }
    sum / a.len() as f64
}

fn ref_r_squared(labels: &[f64], predictions: &[f64]) -> f64 {
    let mean = ref_mean(labels);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..labels.len() {
        ss_res += (labels[i] - predictions[i]) * (labels[i] - predictions[i]);
        ss_tot += (labels[i] - mean) * (labels[i] - mean);
    }
    1.0 - ss_res / ss_tot
}

fn ref_pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (ref_mean(a), ref_mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Fractional rank of each element by exhaustive pairwise counting:
/// 1 + (elements strictly below) + half the other elements tied with it.
fn ref_fractional_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let tied = xs.iter().filter(|&&y| y == x).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect()
}

fn ref_spearman(a: &[f64], b: &[f64]) -> f64 {
    ref_pearson(&ref_fractional_ranks(a), &ref_fractional_ranks(b))
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

/// A random score vector; on a coarse grid about half the time so tied
/// values are well represented.
fn random_scores(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    if rng.random::<bool>() {
        (0..len).map(|_| rng.random::<f64>()).collect()
    } else {
        let grid = [0.0, 0.2, 0.25, 0.5, 0.75, 0.8, 1.0];
        (0..len).map(|_| grid[rng.random_range(0..grid.len())]).collect()
    }
}

fn prediction_set(labels: Vec<f64>, predictions: Vec<f64>) -> PredictionSet {
    PredictionSet::new(labels, predictions).unwrap()
}

#[test]
fn metrics_match_independent_references() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tolerance = 1e-9;
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for _ in 0..1000 {
        let len = rng.random_range(2..=200);
        let labels = random_scores(&mut rng, len);
        let predictions = random_scores(&mut rng, len);
        let ps = prediction_set(labels.clone(), predictions.clone());
        let mut check = |lib: Result<f64>, reference: f64| {
            // Degenerate inputs are rejected by the library and produce
            // non-finite references; both sides must agree on that.
            match lib {
                Ok(value) => {
                    assert!(
                        reference.is_finite(),
                        "library produced {value} where the reference is undefined"
                    );
                    let diff = (value - reference).abs();
                    assert!(diff <= tolerance, "difference {diff} exceeds {tolerance}");
                    worst = worst.max(diff);
                    compared += 1;
                }
                Err(_) => assert!(
                    !reference.is_finite(),
                    "library refused a case the reference computes"
                ),
            }
        };
        check(mse(&ps), ref_mse(&labels, &predictions));
        check(mae(&ps), ref_mae(&labels, &predictions));
        check(r_squared(&ps), ref_r_squared(&labels, &predictions));
        check(pearson(&ps), ref_pearson(&labels, &predictions));
        check(spearman(&ps), ref_spearman(&labels, &predictions));
    }
    assert!(compared >= 4500, "only {compared} comparisons ran");

    // Exhaustive tie coverage: every pair of non-constant sequences over
    // a three-value alphabet, all lengths up to six. Reference ranks are
    // precomputed once per sequence.
    let alphabet = [0.0, 0.5, 1.0];
    let mut exhaustive = 0usize;
    for len in 2..=6usize {
        let count = alphabet.len().pow(len as u32);
        let sequences: Vec<(Vec<f64>, Vec<f64>)> = (0..count)
            .filter_map(|code| {
                let mut rest = code;
                let seq: Vec<f64> = (0..len)
                    .map(|_| {
                        let v = alphabet[rest % alphabet.len()];
                        rest /= alphabet.len();
                        v
                    })
                    .collect();
                if is_constant(&seq) {
                    return None;
                }
                let ranks = ref_fractional_ranks(&seq);
                Some((seq, ranks))
            })
            .collect();
        for (a, a_ranks) in &sequences {
            for (b, b_ranks) in &sequences {
                let lib = spearman(&prediction_set(a.clone(), b.clone())).unwrap();
                let reference = ref_pearson(a_ranks, b_ranks);
                assert!(
                    (lib - reference).abs() <= tolerance,
                    "spearman({a:?}, {b:?}): {lib} vs {reference}"
                );
                exhaustive += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 30,
        "suite took {elapsed:?}, budget is 30 s"
    );
    println!(
        "PASS: five metrics vs references on 1000 random sets (worst diff {worst:.2e}) \
         and {exhaustive} exhaustive tie cases in {elapsed:?}"
    );
}

#[test]
fn squared_error_spot_values_hold_exactly() {
    let ps = prediction_set(vec![0.0, 1.0], vec![0.5, 0.5]);
    assert_eq!(mse(&ps).unwrap(), 0.25);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let len = rng.random_range(1..=50);
        let x = random_scores(&mut rng, len);
        assert_eq!(mse(&prediction_set(x.clone(), x)).unwrap(), 0.0);
    }
    println!("PASS: mse([0,1] vs [0.5,0.5]) = 0.25 and mse(x,x) = 0 for 100 random x");
}

/// Sixteen three-word pairs with evenly spaced scores; enough signal for
/// a small random model to memorize.
fn synthetic_pairs(n: usize) -> Vec<LabeledPair> {
    let words = [
        "amber", "birch", "cedar", "dune", "ember", "fjord", "grove", "heath", "islet", "jetty",
        "knoll", "lagoon", "marsh", "nook", "outcrop", "pine",
    ];
    (0..n)
        .map(|i| LabeledPair {
            pair_id: format!("SYN-{i}"),
            sentence_1: format!(
                "{} {} {}",
                words[i % 16],
                words[(i + 3) % 16],
                words[(i + 7) % 16]
            ),
            sentence_2: format!(
                "{} {} {}",
                words[(i + 1) % 16],
                words[(i + 5) % 16],
                words[(i + 11) % 16]
            ),
            score: Some(i as f64 / (n - 1) as f64),
        })
        .collect()
}

fn tiny_model(seed: u64) -> RegressionModel {
    RegressionModel::new(EncoderConfig::tiny(256), seed).unwrap()
}

#[test]
fn small_model_overfits_and_head_gradients_match_finite_differences() {
    let started = Instant::now();
    let ds = PairDataset::new("eng", SplitName::Train, synthetic_pairs(16)).unwrap();
    let tokenizer = HashTokenizer::new(256).unwrap();
    // One batch of 16 per epoch for 200 epochs is 200 optimizer steps.
    let config = TrainingConfig {
        learning_rate: 1e-3,
        dropout_rate: 0.0,
        batch_size: 16,
        max_tokens: 32,
        weight_decay: 0.0,
        epochs: 200,
        seed: 7,
    };
    let (trained, _) = train(tiny_model(7), &tokenizer, &ds, &ds, &config).unwrap();
    let predictions = trained.predict(&tokenizer, ds.pairs(), 32, 16).unwrap();
    let ps = prediction_set(ds.scores().unwrap(), predictions);
    let train_mse = mse(&ps).unwrap();
    let train_spearman = spearman(&ps).unwrap();
    assert!(train_mse < 0.01, "train MSE {train_mse} not below 0.01");
    assert!(
        train_spearman >= 0.95,
        "train Spearman {train_spearman} below 0.95"
    );

    // Analytic head gradients against central finite differences of the
    // squared-error loss on one item. head.out is checked exhaustively;
    // head.dense is sampled on a fixed stride to bound runtime.
    let mut model = tiny_model(3);
    model.set_dropout_rate(0.0).unwrap();
    let pair = &ds.pairs()[5];
    let input = tokenize(&tokenizer, pair, 32).unwrap();
    let label = 0.7;
    let loss_of = |model: &RegressionModel| {
        let (score, _) = model.forward_item(&input, &mut Mode::Eval).unwrap();
        (score - label) * (score - label)
    };
    let (score, cache) = model.forward_item(&input, &mut Mode::Eval).unwrap();
    model.zero_grads();
    model.backward_item(&cache, 2.0 * (score - label));
    let mut analytic = Vec::new();
    model.for_each_param_mut(&mut |p| {
        if p.name.starts_with("head.") {
            let stride = if p.name == "head.dense.w" { 17 } else { 1 };
            for idx in (0..p.grad.len()).step_by(stride) {
                analytic.push((p.name.to_string(), idx, p.grad[idx]));
            }
        }
    });
    assert!(analytic.len() > 60, "only {} head gradients sampled", analytic.len());
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (name, idx, grad) in &analytic {
        let nudge = |delta: f64, model: &mut RegressionModel| {
            model.for_each_param_mut(&mut |p| {
                if p.name == *name {
                    p.data[*idx] += delta;
                }
            });
        };
        nudge(h, &mut model);
        let up = loss_of(&model);
        nudge(-2.0 * h, &mut model);
        let down = loss_of(&model);
        nudge(h, &mut model);
        let numeric = (up - down) / (2.0 * h);
        let relative = (numeric - grad).abs() / grad.abs().max(numeric.abs()).max(1e-8);
        assert!(
            relative <= 1e-3,
            "{name}[{idx}]: analytic {grad} vs numeric {numeric} (relative {relative})"
        );
        worst = worst.max(relative);
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 120,
        "suite took {elapsed:?}, budget is 2 min"
    );
    println!(
        "PASS: 200-step overfit reached MSE {train_mse:.5} / Spearman {train_spearman:.3}; \
         {} head gradients within 1e-3 of finite differences (worst {worst:.2e}) in {elapsed:?}",
        analytic.len()
    );
}

#[test]
fn pipelines_are_equivalent() {
    let mut model = tiny_model(11);
    // A fresh random model scores everything below zero and clamping
    // would flatten the predictions; recentering the output bias keeps
    // them spread out so correlations are defined.
    model.for_each_param_mut(&mut |p| {
        if p.name == "head.out.b" {
            p.data[0] = 0.5;
        }
    });
    let tokenizer = HashTokenizer::new(256).unwrap();
    let ds = PairDataset::new("eng", SplitName::Test, synthetic_pairs(10)).unwrap();

    // Identity translation must not change a single bit of the report.
    let direct = evaluate(&prediction_set(
        ds.scores().unwrap(),
        model.predict(&tokenizer, ds.pairs(), 32, 4).unwrap(),
    ))
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cache = TranslationCache::open(dir.path().join("translations.cache")).unwrap();
    let roundabout =
        crosslingual_evaluate(&model, &tokenizer, &ds, &IdentityClient, &mut cache, "eng", 32, 4)
            .unwrap();
    assert_eq!(direct, roundabout);
    for (a, b) in [
        (direct.mse, roundabout.mse),
        (direct.mae, roundabout.mae),
        (direct.r_squared, roundabout.r_squared),
        (direct.pearson, roundabout.pearson),
        (direct.spearman, roundabout.spearman),
    ] {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    // Scores must not depend on how the input is chunked into batches.
    let whole = model.predict(&tokenizer, ds.pairs(), 32, 16).unwrap();
    for batch_size in [1, 3, 4] {
        let chunked = model.predict(&tokenizer, ds.pairs(), 32, batch_size).unwrap();
        for (a, b) in whole.iter().zip(&chunked) {
            assert!((a - b).abs() <= 1e-5, "batch {batch_size}: {a} vs {b}");
        }
    }

    // Scores must not depend on the padding a batchmate forces. The
    // first pair is scored alone, then next to a much longer pair.
    let long_pair = LabeledPair {
        pair_id: "LONG".into(),
        sentence_1: "amber birch cedar dune ember fjord grove heath islet jetty".into(),
        sentence_2: "pine outcrop nook marsh lagoon knoll jetty islet heath grove".into(),
        score: Some(0.5),
    };
    let solo = model.predict(&tokenizer, &ds.pairs()[..1], 32, 1).unwrap()[0];
    let padded_pairs = vec![ds.pairs()[0].clone(), long_pair];
    let padded = model.predict(&tokenizer, &padded_pairs, 32, 2).unwrap()[0];
    assert!(
        (solo - padded).abs() <= 1e-5,
        "padding changed a score: {solo} vs {padded}"
    );

    // A checkpoint round trip must preserve every prediction.
    let checkpoint_dir = dir.path().join("checkpoint");
    save_checkpoint(&model, &tokenizer.identifier(), None, &checkpoint_dir).unwrap();
    let (reloaded, meta) = load_checkpoint(&checkpoint_dir).unwrap();
    assert_eq!(meta.tokenizer, tokenizer.identifier());
    let after = reloaded.predict(&tokenizer, ds.pairs(), 32, 4).unwrap();
    for (a, b) in whole.iter().zip(&after) {
        assert!((a - b).abs() <= 1e-6, "round trip changed a score: {a} vs {b}");
    }
    println!(
        "PASS: identity translation report bit-identical; batch size and padding \
         within 1e-5; checkpoint round trip within 1e-6"
    );
}

/// Deterministic stand-in for a learned paraphraser: appends a variant
/// marker so every output is distinct from its input.
struct MarkerParaphraser;

impl Paraphraser for MarkerParaphraser {
    fn paraphrase(&self, text: &str, count: usize) -> Result<Vec<String>> {
        Ok((1..=count).map(|k| format!("{text} (variant {k})")).collect())
    }

    fn identifier(&self) -> String {
        "marker".into()
    }
}

#[test]
fn augmentation_doubles_the_training_set() {
    let pairs: Vec<LabeledPair> = (0..100)
        .map(|i| LabeledPair {
            pair_id: format!("P{i}"),
            sentence_1: format!("left sentence number {i}"),
            sentence_2: format!("right sentence number {i}"),
            score: Some((i % 11) as f64 / 10.0),
        })
        .collect();
    let ds = PairDataset::new("eng", SplitName::Train, pairs).unwrap();
    let policy = AugmentationPolicy {
        copies_per_pair: 1,
        target: AugmentTarget::First,
        dedup: false,
    };
    let (augmented, manifest) = augment(&ds, &MarkerParaphraser, &policy).unwrap();
    assert_eq!(augmented.len(), 200, "100 originals + 100 copies");
    for (original, copy) in ds.pairs().iter().zip(augmented.pairs()) {
        assert_eq!(original, copy, "originals must lead the output unchanged");
    }
    for generated in &augmented.pairs()[100..] {
        let source_id = generated.pair_id.split('#').next().unwrap();
        let source = ds.pairs().iter().find(|p| p.pair_id == source_id).unwrap();
        assert_eq!(generated.score, source.score, "scores are inherited");
        assert_eq!(generated.sentence_2, source.sentence_2);
        assert_ne!(generated.sentence_1, source.sentence_1);
    }
    assert_eq!(manifest.len(), 100, "one manifest entry per generated pair");
    for (entry, generated) in manifest.iter().zip(&augmented.pairs()[100..]) {
        assert_eq!(entry.pair_id, generated.pair_id);
        assert_eq!(entry.source_pair_id, generated.pair_id.split('#').next().unwrap());
        assert_eq!(entry.paraphraser, "marker");
        assert_eq!(entry.copy_index, 1);
    }
    println!("PASS: 100 pairs with one copy each became exactly 200, originals first, scores inherited, manifest complete");
}

#[test]
fn discretization_boundaries_and_confusion_mass() {
    for (score, bin) in [(0.0, 0), (0.2, 1), (0.4, 2), (0.6, 3), (0.8, 4), (1.0, 4)] {
        assert_eq!(discretize(score).unwrap(), bin, "discretize({score})");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let len = rng.random_range(1..=120);
        let labels: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let predictions: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let matrix = confusion_matrix(&prediction_set(labels, predictions)).unwrap();
        let total: u64 = matrix.iter().flatten().sum();
        assert_eq!(total as usize, len, "confusion mass must equal the set size");
        assert_eq!(matrix.len(), NUM_BINS);
    }
    println!("PASS: bin boundaries land at (0,1,2,3,4,4) and confusion entries sum to n on 100 random sets");
}

#[test]
fn statistics_histogram_mass_and_csv_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for case in 0..50 {
        let len = rng.random_range(1..=80);
        let pairs: Vec<LabeledPair> = (0..len)
            .map(|i| LabeledPair {
                pair_id: format!("R{case}-{i}"),
                sentence_1: format!("sentence with a comma, quote \" and number {i}"),
                sentence_2: format!("plain partner {i}"),
                score: Some(random_scores(&mut rng, 1)[0]),
            })
            .collect();
        let ds = PairDataset::new("eng", SplitName::Unsplit, pairs).unwrap();
        let stats = relkit::data::compute_stats(&ds).unwrap();
        let mass: u64 = stats.histogram.iter().sum();
        assert_eq!(mass as usize, ds.len(), "histogram mass must equal the count");

        let mut first = Vec::new();
        serialize(&ds, &mut first).unwrap();
        let parsed = parse_dataset(first.as_slice(), "eng", SplitName::Unsplit).unwrap();
        assert_eq!(parsed, ds);
        let mut second = Vec::new();
        serialize(&parsed, &mut second).unwrap();
        assert_eq!(first, second, "serialize, parse, serialize must be byte-identical");
    }
    println!("PASS: histogram mass equals the pair count and canonical CSV round-trips byte-identically on 50 random datasets");
}

/// Published fine-tuning results obtained with a pretrained 12-layer
/// encoder and the full annotated datasets. Neither ships with this
/// repository, so these stay documented targets rather than gates; the
/// README lists them alongside the command lines that aim at them.
#[test]
#[ignore = "needs pretrained encoder weights and full datasets; documented reproduction targets, not gates"]
fn external_reproduction_targets() {
    println!("SKIP: reproduction targets need a pretrained 12-layer encoder and the full annotated datasets, which this repository does not ship");
    println!("  target: English dev Spearman 0.83 +/- 0.05, test 0.82 +/- 0.05");
    println!("  target: Spanish dev Spearman 0.71 +/- 0.05, test 0.67 +/- 0.05");
    println!("  target: Arabic dev Spearman 0.32 +/- 0.07, test 0.38 +/- 0.07");
    println!("  target: English augmentation lifts Pearson from about 0.79 to about 0.81 +/- 0.03");
    println!("  target: Afrikaans via translation, Pearson about 0.8, MSE about 0.02");
    println!("  target: Spanish/Arabic train mean scores 0.43/0.50 +/- 0.01");
}
