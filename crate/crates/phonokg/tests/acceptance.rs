//! Acceptance suite: one test per shipped guarantee, each printing a
//! single PASS line (run with `--nocapture` to see them).
//!
//! The heavyweight directional checks share one trained fixture: a
//! seeded synthetic corpus (2,000 characters, 4 dialects, 20% mergers,
//! 20% missing cells) with box and complex models trained for 500
//! epochs at dimension 32 under identical budgets.

use phonokg::analysis::information_yield;
use phonokg::dataset::{gen_synthetic, LabelKind, LabelTable, SyntheticSpec};
use phonokg::evaluation::{evaluate, rank_tail, MetricsReport, RankSide};
use phonokg::graph::{audit_split, split, KnowledgeGraph, SplitAssignment, Triple};
use phonokg::models::{
    batch_grads, batch_loss, box_distance, BatchItem, Label, ModelKind, ModelParams,
};
use phonokg::numerics::{derive_seed, finite_diff, relative_error, seeded_rng};
use phonokg::probes::{mlp_fit, mode_baseline, probe_eval, ridge_fit, split_train_test, MlpConfig};
use phonokg::training::{train, TrainConfig};
use rand::Rng;
use std::collections::HashSet;
use std::sync::OnceLock;
use std::time::Instant;

struct SynthFixture {
    kg: KnowledgeGraph,
    assignment: SplitAssignment,
    labels: LabelTable,
    char_ids: Vec<String>,
    /// Bump embeddings of the characters, registry order.
    bumps: Vec<Vec<f64>>,
    boxe_metrics: MetricsReport,
    complex_metrics: MetricsReport,
    random_baseline_hits10: f64,
    build_seconds: f64,
}

static FIXTURE: OnceLock<SynthFixture> = OnceLock::new();

fn fixture() -> &'static SynthFixture {
    FIXTURE.get_or_init(|| {
        let start = Instant::now();
        let spec = SyntheticSpec {
            n_chars: 2000,
            n_dialects: 4,
            merger_rate: 0.2,
            missing_rate: 0.2,
            seed: derive_seed(42, "synth"),
            ..Default::default()
        };
        let (table, labels) = gen_synthetic(&spec).unwrap();
        let kg = KnowledgeGraph::build(&table);
        let assignment = split(&kg, (0.80, 0.13, 0.07), derive_seed(42, "split")).unwrap();
        let config = TrainConfig {
            dim: 32,
            epochs: 500,
            seed: 42,
            ..Default::default()
        };
        let boxe = train(&kg, &assignment, &config, ModelKind::BoxE).unwrap();
        let complex = train(&kg, &assignment, &config, ModelKind::ComplEx).unwrap();

        let valid: Vec<Triple> = assignment.valid.iter().map(|&i| kg.triples[i]).collect();
        let boxe_metrics = evaluate(&boxe.params, &valid, &kg, true, RankSide::Tail).unwrap();
        let complex_metrics = evaluate(&complex.params, &valid, &kg, true, RankSide::Tail).unwrap();

        // Chance of a random scorer putting the true tail in the top 10
        // of each triple's category pool, averaged over the eval set.
        let random_baseline_hits10 = valid
            .iter()
            .map(|t| {
                let pool = kg.pool(kg.relations[t.relation].category).len();
                (10.0 / pool as f64).min(1.0)
            })
            .sum::<f64>()
            / valid.len() as f64;

        let mut char_ids = Vec::new();
        let mut bumps = Vec::new();
        for e in &kg.entities {
            if let phonokg::graph::EntityKind::Character { char_id } = &e.kind {
                char_ids.push(char_id.clone());
                bumps.push(boxe.params.bump_vector(e.id).to_vec());
            }
        }
        SynthFixture {
            kg,
            assignment,
            labels,
            char_ids,
            bumps,
            boxe_metrics,
            complex_metrics,
            random_baseline_hits10,
            build_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_1_box_distance_continuity() {
    let start = Instant::now();
    let mut rng = seeded_rng(101);
    let mut max_gap: f64 = 0.0;
    for _ in 0..1000 {
        let a: f64 = rng.gen_range(-4.0..4.0);
        let b: f64 = rng.gen_range(-4.0..4.0);
        let (l, u) = (a.min(b), a.max(b));
        for border in [l, u] {
            let inside = box_distance(&[border - 1e-8], &[l], &[u])[0];
            let outside = box_distance(&[border + 1e-8], &[l], &[u])[0];
            max_gap = max_gap.max((inside - outside).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(max_gap < 1e-6, "branch gap {max_gap}");
    assert!(secs < 1.0, "took {secs:.2}s");
    println!("ACCEPTANCE 1 PASS box-distance continuity (max branch gap {max_gap:.2e}, {secs:.2}s)");
}

#[test]
fn criterion_2_gradient_oracle() {
    let start = Instant::now();
    let (n_entities, n_chars, n_rel, dim) = (12, 6, 3, 8);
    let mut worst: f64 = 0.0;
    let mut point = 0u64;
    for kind in [ModelKind::BoxE, ModelKind::RotatE, ModelKind::ComplEx] {
        for _ in 0..100 {
            point += 1;
            let mut params =
                ModelParams::init(kind, n_entities, n_rel, dim, 9000 + point).unwrap();
            let mut rng = seeded_rng(31 + point);
            let items: Vec<BatchItem> = (0..6)
                .map(|i| BatchItem {
                    triple: Triple {
                        head: rng.gen_range(0..n_chars),
                        relation: rng.gen_range(0..n_rel),
                        tail: rng.gen_range(n_chars..n_entities),
                    },
                    label: if i % 3 == 0 {
                        Label::Positive
                    } else {
                        Label::Negative
                    },
                    weight: rng.gen_range(0.05..1.0),
                })
                .collect();
            let margin = 6.0;
            let analytic = batch_grads(&params, &items, margin);
            let base = params.data().to_vec();
            let numeric = finite_diff(
                |x| {
                    params.data_mut().copy_from_slice(x);
                    batch_loss(&params, &items, margin)
                },
                &base,
                1e-5,
            );
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "{kind:?} point {point}: rel err {err}");
            worst = worst.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "took {secs:.2}s");
    println!("ACCEPTANCE 2 PASS gradient oracle, 3 models x 100 points (worst rel err {worst:.2e}, {secs:.2}s)");
}

#[test]
fn criterion_3_ranking_oracle() {
    let start = Instant::now();
    // 5 characters + 5 components = 10 entities, one dialect = 3 relations.
    let (table, _) = gen_synthetic(&SyntheticSpec {
        n_chars: 5,
        n_dialects: 1,
        n_initials: 2,
        n_finals: 2,
        n_tones: 1,
        merger_rate: 0.0,
        missing_rate: 0.0,
        seed: 77,
    })
    .unwrap();
    let kg = KnowledgeGraph::build(&table);
    let stats = kg.stats();
    assert_eq!(stats.n_entities, 10);
    assert_eq!(stats.n_relations, 3);

    let mut model =
        ModelParams::init(ModelKind::RotatE, stats.n_entities, stats.n_relations, 6, 4).unwrap();
    let mut rng = seeded_rng(55);
    for v in model.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }

    // Brute-force enumerator, recomputed from raw scores.
    let known = kg.triple_set();
    let mut expected_ranks = Vec::new();
    for &t in &kg.triples {
        let truth = model.score(t);
        let mut higher = 0;
        let mut equal = 0;
        for &cand in kg.pool(kg.relations[t.relation].category) {
            if cand == t.tail {
                continue;
            }
            let probe = Triple { tail: cand, ..t };
            if known.contains(&probe) {
                continue;
            }
            let s = model.score(probe);
            if s > truth {
                higher += 1;
            }
            if s == truth {
                equal += 1;
            }
        }
        expected_ranks.push(1 + higher + (equal + 1) / 2);
    }
    for (&t, &want) in kg.triples.iter().zip(&expected_ranks) {
        let got = rank_tail(&model, t, &kg, &known, true).unwrap();
        assert_eq!(got, want);
    }
    let report = evaluate(&model, &kg.triples, &kg, true, RankSide::Tail).unwrap();
    let n = expected_ranks.len() as f64;
    let hits = |k: usize| expected_ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    assert_eq!(report.hits_at_1, hits(1));
    assert_eq!(report.hits_at_5, hits(5));
    assert_eq!(report.hits_at_10, hits(10));
    let mrr: f64 = expected_ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    assert!((report.mrr - mrr).abs() < 1e-15);
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 1.0, "took {secs:.2}s");
    println!("ACCEPTANCE 3 PASS ranking oracle, exact match on {} triples ({secs:.2}s)", kg.triples.len());
}

#[test]
fn criterion_4_information_yield_identities() {
    let start = Instant::now();
    let identical = information_yield(&[0, 0, 1, 1, 2], &["a", "a", "b", "b", "c"]).unwrap();
    assert_eq!(identical.yield_percent, Some(100.0));
    let single = information_yield(&[0, 0, 0, 0], &["a", "a", "b", "b"]).unwrap();
    assert_eq!(single.yield_percent, Some(0.0));
    let worked = information_yield(&[0, 0, 0, 1], &["A", "A", "B", "B"]).unwrap();
    let y = worked.yield_percent.unwrap();
    assert!((y - 31.13).abs() <= 0.01, "worked example yield {y}");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 1.0, "took {secs:.2}s");
    println!("ACCEPTANCE 4 PASS information-yield identities (100% / 0% / {y:.2}%, {secs:.2}s)");
}

#[test]
fn criterion_5_directional_model_comparison() {
    let f = fixture();
    let boxe = f.boxe_metrics.hits_at_10;
    let complex = f.complex_metrics.hits_at_10;
    let floor = 3.0 * f.random_baseline_hits10;
    assert!(
        boxe > complex,
        "box hits@10 {boxe:.4} not above complex {complex:.4}"
    );
    assert!(
        boxe >= floor,
        "box hits@10 {boxe:.4} below 3x random baseline {floor:.4}"
    );
    assert!(
        f.build_seconds < 600.0,
        "fixture took {:.1}s",
        f.build_seconds
    );
    println!(
        "ACCEPTANCE 5 PASS directional comparison: box hits@10 {boxe:.4} > complex {complex:.4}, >= 3x random {:.4} (fixture {:.1}s)",
        f.random_baseline_hits10, f.build_seconds
    );
}

#[test]
fn criterion_6_probe_dominance_on_proto_finals() {
    let f = fixture();
    let start = Instant::now();
    // Proto-final recovery: every synthetic character carries its proto
    // final class in the fine-finals label task.
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut classes = std::collections::HashMap::new();
    for (cid, bump) in f.char_ids.iter().zip(&f.bumps) {
        let label = f.labels.get(cid, LabelKind::Mu).unwrap();
        let next = classes.len();
        let id = *classes.entry(label.to_string()).or_insert(next);
        x.push(bump.clone());
        y.push(id);
    }
    let k = classes.len();
    let (train_idx, test_idx) = split_train_test(x.len(), 0.67, derive_seed(42, "probe:mu"));
    let take = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| x[i].clone()).collect(),
            idx.iter().map(|&i| y[i]).collect(),
        )
    };
    let (x_train, y_train) = take(&train_idx);
    let (x_test, y_test) = take(&test_idx);

    let ridge = ridge_fit(&x_train, &y_train, k, 1.0).unwrap();
    let ridge_pred: Vec<usize> = x_test.iter().map(|r| ridge.predict(r)).collect();
    let ridge_acc = probe_eval(&ridge_pred, &y_test, k).unwrap().accuracy;

    let (mlp, _) = mlp_fit(
        &x_train,
        &y_train,
        k,
        &MlpConfig {
            seed: derive_seed(42, "mlp:mu"),
            ..Default::default()
        },
    )
    .unwrap();
    let mlp_pred: Vec<usize> = x_test.iter().map(|r| mlp.predict(r)).collect();
    let mlp_acc = probe_eval(&mlp_pred, &y_test, k).unwrap().accuracy;

    let baseline = mode_baseline(&y_train, &y_test);
    let secs = start.elapsed().as_secs_f64();
    assert!(
        ridge_acc >= baseline + 0.10,
        "ridge {ridge_acc:.4} not 10 points over baseline {baseline:.4}"
    );
    assert!(
        mlp_acc >= baseline + 0.10,
        "mlp {mlp_acc:.4} not 10 points over baseline {baseline:.4}"
    );
    assert!(secs < 120.0, "took {secs:.2}s");
    println!(
        "ACCEPTANCE 6 PASS probe dominance on proto finals: ridge {ridge_acc:.4}, mlp {mlp_acc:.4} vs baseline {baseline:.4} ({secs:.2}s)"
    );
}

#[test]
fn criterion_7_split_contract() {
    let f = fixture();
    audit_split(&f.kg, &f.assignment).expect("coverage audit");
    let (t, v, e) = f.assignment.achieved;
    assert!((t - 0.80).abs() <= 0.03, "train fraction {t:.4}");
    assert!((v - 0.13).abs() <= 0.03, "valid fraction {v:.4}");
    assert!((e - 0.07).abs() <= 0.03, "test fraction {e:.4}");

    // Brute-force re-audit, independent of audit_split.
    let train: HashSet<usize> = f.assignment.train.iter().copied().collect();
    let mut groups: HashSet<(usize, phonokg::dataset::Category)> = HashSet::new();
    let mut covered = HashSet::new();
    for (i, triple) in f.kg.triples.iter().enumerate() {
        let key = (triple.head, f.kg.relations[triple.relation].category);
        groups.insert(key);
        if train.contains(&i) {
            covered.insert(key);
        }
    }
    assert_eq!(groups, covered, "some (character, category) lacks a train triple");

    if let Some(real) = real_data_graph() {
        let assignment = split(&real, (0.8050, 0.1252, 0.0698), 7).unwrap();
        audit_split(&real, &assignment).expect("real-data coverage audit");
    }
    println!(
        "ACCEPTANCE 7 PASS split contract: partition exhaustive, coverage holds, achieved {:.2}/{:.2}/{:.2}",
        t * 100.0,
        v * 100.0,
        e * 100.0
    );
}

/// The real survey data is not redistributable; point
/// PHONOKG_CCR_CANONICAL at a canonical-format TSV of it to enable the
/// conditional graph-invariant check.
fn real_data_graph() -> Option<KnowledgeGraph> {
    let path = std::env::var_os("PHONOKG_CCR_CANONICAL")?;
    let table = phonokg::dataset::PronunciationTable::read_canonical(std::path::Path::new(&path))
        .expect("readable canonical TSV for real data");
    Some(KnowledgeGraph::build(&phonokg::dataset::dedup_first(&table)))
}

#[test]
fn criterion_8_real_data_graph_invariants() {
    let Some(kg) = real_data_graph() else {
        println!("ACCEPTANCE 8 SKIP real-data graph invariants (set PHONOKG_CCR_CANONICAL to enable)");
        return;
    };
    let stats = kg.stats();
    assert_eq!(stats.n_characters, 2805, "character count");
    assert_eq!(stats.n_entities, 2946, "entity count");
    assert_eq!(stats.n_relations, 12, "relation types");
    let assignment = split(&kg, (0.8050, 0.1252, 0.0698), 7).unwrap();
    let train = assignment.train.len() as f64;
    assert!(
        (train - 22_300.0).abs() <= 0.02 * 22_300.0,
        "train triples {train} not within 2% of 22300"
    );
    println!(
        "ACCEPTANCE 8 PASS real-data graph invariants (2805 chars, 2946 entities, 12 relations, {train} train triples)"
    );
}

#[test]
fn criterion_9_end_to_end_determinism() {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_phonokg");
    let dir = tempfile::tempdir().unwrap();
    let base_cfg = dir.path().join("base.cfg");
    std::fs::write(
        &base_cfg,
        "seed = 11\nsynth.chars = 250\nsynth.initials = 12\nsynth.finals = 15\nsynth.tones = 8\n\
         train.dim = 16\ntrain.epochs = 60\ntrain.batch_size = 256\ntrain.negatives = 4\n\
         probe.mlp_epochs = 60\n",
    )
    .unwrap();

    let run_pipeline = |out: &std::path::Path, config: &std::path::Path| {
        for stage in [
            vec!["synth"],
            vec!["build-graph"],
            vec!["split"],
            vec!["train"],
            vec!["eval"],
            vec!["probe"],
        ] {
            let status = std::process::Command::new(bin)
                .args(&stage)
                .arg("--config")
                .arg(config)
                .arg("--out-dir")
                .arg(out)
                .arg("--threads")
                .arg("1")
                .status()
                .expect("spawn phonokg");
            assert!(status.success(), "stage {stage:?} failed");
        }
    };

    let dir_a = dir.path().join("a");
    let dir_b = dir.path().join("b");
    run_pipeline(&dir_a, &base_cfg);
    // The second run starts from the first run's snapshot.
    run_pipeline(&dir_b, &dir_a.join("config.snapshot"));

    for file in ["metrics.json", "params.tsv", "probes.csv"] {
        let a = std::fs::read(dir_a.join(file)).unwrap();
        let b = std::fs::read(dir_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let secs = start.elapsed().as_secs_f64();
    println!("ACCEPTANCE 9 PASS end-to-end determinism: metrics.json, params.tsv, probes.csv byte-identical ({secs:.1}s)");
}
