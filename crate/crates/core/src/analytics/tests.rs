use std::path::PathBuf;

use super::*;
use crate::gameplay::{read_archive, ArchiveRecord, ArchiveTurn};
use crate::numerics::{gradcheck, Activation, DenseNet};
use crate::oracle::{Animacy, Answer, QType, QuestionSpace};
use crate::rng::substream;
use crate::world::{build_splits, generate_world, WorldConfig};
use proptest::prelude::*;
use rand::Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn keyword_examples() {
    let lex = Lexicon::default();
    assert_eq!(lex.classify_text("is it a person?"), (QType::Supercategory, None));
    assert_eq!(lex.classify_text("is it red?"), (QType::Color, None));
    assert_eq!(lex.classify_text("Is it the DOG?"), (QType::Object, Some(Animacy::Animate)));
    assert_eq!(lex.classify_text("is it the red cup?"), (QType::Color, None));
    assert_eq!(lex.classify_text("what?"), (QType::Object, Some(Animacy::Unknown)));
}

#[test]
fn labelled_fixture_is_classified_exactly() {
    let lex = Lexicon::default();
    let text = std::fs::read_to_string(fixture("labeled_questions.tsv")).unwrap();
    let mut n = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let (q, label) = line.split_once('\t').unwrap();
        let (t, a) = lex.classify_text(q);
        assert_eq!(class_label(t, a), label, "{q}");
        n += 1;
    }
    assert_eq!(n, 40);
}

#[test]
fn text_and_structure_agree_on_generated_questions() {
    let vocab = generate_world(&WorldConfig::default(), 3).unwrap();
    let space = QuestionSpace::from_vocab(&vocab);
    let lex = Lexicon::default();
    for q in QType::ALL {
        for arg in 0..space.arity(q) {
            for v in 0..space.variants(q) {
                let question = space.question(q, arg, v).unwrap();
                let structural = lex.classify(&question);
                assert_eq!(lex.classify_text(&question.text), structural, "{}", question.text);
            }
        }
    }
}

#[test]
fn per_type_accuracy_partitions() {
    let items = [("color", true), ("color", false), ("location", true), ("size", true)];
    let t = per_type_accuracy(items.iter().copied());
    assert_eq!(t["color"].accuracy, 0.5);
    assert_eq!(t.values().map(|r| r.count).sum::<usize>(), items.len());
    let all = per_type_accuracy(items.iter().map(|(l, _)| (*l, true)));
    assert!(all.values().all(|r| r.accuracy == 1.0));
}

#[test]
fn annotation_fixture_has_the_error_analysis_shape() {
    let text = std::fs::read_to_string(fixture("oracle_annotations.tsv")).unwrap();
    let ann = parse_annotations(&text).unwrap();
    let table = annotation_table(&Lexicon::default(), &ann);
    assert_eq!(table.values().map(|r| r.count).sum::<usize>(), ann.len());
    assert_eq!(table["inanimate object"], TypeRow { accuracy: 2.0 / 3.0, count: 3 });
    assert_eq!(table["animate object"], TypeRow { accuracy: 0.5, count: 2 });
    assert_eq!(table["super category"], TypeRow { accuracy: 2.0 / 3.0, count: 3 });
    assert_eq!(table["location"], TypeRow { accuracy: 2.0 / 3.0, count: 3 });
    assert!(parse_annotations("is it red?\tmaybe").is_err());
}

fn record(turns: &[(QType, usize, &str, Answer)]) -> ArchiveRecord {
    ArchiveRecord {
        scene_id: "s".into(),
        turns: turns
            .iter()
            .map(|(q, a, t, ans)| ArchiveTurn {
                qtype: *q,
                argument: *a,
                text: t.to_string(),
                answer: *ans,
            })
            .collect(),
        predicted: 0,
        target: 0,
        success: true,
    }
}

#[test]
fn stats_single_game_hand_count() {
    let g = record(&[
        (QType::Color, 0, "is it red?", Answer::Yes),
        (QType::Object, 5, "is it the cup?", Answer::Yes),
    ]);
    let s = dialogue_stats(&[g]).unwrap();
    assert_eq!(s.supercat_to_object_attr_rate, 0.0);
    assert_eq!(s.object_to_attr_rate, 0.0);
    assert_eq!(s.turns, 2);
    assert_eq!(s.lexical_diversity, 5.0 / 7.0);
    assert_eq!(s.vocabulary_size, 5);
    assert!(dialogue_stats(&[]).is_err());
}

#[test]
fn stats_repeated_rate() {
    let g = record(&[
        (QType::Size, 0, "is it small?", Answer::No),
        (QType::Size, 0, "is it a small one?", Answer::No),
    ]);
    let s = dialogue_stats(&[g.clone(), g]).unwrap();
    assert_eq!(s.repeated_question_rate, 1.0);
    assert_eq!(s.question_diversity, 1.0);
}

#[test]
fn stats_match_recount_of_fixture_archive() {
    // Frozen from fixtures/recount_stats.py on fixtures/games_10.jsonl.
    let archive = read_archive(&fixture("games_10.jsonl")).unwrap();
    let s = dialogue_stats(&archive).unwrap();
    assert_eq!(s.games, 10);
    assert_eq!(s.turns, 31);
    assert_eq!(s.lexical_diversity, 39.0 / 133.0);
    assert_eq!(s.question_diversity, 28.0 / 10.0);
    assert_eq!(s.distinct_question_ratio, 24.0 / 31.0);
    assert_eq!(s.repeated_question_rate, 3.0 / 10.0);
    assert_eq!(s.supercat_to_object_attr_rate, 4.0 / 7.0);
    assert_eq!(s.object_to_attr_rate, 3.0 / 7.0);
    assert_eq!(s.location_turn_rate, 5.0 / 31.0);
    assert_eq!(s.vocabulary_size, 39);
}

#[test]
fn probe_loss_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = substream(seed, "probe");
        let layer = DenseNet::glorot(&[6, 4], Activation::Identity, Activation::Softmax, &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let label = rng.random_range(0..4);
        let mut grads = vec![0.0; layer.num_params()];
        probe_loss(&layer, &x, label, &mut grads).unwrap();
        let mut probe = layer.clone();
        let report = gradcheck(
            |p| {
                probe.load_params(p).unwrap();
                let mut g = vec![0.0; p.len()];
                probe_loss(&probe, &x, label, &mut g).unwrap()
            },
            &layer.params(),
            &grads,
            1e-5,
            1e-4,
        );
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");
    }
}

#[test]
fn f1_matches_confusion_matrix_recount() {
    let mut rng = substream(4, "f1");
    let truth: Vec<usize> = (0..300).map(|_| rng.random_range(0..4)).collect();
    let pred: Vec<usize> = truth
        .iter()
        .map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..4) })
        .collect();
    let mut cm = [[0usize; 4]; 4];
    for (t, p) in truth.iter().zip(&pred) {
        cm[*t][*p] += 1;
    }
    let mut expect = Vec::new();
    for c in 0..4 {
        let tp = cm[c][c] as f64;
        let precision = tp / (0..4).map(|r| cm[r][c]).sum::<usize>() as f64;
        let recall = tp / cm[c].iter().sum::<usize>() as f64;
        expect.push(2.0 * precision * recall / (precision + recall));
    }
    let got = per_class_f1(&truth, &pred, &[0, 1, 2, 3]);
    for (c, f) in got {
        assert!((f - expect[c]).abs() < 1e-12);
    }
    let m = macro_f1(&truth, &pred, &[0, 1, 2, 3]);
    assert!((m - expect.iter().sum::<f64>() / 4.0).abs() < 1e-12);
}

fn probe_data(seed: u64, features: impl Fn(&crate::world::GameObject, &mut crate::rng::Rng) -> Vec<f64>) -> (QuestionSpace, Vec<ProbeExample>, Vec<ProbeExample>) {
    let cfg = WorldConfig {
        train_scenes: 300,
        val_scenes: 0,
        test_scenes: 150,
        nd_scenes: 0,
        od_scenes: 0,
        ..WorldConfig::default()
    };
    let vocab = generate_world(&cfg, seed).unwrap();
    let splits = build_splits(&vocab, &cfg, seed).unwrap();
    let space = QuestionSpace::from_vocab(&vocab);
    let mut rng = substream(seed, "features");
    let mut build = |scenes: &[crate::world::Scene]| -> Vec<ProbeExample> {
        scenes
            .iter()
            .flat_map(|s| s.objects.iter().map(move |o| (s, o)))
            .map(|(s, o)| ProbeExample {
                x: features(o, &mut rng),
                labels: probe_labels(&space, s, o),
            })
            .collect()
    };
    let train = build(&splits.train);
    let test = build(&splits.test);
    (space, train, test)
}

#[test]
fn location_is_recovered_from_spatial_features() {
    let (space, train, test) = probe_data(5, |o, _| o.s.clone());
    let (scores, _) = attribute_probe(&space, &train, &test, &ProbeConfig::default(), &mut substream(5, "p")).unwrap();
    assert!(scores.l_f1 >= 0.95, "{scores:?}");
}

#[test]
fn random_features_probe_at_chance() {
    let (space, train, test) =
        probe_data(6, |_, rng| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect());
    let (scores, groups) =
        attribute_probe(&space, &train, &test, &ProbeConfig::default(), &mut substream(6, "p")).unwrap();
    // Independent predictions with marginals q against labels with marginals p
    // have expected F1 2 p q / (p + q) per class.
    let chance = |members: &[ProbeGroup]| {
        let mut f = Vec::new();
        for r in groups.iter().filter(|r| members.contains(&r.group)) {
            let n = r.truth.len() as f64;
            for &(c, _) in &r.f1 {
                let p = r.truth.iter().filter(|&&t| t == c).count() as f64 / n;
                let q = r.predicted.iter().filter(|&&t| t == c).count() as f64 / n;
                f.push(if p + q > 0.0 { 2.0 * p * q / (p + q) } else { 0.0 });
            }
        }
        f.iter().sum::<f64>() / f.len() as f64
    };
    for (got, members) in [
        (scores.a_f1, ProbeGroup::ABSTRACT),
        (scores.s_f1, ProbeGroup::SITUATED),
        (scores.l_f1, ProbeGroup::LOCATION),
    ] {
        let c = chance(members);
        assert!((got - c).abs() < 0.08, "{got} vs chance {c}");
    }
}

#[test]
fn grolla_examples() {
    let c = |v: &[f64]| v.iter().enumerate().map(|(i, x)| (format!("c{i}"), *x)).collect::<Vec<_>>();
    assert_eq!(grolla(&c(&[0.5, 0.5, 0.5])).unwrap(), 0.5);
    assert_eq!(grolla(&c(&[1.0, 0.0])).unwrap(), 0.5);
    assert!(grolla(&[]).is_err());
    assert!(grolla(&c(&[1.5])).is_err());
}

#[test]
fn report_serialisation_and_comparison() {
    let mut a = MetricsReport::default();
    a.set("gameplay.test.accuracy", 0.5);
    a.set("dialogue.test.vocabulary_size", 40.0);
    a.note("grolla.label", "GroLLA-style macro average");
    a.validate().unwrap();
    assert_eq!(a.to_csv(), "metric,value\ndialogue.test.vocabulary_size,40\ngameplay.test.accuracy,0.5\n");
    let back: MetricsReport = serde_json::from_str(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);

    let zero = compare_reports(&[a.clone(), a.clone()]).unwrap();
    assert!(zero.iter().all(|(_, d)| d.iter().all(|x| *x == 0.0)));
    let mut b = a.clone();
    b.set("gameplay.test.accuracy", 0.75);
    let d = compare_reports(&[a.clone(), b]).unwrap();
    assert_eq!(d[1], ("gameplay.test.accuracy".to_string(), vec![0.25]));
    assert!(deltas_csv(&d).starts_with("metric,delta_1\n"));
    let mut other = MetricsReport::default();
    other.set("x", 0.1);
    assert!(compare_reports(&[a.clone(), other]).is_err());

    a.set("oracle.overall", 1.5);
    assert!(a.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn duplicating_a_game_never_raises_diversity(
        games in prop::collection::vec(prop::collection::vec((0usize..7, 0usize..5, 0usize..3), 1..6), 1..6),
        pick in 0usize..6,
    ) {
        let words = ["red", "cup", "left", "dog", "small", "round", "person"];
        let archive: Vec<ArchiveRecord> = games
            .iter()
            .map(|turns| {
                let t: Vec<(QType, usize, String, Answer)> = turns
                    .iter()
                    .map(|&(q, a, ans)| (QType::ALL[q], a, format!("is it {} {a}?", words[q]), Answer::ALL[ans]))
                    .collect();
                let refs: Vec<(QType, usize, &str, Answer)> = t.iter().map(|(q, a, s, ans)| (*q, *a, s.as_str(), *ans)).collect();
                record(&refs)
            })
            .collect();
        let before = dialogue_stats(&archive).unwrap();
        let mut doubled = archive.clone();
        doubled.push(archive[pick % archive.len()].clone());
        let after = dialogue_stats(&doubled).unwrap();
        prop_assert!(after.lexical_diversity <= before.lexical_diversity);
        prop_assert!(after.distinct_question_ratio <= before.distinct_question_ratio);
        prop_assert_eq!(after.vocabulary_size, before.vocabulary_size);
        for r in [after.lexical_diversity, after.repeated_question_rate, after.supercat_to_object_attr_rate,
                  after.object_to_attr_rate, after.location_turn_rate, after.distinct_question_ratio] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
