use super::*;
use crate::gameplay::gold_examples;
use crate::imagination::ImaginationConfig;
use crate::numerics::gradcheck;
use crate::oracle::QType;
use crate::rng::substream;
use crate::world::{build_splits, generate_world, CategoryVocabulary, Splits, WorldConfig};
use proptest::prelude::*;

fn tiny_world(seed: u64) -> (CategoryVocabulary, Splits, QuestionSpace) {
    let cfg = WorldConfig {
        train_scenes: 20,
        val_scenes: 5,
        test_scenes: 0,
        nd_scenes: 0,
        od_scenes: 5,
        ..WorldConfig::default()
    };
    let vocab = generate_world(&cfg, seed).unwrap();
    let splits = build_splits(&vocab, &cfg, seed).unwrap();
    let space = QuestionSpace::from_vocab(&vocab);
    (vocab, splits, space)
}

fn dims(space: &QuestionSpace, state_dim: usize) -> GuesserDims {
    GuesserDims {
        question_dim: space.encoding_dim(),
        state_dim,
        category_dim: 4,
        max_turns: 10,
    }
}

fn classifier(vocab: &CategoryVocabulary, seed: u64) -> CategoryClassifier {
    let mut rng = substream(seed, "clf");
    CategoryClassifier {
        net: DenseNet::glorot(&[32, 8, vocab.in_domain.len()], Activation::Relu, Activation::Softmax, &mut rng)
            .unwrap(),
        classes: vocab.in_domain.clone(),
    }
}

fn model(mode: ReprMode, seed: u64, state_dim: usize) -> (CategoryVocabulary, Splits, QuestionSpace, GuesserModel) {
    let (vocab, splits, space) = tiny_world(seed);
    let mut rng = substream(seed, "guesser");
    let img = ImaginationModel::new(
        32,
        &ImaginationConfig {
            latent_dim: 4,
            hidden: 6,
            ..ImaginationConfig::default()
        },
        None,
        &mut rng,
    )
    .unwrap();
    let m = GuesserModel::new(
        mode,
        dims(&space, state_dim),
        &vocab.in_domain,
        Some(img),
        Some(classifier(&vocab, seed)),
        &mut rng,
    )
    .unwrap();
    (vocab, splits, space, m)
}

fn turn(space: &QuestionSpace, qtype: QType, argument: usize, answer: Answer) -> Turn {
    Turn {
        question: space.question(qtype, argument, 0).unwrap(),
        answer,
    }
}

#[test]
fn mode_names_round_trip() {
    for m in ReprMode::ALL {
        assert_eq!(ReprMode::parse(m.name()).unwrap(), m);
    }
    assert!(matches!(ReprMode::parse("label"), Err(Error::Config(_))));
}

#[test]
fn construction_requires_attachments() {
    let (vocab, _, space) = tiny_world(0);
    let mut rng = substream(0, "g");
    let d = dims(&space, 8);
    assert!(GuesserModel::new(ReprMode::Imagination, d, &vocab.in_domain, None, None, &mut rng).is_err());
    assert!(GuesserModel::new(ReprMode::Predcat, d, &vocab.in_domain, None, None, &mut rng).is_err());
    assert!(GuesserModel::new(ReprMode::Nocat, d, &vocab.in_domain, None, None, &mut rng).is_ok());
}

#[test]
fn representation_lengths_follow_the_mode() {
    for (mode, len) in [
        (ReprMode::Category, 12),
        (ReprMode::Nocat, 8),
        (ReprMode::Predcat, 12),
        (ReprMode::Imagination, 12),
    ] {
        let (_, splits, _, m) = model(mode, 1, 8);
        let o = &splits.train[0].objects[0];
        assert_eq!(m.object_representation(o).unwrap().len(), len, "{}", mode.name());
    }
}

#[test]
fn unseen_categories_share_the_unk_row_in_category_mode() {
    let (vocab, splits, _, m) = model(ReprMode::Category, 2, 8);
    let unseen: Vec<&GameObject> = splits
        .od_test
        .iter()
        .flat_map(|s| &s.objects)
        .filter(|o| !vocab.in_domain.contains(&o.category))
        .collect();
    assert!(unseen.len() >= 2);
    let table = m.category_table.as_ref().unwrap();
    for o in unseen {
        let r = m.object_representation(o).unwrap();
        assert_eq!(&r[..4], table.unk());
        assert_eq!(&r[4..], o.s.as_slice());
    }
}

#[test]
fn predcat_matches_category_where_the_classifier_is_right() {
    let (_, splits, _, mut cat) = model(ReprMode::Category, 3, 8);
    let (_, _, _, pred) = model(ReprMode::Predcat, 3, 8);
    cat.category_table = pred.category_table.clone();
    let clf = pred.classifier.as_ref().unwrap();
    let mut checked = 0;
    for o in splits.train.iter().flat_map(|s| &s.objects) {
        if clf.predict(&o.v).unwrap() == o.category {
            assert_eq!(pred.object_representation(o).unwrap(), cat.object_representation(o).unwrap());
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn single_turn_state_is_the_weighted_encoding() {
    let (_, _, space, mut m) = model(ReprMode::Nocat, 4, 8);
    m.position_weights[0] = 1.7;
    let t = turn(&space, QType::Color, 2, Answer::Yes);
    let d = Dialogue {
        scene_id: "s".into(),
        turns: vec![t.clone()],
    };
    let e = m.turn_encoder.forward(&GuesserModel::turn_input(&space, &t).unwrap()).unwrap();
    let h = m.encode_dialogue(&space, &d).unwrap();
    for (a, b) in h.iter().zip(&e) {
        assert_eq!(*a, 1.7 * b);
    }
    assert_eq!(h, m.encode_dialogue(&space, &d.clone()).unwrap());
}

#[test]
fn turn_order_matters_when_position_weights_differ() {
    let (_, _, space, mut m) = model(ReprMode::Nocat, 5, 8);
    let a = turn(&space, QType::Color, 0, Answer::Yes);
    let b = turn(&space, QType::Location, 1, Answer::No);
    let fwd = Dialogue {
        scene_id: "s".into(),
        turns: vec![a.clone(), b.clone()],
    };
    let rev = Dialogue {
        scene_id: "s".into(),
        turns: vec![b, a],
    };
    assert_eq!(m.encode_dialogue(&space, &fwd).unwrap(), m.encode_dialogue(&space, &rev).unwrap());
    m.position_weights[1] = 0.5;
    // Direct evaluation: h = (w1 e_a + w2 e_b) / 2 against (w1 e_b + w2 e_a) / 2.
    let ea = m.turn_encoder.forward(&GuesserModel::turn_input(&space, &fwd.turns[0]).unwrap()).unwrap();
    let eb = m.turn_encoder.forward(&GuesserModel::turn_input(&space, &fwd.turns[1]).unwrap()).unwrap();
    let expect: Vec<f64> = ea.iter().zip(&eb).map(|(x, y)| (x + 0.5 * y) / 2.0).collect();
    let h = m.encode_dialogue(&space, &fwd).unwrap();
    for (p, q) in h.iter().zip(&expect) {
        assert!((p - q).abs() < 1e-12);
    }
    assert_ne!(h, m.encode_dialogue(&space, &rev).unwrap());
}

#[test]
fn dialogue_length_is_validated() {
    let (_, _, space, m) = model(ReprMode::Nocat, 6, 8);
    let empty = Dialogue::new("s");
    assert!(matches!(m.encode_dialogue(&space, &empty), Err(Error::Validation(_))));
    let long = Dialogue {
        scene_id: "s".into(),
        turns: vec![turn(&space, QType::Size, 0, Answer::No); 11],
    };
    assert!(matches!(m.encode_dialogue(&space, &long), Err(Error::Validation(_))));
}

#[test]
fn scoring_properties() {
    let (_, splits, space, m) = model(ReprMode::Imagination, 7, 8);
    let mut scene = splits.train[0].clone();
    let d = Dialogue {
        scene_id: scene.scene_id.clone(),
        turns: vec![turn(&space, QType::Color, 1, Answer::Yes)],
    };
    let h = m.encode_dialogue(&space, &d).unwrap();
    let p = m.score_candidates(&h, &scene).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let scaled: Vec<f64> = h.iter().map(|x| 3.5 * x).collect();
    assert_eq!(argmax_lowest(&p), argmax_lowest(&m.score_candidates(&scaled, &scene).unwrap()));

    scene.objects[1] = scene.objects[0].clone();
    let p = m.score_candidates(&h, &scene).unwrap();
    assert_eq!(p[0], p[1]);
    assert!(matches!(m.score_candidates(&h[..3], &scene), Err(Error::Shape(_))));
    scene.objects.truncate(1);
    assert!(m.score_candidates(&h, &scene).is_err());
}

#[test]
fn ties_go_to_the_lowest_index() {
    assert_eq!(argmax_lowest(&[0.2, 0.4, 0.4]), 1);
    assert_eq!(argmax_lowest(&[0.5, 0.5]), 0);
}

#[test]
fn scene_loss_gradients_match_finite_differences() {
    for mode in [ReprMode::Category, ReprMode::Imagination, ReprMode::Nocat] {
        for seed in 0..20u64 {
            let (_, splits, space, mut m) = model(mode, seed, 5);
            for w in m.position_weights.iter_mut().enumerate() {
                *w.1 = 1.0 + 0.1 * w.0 as f64;
            }
            let scene = &splits.train[seed as usize % splits.train.len()];
            let examples = gold_examples(&space, std::slice::from_ref(scene), true, 10, &mut substream(seed, "gold"))
                .unwrap();
            let items: Vec<(&Dialogue, usize)> = examples.iter().map(|e| (&e.dialogue, e.target)).collect();
            let mut grads = vec![0.0; m.num_flat_params()];
            guesser_scene_loss(&m, &space, scene, &items, &mut grads).unwrap();
            let params = m.flat_params();
            let mut probe = m.clone();
            let report = gradcheck(
                |p| {
                    probe.set_flat_params(p).unwrap();
                    let mut g = vec![0.0; p.len()];
                    guesser_scene_loss(&probe, &space, scene, &items, &mut g).unwrap()
                },
                &params,
                &grads,
                1e-5,
                1e-4,
            );
            assert!(report.passes(1e-4), "{} seed {seed}: {report:?}", mode.name());
            m.set_flat_params(&params).unwrap();
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (_, splits, space, mut m) = model(ReprMode::Category, 8, 8);
    let examples = gold_examples(&space, &splits.train, true, 10, &mut substream(8, "gold")).unwrap();
    let before = m.flat_params();
    let cfg = GuesserConfig {
        lr: 0.0,
        epochs: 2,
        ..GuesserConfig::default()
    };
    let curve = train_guesser(
        &mut m,
        &space,
        (&splits.train, &examples),
        (&splits.train, &examples),
        &cfg,
        &mut substream(8, "t"),
    )
    .unwrap();
    assert_eq!(curve.epochs.len(), 2);
    assert_eq!(m.flat_params(), before);
}

#[test]
fn checkpoint_round_trip_and_dependency() {
    for mode in ReprMode::ALL {
        let (_, _, _, m) = model(mode, 9, 8);
        let ck = Checkpoint::from_bytes(&m.to_checkpoint().to_bytes().unwrap()).unwrap();
        assert_eq!(ck.kind, format!("guesser:{}", mode.name()));
        let back = GuesserModel::from_checkpoint(&ck, m.imagination.clone()).unwrap();
        assert_eq!(back, m);
        if mode == ReprMode::Imagination {
            assert!(matches!(GuesserModel::from_checkpoint(&ck, None), Err(Error::Dependency(_))));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn candidate_permutation_permutes_probabilities(seed in 0u64..1000, rot in 1usize..10) {
        let (_, splits, space, m) = model(ReprMode::Imagination, seed % 5, 8);
        let scene = &splits.train[(seed as usize) % splits.train.len()];
        let d = Dialogue {
            scene_id: scene.scene_id.clone(),
            turns: vec![turn(&space, QType::Location, (seed % 5) as usize, Answer::Yes)],
        };
        let h = m.encode_dialogue(&space, &d).unwrap();
        let p = m.score_candidates(&h, scene).unwrap();
        let mut permuted = scene.clone();
        let k = rot % scene.objects.len();
        permuted.objects.rotate_left(k);
        let q = m.score_candidates(&h, &permuted).unwrap();
        for i in 0..p.len() {
            prop_assert!((q[i] - p[(i + k) % p.len()]).abs() < 1e-12);
        }
    }
}
