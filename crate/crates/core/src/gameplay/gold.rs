use rand::Rng;

use crate::guesser::{Dialogue, GuesserExample, Turn};
use crate::error::Result;
use crate::oracle::{ground_truth_answer, Answer, QType, QuestionSpace};
use crate::world::Scene;

/// Candidates of `candidates` for which `(qtype, argument)` has answer `answer`.
pub(crate) fn consistent(
    space: &QuestionSpace,
    scene: &Scene,
    candidates: &[usize],
    qtype: QType,
    argument: usize,
    answer: Answer,
) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| ground_truth_answer(space, scene, &scene.objects[i], qtype, argument) == answer)
        .collect()
}

/// Gold dialogue about object `target`: each turn asks the unasked question
/// that splits the remaining consistent candidates most evenly (ties by
/// question type order, then argument), until one candidate remains, no
/// question splits the set, or `max_turns` is reached. Surface variants are
/// drawn from `rng`.
pub fn synthesize_gold<R: Rng + ?Sized>(
    space: &QuestionSpace,
    scene: &Scene,
    target: usize,
    max_turns: usize,
    rng: &mut R,
) -> Result<Dialogue> {
    let mut dialogue = Dialogue::new(scene.scene_id.clone());
    let mut candidates: Vec<usize> = (0..scene.objects.len()).collect();
    let mut keys = space.askable_keys();
    let t = &scene.objects[target];
    while candidates.len() > 1 && dialogue.len() < max_turns {
        let mut best: Option<(usize, usize)> = None;
        for (k, &(qtype, argument)) in keys.iter().enumerate() {
            let yes = consistent(space, scene, &candidates, qtype, argument, Answer::Yes).len();
            let split = yes.min(candidates.len() - yes);
            if split > 0 && best.is_none_or(|(_, s)| split > s) {
                best = Some((k, split));
            }
        }
        let Some((k, _)) = best else { break };
        let (qtype, argument) = keys.remove(k);
        let answer = ground_truth_answer(space, scene, t, qtype, argument);
        candidates = consistent(space, scene, &candidates, qtype, argument, answer);
        let variant = rng.random_range(0..space.variants(qtype));
        dialogue.turns.push(Turn {
            question: space.question(qtype, argument, variant)?,
            answer,
        });
    }
    Ok(dialogue)
}

/// Candidates consistent with every turn of `dialogue` under ground truth.
pub fn consistent_candidates(space: &QuestionSpace, scene: &Scene, dialogue: &Dialogue) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scene.objects.len()).collect();
    for turn in &dialogue.turns {
        candidates = consistent(
            space,
            scene,
            &candidates,
            turn.question.qtype,
            turn.question.argument,
            turn.answer,
        );
    }
    candidates
}

/// Gold dialogues for every object of every scene (`all_objects`) or only
/// for each scene's designated target.
pub fn gold_examples<R: Rng + ?Sized>(
    space: &QuestionSpace,
    scenes: &[Scene],
    all_objects: bool,
    max_turns: usize,
    rng: &mut R,
) -> Result<Vec<GuesserExample>> {
    let mut out = Vec::new();
    for (s, scene) in scenes.iter().enumerate() {
        let targets: Vec<usize> = if all_objects {
            (0..scene.objects.len()).collect()
        } else {
            vec![scene.target]
        };
        for target in targets {
            out.push(GuesserExample {
                scene: s,
                target,
                dialogue: synthesize_gold(space, scene, target, max_turns, rng)?,
            });
        }
    }
    Ok(out)
}
