use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gold::consistent;
use crate::error::{Error, Result};
use crate::guesser::{argmax_lowest, Dialogue, GuesserModel, Turn};
use crate::oracle::{ground_truth_answer, template_id, Answer, OracleModel, QType, Question, QuestionSpace};
use crate::rng::substream;
use crate::world::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Infogain,
    /// Uniformly random questions and a uniformly random final guess.
    Random,
    /// Replays a fixed question sequence.
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefSource {
    /// Running guesser probabilities.
    Guesser,
    /// Uniform over candidates consistent with the ground-truth answers seen so far.
    Consistency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionerPolicy {
    pub kind: PolicyKind,
    /// Refuse to re-ask a `(qtype, argument)` pair until all are exhausted.
    pub memory: bool,
    pub belief: BeliefSource,
    pub script: Vec<Question>,
}

impl QuestionerPolicy {
    pub fn infogain() -> Self {
        Self {
            kind: PolicyKind::Infogain,
            memory: true,
            belief: BeliefSource::Guesser,
            script: Vec::new(),
        }
    }

    pub fn random() -> Self {
        Self {
            kind: PolicyKind::Random,
            ..Self::infogain()
        }
    }

    pub fn scripted(script: Vec<Question>) -> Self {
        Self {
            kind: PolicyKind::Scripted,
            script,
            ..Self::infogain()
        }
    }
}

/// Who answers questions during self-play.
pub enum Answerer<'a> {
    Model(&'a OracleModel),
    GroundTruth,
}

impl Answerer<'_> {
    pub fn answer(&self, space: &QuestionSpace, q: &Question, scene: &Scene, target: usize) -> Result<Answer> {
        match self {
            Answerer::Model(m) => m.answer(space, q, scene, target),
            Answerer::GroundTruth => Ok(ground_truth_answer(
                space,
                scene,
                &scene.objects[target],
                q.qtype,
                q.argument,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConfig {
    pub max_turns: usize,
    pub stop_threshold: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            max_turns: 10,
            stop_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameResult {
    pub scene_id: String,
    pub target: usize,
    pub dialogue: Dialogue,
    pub predicted: usize,
    pub success: bool,
    /// Belief over candidates after each turn.
    pub beliefs: Vec<Vec<f64>>,
    /// Whether the stop threshold ended the game before `max_turns`.
    pub stopped_early: bool,
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Expected entropy reduction of `belief` from asking `(qtype, argument)`,
/// with each candidate answering under ground truth.
pub fn expected_information_gain(
    space: &QuestionSpace,
    scene: &Scene,
    belief: &[f64],
    qtype: QType,
    argument: usize,
) -> f64 {
    let mut mass = [0.0; 3];
    let mut split: [Vec<f64>; 3] = Default::default();
    for (i, o) in scene.objects.iter().enumerate() {
        let a = ground_truth_answer(space, scene, o, qtype, argument).index();
        mass[a] += belief[i];
        split[a].push(belief[i]);
    }
    let mut posterior = 0.0;
    for a in 0..3 {
        if mass[a] > 0.0 {
            let cond: Vec<f64> = split[a].iter().map(|b| b / mass[a]).collect();
            posterior += mass[a] * entropy(&cond);
        }
    }
    entropy(belief) - posterior
}

/// Next question of an infogain or random policy. Infogain ties (within
/// 1e-12) go to the lowest template id, then the lowest argument. When
/// memory leaves nothing unasked, the lowest-id question is repeated.
pub fn select_question<R: Rng + ?Sized>(
    policy: &QuestionerPolicy,
    space: &QuestionSpace,
    belief: &[f64],
    scene: &Scene,
    asked: &BTreeSet<(QType, usize)>,
    rng: &mut R,
) -> Result<Question> {
    if belief.len() != scene.objects.len() {
        return Err(Error::Shape("belief length differs from candidate count".into()));
    }
    let mut keys = space.askable_keys();
    if keys.is_empty() {
        return Err(Error::Config("no askable questions".into()));
    }
    keys.sort_by_key(|&(q, a)| (template_id(q, 0), a));
    let open: Vec<(QType, usize)> = keys
        .iter()
        .copied()
        .filter(|k| !(policy.memory && asked.contains(k)))
        .collect();
    let (qtype, argument) = if open.is_empty() {
        keys[0]
    } else {
        match policy.kind {
            PolicyKind::Random => *open.choose(rng).expect("non-empty"),
            _ => {
                let mut best = (open[0], f64::NEG_INFINITY);
                for &(q, a) in &open {
                    let gain = expected_information_gain(space, scene, belief, q, a);
                    if gain > best.1 + 1e-12 {
                        best = ((q, a), gain);
                    }
                }
                best.0
            }
        }
    };
    let variant = rng.random_range(0..space.variants(qtype));
    space.question(qtype, argument, variant)
}

pub(crate) fn consistency_belief(space: &QuestionSpace, scene: &Scene, dialogue: &Dialogue) -> Vec<f64> {
    let mut candidates: Vec<usize> = (0..scene.objects.len()).collect();
    for t in &dialogue.turns {
        let next = consistent(space, scene, &candidates, t.question.qtype, t.question.argument, t.answer);
        if !next.is_empty() {
            candidates = next;
        }
    }
    let mut b = vec![0.0; scene.objects.len()];
    for &i in &candidates {
        b[i] = 1.0 / candidates.len() as f64;
    }
    b
}

/// One self-play game about object `target` of `scene`.
pub fn play_game<R: Rng + ?Sized>(
    space: &QuestionSpace,
    scene: &Scene,
    target: usize,
    answerer: &Answerer,
    guesser: &GuesserModel,
    policy: &QuestionerPolicy,
    config: &GameConfig,
    rng: &mut R,
) -> Result<GameResult> {
    let n = scene.objects.len();
    let max_turns = config.max_turns.min(guesser.max_turns());
    let mut dialogue = Dialogue::new(scene.scene_id.clone());
    let mut belief = vec![1.0 / n as f64; n];
    let mut beliefs = Vec::new();
    let mut asked = BTreeSet::new();
    let mut stopped_early = false;
    let embeddings = guesser.object_embeddings(scene)?;
    let guesser_belief = |d: &Dialogue| -> Result<Vec<f64>> {
        let h = guesser.encode_dialogue(space, d)?;
        let logits: Vec<f64> = embeddings
            .iter()
            .map(|g| g.iter().zip(&h).map(|(a, b)| a * b).sum())
            .collect();
        Ok(crate::numerics::softmax(&logits))
    };
    let mut guess_probs = belief.clone();
    while dialogue.len() < max_turns {
        let question = match policy.kind {
            PolicyKind::Scripted => match policy.script.get(dialogue.len()) {
                Some(q) => q.clone(),
                None => break,
            },
            _ => select_question(policy, space, &belief, scene, &asked, rng)?,
        };
        let answer = answerer.answer(space, &question, scene, target)?;
        asked.insert(question.key());
        dialogue.turns.push(Turn { question, answer });
        guess_probs = guesser_belief(&dialogue)?;
        belief = match policy.belief {
            BeliefSource::Guesser => guess_probs.clone(),
            BeliefSource::Consistency => consistency_belief(space, scene, &dialogue),
        };
        beliefs.push(belief.clone());
        if belief.iter().cloned().fold(0.0, f64::max) > config.stop_threshold && dialogue.len() < max_turns {
            stopped_early = true;
            break;
        }
    }
    let predicted = match policy.kind {
        PolicyKind::Random => rng.random_range(0..n),
        _ => argmax_lowest(&guess_probs),
    };
    Ok(GameResult {
        scene_id: scene.scene_id.clone(),
        target,
        dialogue,
        predicted,
        success: predicted == target,
        beliefs,
        stopped_early,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameplayEval {
    pub accuracy: f64,
    pub per_seed: Vec<f64>,
    pub games: Vec<GameResult>,
}

/// One game per scene (its designated target) for every seed. Each game draws
/// from its own substream keyed by seed and scene id, so results do not
/// depend on evaluation order.
pub fn evaluate_gameplay(
    space: &QuestionSpace,
    scenes: &[Scene],
    answerer: &Answerer,
    guesser: &GuesserModel,
    policy: &QuestionerPolicy,
    config: &GameConfig,
    seeds: &[u64],
) -> Result<GameplayEval> {
    if scenes.is_empty() {
        return Err(Error::Validation("gameplay evaluation needs scenes".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("gameplay evaluation needs at least one seed".into()));
    }
    let mut games = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in seeds {
        let mut wins = 0usize;
        for scene in scenes {
            let mut rng = substream(seed, &format!("eval.game.{}", scene.scene_id));
            let g = play_game(space, scene, scene.target, answerer, guesser, policy, config, &mut rng)?;
            wins += usize::from(g.success);
            games.push(g);
        }
        per_seed.push(wins as f64 / scenes.len() as f64);
    }
    let accuracy = games.iter().filter(|g| g.success).count() as f64 / games.len() as f64;
    Ok(GameplayEval {
        accuracy,
        per_seed,
        games,
    })
}

/// One archived turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveTurn {
    pub qtype: QType,
    pub argument: usize,
    pub text: String,
    pub answer: Answer,
}

/// One archived game, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub scene_id: String,
    pub turns: Vec<ArchiveTurn>,
    pub predicted: usize,
    pub target: usize,
    pub success: bool,
}

impl From<&GameResult> for ArchiveRecord {
    fn from(g: &GameResult) -> Self {
        Self {
            scene_id: g.scene_id.clone(),
            turns: g
                .dialogue
                .turns
                .iter()
                .map(|t| ArchiveTurn {
                    qtype: t.question.qtype,
                    argument: t.question.argument,
                    text: t.question.text.clone(),
                    answer: t.answer,
                })
                .collect(),
            predicted: g.predicted,
            target: g.target,
            success: g.success,
        }
    }
}

pub fn write_archive(path: &Path, records: &[ArchiveRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Encoding(e.to_string()))?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

pub fn read_archive(path: &Path) -> Result<Vec<ArchiveRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
