use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Guesser,
    Support,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub epoch: usize,
    pub objective: Objective,
    pub loss: f64,
}

/// Objective of each 1-based epoch: the guesser on every `n`-th epoch, the
/// support objectives otherwise.
pub fn modulo_n_schedule(n: usize, epochs: usize) -> Result<Vec<Objective>> {
    if n < 1 {
        return Err(Error::Config("modulo-n period must be at least 1".into()));
    }
    Ok((1..=epochs)
        .map(|e| if e % n == 0 { Objective::Guesser } else { Objective::Support })
        .collect())
}

/// Runs the schedule, calling `guesser_epoch` or `support_epoch` with the
/// epoch number; each returns that epoch's training loss.
pub fn modulo_n_train<G, S>(
    n: usize,
    epochs: usize,
    mut guesser_epoch: G,
    mut support_epoch: S,
) -> Result<Vec<ScheduleEntry>>
where
    G: FnMut(usize) -> Result<f64>,
    S: FnMut(usize) -> Result<f64>,
{
    modulo_n_schedule(n, epochs)?
        .into_iter()
        .enumerate()
        .map(|(k, objective)| {
            let epoch = k + 1;
            let loss = match objective {
                Objective::Guesser => guesser_epoch(epoch)?,
                Objective::Support => support_epoch(epoch)?,
            };
            Ok(ScheduleEntry { epoch, objective, loss })
        })
        .collect()
}
