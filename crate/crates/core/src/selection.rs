//! Greedy selection of representative possible worlds.
//!
//! The representative loss of a representative set against a pool is the
//! sum, over pool members, of each member's divergence to its closest
//! representative. Selection proceeds greedily: at every step the
//! candidate whose promotion minimizes the loss of the enlarged set over
//! the shrunken pool is moved into the representative set. The very first
//! step therefore picks the most central world. Ties break toward the
//! lowest world index so runs are reproducible.

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceMatrix;
use crate::error::{Error, Result};

/// One greedy step: which world was chosen and the loss of the
/// representative set over the remaining pool right after the move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub step: usize,
    pub chosen: usize,
    pub loss: f64,
}

/// Evolving partition of the ensemble into representatives and pool, with
/// each pool member's cached minimum divergence to the representatives.
#[derive(Debug)]
pub struct SelectionState<'a> {
    divergences: &'a DivergenceMatrix,
    representatives: Vec<usize>,
    remaining: Vec<usize>,
    min_to_reps: Vec<f64>,
}

impl<'a> SelectionState<'a> {
    pub fn new(divergences: &'a DivergenceMatrix) -> Self {
        let m = divergences.len();
        SelectionState {
            divergences,
            representatives: Vec::new(),
            remaining: (0..m).collect(),
            min_to_reps: vec![f64::INFINITY; m],
        }
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    /// Performs one greedy step and returns its trace entry.
    ///
    /// For candidate u the scored loss is
    /// `Σ_{v ∈ pool, v ≠ u} min(minDiv[v], D[u][v])`, where `minDiv[v]`
    /// is v's current best divergence to the representative set (infinite
    /// while the set is empty, which reduces the first step to plain
    /// centrality).
    pub fn step(&mut self) -> Result<SelectionStep> {
        if self.remaining.is_empty() {
            return Err(Error::InvalidArgument(
                "no candidates left to select".into(),
            ));
        }
        let mut best: Option<(f64, usize)> = None;
        for &u in &self.remaining {
            let mut loss = 0.0;
            for &v in &self.remaining {
                if v == u {
                    continue;
                }
                loss += self.min_to_reps[v].min(self.divergences.get(u, v));
            }
            // Strict improvement keeps the lowest index on ties; remaining
            // is kept sorted ascending.
            if best.is_none_or(|(b, _)| loss < b) {
                best = Some((loss, u));
            }
        }
        let (loss, chosen) = best.unwrap();
        self.representatives.push(chosen);
        self.remaining.retain(|&v| v != chosen);
        for &v in &self.remaining {
            let d = self.divergences.get(chosen, v);
            if d < self.min_to_reps[v] {
                self.min_to_reps[v] = d;
            }
        }
        Ok(SelectionStep {
            step: self.representatives.len(),
            chosen,
            loss,
        })
    }
}

/// Representative loss of `reps` over `pool`: the sum over pool members of
/// the minimum divergence to any representative. An empty pool has loss 0;
/// an empty representative set is rejected because the inner minimum is
/// undefined.
pub fn representative_loss(
    divergences: &DivergenceMatrix,
    reps: &[usize],
    pool: &[usize],
) -> Result<f64> {
    if reps.is_empty() {
        return Err(Error::EmptyRepresentatives);
    }
    let m = divergences.len();
    if let Some(&bad) = reps.iter().chain(pool.iter()).find(|&&i| i >= m) {
        return Err(Error::InvalidArgument(format!(
            "world index {bad} out of range for {m} worlds"
        )));
    }
    let mut total = 0.0;
    for &v in pool {
        let nearest = reps
            .iter()
            .map(|&r| divergences.get(r, v))
            .fold(f64::INFINITY, f64::min);
        total += nearest;
    }
    Ok(total)
}

/// Greedily selects `r` representative world indices, in selection order.
pub fn select_representatives(divergences: &DivergenceMatrix, r: usize) -> Result<Vec<usize>> {
    Ok(select_representatives_traced(divergences, r)?.0)
}

/// As [`select_representatives`], also returning the per-step trace.
pub fn select_representatives_traced(
    divergences: &DivergenceMatrix,
    r: usize,
) -> Result<(Vec<usize>, Vec<SelectionStep>)> {
    let m = divergences.len();
    if r == 0 || r > m {
        return Err(Error::RepresentativeCount {
            requested: r,
            available: m,
        });
    }
    let mut state = SelectionState::new(divergences);
    let mut trace = Vec::with_capacity(r);
    for _ in 0..r {
        trace.push(state.step()?);
    }
    let reps = state.representatives().to_vec();
    Ok((reps, trace))
}
