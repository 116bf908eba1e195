//! Track-level decisions from segment predictions.

use crate::audio::SEGMENTS_PER_TRACK;
use crate::error::{Error, Result};

use super::Prediction;

/// Majority vote over one track's segment predictions.
///
/// Ties between equally frequent labels go to the label with the largest
/// summed score over the segments, then to the lowest label index.
pub fn majority_vote(segments: &[Prediction]) -> Result<usize> {
    vote_with_count(segments, SEGMENTS_PER_TRACK)
}

/// As [`majority_vote`] with an explicit segment count.
pub fn vote_with_count(segments: &[Prediction], expected: usize) -> Result<usize> {
    if segments.len() != expected {
        return Err(Error::data(format!(
            "expected {expected} segment predictions, got {}",
            segments.len()
        )));
    }
    let num_labels = segments
        .iter()
        .map(|p| (p.label + 1).max(p.scores.len()))
        .max()
        .unwrap_or(0);
    let mut counts = vec![0usize; num_labels];
    let mut sums = vec![0.0; num_labels];
    for p in segments {
        counts[p.label] += 1;
        for (s, v) in sums.iter_mut().zip(&p.scores) {
            *s += v;
        }
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let mut best: Option<usize> = None;
    for c in (0..num_labels).filter(|&c| counts[c] == top) {
        match best {
            Some(b) if sums[c] <= sums[b] => {}
            _ => best = Some(c),
        }
    }
    best.ok_or_else(|| Error::data("no segment predictions to vote on"))
}
