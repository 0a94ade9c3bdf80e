//! Restoring signed phases from ellipse fits that only return |delta phi| in [0, pi].

use serde::Serialize;
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Unfolded {
    pub values: Vec<Option<f64>>,
    /// Indices where the two best branch candidates were nearly equidistant from the prediction.
    pub ambiguous: Vec<usize>,
}

/// Margin (rad) under which a branch choice is reported as ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.05;

fn choose(folded: f64, prediction: f64) -> (f64, bool) {
    let mut cands: Vec<f64> = Vec::with_capacity(6);
    for k in [-1.0, 0.0, 1.0] {
        cands.push(folded + k * TAU);
        cands.push(-folded + k * TAU);
    }
    cands.sort_by(|a, b| {
        (a - prediction).abs().partial_cmp(&(b - prediction).abs()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let best = cands[0];
    let second = cands.iter().copied().find(|c| (c - best).abs() > 1e-12).unwrap_or(best);
    let ambiguous = ((second - prediction).abs() - (best - prediction).abs()) < AMBIGUITY_MARGIN;
    (best, ambiguous)
}

/// Walk outward from `anchor`, picking for each point the branch `+-folded + 2 pi k`
/// closest to a linear extrapolation of the two previous restored values.
///
/// Missing points (`None`) are skipped; the extrapolation spans the gap in index.
pub fn restore_signs(folded: &[Option<f64>], anchor: usize, anchor_sign: f64) -> Unfolded {
    let n = folded.len();
    let mut values = vec![None; n];
    let mut ambiguous = Vec::new();
    if anchor >= n {
        return Unfolded { values, ambiguous };
    }
    if let Some(y) = folded[anchor] {
        values[anchor] = Some(if anchor_sign < 0.0 { -y } else { y });
    }
    for dir in [1isize, -1] {
        let mut history: Vec<(f64, f64)> = values[anchor].map(|v| (anchor as f64, v)).into_iter().collect();
        let mut i = anchor as isize + dir;
        while i >= 0 && (i as usize) < n {
            let idx = i as usize;
            if let Some(y) = folded[idx] {
                let (v, amb) = match history.len() {
                    0 => (if anchor_sign < 0.0 { -y } else { y }, false),
                    1 => choose(y, history[0].1),
                    k => {
                        let ((i0, v0), (i1, v1)) = (history[k - 2], history[k - 1]);
                        choose(y, v1 + (v1 - v0) / (i1 - i0) * (idx as f64 - i1))
                    }
                };
                if amb {
                    ambiguous.push(idx);
                }
                values[idx] = Some(v);
                history.push((idx as f64, v));
            }
            i += dir;
        }
    }
    ambiguous.sort_unstable();
    Unfolded { values, ambiguous }
}

/// Fold a signed phase into [0, pi] the way the ellipse fit reports it.
pub fn fold(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r > PI {
        TAU - r
    } else {
        r
    }
}
