//! Frame scoring: best-permutation matching with a circular tolerance.

use serde::{Deserialize, Serialize};

use crate::array_model::{circular_distance, wrap_deg};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub correct: bool,
    /// Matched error for each true DOA, in truth order.
    pub errors: Vec<f64>,
    /// `assignment[t]` is the estimate matched to truth `t`.
    pub assignment: Vec<usize>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn best_assignment(truth: &[f64], est: &[f64], dist: impl Fn(f64, f64) -> f64) -> (Vec<usize>, Vec<f64>) {
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut perms = permutations(truth.len());
    perms.sort();
    for p in perms {
        let errors: Vec<f64> = truth.iter().zip(&p).map(|(&t, &i)| dist(t, est[i])).collect();
        let total: f64 = errors.iter().sum();
        if best.as_ref().is_none_or(|(b, _, _)| total < *b) {
            best = Some((total, p, errors));
        }
    }
    let (_, p, e) = best.expect("at least one permutation");
    (p, e)
}

/// Matches estimates to truths by the assignment with the least summed
/// circular error; correct iff every matched error is within `tolerance`
/// degrees (inclusive).
pub fn score_frame(truth: &[f64], est: &[f64], tolerance: f64) -> Result<FrameScore> {
    if truth.len() != est.len() {
        return Err(Error::CountMismatch { truth: truth.len(), estimated: est.len() });
    }
    let (assignment, errors) = best_assignment(truth, est, circular_distance);
    let correct = errors.iter().all(|&e| e <= tolerance);
    Ok(FrameScore { correct, errors, assignment })
}

/// Mirror image about the interaural axis.
pub fn front_back_mirror(theta: f64) -> f64 {
    wrap_deg(180.0 - theta)
}

/// An incorrect frame that would be correct if estimates could be replaced
/// by their front-back mirror images.
pub fn is_front_back_confusion(truth: &[f64], est: &[f64], tolerance: f64) -> bool {
    if truth.len() != est.len() || score_frame(truth, est, tolerance).is_ok_and(|s| s.correct) {
        return false;
    }
    let folded = |t: f64, e: f64| circular_distance(t, e).min(circular_distance(t, front_back_mirror(e)));
    let (_, errors) = best_assignment(truth, est, folded);
    errors.iter().all(|&e| e <= tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let s = score_frame(&[-30.0, 20.0], &[-30.0, 25.0], 5.0).unwrap();
        assert!(s.correct);
        assert_eq!(s.errors, vec![0.0, 5.0]);
        assert!(score_frame(&[-30.0, 20.0], &[20.0, -30.0], 5.0).unwrap().correct);
        let exact = score_frame(&[10.0, 50.0], &[10.0, 50.0], 5.0).unwrap();
        assert_eq!(exact.errors, vec![0.0, 0.0]);
        assert!(!score_frame(&[10.0, 50.0], &[10.0, 60.0], 5.0).unwrap().correct);
        assert!(score_frame(&[-180.0, 175.0], &[175.0, -180.0], 5.0).unwrap().correct);
        assert!(matches!(score_frame(&[1.0], &[1.0, 2.0], 5.0), Err(Error::CountMismatch { .. })));
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn front_back() {
        assert_eq!(front_back_mirror(30.0), 150.0);
        assert_eq!(front_back_mirror(-60.0), -120.0);
        assert!(is_front_back_confusion(&[30.0, -60.0], &[150.0, -60.0], 5.0));
        assert!(!is_front_back_confusion(&[30.0, -60.0], &[30.0, -60.0], 5.0));
        assert!(!is_front_back_confusion(&[30.0, -60.0], &[100.0, -60.0], 5.0));
    }

    proptest! {
        #[test]
        fn permutation_invariant(t in proptest::collection::vec(-180.0f64..180.0, 3), e in proptest::collection::vec(-180.0f64..180.0, 3)) {
            let base = score_frame(&t, &e, 5.0).unwrap();
            let e2 = vec![e[2], e[0], e[1]];
            let t2 = vec![t[1], t[2], t[0]];
            prop_assert_eq!(base.correct, score_frame(&t, &e2, 5.0).unwrap().correct);
            prop_assert_eq!(base.correct, score_frame(&t2, &e, 5.0).unwrap().correct);
            let sum = |s: &FrameScore| s.errors.iter().sum::<f64>();
            prop_assert!((sum(&base) - sum(&score_frame(&t2, &e2, 5.0).unwrap())).abs() < 1e-9);
        }

        #[test]
        fn improving_an_estimate_never_hurts(t in proptest::collection::vec(-180.0f64..180.0, 2), e in proptest::collection::vec(-180.0f64..180.0, 2), i in 0usize..2) {
            let before = score_frame(&t, &e, 5.0).unwrap().correct;
            let mut better = e.clone();
            // replace estimate i by the truth it is matched with
            let s = score_frame(&t, &e, 5.0).unwrap();
            let ti = s.assignment.iter().position(|&a| a == i).unwrap();
            better[i] = t[ti];
            prop_assert!(score_frame(&t, &better, 5.0).unwrap().correct >= before);
        }
    }
}
