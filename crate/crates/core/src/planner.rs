//! Per-segment view selection, motion-constrained trajectory stitching and
//! top-N highlight selection.

use serde::{Deserialize, Serialize};

use crate::scoremap::{argmax_candidate, WindowCandidate};
use crate::sphere_geom::longitude_gap;

/// Per-axis bound on viewpoint motion between consecutive segments, degrees.
pub const DEFAULT_MOTION_LIMIT: f64 = 30.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlanError {
    #[error("no segments to plan")]
    NoSegments,
    #[error("segment {0} has no candidates")]
    NoCandidates(usize),
    #[error("segment {segment}: candidate {index} has a non-finite score")]
    NonFinite { segment: usize, index: usize },
    #[error("no candidate pair between segments {from} and {to} satisfies the motion bound")]
    Infeasible { from: usize, to: usize },
    #[error("motion limit must be a non-negative number, got {0}")]
    InvalidLimit(f64),
    #[error("requested {requested} highlights from a trajectory of {available} segments")]
    TooManyHighlights { requested: usize, available: usize },
}

pub type Result<T, E = PlanError> = std::result::Result<T, E>;

/// Scored candidate views of one segment, in scan order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentCandidates {
    pub segment: usize,
    pub candidates: Vec<WindowCandidate>,
}

impl SegmentCandidates {
    pub fn new(segment: usize, candidates: Vec<WindowCandidate>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(PlanError::NoCandidates(segment));
        }
        if let Some(index) = candidates.iter().position(|c| !c.score.is_finite()) {
            return Err(PlanError::NonFinite { segment, index });
        }
        Ok(Self {
            segment,
            candidates,
        })
    }

    /// Keeps the `m` best candidates, preserving scan order among them.
    pub fn top(&self, m: usize) -> Self {
        let mut idx: Vec<usize> = (0..self.candidates.len()).collect();
        idx.sort_by(|&a, &b| {
            self.candidates[b]
                .score
                .total_cmp(&self.candidates[a].score)
                .then(a.cmp(&b))
        });
        idx.truncate(m.max(1));
        idx.sort_unstable();
        Self {
            segment: self.segment,
            candidates: idx.into_iter().map(|i| self.candidates[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub segment: usize,
    /// index into that segment's candidate list
    pub index: usize,
    pub view: WindowCandidate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub total: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Whether every consecutive pair satisfies the motion bound.
    pub fn is_smooth(&self, motion_limit: f64) -> bool {
        self.steps
            .windows(2)
            .all(|w| within_motion(&w[0].view, &w[1].view, motion_limit))
    }
}

/// `|dtheta| <= limit` and wrapped `|dphi| <= limit`.
pub fn within_motion(a: &WindowCandidate, b: &WindowCandidate, limit: f64) -> bool {
    (a.center.theta() - b.center.theta()).abs() <= limit
        && longitude_gap(a.center.phi(), b.center.phi()) <= limit
}

fn check_segments(segments: &[SegmentCandidates]) -> Result<()> {
    if segments.is_empty() {
        return Err(PlanError::NoSegments);
    }
    for (t, s) in segments.iter().enumerate() {
        if s.candidates.is_empty() {
            return Err(PlanError::NoCandidates(t));
        }
        if let Some(index) = s.candidates.iter().position(|c| !c.score.is_finite()) {
            return Err(PlanError::NonFinite { segment: t, index });
        }
    }
    Ok(())
}

fn build(segments: &[SegmentCandidates], picks: &[usize]) -> Trajectory {
    let steps: Vec<TrajectoryStep> = segments
        .iter()
        .zip(picks)
        .map(|(s, &i)| TrajectoryStep {
            segment: s.segment,
            index: i,
            view: s.candidates[i].clone(),
        })
        .collect();
    let total = steps.iter().fold(0.0, |acc, s| acc + s.view.score);
    Trajectory { steps, total }
}

/// Exact maximum-total-score path through the candidate sets subject to the
/// motion bound. Ties go to the earliest candidate in scan order.
pub fn stitch_trajectory(segments: &[SegmentCandidates], motion_limit: f64) -> Result<Trajectory> {
    if !(motion_limit >= 0.0) {
        return Err(PlanError::InvalidLimit(motion_limit));
    }
    check_segments(segments)?;
    let mut best: Vec<Option<f64>> = segments[0].candidates.iter().map(|c| Some(c.score)).collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; best.len()]];
    for t in 1..segments.len() {
        let prev = &segments[t - 1].candidates;
        let cur = &segments[t].candidates;
        let mut next = vec![None; cur.len()];
        let mut from = vec![0; cur.len()];
        for (j, c) in cur.iter().enumerate() {
            let mut top: Option<(f64, usize)> = None;
            for (i, p) in prev.iter().enumerate() {
                let Some(acc) = best[i] else { continue };
                if !within_motion(p, c, motion_limit) {
                    continue;
                }
                if top.is_none_or(|(v, _)| acc > v) {
                    top = Some((acc, i));
                }
            }
            if let Some((acc, i)) = top {
                next[j] = Some(acc + c.score);
                from[j] = i;
            }
        }
        if next.iter().all(Option::is_none) {
            return Err(PlanError::Infeasible {
                from: segments[t - 1].segment,
                to: segments[t].segment,
            });
        }
        best = next;
        back.push(from);
    }
    let mut end: Option<(f64, usize)> = None;
    for (j, v) in best.iter().enumerate() {
        if let Some(v) = *v {
            if end.is_none_or(|(b, _)| v > b) {
                end = Some((v, j));
            }
        }
    }
    let (_, mut j) = end.expect("a feasible end state exists");
    let mut picks = vec![0; segments.len()];
    for t in (0..segments.len()).rev() {
        picks[t] = j;
        j = back[t][j];
    }
    Ok(build(segments, &picks))
}

/// Per-segment argmax with no motion bound.
pub fn greedy_trajectory(segments: &[SegmentCandidates]) -> Result<Trajectory> {
    check_segments(segments)?;
    let picks: Vec<usize> = segments
        .iter()
        .map(|s| {
            let best = argmax_candidate(&s.candidates).expect("nonempty");
            s.candidates.iter().position(|c| *c == best).expect("argmax is a member")
        })
        .collect();
    Ok(build(segments, &picks))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighlightEntry {
    pub segment: usize,
    pub theta: f64,
    pub phi: f64,
    pub scale: f64,
    pub score: f64,
    /// 1-based; absent for trajectory entries outside the top N
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

impl HighlightEntry {
    fn from_step(step: &TrajectoryStep, rank: Option<usize>) -> Self {
        Self {
            segment: step.segment,
            theta: step.view.center.theta(),
            phi: step.view.center.phi(),
            scale: step.view.hfov_scale,
            score: step.view.score,
            rank,
        }
    }
}

/// The `n` highest-scoring trajectory entries in rank order; ties go to
/// the earlier segment.
pub fn select_highlights(trajectory: &Trajectory, n: usize) -> Result<Vec<HighlightEntry>> {
    if n > trajectory.len() {
        return Err(PlanError::TooManyHighlights {
            requested: n,
            available: trajectory.len(),
        });
    }
    let mut order: Vec<usize> = (0..trajectory.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&trajectory.steps[a], &trajectory.steps[b]);
        sb.view
            .score
            .total_cmp(&sa.view.score)
            .then(sa.segment.cmp(&sb.segment))
    });
    Ok(order
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(r, i)| HighlightEntry::from_step(&trajectory.steps[i], Some(r + 1)))
        .collect())
}

/// Every trajectory entry in segment order, with ranks for the selected ones.
pub fn trajectory_entries(trajectory: &Trajectory, highlights: &[HighlightEntry]) -> Vec<HighlightEntry> {
    trajectory
        .steps
        .iter()
        .map(|s| {
            let rank = highlights.iter().find(|h| h.segment == s.segment).and_then(|h| h.rank);
            HighlightEntry::from_step(s, rank)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geom::Viewpoint;

    fn cand(theta: f64, phi: f64, score: f64) -> WindowCandidate {
        WindowCandidate::new(Viewpoint::new(theta, phi).unwrap(), 90.0, score).unwrap()
    }

    fn seg(t: usize, c: Vec<WindowCandidate>) -> SegmentCandidates {
        SegmentCandidates::new(t, c).unwrap()
    }

    #[test]
    fn single_segment_takes_best() {
        let s = [seg(0, vec![cand(0.0, 0.0, 1.0), cand(0.0, 90.0, 3.0), cand(0.0, 180.0, 3.0)])];
        let tr = stitch_trajectory(&s, 30.0).unwrap();
        assert_eq!(tr.steps[0].index, 1);
        assert_eq!(tr.total, 3.0);
    }

    #[test]
    fn dp_beats_greedy_on_constrained_instance() {
        // greedy jumps 0 -> 90 -> 0; the bound forces a slower path
        let s = [
            seg(0, vec![cand(0.0, 0.0, 5.0), cand(0.0, 60.0, 4.0)]),
            seg(1, vec![cand(0.0, 90.0, 10.0), cand(0.0, 20.0, 1.0)]),
            seg(2, vec![cand(0.0, 0.0, 5.0), cand(0.0, 100.0, 1.0)]),
        ];
        let g = greedy_trajectory(&s).unwrap();
        assert_eq!(g.total, 20.0);
        assert!(!g.is_smooth(30.0));
        let d = stitch_trajectory(&s, 30.0).unwrap();
        assert!(d.is_smooth(30.0));
        assert_eq!(d.steps.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1, 0, 1]);
        assert_eq!(d.total, 15.0);
        assert!(g.total >= d.total);
    }

    #[test]
    fn seam_uses_wrapped_longitude() {
        let s = [
            seg(0, vec![cand(0.0, 350.0, 1.0)]),
            seg(1, vec![cand(0.0, 15.0, 1.0)]),
        ];
        assert!(stitch_trajectory(&s, 30.0).is_ok());
    }

    #[test]
    fn infeasible_chain_names_boundary() {
        let s = [
            seg(0, vec![cand(0.0, 0.0, 1.0)]),
            seg(1, vec![cand(0.0, 10.0, 1.0)]),
            seg(2, vec![cand(0.0, 120.0, 1.0)]),
        ];
        assert_eq!(
            stitch_trajectory(&s, 30.0),
            Err(PlanError::Infeasible { from: 1, to: 2 })
        );
    }

    #[test]
    fn bound_is_inclusive() {
        let s = [
            seg(0, vec![cand(0.0, 0.0, 1.0)]),
            seg(1, vec![cand(30.0, 30.0, 1.0)]),
        ];
        assert!(stitch_trajectory(&s, 30.0).is_ok());
    }

    #[test]
    fn repeated_viewpoint() {
        let s: Vec<_> = (0..4).map(|t| seg(t, vec![cand(10.0, 40.0, 2.0)])).collect();
        let tr = stitch_trajectory(&s, 30.0).unwrap();
        assert!(tr.steps.iter().all(|s| s.view.center == Viewpoint::new(10.0, 40.0).unwrap()));
        assert_eq!(tr.total, 8.0);
    }

    #[test]
    fn highlight_ranking() {
        let s = [
            seg(0, vec![cand(0.0, 0.0, 3.0)]),
            seg(1, vec![cand(0.0, 0.0, 1.0)]),
            seg(2, vec![cand(0.0, 0.0, 2.0)]),
        ];
        let tr = stitch_trajectory(&s, 30.0).unwrap();
        let h = select_highlights(&tr, 2).unwrap();
        assert_eq!(h.iter().map(|e| e.segment).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(h[0].rank, Some(1));
        let all = select_highlights(&tr, 3).unwrap();
        assert_eq!(all.iter().map(|e| e.segment).collect::<Vec<_>>(), vec![0, 2, 1]);
        assert!(matches!(
            select_highlights(&tr, 4),
            Err(PlanError::TooManyHighlights { .. })
        ));
    }

    #[test]
    fn equal_scores_prefer_earlier_segments() {
        let s: Vec<_> = (0..4).map(|t| seg(t, vec![cand(0.0, 0.0, 1.0)])).collect();
        let tr = stitch_trajectory(&s, 30.0).unwrap();
        let h = select_highlights(&tr, 2).unwrap();
        assert_eq!(h.iter().map(|e| e.segment).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn top_keeps_scan_order() {
        let s = seg(0, vec![cand(0.0, 0.0, 1.0), cand(0.0, 10.0, 5.0), cand(0.0, 20.0, 3.0)]);
        let t = s.top(2);
        assert_eq!(t.candidates.iter().map(|c| c.score).collect::<Vec<_>>(), vec![5.0, 3.0]);
    }
}
