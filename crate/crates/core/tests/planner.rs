use proptest::prelude::*;

use viewscore::planner::{
    greedy_trajectory, select_highlights, stitch_trajectory, within_motion, SegmentCandidates,
    DEFAULT_MOTION_LIMIT,
};
use viewscore::scoremap::WindowCandidate;
use viewscore::sphere_geom::Viewpoint;

fn segments() -> impl Strategy<Value = Vec<SegmentCandidates>> {
    let candidate = (-40.0..40.0f64, 0.0..360.0f64, -1.0..1.0f64).prop_map(|(t, p, s)| {
        WindowCandidate::new(Viewpoint::new(t, p).unwrap(), 90.0, s).unwrap()
    });
    prop::collection::vec(prop::collection::vec(candidate, 1..=6), 1..=5).prop_map(|segs| {
        segs.into_iter()
            .enumerate()
            .map(|(t, c)| SegmentCandidates::new(t, c).unwrap())
            .collect()
    })
}

/// Best total over every feasible path, summed in segment order.
fn brute_force_total(segs: &[SegmentCandidates], limit: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; segs.len()];
    loop {
        let feasible = idx.windows(2).enumerate().all(|(t, w)| {
            within_motion(&segs[t].candidates[w[0]], &segs[t + 1].candidates[w[1]], limit)
        });
        if feasible {
            let total = idx
                .iter()
                .enumerate()
                .fold(0.0, |acc, (t, &i)| acc + segs[t].candidates[i].score);
            best = Some(best.map_or(total, |b: f64| b.max(total)));
        }
        let mut t = 0;
        loop {
            if t == segs.len() {
                return best;
            }
            idx[t] += 1;
            if idx[t] < segs[t].candidates.len() {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
    }
}

proptest! {
    #[test]
    fn dp_matches_brute_force(segs in segments(), limit in prop_oneof![Just(30.0), 0.0..120.0f64]) {
        let dp = stitch_trajectory(&segs, limit);
        match brute_force_total(&segs, limit) {
            Some(total) => {
                let traj = dp.unwrap();
                prop_assert_eq!(traj.total, total);
                prop_assert!(traj.is_smooth(limit));
                prop_assert_eq!(traj.len(), segs.len());
            }
            None => prop_assert!(dp.is_err()),
        }
    }

    #[test]
    fn relaxing_the_bound_never_lowers_the_total(segs in segments(), a in 0.0..90.0f64, extra in 0.0..90.0f64) {
        if let Ok(tight) = stitch_trajectory(&segs, a) {
            let loose = stitch_trajectory(&segs, a + extra).unwrap();
            prop_assert!(loose.total >= tight.total);
        }
    }

    #[test]
    fn greedy_is_an_upper_bound(segs in segments()) {
        let greedy = greedy_trajectory(&segs).unwrap();
        if let Ok(dp) = stitch_trajectory(&segs, DEFAULT_MOTION_LIMIT) {
            prop_assert!(greedy.total >= dp.total);
        }
        let unbounded = stitch_trajectory(&segs, 180.0).unwrap();
        prop_assert_eq!(unbounded.total, greedy.total);
    }

    #[test]
    fn highlights_are_a_sorted_subset(segs in segments(), n in 0usize..6) {
        let traj = stitch_trajectory(&segs, 180.0).unwrap();
        let n = n.min(traj.len());
        let picks = select_highlights(&traj, n).unwrap();
        prop_assert_eq!(picks.len(), n);
        prop_assert!(picks.windows(2).all(|w| w[0].score >= w[1].score));
        let mut seen = std::collections::HashSet::new();
        for h in &picks {
            prop_assert!(seen.insert(h.segment));
            let step = traj.steps.iter().find(|s| s.segment == h.segment).unwrap();
            prop_assert_eq!(step.view.score, h.score);
            prop_assert_eq!(step.view.center.theta(), h.theta);
        }
    }
}
