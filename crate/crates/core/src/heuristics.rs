//! Anomaly-history update and the per-tier adaptive inference heuristics.
//!
//! Every function here is pure. The history update and the mode decision are
//! split so callers can log the updated history before acting on the verdict.
//! Each heuristic expects the tracker to already contain the current
//! prediction.

use crate::model::{AnomalyTracker, HeuristicParams, InferenceMode};

/// Shifts `anomaly` into the history when the mode did not change, otherwise
/// clears it.
pub fn update_history(
    mut tracker: AnomalyTracker,
    anomaly: bool,
    mode_unchanged: bool,
) -> AnomalyTracker {
    if mode_unchanged {
        tracker.record(anomaly);
    } else {
        tracker.reset();
    }
    tracker
}

pub fn anomaly_count(tracker: &AnomalyTracker) -> u32 {
    tracker.anomaly_count()
}

/// Decides whether a node running on-device inference should stay in S or
/// hand off to the gateway. A low battery pins the node to S.
pub fn sensor_heuristic(
    tracker: &AnomalyTracker,
    battery_pct: f64,
    params: &HeuristicParams,
) -> InferenceMode {
    if battery_pct < params.low_battery_pct || !tracker.is_full() {
        InferenceMode::S
    } else if tracker.anomaly_count() >= params.sensor_escalation {
        InferenceMode::G
    } else {
        InferenceMode::S
    }
}

/// Gateway decision for a node currently in G. `queue_len` is the gateway's
/// inference queue size when the request is serviced.
pub fn gateway_heuristic(
    tracker: &AnomalyTracker,
    battery_pct: f64,
    queue_len: u32,
    params: &HeuristicParams,
) -> InferenceMode {
    if battery_pct < params.low_battery_pct {
        return InferenceMode::S;
    }
    if !tracker.is_full() {
        return InferenceMode::G;
    }
    let sigma = tracker.anomaly_count();
    if sigma < params.gateway_deescalation {
        InferenceMode::S
    } else if sigma < params.gateway_escalation && queue_len < params.queue_threshold {
        InferenceMode::G
    } else {
        InferenceMode::C
    }
}

/// Cloud decision for a node currently in C. There is no escalation branch;
/// `cloud_escalation` is not consulted.
pub fn cloud_heuristic(
    tracker: &AnomalyTracker,
    battery_pct: f64,
    params: &HeuristicParams,
) -> InferenceMode {
    if battery_pct < params.low_battery_pct {
        InferenceMode::S
    } else if !tracker.is_full() {
        InferenceMode::C
    } else if tracker.anomaly_count() < params.cloud_deescalation {
        InferenceMode::G
    } else {
        InferenceMode::C
    }
}

/// Runs the heuristic owned by `tier`.
pub fn decide(
    tier: InferenceMode,
    tracker: &AnomalyTracker,
    battery_pct: f64,
    queue_len: u32,
    params: &HeuristicParams,
) -> InferenceMode {
    match tier {
        InferenceMode::S => sensor_heuristic(tracker, battery_pct, params),
        InferenceMode::G => gateway_heuristic(tracker, battery_pct, queue_len, params),
        InferenceMode::C => cloud_heuristic(tracker, battery_pct, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use InferenceMode::*;

    fn tracker(h: u64, tau: u32, depth: u32) -> AnomalyTracker {
        AnomalyTracker::from_parts(h, tau, depth).unwrap()
    }

    /// Full history of `depth` with the low `sigma` bits set.
    fn full(sigma: u32, depth: u32) -> AnomalyTracker {
        let h = if sigma == 64 { u64::MAX } else { (1u64 << sigma) - 1 };
        tracker(h, depth, depth)
    }

    fn params() -> HeuristicParams {
        HeuristicParams::default()
    }

    #[test]
    fn update_examples() {
        let t = update_history(tracker(0b0101, 4, 8), true, true);
        assert_eq!((t.history(), t.len()), (0b1011, 5));

        let t = update_history(tracker(0b1111, 4, 4), false, true);
        assert_eq!((t.history(), t.len()), (0b1110, 4));

        let t = update_history(tracker(0b1011, 7, 8), true, false);
        assert_eq!((t.history(), t.len(), t.depth()), (0, 0, 8));
    }

    #[test]
    fn count_examples() {
        assert_eq!(anomaly_count(&tracker(0b1011, 5, 8)), 3);
        assert_eq!(anomaly_count(&AnomalyTracker::new(32).unwrap()), 0);
        assert_eq!(anomaly_count(&full(16, 16)), 16);
    }

    #[test]
    fn sensor_examples() {
        let p = params();
        assert_eq!(sensor_heuristic(&full(5, 32), 50.0, &p), G);
        assert_eq!(sensor_heuristic(&full(31, 32), 10.0, &p), S);
        assert_eq!(sensor_heuristic(&tracker(0b1111, 12, 32), 90.0, &p), S);
    }

    #[test]
    fn gateway_examples() {
        let p = params();
        assert_eq!(gateway_heuristic(&full(2, 16), 80.0, 0, &p), S);
        assert_eq!(gateway_heuristic(&full(5, 16), 80.0, 2, &p), G);
        // queue at or past the threshold pushes the middle band to C
        assert_eq!(gateway_heuristic(&full(5, 16), 80.0, 9, &p), C);
        assert_eq!(gateway_heuristic(&full(5, 16), 80.0, 4, &p), C);
        assert_eq!(gateway_heuristic(&full(8, 16), 80.0, 0, &p), C);
    }

    #[test]
    fn cloud_examples() {
        let p = params();
        assert_eq!(cloud_heuristic(&full(1, 8), 70.0, &p), G);
        assert_eq!(cloud_heuristic(&full(6, 8), 70.0, &p), C);
        assert_eq!(cloud_heuristic(&full(8, 8), 5.0, &p), S);
    }

    #[test]
    fn saturation_and_all_clear() {
        let p = params();
        assert_eq!(sensor_heuristic(&full(32, 32), 100.0, &p), G);
        assert_eq!(gateway_heuristic(&full(16, 16), 100.0, 0, &p), C);
        assert_eq!(cloud_heuristic(&full(8, 8), 100.0, &p), C);

        assert_eq!(sensor_heuristic(&full(0, 32), 100.0, &p), S);
        assert_eq!(gateway_heuristic(&full(0, 16), 100.0, 0, &p), S);
        assert_eq!(cloud_heuristic(&full(0, 8), 100.0, &p), G);
    }

    #[test]
    fn escalation_count_unused_by_cloud() {
        let mut p = params();
        for psi_c in [1, 4, 8, 1000] {
            p.cloud_escalation = psi_c;
            assert_eq!(cloud_heuristic(&full(6, 8), 70.0, &p), C);
            assert_eq!(cloud_heuristic(&full(1, 8), 70.0, &p), G);
        }
    }

    fn arb_tracker(depth: u32) -> impl Strategy<Value = AnomalyTracker> {
        (0..=depth, any::<u64>()).prop_map(move |(len, bits)| {
            let valid = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
            AnomalyTracker::from_parts(bits & valid, len, depth).unwrap()
        })
    }

    proptest! {
        #[test]
        fn reset_on_mode_change(t in (1u32..=64).prop_flat_map(arb_tracker), p in any::<bool>()) {
            let r = update_history(t, p, false);
            prop_assert_eq!((r.history(), r.len()), (0, 0));
        }

        #[test]
        fn sigma_moves_by_at_most_one(t in (1u32..=64).prop_flat_map(arb_tracker), p in any::<bool>()) {
            let before = t.anomaly_count();
            let after = update_history(t, p, true).anomaly_count();
            if !t.is_full() {
                prop_assert!(after == before || after == before + 1);
                prop_assert_eq!(after, before + p as u32);
            } else {
                prop_assert!(after + 1 >= before && after <= before + 1);
            }
        }

        #[test]
        fn warm_up_holds_current_mode(
            t in (1u32..=64).prop_flat_map(arb_tracker),
            b in 20.0f64..=100.0,
            q in 0u32..20,
        ) {
            let mut p = params();
            p.sensor_depth = t.depth();
            p.gateway_depth = t.depth();
            p.cloud_depth = t.depth();
            prop_assume!(!t.is_full());
            prop_assert_eq!(sensor_heuristic(&t, b, &p), S);
            prop_assert_eq!(gateway_heuristic(&t, b, q, &p), G);
            prop_assert_eq!(cloud_heuristic(&t, b, &p), C);
        }

        #[test]
        fn low_battery_dominates(
            t in (1u32..=64).prop_flat_map(arb_tracker),
            b in 0.0f64..20.0,
            q in 0u32..20,
        ) {
            let p = params();
            prop_assert_eq!(sensor_heuristic(&t, b, &p), S);
            prop_assert_eq!(gateway_heuristic(&t, b, q, &p), S);
            prop_assert_eq!(cloud_heuristic(&t, b, &p), S);
        }
    }
}
