//! Queue-length-driven worker-pool scaling: cluster slot capacity is
//! divided among competing pools proportionally to their demand
//! (queue length + busy workers), with scale-to-zero and a scale-down
//! stabilization window.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Scaler timing. Pool shapes live next to this block in scenario files.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct ScalerConfig {
    pub interval_ms: u64,
    pub stabilization_ms: u64,
}

impl Default for ScalerConfig {
    fn default() -> Self {
        Self { interval_ms: 15_000, stabilization_ms: 60_000 }
    }
}

/// One pool's demand sample at a scaling tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolMetrics {
    pub queue_length: u64,
    pub busy_workers: u64,
    pub current_replicas: u64,
}

impl PoolMetrics {
    pub fn demand(&self) -> u64 {
        self.queue_length + self.busy_workers
    }
}

/// Replica bounds for one pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoolCaps {
    pub min: u64,
    pub max: Option<u64>,
}

/// Largest-remainder apportionment of `slots` among `demands`.
///
/// If total demand fits, everyone gets their demand. Otherwise each pool
/// gets `floor(slots * d / total)` and the remaining slots go to the
/// largest fractional remainders (ties to the lower index). The result
/// always sums to `min(slots, total demand)` and every allocation is
/// within one slot of its exact proportional share.
pub fn apportion(slots: u64, demands: &[u64]) -> Vec<u64> {
    let total: u128 = demands.iter().map(|&d| d as u128).sum();
    if total == 0 {
        return vec![0; demands.len()];
    }
    if total <= slots as u128 {
        return demands.to_vec();
    }
    let mut base: Vec<u64> = Vec::with_capacity(demands.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(demands.len());
    let mut assigned: u64 = 0;
    for (i, &d) in demands.iter().enumerate() {
        let exact = slots as u128 * d as u128;
        let share = (exact / total) as u64;
        base.push(share);
        assigned += share;
        remainders.push((exact % total, i));
    }
    // Largest remainder first; ties broken by pool index.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = slots - assigned;
    for &(rem, i) in &remainders {
        if leftover == 0 {
            break;
        }
        if rem > 0 {
            base[i] += 1;
            leftover -= 1;
        }
    }
    base
}

/// Desired replicas per pool given current metrics, per-pool bounds, and
/// the schedulable slot budget `slots`.
///
/// Pools with zero demand scale to zero. Under contention every pool with
/// demand keeps at least one replica, funded by the richest pool. Targets
/// never drop below a pool's busy workers; slots rebalance to competing
/// pools as running tasks finish and the busy floor recedes.
pub fn desired_replicas(metrics: &[PoolMetrics], caps: &[PoolCaps], slots: u64) -> Vec<u64> {
    debug_assert_eq!(metrics.len(), caps.len());
    let demands: Vec<u64> = metrics.iter().map(PoolMetrics::demand).collect();
    let mut out = apportion(slots, &demands);

    // Starvation guard: nonzero demand gets at least one replica when some
    // pool can spare a slot.
    while let Some(starved) = (0..out.len()).find(|&i| demands[i] > 0 && out[i] == 0) {
        let donor = (0..out.len()).max_by_key(|&i| (out[i], std::cmp::Reverse(i)));
        match donor {
            Some(d) if out[d] >= 2 => {
                out[d] -= 1;
                out[starved] += 1;
            }
            _ => break,
        }
    }

    for i in 0..out.len() {
        out[i] = out[i].max(caps[i].min);
        if let Some(max) = caps[i].max {
            out[i] = out[i].min(max);
        }
        out[i] = out[i].max(metrics[i].busy_workers);
    }
    out
}

/// Rolling maximum of desired-replica samples over the stabilization
/// window. Scale-down proceeds only to this maximum, so a transient dip
/// shorter than the window never sheds workers.
#[derive(Debug, Default)]
pub struct StabilizationWindow {
    samples: VecDeque<(u64, u64)>,
}

impl StabilizationWindow {
    pub fn record(&mut self, now_ms: u64, desired: u64, window_ms: u64) {
        self.samples.push_back((now_ms, desired));
        while let Some(&(t, _)) = self.samples.front() {
            if t + window_ms < now_ms {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    /// Maximum desired value recorded within the window ending now.
    pub fn window_max(&self) -> u64 {
        self.samples.iter().map(|&(_, d)| d).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(queue: u64, busy: u64, current: u64) -> PoolMetrics {
        PoolMetrics { queue_length: queue, busy_workers: busy, current_replicas: current }
    }

    const NO_CAPS: PoolCaps = PoolCaps { min: 0, max: None };

    #[test]
    fn proportional_split_of_68_slots_is_exact() {
        // demands 100:300 on 68 slots -> 17 and 51.
        let got = desired_replicas(&[m(100, 0, 0), m(300, 0, 0)], &[NO_CAPS; 2], 68);
        assert_eq!(got, vec![17, 51]);
    }

    #[test]
    fn demand_bounded_when_cluster_has_room() {
        let got = desired_replicas(&[m(10, 0, 0)], &[NO_CAPS], 68);
        assert_eq!(got, vec![10]);
    }

    #[test]
    fn zero_demand_scales_to_zero() {
        let got = desired_replicas(&[m(0, 0, 3), m(5, 2, 2)], &[NO_CAPS; 2], 68);
        assert_eq!(got, vec![0, 7]);
    }

    #[test]
    fn nonzero_demand_never_starves() {
        let got = desired_replicas(&[m(1, 0, 0), m(100_000, 0, 0)], &[NO_CAPS; 2], 10);
        assert_eq!(got, vec![1, 9]);
    }

    #[test]
    fn never_below_busy_workers() {
        // Pool 0 holds 60 busy workers; pool 1's deeper queue earns the
        // proportional share of what remains, but pool 0's target cannot
        // drop under its in-flight work. The over-target total is expected:
        // pool 1's extra workers wait until pool 0's tasks finish.
        let got = desired_replicas(&[m(0, 60, 60), m(1000, 0, 0)], &[NO_CAPS; 2], 68);
        assert_eq!(got, vec![60, 64]);
    }

    #[test]
    fn clamped_to_min_and_max() {
        let caps = [PoolCaps { min: 2, max: Some(5) }];
        assert_eq!(desired_replicas(&[m(0, 0, 0)], &caps, 68), vec![2]);
        assert_eq!(desired_replicas(&[m(50, 0, 0)], &caps, 68), vec![5]);
    }

    #[test]
    fn remainder_ties_break_by_pool_index() {
        // Equal demands, odd slot count: the extra slot goes to pool 0.
        assert_eq!(apportion(7, &[10, 10]), vec![4, 3]);
    }

    #[test]
    fn stabilization_window_blocks_short_dips() {
        let mut w = StabilizationWindow::default();
        w.record(0, 10, 60_000);
        w.record(15_000, 2, 60_000);
        w.record(30_000, 2, 60_000);
        assert_eq!(w.window_max(), 10);
        w.record(45_000, 10, 60_000);
        w.record(75_000, 10, 60_000);
        assert_eq!(w.window_max(), 10);
        // A sustained dip ages the high sample out.
        for t in 0..5 {
            w.record(90_000 + t * 15_000, 2, 60_000);
        }
        assert_eq!(w.window_max(), 2);
    }

    proptest! {
        #[test]
        fn apportion_conserves_and_bounds_error(
            slots in 1u64..200,
            demands in proptest::collection::vec(0u64..10_000, 1..8),
        ) {
            let out = apportion(slots, &demands);
            let total: u128 = demands.iter().map(|&d| d as u128).sum();
            let given: u128 = out.iter().map(|&d| d as u128).sum();
            if total <= slots as u128 {
                prop_assert_eq!(given, total);
            } else {
                prop_assert_eq!(given, slots as u128);
                // Largest remainder: |out * total - slots * d| < total.
                for (i, &d) in demands.iter().enumerate() {
                    let exact = slots as u128 * d as u128;
                    let got = out[i] as u128 * total;
                    let err = got.abs_diff(exact);
                    prop_assert!(err < total, "pool {i}: err {err} >= total {total}");
                }
            }
        }

        #[test]
        fn desired_respects_capacity_plus_busy_floor(
            slots in 1u64..100,
            pools in proptest::collection::vec((0u64..500, 0u64..20), 1..6),
        ) {
            let metrics: Vec<PoolMetrics> =
                pools.iter().map(|&(q, b)| m(q, b, b)).collect();
            let caps = vec![NO_CAPS; metrics.len()];
            let out = desired_replicas(&metrics, &caps, slots);
            let total_demand: u64 = metrics.iter().map(PoolMetrics::demand).sum();
            let total_busy: u64 = metrics.iter().map(|p| p.busy_workers).sum();
            // New allocations never exceed the slot budget; totals overshoot
            // only through the never-below-busy floor.
            let given: u64 = out.iter().sum();
            prop_assert!(given <= total_demand.min(slots) + total_busy);
            for (i, p) in metrics.iter().enumerate() {
                prop_assert!(out[i] >= p.busy_workers);
                prop_assert!(out[i] <= p.demand().max(p.busy_workers));
            }
        }
    }
}
