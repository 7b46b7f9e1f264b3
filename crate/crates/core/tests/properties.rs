mod common;

use proptest::prelude::*;
use xbar::generator::{generate, GenSpec};
use xbar::sim::simulate;
use xbar::solver::{
    check_feasible, maxov, min_config, optimal_binding, validate_binding, CrossbarConfig,
};
use xbar::trace::{parse_trace, Direction, Trace, Transaction};
use xbar::window::{aggregate_overlap, preprocess, profile, AnalysisParams, MAX_OVERLAP_THRESHOLD};

fn arb_trace() -> impl Strategy<Value = Trace> {
    (1usize..4, 1usize..6).prop_flat_map(|(ni, nt)| {
        let txn = (0u64..2000, 1u64..120, 0..ni, 0..nt, any::<bool>(), any::<bool>()).prop_map(
            |(start, duration, initiator, target, critical, resp)| Transaction {
                start_cycle: start,
                duration,
                initiator,
                target,
                critical,
                direction: if resp { Direction::Response } else { Direction::Request },
            },
        );
        (Just(ni), Just(nt), prop::collection::vec(txn, 0..40), 0u64..100)
            .prop_map(|(ni, nt, txns, pad)| {
                let t = Trace::new(ni, nt, Direction::Request, txns).unwrap();
                let h = t.horizon + pad;
                t.with_horizon(h).unwrap()
            })
    })
}

/// Keeps only request rows, as loading with the request direction would.
fn requests_only(trace: &Trace) -> Trace {
    let txns = trace
        .transactions
        .iter()
        .filter(|t| t.direction == Direction::Request)
        .copied()
        .collect();
    Trace::new(trace.num_initiators, trace.num_targets, Direction::Request, txns)
        .unwrap()
        .with_horizon(trace.horizon)
        .unwrap()
}

fn strip_direction(trace: &Trace) -> (usize, usize, u64, Vec<(u64, u64, usize, usize, bool)>) {
    (
        trace.num_initiators,
        trace.num_targets,
        trace.horizon,
        trace
            .transactions
            .iter()
            .map(|t| (t.start_cycle, t.duration, t.initiator, t.target, t.critical))
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(trace in arb_trace()) {
        let trace = requests_only(&trace);
        let back = parse_trace(&trace.to_csv(), Direction::Request).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn direction_symmetry(trace in arb_trace()) {
        let trace = requests_only(&trace);
        let mut swapped = format!(
            "#xbar-trace v1,initiators={},targets={},horizon={}\n",
            trace.num_targets, trace.num_initiators, trace.horizon
        );
        for t in &trace.transactions {
            swapped.push_str(&format!(
                "{},{},{},{},resp,{}\n",
                t.start_cycle, t.duration, t.target + 1, t.initiator + 1, u8::from(t.critical)
            ));
        }
        let as_resp = parse_trace(&swapped, Direction::Response).unwrap();
        prop_assert_eq!(strip_direction(&as_resp), strip_direction(&trace));
        let back = parse_trace(&as_resp.to_csv(), Direction::Response).unwrap();
        prop_assert_eq!(back, as_resp);
    }

    #[test]
    fn profile_matches_per_cycle_oracle(seed in any::<u64>(), ws in 1u64..700) {
        let trace = common::random_trace(&mut common::rng(seed), 5, 3000, 30);
        let p = profile(&trace, ws).unwrap();
        let oracle = common::naive_profile(&trace, ws);
        prop_assert_eq!(p.num_windows(), oracle.num_windows);
        for i in 0..trace.num_targets {
            for m in 0..oracle.num_windows {
                prop_assert_eq!(p.comm(i, m), oracle.comm[i][m]);
                for j in 0..trace.num_targets {
                    prop_assert_eq!(p.wo(i, j, m), oracle.wo[i][j][m]);
                    if i != j {
                        prop_assert_eq!(p.crit_wo(i, j, m), oracle.crit_wo[i][j][m]);
                    }
                }
            }
        }
    }

    #[test]
    fn windows_partition_occupancy(seed in any::<u64>(), ws in 1u64..900) {
        let trace = common::random_trace(&mut common::rng(seed), 5, 5000, 40);
        let p = profile(&trace, ws).unwrap();
        let whole = common::naive_profile(&trace, trace.horizon.max(1));
        let om = aggregate_overlap(&p);
        for i in 0..trace.num_targets {
            let total: u64 = p.comm_row(i).iter().sum();
            prop_assert_eq!(total, whole.comm[i].iter().sum::<u64>());
            for j in 0..trace.num_targets {
                let sum: u64 = (0..p.num_windows()).map(|m| p.wo(i, j, m)).sum();
                if i != j {
                    prop_assert_eq!(om.get(i, j), sum);
                }
            }
        }
    }

    #[test]
    fn lowering_theta_only_adds_conflicts(seed in any::<u64>(), ws in 10u64..500, a in 0.01f64..0.5, b in 0.01f64..0.5) {
        let trace = common::random_trace(&mut common::rng(seed), 6, 4000, 60);
        let p = profile(&trace, ws).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let loose = preprocess(&p, &AnalysisParams::new(ws, hi)).unwrap();
        let tight = preprocess(&p, &AnalysisParams::new(ws, lo)).unwrap();
        for (i, j) in loose.pairs() {
            prop_assert!(tight.get(i, j));
        }
    }

    #[test]
    fn half_window_overlap_breaks_bandwidth(seed in any::<u64>(), ws in 4u64..400) {
        let trace = common::random_trace(&mut common::rng(seed), 6, 3000, 60);
        let p = profile(&trace, ws).unwrap();
        for i in 0..p.num_targets() {
            for j in i + 1..p.num_targets() {
                for m in 0..p.num_windows() {
                    if 2 * p.wo(i, j, m) > ws {
                        prop_assert!(p.comm(i, m) + p.comm(j, m) > ws);
                    }
                }
            }
        }
        prop_assert!(preprocess(&p, &AnalysisParams::new(ws, MAX_OVERLAP_THRESHOLD + 0.01)).is_err());
    }

    #[test]
    fn feasibility_is_monotone_in_bus_count(seed in any::<u64>()) {
        let inst = common::random_instance(&mut common::rng(seed), 7, 5);
        let mut seen = false;
        for b in 1..=inst.num_targets() {
            let feasible = check_feasible(&inst, b).unwrap().is_some();
            prop_assert!(!seen || feasible, "feasible below {} buses but not at {}", b, b);
            seen |= feasible;
        }
        prop_assert!(seen);
    }

    #[test]
    fn solver_matches_enumeration(seed in any::<u64>()) {
        let inst = common::random_instance(&mut common::rng(seed), 7, 5);
        let oracle = common::enumerate(&inst);
        let mc = min_config(&inst).unwrap();
        prop_assert_eq!(mc.best_buses, oracle.min_buses);
        prop_assert!(mc.is_optimal());
        prop_assert!(common::binding_is_valid(&inst, &mc.witness.binding));
        for b in mc.best_buses..=inst.num_targets().min(mc.best_buses + 1) {
            let r = optimal_binding(&inst, b).unwrap();
            let (v, binding) = oracle.best[b].clone().unwrap();
            prop_assert_eq!(r.maxov, v);
            prop_assert_eq!(&r.config.binding, &binding);
            prop_assert!(validate_binding(&inst, &r.config).is_ok());
        }
    }

    #[test]
    fn bus_relabelling_keeps_maxov(seed in any::<u64>(), shift in 1usize..8) {
        let inst = common::random_instance(&mut common::rng(seed), 7, 4);
        let b = min_config(&inst).unwrap().best_buses;
        let r = optimal_binding(&inst, b).unwrap();
        let relabelled = CrossbarConfig::new(
            b,
            r.config.binding.iter().map(|&k| (k + shift) % b).collect(),
        ).unwrap();
        prop_assert_eq!(maxov(inst.om(), &relabelled), r.maxov);
        prop_assert!(validate_binding(&inst, &relabelled).is_ok());
        prop_assert_eq!(relabelled.canonical(), r.config.clone());
    }

    #[test]
    fn simulator_matches_cycle_stepping(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let trace = common::random_trace(&mut rng, 5, 1500, 25);
        let buses = 1 + common::below(&mut rng, trace.num_targets as u64) as usize;
        let binding: Vec<usize> = (0..trace.num_targets)
            .map(|_| common::below(&mut rng, buses as u64) as usize)
            .collect();
        let config = CrossbarConfig::new(buses, binding.clone()).unwrap();
        let r = simulate(&trace, &config).unwrap();
        prop_assert_eq!(r.latencies, common::stepped_latencies(&trace, &binding, buses));
    }

    #[test]
    fn simulator_conservation_and_bounds(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let trace = common::random_trace(&mut rng, 6, 5000, 80);
        let buses = 1 + common::below(&mut rng, trace.num_targets as u64) as usize;
        let binding: Vec<usize> = (0..trace.num_targets)
            .map(|_| common::below(&mut rng, buses as u64) as usize)
            .collect();
        let config = CrossbarConfig::new(buses, binding).unwrap();
        let r = simulate(&trace, &config).unwrap();
        let durations: u64 = trace.transactions.iter().map(|t| t.duration).sum();
        prop_assert_eq!(r.per_bus_busy.iter().sum::<u64>(), durations);
        prop_assert_eq!(r.dropped, 0);
        prop_assert_eq!(r.latencies.len(), trace.transactions.len());
        for (l, t) in r.latencies.iter().zip(&trace.transactions) {
            prop_assert!(*l >= t.duration);
        }
        prop_assert_eq!(simulate(&trace, &config).unwrap(), r);
    }

    #[test]
    fn fresh_bus_never_slows_anything(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let trace = common::random_trace(&mut rng, 6, 5000, 80);
        let buses = 1 + common::below(&mut rng, trace.num_targets as u64) as usize;
        let mut binding: Vec<usize> = (0..trace.num_targets)
            .map(|_| common::below(&mut rng, buses as u64) as usize)
            .collect();
        let before = simulate(&trace, &CrossbarConfig::new(buses, binding.clone()).unwrap()).unwrap();
        binding[common::below(&mut rng, trace.num_targets as u64) as usize] = buses;
        let after = simulate(&trace, &CrossbarConfig::new(buses + 1, binding).unwrap()).unwrap();
        for (a, b) in after.latencies.iter().zip(&before.latencies) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn generator_mass_stays_in_jitter_bounds(
        burst in 50u64..400,
        gap in 50u64..600,
        jitter in 0.0f64..0.4,
        rho in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let horizon = 40 * (burst + gap);
        let mut spec = GenSpec::new(3, 3, burst, gap, horizon, seed);
        spec.burst_len_jitter = jitter;
        spec.phase_correlation = rho;
        spec.packet_len = 4;
        let trace = generate(&spec).unwrap();
        prop_assert_eq!(generate(&spec).unwrap(), trace.clone());
        let b = burst as f64;
        let slow = b + (1.0 + jitter) * gap as f64;
        let fast = b + (1.0 - jitter) * gap as f64;
        let lower = (1.0 - jitter) * b * ((horizon as f64 / slow).floor() - 2.0);
        let upper = (1.0 + jitter) * b * (horizon as f64 / fast).ceil();
        for i in 0..3 {
            let mass: u64 = trace.transactions.iter().filter(|t| t.initiator == i).map(|t| t.duration).sum();
            prop_assert!(mass as f64 >= lower.floor() - 1.0, "initiator {} mass {} < {}", i, mass, lower);
            prop_assert!(mass as f64 <= upper.ceil() + 1.0, "initiator {} mass {} > {}", i, mass, upper);
        }
    }
}
