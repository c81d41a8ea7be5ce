//! Acceptance suite: one test per release criterion, each printing a
//! single pass/fail line (run with `--nocapture` to see them). Tolerances
//! and budgets are pinned in the constants below.

mod common;

use common::{battery, random_connected_graph, random_endowments, EnumOracle};
use fairshare_core::netgen::{self, EndowmentProfile, GenSpec, GraphModel};
use fairshare_core::num::{rat, rat_int, rat_to_f64, Rat};
use fairshare_core::polymatroid::RateVector;
use fairshare_core::sim::{
    expected_step, run, DistributionSpec, Estimator, SimConfig, TieBreak,
};
use fairshare_core::solver::{certify_lexopt, extract_allocation, min_ratio, peel_solve};
use fairshare_core::verify::{
    check_sharing_equilibrium, check_structure, find_blocking_coalition, StabilityMode,
};
use fairshare_core::{Endowments, Graph, NodeId, NodeSet};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

const BATTERY_SEED: u64 = 0xacce97ed;
const BATTERY_SIZE: usize = 300;
const BATTERY_MAX_NODES: usize = 12;

fn standard_battery() -> Vec<(Graph, Endowments)> {
    let mut rng = ChaCha8Rng::seed_from_u64(BATTERY_SEED);
    battery(&mut rng, BATTERY_SIZE, BATTERY_MAX_NODES)
}

fn assert_within(label: &str, elapsed: Duration, budget: Duration) {
    assert!(
        elapsed <= budget,
        "{label} took {elapsed:?}, budget {budget:?}"
    );
}

/// Six-node fixture with endowments 40, 20, 10, 10, 30, 60; the edge set
/// is the bundled reconstruction (fixtures/six_node_three_levels.json).
fn six_node_fixture() -> (Graph, Endowments) {
    let g = Graph::new(1..7, vec![(1, 2), (2, 3), (2, 5), (3, 4), (5, 6)]).unwrap();
    let d = Endowments::new(
        [
            (1, rat_int(40)),
            (2, rat_int(20)),
            (3, rat_int(10)),
            (4, rat_int(10)),
            (5, rat_int(30)),
            (6, rat_int(60)),
        ]
        .into(),
    )
    .unwrap();
    (g, d)
}

#[test]
fn criterion_01_six_node_fixture_exact() {
    let started = Instant::now();
    let (g, d) = six_node_fixture();
    let dec = peel_solve(&g, &d).unwrap();
    assert_eq!(dec.level_count(), 3);
    assert_eq!(dec.levels(), &[rat(1, 2), rat_int(1), rat_int(2)]);
    let received = dec.received(&d).unwrap();
    let expected: RateVector = [
        (1, rat_int(20)),
        (2, rat_int(40)),
        (3, rat_int(10)),
        (4, rat_int(10)),
        (5, rat_int(60)),
        (6, rat_int(30)),
    ]
    .into();
    assert_eq!(received, expected);
    assert!(certify_lexopt(&g, &d, &dec).unwrap().passed());
    let elapsed = started.elapsed();
    assert_within("criterion 1", elapsed, Duration::from_secs(1));
    println!(
        "criterion 1: PASS — six-node fixture solves to levels 1/2, 1, 2 with the exact received rates ({elapsed:?})"
    );
}

#[test]
fn criterion_02_complete_graph_dichotomy() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0221e7e);
    for round in 0..200 {
        let n = rng.gen_range(2..=10usize);
        let ids: Vec<NodeId> = (0..n as NodeId).collect();
        let edges: Vec<(NodeId, NodeId)> = ids
            .iter()
            .flat_map(|&i| ids.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect();
        let g = Graph::new(ids.clone(), edges).unwrap();
        let d = random_endowments(&mut rng, &g, 24, 6);
        let dec = peel_solve(&g, &d).unwrap();
        let k = dec.level_count();
        assert!(k <= 2, "round {round}: complete graphs have at most 2 levels");
        let total: Rat = ids.iter().map(|&i| d.mean(i).unwrap().clone()).sum();
        let (argmax, max) = d
            .iter()
            .map(|(id, m)| (id, m.clone()))
            .max_by(|a, b| a.1.cmp(&b.1))
            .unwrap();
        let rest = &total - &max;
        let dominant = max > rest;
        assert_eq!(
            k == 2,
            dominant,
            "round {round}: two levels exactly when one endowment dominates"
        );
        if k == 2 {
            assert_eq!(dec.level_sets()[0], NodeSet::from([argmax]));
        }
    }
    let elapsed = started.elapsed();
    assert_within("criterion 2", elapsed, Duration::from_secs(10));
    println!(
        "criterion 2: PASS — 200 random complete graphs: at most two levels, two exactly when one endowment exceeds the sum of the rest ({elapsed:?})"
    );
}

#[test]
fn criterion_03_homogeneous_flatness() {
    let started = Instant::now();
    // the lattice is deterministic: always one level, all ratios one
    let (g, d) = netgen::generate(&GenSpec {
        model: GraphModel::Lattice { rows: 5, cols: 6 },
        seed: 0,
        require_connected: true,
        endowment: EndowmentProfile::Homogeneous { mean: rat_int(30) },
    })
    .unwrap();
    let dec = peel_solve(&g, &d).unwrap();
    assert_eq!(dec.level_count(), 1);
    assert!(dec.levels()[0].is_one());
    assert!(certify_lexopt(&g, &d, &dec).unwrap().passed());

    // connected homogeneous samples at both densities: every solution is
    // certified; multi-level samples are reported, not failed
    let mut multi_level = Vec::new();
    for &p in &[0.1, 0.2] {
        for seed in 0..20u64 {
            let (g, d) = netgen::generate(&GenSpec {
                model: GraphModel::ErdosRenyi { n: 30, p },
                seed,
                require_connected: true,
                endowment: EndowmentProfile::Homogeneous { mean: rat_int(30) },
            })
            .unwrap();
            let dec = peel_solve(&g, &d).unwrap();
            let report = certify_lexopt(&g, &d, &dec).unwrap();
            assert!(report.passed(), "p={p} seed={seed} must certify");
            if dec.level_count() != 1 {
                multi_level.push((p, seed, dec.level_count()));
            } else {
                assert!(dec.levels()[0].is_one());
            }
        }
    }
    let elapsed = started.elapsed();
    println!(
        "criterion 3: PASS — homogeneous lattice flat at ratio one; 40 homogeneous random samples certified, {} with more than one level{} ({elapsed:?})",
        multi_level.len(),
        if multi_level.is_empty() {
            String::new()
        } else {
            format!(" (reported, not failed: {multi_level:?})")
        }
    );
}

#[test]
fn criterion_04_certificate_and_ratio_oracle() {
    let started = Instant::now();
    let instances = standard_battery();
    for (index, (g, d)) in instances.iter().enumerate() {
        let dec = peel_solve(g, d).unwrap();
        let report = certify_lexopt(g, d, &dec).unwrap();
        assert!(
            report.passed(),
            "instance {index}: certificate must pass (equalities + base membership)"
        );
        let oracle = EnumOracle::new(g, d);
        let (expect_lambda, expect_set) = oracle.min_ratio();
        let (lambda, set) = min_ratio(g, d, &g.node_set()).unwrap();
        assert_eq!(lambda, expect_lambda, "instance {index}: minimum ratio");
        assert_eq!(set, expect_set, "instance {index}: maximal minimizer");
    }
    let elapsed = started.elapsed();
    assert_within("criterion 4", elapsed, Duration::from_secs(60));
    println!(
        "criterion 4: PASS — {} random instances: certificates pass and the minimum ratio matches exhaustive enumeration exactly ({elapsed:?})",
        instances.len()
    );
}

#[test]
fn criterion_05_structure_suite() {
    let started = Instant::now();
    let instances = standard_battery();
    for (index, (g, d)) in instances.iter().enumerate() {
        let dec = peel_solve(g, d).unwrap();
        let report = check_structure(g, d, &dec).unwrap();
        assert!(
            report.passed(),
            "instance {index}: structure failures {:?}",
            report.failures
        );
    }
    let elapsed = started.elapsed();
    println!(
        "criterion 5: PASS — all {} solver outputs satisfy the pairing, independence, neighborhood, value-product, and bracket conditions exactly ({elapsed:?})",
        instances.len()
    );
}

#[test]
fn criterion_06_strong_stability() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x57ab1e);
    let mut coalitions = 0usize;
    for index in 0..100 {
        let n = 2 + (index % 9); // 2..=10 nodes
        let extra = rng.gen_range(0.1..0.6);
        let g = random_connected_graph(&mut rng, n, extra);
        let d = random_endowments(&mut rng, &g, 24, 6);
        let dec = peel_solve(&g, &d).unwrap();
        let report =
            find_blocking_coalition(&g, &d, &dec, StabilityMode::Exhaustive, 0, 0).unwrap();
        assert_eq!(report.checked_coalitions, (1usize << n) - 1);
        assert!(
            report.stable(),
            "instance {index}: blocking coalition {:?}",
            report.blocking.map(|w| w.coalition)
        );
        coalitions += report.checked_coalitions;
    }
    let elapsed = started.elapsed();
    assert_within("criterion 6", elapsed, Duration::from_secs(300));
    println!(
        "criterion 6: PASS — exhaustive search over {coalitions} coalitions across 100 instances found no blocking coalition ({elapsed:?})"
    );
}

#[test]
fn criterion_07_equilibrium_conditions() {
    let started = Instant::now();
    let instances = standard_battery();
    for (index, (g, d)) in instances.iter().enumerate() {
        let dec = peel_solve(g, d).unwrap();
        let alloc = extract_allocation(g, d, &dec).unwrap();
        let report = check_sharing_equilibrium(g, d, &alloc, &dec).unwrap();
        assert!(
            report.passed(),
            "instance {index}: equilibrium failures {:?}",
            report.failures
        );
    }
    let elapsed = started.elapsed();
    println!(
        "criterion 7: PASS — every extracted allocation fully distributes, realizes ratio times endowment, and sends only to minimum-ratio neighbors, across {} instances ({elapsed:?})",
        instances.len()
    );
}

#[test]
fn criterion_08_policy_convergence() {
    let started = Instant::now();

    // homogeneous lattice with constant draws
    let (g, d) = netgen::generate(&GenSpec {
        model: GraphModel::Lattice { rows: 5, cols: 6 },
        seed: 0,
        require_connected: true,
        endowment: EndowmentProfile::Homogeneous { mean: rat_int(30) },
    })
    .unwrap();
    let dec = peel_solve(&g, &d).unwrap();
    let rstar = dec.received(&d).unwrap();
    let dists: BTreeMap<NodeId, DistributionSpec> = d
        .iter()
        .map(|(id, m)| (id, DistributionSpec::constant(m.clone()).unwrap()))
        .collect();
    let cfg = SimConfig {
        horizon: 2000,
        estimator: Estimator::ExactMean,
        tie_break: TieBreak::SplitEqually,
        seed: 0,
        record_every: 1,
    };
    let trace = run(&g, &dists, &cfg, Some(&rstar)).unwrap();
    let dev_at = |t: u64| {
        let rec = trace.records.iter().find(|r| r.t == t).unwrap();
        rec.rho.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max)
    };
    let lattice_dev_100 = dev_at(100);
    let lattice_dev_2000 = dev_at(2000);
    assert!(
        lattice_dev_100 <= 0.1,
        "lattice deviation {lattice_dev_100} at slot 100 exceeds 0.1"
    );
    assert!(
        lattice_dev_2000 <= 0.01,
        "lattice deviation {lattice_dev_2000} at slot 2000 exceeds 0.01"
    );
    let v10 = trace.records.iter().find(|r| r.t == 10).unwrap().lyapunov.unwrap();
    let v_final = trace.last().lyapunov.unwrap();
    assert!(v_final < v10, "lattice Lyapunov {v_final} not below slot-10 value {v10}");

    // path of three with uniform draws: 18 of 20 seeds inside 0.05 at 10^4
    let g = fairshare_core::graph::path_graph(&[1, 2, 3]);
    let d = Endowments::homogeneous(1..=3, rat_int(1)).unwrap();
    let dec = peel_solve(&g, &d).unwrap();
    let rstar = dec.received(&d).unwrap();
    let rho_star: Vec<f64> = vec![0.5, 2.0, 0.5];
    let dists: BTreeMap<NodeId, DistributionSpec> = (1..=3)
        .map(|id| (id, DistributionSpec::uniform(rat_int(0), rat_int(2)).unwrap()))
        .collect();
    let mut inside = 0;
    for seed in 0..20 {
        let cfg = SimConfig {
            horizon: 10_000,
            estimator: Estimator::ExactMean,
            tie_break: TieBreak::SplitEqually,
            seed,
            record_every: 1,
        };
        let trace = run(&g, &dists, &cfg, Some(&rstar)).unwrap();
        let last = trace.last();
        let dev = last
            .rho
            .iter()
            .zip(&rho_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if dev <= 0.05 {
            inside += 1;
        }
        let v10 = trace.records.iter().find(|r| r.t == 10).unwrap().lyapunov.unwrap();
        let v_final = last.lyapunov.unwrap();
        assert!(
            v_final < v10,
            "seed {seed}: final Lyapunov {v_final} not below slot-10 value {v10}"
        );
    }
    assert!(
        inside >= 18,
        "only {inside}/20 seeds ended within 0.05 of the reference ratios"
    );
    let elapsed = started.elapsed();
    assert_within("criterion 8", elapsed, Duration::from_secs(120));
    println!(
        "criterion 8: PASS — lattice within 0.1 by slot 100 ({lattice_dev_100:.4}) and 0.01 by slot 2000 ({lattice_dev_2000:.5}); {inside}/20 noisy path runs within 0.05 at slot 10000; Lyapunov dropped below its slot-10 value in every run ({elapsed:?})"
    );
}

#[test]
fn criterion_09_expected_step_identity() {
    let started = Instant::now();

    // prefix identity on random ratio vectors, exactly
    let mut rng = ChaCha8Rng::seed_from_u64(0xeb0d);
    for round in 0..100 {
        let n = rng.gen_range(2..=12);
        let g = random_connected_graph(&mut rng, n, 0.35);
        let d = random_endowments(&mut rng, &g, 24, 6);
        // a small value pool forces ties, which exercise the splitting
        let pool: Vec<Rat> = (0..rng.gen_range(2..=4))
            .map(|_| rat(rng.gen_range(1..=9), rng.gen_range(1..=4)))
            .collect();
        let rho: RateVector = g
            .nodes()
            .iter()
            .map(|&id| (id, pool[rng.gen_range(0..pool.len())].clone()))
            .collect();
        let j = expected_step(&g, &d, &rho).unwrap();
        let mut values: Vec<Rat> = rho.values().cloned().collect();
        values.sort();
        values.dedup();
        let mut prefix = NodeSet::new();
        for v in &values {
            prefix.extend(rho.iter().filter(|(_, r)| *r == v).map(|(&id, _)| id));
            let lhs: Rat = prefix.iter().map(|id| j[id].clone()).sum();
            let rhs = fairshare_core::polymatroid::f_value(&g, &d, &prefix).unwrap();
            assert_eq!(lhs, rhs, "round {round}: prefix identity at value {v}");
        }
    }

    // pointwise fixed point of the expected step at the optimum
    let mut rng = ChaCha8Rng::seed_from_u64(BATTERY_SEED);
    let instances = battery(&mut rng, 100, BATTERY_MAX_NODES);
    let mut failures = 0usize;
    let mut first_failure: Option<String> = None;
    for (g, d) in &instances {
        let dec = peel_solve(g, d).unwrap();
        let rho_star = dec.ratios();
        let rstar = dec.received(d).unwrap();
        let j = expected_step(g, d, &rho_star).unwrap();
        if j != rstar {
            failures += 1;
            if first_failure.is_none() {
                first_failure = Some(format!(
                    "{} nodes, {} edges: J = {:?} vs r* = {:?}",
                    g.node_count(),
                    g.edge_count(),
                    j.iter().map(|(i, v)| (*i, rat_to_f64(v))).collect::<Vec<_>>(),
                    rstar
                        .iter()
                        .map(|(i, v)| (*i, rat_to_f64(v)))
                        .collect::<Vec<_>>(),
                ));
            }
        }
    }
    let elapsed = started.elapsed();
    if failures == 0 {
        println!(
            "criterion 9: PASS — prefix identities exact on 100 random ratio vectors; expected step fixes every solver output ({elapsed:?})"
        );
    } else {
        println!(
            "criterion 9: FAIL — prefix identities hold exactly on all 100 random ratio vectors, \
             but the pointwise equality `expected_step(optimal ratios) = optimal rates` failed on \
             {failures}/{} solver outputs ({elapsed:?}).\n  The equal-split expectation only matches \
             the optimal rates level-sum-wise, not node-wise: whenever a sender's tied minimum-ratio \
             neighbors need unequal shares, equal splitting moves mass between them. Smallest \
             counterexample: the homogeneous path of four, where the optimum is flat at ratio one \
             but the end nodes receive only half an endowment in expectation.\n  First battery \
             counterexample: {}",
            instances.len(),
            first_failure.as_deref().unwrap_or("-"),
        );
        panic!(
            "pointwise fixed-point equality does not hold on {failures}/{} instances; \
             the level-prefix identities (checked above) are the sound invariant",
            instances.len()
        );
    }
}

#[test]
fn criterion_10_scale_invariance() {
    let started = Instant::now();
    let instances = standard_battery();
    let factors = [rat_int(2), rat(1, 3), rat_int(7)];
    for (index, (g, d)) in instances.iter().enumerate() {
        let dec = peel_solve(g, d).unwrap();
        let alloc = extract_allocation(g, d, &dec).unwrap();
        for c in &factors {
            let scaled = d.scaled(c).unwrap();
            let dec_c = peel_solve(g, &scaled).unwrap();
            assert_eq!(
                dec.levels(),
                dec_c.levels(),
                "instance {index}: ratios must not move under scaling by {c}"
            );
            assert_eq!(dec.level_sets(), dec_c.level_sets());
            let alloc_c = extract_allocation(g, &scaled, &dec_c).unwrap();
            for (i, j, v) in alloc.transfers() {
                assert_eq!(
                    alloc_c.rate(i, j),
                    v * c,
                    "instance {index}: transfer {i}->{j} must scale by {c}"
                );
            }
            assert_eq!(alloc_c.len(), alloc.len());
        }
    }
    let elapsed = started.elapsed();
    println!(
        "criterion 10: PASS — scaling every endowment by 2, 1/3, and 7 leaves the ratio structure identical and scales rates and transfers exactly, across {} instances ({elapsed:?})",
        instances.len()
    );
}
