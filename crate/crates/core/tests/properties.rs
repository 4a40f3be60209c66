use latticepd::dynamics::{fermi_probability, step_deterministic, UpdateRule};
use latticepd::engine::{run, run_from_grid, RunConfig, Simulation, Termination};
use latticepd::game::{compute_scores, PayoffParams};
use latticepd::grid::{neighbours, random_grid, Grid, Strategy as Cell, C, D};
use latticepd::interference::{apply_neb_i, apply_neb_ii, InterferenceScheme};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_strategy(max_side: usize) -> impl Strategy<Value = Grid> {
    (3..=max_side).prop_flat_map(|side| {
        proptest::collection::vec(any::<bool>(), side * side).prop_map(move |bits| {
            Grid::new(
                side,
                bits.into_iter().map(|b| if b { C } else { D }).collect(),
            )
            .unwrap()
        })
    })
}

fn scheme_strategy() -> impl Strategy<Value = InterferenceScheme> {
    prop_oneof![
        Just(InterferenceScheme::None),
        (0.0..=1.0f64, 0.1..8.0f64).prop_map(|(p_c, theta)| InterferenceScheme::Pop { p_c, theta }),
        (0u8..=4, 0.1..8.0f64).prop_map(|(n_c, theta)| InterferenceScheme::Neb { n_c, theta }),
        (0.01..2.0f64).prop_map(|eps| InterferenceScheme::NebI { eps }),
        (0.01..2.0f64).prop_map(|eps| InterferenceScheme::NebIi { eps }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn defectors_never_paid_and_cost_is_sum(
        g in grid_strategy(12),
        scheme in scheme_strategy(),
        b in 1.01..2.0f64,
    ) {
        let base = compute_scores(&g, &PayoffParams::weak(b).unwrap());
        let out = scheme.apply(&g, &base);
        prop_assert_eq!(out.surplus.len(), g.len());
        for i in 0..g.len() {
            prop_assert!(out.surplus[i] >= 0.0);
            if g.get(i) == D {
                prop_assert_eq!(out.surplus[i], 0.0);
            }
        }
        prop_assert_eq!(out.generation_cost, out.surplus.iter().sum::<f64>());
    }

    #[test]
    fn pop_is_all_or_nothing(g in grid_strategy(12), p_c in 0.0..=1.0f64, theta in 0.1..8.0f64) {
        let base = compute_scores(&g, &PayoffParams::weak(1.8).unwrap());
        let out = InterferenceScheme::Pop { p_c, theta }.apply(&g, &base);
        let paid = out.surplus.iter().filter(|&&s| s > 0.0).count();
        prop_assert!(paid == 0 || paid == g.coop_count());
    }

    #[test]
    fn pop_full_is_neb_four(g in grid_strategy(12), theta in 0.1..8.0f64) {
        let base = compute_scores(&g, &PayoffParams::weak(1.8).unwrap());
        prop_assert_eq!(
            InterferenceScheme::Pop { p_c: 1.0, theta }.apply(&g, &base),
            InterferenceScheme::Neb { n_c: 4, theta }.apply(&g, &base)
        );
    }

    #[test]
    fn neb_ii_dominates_neb_i(g in grid_strategy(12), eps in 0.01..2.0f64, b in 1.01..2.0f64) {
        let base = compute_scores(&g, &PayoffParams::weak(b).unwrap());
        let one = apply_neb_i(&g, &base, eps);
        let two = apply_neb_ii(&g, &base, eps);
        for i in 0..g.len() {
            prop_assert!(two.surplus[i] >= one.surplus[i]);
        }
    }

    #[test]
    fn neb_grant_is_local(g in grid_strategy(10), n_c in 0u8..=4, pick in any::<prop::sample::Index>()) {
        let scheme = InterferenceScheme::Neb { n_c, theta: 1.0 };
        let base = compute_scores(&g, &PayoffParams::weak(1.8).unwrap());
        let before = scheme.apply(&g, &base);
        // flip a cell outside agent 0's closed neighbourhood
        let near: Vec<usize> = std::iter::once(0).chain(g.neighbours(0)).collect();
        let far: Vec<usize> = (0..g.len()).filter(|i| !near.contains(i)).collect();
        let j = far[pick.index(far.len())];
        let mut h = g.clone();
        h.set(j, if h.get(j) == C { D } else { C });
        let after = scheme.apply(&h, &compute_scores(&h, &PayoffParams::weak(1.8).unwrap()));
        prop_assert_eq!(before.surplus[0], after.surplus[0]);
    }

    #[test]
    fn neighbour_relation_symmetric(side in 3usize..20, i in any::<prop::sample::Index>()) {
        let i = i.index(side * side);
        for j in neighbours(i, side) {
            prop_assert!(neighbours(j, side).contains(&i));
        }
        let [n, e, s, w] = neighbours(i, side);
        prop_assert_eq!(neighbours(s, side)[0], i);
        prop_assert_eq!(neighbours(n, side)[2], i);
        prop_assert_eq!(neighbours(w, side)[1], i);
        prop_assert_eq!(neighbours(e, side)[3], i);
    }

    #[test]
    fn snapshot_round_trip(g in grid_strategy(16)) {
        prop_assert_eq!(Grid::parse_snapshot(&g.to_snapshot()).unwrap(), g);
    }

    #[test]
    fn fermi_identities(a in -50.0..50.0f64, b in -50.0..50.0f64, d in 0.001..10.0f64, k in 0.01..5.0f64) {
        let p = fermi_probability(a, b, k).unwrap();
        let q = fermi_probability(b, a, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + q - 1.0).abs() < 1e-12);
        prop_assert_eq!(fermi_probability(a, a, k).unwrap(), 0.5);
        // larger own advantage, smaller copy probability
        prop_assert!(fermi_probability(a + d, b, k).unwrap() <= p);
    }

    #[test]
    fn deterministic_fixed_points_persist(g in grid_strategy(10), theta in 0.1..8.0f64, n_c in 0u8..=4) {
        let p = PayoffParams::weak(1.8).unwrap();
        let scheme = InterferenceScheme::Neb { n_c, theta };
        let advance = |g: &Grid| {
            let mut s = compute_scores(g, &p);
            if g.homogeneous().is_none() {
                let inv = scheme.apply(g, &s);
                s.add_surplus(&inv.surplus);
            }
            step_deterministic(g, &s)
        };
        let next = advance(&g);
        if next == g {
            let mut cur = next;
            for _ in 0..5 {
                cur = advance(&cur);
                prop_assert_eq!(&cur, &g);
            }
        }
    }
}

fn config(scheme: InterferenceScheme, rule: UpdateRule, side: usize) -> RunConfig {
    RunConfig::new(side, PayoffParams::weak(1.8).unwrap(), scheme, rule)
}

#[test]
fn cost_conservation_across_schemes_and_rules() {
    let schemes = [
        InterferenceScheme::pop(0.7, 4.5).unwrap(),
        InterferenceScheme::neb(2, 3.0).unwrap(),
        InterferenceScheme::neb_i(0.3).unwrap(),
        InterferenceScheme::neb_ii(0.3).unwrap(),
    ];
    let rules = [UpdateRule::Deterministic, UpdateRule::fermi(0.3, 0.0).unwrap()];
    for scheme in schemes {
        for rule in rules {
            let r = run(&config(scheme, rule, 30).with_seed(4)).unwrap();
            let sum: f64 = r.records.iter().map(|x| x.generation_cost).sum();
            assert_eq!(r.total_cost, sum, "{scheme:?} {rule:?}");
            assert_eq!(r.total_cost, r.records.last().unwrap().cumulative_cost);
            let mut prev = 0.0;
            for rec in &r.records {
                assert!(rec.cumulative_cost >= prev);
                prev = rec.cumulative_cost;
            }
        }
    }
}

#[test]
fn homogeneous_states_absorb_without_cost() {
    for rule in [UpdateRule::Deterministic, UpdateRule::fermi(0.3, 0.0).unwrap()] {
        let mut cfg = config(InterferenceScheme::neb(4, 5.0).unwrap(), rule, 20);
        cfg.early_stop = false;
        for s in [C, D] {
            let r = run_from_grid(&cfg, Grid::filled(20, s).unwrap()).unwrap();
            assert_eq!(r.termination, Termination::Completed);
            let expected = if s == C { 400 } else { 0 };
            assert!(r.records.iter().all(|x| x.coop_count == expected));
            assert!(r.records.iter().all(|x| x.generation_cost == 0.0));
        }
        // once a run reaches homogeneity it stays there
        let mut sim = Simulation::new(cfg.clone().with_seed(2)).unwrap();
        let mut absorbed: Option<usize> = None;
        for _ in 0..200 {
            let rec = sim.step();
            match absorbed {
                Some(x) => {
                    assert_eq!(rec.coop_count, x);
                    assert_eq!(rec.generation_cost, 0.0);
                }
                None if sim.grid().homogeneous().is_some() => {
                    absorbed = Some(sim.grid().coop_count());
                }
                None => {}
            }
        }
    }
}

#[test]
fn detected_cycles_replay_exactly() {
    let mut found = 0;
    for (seed, scheme) in [
        (1, InterferenceScheme::neb(3, 5.1).unwrap()),
        (2, InterferenceScheme::pop(0.7, 4.5).unwrap()),
        (3, InterferenceScheme::neb(2, 3.0).unwrap()),
    ] {
        let cfg = config(scheme, UpdateRule::Deterministic, 40).with_seed(seed);
        let r = run(&cfg).unwrap();
        if r.termination != Termination::CycleDetected {
            continue;
        }
        found += 1;
        let start = r.cycle_start.unwrap();
        let period = r.cycle_period.unwrap();
        let mut sim = Simulation::new(cfg.clone()).unwrap();
        for _ in 0..start {
            sim.step();
        }
        let first = sim.grid().clone();
        for _ in 0..period {
            sim.step();
        }
        assert_eq!(sim.grid(), &first, "seed {seed}");
        assert_eq!(r.records.len(), cfg.horizon());
    }
    assert!(found >= 2, "expected cyclic runs, found {found}");
}

#[test]
fn neb4_and_full_pop_trajectories_coincide() {
    for rule in [UpdateRule::Deterministic, UpdateRule::fermi(0.3, 0.0).unwrap()] {
        for seed in 0..3 {
            let mut a = Simulation::new(
                config(InterferenceScheme::pop(1.0, 4.3).unwrap(), rule, 30).with_seed(seed),
            )
            .unwrap();
            let mut b = Simulation::new(
                config(InterferenceScheme::neb(4, 4.3).unwrap(), rule, 30).with_seed(seed),
            )
            .unwrap();
            for _ in 0..60 {
                assert_eq!(a.step(), b.step());
                assert_eq!(a.grid(), b.grid());
            }
        }
    }
}

#[test]
fn parallel_lattice_is_bit_identical() {
    for rule in [UpdateRule::Deterministic, UpdateRule::fermi(0.3, 0.01).unwrap()] {
        let cfg = config(InterferenceScheme::neb(3, 3.0).unwrap(), rule, 40).with_seed(8);
        let mut par = cfg.clone();
        par.parallel_lattice = true;
        assert_eq!(run(&cfg).unwrap(), run(&par).unwrap());
    }
}

#[test]
fn mutation_prevents_absorption() {
    let mut cfg = config(InterferenceScheme::None, UpdateRule::fermi(0.3, 0.05).unwrap(), 20);
    cfg.generations = 20;
    cfg.measure_window = 5;
    let r = run_from_grid(&cfg, Grid::filled(20, C).unwrap()).unwrap();
    assert_eq!(r.termination, Termination::Completed);
    assert_eq!(r.records.len(), 25);
    assert!(r.records.iter().skip(1).any(|x| x.coop_count < 400));
}

#[test]
fn random_grid_bit_identical_per_seed() {
    let a = random_grid(50, 0.5, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
    let b = random_grid(50, 0.5, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
    assert_eq!(a.to_snapshot(), b.to_snapshot());
    assert_eq!(a.coop_count() + a.defect_count(), a.len());
    assert!(a.cells().contains(&Cell::Defect));
}

/// The per-generation cost of NEB-3 falls while the population converges,
/// and that of NEB-4 rises, comparing the first paid generation with the
/// last one.
#[test]
fn per_generation_cost_trends() {
    let template = config(InterferenceScheme::None, UpdateRule::Deterministic, 100);
    for seed in 0..10 {
        let neb3 = run(&template.clone().with_scheme(InterferenceScheme::neb(3, 5.5).unwrap()).with_seed(seed)).unwrap();
        let neb4 = run(&template.clone().with_scheme(InterferenceScheme::neb(4, 4.5).unwrap()).with_seed(seed)).unwrap();
        for r in [&neb3, &neb4] {
            assert_eq!(r.termination, Termination::HomogeneousC);
        }
        let paid = |r: &latticepd::engine::RunResult| -> Vec<f64> {
            r.records[..r.records.len() - 1].iter().map(|x| x.generation_cost).collect()
        };
        let c3 = paid(&neb3);
        let c4 = paid(&neb4);
        assert!(c3.windows(2).all(|w| w[1] < w[0]), "NEB-3 seed {seed}: {c3:?}");
        assert!(c4.windows(2).all(|w| w[1] > w[0]), "NEB-4 seed {seed}: {c4:?}");
    }
}
