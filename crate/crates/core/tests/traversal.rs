mod common;

use std::collections::HashSet;

use attverify_core::{
    bfs, gbs, grid_oracle, reconcile, AttentionConfig, Budget, TraversalConfig, TraversalMode,
};
use common::{boundary_oracle, census, random_instance};

const SEEDS: [u64; 6] = [0, 3, 4, 14, 39, 56];

#[test]
fn bfs_covers_every_full_census_pattern() {
    for seed in SEEDS {
        let pr = random_instance(seed).problem(AttentionConfig::default());
        let res = bfs(&pr, &TraversalConfig::default(), Budget::unlimited()).unwrap();
        let found: HashSet<_> = res.patterns().cloned().collect();
        assert_eq!(found.len(), res.regions.len(), "seed {seed}: duplicate region");
        let c = census(&pr, 101);
        assert!(c.full.is_subset(&found), "seed {seed}: census pattern missing from BFS");
    }
}

#[test]
fn bfs_agrees_with_grid_oracle() {
    for seed in SEEDS {
        let inst = random_instance(seed);
        let cfg = AttentionConfig::default();
        let pr = inst.problem(cfg);
        let res = bfs(&pr, &TraversalConfig::default(), Budget::unlimited()).unwrap();
        let oracle = grid_oracle(&inst.f, &inst.spec, &inst.x0, 41, &cfg).unwrap();
        let rep = reconcile(&res.verdicts(), &oracle, 1e-9, 1e-6).unwrap();
        assert!(rep.is_clean(), "seed {seed}: {:?}", rep.mismatches);
        assert!(rep.uncovered.is_empty(), "seed {seed}");
    }
}

#[test]
fn gbs_cr_recovers_the_outermost_boundary() {
    for seed in SEEDS {
        let pr = random_instance(seed).problem(AttentionConfig::default());
        let full = bfs(&pr, &TraversalConfig::default(), Budget::unlimited()).unwrap();
        let g = gbs(&pr, &TraversalConfig::default(), TraversalMode::GbsCr, Budget::unlimited()).unwrap();
        let all: HashSet<_> = full.patterns().cloned().collect();
        assert!(g.patterns().all(|p| all.contains(p)), "seed {seed}");
        let oracle = boundary_oracle(&full);
        let cb: HashSet<_> = g.h_cb().map(|v| v.pattern.clone()).collect();
        assert_eq!(cb, oracle.outermost, "seed {seed}");
        if oracle.beyond > 0 {
            assert!(g.regions.len() < full.regions.len(), "seed {seed}");
        }
    }
}

#[test]
fn gbs_modes_stay_inside_bfs() {
    for seed in [3, 14, 56] {
        let pr = random_instance(seed).problem(AttentionConfig::default());
        let full = bfs(&pr, &TraversalConfig::default(), Budget::unlimited()).unwrap();
        let all: HashSet<_> = full.patterns().cloned().collect();
        for mode in [TraversalMode::GbsAr, TraversalMode::GbsCrar] {
            let g = gbs(&pr, &TraversalConfig::default(), mode, Budget::unlimited()).unwrap();
            assert!(g.patterns().all(|p| all.contains(p)), "seed {seed} {}", mode.name());
        }
    }
}

#[test]
fn traversal_is_deterministic() {
    let pr = random_instance(14).problem(AttentionConfig::default());
    for mode in [TraversalMode::Bfs, TraversalMode::GbsCr] {
        let a = attverify_core::traverse(&pr, &TraversalConfig::default(), mode, Budget::unlimited()).unwrap();
        let b = attverify_core::traverse(&pr, &TraversalConfig::default(), mode, Budget::unlimited()).unwrap();
        let pa: Vec<_> = a.patterns().collect();
        let pb: Vec<_> = b.patterns().collect();
        assert_eq!(pa, pb);
    }
}

#[test]
fn region_cap_stops_early() {
    let pr = random_instance(56).problem(AttentionConfig::default());
    let budget = Budget { time_limit: None, max_regions: Some(3) };
    let res = bfs(&pr, &TraversalConfig::default(), budget).unwrap();
    assert!(res.stats.budget_exhausted);
    assert!(res.regions.len() <= 3);
}
