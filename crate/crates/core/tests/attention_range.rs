mod common;

use attverify_core::{ai_range_in_region, attention_inconsistency, AttentionConfig, Dist, HPolytope};
use common::{random_instance, random_theta, rng, Instance};
use proptest::prelude::*;
use rand::Rng;

fn translation_instance(seed: u64) -> Instance {
    // Seeds 1 and 2 mod 3 carry a translation atom.
    random_instance(3 * seed + 1 + seed % 2)
}

fn region_at(inst: &Instance, theta: &[f64]) -> HPolytope<f64> {
    let pr = inst.problem(AttentionConfig::default());
    let comp = pr.composite();
    let p = comp.activation_pattern(theta).unwrap();
    let mut poly = comp.region_halfspaces(&p).unwrap();
    poly.push_box(inst.spec.theta_box());
    poly
}

fn ai(inst: &Instance, theta: &[f64], cfg: &AttentionConfig<f64>) -> f64 {
    attention_inconsistency(&inst.f, &inst.spec, &inst.x0, theta, cfg).unwrap()
}

/// Vertices moved a hair toward the centroid so they keep the region's pattern.
fn inner_vertices(poly: &HPolytope<f64>) -> Vec<Vec<f64>> {
    let v = poly.vertices_2d().unwrap();
    let n = v.len() as f64;
    let c = [v.iter().map(|p| p[0]).sum::<f64>() / n, v.iter().map(|p| p[1]).sum::<f64>() / n];
    v.iter()
        .map(|p| vec![p[0] + 1e-10 * (c[0] - p[0]), p[1] + 1e-10 * (c[1] - p[1])])
        .collect()
}

fn sample_in(poly: &HPolytope<f64>, r: &mut impl Rng, bx: &attverify_core::ThetaBox<f64>) -> Option<Vec<f64>> {
    (0..4000).find_map(|_| {
        let q: Vec<f64> = bx.lo().iter().zip(bx.hi()).map(|(&l, &h)| r.gen_range(l..=h)).collect();
        poly.strictly_contains(&q, 1e-9).then_some(q)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ai_is_convex_inside_a_region(seed in 0u64..1000, lam in 0.0..=1.0f64, l1 in any::<bool>()) {
        let inst = translation_instance(seed);
        let cfg = AttentionConfig { dist: if l1 { Dist::L1 } else { Dist::L2 }, ..AttentionConfig::default() };
        let mut r = rng(seed);
        let theta = random_theta(&mut r, &inst.spec);
        let poly = region_at(&inst, &theta);
        let bx = inst.spec.theta_box();
        let (Some(a), Some(b)) = (sample_in(&poly, &mut r, bx), sample_in(&poly, &mut r, bx)) else {
            return Ok(());
        };
        let m: Vec<f64> = a.iter().zip(&b).map(|(u, v)| lam * u + (1.0 - lam) * v).collect();
        let lhs = ai(&inst, &m, &cfg);
        let rhs = lam * ai(&inst, &a, &cfg) + (1.0 - lam) * ai(&inst, &b, &cfg);
        prop_assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
    }

    #[test]
    fn region_range_covers_samples_and_attains_vertex_max(seed in 0u64..1000, l1 in any::<bool>()) {
        let inst = translation_instance(seed);
        let cfg = AttentionConfig { dist: if l1 { Dist::L1 } else { Dist::L2 }, ..AttentionConfig::default() };
        let pr = inst.problem(cfg);
        let mut r = rng(seed);
        let theta = random_theta(&mut r, &inst.spec);
        let poly = region_at(&inst, &theta);
        if poly.feasible_interior_point(1e-9).unwrap().is_none() {
            return Ok(());
        }
        let range = ai_range_in_region(&inst.f, pr.perturbation_net(), &inst.spec, &inst.x0, &poly, &cfg).unwrap();
        for _ in 0..30 {
            if let Some(q) = sample_in(&poly, &mut r, inst.spec.theta_box()) {
                prop_assert!(range.contains(ai(&inst, &q, &cfg), 1e-9));
            }
        }
        let vmax = inner_vertices(&poly).iter().map(|q| ai(&inst, q, &cfg)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((vmax - range.up).abs() <= 1e-6, "{vmax} vs {}", range.up);
    }
}
