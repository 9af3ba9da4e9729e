use fringe_core::oracle::{self, SizeTable};
use fringe_core::rng::{stream, Purpose};
use fringe_core::sampler::{sample_conditioned, Method, SamplerConfig};
use fringe_core::{OffspringDistribution, TollFunction, Tree};
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

fn dists() -> Vec<OffspringDistribution> {
    ["poisson_one", "geometric_half", "binomial_two_half", "full_rary:2", "full_rary:3"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samplers_return_valid_trees_of_the_requested_size(d in 0usize..5, n in 1usize..200, seed in any::<u64>()) {
        let dist = &dists()[d];
        let n = match dist.max_degree() {
            Some(r) if dist.name().starts_with("full_rary") => (r as usize) * n + 1,
            _ => n,
        };
        for method in [Method::MultinomialShortcut, Method::Rejection] {
            if method == Method::Rejection && n > 60 {
                continue;
            }
            let cfg = SamplerConfig { method, ..SamplerConfig::default() };
            let t = sample_conditioned(dist, n, &mut stream(seed, Purpose::Tree, 0), &cfg).unwrap();
            prop_assert_eq!(t.len(), n);
            prop_assert!(Tree::new(t.degrees().to_vec()).is_ok());
            prop_assert!(t.weight(dist) > 0.0);
        }
    }
}

#[test]
fn identities_hold_exactly_for_every_small_size() {
    let dist: OffspringDistribution = "binomial_two_half".parse().unwrap();
    let f: TollFunction = "pattern:1 0".parse().unwrap();
    let table = SizeTable::<BigRational>::build(&dist, &f, 9, oracle::DEFAULT_CAP, true).unwrap();
    for n in 1..=9 {
        for k in 1..=n {
            assert!(oracle::lefkn_from_table(&dist, &table, n, k).unwrap().difference.is_zero());
            for m in 1..=k {
                assert!(oracle::lcov_from_table(&dist, &table, n, k, m).unwrap().difference.is_zero());
            }
        }
    }
}

#[test]
fn same_seed_same_tree() {
    let dist: OffspringDistribution = "poisson_one".parse().unwrap();
    let cfg = SamplerConfig::default();
    let a = sample_conditioned(&dist, 500, &mut stream(11, Purpose::Tree, 3), &cfg).unwrap();
    let b = sample_conditioned(&dist, 500, &mut stream(11, Purpose::Tree, 3), &cfg).unwrap();
    let c = sample_conditioned(&dist, 500, &mut stream(11, Purpose::Tree, 4), &cfg).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
