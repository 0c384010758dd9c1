use proptest::prelude::*;

use hardy_core::compensated::NeumaierSum;
use hardy_core::oracle::fixed_point_sweep;
use hardy_core::solver::solve_many;
use hardy_core::{
    breakdown_index, objective, run_h, solve_mu, theta, Execution, ProblemSpec, StoreMode, WeightRule,
};

fn alpha_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), Just(2.0), 0.0f64..3.0]
}

fn p_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(2.0), 2.0f64..4.0]
}

fn positive_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, 1..=max_len)
}

fn non_decreasing_table() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..3.0, 2..40).prop_map(|steps| {
        let mut acc = 0.5;
        steps
            .into_iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_is_scale_free(a in positive_vec(12), c in 1e-3f64..1e3, p in p_strategy(), alpha in alpha_strategy()) {
        let rule = WeightRule::power(alpha).unwrap();
        let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
        let r0 = objective(&a, p, &rule).unwrap();
        let r1 = objective(&scaled, p, &rule).unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-12 * r0);
    }

    #[test]
    fn every_vector_is_bounded_by_the_best_constant(a in positive_vec(16), p in p_strategy(), alpha in alpha_strategy()) {
        let s = ProblemSpec::new(p, WeightRule::power(alpha).unwrap()).unwrap();
        let mu = solve_mu(a.len(), 1e-12, &s).unwrap().mu;
        let r = objective(&a, p, &s.rule).unwrap();
        if a.len() == 1 {
            prop_assert!((r - 1.0).abs() < 1e-15);
        }
        prop_assert!(r <= mu * (1.0 + 1e-10), "ratio {} above mu_N {}", r, mu);
    }

    #[test]
    fn h_increases_in_k_until_breakdown(frac in 0.0f64..=1.0, p in p_strategy(), alpha in prop_oneof![Just(0.0), Just(1.0), Just(2.0)]) {
        let s = ProblemSpec::new(p, WeightRule::power(alpha).unwrap()).unwrap();
        let mu = 1.0 + frac * (s.limit() - 1.0);
        let t = run_h(mu, 5_000, &s, StoreMode::Store).unwrap();
        prop_assert!(t.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn h_decreases_in_mu(a in 0.0f64..1.0, b in 0.0f64..1.0, p in p_strategy(), alpha in prop_oneof![Just(0.0), Just(1.0)]) {
        prop_assume!((a - b).abs() > 1e-6);
        let s = ProblemSpec::new(p, WeightRule::power(alpha).unwrap()).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mu_lo = 1.0 + lo * (s.limit() - 1.0);
        let mu_hi = 1.0 + hi * (s.limit() - 1.0);
        let t_lo = run_h(mu_lo, 2_000, &s, StoreMode::Store).unwrap();
        let t_hi = run_h(mu_hi, 2_000, &s, StoreMode::Store).unwrap();
        // Both defined wherever the smaller mu is; h_1 = 0 for both.
        prop_assert!(t_hi.values.len() >= t_lo.values.len());
        for k in 2..=t_lo.values.len() {
            prop_assert!(t_lo.h(k).unwrap() > t_hi.h(k).unwrap(), "k={}", k);
        }
    }

    #[test]
    fn breakdown_index_is_monotone_in_mu(a in 0.0f64..1.0, b in 0.0f64..1.0, p in p_strategy(), alpha in alpha_strategy()) {
        let s = ProblemSpec::new(p, WeightRule::power(alpha).unwrap()).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cap = 100_000;
        let n_lo = breakdown_index(1.0 + lo * (s.limit() - 1.0), cap, &s).unwrap().index.finite().unwrap_or(cap + 1);
        let n_hi = breakdown_index(1.0 + hi * (s.limit() - 1.0), cap, &s).unwrap().index.finite().unwrap_or(cap + 1);
        prop_assert!(n_lo <= n_hi);
    }

    #[test]
    fn breakdown_index_brackets_thresholds(n in 1usize..200, alpha in alpha_strategy()) {
        let s = ProblemSpec::new(2.0, WeightRule::power(alpha).unwrap()).unwrap();
        let tol = 1e-11;
        let mu = solve_mu(n, tol, &s).unwrap().mu;
        let below = breakdown_index(mu - tol, n + 1, &s).unwrap().index.finite();
        let above = breakdown_index(mu + tol, n + 1, &s).unwrap().index.finite();
        prop_assert!(below.is_some_and(|k| k <= n));
        prop_assert!(above.map_or(true, |k| k > n));
    }

    #[test]
    fn constants_increase_with_n(table in non_decreasing_table()) {
        let rule = WeightRule::table(table.clone()).unwrap();
        let s = ProblemSpec::new(2.0, rule).unwrap();
        let ns: Vec<usize> = (1..=table.len()).collect();
        let mus: Vec<f64> = solve_many(&ns, 1e-12, &s, Execution::Sequential)
            .into_iter()
            .map(|r| r.unwrap().mu)
            .collect();
        prop_assert!((mus[0] - 1.0).abs() < 1e-11);
        prop_assert!(mus.windows(2).all(|w| w[1] > w[0] - 1e-11));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise(ns in prop::collection::vec(1usize..500, 1..12), p in p_strategy()) {
        let s = ProblemSpec::new(p, WeightRule::unit()).unwrap();
        let seq = solve_many(&ns, 1e-12, &s, Execution::Sequential);
        let par = solve_many(&ns, 1e-12, &s, Execution::default());
        for (a, b) in seq.iter().zip(&par) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            prop_assert_eq!(a.mu.to_bits(), b.mu.to_bits());
        }
    }

    #[test]
    fn fixed_point_sweeps_do_not_decrease_the_objective(a in positive_vec(10), p in 2.0f64..4.0, alpha in alpha_strategy()) {
        let rule = WeightRule::power(alpha).unwrap();
        let mut v = a;
        let mut prev = objective(&v, p, &rule).unwrap();
        for _ in 0..20 {
            v = fixed_point_sweep(&v, p, &rule).unwrap();
            let next = objective(&v, p, &rule).unwrap();
            prop_assert!(next >= prev * (1.0 - 1e-12), "{} < {}", next, prev);
            prev = next;
        }
    }

    #[test]
    fn theta_increases_in_y_and_in_mu(y in 0.01f64..20.0, dy in 0.01f64..5.0, frac in 0.05f64..0.95, p in p_strategy(), l in 0.2f64..=1.0) {
        let limit = (1.0 - l / p).powf(-p);
        let mu = 1.0 + frac * (limit - 1.0);
        let mu2 = mu + 0.5 * (limit - mu);
        let t = theta(y, mu, p, l, 1e-11).unwrap();
        prop_assert!(theta(y + dy, mu, p, l, 1e-11).unwrap() > t);
        // Larger mu lowers the denominator, so the integral grows.
        prop_assert!(theta(y, mu2, p, l, 1e-11).unwrap() > t);
    }

    #[test]
    fn l_estimate_grows_with_horizon(table in non_decreasing_table()) {
        let rule = WeightRule::table(table.clone()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for h in 2..=table.len() {
            let v = rule.estimate_l(h).unwrap().value;
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn compensated_sum_is_order_insensitive(xs in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let forward: NeumaierSum = xs.iter().copied().collect();
        let backward: NeumaierSum = xs.iter().rev().copied().collect();
        let scale: f64 = xs.iter().map(|x| x.abs()).sum();
        prop_assert!((forward.value() - backward.value()).abs() <= 4.0 * f64::EPSILON * scale);
    }

    #[test]
    fn tabulated_power_weights_reproduce_the_rule(n in 1usize..60, alpha in alpha_strategy()) {
        let power = ProblemSpec::new(2.0, WeightRule::power(alpha).unwrap()).unwrap();
        let table: Vec<f64> = (1..=n).map(|k| (k as f64).powf(alpha)).collect();
        let rule = WeightRule::table(table).unwrap();
        let l = power.l;
        let tab = ProblemSpec::with_l(2.0, rule, l).unwrap();
        let a = solve_mu(n, 1e-13, &power).unwrap().mu;
        let b = solve_mu(n, 1e-13, &tab).unwrap().mu;
        prop_assert!((a - b).abs() < 1e-12);
    }
}
