mod support;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in [1, 2, 3] {
        let g = support::gradient_check(seed, 200, 1e-4);
        assert_eq!(g.failures, 0, "seed {seed}: max relative error {:.2e}", g.max_rel_err);
    }
}

#[test]
fn toy_model_has_enough_parameters() {
    let g = support::gradient_check(0, 0, 1e-4);
    assert!(g.total_params >= 500, "{}", g.total_params);
}
