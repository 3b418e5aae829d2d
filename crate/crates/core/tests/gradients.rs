use sinet_core::gradcheck::{check_model, check_primitives, small_dual_config};
use sinet_core::model::Variant;

#[test]
fn primitives_match_central_differences() {
    for seed in 0..5 {
        for r in check_primitives(seed).unwrap() {
            assert!(r.checked > 0, "{} checked nothing", r.name);
            assert!(
                r.passed(),
                "seed {seed} {}: max relative error {:.3e} (abs {:.3e})",
                r.name,
                r.max_relative_error,
                r.max_absolute_error
            );
        }
    }
}

#[test]
fn every_variant_matches_central_differences() {
    for variant in Variant::ALL {
        let mut config = small_dual_config();
        config.variant = variant;
        for seed in 0..2 {
            for r in check_model(&config, seed).unwrap() {
                assert!(
                    r.passed(),
                    "{variant:?} seed {seed} {}: max relative error {:.3e}",
                    r.name,
                    r.max_relative_error
                );
            }
        }
    }
}
