use eqfree_core::oracle::{analytic_coarse_state, family_moments, SelfSimilarFamily};
use eqfree_core::renorm::{alpha_from_rescaling, renorm_step, TemplateAnchor};
use eqfree_core::{
    ensemble_moments, estimate_alpha, fixed_point, lift, BasisSpec, CoarseState, Error,
    RenormConfig, SimConfig, TemplateCondition,
};

fn quick() -> RenormConfig {
    RenormConfig {
        copies: 40,
        moment_particles: 200_000,
        ..Default::default()
    }
}

#[test]
fn analytic_family_member_is_nearly_fixed() {
    let fam = SelfSimilarFamily::new(0.3125, 5.0).unwrap();
    let state = analytic_coarse_state(&fam, BasisSpec::default()).unwrap();
    let out = renorm_step(&state, &quick(), &SimConfig::default(), 1).unwrap();
    // exact growth over 1.5 s from s = 3.2 s
    assert!(
        (out.scale - (1.0f64 + 1.5 * 0.3125).sqrt()).abs() < 0.02,
        "{}",
        out.scale
    );
    let got = ensemble_moments(&lift(&out.state, 400_000, 1).unwrap()).unwrap();
    let want = family_moments(&fam);
    assert!((got.sigma_x / want.sigma_x - 1.0).abs() < 0.03, "{got:?}");
    assert!((got.sigma_y / want.sigma_y - 1.0).abs() < 0.05, "{got:?}");
    assert!((got.rho.unwrap() - want.rho).abs() < 0.03, "{got:?}");
}

#[test]
fn projected_anchor_pins_the_reconstruction() {
    let fam = SelfSimilarFamily::new(0.3125, 5.0).unwrap();
    let state = analytic_coarse_state(&fam, BasisSpec::default()).unwrap();
    let cfg = RenormConfig {
        anchor: TemplateAnchor::Projected,
        ..quick()
    };
    let out = renorm_step(&state, &cfg, &SimConfig::default(), 1).unwrap();
    assert!((out.state.marginal_icdf(cfg.template.m) - cfg.template.e).abs() < 1e-10);
}

#[test]
fn steps_are_reproducible() {
    let state = CoarseState::uniform_square(BasisSpec::default(), 10.0).unwrap();
    let cfg = RenormConfig {
        copies: 4,
        ..Default::default()
    };
    let sim = SimConfig::default();
    assert_eq!(
        renorm_step(&state, &cfg, &sim, 3).unwrap(),
        renorm_step(&state, &cfg, &sim, 3).unwrap()
    );
}

#[test]
fn zero_iterations_reports_only_the_start() {
    let state = CoarseState::uniform_square(BasisSpec::default(), 10.0).unwrap();
    let cfg = RenormConfig {
        max_iterations: 0,
        ..quick()
    };
    let trace = fixed_point(&state, &cfg, &SimConfig::default()).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert!(!trace.converged);
    assert_eq!(trace.records[0].change, None);
}

#[test]
fn start_right_of_the_template_is_recentred() {
    let state = CoarseState::uniform_square(BasisSpec::default(), 10.0)
        .unwrap()
        .shifted_x(30.0);
    let cfg = RenormConfig {
        max_iterations: 1,
        ..quick()
    };
    let trace = fixed_point(&state, &cfg, &SimConfig::default()).unwrap();
    assert!((trace.x_shift + 30.0).abs() < 1e-9);
    assert_eq!(trace.records.len(), 2);
}

#[test]
fn small_template_converges_to_its_family_member() {
    let cfg = RenormConfig {
        template: TemplateCondition::new(-0.227, 0.4).unwrap(),
        ..quick()
    };
    let start = CoarseState::uniform_square(BasisSpec::default(), 10.0).unwrap();
    let trace = fixed_point(&start, &cfg, &SimConfig::default()).unwrap();
    assert!(trace.converged);
    let m = trace.converged_record().moments;
    assert!((m.sigma_x / 0.896 - 1.0).abs() < 0.05, "{m:?}");
    assert!((m.rho.unwrap() - 0.866).abs() < 0.04, "{m:?}");
}

#[test]
fn alpha_of_analytic_state_is_near_one_half() {
    let fam = SelfSimilarFamily::new(0.3125, 5.0).unwrap();
    let state = analytic_coarse_state(&fam, BasisSpec::default()).unwrap();
    let cfg = RenormConfig {
        copies: 40,
        particles: 100_000,
        ..Default::default()
    };
    let est = estimate_alpha(&state, &cfg, &SimConfig::default(), 1.5, 3.0).unwrap();
    assert!((0.42..=0.58).contains(&est.alpha), "{est:?}");
    assert_eq!(est.samples[0].a, 1.0);
}

#[test]
fn alpha_rejects_unordered_times() {
    let state = CoarseState::uniform_square(BasisSpec::default(), 10.0).unwrap();
    let err = estimate_alpha(&state, &quick(), &SimConfig::default(), 3.0, 1.5).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter { name: "times", .. }));
}

#[test]
fn square_root_growth_gives_backward_difference_value() {
    // A(t) = (1 + ct)^½ has exact exponent ½; backward differences at
    // t = 1.5, 3.0 with c = 0.3125 bias it to 0.4967
    let a = |t: f64| (1.0 + 0.3125 * t).sqrt();
    let (a1, a2) = (a(1.5), a(3.0));
    let (d1, d2) = ((a1 - 1.0) / 1.5, (a2 - a1) / 1.5);
    let by_hand = 1.5 / (a2 / d2 - a1 / d1);
    let est = alpha_from_rescaling(1.5, a1, 3.0, a2).unwrap();
    assert!((est.alpha - by_hand).abs() < 1e-14);
    assert!((est.alpha - 0.4967).abs() < 1e-4);
}
