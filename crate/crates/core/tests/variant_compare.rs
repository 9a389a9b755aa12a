//! When the data carry no cross-subpopulation correlation, the joint and
//! independent variants should score about the same on held-out cells.

use multimort::eval::compare_variants;
use multimort::model::{Hyper, ModelSpec, Variant};
use multimort::sampler::SamplerConfig;
use multimort::simgen::{
    draw_deaths, make_population, make_truth, Regime, SimConfig, StandardCurves,
};

#[test]
fn variants_agree_on_independent_regime_data() {
    let curves = StandardCurves::builtin();
    let seed = 31u64;
    let mut sim_cfg = SimConfig::with_defaults(10, 3, 3, seed);
    sim_cfg.base_pop_unit = 2000.0;
    sim_cfg.regime_schedule = vec![Regime::Independent; 3];
    let population = make_population(&sim_cfg).unwrap();
    let truth = make_truth(&sim_cfg, &curves).unwrap();
    let data = draw_deaths(&truth, &population, &curves, seed).unwrap();
    let basis = curves.basis_matrix();
    let spec_joint = ModelSpec::new(
        2,
        data.dims(),
        basis.clone(),
        Variant::Joint,
        Hyper::default(),
    )
    .unwrap();
    let spec_indep = ModelSpec::new(
        2,
        data.dims(),
        basis,
        Variant::Independent,
        Hyper::default(),
    )
    .unwrap();
    let cfg = SamplerConfig {
        chains: 2,
        warmup: 300,
        samples: 500,
        seed,
        ..SamplerConfig::default()
    };
    let cmp = compare_variants(&data, &spec_joint, &spec_indep, &cfg, 0.2, seed).unwrap();
    let (mad_j, mad_i) = (cmp.joint.mad.unwrap(), cmp.independent.mad.unwrap());
    let gap = (mad_j - mad_i).abs() / mad_i;
    assert!(
        gap < 0.10,
        "joint MAD {mad_j:.4} vs independent {mad_i:.4}: relative gap {gap:.3} exceeds 10%"
    );
}
