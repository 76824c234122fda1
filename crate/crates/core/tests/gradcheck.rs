use sgan_core::nets::{mlp_grad_check, random_specs, validate_specs, Activation, LayerSpec};
use sgan_core::rng::Rng;

#[test]
fn random_mlps_match_central_differences() {
    let mut rng = Rng::new(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let specs = random_specs(&mut rng);
        validate_specs(&specs).unwrap();
        assert!((2..=4).contains(&specs.len()));
        let r = mlp_grad_check(&specs, 5, &mut rng, 1e-6, 1e-5).unwrap();
        worst = worst.max(r.max_rel_error);
        assert!(r.pass, "{specs:?} {r:?}");
    }
    assert!(worst > 0.0);
}

#[test]
fn random_specs_cover_every_layer_kind() {
    let mut rng = Rng::new(2);
    let specs: Vec<LayerSpec> = (0..200).flat_map(|_| random_specs(&mut rng)).collect();
    assert!(specs.iter().any(|s| s.batchnorm));
    assert!(specs.iter().any(|s| !s.batchnorm));
    for want in [
        Activation::None,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::LeakyRelu { slope: 0.2 },
    ] {
        assert!(specs.iter().any(|s| s.activation == want), "{want:?}");
    }
}

#[test]
fn wrong_gradient_is_detected() {
    // With step 1e3 the difference quotient of a tanh-squashed loss is far
    // from the derivative, so the check has to fail.
    let specs = [LayerSpec::new(2, 3, false, Activation::Tanh), LayerSpec::new(3, 1, false, Activation::None)];
    let r = mlp_grad_check(&specs, 4, &mut Rng::new(3), 1e3, 1e-5).unwrap();
    assert!(!r.pass);
}
