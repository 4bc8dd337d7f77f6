mod common;

use ced_core::model::{build_model, CedModel, Masked, ModelConfig};
use ced_core::nn::Mat;
use common::{analytic_param_count, tiny_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

#[test]
fn default_configuration_is_about_two_point_one_million_parameters() {
    let model = build_model(ModelConfig::default()).unwrap();
    let n = model.param_count();
    assert_eq!(n, analytic_param_count(&ModelConfig::default()));
    assert!((1_900_000..=2_300_000).contains(&n), "{n}");
}

#[test]
fn parameter_count_matches_layer_sum_across_variants() {
    for (layers, cross, shared) in [(1, 1, false), (2, 1, false), (1, 2, true), (3, 2, false)] {
        let cfg = ModelConfig { conformer_layers: layers, cross_layers: cross, share_cross_weights: shared, ..tiny_config() };
        assert_eq!(CedModel::new(cfg.clone()).unwrap().param_count(), analytic_param_count(&cfg));
    }
}

#[test]
fn deeper_stacks_stay_finite_and_masked() {
    let cfg = ModelConfig { conformer_layers: 2, cross_layers: 2, ..tiny_config() };
    let model = CedModel::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, b) = (random(6, 8, &mut rng), random(5, 8, &mut rng));
    let base = model.logit(Masked::new(&a, &[true; 6]), Masked::new(&b, &[true; 5])).unwrap();
    let mut pa = Mat::zeros((9, 8));
    pa.slice_mut(ndarray::s![..6, ..]).assign(&a);
    let mut va = vec![true; 6];
    va.extend([false; 3]);
    let padded = model.logit(Masked::new(&pa, &va), Masked::new(&b, &[true; 5])).unwrap();
    assert!((base - padded).abs() < 1e-10);
}
