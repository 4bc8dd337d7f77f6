//! Conformer self-encoders, cross-subject encoders and the real/fake head.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod network;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{ModelConfig, Pooling};
pub use network::{AttentionLayer, AttentionRecord, CedModel, EmbeddingPair, Masked};

/// Builds a model with freshly initialised weights.
pub fn build_model(cfg: ModelConfig) -> crate::Result<CedModel> {
    CedModel::new(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CedError;
    use crate::nn::Mat;
    use ndarray::{s, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> CedModel {
        let cfg = ModelConfig {
            input_dim: 6,
            conformer_units: 8,
            transformer_units: 4,
            heads: 2,
            conv_kernel: 3,
            conformer_ff_dim: 12,
            cross_ff_dim: 6,
            head_hidden: 5,
            init_seed: 9,
            ..ModelConfig::default()
        };
        CedModel::new(cfg).unwrap()
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn invalid_config_is_a_construction_error() {
        let err = build_model(ModelConfig { heads: 5, ..Default::default() }).unwrap_err();
        assert!(matches!(err, CedError::Config(_)));
    }

    #[test]
    fn self_encode_shapes_and_short_input() {
        let m = tiny();
        let x = random(7, 6, 1);
        assert_eq!(m.self_encode(Masked::new(&x, &all(7))).unwrap().dim(), (7, 8));
        let one = random(1, 6, 1);
        assert!(matches!(m.self_encode(Masked::new(&one, &all(1))), Err(CedError::InputTooShort(_))));
        let wrong = random(4, 5, 1);
        assert!(matches!(m.self_encode(Masked::new(&wrong, &all(4))), Err(CedError::Dimension(_))));
    }

    #[test]
    fn padding_does_not_touch_valid_frames() {
        let m = tiny();
        let x = random(6, 6, 2);
        let base = m.self_encode(Masked::new(&x, &all(6))).unwrap();
        let mut padded = Mat::zeros((16, 6));
        padded.slice_mut(s![..6, ..]).assign(&x);
        padded.slice_mut(s![6.., ..]).assign(&random(10, 6, 3));
        let mut valid = all(6);
        valid.extend([false; 10]);
        let out = m.self_encode(Masked::new(&padded, &valid)).unwrap();
        let diff = (&out.slice(s![..6, ..]) - &base).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(diff < 1e-10, "max diff {diff}");
    }

    #[test]
    fn swapping_frames_changes_encoding() {
        let m = tiny();
        let x = random(5, 6, 4);
        let mut swapped = x.clone();
        swapped.row_mut(1).assign(&x.row(3));
        swapped.row_mut(3).assign(&x.row(1));
        let a = m.self_encode(Masked::new(&x, &all(5))).unwrap();
        let b = m.self_encode(Masked::new(&swapped, &all(5))).unwrap();
        // a permutation-equivariant encoder would give b == a with rows 1 and 3 exchanged
        let mut a_perm = a.clone();
        a_perm.row_mut(1).assign(&a.row(3));
        a_perm.row_mut(3).assign(&a.row(1));
        assert!((&a_perm - &b).mapv(f64::abs).sum() > 1e-6);
    }

    #[test]
    fn cross_encode_shapes_and_normalised_attention() {
        let m = tiny();
        let (hl, hr) = (random(5, 8, 5), random(3, 8, 6));
        let (emb, records) = m.cross_encode(Masked::new(&hl, &all(5)), Masked::new(&hr, &all(3)), true).unwrap();
        assert_eq!(emb.z_lead.dim(), (5, 4));
        assert_eq!(emb.z_resp.dim(), (3, 4));
        assert_eq!(emb.pooled_lead.len(), 4);
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].layer, AttentionLayer::CrossEncoder1);
        assert_eq!(records[0].weights.dim(), (2, 5, 3));
        assert_eq!(records[1].weights.dim(), (2, 3, 5));
        for r in &records {
            for s in r.weights.sum_axis(Axis(2)).iter() {
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let mean = emb.z_lead.mean_axis(Axis(0)).unwrap();
        assert!((&mean - &emb.pooled_lead).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn zero_keys_give_uniform_attention() {
        let m = tiny();
        let hl = random(4, 8, 7);
        let hr = Mat::zeros((6, 8));
        let (_, records) = m.cross_encode(Masked::new(&hl, &all(4)), Masked::new(&hr, &all(6)), true).unwrap();
        let w = &records[0].weights;
        for v in w.iter() {
            assert!((v - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_frame_pooling() {
        let mut cfg = tiny().config().clone();
        cfg.pooling = Pooling::First;
        let m = CedModel::new(cfg).unwrap();
        let (hl, hr) = (random(5, 8, 5), random(3, 8, 6));
        let (emb, _) = m.cross_encode(Masked::new(&hl, &all(5)), Masked::new(&hr, &all(3)), false).unwrap();
        assert_eq!(emb.pooled_lead, emb.z_lead.row(0));
        assert_eq!(emb.pooled_resp, emb.z_resp.row(0));
    }

    #[test]
    fn logit_is_finite_and_deterministic() {
        let m = tiny();
        let (a, b) = (random(5, 6, 8), random(4, 6, 9));
        let l1 = m.logit(Masked::new(&a, &all(5)), Masked::new(&b, &all(4))).unwrap();
        let l2 = m.logit(Masked::new(&a, &all(5)), Masked::new(&b, &all(4))).unwrap();
        assert!(l1.is_finite());
        assert_eq!(l1.to_bits(), l2.to_bits());
    }

    #[test]
    fn non_finite_input_reports_layer() {
        let m = tiny();
        let mut a = random(5, 6, 8);
        a[[2, 1]] = f64::NAN;
        let b = random(4, 6, 9);
        let err = m.logit(Masked::new(&a, &all(5)), Masked::new(&b, &all(4))).unwrap_err();
        assert!(matches!(err, CedError::Numeric(ref l) if l == "self_encoder"), "{err}");
    }

    #[test]
    fn shared_cross_weights_reduce_parameters() {
        let base = tiny();
        let mut cfg = base.config().clone();
        cfg.share_cross_weights = true;
        let shared = CedModel::new(cfg).unwrap();
        assert!(shared.param_count() < base.param_count());
    }

    #[test]
    fn dropout_changes_training_loss_but_not_eval() {
        let m = CedModel::new(ModelConfig { dropout: 0.5, ..tiny().config().clone() }).unwrap();
        let (a, b) = (random(5, 6, 10), random(4, 6, 11));
        let (la, lb) = (Masked::new(&a, &[true; 5]), Masked::new(&b, &[true; 4]));
        let (l0, _, _) = m.loss_and_gradients(la, lb, 1.0, None).unwrap();
        let (l1, _, _) = m.loss_and_gradients(la, lb, 1.0, Some(1)).unwrap();
        let (l2, _, _) = m.loss_and_gradients(la, lb, 1.0, Some(2)).unwrap();
        let eval = crate::nn::tape::bce_with_logits(m.logit(la, lb).unwrap(), 1.0);
        assert!((l0 - eval).abs() < 1e-12);
        assert!(l1 != l2);
    }
}
