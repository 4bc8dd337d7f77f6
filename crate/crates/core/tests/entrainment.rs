use std::sync::Arc;

use ced_core::corpus::{Direction, FeatureSequence, TurnPair};
use ced_core::entrainment::{baseline_smooth_l1, ced_pair, extract_embeddings, smooth_l1};
use ced_core::model::{CedModel, ModelConfig};
use ced_core::nn::Mat;
use ndarray::Array1;
use proptest::prelude::*;

fn seq(frames: Vec<f64>, dim: usize) -> Arc<FeatureSequence> {
    let n = frames.len() / dim;
    Arc::new(FeatureSequence {
        session_id: "p".into(),
        turn_index: 0,
        frames: Mat::from_shape_vec((n, dim), frames).unwrap(),
        frame_period: 0.02,
    })
}

fn pair(lead: Arc<FeatureSequence>, resp: Arc<FeatureSequence>) -> TurnPair {
    TurnPair { session_id: "p".into(), pair_index: 0, leading_slot: 0, leading: lead, responding: resp, direction: Direction::new("A", "B") }
}

proptest! {
    #[test]
    fn smooth_l1_is_a_symmetric_premetric(
        u in prop::collection::vec(-50.0f64..50.0, 1..30),
        shift in prop::collection::vec(-5.0f64..5.0, 30),
        beta in 0.01f64..10.0,
    ) {
        let v: Array1<f64> = u.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let u = Array1::from(u);
        let d = smooth_l1(u.view(), v.view(), beta).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, smooth_l1(v.view(), u.view(), beta).unwrap());
        prop_assert_eq!(smooth_l1(u.view(), u.view(), beta).unwrap(), 0.0);
        // bounded between the quadratic and linear regimes
        let l1: f64 = (&u - &v).mapv(f64::abs).sum();
        prop_assert!(d <= l1 + 1e-12);
    }

    #[test]
    fn ced_matches_smooth_l1_of_embeddings(
        lead in prop::collection::vec(-2.0f64..2.0, 8..40),
        resp in prop::collection::vec(-2.0f64..2.0, 8..40),
    ) {
        let model = CedModel::new(ModelConfig { init_seed: 4, ..ModelConfig::toy(4) }).unwrap();
        let lead_len = lead.len() / 4 * 4;
        let resp_len = resp.len() / 4 * 4;
        let p = pair(seq(lead[..lead_len].to_vec(), 4), seq(resp[..resp_len].to_vec(), 4));
        let e = extract_embeddings(&model, &p).unwrap();
        let d = ced_pair(&model, &p, 1.0).unwrap();
        prop_assert!(d.is_finite() && d >= 0.0);
        prop_assert_eq!(d, smooth_l1(e.pooled_lead.view(), e.pooled_resp.view(), 1.0).unwrap());
    }
}

#[test]
fn baseline_compares_turn_means() {
    let p = pair(seq(vec![0.0, 0.0, 2.0, 2.0], 2), seq(vec![4.0, 1.0, 4.0, 1.0, 4.0, 1.0], 2));
    // means (1, 1) vs (4, 1): one coordinate differs by 3
    let d = baseline_smooth_l1(&p, 1.0).unwrap();
    assert!((d - 2.5).abs() < 1e-12, "{d}");
}

#[test]
fn mismatched_lengths_and_bad_beta_error() {
    let u = Array1::from(vec![1.0, 2.0]);
    let v = Array1::from(vec![1.0]);
    assert!(smooth_l1(u.view(), v.view(), 1.0).is_err());
    assert!(smooth_l1(u.view(), u.view(), 0.0).is_err());
}
