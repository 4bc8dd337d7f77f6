use std::ffi::{CStr, CString};
use std::ptr;

use ced_core::model::{save_checkpoint, CedModel, ModelConfig};
use ced_ffi::*;

const TOY: &str = r#"{"input_dim": 6, "conformer_units": 16, "transformer_units": 8, "heads": 2,
    "conv_kernel": 3, "conformer_ff_dim": 16, "cross_ff_dim": 8, "head_hidden": 8, "init_seed": 3}"#;

fn last_error() -> String {
    let p = ced_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn new_model(json: &str) -> *mut CedModelHandle {
    let cfg = CString::new(json).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ced_model_new(cfg.as_ptr(), &mut h) }, CedStatus::Ok);
    assert!(!h.is_null());
    h
}

fn frames(n: usize, dim: usize, offset: f64) -> Vec<f64> {
    (0..n * dim).map(|i| ((i as f64) * 0.37 + offset).sin()).collect()
}

#[test]
fn model_queries_and_free() {
    let h = new_model(TOY);
    let (mut count, mut dim, mut emb) = (0usize, 0usize, 0usize);
    unsafe {
        assert_eq!(ced_model_param_count(h, &mut count), CedStatus::Ok);
        assert_eq!(ced_model_input_dim(h, &mut dim), CedStatus::Ok);
        assert_eq!(ced_model_embedding_dim(h, &mut emb), CedStatus::Ok);
        ced_model_free(h);
        ced_model_free(ptr::null_mut());
    }
    let cfg: ModelConfig = serde_json::from_str(TOY).unwrap();
    assert_eq!(count, CedModel::new(cfg).unwrap().param_count());
    assert_eq!((dim, emb), (6, 8));
}

#[test]
fn checkpoint_load_matches_in_process_model() {
    let cfg: ModelConfig = serde_json::from_str(TOY).unwrap();
    let model = CedModel::new(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ced_model_load(c_path.as_ptr(), &mut h) }, CedStatus::Ok);

    let (lead, resp) = (frames(7, 6, 0.0), frames(5, 6, 1.0));
    let (mut logit, mut dist) = (0.0, 0.0);
    let (mut pl, mut pr) = (vec![0.0; 8], vec![0.0; 8]);
    unsafe {
        assert_eq!(ced_pair_logit(h, lead.as_ptr(), 7, resp.as_ptr(), 5, 6, &mut logit), CedStatus::Ok);
        assert_eq!(ced_pair_distance(h, lead.as_ptr(), 7, resp.as_ptr(), 5, 6, 1.0, &mut dist), CedStatus::Ok);
        assert_eq!(
            ced_pair_embeddings(h, lead.as_ptr(), 7, resp.as_ptr(), 5, 6, pl.as_mut_ptr(), pr.as_mut_ptr(), 8),
            CedStatus::Ok
        );
        ced_model_free(h);
    }
    assert!(logit.is_finite());
    let mut from_embeddings = 0.0;
    assert_eq!(unsafe { ced_smooth_l1(pl.as_ptr(), pr.as_ptr(), 8, 1.0, &mut from_embeddings) }, CedStatus::Ok);
    assert!((dist - from_embeddings).abs() < 1e-12);
    assert!(dist > 0.0);
}

#[test]
fn smooth_l1_and_pearson() {
    let u = [0.0, 3.0, -0.5];
    let v = [0.5, 0.0, -0.5];
    let mut d = 0.0;
    assert_eq!(unsafe { ced_smooth_l1(u.as_ptr(), v.as_ptr(), 3, 1.0, &mut d) }, CedStatus::Ok);
    assert!((d - (0.125 + 2.5)).abs() < 1e-12);

    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let ys = [2.0, 1.0, 4.0, 3.0, 5.0];
    let (mut r, mut p) = (0.0, 0.0);
    assert_eq!(unsafe { ced_pearson(xs.as_ptr(), ys.as_ptr(), 5, &mut r, &mut p) }, CedStatus::Ok);
    assert!((r - 0.8).abs() < 1e-12);
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn errors_map_to_status_codes() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(ced_smooth_l1(ptr::null(), ptr::null(), 2, 1.0, &mut out), CedStatus::NullPointer);
        assert!(last_error().contains("u is null"));
        let u = [1.0, 2.0];
        assert_eq!(ced_smooth_l1(u.as_ptr(), u.as_ptr(), 2, 0.0, &mut out), CedStatus::InvalidArgument);
        assert_eq!(ced_smooth_l1(u.as_ptr(), u.as_ptr(), 2, 1.0, ptr::null_mut()), CedStatus::NullPointer);

        let xs = [1.0, 2.0];
        let (mut r, mut p) = (0.0, 0.0);
        assert_eq!(ced_pearson(xs.as_ptr(), xs.as_ptr(), 2, &mut r, &mut p), CedStatus::InsufficientData);
        let flat = [1.0, 1.0, 1.0];
        let ys = [1.0, 2.0, 3.0];
        assert_eq!(ced_pearson(flat.as_ptr(), ys.as_ptr(), 3, &mut r, &mut p), CedStatus::UndefinedCorrelation);

        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(ced_model_load(missing.as_ptr(), &mut h), CedStatus::Io);
        assert!(h.is_null());
        assert!(!last_error().is_empty());

        let bad = CString::new("{\"heads\": 0}").unwrap();
        assert_ne!(ced_model_new(bad.as_ptr(), &mut h), CedStatus::Ok);
        let garbage = CString::new("not json").unwrap();
        assert_eq!(ced_model_new(garbage.as_ptr(), &mut h), CedStatus::InvalidArgument);

        let m = new_model(TOY);
        let wrong_dim = frames(4, 5, 0.0);
        assert_eq!(
            ced_pair_logit(m, wrong_dim.as_ptr(), 4, wrong_dim.as_ptr(), 4, 5, &mut out),
            CedStatus::Dimension
        );
        let one = frames(1, 6, 0.0);
        let ok = frames(4, 6, 0.0);
        let status = ced_pair_distance(m, one.as_ptr(), 1, ok.as_ptr(), 4, 6, 1.0, &mut out);
        assert_eq!(status, CedStatus::InputTooShort, "{}", last_error());
        let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
        assert_eq!(
            ced_pair_embeddings(m, ok.as_ptr(), 4, ok.as_ptr(), 4, 6, a.as_mut_ptr(), b.as_mut_ptr(), 3),
            CedStatus::Dimension
        );
        assert_eq!(ced_pair_logit(ptr::null(), ok.as_ptr(), 4, ok.as_ptr(), 4, 6, &mut out), CedStatus::NullPointer);
        ced_model_free(m);
    }
    // a successful call clears the previous message
    let mut d = 0.0;
    let u = [1.0];
    assert_eq!(unsafe { ced_smooth_l1(u.as_ptr(), u.as_ptr(), 1, 1.0, &mut d) }, CedStatus::Ok);
    assert!(ced_last_error_message().is_null());
}

#[test]
fn header_is_generated() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ced.h")).unwrap();
    for sym in ["ced_model_load", "ced_pair_distance", "ced_pearson", "CED_STATUS_OK", "CedModelHandle"] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}
