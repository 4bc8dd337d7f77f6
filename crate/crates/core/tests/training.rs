use ced_core::corpus::{synth_corpus, SynthConfig};
use ced_core::model::{CedModel, ModelConfig};
use ced_core::training::{labeled_pairs, train_with_observer, TrainConfig, BEST_CHECKPOINT};
use ced_core::CedError;

fn sessions(n: usize) -> Vec<ced_core::corpus::Conversation> {
    synth_corpus(&SynthConfig { n_sessions: n, dim: 6, turns_per_session: 6, seed: 2, ..SynthConfig::default() }).unwrap()
}

#[test]
fn small_corpus_training_loss_falls() {
    let corpus = sessions(5);
    let model = CedModel::new(ModelConfig { dropout: 0.0, ..ModelConfig::toy(6) }).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        max_epochs: 60,
        patience: 100,
        val_fraction: 0.2,
        fresh_shuffles: false,
        ..TrainConfig::default()
    };
    let mut losses = Vec::new();
    let out = train_with_observer(model, &corpus, &cfg, |r| losses.push(r.train_loss)).unwrap();
    assert_eq!(out.history.len(), 60);
    let first = losses[0];
    let last = *losses.last().unwrap();
    assert!(last < 0.5 * first, "train loss {losses:?}");
    assert_eq!(out.train_sessions.len() + out.val_sessions.len(), 5);
}

#[test]
fn one_epoch_writes_best_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = sessions(6);
    let cfg = TrainConfig { max_epochs: 1, checkpoint_dir: Some(dir.path().to_path_buf()), ..TrainConfig::default() };
    let out = train_with_observer(CedModel::new(ModelConfig::toy(6)).unwrap(), &corpus, &cfg, |_| {}).unwrap();
    assert_eq!(out.best_epoch, 1);
    let saved = ced_core::model::load_checkpoint(&dir.path().join(BEST_CHECKPOINT)).unwrap();
    assert_eq!(saved.params(), out.model.params());
}

#[test]
fn dimension_mismatch_fails_before_training() {
    let err = train_with_observer(CedModel::new(ModelConfig::toy(5)).unwrap(), &sessions(4), &TrainConfig::default(), |_| {})
        .unwrap_err();
    assert!(matches!(err, CedError::Dimension(_)), "{err:?}");
}

#[test]
fn labeled_pairs_are_balanced() {
    let corpus = sessions(4);
    let refs: Vec<_> = corpus.iter().collect();
    let (real, fake) = labeled_pairs(&refs, 0, 0).unwrap();
    assert_eq!(real.len(), fake.len());
    assert!(real.iter().all(|p| p.label == 1.0));
    assert!(fake.iter().all(|p| p.label == 0.0));
}
