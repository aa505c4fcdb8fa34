use rand_chacha::ChaCha8Rng;

use phonalign::ctc::PhonemeSeq;
use phonalign::data::{generate_corpus, Corpus, CorpusConfig, QualityLabel, Utterance, VOCAB_SIZE};
use phonalign::metrics::{edit_distance, per, ScoredPair, Subset};
use phonalign::model::{infer, Checkpoint, ModelConfig};
use phonalign::pipeline::{
    distill, evaluate, train, train_from, utterance_objective, RunLog, TeacherCache, TrainConfig,
};
use phonalign::Error;

fn small_corpus(noise: f64, seed: u64) -> Corpus {
    let cfg = CorpusConfig {
        train_count: 40,
        dev_count: 12,
        test_count: 12,
        base_dim: 4,
        noise_std: noise,
        seed,
        ..Default::default()
    };
    generate_corpus(&cfg).unwrap()
}

fn tiny_model(bidirectional: bool, corpus: &Corpus) -> ModelConfig {
    ModelConfig {
        layers: 1,
        hidden_per_direction: 8,
        projection: 6,
        dropout: 0.2,
        bidirectional,
        input_dim: corpus.config.input_dim(),
        vocab_size: VOCAB_SIZE,
    }
}

fn tiny_config(bidirectional: bool, corpus: &Corpus, recipe: &str) -> TrainConfig {
    let mut cfg = TrainConfig::new(tiny_model(bidirectional, corpus), recipe);
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 3;
    cfg
}

#[test]
fn zero_epochs_returns_the_initial_checkpoint() {
    let c = small_corpus(0.5, 1);
    let mut cfg = tiny_config(true, &c, "ctc");
    cfg.epochs = 0;
    let (ckpt, log) = train(&cfg, &c, None, TeacherCache::Memory).unwrap();
    let init = Checkpoint::init(cfg.model.clone(), cfg.seed).unwrap();
    assert_eq!(ckpt.weights, init.weights);
    assert_eq!(ckpt.metadata.epoch, 0);
    assert!(log.epochs.is_empty());
}

#[test]
fn training_is_deterministic() {
    let c = small_corpus(0.5, 2);
    let cfg = tiny_config(true, &c, "align");
    let (a, la) = train(&cfg, &c, None, TeacherCache::Memory).unwrap();
    let (b, lb) = train(&cfg, &c, None, TeacherCache::Memory).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_eq!(la.to_json().unwrap(), lb.to_json().unwrap());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("log.json");
    la.save(&p).unwrap();
    assert_eq!(RunLog::load(&p).unwrap(), la);
}

#[test]
fn cached_and_uncached_teacher_give_identical_runs() {
    let c = small_corpus(0.5, 3);
    let (teacher, _) = train(&tiny_config(false, &c, "ctc"), &c, None, TeacherCache::Memory).unwrap();
    let mut cfg = tiny_config(true, &c, "ts-avg:-3");
    cfg.augmentation = true;
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [TeacherCache::Memory, TeacherCache::Disk(dir.path().to_path_buf()), TeacherCache::Recompute]
        .into_iter()
        .map(|cache| train(&cfg, &c, Some(&teacher), cache).unwrap())
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.0, runs[0].0);
        assert_eq!(r.1, runs[0].1);
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().count() > 0);
}

#[test]
fn self_distillation_starts_at_zero_loss() {
    let c = small_corpus(0.5, 4);
    let mut cfg = tiny_config(true, &c, "ctc");
    cfg.model.dropout = 0.0;
    let (teacher, _) = train(&cfg, &c, None, TeacherCache::Memory).unwrap();
    let mut cfg = tiny_config(true, &c, "ts");
    cfg.loss.use_ctc = false;
    let loss = cfg.loss.to_loss_config().unwrap();
    for u in &c.train {
        let t = infer(&teacher, &u.features.frames).unwrap();
        let (out, grads) = utterance_objective::<ChaCha8Rng>(
            &teacher,
            &u.features,
            &u.canonical,
            Some(&t),
            &loss,
            None,
        )
        .unwrap();
        assert_eq!(out.total, 0.0);
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
    }
    // one epoch from the fixed point leaves the weights untouched
    cfg.epochs = 1;
    cfg.model = teacher.config.clone();
    let (student, log) = train_from(teacher.clone(), &cfg, &c, Some(&teacher), TeacherCache::Memory).unwrap();
    assert_eq!(log.epochs[0].train_loss, 0.0);
    assert_eq!(student.weights, teacher.weights);
}

#[test]
fn teacher_requirements_are_checked() {
    let c = small_corpus(0.5, 5);
    let cfg = tiny_config(false, &c, "ts-avg:-6");
    assert!(matches!(train(&cfg, &c, None, TeacherCache::Memory), Err(Error::MissingTeacher)));
    let teacher = Checkpoint::init(tiny_model(true, &c), 0).unwrap();
    assert!(matches!(distill(&teacher, &tiny_config(false, &c, "ctc"), &c, TeacherCache::Memory), Err(Error::Config(_))));
    let mut other = tiny_model(true, &c);
    other.vocab_size = 12;
    let odd = Checkpoint::init(other, 0).unwrap();
    assert!(matches!(distill(&odd, &cfg, &c, TeacherCache::Memory), Err(Error::VocabularyMismatch { .. })));
}

#[test]
fn prior_work_baseline_configuration() {
    // UniGRU ts-avg:-6 student of a CTC-only BiGRU teacher
    let c = small_corpus(0.5, 6);
    let (teacher, _) = train(&tiny_config(true, &c, "ctc"), &c, None, TeacherCache::Memory).unwrap();
    let (student, log) = distill(&teacher, &tiny_config(false, &c, "ts-avg:-6"), &c, TeacherCache::Memory).unwrap();
    assert_eq!(teacher.metadata.recipe, "ctc");
    assert_eq!(student.metadata.recipe, "ts-avg:-6");
    assert_eq!(log.recipe, "ts-avg:-6");
    assert!(!student.config.bidirectional && teacher.config.bidirectional);
    assert!(log.epochs.iter().all(|e| e.train_loss.is_finite()));
}

#[test]
fn self_reference_has_zero_delay_and_full_report_row() {
    let c = small_corpus(0.5, 7);
    let (ckpt, _) = train(&tiny_config(true, &c, "ctc"), &c, None, TeacherCache::Memory).unwrap();
    let e = evaluate(&ckpt, &c.test, Some(&ckpt)).unwrap();
    if let Some(d) = e.delay {
        assert_eq!(d.mean_delay_frames, 0.0);
        assert_eq!(d.mean_delay_ms, 0.0);
    } else {
        assert!(e.delay_omitted);
    }
    let row = serde_json::to_value(&e.row).unwrap();
    for key in ["model", "recipe", "frames", "peaks", "delay_frames", "delay_ms", "per", "cper", "iper", "precision", "recall", "f1"] {
        assert!(row.get(key).is_some(), "missing {key}");
    }
    assert_eq!(e.row.model, "BiGRU");
}

fn rate_against_spoken(c: &[Utterance], hyps: &[PhonemeSeq]) -> f64 {
    let edits: usize = c.iter().zip(hyps).map(|(u, h)| edit_distance(h, &u.spoken).distance).sum();
    100.0 * edits as f64 / c.iter().map(|u| u.spoken.len()).sum::<usize>() as f64
}

/// Desk-scale BiGRU at acceptance noise: a learnability regression bound.
#[test]
fn bigru_learns_the_corpus() {
    let cfg_c = CorpusConfig {
        train_count: 300,
        dev_count: 100,
        test_count: 100,
        base_dim: 8,
        noise_std: 0.5,
        seed: 0,
        ..Default::default()
    };
    let c = generate_corpus(&cfg_c).unwrap();
    let mut cfg = TrainConfig::new(ModelConfig::desk(true, cfg_c.input_dim(), VOCAB_SIZE), "ctc");
    cfg.lr = 0.003;
    cfg.batch_size = 4;
    cfg.lr_halving_start_epoch = 20;
    let (ckpt, log) = train(&cfg, &c, None, TeacherCache::Memory).unwrap();
    assert!(log.epochs.len() <= 25);

    // dev PER is scored against canonical, so injected mispronunciations set a floor
    let floor_pairs: Vec<ScoredPair> = c
        .dev
        .iter()
        .map(|u| ScoredPair { hyp: u.spoken.clone(), reference: u.canonical.clone(), label: u.quality_label })
        .collect();
    let floor = per(&floor_pairs, Subset::All).unwrap();
    let best = log.epochs.iter().filter_map(|e| e.dev_per).fold(f64::INFINITY, f64::min);
    assert!(best < floor + 8.0, "best dev PER {best}, floor {floor}");

    let e = evaluate(&ckpt, &c.test, None).unwrap();
    let spoken_rate = rate_against_spoken(&c.test, &e.hyps);
    assert!(spoken_rate < 10.0, "error against spoken transcripts {spoken_rate}");
    let flagged_absent = c
        .test
        .iter()
        .zip(&e.hyps)
        .filter(|(u, h)| u.quality_label == QualityLabel::Absent && **h != u.canonical)
        .count();
    assert!(flagged_absent > 0);
    assert!(e.report.f1 > 0.0);
    let exact = c.test.iter().zip(&e.hyps).filter(|(u, h)| **h == u.spoken).count();
    assert!(exact as f64 >= 0.8 * c.test.len() as f64, "{exact} exact hypotheses");
}
