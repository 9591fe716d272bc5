use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use tutorgrade::classify::PredictionRow;
use tutorgrade::metrics::{confusion_matrix, macro_f1};
use tutorgrade::preprocess::CleaningConfig;
use tutorgrade::{
    desk, grouped_kfold, hard_vote, EncoderBackend, HashedNgramBackend, Label, PredictionSet, Track,
};

fn prediction_sets(models: usize, samples: usize) -> Vec<PredictionSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..models)
        .map(|m| PredictionSet {
            model_id: m,
            rows: (0..samples)
                .map(|i| {
                    let l = rng.gen_range(0..3);
                    let mut probs = [0.2, 0.2, 0.2];
                    probs[l] = 0.6;
                    PredictionRow {
                        sample_id: format!("s{i}"),
                        label: Label::ALL[l],
                        probs,
                    }
                })
                .collect(),
        })
        .collect()
}

fn bench_hard_vote(c: &mut Criterion) {
    let sets = prediction_sets(10, 2476);
    c.bench_function("hard_vote 10x2476", |b| {
        b.iter(|| hard_vote(black_box(&sets)).unwrap())
    });
}

fn bench_macro_f1(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gold: Vec<Label> = (0..2476).map(|_| Label::ALL[rng.gen_range(0..3)]).collect();
    let pred: Vec<Label> = (0..2476).map(|_| Label::ALL[rng.gen_range(0..3)]).collect();
    c.bench_function("confusion + macro_f1 2476", |b| {
        b.iter(|| macro_f1(&confusion_matrix(black_box(&gold), black_box(&pred)).unwrap()))
    });
}

fn bench_encode(c: &mut Criterion) {
    let backend = HashedNgramBackend::new(256, 42).unwrap();
    let text = "student: in step 2 i did the multiplication and i got 41 [SEP] \
                there is a mistake in step 2: 13 x 3 is not 41. please redo the multiplication.";
    c.bench_function("hashed encode dim=256", |b| {
        b.iter(|| backend.encode(black_box(text)))
    });
}

fn bench_folds(c: &mut Criterion) {
    let corpus = desk::shared_task_corpus(Track::MistakeIdentification, 0);
    c.bench_function("grouped_kfold 300 dialogues k=10", |b| {
        b.iter(|| grouped_kfold(black_box(&corpus), 10, 42).unwrap())
    });
}

fn bench_clean(c: &mut Criterion) {
    let corpus = desk::desk_corpus(30, 42);
    let cleaner = CleaningConfig::default().compile().unwrap();
    c.bench_function("clean desk corpus", |b| {
        b.iter(|| cleaner.clean_corpus(black_box(&corpus)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_hard_vote,
    bench_macro_f1,
    bench_encode,
    bench_folds,
    bench_clean
);
criterion_main!(benches);
