use illumtree::chroma::{distance, DistanceMeasure};
use illumtree::ensemble::{self, Ensemble};
use illumtree::io::FeatureTable;
use illumtree::synth::{generate, SynthConfig};
use illumtree::tree::FitParams;

fn dataset(n: usize, seed: u64) -> FeatureTable {
    generate(&SynthConfig { n, seed, ..Default::default() }).unwrap()
}

#[test]
fn serialized_models_predict_exactly_like_in_memory_ones() {
    let table = dataset(150, 3);
    let examples = table.labeled().unwrap();
    for m in DistanceMeasure::ALL {
        let ens = ensemble::train(&examples, &m, &FitParams::default(), 4, 17).unwrap();
        let back = Ensemble::from_json(&ens.to_json().unwrap()).unwrap();
        assert_eq!(back, ens);
        assert_eq!(back.to_json().unwrap(), ens.to_json().unwrap());
        for e in &examples {
            assert_eq!(back.predict(&e.features).unwrap(), ens.predict(&e.features).unwrap());
        }
    }
    let base = ensemble::train_baseline(&examples, &FitParams::default(), 3, 2).unwrap();
    let back = Ensemble::from_json(&base.to_json().unwrap()).unwrap();
    for e in &examples {
        assert_eq!(back.predict(&e.features).unwrap(), base.predict(&e.features).unwrap());
    }
}

#[test]
fn csv_round_trip_is_byte_stable() {
    let table = dataset(40, 8);
    let mut first = Vec::new();
    table.write(&mut first).unwrap();
    let back = FeatureTable::read(first.as_slice()).unwrap();
    let mut second = Vec::new();
    back.write(&mut second).unwrap();
    assert_eq!(first, second);
    assert_eq!(back.comments, table.comments);
}

#[test]
fn memorizing_trees_reproduce_training_truths() {
    let examples = dataset(60, 4).labeled().unwrap();
    let params = FitParams { rand_pct: 0.0, error_threshold: 0.0, min_parent_size: 2, min_leaf_size: 1 };
    let ens = ensemble::train(&examples, &DistanceMeasure::Recovery, &params, 3, 0).unwrap();
    for e in &examples {
        let err = distance(&DistanceMeasure::Recovery, &ens.predict(&e.features).unwrap(), &e.truth).unwrap();
        assert!(err < 1e-6, "{err}");
    }
}

#[test]
fn training_is_independent_of_worker_count() {
    let examples = dataset(120, 6).labeled().unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ensemble::train(&examples, &DistanceMeasure::Euclidean, &FitParams::default(), 6, 9).unwrap())
            .to_json()
            .unwrap()
    };
    assert_eq!(run(1), run(4));
}
