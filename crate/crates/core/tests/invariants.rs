use slca::data::SyntheticSpec;
use slca::experiment::{evaluate_dictionary, run_training_on, Dataset, DatasetSpec, DictSize, ExperimentConfig};
use slca::filters::FilterSpec;

fn config() -> ExperimentConfig {
    let spec = SyntheticSpec {
        train_per_class: 6,
        val_per_class: 3,
        ..Default::default()
    };
    let mut cfg = ExperimentConfig::new(DatasetSpec::Synthetic { seed: Some(21), spec });
    cfg.dictionary_size = DictSize::Absolute(24);
    cfg.lambda = 0.3;
    cfg.tau = 10.0;
    cfg.display_ms = 100.0;
    cfg.learning_rate = 0.01;
    cfg.seed = 21;
    cfg
}

#[test]
fn training_reduces_validation_rmse() {
    let mut cfg = config();
    cfg.epochs = 4;
    let ds = Dataset::load(&cfg.dataset, cfg.seed).unwrap();
    for s in [0.0, 5.0] {
        cfg.spike_height = s;
        if s > 0.0 {
            cfg.filter = FilterSpec::Boxcar { window_ms: 40.0 };
        }
        let r = run_training_on(&cfg, &ds, None).unwrap();
        let first = r.metrics.epochs.first().unwrap().rmse_val;
        let last = r.metrics.last().unwrap().rmse_val;
        assert!(last < first, "s = {s}: {first} -> {last}");
    }
}

#[test]
fn filtering_helps_for_tall_spikes() {
    let mut cfg = config();
    cfg.epochs = 2;
    let ds = Dataset::load(&cfg.dataset, cfg.seed).unwrap();
    let dict = run_training_on(&cfg, &ds, None).unwrap().dictionary;
    for s in [5.0, 10.0, 20.0] {
        let mut c = cfg.clone();
        c.spike_height = s;
        c.filter = FilterSpec::Boxcar { window_ms: 40.0 };
        let e = evaluate_dictionary(&dict, &ds.val, &c.period().unwrap(), Default::default(), Default::default()).unwrap();
        assert!(e.rmse <= e.rmse_unfiltered, "s = {s}: {} > {}", e.rmse, e.rmse_unfiltered);
    }
}
