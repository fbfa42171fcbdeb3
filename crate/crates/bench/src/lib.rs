//! Fixtures shared by the benchmarks in `benches/`.

use ssvep_core::convnet::{ModelParams, Network, NetworkSpec};
use ssvep_core::synth::{generate_store, SynthConfig};
use ssvep_core::TrialStore;

/// Seed for every fixture, overridable through `SSVEP_BENCH_SEED`.
pub fn seed() -> u64 {
    std::env::var(ssvep_core::config::SEED_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

/// Single-channel synthetic store with both stimulus frequencies.
pub fn store(subjects: u16, trials_per_freq: u16) -> TrialStore {
    let cfg = SynthConfig {
        seed: seed(),
        ..Default::default()
    };
    generate_store(&cfg, subjects, &[12.0, 15.0], trials_per_freq).expect("synthetic store")
}

/// One 0.5 s window of the first trial.
pub fn window(store: &TrialStore) -> Vec<f64> {
    store.trials[0].samples[0][..125]
        .iter()
        .map(|&v| f64::from(v))
        .collect()
}

/// Network with initialized parameters and a deterministic input.
pub fn network(spec: NetworkSpec) -> (Network, ModelParams, Vec<f64>) {
    let params = ModelParams::init(&spec, seed()).expect("init");
    let net = Network::new(spec).expect("network");
    let input = (0..net.input_len())
        .map(|i| ((i * 37) % 101) as f64 / 101.0)
        .collect();
    (net, params, input)
}
