//! Fuzz learner and environment configuration parsing.
//!
//! Parsing and validation never panic, and accepted configurations
//! round-trip through JSON.
#![no_main]
use libfuzzer_sys::fuzz_target;
use model_features::experiments::{GridWorldSpec, PlantedMdpSpec};
use model_features::learner::LearnerConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = serde_json::from_slice::<LearnerConfig>(data) {
        let _ = c.validate();
        let back: LearnerConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
    if let Ok(spec) = serde_json::from_slice::<PlantedMdpSpec>(data) {
        let _ = spec.validate();
        let back: PlantedMdpSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
    if let Ok(spec) = serde_json::from_slice::<GridWorldSpec>(data) {
        let back: GridWorldSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
});
