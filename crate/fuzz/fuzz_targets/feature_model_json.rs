//! Fuzz feature-model JSON parsing.
//!
//! Accepted models re-serialize losslessly; transition recovery and the
//! norm check never panic.
#![no_main]
use libfuzzer_sys::fuzz_target;
use model_features::successor::{recover_feature_transitions, sf_norm_check, FeatureModel};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(model) = FeatureModel::from_json(s) else { return };
    let back = FeatureModel::from_json(&model.to_json().unwrap()).expect("serialized model parses");
    assert_eq!(model.feature_sf(), back.feature_sf());
    assert_eq!(model.feature_rewards(), back.feature_rewards());
    if let Ok(p) = recover_feature_transitions(&model) {
        let check = sf_norm_check(&p);
        assert_eq!(check.norms.len(), model.num_actions());
    }
    let _ = model.reward_norm();
});
