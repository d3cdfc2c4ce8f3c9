//! Fuzz learner checkpoint JSON parsing.
//!
//! Accepted checkpoints convert to a learner state whose dimensions agree
//! with the stored feature matrix and model.
#![no_main]
use libfuzzer_sys::fuzz_target;
use model_features::learner::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(ck) = Checkpoint::from_json(s) else { return };
    let phi = ck.phi_matrix().expect("accepted checkpoint has a valid phi");
    let n = ck.model.num_features();
    let state = ck.clone().into_state().expect("accepted checkpoint converts");
    assert_eq!(state.params.phi, phi);
    assert_eq!(state.params.num_features(), n);
    let again = Checkpoint::from_json(&ck.to_json().unwrap()).expect("serialized checkpoint parses");
    assert_eq!(again.phi, ck.phi);
});
