//! Fuzz MDP JSON parsing.
//!
//! Accepted MDPs must re-serialize losslessly, and small ones must survive
//! the bisimulation oracle and exact policy evaluation without panicking.
#![no_main]
use libfuzzer_sys::fuzz_target;
use model_features::abstraction::{coarsest_bisimulation, REFINE_TOL};
use model_features::mdp::{evaluate_policy_exact, uniform_policy, TabularMdp, EVAL_TOL};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(mdp) = TabularMdp::from_json(s) else { return };
    let json = mdp.to_json().expect("accepted MDP serializes");
    let back = TabularMdp::from_json(&json).expect("serialized MDP parses");
    assert_eq!(mdp, back);

    if mdp.num_states() <= 8 && mdp.discount() <= 0.99 {
        let p = coarsest_bisimulation(&mdp, REFINE_TOL);
        assert_eq!(p.num_states(), mdp.num_states());
        let _ = evaluate_policy_exact(&mdp, &uniform_policy(&mdp), EVAL_TOL);
    }
});
