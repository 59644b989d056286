#![no_main]

use libfuzzer_sys::fuzz_target;

// Sweep plans are user-authored JSON; parse plus validate must hold the
// whole configuration surface (model shape, splits, phantom params).
fuzz_target!(|data: &[u8]| {
    if let Ok(plan) = serde_json::from_slice::<dwiseg::experiment::ExperimentPlan>(data) {
        let _ = plan.validate();
    }
});
