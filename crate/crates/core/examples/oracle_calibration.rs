//! Empirical recall of each tier's classifier stand-in against its
//! configured value.
//!
//! Run with `cargo run --release --example oracle_calibration`.

use tiersim::oracle::TierAccuracyProfile;
use tiersim::{seed, ConditionClass, InferenceMode};

fn main() {
    let n = 100_000u32;
    for tier in InferenceMode::ALL {
        let profile = TierAccuracyProfile::for_tier(tier);
        let mut rng = seed::stream(42, "calibration", tier.index() as u64);
        println!("{tier} (accuracy {:.2}%)", profile.accuracy * 100.0);
        for class in ConditionClass::ALL {
            let hits = (0..n).filter(|_| profile.classify(class, &mut rng) == class).count();
            let p = profile.recall[class.index()];
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            let got = hits as f64 / n as f64;
            println!(
                "  {:<15} configured {:>6.2}%  measured {:>6.2}%  ({:+.1} sd)",
                format!("{class:?}"),
                p * 100.0,
                got * 100.0,
                (got - p) / sd.max(f64::MIN_POSITIVE)
            );
        }
    }
}
