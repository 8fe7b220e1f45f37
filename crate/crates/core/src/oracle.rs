//! Seeded stand-in for the per-tier condition classifiers.
//!
//! Ground truth is a per-node labeled stream: a window is anomalous with a
//! fixed probability, then split between the two classes on each side. Each
//! tier's classifier reproduces its configured per-class recall; on a miss it
//! picks another class from an error distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{AnomalyMapping, ConditionClass, InferenceMode, NodeId, Prediction};
use crate::seed;

/// How a misclassified window is relabeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorDistribution {
    /// Neighboring grades only; interior classes split evenly between their
    /// two neighbors.
    #[default]
    Adjacent,
    /// Any of the other three classes with equal probability.
    Uniform,
    /// Row `i` holds relative weights for predicting each class when the
    /// true class is `i`. The diagonal is ignored.
    Matrix([[f64; 4]; 4]),
}

impl ErrorDistribution {
    fn weights(&self, truth: ConditionClass) -> [f64; 4] {
        let i = truth.index();
        let mut w = match self {
            ErrorDistribution::Uniform => [1.0; 4],
            ErrorDistribution::Adjacent => {
                let mut w = [0.0; 4];
                if i > 0 {
                    w[i - 1] = 1.0;
                }
                if i < 3 {
                    w[i + 1] = 1.0;
                }
                w
            }
            ErrorDistribution::Matrix(m) => m[i],
        };
        w[i] = 0.0;
        w
    }

    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if let ErrorDistribution::Matrix(m) = self {
            for (i, row) in m.iter().enumerate() {
                let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, w)| *w).sum();
                if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !(off > 0.0) {
                    return Err(ConfigError::invalid(
                        format!("{field}.errors"),
                        format!("row {i} needs non-negative weights with a positive off-diagonal sum"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierAccuracyProfile {
    /// Reported overall accuracy. Informational; recalls drive sampling.
    pub accuracy: f64,
    /// Recall for Good, Acceptable, Unsatisfactory, Unacceptable.
    pub recall: [f64; 4],
    #[serde(default)]
    pub errors: ErrorDistribution,
}

impl TierAccuracyProfile {
    pub fn cloud() -> Self {
        Self::with_recall(0.9938, [0.9811, 0.9971, 0.9856, 0.9969])
    }

    pub fn gateway() -> Self {
        Self::with_recall(0.9406, [0.8440, 0.9677, 0.9809, 0.9511])
    }

    pub fn sensor() -> Self {
        Self::with_recall(0.9140, [0.8113, 0.9941, 0.9781, 0.9961])
    }

    pub fn perfect() -> Self {
        Self::with_recall(1.0, [1.0; 4])
    }

    pub fn with_recall(accuracy: f64, recall: [f64; 4]) -> Self {
        TierAccuracyProfile {
            accuracy,
            recall,
            errors: ErrorDistribution::default(),
        }
    }

    pub fn for_tier(tier: InferenceMode) -> Self {
        match tier {
            InferenceMode::S => Self::sensor(),
            InferenceMode::G => Self::gateway(),
            InferenceMode::C => Self::cloud(),
        }
    }

    pub fn validate(&self, field: &str) -> Result<(), ConfigError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.accuracy) || !self.recall.iter().all(|r| unit(*r)) {
            return Err(ConfigError::invalid(field, "accuracy and recalls must lie in [0, 1]"));
        }
        self.errors.validate(field)
    }

    /// Samples the predicted class for a window whose true class is `truth`.
    pub fn classify<R: Rng + ?Sized>(&self, truth: ConditionClass, rng: &mut R) -> ConditionClass {
        let hit: f64 = rng.random();
        if hit < self.recall[truth.index()] {
            return truth;
        }
        let w = self.errors.weights(truth);
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, wi) in w.iter().enumerate() {
            if *wi > 0.0 {
                if u < *wi {
                    return ConditionClass::from_index(i).expect("index < 4");
                }
                u -= *wi;
            }
        }
        // rounding left u at the top edge: take the last class with weight
        let last = w.iter().rposition(|x| *x > 0.0).expect("positive weight");
        ConditionClass::from_index(last).expect("index < 4")
    }
}

/// Oracle prediction for one window at one tier.
pub fn predict<R: Rng + ?Sized>(
    profile: &TierAccuracyProfile,
    tier: InferenceMode,
    node: NodeId,
    timestep: u64,
    truth: ConditionClass,
    mapping: &AnomalyMapping,
    rng: &mut R,
) -> Prediction {
    let class = profile.classify(truth, rng);
    Prediction::new(node, timestep, class, tier, mapping)
}

/// Ground-truth condition stream for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthProcess {
    pub anomaly_probability: f64,
    /// P(Good | healthy window); the rest are Acceptable.
    pub good_fraction: f64,
    /// P(Unsatisfactory | anomalous window); the rest are Unacceptable.
    pub unsatisfactory_fraction: f64,
    pub seed: u64,
}

impl GroundTruthProcess {
    pub fn new(anomaly_probability: f64, seed: u64) -> Self {
        GroundTruthProcess {
            anomaly_probability,
            good_fraction: 0.5,
            unsatisfactory_fraction: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.anomaly_probability) {
            return Err(ConfigError::invalid(
                "ground_truth.anomaly_probability",
                "must lie in [0, 1]",
            ));
        }
        if !unit(self.good_fraction) || !unit(self.unsatisfactory_fraction) {
            return Err(ConfigError::invalid(
                "ground_truth.good_fraction",
                "class split fractions must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    /// True class of the window at `timestep`. Depends only on
    /// `(seed, timestep)`.
    pub fn draw(&self, timestep: u64) -> ConditionClass {
        let mut rng = seed::stream(self.seed, "ground-truth-step", timestep);
        let anomalous = rng.random::<f64>() < self.anomaly_probability;
        let first = if anomalous {
            rng.random::<f64>() < self.unsatisfactory_fraction
        } else {
            rng.random::<f64>() < self.good_fraction
        };
        match (anomalous, first) {
            (false, true) => ConditionClass::Good,
            (false, false) => ConditionClass::Acceptable,
            (true, true) => ConditionClass::Unsatisfactory,
            (true, false) => ConditionClass::Unacceptable,
        }
    }
}

/// Free-function form of [`GroundTruthProcess::draw`].
pub fn draw_ground_truth(process: &GroundTruthProcess, timestep: u64) -> ConditionClass {
    process.draw(timestep)
}
