use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Probability,
    LogOdds,
}

/// An additive local explanation: `base_value + sum(contributions)` is meant
/// to reconstruct `fx`, the model output for `explained_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub features: Vec<String>,
    pub base_value: f64,
    pub contributions: Vec<f64>,
    pub fx: f64,
    pub explained_class: String,
    pub units: Units,
}

impl Attribution {
    pub fn with_features(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.contributions.len());
        self.features = names;
        self
    }

    pub fn with_class(mut self, label: &str) -> Self {
        self.explained_class = label.to_string();
        self
    }

    pub fn reconstruction(&self) -> f64 {
        self.base_value + self.contributions.iter().sum::<f64>()
    }

    /// `|fx - (base_value + sum(contributions))|`
    pub fn efficiency_gap(&self) -> f64 {
        (self.fx - self.reconstruction()).abs()
    }

    pub fn is_finite(&self) -> bool {
        self.base_value.is_finite() && self.fx.is_finite() && self.contributions.iter().all(|c| c.is_finite())
    }
}
