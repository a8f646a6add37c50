//! Harness configuration: seeds, families, profiles, evaluation budgets, and
//! calibration constants. One JSON document drives a full reproducible run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compat::CompositeWeights;
use crate::envsim::PoolVariant;
use crate::error::{EngineError, Result};
use crate::model::{DeploymentProfile, DimThresholds, ProfileId, RiskLevel, TaskFamily};

/// How approval-bound activations are resolved in batch runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ApprovalPolicy {
    AutoApprove,
    AutoDeny,
    /// Explicit per-round decisions; rounds not listed fall back to deny.
    Scripted { rounds: BTreeMap<u32, bool> },
}

impl ApprovalPolicy {
    pub fn resolve(&self, round: u32) -> bool {
        match self {
            ApprovalPolicy::AutoApprove => true,
            ApprovalPolicy::AutoDeny => false,
            ApprovalPolicy::Scripted { rounds } => rounds.get(&round).copied().unwrap_or(false),
        }
    }
}

/// Episode budgets and gate constants of the staged pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub sandbox_episodes_per_mode: usize,
    pub shadow_episodes: usize,
    pub live_episodes_per_round: usize,
    pub monitor_window: usize,
    pub sandbox_success_floor: f64,
    pub mean_divergence_limit: f64,
    /// Per-profile ceiling on any single governance-divergence category
    /// observed in shadow.
    pub divergence_count_limits: BTreeMap<ProfileId, u32>,
    /// Window budget of one post-activation drift attempt.
    pub drift_max_windows: usize,
    /// Rollback success multiplier when recovery readiness was not verified
    /// at admission.
    pub rollback_arming_penalty: f64,
    /// Live probe episodes recorded per candidate in instrumented runs.
    pub probe_episodes: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            sandbox_episodes_per_mode: 30,
            shadow_episodes: 40,
            live_episodes_per_round: 25,
            monitor_window: 20,
            sandbox_success_floor: 0.5,
            mean_divergence_limit: 0.25,
            divergence_count_limits: [
                (ProfileId::Sim, 3),
                (ProfileId::Real, 2),
                (ProfileId::Human, 1),
            ]
            .into(),
            drift_max_windows: 40,
            rollback_arming_penalty: 0.73,
            probe_episodes: 25,
        }
    }
}

/// The full harness configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    /// Seeds for the 5-seed experiments; the first is the calibration anchor.
    pub seeds: Vec<u64>,
    /// Seeds for the deployment-rounds experiment (15 by default).
    pub rounds_seeds: Vec<u64>,
    pub families: Vec<TaskFamily>,
    pub rounds: u32,
    pub weights: CompositeWeights,
    pub profiles: BTreeMap<ProfileId, DeploymentProfile>,
    pub pipeline: PipelineSettings,
    pub approval: ApprovalPolicy,
    pub pool_variant: PoolVariant,
    /// Threshold scaling factors for the sensitivity study.
    pub sensitivity_factors: Vec<(String, f64)>,
    pub bootstrap_resamples: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seeds: vec![42, 43, 44, 45, 46],
            rounds_seeds: (42..57).collect(),
            families: vec![TaskFamily::Grasp, TaskFamily::Align, TaskFamily::Place],
            rounds: 6,
            weights: CompositeWeights::default(),
            profiles: default_profiles(),
            pipeline: PipelineSettings::default(),
            approval: ApprovalPolicy::AutoDeny,
            pool_variant: PoolVariant::MarginalPair,
            sensitivity_factors: vec![
                ("relaxed".to_string(), 0.9),
                ("base".to_string(), 1.0),
                ("strict".to_string(), 1.1),
            ],
            bootstrap_resamples: 2000,
        }
    }
}

impl HarnessConfig {
    pub fn profile(&self, id: ProfileId) -> &DeploymentProfile {
        &self.profiles[&id]
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.rounds_seeds.is_empty() {
            return Err(EngineError::Config("seeds must be non-empty".into()));
        }
        if self.rounds == 0 {
            return Err(EngineError::Config("rounds must be >= 1".into()));
        }
        if (self.weights.sum() - 1.0).abs() > 1e-9 {
            return Err(EngineError::Config("composite weights must sum to 1".into()));
        }
        for id in ProfileId::all() {
            if !self.profiles.contains_key(&id) {
                return Err(EngineError::Config(format!("missing profile `{id}`")));
            }
        }
        let sim = &self.profiles[&ProfileId::Sim].dim_thresholds;
        let real = &self.profiles[&ProfileId::Real].dim_thresholds;
        let human = &self.profiles[&ProfileId::Human].dim_thresholds;
        let monotone = |a: f64, b: f64, c: f64| a <= b && b <= c;
        if !(monotone(sim.interface, real.interface, human.interface)
            && monotone(sim.policy, real.policy, human.policy)
            && monotone(sim.behavioral, real.behavioral, human.behavioral)
            && monotone(sim.recovery, real.recovery, human.recovery))
        {
            return Err(EngineError::Config("profile thresholds must be monotone".into()));
        }
        for profile in self.profiles.values() {
            let t = &profile.dim_thresholds;
            if profile.composite_threshold < t.min() || profile.composite_threshold > 1.0 {
                return Err(EngineError::Config(format!(
                    "composite threshold of `{}` outside [min dim threshold, 1]",
                    profile.profile_id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: HarnessConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Derived config with all four dimension thresholds uniformly scaled.
    pub fn with_threshold_factor(&self, factor: f64) -> Self {
        let mut cfg = self.clone();
        for profile in cfg.profiles.values_mut() {
            profile.dim_thresholds = profile.dim_thresholds.scaled(factor);
        }
        cfg
    }
}

/// Shipped deployment profiles. Thresholds tighten monotonically from sim
/// through real to human.
pub fn default_profiles() -> BTreeMap<ProfileId, DeploymentProfile> {
    [
        (
            ProfileId::Sim,
            DeploymentProfile {
                profile_id: ProfileId::Sim,
                dim_thresholds: DimThresholds {
                    interface: 0.95,
                    policy: 0.90,
                    behavioral: 0.85,
                    recovery: 0.80,
                },
                composite_threshold: 0.95,
                conditional_margin: 0.05,
                approval_required_above_risk: RiskLevel::High,
                anomaly_tolerance: 0.50,
                unsafe_continuation_penalty_weight: 0.25,
                shadow_mandatory: true,
                rollback_coupled_activation: false,
            },
        ),
        (
            ProfileId::Real,
            DeploymentProfile {
                profile_id: ProfileId::Real,
                dim_thresholds: DimThresholds {
                    interface: 0.96,
                    policy: 0.92,
                    behavioral: 0.88,
                    recovery: 0.85,
                },
                composite_threshold: 0.955,
                conditional_margin: 0.05,
                approval_required_above_risk: RiskLevel::High,
                anomaly_tolerance: 0.10,
                unsafe_continuation_penalty_weight: 0.5,
                shadow_mandatory: true,
                rollback_coupled_activation: true,
            },
        ),
        (
            ProfileId::Human,
            DeploymentProfile {
                profile_id: ProfileId::Human,
                dim_thresholds: DimThresholds {
                    interface: 0.97,
                    policy: 0.94,
                    behavioral: 0.91,
                    recovery: 0.88,
                },
                composite_threshold: 0.96,
                conditional_margin: 0.05,
                approval_required_above_risk: RiskLevel::Low,
                anomaly_tolerance: 0.05,
                unsafe_continuation_penalty_weight: 1.0,
                shadow_mandatory: true,
                rollback_coupled_activation: true,
            },
        ),
    ]
    .into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        HarnessConfig::default().validate().unwrap();
    }

    #[test]
    fn default_profile_thresholds_are_monotone() {
        let profiles = default_profiles();
        let sim = &profiles[&ProfileId::Sim].dim_thresholds;
        let real = &profiles[&ProfileId::Real].dim_thresholds;
        let human = &profiles[&ProfileId::Human].dim_thresholds;
        for (a, b, c) in [
            (sim.interface, real.interface, human.interface),
            (sim.policy, real.policy, human.policy),
            (sim.behavioral, real.behavioral, human.behavioral),
            (sim.recovery, real.recovery, human.recovery),
        ] {
            assert!(a <= b && b <= c);
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = HarnessConfig::default();
        let text = cfg.to_json();
        let parsed: HarnessConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, parsed);
    }
}
