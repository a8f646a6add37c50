//! Four-dimensional upgrade compatibility: interface, policy, behavioral, and
//! recovery checkers, the weighted composite, and the two-step evaluation and
//! aggregation procedures.
//!
//! All checkers are pure functions over immutable inputs and are freely
//! parallelizable across candidates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::model::{
    BehavioralSignature, CapabilityManifest, CompatCategories, DeploymentProfile,
    BehavioralCategory, InterfaceCategory, PolicyCategory, RecoveryCategory, ProfileId,
    RiskLevel, TraceRecord,
};

const EPS: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Weights and policy rules
// ---------------------------------------------------------------------------

/// Weights of the composite score; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights {
    pub interface: f64,
    pub policy: f64,
    pub behavioral: f64,
    pub recovery: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self { interface: 0.22, policy: 0.25, behavioral: 0.30, recovery: 0.23 }
    }
}

impl CompositeWeights {
    pub fn sum(&self) -> f64 {
        self.interface + self.policy + self.behavioral + self.recovery
    }
}

/// One policy rule: covers execution modes of a tag class by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub tag: crate::model::ModeTag,
    pub covered_names: BTreeSet<String>,
}

/// The active policy set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PolicySet {
    pub rules: Vec<PolicyRule>,
}

impl PolicySet {
    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn covers(&self, mode: &crate::model::ExecutionMode) -> bool {
        self.rules.iter().any(|r| r.tag == mode.tag && r.covered_names.contains(&mode.name))
    }
}

/// Per-hook quality of a declared recovery facility, in [0,1]. Generator
/// annotations; 1.0 means fully intact, 0.5 present-but-degraded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryQuality {
    pub rollback: f64,
    pub fallback: f64,
    pub abort: f64,
    pub detect: f64,
}

impl Default for RecoveryQuality {
    fn default() -> Self {
        Self { rollback: 1.0, fallback: 1.0, abort: 1.0, detect: 1.0 }
    }
}

/// Evidence available at evaluation time beyond the manifests: a short
/// pre-trace behavioral signature and recovery-quality annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicEvidence {
    /// Signature of the candidate from sandbox pre-traces (or live evidence
    /// when re-evaluating).
    pub candidate_signature: BehavioralSignature,
    /// Signature of the currently active version.
    pub baseline_signature: BehavioralSignature,
    pub recovery_quality: RecoveryQuality,
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Routing recommendation from compatibility aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    Reject,
    RejectOrReview,
    Review,
    Sandbox,
    SandboxOrReview,
    Shadow,
    Activate,
}

impl Recommendation {
    /// Permissiveness rank on the order reject < review < sandbox < shadow <
    /// activate.
    pub fn permissiveness(&self) -> u8 {
        match self {
            Recommendation::Reject | Recommendation::RejectOrReview => 0,
            Recommendation::Review => 1,
            Recommendation::Sandbox | Recommendation::SandboxOrReview => 2,
            Recommendation::Shadow => 3,
            Recommendation::Activate => 4,
        }
    }

    /// Whether the recommendation permits eventual activation of the
    /// candidate (possibly after sandbox and shadow evidence).
    pub fn permits_activation(&self) -> bool {
        matches!(self, Recommendation::Activate | Recommendation::Shadow)
    }
}

/// Outcome of one compatibility evaluation. Dimensions skipped by fail-fast
/// ordering are `None`; the composite exists only when all four were scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    pub kappa_i: f64,
    pub kappa_p: Option<f64>,
    pub kappa_b: Option<f64>,
    pub kappa_r: Option<f64>,
    pub categories: CompatCategories,
    pub composite: Option<f64>,
    pub recommendation: Recommendation,
    pub profile_id: ProfileId,
}

impl CompatReport {
    /// Dimension that triggered interception, for screening attribution.
    pub fn blocking_dimension(&self) -> Option<&'static str> {
        if matches!(self.categories.interface, Some(InterfaceCategory::Incompatible)) {
            return Some("interface");
        }
        match self.categories.policy {
            Some(PolicyCategory::Incompatible) | Some(PolicyCategory::Review) => {
                return Some("policy")
            }
            _ => {}
        }
        match self.categories.behavioral {
            Some(BehavioralCategory::Incompatible) | Some(BehavioralCategory::Suspicious) => {
                return Some("behavioral")
            }
            _ => {}
        }
        match self.categories.recovery {
            Some(RecoveryCategory::Incompatible) | Some(RecoveryCategory::Fragile) => {
                return Some("recovery")
            }
            _ => {}
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

/// Number of times each checker ran; used to assert fail-fast ordering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckerCalls {
    pub interface: usize,
    pub policy: usize,
    pub behavioral: usize,
    pub recovery: usize,
}

/// Compatibility evaluator configured with composite weights.
#[derive(Debug, Clone)]
pub struct CompatEvaluator {
    pub weights: CompositeWeights,
    pub calls: CheckerCalls,
}

impl Default for CompatEvaluator {
    fn default() -> Self {
        Self::new(CompositeWeights::default())
    }
}

impl CompatEvaluator {
    pub fn new(weights: CompositeWeights) -> Self {
        debug_assert!((weights.sum() - 1.0).abs() < 1e-9, "weights must sum to 1");
        Self { weights, calls: CheckerCalls::default() }
    }

    /// Interface compatibility: one minus the mean of four deviation
    /// fractions (signature, invocation schema, pre/post tags, dependencies).
    pub fn check_interface(
        &mut self,
        old: &CapabilityManifest,
        new: &CapabilityManifest,
        profile: &DeploymentProfile,
    ) -> Result<(f64, InterfaceCategory)> {
        if old.family_id != new.family_id {
            return Err(EngineError::FamilyMismatch {
                old: old.family_id.clone(),
                new: new.family_id.clone(),
            });
        }
        self.calls.interface += 1;

        let delta_sig = {
            let old_fields: Vec<_> =
                old.input_schema.iter().chain(old.output_schema.iter()).collect();
            let new_fields: BTreeSet<_> =
                new.input_schema.iter().chain(new.output_schema.iter()).collect();
            fraction(old_fields.iter().filter(|f| !new_fields.contains(**f)).count(), old_fields.len())
        };

        let delta_schema = {
            let changed = old
                .invocation_schema
                .iter()
                .filter(|ep| {
                    !new.invocation_schema
                        .iter()
                        .any(|n| n.name == ep.name && n.contract == ep.contract)
                })
                .count();
            fraction(changed, old.invocation_schema.len())
        };

        let delta_prepost = {
            let old_tags: Vec<(&str, &str)> = old
                .invocation_schema
                .iter()
                .flat_map(|ep| {
                    ep.pre_tags
                        .iter()
                        .map(move |t| (ep.name.as_str(), t.as_str()))
                        .chain(ep.post_tags.iter().map(move |t| (ep.name.as_str(), t.as_str())))
                })
                .collect();
            let dropped = old_tags
                .iter()
                .filter(|(ep_name, tag)| {
                    !new.invocation_schema.iter().any(|n| {
                        n.name == *ep_name
                            && (n.pre_tags.contains(*tag) || n.post_tags.contains(*tag))
                    })
                })
                .count();
            fraction(dropped, old_tags.len())
        };

        let delta_dep = {
            let unsatisfiable = new
                .dependency_set
                .iter()
                .filter(|d| d.range.contains("unsatisfiable"))
                .count();
            fraction(unsatisfiable, new.dependency_set.len())
        };

        let kappa = 1.0 - (delta_sig + delta_schema + delta_prepost + delta_dep) / 4.0;
        let t = profile.dim_thresholds.interface;
        let category = if kappa >= t {
            InterfaceCategory::Compatible
        } else if kappa >= t - profile.conditional_margin {
            InterfaceCategory::Conditional
        } else {
            InterfaceCategory::Incompatible
        };
        Ok((kappa, category))
    }

    /// Policy coverage: the fraction of declared execution modes covered by
    /// at least one active policy rule.
    pub fn check_policy(
        &mut self,
        new: &CapabilityManifest,
        policy_set: &PolicySet,
        profile: &DeploymentProfile,
    ) -> Result<(f64, PolicyCategory)> {
        if policy_set.is_empty() {
            return Err(EngineError::EmptyPolicySet);
        }
        self.calls.policy += 1;

        let declared = new.permission_profile.len();
        let uncovered: Vec<_> =
            new.permission_profile.iter().filter(|m| !policy_set.covers(m)).collect();
        let kappa = if declared == 0 {
            1.0
        } else {
            (declared - uncovered.len()) as f64 / declared as f64
        };

        let t = profile.dim_thresholds.policy;
        let any_high_risk_uncovered = uncovered.iter().any(|m| m.risk == RiskLevel::High);
        let any_approval_uncovered =
            uncovered.iter().any(|m| m.risk > profile.approval_required_above_risk);

        let category = if any_high_risk_uncovered || kappa < t - profile.conditional_margin {
            PolicyCategory::Incompatible
        } else if any_approval_uncovered {
            PolicyCategory::Review
        } else if kappa >= t {
            PolicyCategory::Compatible
        } else {
            PolicyCategory::Conditional
        };
        Ok((kappa, category))
    }

    /// Behavioral drift between two signatures: worst-case directional drift
    /// over components, so a single safety-critical regression is never
    /// averaged away.
    pub fn check_behavioral(
        &mut self,
        old_sig: &BehavioralSignature,
        new_sig: &BehavioralSignature,
        profile: &DeploymentProfile,
    ) -> Result<(f64, BehavioralCategory)> {
        if old_sig.is_empty() || new_sig.is_empty() {
            return Err(EngineError::EmptySignature);
        }
        self.calls.behavioral += 1;

        // Adverse direction: success and recovery falling, everything else rising.
        let drop = |old: f64, new: f64| (old - new).max(0.0);
        let rise = |old: f64, new: f64| (new - old).max(0.0);
        let deltas = [
            drop(old_sig.mu_succ, new_sig.mu_succ),
            rise(old_sig.mu_time, new_sig.mu_time) / (old_sig.mu_time + EPS),
            rise(old_sig.mu_retry, new_sig.mu_retry) / (old_sig.mu_retry + EPS),
            rise(old_sig.mu_viol, new_sig.mu_viol),
            rise(old_sig.mu_anom, new_sig.mu_anom),
            drop(old_sig.mu_recover, new_sig.mu_recover),
        ];
        let drift = deltas.iter().cloned().fold(0.0_f64, f64::max);
        let kappa = (1.0 - drift).clamp(0.0, 1.0);

        let t = profile.dim_thresholds.behavioral;
        let margin = profile.conditional_margin;
        let mut category = if kappa >= t + margin {
            BehavioralCategory::Compatible
        } else if kappa >= t {
            BehavioralCategory::Suspicious
        } else {
            BehavioralCategory::Incompatible
        };

        // A version that improves nominal success while sharply worsening a
        // safety-critical rate is suspicious regardless of its score.
        let succ_improves = new_sig.mu_succ > old_sig.mu_succ;
        let safety_worsens = rise(old_sig.mu_viol, new_sig.mu_viol) > margin
            || rise(old_sig.mu_anom, new_sig.mu_anom) > margin;
        if succ_improves && safety_worsens && category == BehavioralCategory::Compatible {
            category = BehavioralCategory::Suspicious;
        }
        Ok((kappa, category))
    }

    /// Recovery readiness: weighted mean of the four recovery facilities.
    /// Returns `(kappa_r, rho, category)`; the score is the readiness itself.
    pub fn check_recovery(
        &mut self,
        _old: &CapabilityManifest,
        new: &CapabilityManifest,
        quality: &RecoveryQuality,
        profile: &DeploymentProfile,
    ) -> Result<(f64, f64, RecoveryCategory)> {
        self.calls.recovery += 1;
        let hook = |present: bool, q: f64| if present { q.clamp(0.0, 1.0) } else { 0.0 };
        let rp = &new.recovery_profile;
        let rho = 0.4 * hook(rp.rollback_hook, quality.rollback)
            + 0.2 * hook(rp.fallback_binding, quality.fallback)
            + 0.2 * hook(rp.safe_abort_hook, quality.abort)
            + 0.2 * hook(rp.failure_signal_observable, quality.detect);

        let t = profile.dim_thresholds.recovery;
        let margin = profile.conditional_margin;
        let category = if rho >= t + margin {
            RecoveryCategory::Compatible
        } else if rho >= t + margin / 2.0 {
            RecoveryCategory::Conditional
        } else if rho >= t {
            RecoveryCategory::Fragile
        } else {
            RecoveryCategory::Incompatible
        };
        Ok((rho, rho, category))
    }

    /// Average signatures over a trace batch.
    pub fn compute_signature(traces: &[TraceRecord]) -> Result<BehavioralSignature> {
        if traces.is_empty() {
            return Err(EngineError::EmptyTraces);
        }
        let version = &traces[0].capability_version;
        if traces.iter().any(|t| &t.capability_version != version) {
            return Err(EngineError::EmptyTraces);
        }
        let n = traces.len() as f64;
        Ok(BehavioralSignature {
            mu_succ: traces.iter().filter(|t| t.success).count() as f64 / n,
            mu_time: traces.iter().map(|t| t.duration).sum::<f64>() / n,
            mu_retry: traces.iter().map(|t| f64::from(t.retry_count)).sum::<f64>() / n,
            mu_viol: traces.iter().filter(|t| t.policy_hits > 0).count() as f64 / n,
            mu_anom: traces.iter().filter(|t| t.anomaly_flags > 0).count() as f64 / n,
            mu_recover: traces.iter().filter(|t| t.recovery_triggered).count() as f64 / n,
            episode_count: traces.len(),
        })
    }

    /// Full evaluation in procedure order with fail-fast: interface first,
    /// then policy, then behavioral and recovery, then aggregation.
    pub fn evaluate(
        &mut self,
        old: &CapabilityManifest,
        new: &CapabilityManifest,
        policy_set: &PolicySet,
        profile: &DeploymentProfile,
        evidence: &DynamicEvidence,
    ) -> Result<CompatReport> {
        let mut categories = CompatCategories::default();

        let (kappa_i, cat_i) = self.check_interface(old, new, profile)?;
        categories.interface = Some(cat_i);
        if cat_i == InterfaceCategory::Incompatible {
            return Ok(CompatReport {
                kappa_i,
                kappa_p: None,
                kappa_b: None,
                kappa_r: None,
                categories,
                composite: None,
                recommendation: Recommendation::Reject,
                profile_id: profile.profile_id,
            });
        }

        let (kappa_p, cat_p) = self.check_policy(new, policy_set, profile)?;
        categories.policy = Some(cat_p);
        if cat_p == PolicyCategory::Incompatible {
            return Ok(CompatReport {
                kappa_i,
                kappa_p: Some(kappa_p),
                kappa_b: None,
                kappa_r: None,
                categories,
                composite: None,
                recommendation: Recommendation::RejectOrReview,
                profile_id: profile.profile_id,
            });
        }

        let (kappa_b, cat_b) =
            self.check_behavioral(&evidence.baseline_signature, &evidence.candidate_signature, profile)?;
        categories.behavioral = Some(cat_b);
        let (kappa_r, _rho, cat_r) =
            self.check_recovery(old, new, &evidence.recovery_quality, profile)?;
        categories.recovery = Some(cat_r);

        let composite = self.composite(kappa_i, kappa_p, kappa_b, kappa_r);
        let recommendation = aggregate(&categories);
        Ok(CompatReport {
            kappa_i,
            kappa_p: Some(kappa_p),
            kappa_b: Some(kappa_b),
            kappa_r: Some(kappa_r),
            categories,
            composite: Some(composite),
            recommendation,
            profile_id: profile.profile_id,
        })
    }

    /// Diagnostic evaluation that scores all four dimensions even when an
    /// early dimension is incompatible. Used to emit the per-candidate score
    /// table; the pipeline itself uses the fail-fast `evaluate`.
    pub fn evaluate_full(
        &mut self,
        old: &CapabilityManifest,
        new: &CapabilityManifest,
        policy_set: &PolicySet,
        profile: &DeploymentProfile,
        evidence: &DynamicEvidence,
    ) -> Result<CompatReport> {
        let (kappa_i, cat_i) = self.check_interface(old, new, profile)?;
        let (kappa_p, cat_p) = self.check_policy(new, policy_set, profile)?;
        let (kappa_b, cat_b) =
            self.check_behavioral(&evidence.baseline_signature, &evidence.candidate_signature, profile)?;
        let (kappa_r, _rho, cat_r) =
            self.check_recovery(old, new, &evidence.recovery_quality, profile)?;
        let categories = CompatCategories {
            interface: Some(cat_i),
            policy: Some(cat_p),
            behavioral: Some(cat_b),
            recovery: Some(cat_r),
        };
        Ok(CompatReport {
            kappa_i,
            kappa_p: Some(kappa_p),
            kappa_b: Some(kappa_b),
            kappa_r: Some(kappa_r),
            composite: Some(self.composite(kappa_i, kappa_p, kappa_b, kappa_r)),
            recommendation: aggregate(&categories),
            categories,
            profile_id: profile.profile_id,
        })
    }

    pub fn composite(&self, kappa_i: f64, kappa_p: f64, kappa_b: f64, kappa_r: f64) -> f64 {
        self.weights.interface * kappa_i
            + self.weights.policy * kappa_p
            + self.weights.behavioral * kappa_b
            + self.weights.recovery * kappa_r
    }
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Aggregation of per-dimension categories into a routing recommendation.
pub fn aggregate(categories: &CompatCategories) -> Recommendation {
    if categories.interface == Some(InterfaceCategory::Incompatible) {
        return Recommendation::Reject;
    }
    if categories.policy == Some(PolicyCategory::Incompatible) {
        return Recommendation::Reject;
    }
    if categories.policy == Some(PolicyCategory::Review) {
        return Recommendation::Review;
    }
    if categories.behavioral == Some(BehavioralCategory::Incompatible) {
        return Recommendation::Sandbox;
    }
    if categories.recovery == Some(RecoveryCategory::Incompatible) {
        return Recommendation::SandboxOrReview;
    }
    if categories.behavioral == Some(BehavioralCategory::Suspicious)
        || categories.recovery == Some(RecoveryCategory::Fragile)
    {
        return Recommendation::Shadow;
    }
    Recommendation::Activate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dependency, EntryPoint, ExecutionMode, FieldDescriptor, ModeTag, RecoveryProfile};

    fn profile() -> DeploymentProfile {
        DeploymentProfile {
            profile_id: ProfileId::Sim,
            dim_thresholds: crate::model::DimThresholds {
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
        }
    }

    fn manifest(version: &str) -> CapabilityManifest {
        CapabilityManifest {
            family_id: "grasp".into(),
            version_id: version.into(),
            parent_version: None,
            input_schema: vec![
                FieldDescriptor::new("pose", "pose6d"),
                FieldDescriptor::new("force", "newtons"),
            ],
            output_schema: vec![FieldDescriptor::new("grip", "grip_state")],
            invocation_schema: vec![EntryPoint {
                name: "execute".into(),
                contract: "v1".into(),
                pre_tags: ["object_visible".to_string()].into(),
                post_tags: ["object_held".to_string()].into(),
            }],
            permission_profile: vec![ExecutionMode {
                name: "gripper".into(),
                tag: ModeTag::ActuatorAccess,
                risk: RiskLevel::Low,
            }],
            recovery_profile: RecoveryProfile::intact(),
            dependency_set: vec![Dependency { name: "kinematics".into(), range: ">=1".into() }],
            environment_scope: ["sim".to_string()].into(),
            risk_level: RiskLevel::Low,
        }
    }

    fn signature(succ: f64, time: f64, retry: f64, viol: f64, anom: f64, recover: f64) -> BehavioralSignature {
        BehavioralSignature {
            mu_succ: succ,
            mu_time: time,
            mu_retry: retry,
            mu_viol: viol,
            mu_anom: anom,
            mu_recover: recover,
            episode_count: 40,
        }
    }

    #[test]
    fn identical_manifests_are_fully_interface_compatible() {
        let mut ev = CompatEvaluator::default();
        let m = manifest("v0");
        let (kappa, cat) = ev.check_interface(&m, &m, &profile()).unwrap();
        assert_eq!(kappa, 1.0);
        assert_eq!(cat, InterfaceCategory::Compatible);
    }

    #[test]
    fn one_dependency_of_four_unsatisfiable() {
        let mut ev = CompatEvaluator::default();
        let old = manifest("v0");
        let mut new = manifest("v1");
        new.dependency_set = vec![
            Dependency { name: "kinematics".into(), range: ">=1".into() },
            Dependency { name: "planner".into(), range: ">=2".into() },
            Dependency { name: "driver".into(), range: ">=1".into() },
            Dependency { name: "vision".into(), range: "unsatisfiable".into() },
        ];
        let (kappa, _) = ev.check_interface(&old, &new, &profile()).unwrap();
        // One deviation class at 0.25, three at zero.
        assert!((kappa - 0.9375).abs() < 1e-12);
    }

    #[test]
    fn family_mismatch_is_an_error() {
        let mut ev = CompatEvaluator::default();
        let old = manifest("v0");
        let mut new = manifest("v1");
        new.family_id = "align".into();
        assert!(ev.check_interface(&old, &new, &profile()).is_err());
    }

    #[test]
    fn policy_coverage_ratio_counts_modes() {
        let mut ev = CompatEvaluator::default();
        let mut m = manifest("v1");
        m.permission_profile = (0..30)
            .map(|i| ExecutionMode {
                name: format!("mode{i}"),
                tag: ModeTag::ToolAccess,
                risk: RiskLevel::Low,
            })
            .collect();
        let policy = PolicySet {
            rules: vec![PolicyRule {
                tag: ModeTag::ToolAccess,
                covered_names: (0..29).map(|i| format!("mode{i}")).collect(),
            }],
        };
        let (kappa, cat) = ev.check_policy(&m, &policy, &profile()).unwrap();
        assert!((kappa - 29.0 / 30.0).abs() < 1e-12);
        assert_eq!(cat, PolicyCategory::Compatible);
    }

    #[test]
    fn empty_policy_set_is_an_error() {
        let mut ev = CompatEvaluator::default();
        let m = manifest("v1");
        assert!(ev.check_policy(&m, &PolicySet::default(), &profile()).is_err());
    }

    #[test]
    fn signature_means_match_hand_computation() {
        let traces: Vec<TraceRecord> = (0..10)
            .map(|i| TraceRecord {
                capability_version: "v1".into(),
                context: crate::model::TraceContext::SandboxCanonical,
                task_family: crate::model::TaskFamily::Grasp,
                success: i < 7,
                duration: 10.0 + i as f64,
                retry_count: u32::from(i % 2 == 0),
                policy_hits: u32::from(i == 3),
                anomaly_flags: u32::from(i >= 8),
                recovery_triggered: i == 9,
                unsafe_continuation: false,
                timestamp: i as u64,
            })
            .collect();
        let sig = CompatEvaluator::compute_signature(&traces).unwrap();
        assert!((sig.mu_succ - 0.7).abs() < 1e-12);
        assert!((sig.mu_time - 14.5).abs() < 1e-12);
        assert!((sig.mu_retry - 0.5).abs() < 1e-12);
        assert!((sig.mu_viol - 0.1).abs() < 1e-12);
        assert!((sig.mu_anom - 0.2).abs() < 1e-12);
        assert!((sig.mu_recover - 0.1).abs() < 1e-12);
        assert_eq!(sig.episode_count, 10);
    }

    #[test]
    fn anomaly_rate_of_hundred_episodes() {
        let traces: Vec<TraceRecord> = (0..100)
            .map(|i| TraceRecord {
                capability_version: "v1".into(),
                context: crate::model::TraceContext::SandboxCanonical,
                task_family: crate::model::TaskFamily::Grasp,
                success: true,
                duration: 10.0,
                retry_count: 0,
                policy_hits: 0,
                anomaly_flags: u32::from(i < 5),
                recovery_triggered: false,
                unsafe_continuation: false,
                timestamp: i as u64,
            })
            .collect();
        let sig = CompatEvaluator::compute_signature(&traces).unwrap();
        assert!((sig.mu_anom - 0.05).abs() < 1e-12);
    }

    #[test]
    fn identical_signatures_are_behaviorally_compatible() {
        let mut ev = CompatEvaluator::default();
        let s = signature(0.7, 10.0, 0.1, 0.1, 0.05, 0.5);
        let (kappa, cat) = ev.check_behavioral(&s, &s, &profile()).unwrap();
        assert_eq!(kappa, 1.0);
        assert_eq!(cat, BehavioralCategory::Compatible);
    }

    #[test]
    fn anomaly_drift_sets_score() {
        let mut ev = CompatEvaluator::default();
        let old = signature(0.7, 10.0, 0.1, 0.1, 0.05, 0.5);
        let new = signature(0.7, 10.0, 0.1, 0.1, 0.27, 0.5);
        let (kappa, cat) = ev.check_behavioral(&old, &new, &profile()).unwrap();
        assert!((kappa - 0.78).abs() < 1e-9);
        assert_eq!(cat, BehavioralCategory::Incompatible);
    }

    #[test]
    fn success_gain_with_safety_loss_is_suspicious() {
        let mut ev = CompatEvaluator::default();
        let old = signature(0.7, 10.0, 0.1, 0.1, 0.05, 0.5);
        let new = signature(0.8, 10.0, 0.1, 0.1, 0.18, 0.5);
        let (kappa, cat) = ev.check_behavioral(&old, &new, &profile()).unwrap();
        assert!((kappa - 0.87).abs() < 1e-9);
        assert!(kappa >= 0.85);
        assert_eq!(cat, BehavioralCategory::Suspicious);
    }

    #[test]
    fn empty_signature_is_an_error() {
        let mut ev = CompatEvaluator::default();
        let ok = signature(0.7, 10.0, 0.1, 0.1, 0.05, 0.5);
        let empty = BehavioralSignature { episode_count: 0, ..ok };
        assert!(ev.check_behavioral(&ok, &empty, &profile()).is_err());
    }

    #[test]
    fn recovery_readiness_weighted_mean() {
        let mut ev = CompatEvaluator::default();
        let old = manifest("v0");
        let mut new = manifest("v1");
        let quality = RecoveryQuality::default();
        let (kappa, rho, cat) = ev.check_recovery(&old, &new, &quality, &profile()).unwrap();
        assert_eq!(kappa, 1.0);
        assert_eq!(rho, 1.0);
        assert_eq!(cat, RecoveryCategory::Compatible);

        new.recovery_profile.rollback_hook = false;
        let (kappa, _, _) = ev.check_recovery(&old, &new, &quality, &profile()).unwrap();
        assert!((kappa - 0.6).abs() < 1e-12);
    }

    #[test]
    fn marginal_recovery_quality() {
        let mut ev = CompatEvaluator::default();
        let old = manifest("v0");
        let new = manifest("v1");
        let quality = RecoveryQuality { detect: 0.85, ..RecoveryQuality::default() };
        let (kappa, _, cat) = ev.check_recovery(&old, &new, &quality, &profile()).unwrap();
        assert!((kappa - 0.97).abs() < 1e-12);
        assert_eq!(cat, RecoveryCategory::Compatible);
    }

    #[test]
    fn aggregation_matches_procedure() {
        use BehavioralCategory as B;
        use InterfaceCategory as I;
        use PolicyCategory as P;
        use RecoveryCategory as R;
        let cats = |i, p, b, r| CompatCategories {
            interface: Some(i),
            policy: Some(p),
            behavioral: Some(b),
            recovery: Some(r),
        };
        assert_eq!(
            aggregate(&cats(I::Compatible, P::Review, B::Compatible, R::Compatible)),
            Recommendation::Review
        );
        assert_eq!(
            aggregate(&CompatCategories {
                interface: Some(I::Incompatible),
                ..Default::default()
            }),
            Recommendation::Reject
        );
        assert_eq!(
            aggregate(&cats(I::Compatible, P::Compatible, B::Suspicious, R::Compatible)),
            Recommendation::Shadow
        );
        assert_eq!(
            aggregate(&cats(I::Compatible, P::Compatible, B::Incompatible, R::Compatible)),
            Recommendation::Sandbox
        );
        assert_eq!(
            aggregate(&cats(I::Compatible, P::Compatible, B::Compatible, R::Incompatible)),
            Recommendation::SandboxOrReview
        );
        assert_eq!(
            aggregate(&cats(I::Compatible, P::Compatible, B::Compatible, R::Compatible)),
            Recommendation::Activate
        );
    }

    #[test]
    fn fail_fast_skips_downstream_checkers() {
        let mut ev = CompatEvaluator::default();
        let old = manifest("v0");
        let mut new = manifest("v1");
        // Retype every schema field and change every invocation contract.
        for f in new.input_schema.iter_mut().chain(new.output_schema.iter_mut()) {
            f.kind = format!("{}_mk2", f.kind);
        }
        for ep in &mut new.invocation_schema {
            ep.contract = "v2".into();
        }
        let policy = PolicySet {
            rules: vec![PolicyRule {
                tag: ModeTag::ActuatorAccess,
                covered_names: ["gripper".to_string()].into(),
            }],
        };
        let sig = signature(0.7, 10.0, 0.1, 0.1, 0.05, 0.5);
        let evidence = DynamicEvidence {
            candidate_signature: sig,
            baseline_signature: sig,
            recovery_quality: RecoveryQuality::default(),
        };
        let report = ev.evaluate(&old, &new, &policy, &profile(), &evidence).unwrap();
        assert_eq!(report.kappa_i, 0.5);
        assert_eq!(report.recommendation, Recommendation::Reject);
        assert!(report.kappa_p.is_none() && report.kappa_b.is_none() && report.kappa_r.is_none());
        assert_eq!(ev.calls.interface, 1);
        assert_eq!(ev.calls.policy, 0);
        assert_eq!(ev.calls.behavioral, 0);
        assert_eq!(ev.calls.recovery, 0);
    }
}
