//! Shared domain types: capability manifests, behavioral signatures,
//! deployment profiles, lifecycle states, and telemetry records.
//!
//! Everything here is an immutable value object once constructed; it is safe
//! to copy and move between threads. Canonical on-disk form is one JSON
//! document per manifest and JSONL for trace streams, with field names
//! exactly as declared on the types.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Manifest building blocks
// ---------------------------------------------------------------------------

/// Declared risk of a capability version or execution mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskLevel::Low => write!(f, "low"),
            RiskLevel::Medium => write!(f, "medium"),
            RiskLevel::High => write!(f, "high"),
        }
    }
}

/// One schema field: a name paired with a semantic kind. Fields compare by
/// name-and-kind equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    pub kind: String,
}

impl FieldDescriptor {
    pub fn new(name: impl Into<String>, kind: impl Into<String>) -> Self {
        Self { name: name.into(), kind: kind.into() }
    }
}

/// One invocation entry point with its contract tag and pre/postcondition tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryPoint {
    pub name: String,
    /// Calling-contract marker; a change here means the invocation contract
    /// changed even when the name is stable.
    pub contract: String,
    pub pre_tags: BTreeSet<String>,
    pub post_tags: BTreeSet<String>,
}

/// Tag class of a declared execution mode. Every mode carries exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    ActuatorAccess,
    ToolAccess,
    EnvironmentScope,
    ResourceClass,
}

/// One declared execution mode: a tagged capability request.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExecutionMode {
    pub name: String,
    pub tag: ModeTag,
    pub risk: RiskLevel,
}

/// Recovery facilities declared by a version. Flags are independent booleans;
/// quality degradation of a present hook is carried separately as evaluation
/// evidence, not in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryProfile {
    pub rollback_hook: bool,
    pub fallback_binding: bool,
    pub safe_abort_hook: bool,
    pub failure_signal_observable: bool,
}

impl RecoveryProfile {
    pub fn intact() -> Self {
        Self {
            rollback_hook: true,
            fallback_binding: true,
            safe_abort_hook: true,
            failure_signal_observable: true,
        }
    }
}

/// A dependency declaration: name plus a version-range expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub name: String,
    pub range: String,
}

// ---------------------------------------------------------------------------
// CapabilityManifest
// ---------------------------------------------------------------------------

/// The machine-readable description of one capability version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityManifest {
    pub family_id: String,
    pub version_id: String,
    pub parent_version: Option<String>,
    pub input_schema: Vec<FieldDescriptor>,
    pub output_schema: Vec<FieldDescriptor>,
    pub invocation_schema: Vec<EntryPoint>,
    pub permission_profile: Vec<ExecutionMode>,
    pub recovery_profile: RecoveryProfile,
    pub dependency_set: Vec<Dependency>,
    pub environment_scope: BTreeSet<String>,
    pub risk_level: RiskLevel,
}

/// Result of manifest validation: `Ok` or the list of invariant violations.
/// Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifestValidation {
    Ok,
    Violations(Vec<String>),
}

impl ManifestValidation {
    pub fn is_ok(&self) -> bool {
        matches!(self, ManifestValidation::Ok)
    }
}

/// Check every structural invariant of a manifest and report all violations.
pub fn validate_manifest(manifest: &CapabilityManifest) -> ManifestValidation {
    let mut violations = Vec::new();
    if manifest.family_id.is_empty() {
        violations.push("family_id empty".to_string());
    }
    if manifest.version_id.is_empty() {
        violations.push("version_id empty".to_string());
    }
    if manifest.input_schema.is_empty() {
        violations.push("input_schema empty".to_string());
    }
    if manifest.output_schema.is_empty() {
        violations.push("output_schema empty".to_string());
    }
    if manifest.permission_profile.is_empty() {
        violations.push("permission_profile empty".to_string());
    }
    let mut seen = BTreeSet::new();
    for mode in &manifest.permission_profile {
        if !seen.insert((mode.name.clone(), mode.tag)) {
            violations.push(format!("duplicate execution mode `{}`", mode.name));
        }
    }
    if violations.is_empty() {
        ManifestValidation::Ok
    } else {
        ManifestValidation::Violations(violations)
    }
}

// ---------------------------------------------------------------------------
// BehavioralSignature
// ---------------------------------------------------------------------------

/// Trace-derived behavioral profile of a version: component-wise episode means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehavioralSignature {
    /// Success rate in [0,1].
    pub mu_succ: f64,
    /// Mean episode duration, abstract time units.
    pub mu_time: f64,
    /// Mean retries per episode.
    pub mu_retry: f64,
    /// Policy violation / near-violation rate in [0,1].
    pub mu_viol: f64,
    /// Anomaly rate in [0,1].
    pub mu_anom: f64,
    /// Recovery-trigger rate in [0,1].
    pub mu_recover: f64,
    pub episode_count: usize,
}

impl BehavioralSignature {
    /// A signature with no episodes is unusable for drift comparison.
    pub fn is_empty(&self) -> bool {
        self.episode_count == 0
    }
}

// ---------------------------------------------------------------------------
// DeploymentProfile
// ---------------------------------------------------------------------------

/// Deployment context identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileId {
    Sim,
    Real,
    Human,
}

impl ProfileId {
    pub fn all() -> [ProfileId; 3] {
        [ProfileId::Sim, ProfileId::Real, ProfileId::Human]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProfileId::Sim => "sim",
            ProfileId::Real => "real",
            ProfileId::Human => "human",
        }
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProfileId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" => Ok(ProfileId::Sim),
            "real" => Ok(ProfileId::Real),
            "human" => Ok(ProfileId::Human),
            other => Err(format!("unknown profile `{other}`")),
        }
    }
}

/// Per-dimension compatibility thresholds (interface, policy, behavioral,
/// recovery), each in (0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimThresholds {
    pub interface: f64,
    pub policy: f64,
    pub behavioral: f64,
    pub recovery: f64,
}

impl DimThresholds {
    pub fn min(&self) -> f64 {
        self.interface.min(self.policy).min(self.behavioral).min(self.recovery)
    }

    /// Uniform multiplicative scaling, clamped at 0.995 so a perfect candidate
    /// can never be rejected by threshold tightening.
    pub fn scaled(&self, factor: f64) -> Self {
        let clamp = |x: f64| (x * factor).min(0.995);
        Self {
            interface: clamp(self.interface),
            policy: clamp(self.policy),
            behavioral: clamp(self.behavioral),
            recovery: clamp(self.recovery),
        }
    }
}

/// Governance configuration of one deployment context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentProfile {
    pub profile_id: ProfileId,
    pub dim_thresholds: DimThresholds,
    pub composite_threshold: f64,
    /// Width of the conditional band below each dimension threshold.
    pub conditional_margin: f64,
    /// Activations of versions riskier than this require approval.
    pub approval_required_above_risk: RiskLevel,
    /// Tolerated violation/anomaly rate in sandbox metrics and in the
    /// post-activation monitor.
    pub anomaly_tolerance: f64,
    pub unsafe_continuation_penalty_weight: f64,
    pub shadow_mandatory: bool,
    pub rollback_coupled_activation: bool,
}

// ---------------------------------------------------------------------------
// Lifecycle states
// ---------------------------------------------------------------------------

/// The eight lifecycle states a candidate version can occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleState {
    Registered,
    Validated,
    Sandboxed,
    Shadowed,
    Active,
    Demoted,
    Rejected,
    RolledBack,
}

impl LifecycleState {
    pub fn all() -> [LifecycleState; 8] {
        use LifecycleState::*;
        [Registered, Validated, Sandboxed, Shadowed, Active, Demoted, Rejected, RolledBack]
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, LifecycleState::Rejected | LifecycleState::RolledBack)
    }
}

// ---------------------------------------------------------------------------
// Trace records
// ---------------------------------------------------------------------------

/// Execution context of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceContext {
    SandboxCanonical,
    SandboxPerturbed,
    SandboxAdversarial,
    Shadow,
    Live,
}

impl TraceContext {
    pub fn is_sandbox(&self) -> bool {
        matches!(
            self,
            TraceContext::SandboxCanonical
                | TraceContext::SandboxPerturbed
                | TraceContext::SandboxAdversarial
        )
    }
}

/// Task family an episode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    Grasp,
    Align,
    Place,
    Sequence,
}

impl TaskFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskFamily::Grasp => "grasp",
            TaskFamily::Align => "align",
            TaskFamily::Place => "place",
            TaskFamily::Sequence => "sequence",
        }
    }
}

impl std::str::FromStr for TaskFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grasp" => Ok(TaskFamily::Grasp),
            "align" => Ok(TaskFamily::Align),
            "place" => Ok(TaskFamily::Place),
            "sequence" => Ok(TaskFamily::Sequence),
            other => Err(format!("unknown task family `{other}`")),
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One execution episode's telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub capability_version: String,
    pub context: TraceContext,
    pub task_family: TaskFamily,
    pub success: bool,
    pub duration: f64,
    pub retry_count: u32,
    /// Count of policy violations or near-violations in the episode.
    pub policy_hits: u32,
    pub anomaly_flags: u32,
    pub recovery_triggered: bool,
    pub unsafe_continuation: bool,
    /// Monotone sequence number within one run.
    pub timestamp: u64,
}

// ---------------------------------------------------------------------------
// Compatibility categories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceCategory {
    Compatible,
    Conditional,
    Incompatible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyCategory {
    Compatible,
    Conditional,
    Review,
    Incompatible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehavioralCategory {
    Compatible,
    Suspicious,
    Incompatible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryCategory {
    Compatible,
    Conditional,
    Fragile,
    Incompatible,
}

/// Per-dimension categories of one evaluation. Dimensions skipped by
/// fail-fast ordering stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CompatCategories {
    pub interface: Option<InterfaceCategory>,
    pub policy: Option<PolicyCategory>,
    pub behavioral: Option<BehavioralCategory>,
    pub recovery: Option<RecoveryCategory>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benign_manifest() -> CapabilityManifest {
        CapabilityManifest {
            family_id: "grasp".into(),
            version_id: "grasp-v1".into(),
            parent_version: Some("grasp-v0".into()),
            input_schema: vec![FieldDescriptor::new("pose", "pose6d")],
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

    #[test]
    fn well_formed_manifest_validates() {
        assert!(validate_manifest(&benign_manifest()).is_ok());
    }

    #[test]
    fn empty_input_schema_is_reported() {
        let mut m = benign_manifest();
        m.input_schema.clear();
        match validate_manifest(&m) {
            ManifestValidation::Violations(v) => {
                assert!(v.iter().any(|s| s.contains("input_schema empty")));
            }
            ManifestValidation::Ok => panic!("expected violation"),
        }
    }

    #[test]
    fn empty_permission_profile_is_reported() {
        let mut m = benign_manifest();
        m.permission_profile.clear();
        assert!(!validate_manifest(&m).is_ok());
    }

    #[test]
    fn empty_signature_flagged() {
        let sig = BehavioralSignature {
            mu_succ: 0.0,
            mu_time: 0.0,
            mu_retry: 0.0,
            mu_viol: 0.0,
            mu_anom: 0.0,
            mu_recover: 0.0,
            episode_count: 0,
        };
        assert!(sig.is_empty());
    }

    #[test]
    fn threshold_scaling_clamps() {
        let t = DimThresholds { interface: 0.95, policy: 0.90, behavioral: 0.85, recovery: 0.80 };
        let strict = t.scaled(1.1);
        assert_eq!(strict.interface, 0.995);
        assert!((strict.policy - 0.99).abs() < 1e-12);
        let relaxed = t.scaled(0.9);
        assert!((relaxed.interface - 0.855).abs() < 1e-12);
    }
}
