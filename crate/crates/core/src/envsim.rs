//! Synthetic capability environment: a latent behavior model per version, a
//! seeded candidate generator covering the fault taxonomy, and post-activation
//! drift injection.
//!
//! Episodes consume a fixed number of draws from a labeled stream, so pools,
//! episodes, and drift are pure functions of `(seed, config)` and a rerun of a
//! seed reproduces every trace byte-identically.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::compat::{PolicyRule, PolicySet, RecoveryQuality};
use crate::model::{
    BehavioralSignature, CapabilityManifest, Dependency, EntryPoint, ExecutionMode,
    FieldDescriptor, ModeTag, RecoveryProfile, RiskLevel, TaskFamily, TraceContext, TraceRecord,
};
use crate::rng::substream;

/// Draws consumed per episode, fixed so conditional branches never
/// desynchronize streams.
pub const DRAWS_PER_EPISODE: usize = 8;

/// Baseline chance per episode that the recovery path is exercised at all;
/// scaled by the version's recovery success probability.
const RECOVERY_EXERCISE_RATE: f64 = 0.05;

/// Episode count of the declared pre-trace batch used for static behavioral
/// evidence.
pub const PRE_TRACE_EPISODES: usize = 40;

// ---------------------------------------------------------------------------
// Latent behavior
// ---------------------------------------------------------------------------

/// Additive deltas on latent parameters. `duration_factor` adds to the
/// duration multiplier (0.0 means unchanged).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LatentDeltas {
    pub success_prob: f64,
    pub duration_factor: f64,
    pub retry_rate: f64,
    pub violation_rate: f64,
    pub anomaly_rate: f64,
    pub unsafe_event_rate: f64,
    pub recovery_success_prob: f64,
}

impl LatentDeltas {
    pub fn is_zero(&self) -> bool {
        self == &LatentDeltas::default()
    }

    pub fn plus(&self, other: &LatentDeltas) -> LatentDeltas {
        LatentDeltas {
            success_prob: self.success_prob + other.success_prob,
            duration_factor: self.duration_factor + other.duration_factor,
            retry_rate: self.retry_rate + other.retry_rate,
            violation_rate: self.violation_rate + other.violation_rate,
            anomaly_rate: self.anomaly_rate + other.anomaly_rate,
            unsafe_event_rate: self.unsafe_event_rate + other.unsafe_event_rate,
            recovery_success_prob: self.recovery_success_prob + other.recovery_success_prob,
        }
    }

    pub fn scaled(&self, factor: f64) -> LatentDeltas {
        LatentDeltas {
            success_prob: self.success_prob * factor,
            duration_factor: self.duration_factor * factor,
            retry_rate: self.retry_rate * factor,
            violation_rate: self.violation_rate * factor,
            anomaly_rate: self.anomaly_rate * factor,
            unsafe_event_rate: self.unsafe_event_rate * factor,
            recovery_success_prob: self.recovery_success_prob * factor,
        }
    }
}

/// Stochastic episode generator parameters of one capability version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentBehavior {
    pub success_prob: f64,
    pub base_duration: f64,
    pub retry_rate: f64,
    pub violation_rate: f64,
    pub anomaly_rate: f64,
    pub unsafe_event_rate: f64,
    pub recovery_success_prob: f64,
    /// Context-dependent behavior: shadow/live modifiers expose behavior
    /// hidden in sandbox.
    pub context_modifiers: BTreeMap<TraceContext, LatentDeltas>,
}

/// Latent parameters after applying the context modifier, clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub success_prob: f64,
    pub duration: f64,
    pub retry_rate: f64,
    pub violation_rate: f64,
    pub anomaly_rate: f64,
    pub unsafe_event_rate: f64,
    pub recovery_success_prob: f64,
}

impl LatentBehavior {
    pub fn effective(&self, context: TraceContext) -> EffectiveParams {
        let d = self.context_modifiers.get(&context).copied().unwrap_or_default();
        EffectiveParams {
            success_prob: (self.success_prob + d.success_prob).clamp(0.0, 1.0),
            duration: (self.base_duration * (1.0 + d.duration_factor)).max(0.0),
            retry_rate: (self.retry_rate + d.retry_rate).max(0.0),
            violation_rate: (self.violation_rate + d.violation_rate).clamp(0.0, 1.0),
            anomaly_rate: (self.anomaly_rate + d.anomaly_rate).clamp(0.0, 1.0),
            unsafe_event_rate: (self.unsafe_event_rate + d.unsafe_event_rate).clamp(0.0, 1.0),
            recovery_success_prob: (self.recovery_success_prob + d.recovery_success_prob)
                .clamp(0.0, 1.0),
        }
    }

    /// Declared signature of the version under a context: the exact latent
    /// means, labeled with the pre-trace batch size.
    pub fn declared_signature(&self, context: TraceContext) -> BehavioralSignature {
        let p = self.effective(context);
        BehavioralSignature {
            mu_succ: p.success_prob,
            mu_time: p.duration,
            mu_retry: p.retry_rate,
            mu_viol: p.violation_rate,
            mu_anom: p.anomaly_rate,
            mu_recover: RECOVERY_EXERCISE_RATE * p.recovery_success_prob,
            episode_count: PRE_TRACE_EPISODES,
        }
    }
}

/// Run one episode. Consumes exactly [`DRAWS_PER_EPISODE`] uniform draws.
/// Unsafe continuation is an execution-authority event and can only occur in
/// live context.
pub fn run_episode(
    version_id: &str,
    latent: &LatentBehavior,
    context: TraceContext,
    task_family: TaskFamily,
    rng: &mut ChaCha12Rng,
    timestamp: u64,
) -> TraceRecord {
    let mut draws = [0.0_f64; DRAWS_PER_EPISODE];
    for d in &mut draws {
        *d = rng.gen::<f64>();
    }
    let p = latent.effective(context);

    let success = draws[0] < p.success_prob;
    let duration = p.duration * (0.85 + 0.30 * draws[1]);
    let retry_count =
        p.retry_rate.floor() as u32 + u32::from(draws[2] < p.retry_rate.fract());
    let policy_hits = u32::from(draws[3] < p.violation_rate);
    let mut anomaly_flags = u32::from(draws[4] < p.anomaly_rate);
    let unsafe_continuation =
        context == TraceContext::Live && draws[5] < p.unsafe_event_rate;
    if unsafe_continuation {
        anomaly_flags = anomaly_flags.max(1);
    }
    let recovery_triggered = draws[6] < RECOVERY_EXERCISE_RATE * p.recovery_success_prob;

    TraceRecord {
        capability_version: version_id.to_string(),
        context,
        task_family,
        success,
        duration,
        retry_count,
        policy_hits,
        anomaly_flags,
        recovery_triggered,
        unsafe_continuation,
        timestamp,
    }
}

// ---------------------------------------------------------------------------
// Drift scenarios
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    SensorNoise,
    DistributionShift,
    ActuatorDelay,
    Combined,
}

impl DriftKind {
    pub fn all() -> [DriftKind; 4] {
        [
            DriftKind::SensorNoise,
            DriftKind::DistributionShift,
            DriftKind::ActuatorDelay,
            DriftKind::Combined,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DriftKind::SensorNoise => "sensor_noise",
            DriftKind::DistributionShift => "distribution_shift",
            DriftKind::ActuatorDelay => "actuator_delay",
            DriftKind::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSeverity {
    Mild,
    Strong,
}

/// A runtime drift scenario applied after activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftScenario {
    pub kind: DriftKind,
    pub severity: DriftSeverity,
    pub latent_deltas: LatentDeltas,
}

impl DriftScenario {
    /// Shipped default deltas per kind; strong severity doubles them and
    /// combined composes the three single kinds.
    pub fn new(kind: DriftKind, severity: DriftSeverity) -> Self {
        let sensor = LatentDeltas {
            anomaly_rate: 0.05,
            success_prob: -0.05,
            ..LatentDeltas::default()
        };
        let shift = LatentDeltas {
            success_prob: -0.08,
            violation_rate: 0.03,
            ..LatentDeltas::default()
        };
        let delay = LatentDeltas {
            duration_factor: 0.4,
            retry_rate: 0.05,
            ..LatentDeltas::default()
        };
        let base = match kind {
            DriftKind::SensorNoise => sensor,
            DriftKind::DistributionShift => shift,
            DriftKind::ActuatorDelay => delay,
            DriftKind::Combined => sensor.plus(&shift).plus(&delay),
        };
        let factor = match severity {
            DriftSeverity::Mild => 1.0,
            DriftSeverity::Strong => 2.0,
        };
        Self { kind, severity, latent_deltas: base.scaled(factor) }
    }
}

/// Apply a drift scenario to a latent model; the original is unmodified.
pub fn inject_drift(latent: &LatentBehavior, scenario: &DriftScenario) -> LatentBehavior {
    let d = &scenario.latent_deltas;
    LatentBehavior {
        success_prob: (latent.success_prob + d.success_prob).clamp(0.0, 1.0),
        base_duration: (latent.base_duration * (1.0 + d.duration_factor)).max(0.0),
        retry_rate: (latent.retry_rate + d.retry_rate).max(0.0),
        violation_rate: (latent.violation_rate + d.violation_rate).clamp(0.0, 1.0),
        anomaly_rate: (latent.anomaly_rate + d.anomaly_rate).clamp(0.0, 1.0),
        unsafe_event_rate: (latent.unsafe_event_rate + d.unsafe_event_rate).clamp(0.0, 1.0),
        recovery_success_prob: (latent.recovery_success_prob + d.recovery_success_prob)
            .clamp(0.0, 1.0),
        context_modifiers: latent.context_modifiers.clone(),
    }
}

// ---------------------------------------------------------------------------
// Candidate specs and regression markers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Benign,
    InterfaceDrift,
    PermissionExpansion,
    BehavioralRegression,
    RecoveryDegradation,
    MarginalComposite,
}

/// Regression categories observable by the evaluation executors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionCategory {
    RetryInstability,
    PolicyDrift,
    TimeoutStall,
    RecoveryDegradation,
    LiveDivergence,
}

impl RegressionCategory {
    pub fn all() -> [RegressionCategory; 5] {
        [
            RegressionCategory::RetryInstability,
            RegressionCategory::PolicyDrift,
            RegressionCategory::TimeoutStall,
            RegressionCategory::RecoveryDegradation,
            RegressionCategory::LiveDivergence,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RegressionCategory::RetryInstability => "retry_instability",
            RegressionCategory::PolicyDrift => "policy_drift",
            RegressionCategory::TimeoutStall => "timeout_stall",
            RegressionCategory::RecoveryDegradation => "recovery_degradation",
            RegressionCategory::LiveDivergence => "live_divergence",
        }
    }
}

/// One regression a candidate carries, with stage visibility and the number
/// of instances each stage surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionMarker {
    pub category: RegressionCategory,
    pub sandbox_visible: bool,
    pub shadow_visible: bool,
    pub sandbox_events: u32,
    pub shadow_events: u32,
}

/// A generated deployment candidate: manifest, latent behavior, declared
/// pre-trace evidence, and its regression profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub kind: CandidateKind,
    /// Stable short label within the pool (b1..b6, f1..f8).
    pub label: String,
    pub ground_truth_faulty: bool,
    pub latent: LatentBehavior,
    pub manifest: CapabilityManifest,
    /// Human-readable description of the edit applied to the parent manifest.
    pub manifest_delta: String,
    pub recovery_quality: RecoveryQuality,
    /// Declared sandbox pre-trace signature (canonical context).
    pub pre_signature: BehavioralSignature,
    pub regressions: Vec<RegressionMarker>,
}

impl CandidateSpec {
    pub fn version_id(&self) -> &str {
        &self.manifest.version_id
    }
}

/// Which eighth faulty pair the pool carries: the marginal-composite pair or
/// the recovery-degradation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolVariant {
    #[default]
    MarginalPair,
    RecoveryPair,
}

// ---------------------------------------------------------------------------
// Baseline system
// ---------------------------------------------------------------------------

/// Latent behavior of the initially active version of every family.
pub fn baseline_latent() -> LatentBehavior {
    LatentBehavior {
        success_prob: 0.67,
        base_duration: 10.0,
        retry_rate: 0.10,
        violation_rate: 0.10,
        anomaly_rate: 0.05,
        unsafe_event_rate: 0.0,
        recovery_success_prob: 0.90,
        context_modifiers: BTreeMap::new(),
    }
}

fn base_modes() -> Vec<ExecutionMode> {
    vec![
        ExecutionMode { name: "gripper_cmd".into(), tag: ModeTag::ActuatorAccess, risk: RiskLevel::Low },
        ExecutionMode { name: "camera_feed".into(), tag: ModeTag::ToolAccess, risk: RiskLevel::Low },
        ExecutionMode { name: "workspace_zone".into(), tag: ModeTag::EnvironmentScope, risk: RiskLevel::Low },
        ExecutionMode { name: "cpu_budget".into(), tag: ModeTag::ResourceClass, risk: RiskLevel::Low },
    ]
}

/// Baseline manifest of a family (`<family>-v0`).
pub fn baseline_manifest(family: TaskFamily) -> CapabilityManifest {
    let f = family.as_str();
    CapabilityManifest {
        family_id: f.to_string(),
        version_id: format!("{f}-v0"),
        parent_version: None,
        input_schema: vec![
            FieldDescriptor::new("target_pose", "pose6d"),
            FieldDescriptor::new("grip_force", "newtons"),
            FieldDescriptor::new("timeout_budget", "time_units"),
        ],
        output_schema: vec![
            FieldDescriptor::new("outcome", "task_outcome"),
            FieldDescriptor::new("final_pose", "pose6d"),
        ],
        invocation_schema: vec![
            EntryPoint {
                name: "execute".into(),
                contract: "call_v1".into(),
                pre_tags: ["object_visible".to_string(), "arm_ready".to_string()].into(),
                post_tags: ["goal_reached".to_string()].into(),
            },
            EntryPoint {
                name: "abort".into(),
                contract: "call_v1".into(),
                pre_tags: ["running".to_string()].into(),
                post_tags: ["stopped_safe".to_string()].into(),
            },
        ],
        permission_profile: base_modes(),
        recovery_profile: RecoveryProfile::intact(),
        dependency_set: vec![
            Dependency { name: "kinematics".into(), range: ">=1.0".into() },
            Dependency { name: "perception".into(), range: ">=2.0".into() },
            Dependency { name: "telemetry".into(), range: ">=1.0".into() },
            Dependency { name: "recovery_runtime".into(), range: ">=1.0".into() },
        ],
        environment_scope: ["sim".to_string(), "real".to_string(), "human".to_string()].into(),
        risk_level: RiskLevel::Low,
    }
}

/// Active policy set used across all experiments: covers the baseline modes,
/// the pre-approved tool extension, and the extension block marginal
/// candidates declare, but not expansion or probe modes.
pub fn active_policy_set() -> PolicySet {
    let mut tool_names: BTreeSet<String> =
        ["camera_feed".to_string(), "ext_tool".to_string()].into();
    for i in 0..25 {
        tool_names.insert(format!("ext_mode_{i:02}"));
    }
    PolicySet {
        rules: vec![
            PolicyRule { tag: ModeTag::ActuatorAccess, covered_names: ["gripper_cmd".to_string()].into() },
            PolicyRule { tag: ModeTag::ToolAccess, covered_names: tool_names },
            PolicyRule { tag: ModeTag::EnvironmentScope, covered_names: ["workspace_zone".to_string()].into() },
            PolicyRule { tag: ModeTag::ResourceClass, covered_names: ["cpu_budget".to_string()].into() },
        ],
    }
}

// ---------------------------------------------------------------------------
// Pool generation
// ---------------------------------------------------------------------------

fn jitter(rng: &mut ChaCha12Rng, half_width: f64) -> f64 {
    (rng.gen::<f64>() * 2.0 - 1.0) * half_width
}

struct PoolBuilder {
    family: TaskFamily,
    parent: CapabilityManifest,
    base: LatentBehavior,
}

impl PoolBuilder {
    fn manifest(&self, label: &str) -> CapabilityManifest {
        let mut m = self.parent.clone();
        m.version_id = format!("{}-{}", self.family.as_str(), label);
        m.parent_version = Some(self.parent.version_id.clone());
        m
    }

    fn spec(
        &self,
        kind: CandidateKind,
        label: &str,
        faulty: bool,
        latent: LatentBehavior,
        manifest: CapabilityManifest,
        delta: &str,
        quality: RecoveryQuality,
        regressions: Vec<RegressionMarker>,
    ) -> CandidateSpec {
        let pre_signature = latent.declared_signature(TraceContext::SandboxCanonical);
        CandidateSpec {
            kind,
            label: label.to_string(),
            ground_truth_faulty: faulty,
            latent,
            manifest,
            manifest_delta: delta.to_string(),
            recovery_quality: quality,
            pre_signature,
            regressions,
        }
    }
}

/// Shadow-side event allocation of the marginal retry-instability candidate,
/// by family. Row sums over the three families give the per-seed targets.
fn shadow_allocation(family: TaskFamily) -> (u32, u32, u32) {
    // (retry, policy_drift, timeout)
    match family {
        TaskFamily::Grasp => (3, 6, 2),
        TaskFamily::Align => (3, 6, 2),
        _ => (2, 5, 3),
    }
}

/// Deterministic candidate pool for `(family, seed)`: six benign plus eight
/// faulty candidates, two per faulty class, with the eighth pair selected by
/// `variant`.
pub fn generate_pool(family: TaskFamily, seed: u64, variant: PoolVariant) -> Vec<CandidateSpec> {
    let b = PoolBuilder {
        family,
        parent: baseline_manifest(family),
        base: baseline_latent(),
    };
    let mut rng = substream(seed, &format!("pool/{}", family.as_str()));
    // Seed-level event jitter, applied once (on the grasp family's carriers).
    let mut jrng = substream(seed, "pool/event-jitter");
    let sandbox_jitter: i64 = jrng.gen_range(-2..=2);
    let shadow_jitter: i64 = jrng.gen_range(-2..=2);
    let apply_jitter = family == TaskFamily::Grasp;

    let mut pool = Vec::with_capacity(14);
    let q = RecoveryQuality::default();

    // b1: improved success and robustness across the board.
    let mut latent = b.base.clone();
    latent.success_prob = 0.74 + jitter(&mut rng, 0.004);
    latent.base_duration = 9.5;
    latent.retry_rate = 0.08;
    latent.violation_rate = 0.01;
    latent.anomaly_rate = 0.01;
    pool.push(b.spec(CandidateKind::Benign, "b1", false, latent, b.manifest("b1"), "tuned grasp controller", q, vec![]));

    // b2: lateral change; slight retry increase is the only adverse drift.
    let mut latent = b.base.clone();
    latent.success_prob = 0.67 + jitter(&mut rng, 0.004);
    latent.retry_rate = 0.101;
    latent.violation_rate = 0.01;
    latent.anomaly_rate = 0.01;
    pool.push(b.spec(CandidateKind::Benign, "b2", false, latent, b.manifest("b2"), "alternate approach path", q, vec![]));

    // b3: minor gain.
    let mut latent = b.base.clone();
    latent.success_prob = 0.69 + jitter(&mut rng, 0.004);
    latent.base_duration = 9.8;
    latent.retry_rate = 0.09;
    latent.violation_rate = 0.01;
    latent.anomaly_rate = 0.005;
    pool.push(b.spec(CandidateKind::Benign, "b3", false, latent, b.manifest("b3"), "parameter refinement", q, vec![]));

    // b4: efficiency gain; medium risk because it raises motion speed.
    let mut latent = b.base.clone();
    latent.success_prob = 0.68 + jitter(&mut rng, 0.004);
    latent.base_duration = 8.0;
    latent.retry_rate = 0.101;
    latent.violation_rate = 0.01;
    latent.anomaly_rate = 0.01;
    let mut manifest = b.manifest("b4");
    manifest.risk_level = RiskLevel::Medium;
    pool.push(b.spec(CandidateKind::Benign, "b4", false, latent, manifest, "faster trajectory profile", q, vec![]));

    // b5: robustness-focused; clean governance telemetry.
    let mut latent = b.base.clone();
    latent.success_prob = 0.70 + jitter(&mut rng, 0.004);
    latent.base_duration = 9.6;
    latent.retry_rate = 0.0;
    latent.violation_rate = 0.0;
    latent.anomaly_rate = 0.0;
    latent.recovery_success_prob = 0.80;
    pool.push(b.spec(CandidateKind::Benign, "b5", false, latent, b.manifest("b5"), "hardened perception loop", q, vec![]));

    // b6: stable nominal behavior but anomalous under structured
    // perturbation; declared high risk.
    let mut latent = b.base.clone();
    latent.success_prob = 0.71 + jitter(&mut rng, 0.004);
    latent.base_duration = 9.7;
    latent.retry_rate = 0.09;
    latent.violation_rate = 0.01;
    latent.anomaly_rate = 0.0;
    let perturb = LatentDeltas { anomaly_rate: 0.45, ..LatentDeltas::default() };
    latent.context_modifiers.insert(TraceContext::SandboxPerturbed, perturb);
    latent.context_modifiers.insert(TraceContext::SandboxAdversarial, perturb);
    let mut manifest = b.manifest("b6");
    manifest.risk_level = RiskLevel::High;
    pool.push(b.spec(CandidateKind::Benign, "b6", false, latent, manifest, "wider workspace envelope", q, vec![]));

    // f1/f2: interface drift; every schema field retyped and every
    // invocation contract changed.
    for (label, anomaly_drift) in [("f1", 0.22), ("f2", 0.21)] {
        let mut latent = b.base.clone();
        latent.success_prob = 0.70;
        latent.anomaly_rate = (0.05 + anomaly_drift + jitter(&mut rng, 0.002)).clamp(0.0, 1.0);
        latent.unsafe_event_rate = 0.35;
        let mut manifest = b.manifest(label);
        for field in manifest.input_schema.iter_mut().chain(manifest.output_schema.iter_mut()) {
            field.kind = format!("{}_mk2", field.kind);
        }
        for ep in &mut manifest.invocation_schema {
            ep.contract = "call_v2".into();
        }
        pool.push(b.spec(
            CandidateKind::InterfaceDrift,
            label,
            true,
            latent,
            manifest,
            "retyped schema fields and changed invocation contracts",
            q,
            vec![],
        ));
    }

    // f3/f4: permission expansion; six declared modes, five covered.
    for label in ["f3", "f4"] {
        let mut latent = b.base.clone();
        latent.unsafe_event_rate = 0.30;
        let mut manifest = b.manifest(label);
        manifest.permission_profile.push(ExecutionMode {
            name: "ext_tool".into(),
            tag: ModeTag::ToolAccess,
            risk: RiskLevel::Low,
        });
        manifest.permission_profile.push(ExecutionMode {
            name: "direct_actuator".into(),
            tag: ModeTag::ActuatorAccess,
            risk: RiskLevel::Medium,
        });
        pool.push(b.spec(
            CandidateKind::PermissionExpansion,
            label,
            true,
            latent,
            manifest,
            "requested direct actuator access beyond policy coverage",
            q,
            vec![],
        ));
    }

    // f5/f6: behavioral regression; success improves while anomaly incidence
    // rises sharply. Regressions are visible to sandbox evaluation only.
    let f5_policy = if apply_jitter { (4 + sandbox_jitter).max(0) as u32 } else { 4 };
    for (label, anomaly_drift, policy_events, timeout_events) in
        [("f5", 0.22, f5_policy, 1), ("f6", 0.20, 2, 4)]
    {
        let mut latent = b.base.clone();
        latent.success_prob = 0.72;
        latent.anomaly_rate = (0.05 + anomaly_drift + jitter(&mut rng, 0.004)).clamp(0.0, 1.0);
        latent.unsafe_event_rate = 0.35;
        let regressions = vec![
            RegressionMarker {
                category: RegressionCategory::PolicyDrift,
                sandbox_visible: true,
                shadow_visible: false,
                sandbox_events: policy_events,
                shadow_events: 0,
            },
            RegressionMarker {
                category: RegressionCategory::TimeoutStall,
                sandbox_visible: true,
                shadow_visible: false,
                sandbox_events: timeout_events,
                shadow_events: 0,
            },
        ];
        pool.push(b.spec(
            CandidateKind::BehavioralRegression,
            label,
            true,
            latent,
            b.manifest(label),
            "aggressive retuning with unstable runtime traces",
            q,
            regressions,
        ));
    }

    match variant {
        PoolVariant::MarginalPair => {
            push_marginal_pair(&b, &mut pool, &mut rng, apply_jitter, shadow_jitter);
        }
        PoolVariant::RecoveryPair => {
            push_recovery_pair(&b, &mut pool, &mut rng);
        }
    }

    pool
}

/// f7/f8 when the pool carries the marginal-composite pair: every dimension
/// passes its threshold while the composite sits near the activation bar.
fn push_marginal_pair(
    b: &PoolBuilder,
    pool: &mut Vec<CandidateSpec>,
    rng: &mut ChaCha12Rng,
    apply_jitter: bool,
    shadow_jitter: i64,
) {
    let marginal_quality = RecoveryQuality { detect: 0.85, ..RecoveryQuality::default() };

    // f7: live-context retry instability, invisible to sandbox evaluation.
    let mut latent = b.base.clone();
    latent.anomaly_rate = (0.12 + jitter(rng, 0.002)).clamp(0.0, 1.0);
    let retry_elev = LatentDeltas { retry_rate: 0.25, ..LatentDeltas::default() };
    latent.context_modifiers.insert(TraceContext::Shadow, retry_elev);
    latent.context_modifiers.insert(TraceContext::Live, retry_elev);
    latent.unsafe_event_rate = 0.32;
    let (retry_ev, policy_ev, timeout_ev) = shadow_allocation(b.family);
    let policy_ev =
        if apply_jitter { (i64::from(policy_ev) + shadow_jitter).max(0) as u32 } else { policy_ev };
    let mut manifest = b.manifest("f7");
    extend_with_marginal_modes(&mut manifest);
    let regressions = vec![
        RegressionMarker {
            category: RegressionCategory::RetryInstability,
            sandbox_visible: false,
            shadow_visible: true,
            sandbox_events: 0,
            shadow_events: retry_ev,
        },
        RegressionMarker {
            category: RegressionCategory::PolicyDrift,
            sandbox_visible: false,
            shadow_visible: true,
            sandbox_events: 0,
            shadow_events: policy_ev,
        },
        RegressionMarker {
            category: RegressionCategory::TimeoutStall,
            sandbox_visible: false,
            shadow_visible: true,
            sandbox_events: 0,
            shadow_events: timeout_ev,
        },
        RegressionMarker {
            category: RegressionCategory::RecoveryDegradation,
            sandbox_visible: true,
            shadow_visible: false,
            sandbox_events: 1,
            shadow_events: 0,
        },
    ];
    pool.push(b.spec(
        CandidateKind::MarginalComposite,
        "f7",
        true,
        latent,
        manifest,
        "borderline retuning with degraded failure-signal fidelity",
        marginal_quality,
        regressions,
    ));

    // f8: violation spikes under structured perturbation; caught in sandbox.
    let mut latent = b.base.clone();
    latent.anomaly_rate = (0.13 + jitter(rng, 0.002)).clamp(0.0, 1.0);
    let viol_spike = LatentDeltas { violation_rate: 0.80, ..LatentDeltas::default() };
    latent.context_modifiers.insert(TraceContext::SandboxPerturbed, viol_spike);
    latent.context_modifiers.insert(TraceContext::SandboxAdversarial, viol_spike);
    latent.unsafe_event_rate = 0.32;
    let mut manifest = b.manifest("f8");
    extend_with_marginal_modes(&mut manifest);
    let regressions = vec![
        RegressionMarker {
            category: RegressionCategory::PolicyDrift,
            sandbox_visible: true,
            shadow_visible: false,
            sandbox_events: 2,
            shadow_events: 0,
        },
        RegressionMarker {
            category: RegressionCategory::TimeoutStall,
            sandbox_visible: true,
            shadow_visible: false,
            sandbox_events: 1,
            shadow_events: 0,
        },
        RegressionMarker {
            category: RegressionCategory::RecoveryDegradation,
            sandbox_visible: true,
            shadow_visible: false,
            sandbox_events: 1,
            shadow_events: 0,
        },
    ];
    pool.push(b.spec(
        CandidateKind::MarginalComposite,
        "f8",
        true,
        latent,
        manifest,
        "borderline retuning with perturbation-sensitive violations",
        marginal_quality,
        regressions,
    ));
}

/// f7/f8 when the pool carries the recovery-degradation pair instead.
fn push_recovery_pair(b: &PoolBuilder, pool: &mut Vec<CandidateSpec>, rng: &mut ChaCha12Rng) {
    for label in ["f7", "f8"] {
        let mut latent = b.base.clone();
        latent.success_prob = 0.70;
        latent.recovery_success_prob = 0.35;
        latent.unsafe_event_rate = 0.30;
        let mut manifest = b.manifest(label);
        manifest.recovery_profile.rollback_hook = false;
        let quality = RecoveryQuality {
            rollback: 0.0,
            fallback: 0.966 + jitter(rng, 0.017).abs(),
            abort: 0.966 + jitter(rng, 0.017).abs(),
            detect: 0.966 + jitter(rng, 0.017).abs(),
        };
        let regressions = vec![RegressionMarker {
            category: RegressionCategory::RecoveryDegradation,
            sandbox_visible: true,
            shadow_visible: false,
            sandbox_events: 3,
            shadow_events: 0,
        }];
        pool.push(b.spec(
            CandidateKind::RecoveryDegradation,
            label,
            true,
            latent,
            manifest,
            "removed rollback hook and weakened abort paths",
            quality,
            regressions,
        ));
    }
}

fn extend_with_marginal_modes(manifest: &mut CapabilityManifest) {
    for i in 0..25 {
        manifest.permission_profile.push(ExecutionMode {
            name: format!("ext_mode_{i:02}"),
            tag: ModeTag::ToolAccess,
            risk: RiskLevel::Low,
        });
    }
    manifest.permission_profile.push(ExecutionMode {
        name: "uncovered_ext".into(),
        tag: ModeTag::ToolAccess,
        risk: RiskLevel::Low,
    });
}
