//! The governed upgrade pipeline: sandbox executor, shadow executor, gated
//! activation, online monitoring, and rollback, plus the static and naive
//! baseline strategies.
//!
//! One `Pipeline` instance serves one `(seed, strategy)` pair; instances
//! share nothing and may run in parallel. Within an instance, stages execute
//! sequentially.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compat::{
    CompatEvaluator, CompatReport, DynamicEvidence, PolicySet, Recommendation,
};
use crate::config::{ApprovalPolicy, PipelineSettings};
use crate::envsim::{
    self, CandidateSpec, DriftScenario, LatentBehavior, RegressionCategory, RegressionMarker,
};
use crate::error::{EngineError, Result};
use crate::model::{
    BehavioralCategory, BehavioralSignature, CapabilityManifest, DeploymentProfile,
    InterfaceCategory, LifecycleState, PolicyCategory, RecoveryCategory, RiskLevel, TaskFamily,
    TraceContext, TraceRecord,
};
use crate::registry::Registry;
use crate::rng::substream;

// ---------------------------------------------------------------------------
// Stage reports
// ---------------------------------------------------------------------------

/// Per-category counts of governance-relevant regression detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DetectionCounts {
    pub retry_instability: u32,
    pub policy_drift: u32,
    pub timeout_stall: u32,
    pub recovery_degradation: u32,
    pub live_divergence: u32,
}

impl DetectionCounts {
    pub fn get(&self, category: RegressionCategory) -> u32 {
        match category {
            RegressionCategory::RetryInstability => self.retry_instability,
            RegressionCategory::PolicyDrift => self.policy_drift,
            RegressionCategory::TimeoutStall => self.timeout_stall,
            RegressionCategory::RecoveryDegradation => self.recovery_degradation,
            RegressionCategory::LiveDivergence => self.live_divergence,
        }
    }

    pub fn add(&mut self, category: RegressionCategory, count: u32) {
        match category {
            RegressionCategory::RetryInstability => self.retry_instability += count,
            RegressionCategory::PolicyDrift => self.policy_drift += count,
            RegressionCategory::TimeoutStall => self.timeout_stall += count,
            RegressionCategory::RecoveryDegradation => self.recovery_degradation += count,
            RegressionCategory::LiveDivergence => self.live_divergence += count,
        }
    }

    pub fn total(&self) -> u32 {
        self.retry_instability
            + self.policy_drift
            + self.timeout_stall
            + self.recovery_degradation
            + self.live_divergence
    }

    pub fn accumulate(&mut self, other: &DetectionCounts) {
        for category in RegressionCategory::all() {
            self.add(category, other.get(category));
        }
    }

    pub fn max_count(&self) -> u32 {
        RegressionCategory::all().iter().map(|c| self.get(*c)).max().unwrap_or(0)
    }
}

fn visible_detections(markers: &[RegressionMarker], shadow: bool) -> DetectionCounts {
    let mut counts = DetectionCounts::default();
    for marker in markers {
        if shadow && marker.shadow_visible {
            counts.add(marker.category, marker.shadow_events);
        }
        if !shadow && marker.sandbox_visible {
            counts.add(marker.category, marker.sandbox_events);
        }
    }
    counts
}

/// Governance metrics aggregated over the three sandbox modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandboxMetrics {
    pub m_succ: f64,
    pub m_viol: f64,
    pub m_anom: f64,
    pub m_retry: f64,
    pub m_recover: f64,
}

/// Outcome of isolated sandbox evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxReport {
    pub metrics: SandboxMetrics,
    pub canonical: BehavioralSignature,
    pub perturbed: BehavioralSignature,
    pub adversarial: BehavioralSignature,
    pub pass: bool,
}

/// Outcome of live-context parallel evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub divergence_series: Vec<f64>,
    pub mean_divergence: f64,
    pub governance_divergence: DetectionCounts,
    pub pass: bool,
}

// ---------------------------------------------------------------------------
// Monitoring
// ---------------------------------------------------------------------------

/// Post-activation monitoring verdicts, ordered by severity.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum MonitorOutcome {
    Continue,
    Restrict,
    Escalate,
    Rollback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorDecision {
    pub value: MonitorOutcome,
    /// Which telemetry counter fired.
    pub trigger: Option<String>,
    /// Episode range inspected (timestamps, inclusive).
    pub window: (u64, u64),
}

/// Evaluate one telemetry window against the profile's thresholds. The
/// baseline is the candidate's pre-activation signature.
pub fn monitor(
    window: &[TraceRecord],
    baseline: &BehavioralSignature,
    profile: &DeploymentProfile,
) -> Result<MonitorDecision> {
    if window.is_empty() {
        return Err(EngineError::EmptyWindow);
    }
    let n = window.len() as f64;
    let span = (window.first().unwrap().timestamp, window.last().unwrap().timestamp);
    let anomaly_rate = window.iter().filter(|t| t.anomaly_flags > 0).count() as f64 / n;
    let violation_rate = window.iter().filter(|t| t.policy_hits > 0).count() as f64 / n;
    let retry_rate = window.iter().map(|t| f64::from(t.retry_count)).sum::<f64>() / n;
    let unsafe_count = window.iter().filter(|t| t.unsafe_continuation).count() as f64;

    if unsafe_count * profile.unsafe_continuation_penalty_weight >= 1.0 {
        return Ok(MonitorDecision {
            value: MonitorOutcome::Rollback,
            trigger: Some("unsafe_continuation".into()),
            window: span,
        });
    }
    if anomaly_rate > 2.0 * baseline.mu_anom + 0.10 {
        return Ok(MonitorDecision {
            value: MonitorOutcome::Rollback,
            trigger: Some("anomaly_rate".into()),
            window: span,
        });
    }
    if violation_rate > profile.anomaly_tolerance {
        return Ok(MonitorDecision {
            value: MonitorOutcome::Escalate,
            trigger: Some("violation_rate".into()),
            window: span,
        });
    }
    if retry_rate > 2.0 * baseline.mu_retry {
        return Ok(MonitorDecision {
            value: MonitorOutcome::Restrict,
            trigger: Some("retry_rate".into()),
            window: span,
        });
    }
    Ok(MonitorDecision { value: MonitorOutcome::Continue, trigger: None, window: span })
}

/// Escalation ladder over consecutive windows: persistent restriction
/// escalates, persistent escalation rolls back.
#[derive(Debug, Clone, Default)]
pub struct MonitorLadder {
    consecutive_restrict: u32,
    consecutive_escalate: u32,
}

impl MonitorLadder {
    pub fn observe(&mut self, decision: MonitorDecision) -> MonitorDecision {
        match decision.value {
            MonitorOutcome::Rollback => decision,
            MonitorOutcome::Escalate => {
                self.consecutive_restrict = 0;
                self.consecutive_escalate += 1;
                if self.consecutive_escalate >= 2 {
                    MonitorDecision {
                        value: MonitorOutcome::Rollback,
                        trigger: Some(
                            decision.trigger.unwrap_or_else(|| "escalation".into())
                                + " (persistent)",
                        ),
                        window: decision.window,
                    }
                } else {
                    decision
                }
            }
            MonitorOutcome::Restrict => {
                self.consecutive_restrict += 1;
                if self.consecutive_restrict >= 3 {
                    self.consecutive_restrict = 0;
                    self.consecutive_escalate += 1;
                    let trigger = decision.trigger.unwrap_or_else(|| "restriction".into());
                    if self.consecutive_escalate >= 2 {
                        MonitorDecision {
                            value: MonitorOutcome::Rollback,
                            trigger: Some(trigger + " (persistent)"),
                            window: decision.window,
                        }
                    } else {
                        MonitorDecision {
                            value: MonitorOutcome::Escalate,
                            trigger: Some(trigger + " (persistent)"),
                            window: decision.window,
                        }
                    }
                } else {
                    decision
                }
            }
            MonitorOutcome::Continue => {
                self.consecutive_restrict = 0;
                self.consecutive_escalate = 0;
                decision
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Rollback and activation
// ---------------------------------------------------------------------------

/// Record of one rollback execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollbackEvent {
    pub candidate_version: String,
    pub predecessor_version: Option<String>,
    pub trigger_type: String,
    /// Episodes from trigger to restoration.
    pub time_to_rollback: u32,
    pub post_rollback_safe: bool,
    pub recovery_success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationMode {
    Full,
    Conditional,
    ApprovalBound,
    RollbackCoupled,
}

/// Outcome of the activation gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActivationDecision {
    ActivateFull,
    ActivateConditional,
    ActivateApprovalBound,
    ActivateRollbackCoupled,
    Deny(String),
}

impl ActivationDecision {
    pub fn mode(&self) -> Option<ActivationMode> {
        match self {
            ActivationDecision::ActivateFull => Some(ActivationMode::Full),
            ActivationDecision::ActivateConditional => Some(ActivationMode::Conditional),
            ActivationDecision::ActivateApprovalBound => Some(ActivationMode::ApprovalBound),
            ActivationDecision::ActivateRollbackCoupled => Some(ActivationMode::RollbackCoupled),
            ActivationDecision::Deny(_) => None,
        }
    }
}

/// The activation gate: admission requires a permitting recommendation,
/// passing sandbox and shadow evidence, and a composite above the profile
/// bar. Mode selection follows the profile's activation rules.
pub fn gate_activation(
    compat: &CompatReport,
    sandbox: &SandboxReport,
    shadow: Option<&ShadowReport>,
    risk_level: RiskLevel,
    profile: &DeploymentProfile,
) -> ActivationDecision {
    if !compat.recommendation.permits_activation() {
        return ActivationDecision::Deny(format!(
            "recommendation {:?} does not permit activation",
            compat.recommendation
        ));
    }
    if !sandbox.pass {
        return ActivationDecision::Deny("sandbox evidence failed profile gates".into());
    }
    let shadow_required =
        profile.shadow_mandatory || compat.recommendation == Recommendation::Shadow;
    match shadow {
        Some(report) if !report.pass => {
            return ActivationDecision::Deny("shadow divergence above profile limits".into());
        }
        None if shadow_required => {
            return ActivationDecision::Deny("shadow evidence required but absent".into());
        }
        _ => {}
    }
    let composite = match compat.composite {
        Some(c) => c,
        None => return ActivationDecision::Deny("composite score unavailable".into()),
    };
    if composite < profile.composite_threshold {
        return ActivationDecision::Deny(format!(
            "composite {composite:.3} below threshold {:.3}",
            profile.composite_threshold
        ));
    }

    if compat.categories.recovery == Some(RecoveryCategory::Fragile) {
        return ActivationDecision::ActivateRollbackCoupled;
    }
    if risk_level > profile.approval_required_above_risk
        || compat.categories.policy == Some(PolicyCategory::Review)
    {
        return ActivationDecision::ActivateApprovalBound;
    }
    let conditional = compat.categories.interface == Some(InterfaceCategory::Conditional)
        || compat.categories.policy == Some(PolicyCategory::Conditional)
        || compat.categories.behavioral == Some(BehavioralCategory::Suspicious)
        || compat.categories.recovery == Some(RecoveryCategory::Conditional);
    if conditional {
        return ActivationDecision::ActivateConditional;
    }
    if profile.rollback_coupled_activation {
        return ActivationDecision::ActivateRollbackCoupled;
    }
    ActivationDecision::ActivateFull
}

// ---------------------------------------------------------------------------
// Pipeline engine
// ---------------------------------------------------------------------------

/// Dispatch information the engine keeps per installed version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionInfo {
    pub label: String,
    pub latent: LatentBehavior,
    pub signature: BehavioralSignature,
    pub faulty: bool,
    pub regressions: Vec<RegressionMarker>,
    pub recovery_verified: bool,
    pub rollback_hook: bool,
}

/// Where a candidate ended up after one pass through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disposition {
    RejectedAtScreen { dimension: String },
    EvaluationOnly,
    FailedSandbox,
    FailedShadow,
    Denied { reason: String },
    Activated { mode: ActivationMode },
}

impl Disposition {
    pub fn activated(&self) -> bool {
        matches!(self, Disposition::Activated { .. })
    }

    /// Intercepted at the compatibility-validation stage.
    pub fn blocked_at_screen(&self) -> bool {
        matches!(self, Disposition::RejectedAtScreen { .. } | Disposition::EvaluationOnly)
    }
}

/// Result of processing one candidate through the governed stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub version: String,
    pub label: String,
    pub faulty: bool,
    pub report: CompatReport,
    pub sandbox: Option<SandboxReport>,
    pub sandbox_detections: DetectionCounts,
    pub shadow: Option<ShadowReport>,
    pub shadow_detections: DetectionCounts,
    pub disposition: Disposition,
}

/// Aggregate statistics of a live episode batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LiveStats {
    pub episodes: u32,
    pub successes: u32,
    pub violations: u32,
    pub anomalies: u32,
    pub unsafe_count: u32,
}

impl LiveStats {
    pub fn from_traces(traces: &[TraceRecord]) -> Self {
        Self {
            episodes: traces.len() as u32,
            successes: traces.iter().filter(|t| t.success).count() as u32,
            violations: traces.iter().filter(|t| t.policy_hits > 0).count() as u32,
            anomalies: traces.iter().filter(|t| t.anomaly_flags > 0).count() as u32,
            unsafe_count: traces.iter().filter(|t| t.unsafe_continuation).count() as u32,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.episodes == 0 { 0.0 } else { f64::from(self.successes) / f64::from(self.episodes) }
    }
}

/// One pipeline engine bound to a seed, profile, and run scope. The scope
/// string namespaces every random stream the engine draws from.
pub struct Pipeline {
    pub profile: DeploymentProfile,
    pub settings: PipelineSettings,
    pub approval: ApprovalPolicy,
    pub policy_set: PolicySet,
    pub evaluator: CompatEvaluator,
    pub registry: Registry,
    pub versions: BTreeMap<String, VersionInfo>,
    pub traces: Vec<TraceRecord>,
    pub seed: u64,
    pub scope: String,
    timestamp: u64,
}

impl Pipeline {
    pub fn new(
        seed: u64,
        scope: &str,
        profile: DeploymentProfile,
        settings: PipelineSettings,
        approval: ApprovalPolicy,
        weights: crate::compat::CompositeWeights,
    ) -> Self {
        Self {
            profile,
            settings,
            approval,
            policy_set: envsim::active_policy_set(),
            evaluator: CompatEvaluator::new(weights),
            registry: Registry::new(),
            versions: BTreeMap::new(),
            traces: Vec::new(),
            seed,
            scope: scope.to_string(),
            timestamp: 0,
        }
    }

    /// Install the baseline active version of every family.
    pub fn install_baselines(&mut self, families: &[TaskFamily]) -> Result<()> {
        for family in families {
            let manifest = envsim::baseline_manifest(*family);
            let latent = envsim::baseline_latent();
            let signature = latent.declared_signature(TraceContext::SandboxCanonical);
            self.versions.insert(
                manifest.version_id.clone(),
                VersionInfo {
                    label: "v0".into(),
                    latent,
                    signature,
                    faulty: false,
                    regressions: Vec::new(),
                    recovery_verified: true,
                    rollback_hook: manifest.recovery_profile.rollback_hook,
                },
            );
            self.registry.install_baseline(manifest, 0)?;
        }
        Ok(())
    }

    pub fn active_info(&self, family: TaskFamily) -> Result<(&str, &VersionInfo)> {
        let version = self
            .registry
            .active_version(family.as_str())
            .ok_or_else(|| EngineError::NoActiveVersion(family.as_str().to_string()))?;
        let info = &self.versions[version];
        Ok((version, info))
    }

    fn next_timestamps(&mut self, n: usize) -> u64 {
        let base = self.timestamp;
        self.timestamp += n as u64;
        base
    }

    /// Run a labeled episode batch and append the traces to the run stream.
    pub fn episode_batch(
        &mut self,
        version: &str,
        latent: &LatentBehavior,
        context: TraceContext,
        family: TaskFamily,
        n: usize,
        label: &str,
    ) -> Vec<TraceRecord> {
        let base = self.next_timestamps(n);
        let traces = episode_batch_at(self.seed, &self.scope, version, latent, context, family, n, label, base);
        self.traces.extend(traces.iter().cloned());
        traces
    }

    /// Isolated probe batch: recorded nowhere but in the returned vector.
    pub fn probe_batch(
        &mut self,
        version: &str,
        latent: &LatentBehavior,
        context: TraceContext,
        family: TaskFamily,
        n: usize,
        label: &str,
    ) -> Vec<TraceRecord> {
        let base = self.next_timestamps(n);
        episode_batch_at(self.seed, &self.scope, version, latent, context, family, n, label, base)
    }

    /// Stage 3: isolated evaluation under canonical, perturbed, and
    /// adversarial modes.
    pub fn run_sandbox(
        &mut self,
        version: &str,
        latent: &LatentBehavior,
        regressions: &[RegressionMarker],
        family: TaskFamily,
        label: &str,
    ) -> (SandboxReport, DetectionCounts) {
        let n = self.settings.sandbox_episodes_per_mode;
        let canonical = self.probe_run(version, latent, TraceContext::SandboxCanonical, family, n, &format!("{label}/canonical"));
        let perturbed = self.probe_run(version, latent, TraceContext::SandboxPerturbed, family, n, &format!("{label}/perturbed"));
        let adversarial = self.probe_run(version, latent, TraceContext::SandboxAdversarial, family, n, &format!("{label}/adversarial"));

        let all: Vec<TraceRecord> = canonical
            .iter()
            .chain(perturbed.iter())
            .chain(adversarial.iter())
            .cloned()
            .collect();
        let sig = |traces: &[TraceRecord]| CompatEvaluator::compute_signature(traces).expect("non-empty");
        let aggregate = sig(&all);
        let metrics = SandboxMetrics {
            m_succ: aggregate.mu_succ,
            m_viol: aggregate.mu_viol,
            m_anom: aggregate.mu_anom,
            m_retry: aggregate.mu_retry,
            m_recover: aggregate.mu_recover,
        };
        let pass = metrics.m_viol <= self.profile.anomaly_tolerance
            && metrics.m_anom <= self.profile.anomaly_tolerance
            && metrics.m_succ >= self.settings.sandbox_success_floor;
        let report = SandboxReport {
            metrics,
            canonical: sig(&canonical),
            perturbed: sig(&perturbed),
            adversarial: sig(&adversarial),
            pass,
        };
        let detections = visible_detections(regressions, false);
        (report, detections)
    }

    fn probe_run(
        &mut self,
        version: &str,
        latent: &LatentBehavior,
        context: TraceContext,
        family: TaskFamily,
        n: usize,
        label: &str,
    ) -> Vec<TraceRecord> {
        let traces = self.probe_batch(version, latent, context, family, n, label);
        self.traces.extend(traces.iter().cloned());
        traces
    }

    /// Stage 4: run the candidate in parallel with the active version on the
    /// same live input stream. Only the active version's outcomes count as
    /// live results; the candidate's stream grants no execution authority.
    pub fn run_shadow(
        &mut self,
        candidate: (&str, &LatentBehavior, &[RegressionMarker]),
        active: (&str, &LatentBehavior),
        family: TaskFamily,
        label: &str,
    ) -> (ShadowReport, DetectionCounts, Vec<TraceRecord>) {
        let n = self.settings.shadow_episodes;
        let base = self.next_timestamps(n);
        let (cand_version, cand_latent, markers) = candidate;
        let (active_version, active_latent) = active;

        let mut env = substream(self.seed, &format!("{}/{label}/env", self.scope));
        let live_traces = episode_batch_at(
            self.seed,
            &self.scope,
            active_version,
            active_latent,
            TraceContext::Live,
            family,
            n,
            &format!("{label}/active"),
            base,
        );
        let shadow_traces = episode_batch_at(
            self.seed,
            &self.scope,
            cand_version,
            cand_latent,
            TraceContext::Shadow,
            family,
            n,
            &format!("{label}/candidate"),
            base,
        );

        // Per-episode behavioral divergence, measured on the effective latent
        // response to the shared input rather than on sample noise.
        let pa = active_latent.effective(TraceContext::Shadow);
        let pc = cand_latent.effective(TraceContext::Shadow);
        let structural = ((pa.success_prob - pc.success_prob).abs()
            + (pa.duration - pc.duration).abs() / (pa.duration + 1e-6)
            + (pa.retry_rate - pc.retry_rate).abs()
            + (pa.violation_rate - pc.violation_rate).abs()
            + (pa.anomaly_rate - pc.anomaly_rate).abs())
            / 5.0;
        let divergence_series: Vec<f64> = (0..n)
            .map(|_| {
                let difficulty = 0.8 + 0.4 * rand::Rng::gen::<f64>(&mut env);
                structural * difficulty
            })
            .collect();
        let mean_divergence = divergence_series.iter().sum::<f64>() / n.max(1) as f64;

        let governance_divergence = visible_detections(markers, true);
        let limit = self
            .settings
            .divergence_count_limits
            .get(&self.profile.profile_id)
            .copied()
            .unwrap_or(u32::MAX);
        let pass = governance_divergence.max_count() <= limit
            && mean_divergence <= self.settings.mean_divergence_limit;

        self.traces.extend(live_traces.iter().cloned());
        self.traces.extend(shadow_traces.iter().cloned());

        let report = ShadowReport {
            divergence_series,
            mean_divergence,
            governance_divergence,
            pass,
        };
        (report, governance_divergence, live_traces)
    }

    /// Stages 1-5 for one candidate under the governed strategy.
    pub fn process_candidate(
        &mut self,
        spec: &CandidateSpec,
        family: TaskFamily,
        round: u32,
    ) -> Result<CandidateOutcome> {
        let version = spec.manifest.version_id.clone();
        self.registry.register_candidate(spec.manifest.clone(), "generated upgrade", round)?;

        let (active_version, active_info) = {
            let (v, info) = self.active_info(family)?;
            (v.to_string(), info.clone())
        };
        let active_manifest = self.registry.record(family.as_str(), &active_version)?.manifest.clone();
        let evidence = DynamicEvidence {
            candidate_signature: spec.pre_signature,
            baseline_signature: active_info.signature,
            recovery_quality: spec.recovery_quality,
        };
        let report = self.evaluator.evaluate(
            &active_manifest,
            &spec.manifest,
            &self.policy_set,
            &self.profile,
            &evidence,
        )?;

        let mut outcome = CandidateOutcome {
            version: version.clone(),
            label: spec.label.clone(),
            faulty: spec.ground_truth_faulty,
            report: report.clone(),
            sandbox: None,
            sandbox_detections: DetectionCounts::default(),
            shadow: None,
            shadow_detections: DetectionCounts::default(),
            disposition: Disposition::EvaluationOnly,
        };

        match report.recommendation {
            Recommendation::Reject | Recommendation::RejectOrReview => {
                let dimension = report.blocking_dimension().unwrap_or("composite").to_string();
                self.registry.record_rejection(
                    family.as_str(),
                    &version,
                    &format!("{dimension} incompatibility"),
                    Some(report),
                    round,
                )?;
                outcome.disposition = Disposition::RejectedAtScreen { dimension };
                return Ok(outcome);
            }
            Recommendation::Review => {
                if !self.approval.resolve(round) {
                    self.registry.record_rejection(
                        family.as_str(),
                        &version,
                        "policy review denied",
                        Some(report),
                        round,
                    )?;
                    outcome.disposition = Disposition::RejectedAtScreen { dimension: "policy".into() };
                    return Ok(outcome);
                }
                self.registry.record_compat(family.as_str(), &version, Some(report.clone()), round)?;
            }
            _ => {
                self.registry.record_compat(family.as_str(), &version, Some(report.clone()), round)?;
            }
        }

        // Stage 3: sandbox evaluation.
        let (sandbox, sandbox_detections) = self.run_sandbox(
            &version,
            &spec.latent,
            &spec.regressions,
            family,
            &format!("r{round}/{}/sandbox", spec.label),
        );
        self.registry.record_sandbox(
            family.as_str(),
            &version,
            sandbox.clone(),
            sandbox_detections,
            false,
            round,
        )?;
        outcome.sandbox = Some(sandbox.clone());
        outcome.sandbox_detections = sandbox_detections;

        let evaluation_only = matches!(
            report.recommendation,
            Recommendation::Sandbox | Recommendation::SandboxOrReview
        );
        if evaluation_only {
            self.registry.record_rejection(
                family.as_str(),
                &version,
                "evaluation-only: dynamic incompatibility confirmed",
                None,
                round,
            )?;
            outcome.disposition = Disposition::EvaluationOnly;
            return Ok(outcome);
        }
        if !sandbox.pass {
            self.registry.record_demotion(family.as_str(), &version, "sandbox gate failed", round)?;
            outcome.disposition = Disposition::FailedSandbox;
            return Ok(outcome);
        }

        // Stage 4: shadow deployment against the live input stream.
        let (shadow, shadow_detections, _live) = self.run_shadow(
            (&version, &spec.latent, &spec.regressions),
            (&active_version, &active_info.latent),
            family,
            &format!("r{round}/{}/shadow", spec.label),
        );
        self.registry.record_shadow(family.as_str(), &version, shadow.clone(), false, round)?;
        outcome.shadow = Some(shadow.clone());
        outcome.shadow_detections = shadow_detections;
        if !shadow.pass {
            self.registry.record_demotion(family.as_str(), &version, "shadow gate failed", round)?;
            outcome.disposition = Disposition::FailedShadow;
            return Ok(outcome);
        }

        // Stage 5: gated activation.
        let decision =
            gate_activation(&report, &sandbox, Some(&shadow), spec.manifest.risk_level, &self.profile);
        let mode = match decision {
            ActivationDecision::Deny(reason) => {
                self.registry.record_demotion(family.as_str(), &version, &reason, round)?;
                outcome.disposition = Disposition::Denied { reason };
                return Ok(outcome);
            }
            ActivationDecision::ActivateApprovalBound => {
                if !self.approval.resolve(round) {
                    let reason = "activation approval denied".to_string();
                    self.registry.record_demotion(family.as_str(), &version, &reason, round)?;
                    outcome.disposition = Disposition::Denied { reason };
                    return Ok(outcome);
                }
                ActivationMode::ApprovalBound
            }
            ref d => d.mode().expect("activation decision carries mode"),
        };
        self.registry.activate(
            family.as_str(),
            &version,
            mode,
            false,
            true,
            self.profile.profile_id,
            round,
        )?;
        self.versions.insert(
            version.clone(),
            VersionInfo {
                label: spec.label.clone(),
                latent: spec.latent.clone(),
                signature: spec.pre_signature,
                faulty: spec.ground_truth_faulty,
                regressions: spec.regressions.clone(),
                recovery_verified: true,
                rollback_hook: spec.manifest.recovery_profile.rollback_hook,
            },
        );
        outcome.disposition = Disposition::Activated { mode };
        Ok(outcome)
    }

    /// Force-activate a candidate without governance (the naive strategy).
    /// Bypassed stages still appear in the audit log as forced transitions.
    pub fn force_activate(&mut self, spec: &CandidateSpec, family: TaskFamily, round: u32) -> Result<()> {
        let version = spec.manifest.version_id.clone();
        self.registry.register_candidate(spec.manifest.clone(), "generated upgrade", round)?;
        self.registry.record_compat(family.as_str(), &version, None, round)?;
        self.registry.record_sandbox(
            family.as_str(),
            &version,
            SandboxReport {
                metrics: SandboxMetrics { m_succ: 0.0, m_viol: 0.0, m_anom: 0.0, m_retry: 0.0, m_recover: 0.0 },
                canonical: spec.pre_signature,
                perturbed: spec.pre_signature,
                adversarial: spec.pre_signature,
                pass: true,
            },
            DetectionCounts::default(),
            true,
            round,
        )?;
        self.registry.record_shadow(
            family.as_str(),
            &version,
            ShadowReport {
                divergence_series: Vec::new(),
                mean_divergence: 0.0,
                governance_divergence: DetectionCounts::default(),
                pass: true,
            },
            true,
            round,
        )?;
        self.registry.activate(
            family.as_str(),
            &version,
            ActivationMode::Full,
            true,
            false,
            self.profile.profile_id,
            round,
        )?;
        self.versions.insert(
            version,
            VersionInfo {
                label: spec.label.clone(),
                latent: spec.latent.clone(),
                signature: spec.pre_signature,
                faulty: spec.ground_truth_faulty,
                regressions: spec.regressions.clone(),
                recovery_verified: false,
                rollback_hook: spec.manifest.recovery_profile.rollback_hook,
            },
        );
        Ok(())
    }

    /// Stage 7: restore the prior active version. Recovery success depends on
    /// the candidate's recovery latents, its rollback hook, and whether
    /// recovery readiness was verified at admission.
    pub fn execute_rollback(
        &mut self,
        family: TaskFamily,
        version: &str,
        trigger: &str,
        time_to_rollback: u32,
        round: u32,
        label: &str,
    ) -> Result<RollbackEvent> {
        let state = self.registry.state(family.as_str(), version)?;
        if state != LifecycleState::Active {
            return Err(EngineError::WrongLifecycleState {
                version: version.to_string(),
                state,
                expected: "active",
            });
        }
        let info = self.versions[version].clone();
        let mut rng = substream(self.seed, &format!("{}/{label}/rollback", self.scope));
        let draw: f64 = rand::Rng::gen(&mut rng);
        let safety_draw: f64 = rand::Rng::gen(&mut rng);
        let (mut event, _) = rollback_outcome(
            version,
            &info,
            self.settings.rollback_arming_penalty,
            trigger,
            time_to_rollback,
            draw,
            safety_draw,
        );
        event.predecessor_version = self.registry.restore_target(family.as_str());
        self.registry.execute_rollback_event(family.as_str(), version, event.clone(), round)?;
        Ok(event)
    }
}

/// Compute a rollback outcome from its uniform draws; shared by the live
/// path and counterfactual replay. Returns the event (predecessor left for
/// the registry to fill) and the success probability used.
pub fn rollback_outcome(
    version: &str,
    info: &VersionInfo,
    arming_penalty: f64,
    trigger: &str,
    time_to_rollback: u32,
    draw: f64,
    safety_draw: f64,
) -> (RollbackEvent, f64) {
    let hook = if info.rollback_hook { 1.0 } else { 0.0 };
    let arming = if info.recovery_verified { 1.0 } else { arming_penalty };
    let p = info.latent.recovery_success_prob * hook * arming;
    let recovery_success = draw < p;
    let post_rollback_safe = recovery_success || safety_draw < 0.5;
    (
        RollbackEvent {
            candidate_version: version.to_string(),
            predecessor_version: None,
            trigger_type: trigger.to_string(),
            time_to_rollback,
            post_rollback_safe,
            recovery_success,
        },
        p,
    )
}

/// Deterministic labeled episode batch with explicit timestamp base.
#[allow(clippy::too_many_arguments)]
pub fn episode_batch_at(
    seed: u64,
    scope: &str,
    version: &str,
    latent: &LatentBehavior,
    context: TraceContext,
    family: TaskFamily,
    n: usize,
    label: &str,
    timestamp_base: u64,
) -> Vec<TraceRecord> {
    let mut rng = substream(seed, &format!("{scope}/{label}"));
    (0..n)
        .map(|i| envsim::run_episode(version, latent, context, family, &mut rng, timestamp_base + i as u64))
        .collect()
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Static,
    Naive,
    Governed,
}

impl Strategy {
    pub fn all() -> [Strategy; 3] {
        [Strategy::Static, Strategy::Naive, Strategy::Governed]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::Naive => "naive",
            Strategy::Governed => "governed",
        }
    }
}

/// Per-round outcome of one strategy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u32,
    pub family: TaskFamily,
    pub candidate_label: String,
    pub candidate_faulty: bool,
    /// Version activated in this round, if any.
    pub activated: Option<String>,
    pub activated_faulty: bool,
    /// Held-out live evaluation of the post-round active version.
    pub live: LiveStats,
    /// Whether the candidate activated this round caused unsafe execution.
    pub unsafe_activation: bool,
    pub disposition: Option<Disposition>,
    pub monitor: Option<MonitorOutcome>,
}

/// Full outcome stream of one `(seed, strategy)` run.
pub struct StrategyRun {
    pub strategy: Strategy,
    pub seed: u64,
    pub rounds: Vec<RoundOutcome>,
    pub pipeline: Pipeline,
}

/// Deterministic candidate production schedule, shared across strategies so
/// per-seed comparisons are paired.
pub fn round_schedule(
    seed: u64,
    families: &[TaskFamily],
    rounds: u32,
    pool_size: usize,
) -> Vec<(TaskFamily, usize)> {
    let mut rng = substream(seed, "round-schedule");
    (0..rounds)
        .map(|r| {
            let family = families[r as usize % families.len()];
            let index = rand::Rng::gen_range(&mut rng, 0..pool_size);
            (family, index)
        })
        .collect()
}

/// Run one strategy over the given candidate pools for `rounds` rounds. Each
/// round produces one candidate, dispatches it per the strategy, then
/// evaluates the active system on a held-out batch.
#[allow(clippy::too_many_arguments)]
pub fn run_strategy(
    strategy: Strategy,
    seed: u64,
    scope: &str,
    pools: &BTreeMap<TaskFamily, Vec<CandidateSpec>>,
    families: &[TaskFamily],
    rounds: u32,
    profile: DeploymentProfile,
    settings: PipelineSettings,
    approval: ApprovalPolicy,
    weights: crate::compat::CompositeWeights,
) -> Result<StrategyRun> {
    let mut pipeline = Pipeline::new(
        seed,
        &format!("{scope}/{}", strategy.as_str()),
        profile,
        settings,
        approval,
        weights,
    );
    pipeline.install_baselines(families)?;
    let pool_size = pools.values().next().map(Vec::len).unwrap_or(0);
    let schedule = round_schedule(seed, families, rounds, pool_size);

    let mut outcomes = Vec::with_capacity(rounds as usize);
    for (r, (family, index)) in schedule.iter().enumerate() {
        let round = r as u32;
        let mut spec = pools[family][*index].clone();
        // Each round is a fresh production of the candidate kind.
        spec.manifest.version_id = format!("{}-r{round}", spec.manifest.version_id);
        spec.manifest.parent_version =
            pipeline.registry.active_version(family.as_str()).map(str::to_string);

        let (disposition, activated) = match strategy {
            Strategy::Static => {
                pipeline.registry.register_candidate(spec.manifest.clone(), "generated upgrade", round)?;
                (None, None)
            }
            Strategy::Naive => {
                pipeline.force_activate(&spec, *family, round)?;
                (
                    Some(Disposition::Activated { mode: ActivationMode::Full }),
                    Some(spec.manifest.version_id.clone()),
                )
            }
            Strategy::Governed => {
                let outcome = pipeline.process_candidate(&spec, *family, round)?;
                let activated = outcome
                    .disposition
                    .activated()
                    .then(|| outcome.version.clone());
                (Some(outcome.disposition), activated)
            }
        };

        // Held-out evaluation of the current active version.
        let (active_version, active_info) = {
            let (v, info) = pipeline.active_info(*family)?;
            (v.to_string(), info.clone())
        };
        let live = pipeline.episode_batch(
            &active_version,
            &active_info.latent,
            TraceContext::Live,
            *family,
            pipeline.settings.live_episodes_per_round,
            &format!("r{round}/heldout"),
        );
        let stats = LiveStats::from_traces(&live);

        // Post-activation monitoring over the trailing window (governed only).
        let mut monitor_outcome = None;
        if strategy == Strategy::Governed {
            let window_len = pipeline.settings.monitor_window.min(live.len());
            let window = &live[live.len() - window_len..];
            let decision = monitor(window, &active_info.signature, &pipeline.profile)?;
            monitor_outcome = Some(decision.value);
            pipeline
                .registry
                .record_monitor(family.as_str(), &active_version, decision.clone(), round)?;
            if decision.value == MonitorOutcome::Rollback {
                pipeline.execute_rollback(
                    *family,
                    &active_version,
                    decision.trigger.as_deref().unwrap_or("monitor"),
                    0,
                    round,
                    &format!("r{round}/monitor"),
                )?;
            }
        }

        let activated_faulty = activated
            .as_deref()
            .map(|v| pipeline.versions[v].faulty)
            .unwrap_or(false);
        let unsafe_activation = activated.is_some()
            && activated.as_deref() == Some(active_version.as_str())
            && stats.unsafe_count > 0;
        outcomes.push(RoundOutcome {
            round,
            family: *family,
            candidate_label: spec.label.clone(),
            candidate_faulty: spec.ground_truth_faulty,
            activated,
            activated_faulty,
            live: stats,
            unsafe_activation,
            disposition,
            monitor: monitor_outcome,
        });
    }

    Ok(StrategyRun { strategy, seed, rounds: outcomes, pipeline })
}

// ---------------------------------------------------------------------------
// Drift attempts (post-activation rollback drills)
// ---------------------------------------------------------------------------

/// Record of one activation-drift-rollback attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftAttempt {
    pub kind: Option<crate::envsim::DriftKind>,
    pub triggered: bool,
    pub trigger: Option<String>,
    pub windows_to_trigger: u32,
    pub rollback: Option<RollbackEvent>,
    /// Uniform draws behind the rollback outcome, kept for counterfactual
    /// recomputation.
    pub rollback_draw: f64,
    pub safety_draw: f64,
    pub recovery_verified: bool,
    pub rollback_hook: bool,
    pub recovery_success_prob: f64,
}

/// One activation + drift + monitor + rollback drill on a fresh subject
/// version. `scenario = None` is the zero-drift control.
#[allow(clippy::too_many_arguments)]
pub fn drift_attempt(
    pipeline: &mut Pipeline,
    subject: &CandidateSpec,
    family: TaskFamily,
    scenario: Option<&DriftScenario>,
    attempt: u32,
    round: u32,
) -> Result<DriftAttempt> {
    let label = match scenario {
        Some(s) => format!("drift/{}/{attempt}", s.kind.as_str()),
        None => format!("drift/control/{attempt}"),
    };
    let mut spec = subject.clone();
    spec.manifest.version_id = format!("{}-d{attempt}-{}", spec.manifest.version_id, label_slug(&label));
    spec.manifest.parent_version =
        pipeline.registry.active_version(family.as_str()).map(str::to_string);

    let outcome = pipeline.process_candidate(&spec, family, round)?;
    if !outcome.disposition.activated() {
        return Err(EngineError::WrongLifecycleState {
            version: spec.manifest.version_id.clone(),
            state: pipeline.registry.state(family.as_str(), &spec.manifest.version_id)?,
            expected: "active (drift subject must pass governance)",
        });
    }
    let version = spec.manifest.version_id.clone();
    let info = pipeline.versions[&version].clone();
    let drifted = match scenario {
        Some(s) => envsim::inject_drift(&info.latent, s),
        None => info.latent.clone(),
    };

    let mut ladder = MonitorLadder::default();
    let window = pipeline.settings.monitor_window;
    let mut triggered = None;
    let mut windows_used = 0;
    for w in 0..pipeline.settings.drift_max_windows {
        let traces = pipeline.episode_batch(
            &version,
            &drifted,
            TraceContext::Live,
            family,
            window,
            &format!("{label}/w{w}"),
        );
        let decision = monitor(&traces, &info.signature, &pipeline.profile)?;
        let effective = ladder.observe(decision);
        pipeline
            .registry
            .record_monitor(family.as_str(), &version, effective.clone(), round)?;
        windows_used = w as u32 + 1;
        if effective.value == MonitorOutcome::Rollback {
            triggered = Some(effective);
            break;
        }
    }

    let mut rng = substream(pipeline.seed, &format!("{}/{label}/rollback", pipeline.scope));
    let draw: f64 = rand::Rng::gen(&mut rng);
    let safety_draw: f64 = rand::Rng::gen(&mut rng);

    let mut record = DriftAttempt {
        kind: scenario.map(|s| s.kind),
        triggered: triggered.is_some(),
        trigger: triggered.as_ref().and_then(|d| d.trigger.clone()),
        windows_to_trigger: windows_used,
        rollback: None,
        rollback_draw: draw,
        safety_draw,
        recovery_verified: info.recovery_verified,
        rollback_hook: info.rollback_hook,
        recovery_success_prob: info.latent.recovery_success_prob,
    };

    if let Some(decision) = triggered {
        let (mut event, _) = rollback_outcome(
            &version,
            &info,
            pipeline.settings.rollback_arming_penalty,
            decision.trigger.as_deref().unwrap_or("monitor"),
            windows_used * window as u32,
            draw,
            safety_draw,
        );
        event.predecessor_version = pipeline.registry.restore_target(family.as_str());
        pipeline
            .registry
            .execute_rollback_event(family.as_str(), &version, event.clone(), round)?;
        record.rollback = Some(event);
    }
    // Without a trigger the subject simply stays active; the next drill
    // subject supersedes it on activation.
    Ok(record)
}

fn label_slug(label: &str) -> String {
    label.replace('/', "-")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compat::CompositeWeights;
    use crate::config::{default_profiles, ApprovalPolicy, PipelineSettings};
    use crate::envsim::{generate_pool, DriftKind, DriftSeverity, PoolVariant};
    use crate::model::ProfileId;

    fn pipeline(seed: u64, scope: &str, profile: ProfileId) -> Pipeline {
        Pipeline::new(
            seed,
            scope,
            default_profiles()[&profile].clone(),
            PipelineSettings::default(),
            ApprovalPolicy::AutoDeny,
            CompositeWeights::default(),
        )
    }

    fn spec(label: &str) -> CandidateSpec {
        generate_pool(TaskFamily::Grasp, 42, PoolVariant::MarginalPair)
            .into_iter()
            .find(|s| s.label == label)
            .unwrap()
    }

    #[test]
    fn benign_candidate_reaches_activation() {
        let mut p = pipeline(42, "test", ProfileId::Sim);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let outcome = p.process_candidate(&spec("b1"), TaskFamily::Grasp, 0).unwrap();
        assert!(matches!(outcome.disposition, Disposition::Activated { mode: ActivationMode::Full }));
        assert_eq!(p.registry.active_version("grasp"), Some("grasp-b1"));
    }

    #[test]
    fn behavioral_regression_fails_sandbox_visibility_profile() {
        // The regression candidate is intercepted at screening and runs
        // sandbox as evaluation-only; its detections are recorded.
        let mut p = pipeline(42, "test", ProfileId::Sim);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let outcome = p.process_candidate(&spec("f5"), TaskFamily::Grasp, 0).unwrap();
        assert!(matches!(outcome.disposition, Disposition::EvaluationOnly));
        assert!(outcome.sandbox.is_some());
        assert!(outcome.sandbox_detections.policy_drift > 0);
    }

    #[test]
    fn retry_instability_passes_sandbox_and_fails_shadow() {
        let mut p = pipeline(42, "test", ProfileId::Sim);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let outcome = p.process_candidate(&spec("f7"), TaskFamily::Grasp, 0).unwrap();
        let sandbox = outcome.sandbox.as_ref().unwrap();
        assert!(sandbox.pass, "retry instability must be invisible to sandbox");
        assert_eq!(outcome.sandbox_detections.retry_instability, 0);
        let shadow = outcome.shadow.as_ref().unwrap();
        assert!(!shadow.pass);
        assert!(shadow.governance_divergence.retry_instability > 0);
        assert!(matches!(outcome.disposition, Disposition::FailedShadow));
    }

    #[test]
    fn shadow_of_identical_latents_has_zero_divergence() {
        let mut p = pipeline(7, "test", ProfileId::Sim);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let latent = envsim::baseline_latent();
        let (report, _, _) = p.run_shadow(
            ("grasp-x", &latent, &[]),
            ("grasp-v0", &latent),
            TaskFamily::Grasp,
            "selftest",
        );
        assert_eq!(report.mean_divergence, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn shadow_replay_is_deterministic() {
        let run = || {
            let mut p = pipeline(9, "det", ProfileId::Sim);
            p.install_baselines(&[TaskFamily::Grasp]).unwrap();
            let f7 = spec("f7");
            let base = envsim::baseline_latent();
            let (report, _, live) = p.run_shadow(
                ("grasp-f7", &f7.latent, &f7.regressions),
                ("grasp-v0", &base),
                TaskFamily::Grasp,
                "replay",
            );
            (report, live)
        };
        let (r1, l1) = run();
        let (r2, l2) = run();
        assert_eq!(r1, r2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn shadow_is_noninterfering_with_live_stream() {
        // Live outcomes during a shadow phase equal running the active
        // version alone with the same seed, byte for byte.
        let mut p = pipeline(11, "shadow-ni", ProfileId::Sim);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let f7 = spec("f7");
        let base = envsim::baseline_latent();
        let ts_before = p.timestamp;
        let (_, _, live) = p.run_shadow(
            ("grasp-f7", &f7.latent, &f7.regressions),
            ("grasp-v0", &base),
            TaskFamily::Grasp,
            "ni",
        );
        let alone = episode_batch_at(
            11,
            "shadow-ni",
            "grasp-v0",
            &base,
            TraceContext::Live,
            TaskFamily::Grasp,
            live.len(),
            "ni/active",
            ts_before,
        );
        let live_json: Vec<String> = live.iter().map(|t| serde_json::to_string(t).unwrap()).collect();
        let alone_json: Vec<String> = alone.iter().map(|t| serde_json::to_string(t).unwrap()).collect();
        assert_eq!(live_json, alone_json);
    }

    #[test]
    fn gate_denies_marginal_that_failed_shadow() {
        let mut p = pipeline(42, "test", ProfileId::Sim);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let outcome = p.process_candidate(&spec("f7"), TaskFamily::Grasp, 0).unwrap();
        assert!(!outcome.disposition.activated());
    }

    #[test]
    fn approval_bound_activation_under_human_profile() {
        let mut p = pipeline(42, "test", ProfileId::Human);
        p.approval = ApprovalPolicy::AutoApprove;
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let outcome = p.process_candidate(&spec("b4"), TaskFamily::Grasp, 0).unwrap();
        assert!(matches!(
            outcome.disposition,
            Disposition::Activated { mode: ActivationMode::ApprovalBound }
        ));

        let mut p = pipeline(42, "test2", ProfileId::Human);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let outcome = p.process_candidate(&spec("b4"), TaskFamily::Grasp, 0).unwrap();
        assert!(matches!(outcome.disposition, Disposition::Denied { .. }));
    }

    #[test]
    fn monitor_decisions_follow_thresholds() {
        let profile = default_profiles()[&ProfileId::Real].clone();
        let baseline = envsim::baseline_latent().declared_signature(TraceContext::SandboxCanonical);
        let make = |anom: bool, viol: bool, retries: u32| TraceRecord {
            capability_version: "v".into(),
            context: TraceContext::Live,
            task_family: TaskFamily::Grasp,
            success: true,
            duration: 10.0,
            retry_count: retries,
            policy_hits: u32::from(viol),
            anomaly_flags: u32::from(anom),
            recovery_triggered: false,
            unsafe_continuation: false,
            timestamp: 0,
        };
        let calm: Vec<TraceRecord> = (0..20).map(|_| make(false, false, 0)).collect();
        assert_eq!(monitor(&calm, &baseline, &profile).unwrap().value, MonitorOutcome::Continue);

        let anomalous: Vec<TraceRecord> = (0..20).map(|i| make(i < 6, false, 0)).collect();
        let d = monitor(&anomalous, &baseline, &profile).unwrap();
        assert_eq!(d.value, MonitorOutcome::Rollback);
        assert!(d.trigger.is_some());

        let retrying: Vec<TraceRecord> = (0..20).map(|i| make(false, false, u32::from(i < 6))).collect();
        assert_eq!(monitor(&retrying, &baseline, &profile).unwrap().value, MonitorOutcome::Restrict);

        let violating: Vec<TraceRecord> = (0..20).map(|i| make(false, i < 4, 0)).collect();
        assert_eq!(monitor(&violating, &baseline, &profile).unwrap().value, MonitorOutcome::Escalate);

        assert!(monitor(&[], &baseline, &profile).is_err());
    }

    #[test]
    fn mild_delay_drift_restricts_before_rollback() {
        let profile = default_profiles()[&ProfileId::Human].clone();
        let subject = spec("b5");
        let baseline = subject.latent.declared_signature(TraceContext::SandboxCanonical);
        let mild = DriftScenario::new(DriftKind::ActuatorDelay, DriftSeverity::Mild);
        let drifted = envsim::inject_drift(&subject.latent, &mild);
        let mut rng = substream(5, "mild-drift");
        let mut saw_restrict = false;
        for w in 0..10 {
            let traces: Vec<TraceRecord> = (0..20)
                .map(|i| envsim::run_episode("v", &drifted, TraceContext::Live, TaskFamily::Grasp, &mut rng, w * 20 + i))
                .collect();
            let d = monitor(&traces, &baseline, &profile).unwrap();
            assert_ne!(d.value, MonitorOutcome::Rollback, "mild drift must not hard-trigger");
            if d.value == MonitorOutcome::Restrict {
                saw_restrict = true;
            }
        }
        assert!(saw_restrict);
    }

    #[test]
    fn zero_drift_control_never_triggers() {
        let mut p = pipeline(42, "drift-control", ProfileId::Human);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let subject = spec("b5");
        for attempt in 0..4 {
            let record = drift_attempt(&mut p, &subject, TaskFamily::Grasp, None, attempt, 0).unwrap();
            assert!(!record.triggered);
            assert!(record.rollback.is_none());
        }
    }

    #[test]
    fn strong_drift_triggers_rollback_and_restores_predecessor() {
        let mut p = pipeline(42, "drift-strong", ProfileId::Human);
        p.install_baselines(&[TaskFamily::Grasp]).unwrap();
        let subject = spec("b5");
        let scenario = DriftScenario::new(DriftKind::Combined, DriftSeverity::Strong);
        let record =
            drift_attempt(&mut p, &subject, TaskFamily::Grasp, Some(&scenario), 0, 0).unwrap();
        assert!(record.triggered);
        let event = record.rollback.unwrap();
        assert_eq!(event.predecessor_version.as_deref(), Some("grasp-v0"));
        assert_eq!(p.registry.active_version("grasp"), Some("grasp-v0"));
        // recovery_success implies post_rollback_safe
        if event.recovery_success {
            assert!(event.post_rollback_safe);
        }
    }

    #[test]
    fn static_strategy_keeps_active_constant() {
        let pools: BTreeMap<TaskFamily, Vec<CandidateSpec>> = [TaskFamily::Grasp]
            .iter()
            .map(|f| (*f, generate_pool(*f, 42, PoolVariant::MarginalPair)))
            .collect();
        let run = run_strategy(
            Strategy::Static,
            42,
            "e2test",
            &pools,
            &[TaskFamily::Grasp],
            4,
            default_profiles()[&ProfileId::Sim].clone(),
            PipelineSettings::default(),
            ApprovalPolicy::AutoDeny,
            CompositeWeights::default(),
        )
        .unwrap();
        assert!(run.rounds.iter().all(|r| r.activated.is_none()));
        assert_eq!(run.pipeline.registry.active_version("grasp"), Some("grasp-v0"));
    }

    #[test]
    fn naive_strategy_activates_unsafe_candidates() {
        let pools: BTreeMap<TaskFamily, Vec<CandidateSpec>> = [TaskFamily::Grasp]
            .iter()
            .map(|f| (*f, generate_pool(*f, 42, PoolVariant::MarginalPair)))
            .collect();
        let run = run_strategy(
            Strategy::Naive,
            42,
            "e2test",
            &pools,
            &[TaskFamily::Grasp],
            8,
            default_profiles()[&ProfileId::Sim].clone(),
            PipelineSettings::default(),
            ApprovalPolicy::AutoDeny,
            CompositeWeights::default(),
        )
        .unwrap();
        assert!(run.rounds.iter().any(|r| r.unsafe_activation));
    }

    #[test]
    fn governed_strategy_never_activates_faulty() {
        let pools: BTreeMap<TaskFamily, Vec<CandidateSpec>> = [TaskFamily::Grasp]
            .iter()
            .map(|f| (*f, generate_pool(*f, 42, PoolVariant::MarginalPair)))
            .collect();
        let run = run_strategy(
            Strategy::Governed,
            42,
            "e2test",
            &pools,
            &[TaskFamily::Grasp],
            8,
            default_profiles()[&ProfileId::Sim].clone(),
            PipelineSettings::default(),
            ApprovalPolicy::AutoDeny,
            CompositeWeights::default(),
        )
        .unwrap();
        assert!(run.rounds.iter().all(|r| !r.activated_faulty));
        assert!(run.rounds.iter().all(|r| !r.unsafe_activation));
        assert!(run.pipeline.registry.single_active_holds());
    }
}
