//! Versioned capability registry: active/candidate/history views, the
//! eight-state lifecycle machine, and the append-only audit store.
//!
//! The registry is event-sourced: every mutation is expressed as one or more
//! audit events, and a single `apply_event` function performs the state
//! change for both live operation and replay. Replaying the audit log from
//! an empty registry therefore reconstructs the final state exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compat::CompatReport;
use crate::error::{EngineError, Result};
use crate::model::{
    CapabilityManifest, LifecycleState, ManifestValidation, ProfileId, validate_manifest,
};
use crate::pipeline::{
    ActivationMode, DetectionCounts, MonitorDecision, RollbackEvent, SandboxReport, ShadowReport,
};

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// Full lifecycle record of one candidate version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleRecord {
    pub manifest: CapabilityManifest,
    pub state: LifecycleState,
    pub provenance: String,
    pub compat_history: Vec<CompatReport>,
    pub sandbox_summary: Option<SandboxReport>,
    pub shadow_summary: Option<ShadowReport>,
    /// (round, profile, mode) of every activation this version received.
    pub activation_history: Vec<(u32, ProfileId, ActivationMode)>,
    pub rollback_history: Vec<RollbackEvent>,
}

impl LifecycleRecord {
    fn new(manifest: CapabilityManifest, provenance: String) -> Self {
        Self {
            manifest,
            state: LifecycleState::Registered,
            provenance,
            compat_history: Vec::new(),
            sandbox_summary: None,
            shadow_summary: None,
            activation_history: Vec::new(),
            rollback_history: Vec::new(),
        }
    }

    /// A record belongs to the history view once it is terminal or was
    /// active and has since been replaced.
    fn is_history(&self) -> bool {
        self.state.is_terminal()
            || (!self.activation_history.is_empty() && self.state != LifecycleState::Active)
    }
}

// ---------------------------------------------------------------------------
// Audit events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEventKind {
    Registered,
    CompatEvaluated,
    SandboxDone,
    ShadowDone,
    ActivationDecided,
    MonitorDecision,
    RollbackExecuted,
    Demoted,
    Rejected,
}

/// Event-specific payload. Payloads carry enough evidence to reconstruct the
/// registry by replay and to recompute lifecycle decisions counterfactually.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditPayload {
    Registered {
        manifest: CapabilityManifest,
        provenance: String,
    },
    CompatEvaluated {
        report: Option<CompatReport>,
        /// Whether the static checks passed and the record advanced to
        /// `validated`.
        validated: bool,
    },
    SandboxDone {
        report: Option<SandboxReport>,
        detections: DetectionCounts,
        forced: bool,
        note: Option<String>,
    },
    ShadowDone {
        report: Option<ShadowReport>,
        forced: bool,
        note: Option<String>,
    },
    ActivationDecided {
        mode: ActivationMode,
        /// Version this activation displaced, if any.
        superseded: Option<String>,
        /// True when this event restores a predecessor after rollback.
        restored: bool,
        forced: bool,
        /// Whether recovery readiness was verified at admission.
        recovery_verified: bool,
        profile: ProfileId,
    },
    MonitorDecision {
        decision: MonitorDecision,
    },
    RollbackExecuted {
        event: RollbackEvent,
    },
    Demoted {
        reason: String,
        superseded_by: Option<String>,
    },
    Rejected {
        reason: String,
    },
}

impl AuditPayload {
    pub fn kind(&self) -> AuditEventKind {
        match self {
            AuditPayload::Registered { .. } => AuditEventKind::Registered,
            AuditPayload::CompatEvaluated { .. } => AuditEventKind::CompatEvaluated,
            AuditPayload::SandboxDone { .. } => AuditEventKind::SandboxDone,
            AuditPayload::ShadowDone { .. } => AuditEventKind::ShadowDone,
            AuditPayload::ActivationDecided { .. } => AuditEventKind::ActivationDecided,
            AuditPayload::MonitorDecision { .. } => AuditEventKind::MonitorDecision,
            AuditPayload::RollbackExecuted { .. } => AuditEventKind::RollbackExecuted,
            AuditPayload::Demoted { .. } => AuditEventKind::Demoted,
            AuditPayload::Rejected { .. } => AuditEventKind::Rejected,
        }
    }
}

/// One entry in the append-only audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub sequence: u64,
    pub event_kind: AuditEventKind,
    pub family_id: String,
    pub version_id: String,
    pub payload: AuditPayload,
    pub round: u32,
}

// ---------------------------------------------------------------------------
// Transition table
// ---------------------------------------------------------------------------

/// Stage a demoted candidate re-enters on re-evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReentryStage {
    Sandbox,
    Shadow,
}

/// Events accepted by the lifecycle transition table.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionEvent {
    ValidatePass,
    SandboxDone,
    ShadowDone,
    Activate,
    IncompatibilityDetected(String),
    PostActivationInstability,
    InconclusiveEvidence(String),
    /// Soft demotion of an active version; requires a fallback binding.
    SoftDemotion(String),
    Reevaluate(ReentryStage, String),
}

impl TransitionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TransitionEvent::ValidatePass => "validate_pass",
            TransitionEvent::SandboxDone => "sandbox_done",
            TransitionEvent::ShadowDone => "shadow_done",
            TransitionEvent::Activate => "activate",
            TransitionEvent::IncompatibilityDetected(_) => "incompatibility_detected",
            TransitionEvent::PostActivationInstability => "post_activation_instability",
            TransitionEvent::InconclusiveEvidence(_) => "inconclusive_evidence",
            TransitionEvent::SoftDemotion(_) => "soft_demotion",
            TransitionEvent::Reevaluate(..) => "reevaluate",
        }
    }
}

/// The closed-world transition table. Returns the target state for a legal
/// `(state, event)` pair. Rejected and rolled-back are absorbing.
pub fn transition_target(state: LifecycleState, event: &TransitionEvent) -> Option<LifecycleState> {
    use LifecycleState::*;
    use TransitionEvent::*;
    match (state, event) {
        (Registered, ValidatePass) => Some(Validated),
        (Validated, SandboxDone) => Some(Sandboxed),
        (Sandboxed, ShadowDone) => Some(Shadowed),
        (Shadowed, Activate) => Some(Active),
        (s, IncompatibilityDetected(_)) if !s.is_terminal() => Some(Rejected),
        (Active, PostActivationInstability) => Some(RolledBack),
        (Sandboxed, InconclusiveEvidence(_)) | (Shadowed, InconclusiveEvidence(_)) => Some(Demoted),
        (Active, SoftDemotion(_)) => Some(Demoted),
        (Demoted, Reevaluate(ReentryStage::Sandbox, _)) => Some(Sandboxed),
        (Demoted, Reevaluate(ReentryStage::Shadow, _)) => Some(Shadowed),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
struct FamilyEntry {
    records: BTreeMap<String, LifecycleRecord>,
    active: Option<String>,
    /// Previously-active versions, most recent last; rollback restores the
    /// top of this stack.
    activation_stack: Vec<String>,
}

/// Immutable copies of the three registry views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryViews {
    pub active: Vec<LifecycleRecord>,
    pub candidate: Vec<LifecycleRecord>,
    pub history: Vec<LifecycleRecord>,
}

/// The versioned capability registry plus its audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Registry {
    families: BTreeMap<String, FamilyEntry>,
    audit: Vec<AuditEvent>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn audit_log(&self) -> &[AuditEvent] {
        &self.audit
    }

    pub fn record(&self, family: &str, version: &str) -> Result<&LifecycleRecord> {
        self.families
            .get(family)
            .ok_or_else(|| EngineError::UnknownFamily(family.to_string()))?
            .records
            .get(version)
            .ok_or_else(|| EngineError::UnknownVersion {
                family: family.to_string(),
                version: version.to_string(),
            })
    }

    pub fn state(&self, family: &str, version: &str) -> Result<LifecycleState> {
        Ok(self.record(family, version)?.state)
    }

    pub fn active_version(&self, family: &str) -> Option<&str> {
        self.families.get(family).and_then(|f| f.active.as_deref())
    }

    /// Version a rollback would restore: the most recent previously-active
    /// version of the family.
    pub fn restore_target(&self, family: &str) -> Option<String> {
        self.families.get(family).and_then(|f| f.activation_stack.last().cloned())
    }

    // -- event application ---------------------------------------------------

    /// Apply one event's state effect and append it to the log. This is the
    /// single mutation path shared by live operation and replay.
    fn commit(&mut self, family: &str, version: &str, payload: AuditPayload, round: u32) -> Result<()> {
        self.apply_state(family, version, &payload, round)?;
        let sequence = self.audit.len() as u64;
        self.audit.push(AuditEvent {
            sequence,
            event_kind: payload.kind(),
            family_id: family.to_string(),
            version_id: version.to_string(),
            payload,
            round,
        });
        debug_assert!(self.single_active_holds(), "single-active invariant violated");
        Ok(())
    }

    fn record_mut(&mut self, family: &str, version: &str) -> Result<&mut LifecycleRecord> {
        self.families
            .get_mut(family)
            .ok_or_else(|| EngineError::UnknownFamily(family.to_string()))?
            .records
            .get_mut(version)
            .ok_or_else(|| EngineError::UnknownVersion {
                family: family.to_string(),
                version: version.to_string(),
            })
    }

    fn set_state(&mut self, family: &str, version: &str, event: &TransitionEvent) -> Result<()> {
        let state = self.record(family, version)?.state;
        let target = transition_target(state, event).ok_or(EngineError::InvalidTransition {
            state,
            event: event.name().to_string(),
        })?;
        self.record_mut(family, version)?.state = target;
        Ok(())
    }

    fn apply_state(&mut self, family: &str, version: &str, payload: &AuditPayload, round: u32) -> Result<()> {
        match payload {
            AuditPayload::Registered { manifest, provenance } => {
                if let ManifestValidation::Violations(v) = validate_manifest(manifest) {
                    return Err(EngineError::InvalidManifest(v.join("; ")));
                }
                let entry = self.families.entry(family.to_string()).or_default();
                if entry.records.contains_key(version) {
                    return Err(EngineError::DuplicateVersion {
                        family: family.to_string(),
                        version: version.to_string(),
                    });
                }
                entry.records.insert(
                    version.to_string(),
                    LifecycleRecord::new(manifest.clone(), provenance.clone()),
                );
            }
            AuditPayload::CompatEvaluated { report, validated } => {
                if *validated {
                    self.set_state(family, version, &TransitionEvent::ValidatePass)?;
                }
                if let Some(report) = report {
                    self.record_mut(family, version)?.compat_history.push(report.clone());
                }
            }
            AuditPayload::SandboxDone { report, .. } => {
                let state = self.record(family, version)?.state;
                let event = if state == LifecycleState::Demoted {
                    TransitionEvent::Reevaluate(ReentryStage::Sandbox, String::new())
                } else {
                    TransitionEvent::SandboxDone
                };
                self.set_state(family, version, &event)?;
                if let Some(report) = report {
                    self.record_mut(family, version)?.sandbox_summary = Some(report.clone());
                }
            }
            AuditPayload::ShadowDone { report, .. } => {
                let state = self.record(family, version)?.state;
                let event = if state == LifecycleState::Demoted {
                    TransitionEvent::Reevaluate(ReentryStage::Shadow, String::new())
                } else {
                    TransitionEvent::ShadowDone
                };
                self.set_state(family, version, &event)?;
                if let Some(report) = report {
                    self.record_mut(family, version)?.shadow_summary = Some(report.clone());
                }
            }
            AuditPayload::ActivationDecided { mode, restored, profile, .. } => {
                if *restored {
                    // Stage-7 set update: the registry restores the prior
                    // active version; this is registry bookkeeping, not a
                    // candidate-driven transition.
                    let entry = self
                        .families
                        .get_mut(family)
                        .ok_or_else(|| EngineError::UnknownFamily(family.to_string()))?;
                    debug_assert_eq!(entry.activation_stack.last().map(String::as_str), Some(version));
                    entry.activation_stack.pop();
                    entry.active = Some(version.to_string());
                    entry
                        .records
                        .get_mut(version)
                        .ok_or_else(|| EngineError::UnknownVersion {
                            family: family.to_string(),
                            version: version.to_string(),
                        })?
                        .state = LifecycleState::Active;
                } else {
                    self.set_state(family, version, &TransitionEvent::Activate)?;
                    let entry = self.families.get_mut(family).unwrap();
                    entry.active = Some(version.to_string());
                    let record = entry.records.get_mut(version).unwrap();
                    record.activation_history.push((round, *profile, *mode));
                }
            }
            AuditPayload::MonitorDecision { .. } => {}
            AuditPayload::RollbackExecuted { event } => {
                self.set_state(family, version, &TransitionEvent::PostActivationInstability)?;
                let entry = self.families.get_mut(family).unwrap();
                if entry.active.as_deref() == Some(version) {
                    entry.active = None;
                }
                self.record_mut(family, version)?.rollback_history.push(event.clone());
            }
            AuditPayload::Demoted { reason, superseded_by } => {
                let state = self.record(family, version)?.state;
                if superseded_by.is_some() {
                    // Supersession: the active predecessor steps aside and
                    // becomes restorable.
                    if state != LifecycleState::Active {
                        return Err(EngineError::InvalidTransition {
                            state,
                            event: "superseded".to_string(),
                        });
                    }
                    let entry = self.families.get_mut(family).unwrap();
                    entry.activation_stack.push(version.to_string());
                    if entry.active.as_deref() == Some(version) {
                        entry.active = None;
                    }
                    entry.records.get_mut(version).unwrap().state = LifecycleState::Demoted;
                } else {
                    let event = if state == LifecycleState::Active {
                        let record = self.record(family, version)?;
                        if !record.manifest.recovery_profile.fallback_binding {
                            return Err(EngineError::InvalidTransition {
                                state,
                                event: "soft_demotion without fallback binding".to_string(),
                            });
                        }
                        TransitionEvent::SoftDemotion(reason.clone())
                    } else {
                        TransitionEvent::InconclusiveEvidence(reason.clone())
                    };
                    self.set_state(family, version, &event)?;
                    let entry = self.families.get_mut(family).unwrap();
                    if entry.active.as_deref() == Some(version) {
                        entry.active = None;
                    }
                }
            }
            AuditPayload::Rejected { reason } => {
                self.set_state(
                    family,
                    version,
                    &TransitionEvent::IncompatibilityDetected(reason.clone()),
                )?;
                let entry = self.families.get_mut(family).unwrap();
                if entry.active.as_deref() == Some(version) {
                    entry.active = None;
                }
            }
        }
        Ok(())
    }

    // -- public operations ----------------------------------------------------

    /// Insert a fresh candidate in state `registered`. The active view is
    /// unchanged.
    pub fn register_candidate(
        &mut self,
        manifest: CapabilityManifest,
        provenance: &str,
        round: u32,
    ) -> Result<&LifecycleRecord> {
        let family = manifest.family_id.clone();
        let version = manifest.version_id.clone();
        self.commit(
            &family,
            &version,
            AuditPayload::Registered { manifest, provenance: provenance.to_string() },
            round,
        )?;
        self.record(&family, &version)
    }

    /// Register and force-activate the initially active baseline version.
    pub fn install_baseline(&mut self, manifest: CapabilityManifest, round: u32) -> Result<()> {
        let family = manifest.family_id.clone();
        let version = manifest.version_id.clone();
        self.register_candidate(manifest, "baseline", round)?;
        self.commit(&family, &version, AuditPayload::CompatEvaluated { report: None, validated: true }, round)?;
        self.commit(
            &family,
            &version,
            AuditPayload::SandboxDone {
                report: None,
                detections: DetectionCounts::default(),
                forced: true,
                note: Some("baseline install".into()),
            },
            round,
        )?;
        self.commit(
            &family,
            &version,
            AuditPayload::ShadowDone { report: None, forced: true, note: Some("baseline install".into()) },
            round,
        )?;
        self.activate(&family, &version, ActivationMode::Full, true, true, ProfileId::Sim, round)?;
        Ok(())
    }

    /// Guarded lifecycle transition with a default payload. The
    /// evidence-carrying `record_*` methods are preferred in pipeline code.
    pub fn transition(
        &mut self,
        family: &str,
        version: &str,
        event: TransitionEvent,
        round: u32,
    ) -> Result<&LifecycleRecord> {
        // Validate against the table up front so illegal pairs never mutate.
        let state = self.record(family, version)?.state;
        transition_target(state, &event).ok_or(EngineError::InvalidTransition {
            state,
            event: event.name().to_string(),
        })?;
        match event {
            TransitionEvent::ValidatePass => {
                self.commit(family, version, AuditPayload::CompatEvaluated { report: None, validated: true }, round)?;
            }
            TransitionEvent::SandboxDone => {
                self.commit(
                    family,
                    version,
                    AuditPayload::SandboxDone {
                        report: None,
                        detections: DetectionCounts::default(),
                        forced: false,
                        note: None,
                    },
                    round,
                )?;
            }
            TransitionEvent::ShadowDone => {
                self.commit(family, version, AuditPayload::ShadowDone { report: None, forced: false, note: None }, round)?;
            }
            TransitionEvent::Activate => {
                self.activate(family, version, ActivationMode::Full, false, true, ProfileId::Sim, round)?;
            }
            TransitionEvent::IncompatibilityDetected(reason) => {
                self.commit(family, version, AuditPayload::Rejected { reason }, round)?;
            }
            TransitionEvent::PostActivationInstability => {
                let event = RollbackEvent {
                    candidate_version: version.to_string(),
                    predecessor_version: self
                        .families
                        .get(family)
                        .and_then(|f| f.activation_stack.last().cloned()),
                    trigger_type: "drift_detected".into(),
                    time_to_rollback: 0,
                    post_rollback_safe: true,
                    recovery_success: false,
                };
                self.execute_rollback_event(family, version, event, round)?;
            }
            TransitionEvent::InconclusiveEvidence(reason) | TransitionEvent::SoftDemotion(reason) => {
                self.commit(family, version, AuditPayload::Demoted { reason, superseded_by: None }, round)?;
            }
            TransitionEvent::Reevaluate(stage, reason) => {
                let payload = match stage {
                    ReentryStage::Sandbox => AuditPayload::SandboxDone {
                        report: None,
                        detections: DetectionCounts::default(),
                        forced: false,
                        note: Some(format!("re-evaluation: {reason}")),
                    },
                    ReentryStage::Shadow => AuditPayload::ShadowDone {
                        report: None,
                        forced: false,
                        note: Some(format!("re-evaluation: {reason}")),
                    },
                };
                self.commit(family, version, payload, round)?;
            }
        }
        self.record(family, version)
    }

    /// Record a compatibility evaluation that passed static checks; the
    /// record advances to `validated`.
    pub fn record_compat(
        &mut self,
        family: &str,
        version: &str,
        report: Option<CompatReport>,
        round: u32,
    ) -> Result<()> {
        self.commit(family, version, AuditPayload::CompatEvaluated { report, validated: true }, round)
    }

    /// Record an evaluation that failed and reject the candidate.
    pub fn record_rejection(
        &mut self,
        family: &str,
        version: &str,
        reason: &str,
        report: Option<CompatReport>,
        round: u32,
    ) -> Result<()> {
        if report.is_some() {
            self.commit(family, version, AuditPayload::CompatEvaluated { report, validated: false }, round)?;
        }
        self.commit(family, version, AuditPayload::Rejected { reason: reason.to_string() }, round)
    }

    pub fn record_sandbox(
        &mut self,
        family: &str,
        version: &str,
        report: SandboxReport,
        detections: DetectionCounts,
        forced: bool,
        round: u32,
    ) -> Result<()> {
        self.commit(
            family,
            version,
            AuditPayload::SandboxDone { report: Some(report), detections, forced, note: None },
            round,
        )
    }

    pub fn record_shadow(
        &mut self,
        family: &str,
        version: &str,
        report: ShadowReport,
        forced: bool,
        round: u32,
    ) -> Result<()> {
        self.commit(family, version, AuditPayload::ShadowDone { report: Some(report), forced, note: None }, round)
    }

    /// Promote a candidate to the active view, superseding any predecessor.
    pub fn activate(
        &mut self,
        family: &str,
        version: &str,
        mode: ActivationMode,
        forced: bool,
        recovery_verified: bool,
        profile: ProfileId,
        round: u32,
    ) -> Result<()> {
        let superseded = self.active_version(family).map(str::to_string);
        if let Some(prev) = &superseded {
            if prev != version {
                self.commit(
                    family,
                    prev,
                    AuditPayload::Demoted {
                        reason: "superseded".into(),
                        superseded_by: Some(version.to_string()),
                    },
                    round,
                )?;
            }
        }
        self.commit(
            family,
            version,
            AuditPayload::ActivationDecided {
                mode,
                superseded,
                restored: false,
                forced,
                recovery_verified,
                profile,
            },
            round,
        )
    }

    pub fn record_monitor(
        &mut self,
        family: &str,
        version: &str,
        decision: MonitorDecision,
        round: u32,
    ) -> Result<()> {
        self.commit(family, version, AuditPayload::MonitorDecision { decision }, round)
    }

    /// Demote a candidate (inconclusive or profile-restricted evidence, or a
    /// soft demotion of the active version).
    pub fn record_demotion(&mut self, family: &str, version: &str, reason: &str, round: u32) -> Result<()> {
        self.commit(
            family,
            version,
            AuditPayload::Demoted { reason: reason.to_string(), superseded_by: None },
            round,
        )
    }

    /// Execute a rollback: the candidate leaves the active view and the most
    /// recent previously-active version is restored.
    pub fn execute_rollback_event(
        &mut self,
        family: &str,
        version: &str,
        event: RollbackEvent,
        round: u32,
    ) -> Result<()> {
        let restored = self
            .families
            .get(family)
            .and_then(|f| f.activation_stack.last().cloned());
        self.commit(family, version, AuditPayload::RollbackExecuted { event }, round)?;
        if let Some(prev) = restored {
            self.commit(
                family,
                &prev,
                AuditPayload::ActivationDecided {
                    mode: ActivationMode::Full,
                    superseded: None,
                    restored: true,
                    forced: false,
                    recovery_verified: true,
                    profile: ProfileId::Sim,
                },
                round,
            )?;
        }
        Ok(())
    }

    /// The three registry views as immutable copies.
    pub fn views(&self) -> RegistryViews {
        let mut active = Vec::new();
        let mut candidate = Vec::new();
        let mut history = Vec::new();
        for entry in self.families.values() {
            for record in entry.records.values() {
                if record.state == LifecycleState::Active {
                    active.push(record.clone());
                } else if record.is_history() {
                    history.push(record.clone());
                } else {
                    candidate.push(record.clone());
                }
            }
        }
        RegistryViews { active, candidate, history }
    }

    /// At most one active version per family.
    pub fn single_active_holds(&self) -> bool {
        self.families.values().all(|entry| {
            let actives = entry
                .records
                .values()
                .filter(|r| r.state == LifecycleState::Active)
                .count();
            actives <= 1
                && (entry.active.is_some() == (actives == 1))
                && entry
                    .active
                    .as_ref()
                    .map(|v| entry.records[v].state == LifecycleState::Active)
                    .unwrap_or(true)
        })
    }

    /// Canonical JSON serialization of the full registry state.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let registry: Registry = serde_json::from_str(&text)?;
        Ok(registry)
    }

    /// Reconstruct a registry purely from an audit log.
    pub fn replay_audit(events: &[AuditEvent]) -> Result<Self> {
        let mut registry = Registry::new();
        for (i, event) in events.iter().enumerate() {
            if event.sequence != i as u64 {
                return Err(EngineError::IncompleteAudit(format!(
                    "sequence gap at {} (expected {i})",
                    event.sequence
                )));
            }
            registry.apply_state(&event.family_id, &event.version_id, &event.payload, event.round)?;
            registry.audit.push(event.clone());
        }
        Ok(registry)
    }
}

/// Serialize an audit log as JSONL, one event per line.
pub fn audit_to_jsonl(events: &[AuditEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("audit event serializes"));
        out.push('\n');
    }
    out
}

pub fn audit_from_jsonl(text: &str) -> Result<Vec<AuditEvent>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(EngineError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{baseline_manifest, generate_pool, PoolVariant};
    use crate::model::TaskFamily;

    fn manifest(version: &str) -> CapabilityManifest {
        let pool = generate_pool(TaskFamily::Grasp, 1, PoolVariant::MarginalPair);
        let mut m = pool[0].manifest.clone();
        m.version_id = version.to_string();
        m
    }

    #[test]
    fn register_then_duplicate_fails() {
        let mut reg = Registry::new();
        let record = reg.register_candidate(manifest("grasp-x1"), "test", 0).unwrap();
        assert_eq!(record.state, LifecycleState::Registered);
        let err = reg.register_candidate(manifest("grasp-x1"), "test", 0);
        assert!(matches!(err, Err(EngineError::DuplicateVersion { .. })));
    }

    #[test]
    fn invalid_manifest_is_rejected_at_registration() {
        let mut reg = Registry::new();
        let mut m = manifest("grasp-x1");
        m.input_schema.clear();
        assert!(matches!(
            reg.register_candidate(m, "test", 0),
            Err(EngineError::InvalidManifest(_))
        ));
    }

    #[test]
    fn forward_chain_reaches_active() {
        let mut reg = Registry::new();
        reg.register_candidate(manifest("grasp-x1"), "test", 0).unwrap();
        reg.transition("grasp", "grasp-x1", TransitionEvent::ValidatePass, 0).unwrap();
        reg.transition("grasp", "grasp-x1", TransitionEvent::SandboxDone, 0).unwrap();
        reg.transition("grasp", "grasp-x1", TransitionEvent::ShadowDone, 0).unwrap();
        let record = reg.transition("grasp", "grasp-x1", TransitionEvent::Activate, 0).unwrap();
        assert_eq!(record.state, LifecycleState::Active);
        assert_eq!(reg.active_version("grasp"), Some("grasp-x1"));
    }

    #[test]
    fn illegal_transition_is_rejected_without_mutation() {
        let mut reg = Registry::new();
        reg.register_candidate(manifest("grasp-x1"), "test", 0).unwrap();
        let err = reg.transition("grasp", "grasp-x1", TransitionEvent::Activate, 0);
        assert!(matches!(err, Err(EngineError::InvalidTransition { .. })));
        assert_eq!(reg.state("grasp", "grasp-x1").unwrap(), LifecycleState::Registered);
        assert_eq!(reg.audit_log().len(), 1);
    }

    #[test]
    fn rollback_restores_prior_active() {
        let mut reg = Registry::new();
        reg.install_baseline(baseline_manifest(TaskFamily::Grasp), 0).unwrap();
        reg.register_candidate(manifest("grasp-x2"), "test", 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::ValidatePass, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::SandboxDone, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::ShadowDone, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::Activate, 1).unwrap();
        assert_eq!(reg.active_version("grasp"), Some("grasp-x2"));

        let views = reg.views();
        assert!(views.history.iter().any(|r| r.manifest.version_id == "grasp-v0"));

        reg.transition("grasp", "grasp-x2", TransitionEvent::PostActivationInstability, 2).unwrap();
        assert_eq!(reg.active_version("grasp"), Some("grasp-v0"));
        assert_eq!(reg.state("grasp", "grasp-x2").unwrap(), LifecycleState::RolledBack);
        let views = reg.views();
        assert!(views.history.iter().any(|r| r.manifest.version_id == "grasp-x2"));
        assert!(reg.single_active_holds());
    }

    #[test]
    fn rolled_back_is_absorbing() {
        let mut reg = Registry::new();
        reg.install_baseline(baseline_manifest(TaskFamily::Grasp), 0).unwrap();
        reg.register_candidate(manifest("grasp-x2"), "test", 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::ValidatePass, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::SandboxDone, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::ShadowDone, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::Activate, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::PostActivationInstability, 2).unwrap();
        for event in [
            TransitionEvent::ValidatePass,
            TransitionEvent::Activate,
            TransitionEvent::IncompatibilityDetected("x".into()),
            TransitionEvent::InconclusiveEvidence("x".into()),
        ] {
            assert!(reg.transition("grasp", "grasp-x2", event, 3).is_err());
        }
    }

    #[test]
    fn candidate_view_after_register_only() {
        let mut reg = Registry::new();
        reg.install_baseline(baseline_manifest(TaskFamily::Grasp), 0).unwrap();
        reg.register_candidate(manifest("grasp-x2"), "test", 1).unwrap();
        let views = reg.views();
        assert_eq!(views.active.len(), 1);
        assert_eq!(views.active[0].manifest.version_id, "grasp-v0");
        assert!(views.candidate.iter().any(|r| r.manifest.version_id == "grasp-x2"));
    }

    #[test]
    fn every_path_to_active_passes_validated() {
        use LifecycleState::*;
        use std::collections::VecDeque;
        // Breadth-first enumeration over the transition graph: no path from
        // `registered` reaches `active` without visiting `validated`.
        let events: Vec<TransitionEvent> = vec![
            TransitionEvent::ValidatePass,
            TransitionEvent::SandboxDone,
            TransitionEvent::ShadowDone,
            TransitionEvent::Activate,
            TransitionEvent::IncompatibilityDetected(String::new()),
            TransitionEvent::PostActivationInstability,
            TransitionEvent::InconclusiveEvidence(String::new()),
            TransitionEvent::SoftDemotion(String::new()),
            TransitionEvent::Reevaluate(ReentryStage::Sandbox, String::new()),
            TransitionEvent::Reevaluate(ReentryStage::Shadow, String::new()),
        ];
        let mut queue = VecDeque::from([(Registered, false)]);
        let mut seen = std::collections::BTreeSet::new();
        while let Some((state, visited_validated)) = queue.pop_front() {
            if !seen.insert((state, visited_validated)) {
                continue;
            }
            if state == Active {
                assert!(visited_validated, "reached active without passing validated");
            }
            for event in &events {
                if let Some(next) = transition_target(state, event) {
                    queue.push_back((next, visited_validated || next == Validated));
                }
            }
        }
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        let mut reg = Registry::new();
        reg.install_baseline(baseline_manifest(TaskFamily::Grasp), 0).unwrap();
        reg.register_candidate(manifest("grasp-x2"), "test", 1).unwrap();
        reg.snapshot(&path).unwrap();
        let loaded = Registry::load(&path).unwrap();
        assert_eq!(reg, loaded);
        assert_eq!(reg.to_canonical_json(), loaded.to_canonical_json());
    }

    #[test]
    fn truncated_snapshot_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        let mut reg = Registry::new();
        reg.install_baseline(baseline_manifest(TaskFamily::Grasp), 0).unwrap();
        reg.snapshot(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(Registry::load(&path).is_err());
    }

    #[test]
    fn audit_replay_reconstructs_state() {
        let mut reg = Registry::new();
        reg.install_baseline(baseline_manifest(TaskFamily::Grasp), 0).unwrap();
        reg.register_candidate(manifest("grasp-x2"), "test", 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::ValidatePass, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::SandboxDone, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::ShadowDone, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::Activate, 1).unwrap();
        reg.transition("grasp", "grasp-x2", TransitionEvent::PostActivationInstability, 2).unwrap();

        let replayed = Registry::replay_audit(reg.audit_log()).unwrap();
        assert_eq!(reg, replayed);

        let jsonl = audit_to_jsonl(reg.audit_log());
        let parsed = audit_from_jsonl(&jsonl).unwrap();
        let replayed2 = Registry::replay_audit(&parsed).unwrap();
        assert_eq!(reg, replayed2);
    }

    #[test]
    fn demoted_candidate_can_reenter_sandbox() {
        let mut reg = Registry::new();
        reg.register_candidate(manifest("grasp-x1"), "test", 0).unwrap();
        reg.transition("grasp", "grasp-x1", TransitionEvent::ValidatePass, 0).unwrap();
        reg.transition("grasp", "grasp-x1", TransitionEvent::SandboxDone, 0).unwrap();
        reg.transition("grasp", "grasp-x1", TransitionEvent::InconclusiveEvidence("weak".into()), 0)
            .unwrap();
        let record = reg
            .transition(
                "grasp",
                "grasp-x1",
                TransitionEvent::Reevaluate(ReentryStage::Sandbox, "new evidence".into()),
                1,
            )
            .unwrap();
        assert_eq!(record.state, LifecycleState::Sandboxed);
    }
}
