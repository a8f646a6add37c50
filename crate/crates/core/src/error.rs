use thiserror::Error;

/// Errors surfaced by the lifecycle engine.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("duplicate version `{version}` in family `{family}`")]
    DuplicateVersion { family: String, version: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("unknown version `{version}` in family `{family}`")]
    UnknownVersion { family: String, version: String },

    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("invalid transition: {state:?} does not accept {event}")]
    InvalidTransition { state: crate::model::LifecycleState, event: String },

    #[error("family mismatch: `{old}` vs `{new}`")]
    FamilyMismatch { old: String, new: String },

    #[error("behavioral signature is empty (no episodes)")]
    EmptySignature,

    #[error("no traces supplied")]
    EmptyTraces,

    #[error("no active version in family `{0}`")]
    NoActiveVersion(String),

    #[error("candidate `{version}` is in state {state:?}, expected {expected}")]
    WrongLifecycleState {
        version: String,
        state: crate::model::LifecycleState,
        expected: &'static str,
    },

    #[error("telemetry window is empty")]
    EmptyWindow,

    #[error("audit log incomplete: {0}")]
    IncompleteAudit(String),

    #[error("policy set is empty")]
    EmptyPolicySet,

    #[error("snapshot i/o: {0}")]
    SnapshotIo(#[from] std::io::Error),

    #[error("snapshot decode: {0}")]
    SnapshotDecode(#[from] serde_json::Error),

    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, EngineError>;
