use std::fmt;

use replybank_core::Error as CoreError;

/// Bad arguments or configuration, detected before any work is done.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// A pipeline stage failed; carries the stage name.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

/// 2 for invalid input, 3 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<StageError>() {
            return EXIT_STAGE;
        }
        if cause.is::<Invalid>() {
            return EXIT_VALIDATION;
        }
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::Io { .. } => EXIT_STAGE,
                _ => EXIT_VALIDATION,
            };
        }
    }
    EXIT_STAGE
}
