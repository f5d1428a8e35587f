use std::path::{Path, PathBuf};

use pmi_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{} of {} self-checks failed", .failed, .total)]
    Selfcheck { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Core(Error::Io {
            path: path.into(),
            source,
        })
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        CliError::Core(Error::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        })
    }

    /// Process exit status.
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::InvalidParameter(_) | Error::Dimension { .. } => 2,
                Error::Capacity { .. } => 3,
                Error::Io { .. } | Error::Format { .. } => 4,
                Error::Divergence { .. } => 5,
            },
            CliError::Selfcheck { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => match e {
                Error::InvalidParameter(_) => "config",
                Error::Dimension { .. } => "dimension",
                Error::Capacity { .. } => "capacity",
                Error::Io { .. } => "io",
                Error::Format { .. } => "format",
                Error::Divergence { .. } => "divergence",
            },
            CliError::Selfcheck { .. } => "selfcheck",
        }
    }

    /// One line: `error kind=<kind> code=<code>: <message>`.
    pub fn line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error kind={} code={}: {message}", self.kind(), self.code())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pmi_core::PoolKind;

    #[test]
    fn codes() {
        assert_eq!(CliError::Config("x".into()).code(), 2);
        let cap = CliError::from(Error::Capacity {
            class: 3,
            pool: PoolKind::NonMember,
            required: 200,
            available: 160,
        });
        assert_eq!(cap.code(), 3);
        assert!(cap
            .line()
            .starts_with("error kind=capacity code=3: class 3"));
        assert_eq!(CliError::io("a", std::io::Error::other("x")).code(), 4);
        assert_eq!(
            CliError::from(Error::Divergence {
                epoch: 2,
                loss: f64::NAN
            })
            .code(),
            5
        );
    }

    #[test]
    fn line_is_single() {
        let e = CliError::Config("bad\nvalue".into());
        assert!(!e.line().contains('\n'));
    }
}
