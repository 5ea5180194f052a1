//! Exit-status classification.

use std::fmt;

/// Bad configuration or invocation: exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<asmcmc::Error>() {
            if e.is_numerical() {
                return EXIT_NUMERICAL;
            }
            if matches!(e, asmcmc::Error::InvalidArgument(_) | asmcmc::Error::Dimension(_)) {
                return EXIT_CONFIG;
            }
        }
    }
    EXIT_FAILURE
}
