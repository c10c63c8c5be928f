use crate::config::Truncation;

/// Errors surfaced by the analysis and simulation entry points.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The adaptive DFT window hit its sample budget before the tail mass
    /// criterion was met.
    #[error(
        "tail mass criterion not met within the sample budget \
         (contenders = {contenders}, last window = {window} samples)"
    )]
    TailBudgetExceeded { contenders: usize, window: usize },

    /// No truncation length satisfied the unbounded-CRI certification bounds.
    #[error("no finite horizon certifies the unbounded protocol for {users} users")]
    PlainHorizonNotFound { users: usize },

    #[error("stationary solve did not converge (l1 residual = {residual:.3e})")]
    StationaryNotConverged { residual: f64 },

    #[error("inter-refresh moment system is singular (truncation = {truncation})")]
    SingularMomentSystem { truncation: Truncation },

    /// Average AoI is undefined when no packet is ever generated.
    #[error("generation probability must be positive for age analysis")]
    DegenerateTraffic,
}

pub type Result<T> = std::result::Result<T, Error>;
