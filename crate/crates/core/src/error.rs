use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The first-order effective variance diverges at the threshold time.
    #[error("t = {t:e} is beyond the validity limit {limit:e} (threshold {threshold:e}); the effective variance diverges")]
    BeyondThreshold { t: f64, limit: f64, threshold: f64 },

    /// First-order decay rate Γ₀(1 − p²/2m²c²) is not positive at this momentum.
    #[error("first-order decay rate is non-positive at p = {p:e} (|p| must stay below {limit:e})")]
    UnphysicalRate { p: f64, limit: f64 },

    #[error("momentum grid [{p_min:e}, {p_max:e}] reaches |p| >= {limit:e}, outside the first-order regime")]
    GridOutOfValidity { p_min: f64, p_max: f64, limit: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("surviving norm {norm:e} is too small to condition on")]
    VanishingNorm { norm: f64 },

    #[error("no surviving trajectories at t = {t:e}")]
    EmptySurvivors { t: f64 },
}

impl Error {
    /// True for failures caused by leaving the regime where the first-order
    /// expansion holds (threshold time or momentum bound).
    pub fn is_validity(&self) -> bool {
        matches!(
            self,
            Error::BeyondThreshold { .. }
                | Error::UnphysicalRate { .. }
                | Error::GridOutOfValidity { .. }
        )
    }
}
