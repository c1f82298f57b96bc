use thiserror::Error;

/// Errors produced by the library and the CLI drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A covariance block failed the symmetric positive-semidefinite check.
    #[error("covariance block `{0}` is not symmetric positive semidefinite")]
    NotPositiveSemidefinite(&'static str),

    /// Per-sensor inputs do not match the rig's sensor count.
    #[error("sensor count mismatch: rig has {rig} sensors, got {given} inputs")]
    SensorCountMismatch { rig: usize, given: usize },

    /// Voxel grids with different origin, resolution, or dims cannot be fused.
    #[error("voxel grid geometry mismatch: {0}")]
    GridGeometryMismatch(String),

    /// Result fusion requires extrinsic rotations that are pure yaw.
    #[error("extrinsic rotation of sensor {sensor} deviates from pure yaw by {deviation:.3e}")]
    NotPureYaw { sensor: usize, deviation: f64 },

    /// The normal equations of a least-squares fit are rank deficient.
    #[error("plane fit failed: {0}")]
    FitFailure(String),

    /// A binary input file is malformed; `offset` is the first bad byte.
    #[error("malformed binary file `{path}` at byte {offset}: {message}")]
    MalformedBinary {
        path: String,
        offset: u64,
        message: String,
    },

    /// A line-delimited record file is malformed; `record` is 1-based.
    #[error("malformed record {record} in `{path}`: {message}")]
    MalformedRecord {
        path: String,
        record: usize,
        message: String,
    },

    /// Configuration file could not be parsed or is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// The scene generator could not place the requested boxes.
    #[error("scene placement infeasible: {placed} of {requested} boxes placed after {attempts} attempts")]
    PlacementInfeasible {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    /// Every trial of a numerical experiment failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI process exit code: 2 for config/parse problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::MalformedBinary { .. }
            | Error::MalformedRecord { .. }
            | Error::SensorCountMismatch { .. }
            | Error::GridGeometryMismatch(_)
            | Error::NotPureYaw { .. }
            | Error::PlacementInfeasible { .. }
            | Error::Io(_) => 2,
            Error::FitFailure(_) | Error::Numerical(_) | Error::NotPositiveSemidefinite(_) => 3,
        }
    }
}
