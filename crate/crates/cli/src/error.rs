//! Error classification onto the documented exit codes.

use std::fmt;

use lo_core::constructions::ConstructError;
use lo_core::decoupling::DecouplingError;
use lo_core::gap::GapError;
use lo_core::inverse::InverseError;
use lo_core::randvar::RandVarError;
use lo_core::smallball::SmallBallError;

/// Exit codes: 2 config, 3 budget, 4 infeasible, 5 consensus/coverage.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Budget(String),
    Infeasible(String),
    Consensus(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Consensus(_) => 5,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigInvalid",
            CliError::Budget(_) => "BudgetExceeded",
            CliError::Infeasible(_) => "Infeasible",
            CliError::Consensus(_) => "ConsensusOrCoverage",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Budget(m)
            | CliError::Infeasible(m)
            | CliError::Consensus(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.class(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<GapError> for CliError {
    fn from(e: GapError) -> Self {
        match e {
            GapError::VolumeExceedsCap { .. } => CliError::Budget(format!("VolumeExceedsCap: {e}")),
            GapError::NotSymmetric => CliError::Infeasible(format!("NotSymmetric: {e}")),
            GapError::NotProper => CliError::Infeasible(format!("NotProper: {e}")),
            GapError::PointOutsideBox { .. } => {
                CliError::Infeasible(format!("PointOutsideBox: {e}"))
            }
            GapError::Overflow(_) => CliError::Infeasible(format!("Overflow: {e}")),
            _ => CliError::Config(format!("{e}")),
        }
    }
}

impl From<SmallBallError> for CliError {
    fn from(e: SmallBallError) -> Self {
        match e {
            SmallBallError::BudgetExceeded { .. } => {
                CliError::Budget(format!("BudgetExceeded: {e}"))
            }
            SmallBallError::EmptyCenterGrid => CliError::Config(format!("EmptyCenterGrid: {e}")),
            SmallBallError::Mismatch(_) => CliError::Config(format!("{e}")),
        }
    }
}

impl From<RandVarError> for CliError {
    fn from(e: RandVarError) -> Self {
        CliError::Config(format!("{e}"))
    }
}

impl From<ConstructError> for CliError {
    fn from(e: ConstructError) -> Self {
        match e {
            ConstructError::InfeasibleK => CliError::Infeasible(format!("InfeasibleK: {e}")),
            ConstructError::Gap(g) => g.into(),
            ConstructError::SmallBall(s) => s.into(),
            ConstructError::Invalid(_) => CliError::Config(format!("{e}")),
        }
    }
}

impl From<DecouplingError> for CliError {
    fn from(e: DecouplingError) -> Self {
        match e {
            DecouplingError::NotSymmetric => CliError::Infeasible(format!("NotSymmetric: {e}")),
            DecouplingError::SmallBall(s) => s.into(),
            _ => CliError::Config(format!("{e}")),
        }
    }
}

impl From<InverseError> for CliError {
    fn from(e: InverseError) -> Self {
        match e {
            InverseError::SearchSpaceExceeded { .. } => {
                CliError::Budget(format!("SearchSpaceExceeded: {e}"))
            }
            InverseError::NoGoodVectors => CliError::Consensus(format!("NoGoodVectors: {e}")),
            InverseError::NoSpanningTuple => CliError::Consensus(format!("NoSpanningTuple: {e}")),
            InverseError::CoverageFloorMissed { .. } => {
                CliError::Consensus(format!("CoverageFloorMissed: {e}"))
            }
            InverseError::InsufficientSubsetConsensus => {
                CliError::Consensus(format!("InsufficientSubsetConsensus: {e}"))
            }
            InverseError::Overflow(_) => CliError::Infeasible(format!("Overflow: {e}")),
            InverseError::Gap(g) => g.into(),
            InverseError::SmallBall(s) => s.into(),
            InverseError::RandVar(r) => r.into(),
            InverseError::Invalid(_) => CliError::Config(format!("{e}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json: {e}"))
    }
}
