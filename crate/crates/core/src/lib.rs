pub mod atmosphere;
pub mod error;
pub mod fitting;
pub mod frame;
pub mod gated;
pub mod metrics;
mod quadrature;
pub mod scene;

pub use atmosphere::{AdaptedModel, FogCondition, FogType, ScatterParams};
pub use error::{Error, Result};
pub use fitting::{FitParams, FitProblem, FitResult};
pub use frame::FrameBuffer;
pub use gated::{GateProfile, GatingScheme};
pub use metrics::{ContrastReport, DepthWindow, EntropyReport, Region};
pub use scene::{Scenario, ScenarioKind, SensorKind, SensorModel, TargetTrace};
