//! Channel-level LTV forecasting with trapezoidal windows and a multi-tower
//! fusion network.

pub mod error;
pub mod eval;
pub mod ltv;
pub mod model;
pub mod preprocess;
pub mod synth;
pub mod training;
pub mod trapezoid;

pub use error::{Error, Result};
pub use ltv::{ActivationDate, ChannelId, Day, HolidayCalendar, LtvCurve, LtvDataset};
pub use model::{ModelConfig, MtFusionNet};
pub use trapezoid::{TrapezoidWindow, WindowSpec};
