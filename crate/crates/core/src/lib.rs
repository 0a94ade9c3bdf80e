//! Vector light shift modelling for optically trapped spin-1 condensates.
//!
//! Modules follow the analysis chain: atomic response (`atomprops`), beam
//! polarization (`polopt`), trap geometry and fictitious fields (`trapfield`),
//! two-condensate Ramsey phase extraction (`ramsey`), nulling and delayed-drop
//! measurement pipelines (`protocols`), spin-mixing dynamics (`spinmix`) and
//! thermally induced window birefringence (`thermobi`).

pub mod atomprops;
pub mod constants;
pub mod error;
pub mod linalg;
pub mod polopt;
pub mod protocols;
pub mod ramsey;
pub mod rng;
pub mod scalar;
pub mod spinmix;
pub mod thermobi;
pub mod trapfield;
pub mod vec3;

pub use error::Error;
pub use scalar::Real;
pub use vec3::Vec3;

pub type Vec3d = vec3::Vec3<f64>;
pub type Vec3f = vec3::Vec3<f32>;

pub type PolarizationState64 = polopt::PolarizationState<f64>;
pub type PolarizationState32 = polopt::PolarizationState<f32>;
pub type Retarder64 = polopt::Retarder<f64>;
pub type Retarder32 = polopt::Retarder<f32>;

pub type GaussianBeam64 = trapfield::GaussianBeam<f64>;
pub type GaussianBeam32 = trapfield::GaussianBeam<f32>;

pub type Conic64 = ramsey::Conic<f64>;
pub type EllipseFit64 = ramsey::EllipseFit<f64>;
pub type EllipseFit32 = ramsey::EllipseFit<f32>;

pub type LinearFit64 = protocols::LinearFit<f64>;

pub type SpinorState64 = spinmix::SpinorState<f64>;
pub type SpinMixParams64 = spinmix::SpinMixParams<f64>;

pub type WindowMaterial64 = thermobi::WindowMaterial<f64>;
pub type WindowMaterial32 = thermobi::WindowMaterial<f32>;
pub type HeatingScenario64 = thermobi::HeatingScenario<f64>;
pub type HeatingScenario32 = thermobi::HeatingScenario<f32>;
