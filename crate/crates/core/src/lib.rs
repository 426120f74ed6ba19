//! Time-varying autoregression of asset returns estimated as one stacked
//! weighted least-squares problem, together with the machinery around it:
//! return construction, unit-root and parameter-constancy tests, impulse
//! responses and long-run multipliers with delta-method bands, and spectral
//! analysis of the resulting efficiency path.
//!
//! The crate is organised by stage:
//!
//! * [`ingest`]: monthly price files, log returns, descriptive statistics
//! * [`stationarity`]: GLS-detrended ADF test with modified information criteria
//! * [`arstatic`]: whole-sample AR(q), HAC covariance, SBIC, Hansen's Lc, Ljung-Box
//! * [`tvar`]: the stacked observation/state system, its banded solver, the
//!   Kalman smoother used as an independent check, and smoother window weights
//! * [`efficiency`]: interim and long-run multipliers and their standard errors
//! * [`spectral`]: HP filter, periodograms and AR spectra

pub mod arstatic;
pub mod efficiency;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod sim;
pub mod spectral;
pub mod stationarity;
pub mod tvar;

pub use error::{Error, Result};
pub use ingest::{DescriptiveStats, PriceSeries, ReturnSeries, YearMonth};
pub use tvar::{StackedSystem, TvarConfig, TvarFit};
pub use efficiency::MultiplierPath;
pub use spectral::SpectrumEstimate;
