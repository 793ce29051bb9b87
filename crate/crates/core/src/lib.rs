//! Circle fitting by orthogonal distance, algebraic (Kåsa, Pratt) and
//! three-point methods, plus a Monte Carlo lab for studying the tail
//! behaviour of the resulting estimators.

pub mod cli;
pub mod error;
pub mod geom_types;
mod jet;
pub mod fitters;
pub mod models;
pub mod moment_lab;
pub mod objective;

pub use error::{FitError, GeomError, LabError, ModelError, ObjectiveError};
pub use geom_types::{
    circle_from_pratt, pratt_from_circle, residual, to_alternative_params, AltParams, CenterPolar,
    Circle, GeneralizedCircle, Line, Point2, PointSet, PrattVector,
};
