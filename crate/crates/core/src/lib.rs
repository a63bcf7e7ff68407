pub mod interpolator;
pub mod mahler;
pub mod padic;
pub mod poly;
pub mod zeros;
pub mod model;
pub mod engine;
