//! One module per CLI verb.

pub mod decay_fit;
pub mod dispersion;
pub mod gen_fixtures;
pub mod ramsey_fit;
pub mod readout;
pub mod spectrum;
