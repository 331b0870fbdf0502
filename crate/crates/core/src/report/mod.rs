pub mod classify;
pub mod drx_compare;
pub mod experiment;
pub mod metrics;
pub mod plot;
pub mod predict;
pub mod table;
