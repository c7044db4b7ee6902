//! Descendant integrals of the Theta^{r,s} classes computed exactly from
//! Baker-Akhiezer determinantal formulas, together with machine checks of
//! the identities they satisfy.

pub mod exactmath;
pub mod wavefunc;
pub mod kernel;
pub mod correlators;
pub mod walgebra;
pub mod integrability;
pub mod cli;
