//! Histogram normalization, visibility with propagated errors, and weighted
//! least-squares fits of the coherence decay and the correlation model.

mod fit;
pub mod lm;
mod normalize;
mod visibility;

pub use fit::{
    fit_exponential_visibility, fit_g2_model, CoherencePoint, ExpFitOptions, FitResult, G2FitOptions,
    G2FitProblem, ParamEstimate,
};
pub use lm::{LeastSquaresProblem, LmSettings};
pub use normalize::{
    default_tail_window, normalize_histogram, tail_bins, NormalizedG2, DEFAULT_TAIL_FRACTION,
    MIN_TAIL_BINS,
};
pub use visibility::{fraction_of_max, visibility_from_histograms, VisibilityCurve};
