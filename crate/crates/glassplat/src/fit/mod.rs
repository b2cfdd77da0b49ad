//! Fitting per-primitive transparent attributes to reference views.

pub mod fitter;
pub mod loss;

pub use fitter::{fit_attributes, Attribute, AttributeGradient, FitConfig, GradientCheck, GradientProbe, GRADIENT_CHECK_FLOOR, FitState, FitView, Fitter, LearningRates, LossRecord, PixelJacobian};
pub use loss::{depth_to_normal, loss_dssim, loss_l1, loss_mask, loss_normal, loss_total, LossConfig, LossTerms};
