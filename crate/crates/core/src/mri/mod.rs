//! Simulated parallel MRI: synthetic data, the log-sum and ℓ_p
//! reconstruction models, image quality measures and file formats.

pub mod io;
mod model;
mod phantom;
mod quality;
mod synth;

pub use model::{
    build_log_sum_problem, build_lp_problem, build_problem, default_shift, ModelKind, ModelSpec,
    MriProblem, DEFAULT_SHIFT_MARGIN,
};
pub use phantom::shepp_logan;
pub use quality::{psnr, rel_err, snr};
pub use synth::{
    coil_sensitivities, poisson_mask, radial_mask, synthesize_dataset, MaskKind, MriDataset,
    SynthConfig, RATIO_TOLERANCE,
};
