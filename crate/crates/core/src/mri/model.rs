use std::sync::Arc;

use super::synth::MriDataset;
use crate::blockspace::{Block, Field};
use crate::composite::CompositeTerm;
use crate::coupling::QuadraticCoupling;
use crate::error::{Error, Result};
use crate::linops::{FiniteDifference, LinOp, PmriOperator};
use crate::metrics::gram_spectral_radius;
use crate::solver::{Problem, QuadraticFidelity, SolverConfig, State, XMetric};
use crate::metrics::Metric;

/// Margin on `λρ̂` used by the default shift.
pub const DEFAULT_SHIFT_MARGIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    /// `(1/2μ) Σ log(1 + μ‖w_ij‖²)`.
    LogSum { mu: f64 },
    /// `θ Σ ‖w_ij‖^p`.
    Lp { theta: f64, p: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub lambda: f64,
    pub tau: f64,
    /// Metric shift `δ`; `None` picks [`default_shift`].
    pub delta: Option<f64>,
    /// Number of contiguous row bands the `w` field is split into.
    pub w_blocks: usize,
    /// Seed of the power iteration for `ρ(AᵀA)`.
    pub seed: u64,
}

impl ModelSpec {
    pub fn log_sum(mu: f64) -> Self {
        ModelSpec {
            kind: ModelKind::LogSum { mu },
            lambda: 1000.0,
            tau: 1.0,
            delta: None,
            w_blocks: 1,
            seed: 0,
        }
    }

    pub fn lp(theta: f64, p: f64) -> Self {
        ModelSpec {
            kind: ModelKind::Lp { theta, p },
            ..Self::log_sum(1e-4)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.tau > 0.0) {
            return Err(Error::param("λ and τ must be positive"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::param(format!("δ must be positive, got {d}")));
            }
        }
        if self.w_blocks == 0 {
            return Err(Error::param("at least one w block is required"));
        }
        self.composite().map(|_| ())
    }

    pub fn composite(&self) -> Result<CompositeTerm> {
        match self.kind {
            ModelKind::LogSum { mu } => CompositeTerm::log_sum(mu),
            ModelKind::Lp { theta, p } => CompositeTerm::power(theta, p),
        }
    }
}

/// `max{1.1·λρ̂, λρ̂ + γ₁L₁}`: the margin rule, raised if needed so the
/// shifted-Gram metric keeps `λ_min ≥ 1` at `α = γ₁L₁`.
pub fn default_shift(lambda: f64, rho_hat: f64, gamma1: f64, l1: f64) -> f64 {
    (lambda * rho_hat * (1.0 + DEFAULT_SHIFT_MARGIN)).max(lambda * rho_hat + gamma1 * l1)
}

/// A ready-to-run reconstruction problem and its pieces.
#[derive(Clone)]
pub struct MriProblem {
    pub problem: Problem,
    pub init: State,
    pub op: Arc<PmriOperator>,
    pub diff: Arc<FiniteDifference>,
    pub fidelity: Arc<QuadraticFidelity>,
    pub coupling: Arc<QuadraticCoupling>,
    /// Certified `ρ(AᵀA)` bound used by the metric.
    pub rho_hat: f64,
    pub delta: f64,
    pub spec: ModelSpec,
}

impl MriProblem {
    /// Magnitude image of a state.
    pub fn magnitude(&self, s: &State) -> Vec<f64> {
        s.x.magnitude()
    }

    /// Joint Lipschitz constant of `∇H`, `τ(ρ(DᵀD) + 1)`.
    pub fn joint_lipschitz(&self) -> f64 {
        self.spec.tau * (FiniteDifference::SPECTRAL_BOUND + 1.0)
    }

    /// `Lip(φ')·ν` of the penalty.
    pub fn upsilon_lipschitz(&self) -> f64 {
        self.problem.g[0].upsilon_lipschitz()
    }
}

fn row_partition(m: usize, n: usize, parts: usize) -> Result<Vec<Vec<usize>>> {
    if parts > m {
        return Err(Error::param(format!("cannot split {m} rows into {parts} w blocks")));
    }
    Ok((0..parts)
        .map(|b| {
            let (lo, hi) = (b * m / parts, (b + 1) * m / parts);
            (lo * n..hi * n).collect()
        })
        .collect())
}

fn build(data: &MriDataset, spec: &ModelSpec, cfg: &SolverConfig) -> Result<MriProblem> {
    spec.validate()?;
    let (m, n) = (data.rows, data.cols);
    let op = Arc::new(data.operator()?);
    let op_dyn: Arc<dyn LinOp> = op.clone();
    let rho_hat = gram_spectral_radius(op_dyn.clone(), spec.seed)?.min(op.gram_bound());
    let diff = Arc::new(FiniteDifference::new(m, n));
    let diff_dyn: Arc<dyn LinOp> = diff.clone();
    let mut coupling =
        QuadraticCoupling::new(spec.tau, diff_dyn, FiniteDifference::SPECTRAL_BOUND)?;
    if spec.w_blocks > 1 {
        coupling = coupling.with_partition(row_partition(m, n, spec.w_blocks)?)?;
    }
    let coupling = Arc::new(coupling);
    let l1 = spec.tau * FiniteDifference::SPECTRAL_BOUND;
    let bound = spec.lambda * rho_hat;
    let delta = spec
        .delta
        .unwrap_or_else(|| default_shift(spec.lambda, rho_hat, cfg.gamma1, l1));
    if delta <= bound {
        return Err(Error::param(format!(
            "δ = {delta} does not exceed λ·ρ̂(AᵀA) = {bound:.4}; pass a larger δ"
        )));
    }
    if delta - bound < cfg.gamma1 * l1 {
        return Err(Error::param(format!(
            "δ = {delta} leaves δ - λρ̂ = {:.4} below γ₁L₁ = {:.4}; need δ ≥ {:.4}",
            delta - bound,
            cfg.gamma1 * l1,
            bound + cfg.gamma1 * l1
        )));
    }
    let fidelity = Arc::new(QuadraticFidelity::new(op_dyn.clone(), data.kspace.clone(), spec.lambda)?);
    let g = spec.composite()?;
    let problem = Problem {
        f: fidelity.clone(),
        g: vec![g; spec.w_blocks],
        coupling: coupling.clone(),
        x_metric: XMetric::ShiftedGram {
            shift: delta,
            weight: spec.lambda,
            forward: op_dyn,
            rho_upper: rho_hat,
        },
        y_metrics: vec![Metric::Identity; spec.w_blocks],
    };
    let u0 = op.zero_filled(&data.kspace)?.with_field(Field::Complex);
    let du = diff.forward(&u0)?;
    let ys = (0..spec.w_blocks)
        .map(|j| coupling.gather(j, &du))
        .collect::<Result<Vec<Block>>>()?;
    Ok(MriProblem {
        problem,
        init: State { x: u0, ys },
        op,
        diff,
        fidelity,
        coupling,
        rho_hat,
        delta,
        spec: spec.clone(),
    })
}

/// `(λ/2)‖Au - û‖² + (1/2μ)Σ log(1 + μ‖w_ij‖²) + (τ/2)‖Du - w‖²`.
pub fn build_log_sum_problem(data: &MriDataset, spec: &ModelSpec, cfg: &SolverConfig) -> Result<MriProblem> {
    if !matches!(spec.kind, ModelKind::LogSum { .. }) {
        return Err(Error::param("log-sum builder needs a log-sum model"));
    }
    build(data, spec, cfg)
}

/// `(λ/2)‖Au - û‖² + θΣ‖w_ij‖^p + (τ/2)‖Du - w‖²`.
pub fn build_lp_problem(data: &MriDataset, spec: &ModelSpec, cfg: &SolverConfig) -> Result<MriProblem> {
    if !matches!(spec.kind, ModelKind::Lp { .. }) {
        return Err(Error::param("ℓ_p builder needs an ℓ_p model"));
    }
    build(data, spec, cfg)
}

/// Dispatches on the model kind.
pub fn build_problem(data: &MriDataset, spec: &ModelSpec, cfg: &SolverConfig) -> Result<MriProblem> {
    build(data, spec, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::synth::{synthesize_dataset, MaskKind, SynthConfig};
    use crate::solver::cpalm_step;

    fn small(sigma: f64) -> MriDataset {
        synthesize_dataset(&SynthConfig {
            rows: 8,
            cols: 8,
            coils: 2,
            mask: MaskKind::Poisson(0.5),
            noise_sigma: sigma,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn consistent_data_leaves_only_penalty() {
        let mut d = small(0.0);
        let op = d.operator().unwrap();
        let u0 = Block::from_real(&[8, 8], &d.ground_truth).unwrap().with_field(Field::Complex);
        d.kspace = op.forward(&u0).unwrap();
        let mp = build_log_sum_problem(&d, &ModelSpec::log_sum(1e-4), &SolverConfig::default()).unwrap();
        let w = mp.diff.forward(&u0).unwrap();
        let s = State { x: u0.clone(), ys: vec![w.clone()] };
        assert!(mp.fidelity.gradient(&u0).unwrap().norm() < 1e-9);
        let f = mp.problem.objective(&s).unwrap();
        let g = mp.problem.g[0].eval(&w);
        assert!((f - g).abs() <= 1e-9 * g.abs());
    }

    #[test]
    fn objective_is_sum_of_parts() {
        let d = small(0.01);
        let mp = build_lp_problem(&d, &ModelSpec::lp(1e-4, 0.5), &SolverConfig::default()).unwrap();
        let s = &mp.init;
        let fid = 0.5 * 1000.0 * mp.op.forward(&s.x).unwrap().sub(&d.kspace).unwrap().norm_sq();
        let pen: f64 = {
            let w = &s.ys[0];
            let len = 64;
            (0..len)
                .map(|i| {
                    let a = w.data()[i];
                    let b = w.data()[len + i];
                    1e-4 * (a.norm_sqr() + b.norm_sqr()).sqrt().powf(0.5)
                })
                .sum()
        };
        let cpl = 0.5 * mp.diff.forward(&s.x).unwrap().sub(&s.ys[0]).unwrap().norm_sq();
        let f = mp.problem.objective(s).unwrap();
        assert!((f - (fid + pen + cpl)).abs() <= 1e-10 * f.abs());
    }

    #[test]
    fn shift_at_gram_bound_is_rejected_and_default_is_valid() {
        let d = small(0.01);
        let spec = ModelSpec { delta: Some(1000.0), ..ModelSpec::log_sum(1e-4) };
        let err = build_log_sum_problem(&d, &spec, &SolverConfig::default());
        assert!(matches!(err, Err(Error::Parameter(_))));
        let mp = build_log_sum_problem(&d, &ModelSpec::log_sum(1e-4), &SolverConfig::default()).unwrap();
        assert!(mp.delta > 1000.0 * mp.rho_hat);
        assert!(mp.rho_hat <= 1.0 + 1e-12);
    }

    #[test]
    fn unit_exponent_is_plain_soft_thresholding() {
        let d = small(0.01);
        let theta = 0.3;
        let mp = build_lp_problem(&d, &ModelSpec::lp(theta, 1.0 - 1e-12), &SolverConfig::default()).unwrap();
        let ups = mp.problem.g[0].upsilon_field(&mp.init.ys[0]);
        for u in ups.iter().filter(|&&u| u > 0.0 && u < 1e3) {
            assert!((u - theta).abs() < 1e-6, "{u}");
        }
        // a full step stays finite and the w-update is a shrink by θ/β
        let cfg = SolverConfig::default();
        let (next, params, _) = cpalm_step(&mp.problem, &mp.init, &cfg, 1).unwrap();
        assert!(next.ys[0].is_finite());
        assert!((params.betas[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn split_init_matches_whole() {
        let d = small(0.01);
        let spec = ModelSpec { w_blocks: 2, ..ModelSpec::log_sum(1e-4) };
        let mp = build_log_sum_problem(&d, &spec, &SolverConfig::default()).unwrap();
        let whole = mp.coupling.scatter(&mp.init.ys).unwrap();
        assert_eq!(whole, mp.diff.forward(&mp.init.x).unwrap());
        assert!(build_log_sum_problem(&d, &ModelSpec { w_blocks: 9, ..spec }, &SolverConfig::default()).is_err());
    }
}
