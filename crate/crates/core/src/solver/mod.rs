//! CPALM and its multi-block extension: one metric proximal step on `x`
//! followed by tangent-majorized proximal steps on each `y_j`.

mod analysis;
mod smooth;
mod trace;

use std::sync::Arc;
use std::time::Instant;

pub use analysis::{decrease_constant, decrease_constant_at, residual_bound_factor, ResidualBoundInputs};
pub use smooth::{conjugate_gradient, QuadraticFidelity, SmoothTerm, ZeroTerm};
pub use trace::{read_trace_csv, write_trace_csv, TRACE_HEADER};

use crate::blockspace::{Block, C64};
use crate::composite::CompositeTerm;
use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::linops::LinOp;
use crate::metrics::{Metric, ShiftedGramMetric};

/// How the `y`-blocks see the other blocks when their coupling gradient is
/// evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CouplingMode {
    /// Use `x^{k+1}` and the already updated `y`-blocks.
    #[default]
    GaussSeidel,
    /// Use `(x^k, y^k)` for every block.
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    /// Relative to the residual of the first iteration.
    Relative(f64),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Per-block `γ₂` overriding `gamma2`.
    pub gamma2_blocks: Option<Vec<f64>>,
    /// Fixed `β` for every `y`-block instead of `γ₂ρ₂L₂`.
    pub beta_override: Option<f64>,
    pub max_iter: usize,
    pub tol_residual: Tolerance,
    pub tol_increment: f64,
    pub descent_check: bool,
    pub coupling_mode: CouplingMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma1: 1.1,
            gamma2: 1.1,
            gamma2_blocks: None,
            beta_override: None,
            max_iter: 1000,
            tol_residual: Tolerance::Relative(1e-6),
            tol_increment: 0.0,
            descent_check: true,
            coupling_mode: CouplingMode::GaussSeidel,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, blocks: usize) -> Result<()> {
        if !(self.gamma1 > 1.0) {
            return Err(Error::param(format!("γ₁ must exceed 1, got {}", self.gamma1)));
        }
        for j in 0..blocks {
            let g = self.gamma2_for(j);
            if !(g > 1.0) {
                return Err(Error::param(format!("γ₂ for block {j} must exceed 1, got {g}")));
            }
        }
        if let Some(v) = &self.gamma2_blocks {
            if v.len() != blocks {
                return Err(Error::param(format!(
                    "{} per-block γ₂ values for {blocks} blocks",
                    v.len()
                )));
            }
        }
        if let Some(b) = self.beta_override {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::param(format!("β override must be positive, got {b}")));
            }
        }
        let tol = match self.tol_residual {
            Tolerance::Absolute(t) | Tolerance::Relative(t) => t,
        };
        if !(tol >= 0.0) || !(self.tol_increment >= 0.0) {
            return Err(Error::param("tolerances must be non-negative"));
        }
        Ok(())
    }

    pub fn gamma2_for(&self, j: usize) -> f64 {
        self.gamma2_blocks
            .as_ref()
            .and_then(|v| v.get(j).copied())
            .unwrap_or(self.gamma2)
    }
}

/// Metric for the `x`-block.
#[derive(Clone)]
pub enum XMetric {
    /// The same metric at every iteration; `α = γ₁ρ₁L₁`.
    Fixed(Metric),
    /// `(δI - λKᵀK)/α` rebuilt each iteration with `α = γ₁L₁`.
    /// Requires `δ - λ·rho_upper ≥ γ₁L₁` so that `λ_min ≥ 1`.
    ShiftedGram {
        shift: f64,
        weight: f64,
        forward: Arc<dyn LinOp>,
        rho_upper: f64,
    },
}

/// `F(x, y_1..y_p) = f(x) + Σ g_j(y_j) + H(x, y_1..y_p)`.
#[derive(Clone)]
pub struct Problem {
    pub f: Arc<dyn SmoothTerm>,
    pub g: Vec<CompositeTerm>,
    pub coupling: Arc<dyn Coupling>,
    pub x_metric: XMetric,
    /// One scalar metric (`Identity` or `Scaled`) per `y`-block.
    pub y_metrics: Vec<Metric>,
}

impl Problem {
    pub fn blocks(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, s: &State) -> Result<f64> {
        let mut v = self.f.value(&s.x)?;
        for (g, y) in self.g.iter().zip(&s.ys) {
            v += g.eval(y);
        }
        Ok(v + self.coupling.value(&s.x, &s.ys)?)
    }

    fn check(&self, s: &State) -> Result<()> {
        if self.g.len() != self.y_metrics.len() || self.g.len() != s.ys.len() {
            return Err(Error::param(format!(
                "{} penalties, {} metrics and {} y-blocks",
                self.g.len(),
                self.y_metrics.len(),
                s.ys.len()
            )));
        }
        if self.g.is_empty() {
            return Err(Error::param("at least one y-block is required"));
        }
        for (y, shape) in s.ys.iter().zip(self.coupling.y_shapes()) {
            if y.shape() != shape.as_slice() {
                return Err(Error::shape(&shape, y.shape()));
            }
        }
        for m in &self.y_metrics {
            if m.as_scalar().is_none() {
                return Err(Error::Oracle(
                    "y-block metrics must be multiples of the identity".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub x: Block,
    pub ys: Vec<Block>,
}

/// Step quantities of one iteration, kept for certificate checks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepConstants {
    pub l1: f64,
    pub l2: Vec<f64>,
    pub rho1: f64,
    pub rho2: Vec<f64>,
    pub a_min: f64,
    pub a_norm: f64,
    pub b_min: Vec<f64>,
    pub b_norm: Vec<f64>,
    pub gamma1: f64,
    /// `β_j / (ρ₂ L₂ b_j)`; differs from the configured `γ₂` under a β override.
    pub gamma2_eff: Vec<f64>,
    pub betas: Vec<f64>,
    pub x_increment: f64,
    pub y_increment: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub objective: f64,
    pub increment: f64,
    pub residual: f64,
    pub alpha: f64,
    /// Largest `β_j` of the iteration.
    pub beta: f64,
    pub wall_ms: f64,
    pub constants: StepConstants,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Residual,
    Increment,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub state: State,
    pub trace: Vec<IterateRecord>,
    pub status: Status,
    pub initial_objective: f64,
}

/// What a single step used, enough to recompute its residual.
#[derive(Clone, Debug)]
pub struct StepParams {
    pub alpha: f64,
    pub x_metric: Metric,
    /// `β_j · c_j` where `B_j = c_j I`.
    pub betas: Vec<f64>,
    pub b_scales: Vec<f64>,
    pub mode: CouplingMode,
}

fn build_x_metric(problem: &Problem, gamma1: f64, l1: f64) -> Result<(Metric, f64)> {
    match &problem.x_metric {
        XMetric::Fixed(m) => {
            let alpha = gamma1 * m.rho() * l1;
            Ok((m.clone(), alpha))
        }
        XMetric::ShiftedGram {
            shift,
            weight,
            forward,
            rho_upper,
        } => {
            let alpha = gamma1 * l1;
            let g = ShiftedGramMetric::new(*shift, *weight, alpha, forward.clone(), *rho_upper)?;
            let m = Metric::ShiftedGram(g);
            if m.lambda_min_lower() < 1.0 {
                return Err(Error::param(format!(
                    "shift δ = {shift} too small: need δ - λρ(AᵀA) = {} ≥ γ₁L₁ = {alpha}",
                    shift - weight * rho_upper
                )));
            }
            Ok((m, alpha))
        }
    }
}

/// Point at which block `j`'s coupling gradient is evaluated.
fn eval_point<'a>(mode: CouplingMode, prev: &'a State, cur_x: &'a Block, cur_ys: &'a [Block]) -> (&'a Block, &'a [Block]) {
    match mode {
        CouplingMode::GaussSeidel => (cur_x, cur_ys),
        CouplingMode::Jacobi => (&prev.x, &prev.ys),
    }
}

/// One CPALM iteration from `prev`.
pub fn cpalm_step(problem: &Problem, prev: &State, cfg: &SolverConfig, k: usize) -> Result<(State, StepParams, StepConstants)> {
    let l1 = problem.coupling.lipschitz_x(&prev.ys);
    let gx = problem.coupling.grad_x(&prev.x, &prev.ys)?;
    let (metric, alpha) = build_x_metric(problem, cfg.gamma1, l1)?;
    let x = problem.f.solve_subproblem(&prev.x, &gx, alpha, &metric)?;
    if !x.is_finite() {
        return Err(Error::Oracle(format!("x-subproblem returned non-finite values at iteration {k}")));
    }

    let p = problem.blocks();
    let mut ys = prev.ys.clone();
    let mut consts = StepConstants {
        l1,
        rho1: metric.rho(),
        a_min: metric.lambda_min_lower(),
        a_norm: metric.norm_upper(),
        gamma1: cfg.gamma1,
        ..Default::default()
    };
    let mut betas = Vec::with_capacity(p);
    let mut b_scales = Vec::with_capacity(p);
    for j in 0..p {
        let (ex, eys) = eval_point(cfg.coupling_mode, prev, &x, &ys);
        let l2 = problem.coupling.lipschitz_y(j, ex, eys);
        let grad = problem.coupling.grad_y(j, ex, eys)?;
        let bm = &problem.y_metrics[j];
        let c = bm.as_scalar().expect("checked scalar metric");
        let rho2 = bm.rho();
        let beta = match cfg.beta_override {
            Some(b) => b,
            None => cfg.gamma2_for(j) * rho2 * l2,
        };
        let bc = beta * c;
        let center = grad.axpy(-1.0 / bc, &prev.ys[j])?;
        let ups = problem.g[j].upsilon_field(&prev.ys[j]);
        ys[j] = problem.g[j].prox(&ups, &center, bc)?;
        consts.l2.push(l2);
        consts.rho2.push(rho2);
        consts.b_min.push(bm.lambda_min_lower());
        consts.b_norm.push(bm.norm_upper());
        consts.gamma2_eff.push(if l2 > 0.0 { beta / (rho2 * l2) } else { f64::INFINITY });
        consts.betas.push(beta);
        betas.push(bc);
        b_scales.push(c);
    }
    consts.x_increment = x.sub(&prev.x)?.norm();
    consts.y_increment = ys
        .iter()
        .zip(&prev.ys)
        .map(|(a, b)| a.sub(b).map(|d| d.norm_sq()))
        .sum::<Result<f64>>()?
        .sqrt();
    let params = StepParams {
        alpha,
        x_metric: metric,
        betas,
        b_scales,
        mode: cfg.coupling_mode,
    };
    Ok((State { x, ys }, params, consts))
}

/// Norm of the explicit element of `∂F(next)` assembled from the optimality
/// conditions of the step `prev → next`.
pub fn subgradient_residual(problem: &Problem, prev: &State, next: &State, params: &StepParams) -> Result<f64> {
    let h = &problem.coupling;
    // x-block: ∇_xH(z+) - ∇_xH(z^k) + αA(x^k - x+)
    let mut dx = h.grad_x(&next.x, &next.ys)?;
    dx.add_scaled(-1.0, &h.grad_x(&prev.x, &prev.ys)?)?;
    let back = prev.x.sub(&next.x)?;
    dx.add_scaled(params.alpha, &params.x_metric.apply(&back)?.with_field(back.field()))?;
    let mut total = dx.norm_sq();

    let grad_next: Vec<Block> = (0..problem.blocks())
        .map(|j| h.grad_y(j, &next.x, &next.ys))
        .collect::<Result<_>>()?;
    for j in 0..problem.blocks() {
        // the coupling gradient the step actually used
        let mut ys_used = prev.ys.clone();
        ys_used[..j].clone_from_slice(&next.ys[..j]);
        let (ex, eys) = eval_point(params.mode, prev, &next.x, &ys_used);
        let used = h.grad_y(j, ex, eys)?;
        let bc = params.betas[j];
        let yk = &prev.ys[j];
        let yp = &next.ys[j];
        let center = used.axpy(-1.0 / bc, yk)?;
        let g = &problem.g[j];
        let ups_k = g.upsilon_field(yk);
        let ups_p = g.upsilon_field(yp);

        // realized subgradient w+ of ψ at y+, scaled by (Υ(y+) - Υ_k)
        let c = yp.group_dim();
        let gc = center.to_group_major();
        let gp = yp.to_group_major();
        let mut corr = vec![C64::new(0.0, 0.0); gp.len()];
        let mut w = vec![C64::new(0.0, 0.0); c];
        for (i, ((cg, pg), out)) in gc.chunks(c).zip(gp.chunks(c)).zip(corr.chunks_mut(c)).enumerate() {
            if ups_k[i] > 0.0 {
                for ((wi, &ci), &pi) in w.iter_mut().zip(cg).zip(pg) {
                    *wi = (ci - pi) * (bc / ups_k[i]);
                }
            } else {
                g.psi.subgradient(pg, &mut w);
            }
            let d = ups_p[i] - ups_k[i];
            for (o, &wi) in out.iter_mut().zip(&w) {
                *o = wi * d;
            }
        }
        let mut dy = yp.from_group_major(&corr);
        dy.add_scaled(1.0, &grad_next[j])?;
        dy.add_scaled(-1.0, &used)?;
        dy.add_scaled(bc, &yk.sub(yp)?)?;
        total += dy.norm_sq();
    }
    Ok(total.sqrt())
}

/// Two-block CPALM, the `p = 1` case of [`run_multi_cpalm`].
pub fn run_cpalm(problem: &Problem, x0: Block, y0: Block, cfg: &SolverConfig) -> Result<RunResult> {
    if problem.blocks() != 1 {
        return Err(Error::param(format!(
            "two-block CPALM needs exactly one y-block, got {}",
            problem.blocks()
        )));
    }
    run_multi_cpalm(problem, State { x: x0, ys: vec![y0] }, cfg)
}

pub fn run_multi_cpalm(problem: &Problem, init: State, cfg: &SolverConfig) -> Result<RunResult> {
    run_multi_cpalm_observed(problem, init, cfg, |_, _| Ok(()))
}

/// Like [`run_multi_cpalm`], calling `observe` after every iteration.
pub fn run_multi_cpalm_observed(
    problem: &Problem,
    init: State,
    cfg: &SolverConfig,
    mut observe: impl FnMut(&State, &IterateRecord) -> Result<()>,
) -> Result<RunResult> {
    problem.check(&init)?;
    cfg.validate(problem.blocks())?;
    let initial_objective = problem.objective(&init)?;
    if !initial_objective.is_finite() {
        return Err(Error::Diverged {
            k: 0,
            trace: Box::default(),
        });
    }
    let start = Instant::now();
    let mut state = init;
    let mut trace: Vec<IterateRecord> = Vec::new();
    let mut f_prev = initial_objective;
    let mut first_residual = None;
    let mut status = Status::MaxIter;

    for k in 1..=cfg.max_iter {
        let (next, params, constants) = cpalm_step(problem, &state, cfg, k)?;
        let objective = problem.objective(&next)?;
        if !objective.is_finite() || !next.x.is_finite() || next.ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::Diverged {
                k,
                trace: Box::new(trace),
            });
        }
        let residual = subgradient_residual(problem, &state, &next, &params)?;
        let increment = constants.x_increment.hypot(constants.y_increment);
        let record = IterateRecord {
            k,
            objective,
            increment,
            residual,
            alpha: params.alpha,
            beta: params.betas.iter().copied().fold(0.0, f64::max),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            constants,
        };
        if cfg.descent_check && objective > f_prev + 1e-10 * (1.0 + f_prev.abs()) {
            trace.push(record);
            return Err(Error::DescentViolation {
                k,
                before: f_prev,
                after: objective,
                trace: Box::new(trace),
            });
        }
        observe(&next, &record)?;
        f_prev = objective;
        state = next;
        trace.push(record);

        let r0 = *first_residual.get_or_insert(residual);
        let threshold = match cfg.tol_residual {
            Tolerance::Absolute(t) => t,
            Tolerance::Relative(t) => t * r0,
        };
        if residual <= threshold {
            status = Status::Residual;
            break;
        }
        if increment <= cfg.tol_increment {
            status = Status::Increment;
            break;
        }
    }
    Ok(RunResult {
        state,
        trace,
        status,
        initial_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockspace::Field;
    use crate::composite::{CompositeTerm, Phi, ZeroPsi};
    use crate::coupling::QuadraticCoupling;
    use crate::linops::Identity;

    /// `F = (x-1)²/2 + ½log(1+y²) + ½(y-x)²`.
    fn toy() -> Problem {
        let id: Arc<dyn LinOp> = Arc::new(Identity::new(&[1]));
        let f = QuadraticFidelity::new(id.clone(), Block::from_real(&[1], &[1.0]).unwrap(), 1.0).unwrap();
        Problem {
            f: Arc::new(f),
            g: vec![CompositeTerm::log_sum(1.0).unwrap()],
            coupling: Arc::new(QuadraticCoupling::new(1.0, id, 1.0).unwrap()),
            x_metric: XMetric::Fixed(Metric::Identity),
            y_metrics: vec![Metric::Identity],
        }
    }

    fn scalar(v: f64) -> Block {
        Block::from_real(&[1], &[v]).unwrap()
    }

    fn toy_value(x: f64, y: f64) -> f64 {
        0.5 * (x - 1.0).powi(2) + 0.5 * (1.0 + y * y).ln() + 0.5 * (y - x).powi(2)
    }

    #[test]
    fn toy_objective_matches_closed_form() {
        let p = toy();
        let s = State { x: scalar(0.7), ys: vec![scalar(-0.4)] };
        assert!((p.objective(&s).unwrap() - toy_value(0.7, -0.4)).abs() < 1e-14);
    }

    #[test]
    fn toy_converges_to_grid_minimum() {
        let p = toy();
        let cfg = SolverConfig {
            max_iter: 2000,
            tol_residual: Tolerance::Absolute(1e-12),
            ..Default::default()
        };
        let r = run_cpalm(&p, scalar(2.0), scalar(2.0), &cfg).unwrap();
        assert_eq!(r.status, Status::Residual);
        // independent oracle: brute-force grid then local refinement
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=400 {
            for j in 0..=400 {
                let (x, y) = (-1.0 + i as f64 * 0.01, -1.0 + j as f64 * 0.01);
                let v = toy_value(x, y);
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        let x = r.state.x.data()[0].re;
        let y = r.state.ys[0].data()[0].re;
        assert!((x - best.1).abs() < 0.011 && (y - best.2).abs() < 0.011);
        assert!(r.trace.last().unwrap().objective <= best.0 + 1e-12);
    }

    #[test]
    fn zero_iterations_return_init() {
        let p = toy();
        let cfg = SolverConfig { max_iter: 0, ..Default::default() };
        let r = run_cpalm(&p, scalar(0.5), scalar(0.1), &cfg).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.status, Status::MaxIter);
        assert_eq!(r.state.x, scalar(0.5));
    }

    #[test]
    fn critical_point_is_fixed() {
        // with Υ ≡ 0 the y-step is a gradient step on ½(y - x)², so (1, 1) is fixed
        let id: Arc<dyn LinOp> = Arc::new(Identity::new(&[1]));
        let f = QuadraticFidelity::new(id.clone(), scalar(1.0), 1.0).unwrap();
        let p = Problem {
            f: Arc::new(f),
            g: vec![CompositeTerm::new(Phi::Linear { slope: 1.0 }, Arc::new(ZeroPsi))],
            coupling: Arc::new(QuadraticCoupling::new(1.0, id, 1.0).unwrap()),
            x_metric: XMetric::Fixed(Metric::Identity),
            y_metrics: vec![Metric::Identity],
        };
        let s = State { x: scalar(1.0), ys: vec![scalar(1.0)] };
        let (n, params, _) = cpalm_step(&p, &s, &SolverConfig::default(), 1).unwrap();
        assert_eq!(n, s);
        assert_eq!(subgradient_residual(&p, &s, &n, &params).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_configuration() {
        let p = toy();
        let cfg = SolverConfig { gamma1: 1.0, ..Default::default() };
        assert!(matches!(
            run_cpalm(&p, scalar(0.0), scalar(0.0), &cfg),
            Err(Error::Parameter(_))
        ));
        let mut q = toy();
        q.y_metrics = vec![Metric::Diagonal(vec![1.0])];
        assert!(matches!(
            run_cpalm(&q, scalar(0.0), scalar(0.0), &SolverConfig::default()),
            Err(Error::Oracle(_))
        ));
        let bad = Block::zeros(&[2], Field::Real);
        assert!(run_cpalm(&p, scalar(0.0), bad, &SolverConfig::default()).is_err());
    }
}
