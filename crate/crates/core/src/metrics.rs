//! SPD variable metrics with certified spectral bounds, and power iteration
//! for the spectral radius of self-adjoint operators.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blockspace::{Block, Field};
use crate::error::{Error, Result};
use crate::linops::{random_block, Gram, LinOp};

/// Inflation applied to power-iteration estimates so they act as upper bounds.
pub const SPECTRAL_SAFETY: f64 = 1.01;

/// Metric `(δ/α) I - (λ/α) KᵀK` for a forward operator `K`.
///
/// `α · apply(u) = δu - λKᵀKu`, so the quadratic fidelity subproblem under
/// this metric has an explicit solution.
#[derive(Clone)]
pub struct ShiftedGramMetric {
    shift: f64,
    weight: f64,
    step_scale: f64,
    forward: Arc<dyn LinOp>,
    rho_upper: f64,
}

impl std::fmt::Debug for ShiftedGramMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftedGramMetric")
            .field("shift", &self.shift)
            .field("weight", &self.weight)
            .field("step_scale", &self.step_scale)
            .field("rho_upper", &self.rho_upper)
            .finish()
    }
}

impl ShiftedGramMetric {
    /// Fails unless `δ > λ·rho_upper`.
    pub fn new(
        shift: f64,
        weight: f64,
        step_scale: f64,
        forward: Arc<dyn LinOp>,
        rho_upper: f64,
    ) -> Result<Self> {
        if !(shift > 0.0 && weight > 0.0 && step_scale > 0.0 && rho_upper >= 0.0) {
            return Err(Error::param(
                "shifted-Gram metric needs positive shift, weight and step scale",
            ));
        }
        if shift <= weight * rho_upper {
            return Err(Error::param(format!(
                "shift δ = {shift} must exceed λ·ρ(AᵀA) = {weight} × {rho_upper} = {}",
                weight * rho_upper
            )));
        }
        Ok(ShiftedGramMetric {
            shift,
            weight,
            step_scale,
            forward,
            rho_upper,
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }
    pub fn weight(&self) -> f64 {
        self.weight
    }
    pub fn step_scale(&self) -> f64 {
        self.step_scale
    }
    pub fn rho_upper(&self) -> f64 {
        self.rho_upper
    }
    pub fn forward_op(&self) -> &Arc<dyn LinOp> {
        &self.forward
    }

    /// `δu - λKᵀKu`, i.e. `α · apply(u)`.
    pub fn apply_unscaled(&self, u: &Block) -> Result<Block> {
        let gram = self.forward.adjoint(&self.forward.forward(u)?)?;
        gram.with_field(u.field()).axpy(-self.weight, &u.scale(self.shift))
    }
}

/// An SPD operator on one block.
#[derive(Clone, Debug)]
pub enum Metric {
    Identity,
    /// `c I` with `c > 0`.
    Scaled(f64),
    /// Entrywise positive weights.
    Diagonal(Vec<f64>),
    ShiftedGram(ShiftedGramMetric),
}

impl Metric {
    pub fn apply(&self, u: &Block) -> Result<Block> {
        match self {
            Metric::Identity => Ok(u.clone()),
            Metric::Scaled(c) => Ok(u.scale(*c)),
            Metric::Diagonal(d) => {
                if d.len() != u.len() {
                    return Err(Error::shape(&[d.len()], u.shape()));
                }
                let mut out = u.clone();
                for (v, w) in out.data_mut().iter_mut().zip(d) {
                    *v *= *w;
                }
                Ok(out)
            }
            Metric::ShiftedGram(g) => Ok(g.apply_unscaled(u)?.scale(1.0 / g.step_scale)),
        }
    }

    /// Certified lower bound on `λ_min`.
    pub fn lambda_min_lower(&self) -> f64 {
        match self {
            Metric::Identity => 1.0,
            Metric::Scaled(c) => *c,
            Metric::Diagonal(d) => d.iter().copied().fold(f64::INFINITY, f64::min),
            Metric::ShiftedGram(g) => (g.shift - g.weight * g.rho_upper) / g.step_scale,
        }
    }

    /// Certified upper bound on the operator norm.
    pub fn norm_upper(&self) -> f64 {
        match self {
            Metric::Identity => 1.0,
            Metric::Scaled(c) => *c,
            Metric::Diagonal(d) => d.iter().copied().fold(0.0, f64::max),
            Metric::ShiftedGram(g) => g.shift / g.step_scale,
        }
    }

    /// `max{1, 1/λ_min}`.
    pub fn rho(&self) -> f64 {
        (1.0 / self.lambda_min_lower()).max(1.0)
    }

    /// Scalar `c` when the metric is `c I`.
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Metric::Identity => Some(1.0),
            Metric::Scaled(c) => Some(*c),
            _ => None,
        }
    }
}

/// `‖u‖²_M = <u, M u>`.
pub fn weighted_norm_sq(m: &Metric, u: &Block) -> Result<f64> {
    let mu = m.apply(u)?;
    // SPD guarantees non-negativity; clamp round-off
    Ok(u.inner(&mu.with_field(u.field()))?.max(0.0))
}

/// Outcome of [`metric_probe`]: worst violations seen on random vectors.
#[derive(Clone, Copy, Debug)]
pub struct MetricProbe {
    /// `max |<Mu,v> - <u,Mv>| / (‖u‖‖v‖)`
    pub asymmetry: f64,
    /// `min <u,Mu>/‖u‖² - lambda_min_lower` (non-negative when sound)
    pub coercivity_slack: f64,
    /// `min norm_upper - ‖Mu‖/‖u‖` (non-negative when sound)
    pub norm_slack: f64,
}

impl MetricProbe {
    pub fn holds(&self) -> bool {
        self.asymmetry <= 1e-8 && self.coercivity_slack >= -1e-10 && self.norm_slack >= -1e-10
    }
}

/// Checks self-adjointness and the declared spectral bounds on random probes.
pub fn metric_probe(m: &Metric, shape: &[usize], probes: usize, seed: u64) -> Result<MetricProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MetricProbe {
        asymmetry: 0.0,
        coercivity_slack: f64::INFINITY,
        norm_slack: f64::INFINITY,
    };
    let lo = m.lambda_min_lower();
    let hi = m.norm_upper();
    for _ in 0..probes {
        let u = random_block(shape, Field::Complex, &mut rng);
        let v = random_block(shape, Field::Complex, &mut rng);
        let mu = m.apply(&u)?.with_field(Field::Complex);
        let mv = m.apply(&v)?.with_field(Field::Complex);
        let asym = (mu.inner(&v)? - u.inner(&mv)?).abs() / (u.norm() * v.norm());
        out.asymmetry = out.asymmetry.max(asym);
        let nsq = u.norm_sq();
        out.coercivity_slack = out.coercivity_slack.min(u.inner(&mu)? / nsq - lo);
        out.norm_slack = out.norm_slack.min(hi - mu.norm() / nsq.sqrt());
    }
    Ok(out)
}

/// Power iteration on a self-adjoint PSD operator.
///
/// Returns the Rayleigh-quotient estimate multiplied by [`SPECTRAL_SAFETY`].
/// The start vector is complex Gaussian drawn from `seed`.
pub fn estimate_spectral_radius(
    op: &dyn LinOp,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<f64> {
    Ok(power_iteration(op, tol, max_iter, seed)? * SPECTRAL_SAFETY)
}

/// Uninflated power-iteration estimate.
pub fn power_iteration(op: &dyn LinOp, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::param("power iteration tolerance must be positive"));
    }
    if op.in_shape() != op.out_shape() {
        return Err(Error::shape(op.in_shape(), op.out_shape()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = random_block(op.in_shape(), Field::Complex, &mut rng);
    v.scale_mut(1.0 / v.norm());
    let mut est = 0.0;
    let mut change = f64::INFINITY;
    for it in 0..max_iter {
        let w = op.forward(&v)?.with_field(Field::Complex);
        let next = v.inner(&w)?;
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        change = if next != 0.0 {
            (next - est).abs() / next.abs()
        } else {
            f64::INFINITY
        };
        est = next;
        v = w.scale(1.0 / wn);
        if it > 0 && change < tol {
            return Ok(est);
        }
    }
    Err(Error::Estimation {
        iters: max_iter,
        last: est,
        change,
    })
}

/// `ρ(KᵀK)` estimate for a forward operator, with default settings.
pub fn gram_spectral_radius(forward: Arc<dyn LinOp>, seed: u64) -> Result<f64> {
    estimate_spectral_radius(&Gram::new(forward), 1e-6, 500, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{FiniteDifference, Identity, Scaled};

    struct Diag(Vec<f64>, [usize; 1]);
    impl LinOp for Diag {
        fn in_shape(&self) -> &[usize] {
            &self.1
        }
        fn out_shape(&self) -> &[usize] {
            &self.1
        }
        fn forward(&self, u: &Block) -> Result<Block> {
            Metric::Diagonal(self.0.clone()).apply(u)
        }
        fn adjoint(&self, v: &Block) -> Result<Block> {
            self.forward(v)
        }
    }

    #[test]
    fn weighted_norm_cases() {
        let u = Block::from_real(&[2], &[3.0, 4.0]).unwrap();
        assert_eq!(weighted_norm_sq(&Metric::Identity, &u).unwrap(), 25.0);
        let z = Block::zeros(&[2], Field::Real);
        assert_eq!(weighted_norm_sq(&Metric::Identity, &z).unwrap(), 0.0);
        let one = Block::from_real(&[2], &[1.0, 1.0]).unwrap();
        let d = Metric::Diagonal(vec![2.0, 3.0]);
        assert_eq!(weighted_norm_sq(&d, &one).unwrap(), 5.0);
    }

    #[test]
    fn power_iteration_on_scaled_identity() {
        let op = Scaled {
            op: Arc::new(Identity::new(&[4])),
            factor: 3.0,
        };
        let r = estimate_spectral_radius(&op, 1e-6, 500, 0).unwrap();
        assert!((r - 3.0 * SPECTRAL_SAFETY).abs() < 1e-6);
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let op = Diag(vec![1.0, 2.0, 5.0], [3]);
        let r = estimate_spectral_radius(&op, 1e-6, 500, 0).unwrap();
        assert!((r - 5.05).abs() < 1e-4, "{r}");
    }

    #[test]
    fn power_iteration_reports_nonconvergence() {
        let op = Diag(vec![1.0, 0.999999, 0.999998, 1.0 - 3e-6], [4]);
        match power_iteration(&op, 1e-15, 3, 1) {
            Err(Error::Estimation { iters, last, .. }) => {
                assert_eq!(iters, 3);
                assert!(last > 0.99);
            }
            other => panic!("expected estimation error, got {other:?}"),
        }
    }

    #[test]
    fn shifted_gram_requires_margin() {
        let d: Arc<dyn LinOp> = Arc::new(FiniteDifference::new(4, 4));
        assert!(ShiftedGramMetric::new(8.0, 1.0, 1.0, d.clone(), 8.0).is_err());
        let g = ShiftedGramMetric::new(10.0, 1.0, 2.0, d, 8.0).unwrap();
        let m = Metric::ShiftedGram(g);
        assert_eq!(m.lambda_min_lower(), 1.0);
        assert_eq!(m.norm_upper(), 5.0);
        let probe = metric_probe(&m, &[4, 4], 50, 1).unwrap();
        assert!(probe.holds(), "{probe:?}");
    }

    #[test]
    fn probe_flags_bad_bounds() {
        let m = Metric::Diagonal(vec![0.5; 4]);
        let mut p = metric_probe(&m, &[4], 10, 0).unwrap();
        assert!(p.holds());
        p.coercivity_slack = -0.1;
        assert!(!p.holds());
    }
}
