use std::sync::Arc;

use crate::blockspace::Block;
use crate::error::{Error, Result};
use crate::linops::LinOp;
use crate::metrics::Metric;

/// The `x`-block term `f` together with an oracle for its metric proximal
/// subproblem
/// `argmin_x f(x) + <grad, x - anchor> + (alpha/2)‖x - anchor‖²_M`.
///
/// Implementations must be bounded below.
pub trait SmoothTerm: Send + Sync {
    fn value(&self, x: &Block) -> Result<f64>;

    fn solve_subproblem(
        &self,
        anchor: &Block,
        grad: &Block,
        alpha: f64,
        metric: &Metric,
    ) -> Result<Block>;
}

/// `f ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroTerm;

impl SmoothTerm for ZeroTerm {
    fn value(&self, _: &Block) -> Result<f64> {
        Ok(0.0)
    }

    fn solve_subproblem(
        &self,
        anchor: &Block,
        grad: &Block,
        alpha: f64,
        metric: &Metric,
    ) -> Result<Block> {
        match metric {
            Metric::Identity | Metric::Scaled(_) => {
                let c = metric.as_scalar().expect("scalar metric");
                grad.axpy(-1.0 / (alpha * c), anchor)
            }
            Metric::Diagonal(d) => {
                let mut out = anchor.clone();
                for ((o, g), w) in out.data_mut().iter_mut().zip(grad.data()).zip(d) {
                    *o -= g / (alpha * w);
                }
                Ok(out)
            }
            Metric::ShiftedGram(_) => {
                // αM(x - a) = -grad
                let rhs = grad.scale(-1.0);
                let step = conjugate_gradient(
                    |v| Ok(metric.apply(v)?.scale(alpha)),
                    &rhs,
                    Block::zeros(anchor.shape(), anchor.field()),
                    CG_TOL,
                    CG_MAX_ITER,
                )?;
                anchor.add(&step)
            }
        }
    }
}

const CG_TOL: f64 = 1e-13;
const CG_MAX_ITER: usize = 2000;

/// `f(x) = (λ/2)‖Kx - b‖²`.
///
/// Under a [`Metric::ShiftedGram`] built from the same `K` and `λ`, the
/// subproblem is solved explicitly by
/// `x = a - δ⁻¹(λKᵀ(Ka - b) + grad)`; any other metric goes through
/// conjugate gradients on the normal equations.
pub struct QuadraticFidelity {
    op: Arc<dyn LinOp>,
    data: Block,
    weight: f64,
}

impl QuadraticFidelity {
    pub fn new(op: Arc<dyn LinOp>, data: Block, weight: f64) -> Result<Self> {
        if data.shape() != op.out_shape() {
            return Err(Error::shape(op.out_shape(), data.shape()));
        }
        if !(weight > 0.0) {
            return Err(Error::param(format!("fidelity weight λ must be positive, got {weight}")));
        }
        Ok(QuadraticFidelity { op, data, weight })
    }

    pub fn op(&self) -> &Arc<dyn LinOp> {
        &self.op
    }

    pub fn data(&self) -> &Block {
        &self.data
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// `Kx - b`.
    pub fn residual(&self, x: &Block) -> Result<Block> {
        let kx = self.op.forward(x)?;
        kx.with_field(self.data.field()).sub(&self.data)
    }

    /// `λKᵀ(Kx - b)`.
    pub fn gradient(&self, x: &Block) -> Result<Block> {
        Ok(self
            .op
            .adjoint(&self.residual(x)?)?
            .with_field(x.field())
            .scale(self.weight))
    }

    pub fn matches(&self, metric: &Metric) -> bool {
        match metric {
            Metric::ShiftedGram(g) => {
                std::ptr::addr_eq(Arc::as_ptr(g.forward_op()), Arc::as_ptr(&self.op))
                    && g.weight() == self.weight
            }
            _ => false,
        }
    }

    /// Closed-form update, valid only when [`Self::matches`] holds.
    pub fn solve_explicit(&self, anchor: &Block, grad: &Block, metric: &Metric) -> Result<Block> {
        let Metric::ShiftedGram(g) = metric else {
            return Err(Error::Oracle("explicit update needs a shifted-Gram metric".into()));
        };
        if !self.matches(metric) {
            return Err(Error::Oracle(
                "shifted-Gram metric was built from a different operator or weight".into(),
            ));
        }
        let mut step = self.gradient(anchor)?;
        step.add_scaled(1.0, grad)?;
        step.axpy(-1.0 / g.shift(), anchor)
    }

    /// Conjugate gradients on `(λKᵀK + αM)x = λKᵀb - grad + αMa`.
    pub fn solve_generic(
        &self,
        anchor: &Block,
        grad: &Block,
        alpha: f64,
        metric: &Metric,
    ) -> Result<Block> {
        let normal = |v: &Block| -> Result<Block> {
            let kv = self.op.forward(v)?;
            let mut out = self.op.adjoint(&kv)?.with_field(v.field()).scale(self.weight);
            out.add_scaled(alpha, &metric.apply(v)?.with_field(v.field()))?;
            Ok(out)
        };
        let mut rhs = self
            .op
            .adjoint(&self.data)?
            .with_field(anchor.field())
            .scale(self.weight);
        rhs.add_scaled(-1.0, grad)?;
        rhs.add_scaled(alpha, &metric.apply(anchor)?.with_field(anchor.field()))?;
        conjugate_gradient(normal, &rhs, anchor.clone(), CG_TOL, CG_MAX_ITER)
    }
}

impl SmoothTerm for QuadraticFidelity {
    fn value(&self, x: &Block) -> Result<f64> {
        Ok(0.5 * self.weight * self.residual(x)?.norm_sq())
    }

    fn solve_subproblem(
        &self,
        anchor: &Block,
        grad: &Block,
        alpha: f64,
        metric: &Metric,
    ) -> Result<Block> {
        if self.matches(metric) {
            self.solve_explicit(anchor, grad, metric)
        } else {
            self.solve_generic(anchor, grad, alpha, metric)
        }
    }
}

/// Conjugate gradients for a self-adjoint positive definite map, using the
/// real inner product. Stops when `‖r‖ ≤ rel_tol·‖rhs‖`.
pub fn conjugate_gradient(
    apply: impl Fn(&Block) -> Result<Block>,
    rhs: &Block,
    x0: Block,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Block> {
    let target = rel_tol * rhs.norm();
    let mut x = x0;
    let mut r = apply(&x)?.axpy(-1.0, rhs)?;
    let mut p = r.clone();
    let mut rr = r.norm_sq();
    if rr.sqrt() <= target {
        return Ok(x);
    }
    for _ in 0..max_iter {
        let ap = apply(&p)?;
        let pap = p.inner(&ap)?;
        if !(pap > 0.0) {
            return Err(Error::Oracle(format!(
                "conjugate gradients met a non-positive curvature {pap:e}"
            )));
        }
        let step = rr / pap;
        x.add_scaled(step, &p)?;
        r.add_scaled(-step, &ap)?;
        let next = r.norm_sq();
        if next.sqrt() <= target {
            return Ok(x);
        }
        p = p.axpy(next / rr, &r)?;
        rr = next;
    }
    Err(Error::Oracle(format!(
        "conjugate gradients did not reach {rel_tol:e} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockspace::Field;
    use crate::linops::{random_block, FiniteDifference, Identity};
    use crate::metrics::ShiftedGramMetric;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_quadratic_closed_form() {
        // (x - 1)²/2 with identity metric: x = (1 + αa - g)/(1 + α)
        let op: Arc<dyn LinOp> = Arc::new(Identity::new(&[1]));
        let f = QuadraticFidelity::new(op, Block::from_real(&[1], &[1.0]).unwrap(), 1.0).unwrap();
        let a = Block::from_real(&[1], &[0.3]).unwrap();
        let g = Block::from_real(&[1], &[-0.2]).unwrap();
        let x = f.solve_subproblem(&a, &g, 2.0, &Metric::Identity).unwrap();
        assert!((x.data()[0].re - (1.0 + 0.6 + 0.2) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn explicit_and_generic_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op: Arc<dyn LinOp> = Arc::new(FiniteDifference::new(4, 4));
        let b = random_block(&[2, 4, 4], Field::Complex, &mut rng);
        let f = QuadraticFidelity::new(op.clone(), b, 2.0).unwrap();
        let metric = Metric::ShiftedGram(ShiftedGramMetric::new(20.0, 2.0, 3.0, op, 8.0).unwrap());
        assert!(f.matches(&metric));
        let a = random_block(&[4, 4], Field::Complex, &mut rng);
        let g = random_block(&[4, 4], Field::Complex, &mut rng);
        let e = f.solve_explicit(&a, &g, &metric).unwrap();
        let c = f.solve_generic(&a, &g, 3.0, &metric).unwrap();
        assert!(e.sub(&c).unwrap().norm() < 1e-9 * e.norm());
    }

    #[test]
    fn explicit_refuses_foreign_metric() {
        let op: Arc<dyn LinOp> = Arc::new(FiniteDifference::new(4, 4));
        let other: Arc<dyn LinOp> = Arc::new(FiniteDifference::new(4, 4));
        let f = QuadraticFidelity::new(op, Block::zeros(&[2, 4, 4], Field::Complex), 1.0).unwrap();
        let metric = Metric::ShiftedGram(ShiftedGramMetric::new(20.0, 1.0, 1.0, other, 8.0).unwrap());
        assert!(!f.matches(&metric));
        let a = Block::zeros(&[4, 4], Field::Complex);
        assert!(f.solve_explicit(&a, &a, &metric).is_err());
    }

    #[test]
    fn zero_term_steps() {
        let a = Block::from_real(&[2], &[1.0, 1.0]).unwrap();
        let g = Block::from_real(&[2], &[2.0, 4.0]).unwrap();
        let x = ZeroTerm.solve_subproblem(&a, &g, 2.0, &Metric::Scaled(2.0)).unwrap();
        assert_eq!(x, Block::from_real(&[2], &[0.5, 0.0]).unwrap());
        let x = ZeroTerm
            .solve_subproblem(&a, &g, 1.0, &Metric::Diagonal(vec![2.0, 4.0]))
            .unwrap();
        assert_eq!(x, Block::from_real(&[2], &[0.0, 0.0]).unwrap());
    }
}
