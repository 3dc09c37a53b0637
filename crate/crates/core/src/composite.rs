//! Composite penalties `g = φ∘ψ`, their tangent majorants and the weighted
//! proximal map of `ψ`.
//!
//! A [`CompositeTerm`] acts on a whole block as the separable sum
//! `Σ_i φ(ψ(y_i))` over the block's groups (see [`crate::blockspace`]).

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::blockspace::{Block, C64};
use crate::error::{Error, Result};

/// Floor applied to `t` before evaluating `φ'` for the power kind.
pub const DEFAULT_EPSILON_CLAMP: f64 = 1e-8;

/// A user-supplied outer function.
pub trait OuterFn: Send + Sync {
    fn eval(&self, t: f64) -> f64;
    fn deriv(&self, t: f64) -> f64;
    /// Lipschitz constant of `deriv` on `[0, ∞)`.
    fn deriv_lipschitz(&self) -> f64;
}

/// The outer function `φ: [0, ∞) → ℝ`.
#[derive(Clone)]
pub enum Phi {
    /// `(1/2μ) log(1 + μ t²)`
    LogSum { mu: f64 },
    /// `θ t^p`, `0 < p ≤ 1`
    PowerP { theta: f64, p: f64 },
    /// `slope · t`
    Linear { slope: f64 },
    Custom(Arc<dyn OuterFn>),
}

impl fmt::Debug for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phi::LogSum { mu } => write!(f, "LogSum {{ mu: {mu} }}"),
            Phi::PowerP { theta, p } => write!(f, "PowerP {{ theta: {theta}, p: {p} }}"),
            Phi::Linear { slope } => write!(f, "Linear {{ slope: {slope} }}"),
            Phi::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Phi {
    pub fn log_sum(mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::param(format!("log-sum needs μ > 0, got {mu}")));
        }
        Ok(Phi::LogSum { mu })
    }

    pub fn power(theta: f64, p: f64) -> Result<Self> {
        if !(theta > 0.0 && p > 0.0 && p <= 1.0) {
            return Err(Error::param(format!(
                "power penalty needs θ > 0 and 0 < p ≤ 1, got θ={theta}, p={p}"
            )));
        }
        Ok(Phi::PowerP { theta, p })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Phi::LogSum { mu } => (mu * t * t).ln_1p() / (2.0 * mu),
            Phi::PowerP { theta, p } => theta * t.powf(*p),
            Phi::Linear { slope } => slope * t,
            Phi::Custom(c) => c.eval(t),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            Phi::LogSum { mu } => t / (1.0 + mu * t * t),
            Phi::PowerP { theta, p } => theta * p * t.powf(p - 1.0),
            Phi::Linear { slope } => *slope,
            Phi::Custom(c) => c.deriv(t),
        }
    }

    /// Lipschitz constant of `φ'` on `[eps, ∞)`.
    ///
    /// For the log-sum kind `|φ''(t)| = |1 - μt²|/(1 + μt²)² ≤ 1`.
    pub fn deriv_lipschitz(&self, eps: f64) -> f64 {
        match self {
            Phi::LogSum { .. } => 1.0,
            Phi::PowerP { theta, p } => {
                if *p == 1.0 {
                    0.0
                } else {
                    theta * p * (1.0 - p) * eps.powf(p - 2.0)
                }
            }
            Phi::Linear { .. } => 0.0,
            Phi::Custom(c) => c.deriv_lipschitz(),
        }
    }
}

/// The inner convex function `ψ` applied to one group.
pub trait InnerPsi: Send + Sync + fmt::Debug {
    fn eval(&self, group: &[C64]) -> f64;

    /// Bound `ν` on the norm of any subgradient.
    fn subgrad_bound(&self) -> f64;

    /// Writes `argmin_w weight·ψ(w) + (beta/2)‖w - center‖²` into `out`.
    fn prox_weighted(&self, weight: f64, center: &[C64], beta: f64, out: &mut [C64]);

    /// Writes some element of `∂ψ(point)` into `out`.
    fn subgradient(&self, point: &[C64], out: &mut [C64]);
}

/// `ψ(w) = ‖w‖₂`.
#[derive(Clone, Copy, Debug, Default)]
pub struct EuclideanNorm;

impl InnerPsi for EuclideanNorm {
    fn eval(&self, group: &[C64]) -> f64 {
        group_norm(group)
    }

    fn subgrad_bound(&self) -> f64 {
        1.0
    }

    fn prox_weighted(&self, weight: f64, center: &[C64], beta: f64, out: &mut [C64]) {
        out.copy_from_slice(&prox_shrink(weight, center, beta));
    }

    fn subgradient(&self, point: &[C64], out: &mut [C64]) {
        let n = group_norm(point);
        for (o, &p) in out.iter_mut().zip(point) {
            *o = if n > 0.0 { p / n } else { C64::new(0.0, 0.0) };
        }
    }
}

/// `ψ ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPsi;

impl InnerPsi for ZeroPsi {
    fn eval(&self, _: &[C64]) -> f64 {
        0.0
    }
    fn subgrad_bound(&self) -> f64 {
        0.0
    }
    fn prox_weighted(&self, _: f64, center: &[C64], _: f64, out: &mut [C64]) {
        out.copy_from_slice(center);
    }
    fn subgradient(&self, _: &[C64], out: &mut [C64]) {
        out.fill(C64::new(0.0, 0.0));
    }
}

fn group_norm(g: &[C64]) -> f64 {
    g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Minimizer of `weight·‖w‖ + (beta/2)‖w - center‖²`:
/// `(center/‖center‖)·max(‖center‖ - weight/beta, 0)`, with `0/0 = 0`.
pub fn prox_shrink(weight: f64, center: &[C64], beta: f64) -> Vec<C64> {
    let n = group_norm(center);
    if n == 0.0 {
        return vec![C64::new(0.0, 0.0); center.len()];
    }
    let keep = (n - weight / beta).max(0.0) / n;
    center.iter().map(|&c| c * keep).collect()
}

/// `g = φ∘ψ` with the clamp used when evaluating `φ'` for the power kind.
#[derive(Clone, Debug)]
pub struct CompositeTerm {
    pub phi: Phi,
    pub psi: Arc<dyn InnerPsi>,
    pub epsilon_clamp: f64,
}

impl CompositeTerm {
    pub fn new(phi: Phi, psi: Arc<dyn InnerPsi>) -> Self {
        CompositeTerm {
            phi,
            psi,
            epsilon_clamp: DEFAULT_EPSILON_CLAMP,
        }
    }

    pub fn log_sum(mu: f64) -> Result<Self> {
        Ok(Self::new(Phi::log_sum(mu)?, Arc::new(EuclideanNorm)))
    }

    pub fn power(theta: f64, p: f64) -> Result<Self> {
        Ok(Self::new(Phi::power(theta, p)?, Arc::new(EuclideanNorm)))
    }

    /// `φ'` at `t`, clamped below for the power kind.
    pub fn slope_at(&self, t: f64) -> f64 {
        match self.phi {
            Phi::PowerP { .. } => self.phi.deriv(t.max(self.epsilon_clamp)),
            _ => self.phi.deriv(t),
        }
    }

    /// `Υ = φ'(ψ(anchor))` for one group.
    pub fn upsilon(&self, anchor: &[C64]) -> f64 {
        self.slope_at(self.psi.eval(anchor))
    }

    /// `g` on one group.
    pub fn eval_group(&self, y: &[C64]) -> f64 {
        self.phi.eval(self.psi.eval(y))
    }

    /// Tangent majorant `g(a) + Υ(a)(ψ(y) - ψ(a))` on one group.
    pub fn majorant_group(&self, y: &[C64], anchor: &[C64]) -> f64 {
        let pa = self.psi.eval(anchor);
        self.phi.eval(pa) + self.slope_at(pa) * (self.psi.eval(y) - pa)
    }

    /// Lipschitz constant of `Υ` as a function of the group, `Lip(φ')·ν`.
    pub fn upsilon_lipschitz(&self) -> f64 {
        self.phi.deriv_lipschitz(self.epsilon_clamp) * self.psi.subgrad_bound()
    }

    /// `Σ_i φ(ψ(y_i))` over the block's groups.
    pub fn eval(&self, y: &Block) -> f64 {
        let g = y.to_group_major();
        // chunked partial sums keep the result independent of the thread count
        g.par_chunks(y.group_dim())
            .map(|grp| self.eval_group(grp))
            .collect::<Vec<_>>()
            .iter()
            .sum()
    }

    /// `Υ_i` per group.
    pub fn upsilon_field(&self, anchor: &Block) -> Vec<f64> {
        anchor
            .to_group_major()
            .par_chunks(anchor.group_dim())
            .map(|grp| self.upsilon(grp))
            .collect()
    }

    /// Majorant of the whole block about `anchor`.
    pub fn majorant(&self, y: &Block, anchor: &Block) -> Result<f64> {
        y.check_compatible(anchor)?;
        let c = y.group_dim();
        let gy = y.to_group_major();
        let ga = anchor.to_group_major();
        Ok(gy
            .chunks(c)
            .zip(ga.chunks(c))
            .map(|(a, b)| self.majorant_group(a, b))
            .sum())
    }

    /// Groupwise `argmin Υ_i ψ(w_i) + (beta/2)‖w_i - c_i‖²`.
    pub fn prox(&self, weights: &[f64], center: &Block, beta: f64) -> Result<Block> {
        if weights.len() != center.group_count() {
            return Err(Error::shape(&[center.group_count()], &[weights.len()]));
        }
        let c = center.group_dim();
        let mut grouped = center.to_group_major();
        grouped
            .par_chunks_mut(c)
            .zip(weights.par_iter())
            .for_each(|(grp, &w)| {
                let src: Vec<C64> = grp.to_vec();
                self.psi.prox_weighted(w, &src, beta, grp);
            });
        Ok(center.from_group_major(&grouped))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v2(x: f64, y: f64) -> [C64; 2] {
        [C64::new(x, 0.0), C64::new(y, 0.0)]
    }

    fn fd(phi: &Phi, t: f64, h: f64) -> f64 {
        (phi.eval(t + h) - phi.eval(t - h)) / (2.0 * h)
    }

    #[test]
    fn upsilon_examples() {
        let ls = CompositeTerm::log_sum(1.0).unwrap();
        let u = ls.upsilon(&v2(1.0, 0.0));
        assert!((u - 0.5).abs() < 1e-15);
        assert!((u - fd(&ls.phi, 1.0, 1e-6)).abs() < 1e-8);
        assert_eq!(CompositeTerm::log_sum(3.7).unwrap().upsilon(&v2(0.0, 0.0)), 0.0);

        let pw = CompositeTerm::power(1.0, 0.5).unwrap();
        let u = pw.upsilon(&v2(0.0, 4.0));
        assert!((u - 0.25).abs() < 1e-15);
        assert!((u - fd(&pw.phi, 4.0, 1e-6)).abs() < 1e-8);
    }

    #[test]
    fn power_upsilon_is_clamped_at_zero() {
        let pw = CompositeTerm::power(1e-4, 0.5).unwrap();
        let u = pw.upsilon(&v2(0.0, 0.0));
        assert!(u.is_finite() && u > 0.0);
        assert!((u - 1e-4 * 0.5 * (1e-8f64).powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn majorant_examples() {
        let ls = CompositeTerm::log_sum(1.0).unwrap();
        let a = v2(1.0, 0.0);
        assert_eq!(ls.majorant_group(&a, &a), ls.eval_group(&a));
        let y = v2(0.0, 2.0);
        let q = ls.majorant_group(&y, &a);
        let expect = 0.5 * 2f64.ln() + 0.5;
        assert!((q - expect).abs() < 1e-12);
        assert!((q - 0.8466).abs() < 1e-4);
        assert!((ls.eval_group(&y) - 0.5 * 5f64.ln()).abs() < 1e-12);
        assert!(q >= ls.eval_group(&y));
    }

    #[test]
    fn logsum_tangent_undershoots_below_inflection() {
        // φ'' > 0 on [0, 1/√μ), so the tangent at the origin lies below g
        let ls = CompositeTerm::log_sum(1.0).unwrap();
        let zero = v2(0.0, 0.0);
        let y = v2(0.5, 0.0);
        assert_eq!(ls.majorant_group(&y, &zero), 0.0);
        assert!(ls.eval_group(&y) > 0.1);
    }

    #[test]
    fn shrink_examples() {
        assert_eq!(prox_shrink(1.0, &v2(0.0, 0.0), 1.0), v2(0.0, 0.0).to_vec());
        let w = prox_shrink(2.0, &v2(3.0, 4.0), 1.0);
        assert!((w[0].re - 1.8).abs() < 1e-12 && (w[1].re - 2.4).abs() < 1e-12);
        assert_eq!(prox_shrink(10.0, &v2(1.0, 0.0), 1.0), v2(0.0, 0.0).to_vec());
    }

    #[test]
    fn shrink_preserves_complex_phase() {
        let c = [C64::new(0.0, 3.0), C64::new(4.0, 0.0)];
        let w = prox_shrink(1.0, &c, 2.0);
        // ‖c‖ = 5, threshold 0.5
        assert!((w[0] - C64::new(0.0, 2.7)).norm() < 1e-12);
        assert!((w[1] - C64::new(3.6, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn block_prox_and_eval() {
        let term = CompositeTerm::log_sum(1.0).unwrap();
        let y = Block::from_real(&[2, 2], &[3.0, 0.0, 4.0, 0.0]).unwrap();
        // groups: (3,4) and (0,0)
        assert!((term.eval(&y) - 0.5 * 26f64.ln()).abs() < 1e-12);
        let ups = term.upsilon_field(&y);
        assert!((ups[0] - 5.0 / 26.0).abs() < 1e-15);
        assert_eq!(ups[1], 0.0);
        let out = term.prox(&[2.0, 1.0], &y, 1.0).unwrap();
        let re: Vec<f64> = out.data().iter().map(|z| z.re).collect();
        assert!((re[0] - 1.8).abs() < 1e-12 && (re[2] - 2.4).abs() < 1e-12);
        assert_eq!(re[1], 0.0);
        assert!(term.prox(&[1.0], &y, 1.0).is_err());
    }

    #[test]
    fn euclidean_subgradient() {
        let mut out = [C64::new(0.0, 0.0); 2];
        EuclideanNorm.subgradient(&v2(3.0, 4.0), &mut out);
        assert!((out[0].re - 0.6).abs() < 1e-15);
        EuclideanNorm.subgradient(&v2(0.0, 0.0), &mut out);
        assert_eq!(out, v2(0.0, 0.0));
    }

    #[test]
    fn constructors_validate() {
        assert!(Phi::log_sum(0.0).is_err());
        assert!(Phi::power(1.0, 1.5).is_err());
        assert!(Phi::power(-1.0, 0.5).is_err());
    }
}
