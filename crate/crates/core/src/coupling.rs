//! Smooth coupling terms `H(x, y_1, ..., y_p)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blockspace::{Block, BlockVector, Field, C64};
use crate::error::{Error, Result};
use crate::linops::{random_block, LinOp};

/// Uniform bounds on the block Lipschitz moduli, `[λ₁⁻, λ₁⁺]` and `[λ₂⁻, λ₂⁺]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModuliBounds {
    pub x_lower: f64,
    pub x_upper: f64,
    pub y_lower: f64,
    pub y_upper: f64,
}

pub trait Coupling: Send + Sync {
    /// Shapes of the `y` blocks this coupling expects.
    fn y_shapes(&self) -> Vec<Vec<usize>>;
    fn value(&self, x: &Block, ys: &[Block]) -> Result<f64>;
    fn grad_x(&self, x: &Block, ys: &[Block]) -> Result<Block>;
    fn grad_y(&self, j: usize, x: &Block, ys: &[Block]) -> Result<Block>;
    /// `L₁(y)`: Lipschitz modulus of `∇_x H(·, y)`.
    fn lipschitz_x(&self, ys: &[Block]) -> f64;
    /// `L₂ʲ`: modulus of `∇_{y_j} H` with every other block held fixed.
    fn lipschitz_y(&self, j: usize, x: &Block, ys: &[Block]) -> f64;
    fn moduli_bounds(&self) -> ModuliBounds;
    /// Global Lipschitz constant of the full gradient, when known.
    fn joint_lipschitz(&self) -> Option<f64> {
        None
    }
}

/// `H(x, y) = (τ/2) Σ_i ‖y_i - (Kx)_i‖²` over the groups of `Kx`.
///
/// With a partition, block `j` holds the groups listed in `partition[j]` and
/// has shape `[c, partition[j].len()]` where `c` is the leading axis of
/// `K`'s output.
pub struct QuadraticCoupling {
    tau: f64,
    op: Arc<dyn LinOp>,
    rho_upper: f64,
    partition: Option<Vec<Vec<usize>>>,
}

impl QuadraticCoupling {
    /// `rho_upper` must bound `ρ(KᵀK)`.
    pub fn new(tau: f64, op: Arc<dyn LinOp>, rho_upper: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::param(format!("coupling weight τ must be positive, got {tau}")));
        }
        if !(rho_upper > 0.0) {
            return Err(Error::param("spectral bound of KᵀK must be positive"));
        }
        Ok(QuadraticCoupling {
            tau,
            op,
            rho_upper,
            partition: None,
        })
    }

    /// Splits the groups of `Kx` across several `y` blocks. Every group must
    /// appear exactly once.
    pub fn with_partition(mut self, partition: Vec<Vec<usize>>) -> Result<Self> {
        let total = self.group_count();
        let mut seen = vec![false; total];
        for part in &partition {
            for &i in part {
                if i >= total || seen[i] {
                    return Err(Error::param(format!(
                        "partition must cover each of {total} groups exactly once (bad index {i})"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::param("partition leaves groups uncovered"));
        }
        self.partition = Some(partition);
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn op(&self) -> &Arc<dyn LinOp> {
        &self.op
    }

    fn channels(&self) -> usize {
        self.op.out_shape().first().copied().unwrap_or(1)
    }

    fn group_count(&self) -> usize {
        self.op.out_shape().iter().product::<usize>() / self.channels()
    }

    fn block_count(&self) -> usize {
        self.partition.as_ref().map_or(1, Vec::len)
    }

    /// `(Kx)` restricted to block `j`.
    pub fn gather(&self, j: usize, kx: &Block) -> Result<Block> {
        match &self.partition {
            None => Ok(kx.clone()),
            Some(parts) => {
                let idx = parts
                    .get(j)
                    .ok_or_else(|| Error::param(format!("no block {j}")))?;
                let c = self.channels();
                let len = self.group_count();
                let mut data = Vec::with_capacity(c * idx.len());
                for ch in 0..c {
                    data.extend(idx.iter().map(|&i| kx.data()[ch * len + i]));
                }
                Block::from_vec(&[c, idx.len()], data, kx.field())
            }
        }
    }

    /// Assembles the blocks into one array shaped like `Kx`.
    pub fn scatter(&self, ys: &[Block]) -> Result<Block> {
        if ys.len() != self.block_count() {
            return Err(Error::param(format!(
                "expected {} y blocks, got {}",
                self.block_count(),
                ys.len()
            )));
        }
        match &self.partition {
            None => {
                if ys[0].shape() != self.op.out_shape() {
                    return Err(Error::shape(self.op.out_shape(), ys[0].shape()));
                }
                Ok(ys[0].clone())
            }
            Some(parts) => {
                let c = self.channels();
                let len = self.group_count();
                let mut out = vec![C64::new(0.0, 0.0); c * len];
                let mut field = Field::Real;
                for (y, idx) in ys.iter().zip(parts) {
                    if y.shape() != [c, idx.len()] {
                        return Err(Error::shape(&[c, idx.len()], y.shape()));
                    }
                    if y.field() == Field::Complex {
                        field = Field::Complex;
                    }
                    for ch in 0..c {
                        for (t, &i) in idx.iter().enumerate() {
                            out[ch * len + i] = y.data()[ch * idx.len() + t];
                        }
                    }
                }
                Block::from_vec(self.op.out_shape(), out, field)
            }
        }
    }

    fn residual_field(&self, x: &Block, ys: &[Block]) -> Result<Block> {
        let kx = self.op.forward(x)?;
        let y = self.scatter(ys)?;
        kx.with_field(y.field()).sub(&y)
    }
}

impl Coupling for QuadraticCoupling {
    fn y_shapes(&self) -> Vec<Vec<usize>> {
        match &self.partition {
            None => vec![self.op.out_shape().to_vec()],
            Some(parts) => parts
                .iter()
                .map(|p| vec![self.channels(), p.len()])
                .collect(),
        }
    }

    fn value(&self, x: &Block, ys: &[Block]) -> Result<f64> {
        Ok(0.5 * self.tau * self.residual_field(x, ys)?.norm_sq())
    }

    fn grad_x(&self, x: &Block, ys: &[Block]) -> Result<Block> {
        let r = self.residual_field(x, ys)?;
        Ok(self.op.adjoint(&r)?.with_field(x.field()).scale(self.tau))
    }

    fn grad_y(&self, j: usize, x: &Block, ys: &[Block]) -> Result<Block> {
        let y = ys
            .get(j)
            .ok_or_else(|| Error::param(format!("no block {j}")))?;
        let kx = self.gather(j, &self.op.forward(x)?)?;
        Ok(kx.with_field(y.field()).axpy(-1.0, y)?.scale(self.tau))
    }

    fn lipschitz_x(&self, _: &[Block]) -> f64 {
        self.tau * self.rho_upper
    }

    fn lipschitz_y(&self, _: usize, _: &Block, _: &[Block]) -> f64 {
        self.tau
    }

    fn moduli_bounds(&self) -> ModuliBounds {
        ModuliBounds {
            x_lower: self.tau * self.rho_upper,
            x_upper: self.tau * self.rho_upper,
            y_lower: self.tau,
            y_upper: self.tau,
        }
    }

    /// `τ‖[K, -I]‖² = τ(ρ(KᵀK) + 1)`.
    fn joint_lipschitz(&self) -> Option<f64> {
        Some(self.tau * (self.rho_upper + 1.0))
    }
}

/// Worst-case findings of [`probe_coupling`].
#[derive(Clone, Debug)]
pub struct CouplingProbe {
    /// Largest relative error between `<∇H, d>` and a central difference.
    pub gradient_error: f64,
    /// Largest `‖Δ∇_x H‖ / (L₁‖Δx‖)` seen; at most 1 when the modulus is sound.
    pub x_lipschitz_ratio: f64,
    /// Same for each `y` block.
    pub y_lipschitz_ratio: f64,
    /// Every reported modulus lay inside the declared bounds.
    pub moduli_in_bounds: bool,
    /// Largest `‖Δ∇H‖ / |||Δz|||` over random pairs: an empirical `M`.
    pub joint_ratio: f64,
}

/// Random probes of the coupling's gradient and modulus claims around
/// `(x, ys)`, perturbing within a box of half-width `scale`.
pub fn probe_coupling(
    c: &dyn Coupling,
    x: &Block,
    ys: &[Block],
    probes: usize,
    scale: f64,
    seed: u64,
) -> Result<CouplingProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = c.moduli_bounds();
    let mut out = CouplingProbe {
        gradient_error: 0.0,
        x_lipschitz_ratio: 0.0,
        y_lipschitz_ratio: 0.0,
        moduli_in_bounds: true,
        joint_ratio: 0.0,
    };
    let perturb = |b: &Block, rng: &mut ChaCha8Rng| -> Block {
        let d = random_block(b.shape(), b.field(), rng);
        let s = scale * rng.random::<f64>() / d.norm().max(f64::MIN_POSITIVE);
        b.axpy(1.0, &d.scale(s)).expect("same shape")
    };
    let within = |v: f64, lo: f64, hi: f64| v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12);
    for _ in 0..probes {
        let x1 = perturb(x, &mut rng);
        let ys1: Vec<Block> = ys.iter().map(|y| perturb(y, &mut rng)).collect();

        // directional derivative
        let dx = random_block(x.shape(), x.field(), &mut rng);
        let dys: Vec<Block> = ys
            .iter()
            .map(|y| random_block(y.shape(), y.field(), &mut rng))
            .collect();
        let h = 1e-6 * (1.0 + BlockVector::new(vec![x1.clone()]).triple_norm());
        let step = |s: f64| -> Result<f64> {
            let xs = dx.axpy(s, &x1)?;
            let yss: Vec<Block> = ys1
                .iter()
                .zip(&dys)
                .map(|(y, d)| d.axpy(s, y))
                .collect::<Result<_>>()?;
            c.value(&xs, &yss)
        };
        let fd = (step(h)? - step(-h)?) / (2.0 * h);
        let mut analytic = c.grad_x(&x1, &ys1)?.inner(&dx)?;
        for (j, d) in dys.iter().enumerate() {
            analytic += c.grad_y(j, &x1, &ys1)?.inner(d)?;
        }
        let err = (fd - analytic).abs() / analytic.abs().max(fd.abs()).max(1e-12);
        out.gradient_error = out.gradient_error.max(err);

        // block moduli
        let l1 = c.lipschitz_x(&ys1);
        out.moduli_in_bounds &= within(l1, bounds.x_lower, bounds.x_upper);
        let x2 = perturb(&x1, &mut rng);
        let gdiff = c.grad_x(&x1, &ys1)?.sub(&c.grad_x(&x2, &ys1)?)?.norm();
        let xdiff = x1.sub(&x2)?.norm();
        if xdiff > 0.0 {
            out.x_lipschitz_ratio = out.x_lipschitz_ratio.max(gdiff / (l1 * xdiff));
        }
        for j in 0..ys.len() {
            let l2 = c.lipschitz_y(j, &x1, &ys1);
            out.moduli_in_bounds &= within(l2, bounds.y_lower, bounds.y_upper);
            let mut ys2 = ys1.clone();
            ys2[j] = perturb(&ys1[j], &mut rng);
            let gdiff = c.grad_y(j, &x1, &ys1)?.sub(&c.grad_y(j, &x1, &ys2)?)?.norm();
            let ydiff = ys1[j].sub(&ys2[j])?.norm();
            if ydiff > 0.0 {
                out.y_lipschitz_ratio = out.y_lipschitz_ratio.max(gdiff / (l2 * ydiff));
            }
        }

        // joint gradient
        let x3 = perturb(x, &mut rng);
        let ys3: Vec<Block> = ys.iter().map(|y| perturb(y, &mut rng)).collect();
        let mut num = c.grad_x(&x1, &ys1)?.sub(&c.grad_x(&x3, &ys3)?)?.norm_sq();
        let mut den = x1.sub(&x3)?.norm_sq();
        for j in 0..ys.len() {
            num += c.grad_y(j, &x1, &ys1)?.sub(&c.grad_y(j, &x3, &ys3)?)?.norm_sq();
            den += ys1[j].sub(&ys3[j])?.norm_sq();
        }
        if den > 0.0 {
            out.joint_ratio = out.joint_ratio.max((num / den).sqrt());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{FiniteDifference, Identity};
    use rand::SeedableRng;

    fn mri_coupling(tau: f64, n: usize) -> QuadraticCoupling {
        QuadraticCoupling::new(tau, Arc::new(FiniteDifference::new(n, n)), 8.0).unwrap()
    }

    fn random_pair(n: usize, seed: u64) -> (Block, Block) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (
            random_block(&[n, n], Field::Complex, &mut rng),
            random_block(&[2, n, n], Field::Complex, &mut rng),
        )
    }

    #[test]
    fn gradients_vanish_on_consistent_field() {
        let c = mri_coupling(1.0, 8);
        let (u, _) = random_pair(8, 1);
        let w = c.op().forward(&u).unwrap();
        let ys = [w];
        assert!(c.grad_x(&u, &ys).unwrap().norm() < 1e-12);
        assert!(c.grad_y(0, &u, &ys).unwrap().norm() < 1e-12);
        assert_eq!(c.value(&u, &ys).unwrap(), 0.0);
    }

    #[test]
    fn gradients_scale_with_tau() {
        let (u, w) = random_pair(8, 2);
        let ys = [w];
        let g1 = mri_coupling(1.0, 8).grad_x(&u, &ys).unwrap();
        let g2 = mri_coupling(2.0, 8).grad_x(&u, &ys).unwrap();
        assert!(g2.sub(&g1.scale(2.0)).unwrap().norm() < 1e-12 * g2.norm());
    }

    #[test]
    fn grad_w_is_exactly_tau_lipschitz() {
        let c = mri_coupling(3.0, 8);
        let (u, w1) = random_pair(8, 3);
        let (_, w2) = random_pair(8, 4);
        let g1 = c.grad_y(0, &u, &[w1.clone()]).unwrap();
        let g2 = c.grad_y(0, &u, &[w2.clone()]).unwrap();
        let ratio = g1.sub(&g2).unwrap().norm() / w1.sub(&w2).unwrap().norm();
        assert!((ratio - 3.0).abs() < 1e-12);
    }

    #[test]
    fn moduli_values() {
        let c = mri_coupling(1.0, 16);
        assert_eq!(c.lipschitz_y(0, &Block::zeros(&[16, 16], Field::Complex), &[]), 1.0);
        assert!(c.lipschitz_x(&[]) <= 8.0);
        let c3 = mri_coupling(3.0, 16);
        assert_eq!(c3.lipschitz_x(&[]), 3.0 * c.lipschitz_x(&[]));
        assert_eq!(c3.joint_lipschitz(), Some(27.0));
    }

    #[test]
    fn probes_pass_for_quadratic_coupling() {
        let c = mri_coupling(1.5, 8);
        let (u, w) = random_pair(8, 5);
        let p = probe_coupling(&c, &u, &[w], 20, 1.0, 6).unwrap();
        assert!(p.gradient_error < 1e-5, "{p:?}");
        assert!(p.x_lipschitz_ratio <= 1.0 + 1e-12, "{p:?}");
        assert!(p.y_lipschitz_ratio <= 1.0 + 1e-12, "{p:?}");
        assert!(p.moduli_in_bounds);
        assert!(p.joint_ratio <= c.joint_lipschitz().unwrap());
    }

    #[test]
    fn descent_lemma_in_each_block() {
        let c = mri_coupling(1.0, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let (u, w) = random_pair(8, rng.random());
            let (v, z) = random_pair(8, rng.random());
            let ys = [w.clone()];
            let h0 = c.value(&u, &ys).unwrap();
            let bound_x = h0
                + c.grad_x(&u, &ys).unwrap().inner(&v.sub(&u).unwrap()).unwrap()
                + 0.5 * c.lipschitz_x(&ys) * v.sub(&u).unwrap().norm_sq();
            assert!(c.value(&v, &ys).unwrap() <= bound_x * (1.0 + 1e-12));
            let bound_y = h0
                + c.grad_y(0, &u, &ys).unwrap().inner(&z.sub(&w).unwrap()).unwrap()
                + 0.5 * c.lipschitz_y(0, &u, &ys) * z.sub(&w).unwrap().norm_sq();
            assert!(c.value(&u, &[z]).unwrap() <= bound_y * (1.0 + 1e-12));
        }
    }

    #[test]
    fn partitioned_blocks_match_whole_field() {
        let n = 4;
        let whole = mri_coupling(2.0, n);
        let parts = vec![(0..8).collect::<Vec<_>>(), (8..16).collect()];
        let split = mri_coupling(2.0, n).with_partition(parts).unwrap();
        let (u, w) = random_pair(n, 9);
        let ys = vec![split.gather(0, &w).unwrap(), split.gather(1, &w).unwrap()];
        assert_eq!(split.scatter(&ys).unwrap(), w);
        let a = whole.value(&u, &[w.clone()]).unwrap();
        let b = split.value(&u, &ys).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        let gx = whole.grad_x(&u, &[w.clone()]).unwrap();
        assert!(gx.sub(&split.grad_x(&u, &ys).unwrap()).unwrap().norm() < 1e-12);
        let gy = whole.grad_y(0, &u, &[w]).unwrap();
        assert_eq!(split.grad_y(1, &u, &ys).unwrap(), split.gather(1, &gy).unwrap());
        assert_eq!(split.y_shapes(), vec![vec![2, 8], vec![2, 8]]);
    }

    #[test]
    fn partition_must_cover() {
        assert!(mri_coupling(1.0, 2).with_partition(vec![vec![0, 1]]).is_err());
        assert!(mri_coupling(1.0, 2).with_partition(vec![vec![0, 1, 2, 3, 3]]).is_err());
        assert!(QuadraticCoupling::new(0.0, Arc::new(Identity::new(&[1])), 1.0).is_err());
    }
}
