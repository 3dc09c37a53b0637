use rayon::prelude::*;

use super::{check_shape, LinOp};
use crate::blockspace::{Block, C64};
use crate::error::Result;

/// Forward differences with periodic boundaries.
///
/// Maps an `[m, n]` image to a `[2, m, n]` field whose channels are
/// `(D_x u, D_y u)`, with `x` running along columns:
/// `(D_x u)[i][j] = u[i][j+1] - u[i][j]`, `(D_y u)[i][j] = u[i+1][j] - u[i][j]`.
#[derive(Clone, Debug)]
pub struct FiniteDifference {
    in_shape: [usize; 2],
    out_shape: [usize; 3],
}

impl FiniteDifference {
    pub fn new(m: usize, n: usize) -> Self {
        FiniteDifference {
            in_shape: [m, n],
            out_shape: [2, m, n],
        }
    }

    /// Exact `ρ(DᵀD)` bound for the periodic stencil (attained for even sizes).
    pub const SPECTRAL_BOUND: f64 = 8.0;
}

impl LinOp for FiniteDifference {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, u: &Block) -> Result<Block> {
        check_shape(u, &self.in_shape)?;
        let [m, n] = self.in_shape;
        let src = u.data();
        let mut out = vec![C64::new(0.0, 0.0); 2 * m * n];
        let (dx, dy) = out.split_at_mut(m * n);
        dx.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, d) in row.iter_mut().enumerate() {
                *d = src[i * n + (j + 1) % n] - src[i * n + j];
            }
        });
        dy.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let below = ((i + 1) % m) * n;
            for (j, d) in row.iter_mut().enumerate() {
                *d = src[below + j] - src[i * n + j];
            }
        });
        Block::from_vec(&self.out_shape, out, u.field())
    }

    fn adjoint(&self, v: &Block) -> Result<Block> {
        check_shape(v, &self.out_shape)?;
        let [m, n] = self.in_shape;
        let (px, py) = v.data().split_at(m * n);
        let mut out = vec![C64::new(0.0, 0.0); m * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let above = ((i + m - 1) % m) * n;
            for (j, o) in row.iter_mut().enumerate() {
                let left = i * n + (j + n - 1) % n;
                *o = px[left] - px[i * n + j] + py[above + j] - py[i * n + j];
            }
        });
        Block::from_vec(&self.in_shape, out, v.field())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockspace::Field;
    use crate::linops::adjoint_mismatch;

    #[test]
    fn constant_has_zero_gradient() {
        let u = Block::from_real(&[4, 4], &[2.5; 16]).unwrap();
        let d = FiniteDifference::new(4, 4).forward(&u).unwrap();
        assert_eq!(d.norm(), 0.0);
    }

    #[test]
    fn two_by_two_stencil() {
        let u = Block::from_real(&[2, 2], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        let d = FiniteDifference::new(2, 2).forward(&u).unwrap();
        let re: Vec<f64> = d.data().iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, -1.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_dense_construction() {
        let (m, n) = (3, 4);
        let op = FiniteDifference::new(m, n);
        // column k of the dense matrix is D applied to the k-th unit image
        for k in 0..m * n {
            let mut e = Block::zeros(&[m, n], Field::Real);
            e.data_mut()[k] = C64::new(1.0, 0.0);
            let col = op.forward(&e).unwrap();
            let (i, j) = (k / n, k % n);
            let mut expect = vec![0.0; 2 * m * n];
            expect[i * n + j] -= 1.0;
            expect[i * n + (j + n - 1) % n] += 1.0;
            expect[m * n + i * n + j] -= 1.0;
            expect[m * n + ((i + m - 1) % m) * n + j] += 1.0;
            let got: Vec<f64> = col.data().iter().map(|z| z.re).collect();
            assert_eq!(got, expect, "unit image {k}");
        }
    }

    #[test]
    fn adjoint_identity() {
        let op = FiniteDifference::new(16, 16);
        assert!(adjoint_mismatch(&op, 20, 9).unwrap() < 1e-10);
    }
}
