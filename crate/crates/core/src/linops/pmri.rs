use rayon::prelude::*;

use super::{check_shape, Fft2, LinOp};
use crate::blockspace::{Block, Field, C64};
use crate::error::{Error, Result};

/// Parallel-MRI forward model: channel `i` of `A u` is `P ∘ F(S_i ∘ u)`.
#[derive(Clone, Debug)]
pub struct PmriOperator {
    sensitivities: Vec<Vec<C64>>,
    mask: Vec<u8>,
    fft: Fft2,
    in_shape: [usize; 2],
    out_shape: [usize; 3],
}

impl PmriOperator {
    pub fn new(m: usize, n: usize, sensitivities: Vec<Vec<C64>>, mask: Vec<u8>) -> Result<Self> {
        if sensitivities.is_empty() {
            return Err(Error::param("at least one coil sensitivity is required"));
        }
        for s in &sensitivities {
            if s.len() != m * n {
                return Err(Error::shape(&[m, n], &[s.len()]));
            }
        }
        if mask.len() != m * n {
            return Err(Error::shape(&[m, n], &[mask.len()]));
        }
        if mask.iter().any(|&b| b > 1) {
            return Err(Error::param("mask entries must be 0 or 1"));
        }
        let coils = sensitivities.len();
        Ok(PmriOperator {
            sensitivities,
            mask,
            fft: Fft2::new(m, n),
            in_shape: [m, n],
            out_shape: [coils, m, n],
        })
    }

    pub fn coils(&self) -> usize {
        self.sensitivities.len()
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn sensitivities(&self) -> &[Vec<C64>] {
        &self.sensitivities
    }

    /// `max_pixel sum_i |S_i|^2`, an upper bound on `ρ(AᵀA)` for a unitary FFT.
    pub fn gram_bound(&self) -> f64 {
        let len = self.in_shape[0] * self.in_shape[1];
        (0..len)
            .map(|p| {
                self.sensitivities
                    .iter()
                    .map(|s| s[p].norm_sqr())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Zero-filled reconstruction `Aᵀ û`.
    pub fn zero_filled(&self, kspace: &Block) -> Result<Block> {
        self.adjoint(kspace)
    }
}

impl LinOp for PmriOperator {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, u: &Block) -> Result<Block> {
        check_shape(u, &self.in_shape)?;
        let len = u.len();
        let mut out = vec![C64::new(0.0, 0.0); self.coils() * len];
        out.par_chunks_mut(len)
            .zip(self.sensitivities.par_iter())
            .for_each(|(chan, s)| {
                for ((c, &si), &ui) in chan.iter_mut().zip(s).zip(u.data()) {
                    *c = si * ui;
                }
                self.fft.process(chan, false);
                for (c, &p) in chan.iter_mut().zip(&self.mask) {
                    if p == 0 {
                        *c = C64::new(0.0, 0.0);
                    }
                }
            });
        Block::complex(&self.out_shape, out)
    }

    fn adjoint(&self, v: &Block) -> Result<Block> {
        check_shape(v, &self.out_shape)?;
        let len = self.in_shape[0] * self.in_shape[1];
        let per_coil: Vec<Vec<C64>> = v
            .data()
            .par_chunks(len)
            .zip(self.sensitivities.par_iter())
            .map(|(chan, s)| {
                let mut buf: Vec<C64> = chan
                    .iter()
                    .zip(&self.mask)
                    .map(|(&c, &p)| if p == 0 { C64::new(0.0, 0.0) } else { c })
                    .collect();
                self.fft.process(&mut buf, true);
                for (b, si) in buf.iter_mut().zip(s) {
                    *b *= si.conj();
                }
                buf
            })
            .collect();
        // coil sum in fixed order
        let mut out = vec![C64::new(0.0, 0.0); len];
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            for c in &per_coil {
                *o += c[p];
            }
        });
        Block::from_vec(&self.in_shape, out, Field::Complex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{adjoint_mismatch, fft2_unitary, random_block};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_unit_coil_full_mask_is_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_block(&[8, 8], Field::Complex, &mut rng);
        let op = PmriOperator::new(8, 8, vec![vec![C64::new(1.0, 0.0); 64]], vec![1; 64]).unwrap();
        let a = op.forward(&u).unwrap();
        let f = fft2_unitary(&u).unwrap();
        assert!(a.reshaped(&[8, 8]).unwrap().sub(&f).unwrap().norm() < 1e-12);
    }

    #[test]
    fn zero_image_and_mask_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sens: Vec<Vec<C64>> = (0..4)
            .map(|_| random_block(&[8, 8], Field::Complex, &mut rng).into_data())
            .collect();
        let mask: Vec<u8> = (0..64).map(|_| rng.random_range(0..2u8)).collect();
        let op = PmriOperator::new(8, 8, sens, mask.clone()).unwrap();
        let zero = op.forward(&Block::zeros(&[8, 8], Field::Complex)).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let u = random_block(&[8, 8], Field::Complex, &mut rng);
        let a = op.forward(&u).unwrap();
        for (c, chunk) in a.data().chunks(64).enumerate() {
            for (p, z) in chunk.iter().enumerate() {
                if mask[p] == 0 {
                    assert_eq!(*z, C64::new(0.0, 0.0), "coil {c} pixel {p}");
                }
            }
        }
        assert!(adjoint_mismatch(&op, 20, 11).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PmriOperator::new(4, 4, vec![], vec![1; 16]).is_err());
        assert!(PmriOperator::new(4, 4, vec![vec![C64::new(1.0, 0.0); 15]], vec![1; 16]).is_err());
        assert!(PmriOperator::new(4, 4, vec![vec![C64::new(1.0, 0.0); 16]], vec![2; 16]).is_err());
        let op = PmriOperator::new(4, 4, vec![vec![C64::new(1.0, 0.0); 16]], vec![1; 16]).unwrap();
        assert!(op.forward(&Block::zeros(&[4, 5], Field::Real)).is_err());
    }
}
