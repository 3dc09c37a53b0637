use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{check_shape, LinOp};
use crate::blockspace::{Block, Field, C64};
use crate::error::Result;

/// Orthonormal 2-D DFT on `m x n` row-major images. The inverse is the adjoint.
#[derive(Clone)]
pub struct Fft2 {
    shape: [usize; 2],
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("shape", &self.shape).finish()
    }
}

impl Fft2 {
    pub fn new(m: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            shape: [m, n],
            row_fwd: planner.plan_fft_forward(n),
            row_inv: planner.plan_fft_inverse(n),
            col_fwd: planner.plan_fft_forward(m),
            col_inv: planner.plan_fft_inverse(m),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    /// Transforms one image in place.
    pub fn process(&self, img: &mut [C64], inverse: bool) {
        let [m, n] = self.shape;
        debug_assert_eq!(img.len(), m * n);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        img.par_chunks_mut(n).for_each(|r| row.process(r));
        let mut t = transpose(img, m, n);
        t.par_chunks_mut(m).for_each(|c| col.process(c));
        let back = transpose(&t, n, m);
        let scale = 1.0 / ((m * n) as f64).sqrt();
        img.par_iter_mut()
            .zip(back.par_iter())
            .for_each(|(o, &v)| *o = v * scale);
    }
}

fn transpose(src: &[C64], rows: usize, cols: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); src.len()];
    out.par_chunks_mut(rows).enumerate().for_each(|(j, dst)| {
        for (i, d) in dst.iter_mut().enumerate() {
            *d = src[i * cols + j];
        }
    });
    out
}

impl LinOp for Fft2 {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, u: &Block) -> Result<Block> {
        check_shape(u, &self.shape)?;
        let mut out = u.clone().with_field(Field::Complex);
        self.process(out.data_mut(), false);
        Ok(out)
    }
    fn adjoint(&self, v: &Block) -> Result<Block> {
        check_shape(v, &self.shape)?;
        let mut out = v.clone().with_field(Field::Complex);
        self.process(out.data_mut(), true);
        Ok(out)
    }
}

/// One-shot unitary forward transform of an `[m, n]` block.
pub fn fft2_unitary(u: &Block) -> Result<Block> {
    let (m, n) = image_dims(u)?;
    Fft2::new(m, n).forward(u)
}

pub fn ifft2_unitary(u: &Block) -> Result<Block> {
    let (m, n) = image_dims(u)?;
    Fft2::new(m, n).adjoint(u)
}

fn image_dims(u: &Block) -> Result<(usize, usize)> {
    match *u.shape() {
        [m, n] => Ok((m, n)),
        _ => Err(crate::error::Error::param(format!(
            "expected a 2-D image, got shape {:?}",
            u.shape()
        ))),
    }
}
