//! Dense blocks and the product space they live in.
//!
//! Complex arrays are treated as real inner-product spaces, so
//! `<u, v> = Re sum(conj(u_i) v_i)` everywhere. A block's leading axis
//! indexes the components of each group: a block of shape `[c, rest..]`
//! holds `rest.product()` groups of `c` entries each, with component `ch`
//! of group `i` stored at `ch * len + i`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Scalar field a block is declared over.
///
/// Real blocks are stored as complex values with zero imaginary part.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

/// One dense, row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    shape: Vec<usize>,
    data: Vec<C64>,
    field: Field,
}

impl Block {
    pub fn zeros(shape: &[usize], field: Field) -> Self {
        let len = shape.iter().product();
        Block {
            shape: shape.to_vec(),
            data: vec![C64::new(0.0, 0.0); len],
            field,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<C64>, field: Field) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::param(format!(
                "block of shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Block {
            shape: shape.to_vec(),
            data,
            field,
        })
    }

    pub fn from_real(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(
            shape,
            data.iter().map(|&v| C64::new(v, 0.0)).collect(),
            Field::Real,
        )
    }

    pub fn complex(shape: &[usize], data: Vec<C64>) -> Result<Self> {
        Self::from_vec(shape, data, Field::Complex)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Same storage, reinterpreted with a new shape of equal size.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::shape(&self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn with_field(mut self, field: Field) -> Self {
        self.field = field;
        self
    }

    /// Number of components per group (the leading axis).
    pub fn group_dim(&self) -> usize {
        self.shape.first().copied().unwrap_or(1).max(1)
    }

    /// Number of groups (the product of the trailing axes).
    pub fn group_count(&self) -> usize {
        if self.data.is_empty() {
            0
        } else {
            self.data.len() / self.group_dim()
        }
    }

    pub fn check_compatible(&self, other: &Block) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(&self.shape, &other.shape));
        }
        if self.field != other.field {
            return Err(Error::param(format!(
                "field mismatch: {:?} vs {:?}",
                self.field, other.field
            )));
        }
        Ok(())
    }

    pub fn inner(&self, other: &Block) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(re_dot(&self.data, &other.data))
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `a * self + other`.
    pub fn axpy(&self, a: f64, other: &Block) -> Result<Block> {
        self.check_compatible(other)?;
        let mut out = other.clone();
        out.data
            .par_iter_mut()
            .zip(self.data.par_iter())
            .for_each(|(o, &v)| *o += v * a);
        Ok(out)
    }

    pub fn sub(&self, other: &Block) -> Result<Block> {
        other.axpy(-1.0, self)
    }

    pub fn add(&self, other: &Block) -> Result<Block> {
        other.axpy(1.0, self)
    }

    pub fn scale(&self, a: f64) -> Block {
        let mut out = self.clone();
        out.scale_mut(a);
        out
    }

    pub fn scale_mut(&mut self, a: f64) {
        self.data.par_iter_mut().for_each(|v| *v *= a);
    }

    /// In-place `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &Block) -> Result<()> {
        self.check_compatible(other)?;
        self.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(s, &o)| *s += o * a);
        Ok(())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64 + Sync + Send) -> Block {
        Block {
            shape: self.shape.clone(),
            data: self.data.par_iter().map(|&v| f(v)).collect(),
            field: self.field,
        }
    }

    /// Entrywise magnitudes.
    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Copy into group-major order: group `i` occupies `out[i*c..(i+1)*c]`.
    pub fn to_group_major(&self) -> Vec<C64> {
        let c = self.group_dim();
        let n = self.group_count();
        let mut out = vec![C64::new(0.0, 0.0); self.data.len()];
        out.par_chunks_mut(c.max(1)).enumerate().for_each(|(i, g)| {
            for (ch, slot) in g.iter_mut().enumerate() {
                *slot = self.data[ch * n + i];
            }
        });
        out
    }

    /// Inverse of [`Block::to_group_major`] for a block of this shape.
    pub fn from_group_major(&self, grouped: &[C64]) -> Block {
        let c = self.group_dim();
        let n = self.group_count();
        let mut data = vec![C64::new(0.0, 0.0); self.data.len()];
        for (i, g) in grouped.chunks(c).enumerate() {
            for (ch, &v) in g.iter().enumerate() {
                data[ch * n + i] = v;
            }
        }
        Block {
            shape: self.shape.clone(),
            data,
            field: self.field,
        }
    }
}

/// Real part of the Hermitian product. Sequential so the result does not
/// depend on the thread count.
pub fn re_dot(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// The tuple `(v_1, ..., v_p)` with the product-space inner product.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    pub blocks: Vec<Block>,
}

impl BlockVector {
    pub fn new(blocks: Vec<Block>) -> Self {
        BlockVector { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    fn check(&self, other: &BlockVector) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::param(format!(
                "block count mismatch: {} vs {}",
                self.blocks.len(),
                other.blocks.len()
            )));
        }
        self.blocks
            .iter()
            .zip(&other.blocks)
            .try_for_each(|(a, b)| a.check_compatible(b))
    }

    /// Sum of per-block inner products.
    pub fn inner(&self, other: &BlockVector) -> Result<f64> {
        self.check(other)?;
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    /// `sqrt(sum ||v_i||^2)`.
    pub fn triple_norm(&self) -> f64 {
        self.blocks.iter().map(Block::norm_sq).sum::<f64>().sqrt()
    }

    pub fn axpy(&self, a: f64, other: &BlockVector) -> Result<BlockVector> {
        self.check(other)?;
        Ok(BlockVector {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(v, w)| v.axpy(a, w))
                .collect::<Result<_>>()?,
        })
    }
}

/// Free-function form of [`BlockVector::inner`].
pub fn inner(v: &BlockVector, w: &BlockVector) -> Result<f64> {
    v.inner(w)
}

pub fn triple_norm(v: &BlockVector) -> f64 {
    v.triple_norm()
}

pub fn axpy(a: f64, v: &BlockVector, w: &BlockVector) -> Result<BlockVector> {
    v.axpy(a, w)
}
