//! Matrix-free linear operators with adjoints.

mod diff;
mod fft;
mod pmri;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blockspace::{Block, Field, C64};
use crate::error::{Error, Result};

pub use diff::FiniteDifference;
pub use fft::{fft2_unitary, ifft2_unitary, Fft2};
pub use pmri::PmriOperator;

/// A real-linear map between blocks together with its adjoint under the
/// real inner product.
pub trait LinOp: Send + Sync {
    fn in_shape(&self) -> &[usize];
    fn out_shape(&self) -> &[usize];
    fn forward(&self, u: &Block) -> Result<Block>;
    fn adjoint(&self, v: &Block) -> Result<Block>;
}

pub(crate) fn check_shape(b: &Block, expected: &[usize]) -> Result<()> {
    if b.shape() != expected {
        return Err(Error::shape(expected, b.shape()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Identity {
    shape: Vec<usize>,
}

impl Identity {
    pub fn new(shape: &[usize]) -> Self {
        Identity {
            shape: shape.to_vec(),
        }
    }
}

impl LinOp for Identity {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn forward(&self, u: &Block) -> Result<Block> {
        check_shape(u, &self.shape)?;
        Ok(u.clone())
    }
    fn adjoint(&self, v: &Block) -> Result<Block> {
        self.forward(v)
    }
}

/// `c * op`.
pub struct Scaled {
    pub op: Arc<dyn LinOp>,
    pub factor: f64,
}

impl LinOp for Scaled {
    fn in_shape(&self) -> &[usize] {
        self.op.in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        self.op.out_shape()
    }
    fn forward(&self, u: &Block) -> Result<Block> {
        Ok(self.op.forward(u)?.scale(self.factor))
    }
    fn adjoint(&self, v: &Block) -> Result<Block> {
        Ok(self.op.adjoint(v)?.scale(self.factor))
    }
}

/// `outer ∘ inner`.
pub struct Composed {
    pub outer: Arc<dyn LinOp>,
    pub inner: Arc<dyn LinOp>,
}

impl Composed {
    pub fn new(outer: Arc<dyn LinOp>, inner: Arc<dyn LinOp>) -> Result<Self> {
        if outer.in_shape() != inner.out_shape() {
            return Err(Error::shape(outer.in_shape(), inner.out_shape()));
        }
        Ok(Composed { outer, inner })
    }
}

impl LinOp for Composed {
    fn in_shape(&self) -> &[usize] {
        self.inner.in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        self.outer.out_shape()
    }
    fn forward(&self, u: &Block) -> Result<Block> {
        self.outer.forward(&self.inner.forward(u)?)
    }
    fn adjoint(&self, v: &Block) -> Result<Block> {
        self.inner.adjoint(&self.outer.adjoint(v)?)
    }
}

/// Vertical stack `[op_1; ...; op_k]`, output shape `[k, out..]`.
pub struct Stacked {
    ops: Vec<Arc<dyn LinOp>>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl Stacked {
    pub fn new(ops: Vec<Arc<dyn LinOp>>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::param("cannot stack zero operators"))?;
        let in_shape = first.in_shape().to_vec();
        let part = first.out_shape().to_vec();
        for op in &ops {
            if op.in_shape() != in_shape.as_slice() {
                return Err(Error::shape(&in_shape, op.in_shape()));
            }
            if op.out_shape() != part.as_slice() {
                return Err(Error::shape(&part, op.out_shape()));
            }
        }
        let mut out_shape = vec![ops.len()];
        out_shape.extend_from_slice(&part);
        Ok(Stacked {
            ops,
            in_shape,
            out_shape,
        })
    }
}

impl LinOp for Stacked {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
    fn forward(&self, u: &Block) -> Result<Block> {
        let mut data = Vec::new();
        let mut field = Field::Real;
        for op in &self.ops {
            let part = op.forward(u)?;
            if part.field() == Field::Complex {
                field = Field::Complex;
            }
            data.extend_from_slice(part.data());
        }
        Block::from_vec(&self.out_shape, data, field)
    }
    fn adjoint(&self, v: &Block) -> Result<Block> {
        check_shape(v, &self.out_shape)?;
        let part_len: usize = self.out_shape[1..].iter().product();
        let mut acc: Option<Block> = None;
        for (op, chunk) in self.ops.iter().zip(v.data().chunks(part_len)) {
            let piece = Block::from_vec(&self.out_shape[1..], chunk.to_vec(), v.field())?;
            let back = op.adjoint(&piece)?;
            acc = Some(match acc {
                None => back,
                Some(a) => a.add(&back)?,
            });
        }
        Ok(acc.expect("stack is non-empty"))
    }
}

/// The normal operator `opᵀ op`.
pub struct Gram {
    pub op: Arc<dyn LinOp>,
}

impl Gram {
    pub fn new(op: Arc<dyn LinOp>) -> Self {
        Gram { op }
    }
}

impl LinOp for Gram {
    fn in_shape(&self) -> &[usize] {
        self.op.in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        self.op.in_shape()
    }
    fn forward(&self, u: &Block) -> Result<Block> {
        self.op.adjoint(&self.op.forward(u)?)
    }
    fn adjoint(&self, v: &Block) -> Result<Block> {
        self.forward(v)
    }
}

/// Draws a complex Gaussian block. Used for probes and power iteration.
pub fn random_block(shape: &[usize], field: Field, rng: &mut impl Rng) -> Block {
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = match field {
                Field::Real => 0.0,
                Field::Complex => rng.sample(StandardNormal),
            };
            C64::new(re, im)
        })
        .collect();
    Block::from_vec(shape, data, field).expect("length matches shape")
}

/// Worst observed `|<Au, v> - <u, Aᵀv>| / (‖u‖‖v‖)` over random probes.
pub fn adjoint_mismatch(op: &dyn LinOp, probes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let u = random_block(op.in_shape(), Field::Complex, &mut rng);
        let v = random_block(op.out_shape(), Field::Complex, &mut rng);
        let lhs = op.forward(&u)?.with_field(Field::Complex).inner(&v)?;
        let rhs = u.inner(&op.adjoint(&v)?.with_field(Field::Complex))?;
        worst = worst.max((lhs - rhs).abs() / (u.norm() * v.norm()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compositions_keep_adjointness() {
        let d: Arc<dyn LinOp> = Arc::new(FiniteDifference::new(8, 8));
        let f: Arc<dyn LinOp> = Arc::new(Fft2::new(8, 8));
        let scaled: Arc<dyn LinOp> = Arc::new(Scaled {
            op: d.clone(),
            factor: -2.5,
        });
        let stacked = Stacked::new(vec![f.clone(), f.clone(), Arc::new(Identity::new(&[8, 8]))])
            .unwrap();
        let composed = Composed::new(scaled.clone(), f.clone()).unwrap();
        let gram = Gram::new(d);
        for op in [
            &*scaled as &dyn LinOp,
            &stacked,
            &composed,
            &gram,
        ] {
            assert!(adjoint_mismatch(op, 10, 3).unwrap() < 1e-12);
        }
    }

    #[test]
    fn compose_rejects_bad_shapes() {
        let d: Arc<dyn LinOp> = Arc::new(FiniteDifference::new(4, 4));
        assert!(Composed::new(d.clone(), d).is_err());
    }
}
