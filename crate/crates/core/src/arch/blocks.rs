//! Stand-alone forward compositions of the building blocks, written directly
//! against tensor operations with explicit parameters.

use crate::tensor::{add, concat_channels, conv2d, relu, ConvParams, Real, Tensor};
use crate::Result;

/// `relu(conv2(relu(conv1(x))) + x)`
pub fn residual_block<T: Real>(
    x: &Tensor<T>,
    conv1: &ConvParams<'_, T>,
    conv2: &ConvParams<'_, T>,
) -> Result<Tensor<T>> {
    let h = relu(&conv2d(x, conv1)?);
    let h = conv2d(&h, conv2)?;
    Ok(relu(&add(&h, x)?))
}

/// `relu(pointwise(relu(gconv2(relu(gconv1(x))))) + x)`; the group count is
/// carried by the two 3x3 parameter sets.
pub fn residual_e_block<T: Real>(
    x: &Tensor<T>,
    gconv1: &ConvParams<'_, T>,
    gconv2: &ConvParams<'_, T>,
    pointwise: &ConvParams<'_, T>,
) -> Result<Tensor<T>> {
    let h = relu(&conv2d(x, gconv1)?);
    let h = relu(&conv2d(&h, gconv2)?);
    let h = conv2d(&h, pointwise)?;
    Ok(relu(&add(&h, x)?))
}

/// Parameters of one residual unit.
#[derive(Debug, Clone, Copy)]
pub enum UnitParams<'a, T: Real> {
    Residual([ConvParams<'a, T>; 2]),
    Efficient([ConvParams<'a, T>; 3]),
}

impl<T: Real> UnitParams<'_, T> {
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            UnitParams::Residual([a, b]) => residual_block(x, a, b),
            UnitParams::Efficient([a, b, c]) => residual_e_block(x, a, b, c),
        }
    }
}

/// Local cascading block: `B0 = x`, `Bu = fuse_u([B0, ..., B(u-1), unit_u(B(u-1))])`.
pub fn local_cascade<T: Real>(
    x: &Tensor<T>,
    units: &[UnitParams<'_, T>],
    fusions: &[ConvParams<'_, T>],
) -> Result<Tensor<T>> {
    let mut states = vec![x.clone()];
    for (unit, fuse) in units.iter().zip(fusions) {
        let r = unit.apply(states.last().expect("non-empty"))?;
        let mut parts: Vec<&Tensor<T>> = states.iter().collect();
        parts.push(&r);
        let next = conv2d(&concat_channels(&parts)?, fuse)?;
        states.push(next);
    }
    Ok(states.pop().expect("non-empty"))
}
