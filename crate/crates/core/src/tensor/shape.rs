use super::Tensor;
use crate::error::{Error, Result};

/// Joins tensors along `axis`; every other extent must agree.
pub fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::invalid("concat of an empty list"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::invalid(format!("concat axis {axis} for rank {rank}")));
    }
    if inputs.len() == 1 {
        return Ok((*first).clone());
    }
    for t in &inputs[1..] {
        let mismatch = t.rank() != rank || (0..rank).any(|a| a != axis && t.shape()[a] != first.shape()[a]);
        if mismatch {
            return Err(Error::shape(
                "concat",
                format!(
                    "along axis {axis}: {:?} does not match {:?} off that axis",
                    t.shape(),
                    first.shape()
                ),
            ));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let mut shape = first.shape().to_vec();
    shape[axis] = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut data = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for t in inputs {
            let block = t.shape()[axis] * inner;
            data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
        }
    }
    Ok(Tensor::from_parts(shape, data))
}

/// Elements `start..start + len` along `axis`.
pub fn slice_axis(input: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= input.rank() || len == 0 || start + len > input.shape()[axis] {
        return Err(Error::shape(
            "slice",
            format!("range {start}..{} on axis {axis} of {:?}", start + len, input.shape()),
        ));
    }
    let outer: usize = input.shape()[..axis].iter().product();
    let inner: usize = input.shape()[axis + 1..].iter().product();
    let n = input.shape()[axis];
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        data.extend_from_slice(&input.data()[base..base + len * inner]);
    }
    let mut shape = input.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, data))
}

/// Adds `grad` into the `start..` window of a zero tensor shaped like the slice source.
pub(crate) fn unslice(grad: &Tensor, full_shape: &[usize], axis: usize, start: usize) -> Tensor {
    let outer: usize = full_shape[..axis].iter().product();
    let inner: usize = full_shape[axis + 1..].iter().product();
    let n = full_shape[axis];
    let len = grad.shape()[axis];
    let mut out = Tensor::zeros(full_shape);
    for o in 0..outer {
        let dst = (o * n + start) * inner;
        let src = o * len * inner;
        out.data_mut()[dst..dst + len * inner].copy_from_slice(&grad.data()[src..src + len * inner]);
    }
    out
}
