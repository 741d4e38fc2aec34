use super::{numel, Tensor};
use crate::error::{Error, Result};

pub struct MaxPoolOutput {
    pub output: Tensor,
    /// Flat input offset of the winning element for every output element.
    pub argmax: Vec<usize>,
}

/// Non-overlapping max pooling over the `window.len()` axes that precede the
/// channel axis. Border windows are partial, so extents round up (13 / 2 -> 7).
pub fn max_pool(input: &Tensor, window: &[usize]) -> Result<MaxPoolOutput> {
    let r = window.len();
    let shape = input.shape();
    if !(1..=3).contains(&r) || shape.len() < r + 1 {
        return Err(Error::shape(
            "max_pool",
            format!("window {window:?} for input {shape:?}"),
        ));
    }
    let lead = shape.len() - r - 1;
    let spatial = &shape[lead..lead + r];
    for d in 0..r {
        if window[d] == 0 || window[d] > spatial[d] {
            return Err(Error::shape(
                "max_pool",
                format!(
                    "window extent {} on axis {} exceeds input extent {}",
                    window[d],
                    lead + d,
                    spatial[d]
                ),
            ));
        }
    }
    let c = shape[shape.len() - 1];
    let batch = numel(&shape[..lead]);
    let mut ins = [1usize; 3];
    let mut win = [1usize; 3];
    ins[..r].copy_from_slice(spatial);
    win[..r].copy_from_slice(window);
    let outs: [usize; 3] = std::array::from_fn(|d| ins[d].div_ceil(win[d]));

    let mut out_shape = shape[..lead].to_vec();
    out_shape.extend_from_slice(&outs[..r]);
    out_shape.push(c);
    let mut out = vec![f64::NEG_INFINITY; numel(&out_shape)];
    let mut argmax = vec![0usize; out.len()];
    let x = input.data();
    let in_item = ins.iter().product::<usize>() * c;
    let out_item = outs.iter().product::<usize>() * c;
    for b in 0..batch {
        for ox in 0..outs[0] {
            for oy in 0..outs[1] {
                for oz in 0..outs[2] {
                    let o = b * out_item + ((ox * outs[1] + oy) * outs[2] + oz) * c;
                    for ix in ox * win[0]..((ox + 1) * win[0]).min(ins[0]) {
                        for iy in oy * win[1]..((oy + 1) * win[1]).min(ins[1]) {
                            for iz in oz * win[2]..((oz + 1) * win[2]).min(ins[2]) {
                                let i = b * in_item + ((ix * ins[1] + iy) * ins[2] + iz) * c;
                                for ch in 0..c {
                                    if x[i + ch] > out[o + ch] {
                                        out[o + ch] = x[i + ch];
                                        argmax[o + ch] = i + ch;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(MaxPoolOutput {
        output: Tensor::from_parts(out_shape, out),
        argmax,
    })
}

/// Routes each output gradient to the element that won the forward max.
pub fn max_pool_backward(argmax: &[usize], input_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        dx.data_mut()[i] += g;
    }
    dx
}

/// Mean over `axes`, keeping them as extent-1 axes.
pub fn mean_axes(input: &Tensor, axes: &[usize]) -> Result<Tensor> {
    if let Some(&a) = axes.iter().find(|&&a| a >= input.rank()) {
        return Err(Error::invalid(format!(
            "axis {a} out of range for rank {}",
            input.rank()
        )));
    }
    let mut shape = input.shape().to_vec();
    let mut count = 1usize;
    for &a in axes {
        if shape[a] != 1 {
            count *= shape[a];
            shape[a] = 1;
        }
    }
    Ok(input.sum_to_shape(&shape)?.scale(1.0 / count as f64))
}

/// Mean over every axis except the trailing channel axis (rank is preserved).
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    if input.rank() < 2 {
        return Err(Error::shape(
            "global_avg_pool",
            format!("need a spatial and a channel axis, got {:?}", input.shape()),
        ));
    }
    let axes: Vec<usize> = (0..input.rank() - 1).collect();
    mean_axes(input, &axes)
}
