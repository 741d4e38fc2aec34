use rayon::prelude::*;

use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Geometry of a 1-, 2- or 3-D cross-correlation.
///
/// Weights are laid out `[k_1, .., k_r, c_in, c_out]` so the innermost loop of
/// every kernel runs over contiguous output channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    /// (before, after) zero padding per spatial dimension.
    pub padding: Vec<(usize, usize)>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    /// Stride-1 "same" convolution. Even kernels pad one less before than after.
    pub fn same(kernel: &[usize], in_channels: usize, out_channels: usize) -> Self {
        let stride = vec![1; kernel.len()];
        Self::same_strided(kernel, &stride, in_channels, out_channels).expect("stride-1 same padding is always valid")
    }

    pub fn same_strided(kernel: &[usize], stride: &[usize], in_channels: usize, out_channels: usize) -> Result<Self> {
        if let Some(d) = (0..kernel.len()).find(|&d| kernel[d].is_multiple_of(2) && stride[d] > 1) {
            return Err(Error::invalid(format!(
                "same padding with even kernel {} and stride {} on dimension {d}",
                kernel[d], stride[d]
            )));
        }
        let padding = kernel
            .iter()
            .map(|&k| {
                let before = (k.max(1) - 1) / 2;
                (before, k.max(1) - 1 - before)
            })
            .collect();
        Self::explicit(kernel, stride, padding, in_channels, out_channels)
    }

    pub fn valid(kernel: &[usize], in_channels: usize, out_channels: usize) -> Self {
        Self::explicit(
            kernel,
            &vec![1; kernel.len()],
            vec![(0, 0); kernel.len()],
            in_channels,
            out_channels,
        )
        .expect("valid spec")
    }

    pub fn explicit(
        kernel: &[usize],
        stride: &[usize],
        padding: Vec<(usize, usize)>,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        let r = kernel.len();
        if !(1..=3).contains(&r) || stride.len() != r || padding.len() != r {
            return Err(Error::invalid(format!(
                "conv rank {r} with {} strides and {} paddings",
                stride.len(),
                padding.len()
            )));
        }
        if kernel.contains(&0) || stride.contains(&0) || in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid("conv extents must be positive"));
        }
        Ok(ConvSpec {
            kernel: kernel.to_vec(),
            stride: stride.to_vec(),
            padding,
            in_channels,
            out_channels,
        })
    }

    pub fn rank(&self) -> usize {
        self.kernel.len()
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        let mut s = self.kernel.clone();
        s.push(self.in_channels);
        s.push(self.out_channels);
        s
    }

    pub fn output_extents(&self, spatial: &[usize]) -> Result<Vec<usize>> {
        if spatial.len() != self.rank() {
            return Err(Error::shape(
                "conv",
                format!("{} spatial dims for a rank-{} kernel", spatial.len(), self.rank()),
            ));
        }
        (0..self.rank())
            .map(|d| {
                let (pb, pa) = self.padding[d];
                let padded = spatial[d] + pb + pa;
                if padded < self.kernel[d] {
                    return Err(Error::shape(
                        "conv",
                        format!(
                            "spatial dimension {d}: extent {} + padding {} smaller than kernel {}",
                            spatial[d],
                            pb + pa,
                            self.kernel[d]
                        ),
                    ));
                }
                Ok((padded - self.kernel[d]) / self.stride[d] + 1)
            })
            .collect()
    }

    fn geometry(&self, input_shape: &[usize]) -> Result<Geom> {
        let r = self.rank();
        if input_shape.len() < r + 1 {
            return Err(Error::shape(
                "conv",
                format!("input {input_shape:?} has fewer than {} axes", r + 1),
            ));
        }
        let c_in = input_shape[input_shape.len() - 1];
        if c_in != self.in_channels {
            return Err(Error::shape(
                "conv",
                format!(
                    "channel dimension (axis {}) is {c_in}, spec expects {}",
                    input_shape.len() - 1,
                    self.in_channels
                ),
            ));
        }
        let lead = input_shape.len() - r - 1;
        let spatial = &input_shape[lead..lead + r];
        let out = self.output_extents(spatial)?;
        let mut g = Geom {
            batch: numel(&input_shape[..lead]),
            ins: [1; 3],
            outs: [1; 3],
            k: [1; 3],
            stride: [1; 3],
            pad: [0; 3],
            ci: self.in_channels,
            co: self.out_channels,
        };
        for d in 0..r {
            g.ins[d] = spatial[d];
            g.outs[d] = out[d];
            g.k[d] = self.kernel[d];
            g.stride[d] = self.stride[d];
            g.pad[d] = self.padding[d].0;
        }
        Ok(g)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let r = self.rank();
        let lead = input_shape.len() - r - 1;
        let mut shape = input_shape[..lead].to_vec();
        shape.extend(self.output_extents(&input_shape[lead..lead + r])?);
        shape.push(self.out_channels);
        Ok(shape)
    }

    fn check_params(&self, weights: &Tensor, bias: Option<&Tensor>) -> Result<()> {
        if weights.shape() != self.weight_shape().as_slice() {
            return Err(Error::shape(
                "conv",
                format!("weights {:?}, expected {:?}", weights.shape(), self.weight_shape()),
            ));
        }
        if let Some(b) = bias {
            if b.len() != self.out_channels {
                return Err(Error::shape(
                    "conv",
                    format!("bias length {} for {} output channels", b.len(), self.out_channels),
                ));
            }
        }
        Ok(())
    }
}

/// Normalized 3-D geometry; unused trailing spatial dims have extent 1.
#[derive(Clone, Copy, Debug)]
struct Geom {
    batch: usize,
    ins: [usize; 3],
    outs: [usize; 3],
    k: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    ci: usize,
    co: usize,
}

impl Geom {
    fn in_item(&self) -> usize {
        self.ins.iter().product::<usize>() * self.ci
    }

    fn out_item(&self) -> usize {
        self.outs.iter().product::<usize>() * self.co
    }

    fn positions(&self) -> usize {
        self.outs.iter().product()
    }

    /// Length of one patch row: every tap times every input channel.
    fn row(&self) -> usize {
        self.k.iter().product::<usize>() * self.ci
    }

    /// Batch items per patch matrix, bounded so one matrix stays near 32 MB.
    fn items_per_chunk(&self) -> usize {
        let by_threads = self.batch.div_ceil(rayon::current_num_threads()).max(1);
        let by_memory = (1 << 22) / (self.positions() * self.row()).max(1);
        by_threads.min(by_memory.max(1))
    }

    /// Patch matrix `[items * positions, row]`; padded taps stay zero.
    fn im2col(&self, x: &[f64], items: usize) -> Vec<f64> {
        let (p, row, ci) = (self.positions(), self.row(), self.ci);
        let mut col = vec![0.0; items * p * row];
        for (x, col) in x.chunks(self.in_item()).zip(col.chunks_mut(p * row)) {
            self.for_each_tap(|oo, io, wo| {
                let dst = (oo / self.co) * row + wo / self.co;
                col[dst..dst + ci].copy_from_slice(&x[io..io + ci]);
            });
        }
        col
    }

    /// Scatter-adds a patch-matrix gradient back onto the input.
    fn col2im(&self, dcol: &[f64], dx: &mut [f64], items: usize) {
        let (p, row, ci) = (self.positions(), self.row(), self.ci);
        for (dx, dcol) in dx.chunks_mut(self.in_item()).zip(dcol.chunks(p * row)).take(items) {
            self.for_each_tap(|oo, io, wo| {
                let src = (oo / self.co) * row + wo / self.co;
                for (d, s) in dx[io..io + ci].iter_mut().zip(&dcol[src..src + ci]) {
                    *d += s;
                }
            });
        }
    }

    /// Calls `f(out_offset, in_offset, weight_offset)` for every in-bounds tap
    /// of one batch item. Offsets point at the channel vectors.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [o0, o1, o2] = self.outs;
        let [i0, i1, i2] = self.ins;
        let [k0, k1, k2] = self.k;
        for ox in 0..o0 {
            for oy in 0..o1 {
                for oz in 0..o2 {
                    let out_off = ((ox * o1 + oy) * o2 + oz) * self.co;
                    for kx in 0..k0 {
                        let Some(ix) = tap(ox, kx, self.stride[0], self.pad[0], i0) else {
                            continue;
                        };
                        for ky in 0..k1 {
                            let Some(iy) = tap(oy, ky, self.stride[1], self.pad[1], i1) else {
                                continue;
                            };
                            for kz in 0..k2 {
                                let Some(iz) = tap(oz, kz, self.stride[2], self.pad[2], i2) else {
                                    continue;
                                };
                                let in_off = ((ix * i1 + iy) * i2 + iz) * self.ci;
                                let w_off = ((kx * k1 + ky) * k2 + kz) * self.ci * self.co;
                                f(out_off, in_off, w_off);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn tap(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let i = (o * stride + k).checked_sub(pad)?;
    (i < extent).then_some(i)
}

/// Cross-correlation over the trailing spatial axes; leading axes are batch.
pub fn conv(input: &Tensor, spec: &ConvSpec, weights: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    spec.check_params(weights, bias)?;
    let g = spec.geometry(input.shape())?;
    let out_shape = spec.output_shape(input.shape())?;
    let mut out = vec![0.0; numel(&out_shape)];
    let (x, w) = (input.data(), weights.data());
    let per = g.items_per_chunk();
    let (p, row) = (g.positions(), g.row());
    out.par_chunks_mut(per * g.out_item())
        .zip(x.par_chunks(per * g.in_item()))
        .for_each(|(out, x)| {
            let items = x.len() / g.in_item();
            if let Some(bias) = bias {
                for o in out.chunks_mut(g.co) {
                    o.copy_from_slice(bias.data());
                }
            }
            let col = g.im2col(x, items);
            gemm(items * p, row, g.co, &col, (row, 1), w, (g.co, 1), out, g.co);
        });
    Ok(Tensor::from_parts(out_shape, out))
}

/// `c[m, n] += a[m, k] * b[k, n]` with `a` and `b` addressed by (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    c: &mut [f64],
    ldc: usize,
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * sa.0 + (k - 1) * sa.1);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * sb.0 + (n - 1) * sb.1);
    debug_assert!(m == 0 || n == 0 || c.len() >= (m - 1) * ldc + n);
    // SAFETY: the asserted extents keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            1.0,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// 2-D convolution of `[.., w, h, c_in]` inputs.
pub fn conv2d(input: &Tensor, spec: &ConvSpec, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if spec.rank() != 2 {
        return Err(Error::invalid(format!("conv2d with rank-{} spec", spec.rank())));
    }
    conv(input, spec, weights, Some(bias))
}

/// 3-D convolution of `[.., w, h, s, c_in]` inputs.
pub fn conv3d(input: &Tensor, spec: &ConvSpec, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if spec.rank() != 3 {
        return Err(Error::invalid(format!("conv3d with rank-{} spec", spec.rank())));
    }
    conv(input, spec, weights, Some(bias))
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl ConvSpec {
    /// Gradients of a convolution with respect to its input, weights and bias.
    pub fn backward(&self, input: &Tensor, weights: &Tensor, grad_out: &Tensor, need_input: bool) -> Result<ConvGrads> {
        self.check_params(weights, None)?;
        let g = self.geometry(input.shape())?;
        let out_shape = self.output_shape(input.shape())?;
        if grad_out.shape() != out_shape.as_slice() {
            return Err(Error::shape(
                "conv backward",
                format!("gradient {:?} vs output {:?}", grad_out.shape(), out_shape),
            ));
        }
        let (x, w, dy) = (input.data(), weights.data(), grad_out.data());
        let per = g.items_per_chunk();
        let (p, row) = (g.positions(), g.row());
        let wlen = weights.len();
        let dw = x
            .par_chunks(per * g.in_item())
            .zip(dy.par_chunks(per * g.out_item()))
            .fold(
                || vec![0.0; wlen],
                |mut dw, (x, dy)| {
                    let items = x.len() / g.in_item();
                    let col = g.im2col(x, items);
                    gemm(row, items * p, g.co, &col, (1, row), dy, (g.co, 1), &mut dw, g.co);
                    dw
                },
            )
            .reduce(
                || vec![0.0; wlen],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        let mut dx = if need_input { vec![0.0; input.len()] } else { Vec::new() };
        dx.par_chunks_mut(per * g.in_item())
            .zip(dy.par_chunks(per * g.out_item()))
            .for_each(|(dx, dy)| {
                let items = dx.len() / g.in_item();
                let mut dcol = vec![0.0; items * p * row];
                gemm(items * p, g.co, row, dy, (g.co, 1), w, (1, g.co), &mut dcol, row);
                g.col2im(&dcol, dx, items);
            });
        let grad_input = need_input.then(|| Tensor::from_parts(input.shape().to_vec(), dx));

        let mut db = vec![0.0; g.co];
        for row in dy.chunks(g.co) {
            for (acc, &d) in db.iter_mut().zip(row) {
                *acc += d;
            }
        }
        Ok(ConvGrads {
            input: grad_input,
            weights: Tensor::from_parts(weights.shape().to_vec(), dw),
            bias: Tensor::from_parts(vec![g.co], db),
        })
    }
}
