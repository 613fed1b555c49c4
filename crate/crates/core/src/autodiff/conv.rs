//! Patch extraction (`im2col`) and its adjoint (`col2im`), which turn a 2-D
//! convolution into a matrix product.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Memory layout of a 4-D image batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    /// `[batch, channels, height, width]`
    Nchw,
    /// `[batch, height, width, channels]`
    Nhwc,
}

/// Geometry of one convolution application.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub layout: Layout,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self.layout {
            Layout::Nchw => vec![self.batch, self.channels, self.height, self.width],
            Layout::Nhwc => vec![self.batch, self.height, self.width, self.channels],
        }
    }

    /// `[batch·out_h·out_w, channels·kernel_h·kernel_w]`
    pub fn cols_shape(&self) -> Vec<usize> {
        vec![
            self.batch * self.out_h() * self.out_w(),
            self.channels * self.kernel_h * self.kernel_w,
        ]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(shape_err("conv2d", "stride and kernel must be positive"));
        }
        if self.height + 2 * self.padding < self.kernel_h
            || self.width + 2 * self.padding < self.kernel_w
        {
            return Err(shape_err(
                "conv2d",
                format!(
                    "kernel {}x{} larger than padded input {}x{}",
                    self.kernel_h,
                    self.kernel_w,
                    self.height + 2 * self.padding,
                    self.width + 2 * self.padding
                ),
            ));
        }
        Ok(())
    }

    #[inline]
    fn input_index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        match self.layout {
            Layout::Nchw => ((b * self.channels + c) * self.height + y) * self.width + x,
            Layout::Nhwc => ((b * self.height + y) * self.width + x) * self.channels + c,
        }
    }

    /// Visits every (column-matrix index, input index) pair that lies inside
    /// the unpadded input.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (oh, ow) = (self.out_h(), self.out_w());
        let ncols = self.channels * self.kernel_h * self.kernel_w;
        let pad = self.padding as isize;
        for b in 0..self.batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (b * oh + oy) * ow + ox;
                    for c in 0..self.channels {
                        for i in 0..self.kernel_h {
                            let y = (oy * self.stride + i) as isize - pad;
                            if y < 0 || y >= self.height as isize {
                                continue;
                            }
                            for j in 0..self.kernel_w {
                                let x = (ox * self.stride + j) as isize - pad;
                                if x < 0 || x >= self.width as isize {
                                    continue;
                                }
                                let col = (c * self.kernel_h + i) * self.kernel_w + j;
                                f(
                                    row * ncols + col,
                                    self.input_index(b, c, y as usize, x as usize),
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn im2col<T: Scalar>(x: &Tensor<T>, g: &ConvGeometry) -> Result<Tensor<T>> {
    g.validate()?;
    if x.shape() != g.input_shape().as_slice() {
        return Err(shape_err(
            "im2col",
            format!("input {:?} does not match geometry {:?}", x.shape(), g.input_shape()),
        ));
    }
    let shape = g.cols_shape();
    let mut out = vec![T::zero(); shape[0] * shape[1]];
    let src = x.data();
    g.for_each_tap(|ci, xi| out[ci] = src[xi]);
    Tensor::new(shape, out)
}

pub(crate) fn col2im<T: Scalar>(cols: &Tensor<T>, g: &ConvGeometry) -> Result<Tensor<T>> {
    g.validate()?;
    if cols.shape() != g.cols_shape().as_slice() {
        return Err(shape_err(
            "col2im",
            format!("columns {:?} do not match geometry {:?}", cols.shape(), g.cols_shape()),
        ));
    }
    let shape = g.input_shape();
    let mut out = vec![T::zero(); shape.iter().product()];
    let src = cols.data();
    g.for_each_tap(|ci, xi| out[xi] = out[xi] + src[ci]);
    Tensor::new(shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(layout: Layout, stride: usize, padding: usize) -> ConvGeometry {
        ConvGeometry {
            batch: 2,
            channels: 2,
            height: 4,
            width: 5,
            kernel_h: 3,
            kernel_w: 2,
            stride,
            padding,
            layout,
        }
    }

    #[test]
    fn output_dims() {
        let g = geom(Layout::Nchw, 1, 0);
        assert_eq!((g.out_h(), g.out_w()), (2, 4));
        let g = geom(Layout::Nchw, 2, 1);
        assert_eq!((g.out_h(), g.out_w()), (2, 3));
    }

    // <im2col(x), c> == <x, col2im(c)> for arbitrary x, c.
    #[test]
    fn col2im_is_adjoint_of_im2col() {
        for layout in [Layout::Nchw, Layout::Nhwc] {
            for (s, p) in [(1, 0), (2, 1), (1, 1)] {
                let g = geom(layout, s, p);
                let n: usize = g.input_shape().iter().product();
                let x = Tensor::new(
                    g.input_shape(),
                    (0..n).map(|i| ((i * 37 % 11) as f64) - 5.0).collect(),
                )
                .unwrap();
                let cs = g.cols_shape();
                let c = Tensor::new(
                    cs.clone(),
                    (0..cs[0] * cs[1]).map(|i| ((i * 13 % 7) as f64) - 3.0).collect(),
                )
                .unwrap();
                let lhs: f64 = im2col(&x, &g)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(c.data())
                    .map(|(a, b)| a * b)
                    .sum();
                let rhs: f64 = x
                    .data()
                    .iter()
                    .zip(col2im(&c, &g).unwrap().data())
                    .map(|(a, b)| a * b)
                    .sum();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let g = geom(Layout::Nchw, 1, 0);
        let x = Tensor::<f64>::zeros(&[2, 2, 4, 4]);
        assert!(im2col(&x, &g).is_err());
    }
}
