//! Periodic 2-D convolution by `im2col` and matrix products.

use super::{matmul, Mat, Real};

/// Geometry of a channel-major activation block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub batch: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Geometry {
    pub fn plane(&self) -> usize {
        self.rows * self.cols
    }

    /// Elements per channel, `batch · rows · cols`.
    pub fn span(&self) -> usize {
        self.batch * self.plane()
    }
}

/// Unfolds `x` (`channels × span`) into `(channels · k²) × span` patches with
/// circular wrap-around. Row `c·k² + ty·k + tx` holds `x[c]` shifted by
/// `(ty - k/2, tx - k/2)`.
pub fn im2col<T: Real>(x: &[T], channels: usize, g: Geometry, k: usize, out: &mut Vec<T>) {
    let (h, w, span) = (g.rows, g.cols, g.span());
    let r = (k / 2) as isize;
    out.clear();
    out.resize(channels * k * k * span, T::zero());
    for c in 0..channels {
        let src_c = &x[c * span..(c + 1) * span];
        for ty in 0..k {
            let dy = ty as isize - r;
            for tx in 0..k {
                let dx = (tx as isize - r).rem_euclid(w as isize) as usize;
                let row = (c * k + ty) * k + tx;
                let dst = &mut out[row * span..(row + 1) * span];
                for b in 0..g.batch {
                    for i in 0..h {
                        let si = (i as isize + dy).rem_euclid(h as isize) as usize;
                        let src = &src_c[b * h * w + si * w..b * h * w + (si + 1) * w];
                        let d = &mut dst[b * h * w + i * w..b * h * w + (i + 1) * w];
                        d[..w - dx].copy_from_slice(&src[dx..]);
                        d[w - dx..].copy_from_slice(&src[..dx]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds patch gradients back onto `dx` (accumulating).
pub fn col2im<T: Real>(cols: &[T], channels: usize, g: Geometry, k: usize, dx_out: &mut [T]) {
    let (h, w, span) = (g.rows, g.cols, g.span());
    let r = (k / 2) as isize;
    for c in 0..channels {
        let dst_c = &mut dx_out[c * span..(c + 1) * span];
        for ty in 0..k {
            let dy = ty as isize - r;
            for tx in 0..k {
                let dx = (tx as isize - r).rem_euclid(w as isize) as usize;
                let row = (c * k + ty) * k + tx;
                let src = &cols[row * span..(row + 1) * span];
                for b in 0..g.batch {
                    for i in 0..h {
                        let si = (i as isize + dy).rem_euclid(h as isize) as usize;
                        let d = &mut dst_c[b * h * w + si * w..b * h * w + (si + 1) * w];
                        let s = &src[b * h * w + i * w..b * h * w + (i + 1) * w];
                        for (dj, sv) in d[dx..].iter_mut().zip(&s[..w - dx]) {
                            *dj += *sv;
                        }
                        for (dj, sv) in d[..dx].iter_mut().zip(&s[w - dx..]) {
                            *dj += *sv;
                        }
                    }
                }
            }
        }
    }
}

/// Convolution weights `[out][in][k][k]` and bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// `y = W · im2col(x) + b`, returning `out_channels × span`. The patch
    /// matrix is left in `cols`.
    pub fn forward(&self, x: &[T], g: Geometry, cols: &mut Vec<T>) -> Vec<T> {
        let span = g.span();
        im2col(x, self.in_channels, g, self.kernel, cols);
        let mut y = Vec::with_capacity(self.out_channels * span);
        for &b in &self.bias {
            y.extend(std::iter::repeat_n(b, span));
        }
        matmul(
            Mat::new(&self.weight, self.out_channels, self.fan_in()),
            Mat::new(cols, self.fan_in(), span),
            &mut y,
            T::one(),
        );
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx` when
    /// `need_input_grad` is set. `cols` must hold `im2col(x)` for this layer.
    pub fn backward(
        &self,
        dy: &[T],
        cols: &[T],
        g: Geometry,
        grad: &mut ConvLayer<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        let span = g.span();
        let fan_in = self.fan_in();
        matmul(
            Mat::new(dy, self.out_channels, span),
            Mat::new(cols, fan_in, span).t(),
            &mut grad.weight,
            T::one(),
        );
        for (co, gb) in grad.bias.iter_mut().enumerate() {
            *gb += dy[co * span..(co + 1) * span].iter().copied().sum::<T>();
        }
        if !need_input_grad {
            return None;
        }
        let mut dcols = vec![T::zero(); fan_in * span];
        matmul(
            Mat::new(&self.weight, self.out_channels, fan_in).t(),
            Mat::new(dy, self.out_channels, span),
            &mut dcols,
            T::zero(),
        );
        let mut dx = vec![T::zero(); self.in_channels * span];
        col2im(&dcols, self.in_channels, g, self.kernel, &mut dx);
        Some(dx)
    }
}
