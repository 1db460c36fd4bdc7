//! Raw loops behind the dense primitives. Shapes are validated by the caller.

/// Geometry of a 2-D cross-correlation over a `[channels, height, width]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Output positions `o` with `0 <= o * stride + k - pad < extent`; `(0, 0)`
    /// when there are none, which callers must skip before indexing.
    #[inline]
    fn valid_range(&self, k: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let offset = k as isize - self.pad as isize;
        // smallest o with o*s + offset >= 0
        let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
        // largest o with o*s + offset <= extent - 1
        let hi_num = extent as isize - 1 - offset;
        let hi = if hi_num < 0 { -1 } else { hi_num / s };
        let hi = hi.min(out_extent as isize - 1);
        if hi < lo {
            (0, 0)
        } else {
            (lo as usize, hi as usize + 1)
        }
    }
}

/// Cross-correlation with zero padding: `out[o, y, x] = b[o] + sum w[o, c, ky, kx] * in[c, y*s+ky-p, x*s+kx-p]`.
pub fn conv2d_forward(g: &ConvGeometry, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (oh, ow) = (g.out_height(), g.out_width());
    let k = g.kernel;
    let mut out = vec![0.0; g.out_channels * oh * ow];
    for o in 0..g.out_channels {
        let out_plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        out_plane.fill(bias[o]);
        for c in 0..g.in_channels {
            let in_plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
            for ky in 0..k {
                let (y0, y1) = g.valid_range(ky, g.height, oh);
                if y0 == y1 {
                    continue;
                }
                for kx in 0..k {
                    let w = weight[((o * g.in_channels + c) * k + ky) * k + kx];
                    let (x0, x1) = g.valid_range(kx, g.width, ow);
                    if x0 == x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let iy = y * g.stride + ky - g.pad;
                        let row = &in_plane[iy * g.width..(iy + 1) * g.width];
                        let orow = &mut out_plane[y * ow..(y + 1) * ow];
                        let mut ix = x0 * g.stride + kx - g.pad;
                        for ov in &mut orow[x0..x1] {
                            *ov += w * row[ix];
                            ix += g.stride;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d_forward`] given the upstream gradient. Any of the
/// output slices may be skipped by passing `None`.
pub fn conv2d_backward(
    g: &ConvGeometry,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    mut grad_input: Option<&mut [f64]>,
    mut grad_weight: Option<&mut [f64]>,
    mut grad_bias: Option<&mut [f64]>,
) {
    let (oh, ow) = (g.out_height(), g.out_width());
    let k = g.kernel;
    for o in 0..g.out_channels {
        let gplane = &grad_out[o * oh * ow..(o + 1) * oh * ow];
        if let Some(gb) = grad_bias.as_deref_mut() {
            gb[o] += gplane.iter().sum::<f64>();
        }
        for c in 0..g.in_channels {
            let base = c * g.height * g.width;
            for ky in 0..k {
                let (y0, y1) = g.valid_range(ky, g.height, oh);
                if y0 == y1 {
                    continue;
                }
                for kx in 0..k {
                    let widx = ((o * g.in_channels + c) * k + ky) * k + kx;
                    let w = weight[widx];
                    let (x0, x1) = g.valid_range(kx, g.width, ow);
                    if x0 == x1 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let iy = y * g.stride + ky - g.pad;
                        let row_start = base + iy * g.width;
                        let grow = &gplane[y * ow..(y + 1) * ow];
                        let mut ix = x0 * g.stride + kx - g.pad;
                        match grad_input.as_deref_mut() {
                            Some(gi) => {
                                for &gv in &grow[x0..x1] {
                                    acc += gv * input[row_start + ix];
                                    gi[row_start + ix] += gv * w;
                                    ix += g.stride;
                                }
                            }
                            None => {
                                for &gv in &grow[x0..x1] {
                                    acc += gv * input[row_start + ix];
                                    ix += g.stride;
                                }
                            }
                        }
                    }
                    if let Some(gw) = grad_weight.as_deref_mut() {
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
}

/// `out[i] = b[i] + sum_j w[i, j] * x[j]` with `w` stored `[out, in]`.
pub fn dense_forward(x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(i, &b)| {
            let row = &weight[i * n_in..(i + 1) * n_in];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeometry, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let (oh, ow) = (g.out_height(), g.out_width());
        let mut out = vec![0.0; g.out_channels * oh * ow];
        for o in 0..g.out_channels {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b[o];
                    for c in 0..g.in_channels {
                        for ky in 0..g.kernel {
                            for kx in 0..g.kernel {
                                let iy = (y * g.stride + ky) as isize - g.pad as isize;
                                let ix = (xo * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.height as isize || ix >= g.width as isize {
                                    continue;
                                }
                                acc += w[((o * g.in_channels + c) * g.kernel + ky) * g.kernel + kx]
                                    * x[(c * g.height + iy as usize) * g.width + ix as usize];
                            }
                        }
                    }
                    out[(o * oh + y) * ow + xo] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_loops() {
        for &(h, w, k, s, p) in &[(7, 5, 3, 2, 1), (8, 8, 3, 1, 0), (6, 9, 1, 1, 0), (5, 5, 3, 3, 2)] {
            let g = ConvGeometry {
                in_channels: 2,
                out_channels: 3,
                height: h,
                width: w,
                kernel: k,
                stride: s,
                pad: p,
            };
            let x: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
            let wt: Vec<f64> = (0..3 * 2 * k * k).map(|i| (i as f64 * 0.91).cos()).collect();
            let b = vec![0.1, -0.2, 0.3];
            let fast = conv2d_forward(&g, &x, &wt, &b);
            let slow = naive_conv(&g, &x, &wt, &b);
            assert_eq!(fast.len(), slow.len());
            for (a, e) in fast.iter().zip(&slow) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }
}
