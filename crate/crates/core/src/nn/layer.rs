use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::conv::ConvGeometry;
use super::spec::{LayerSpec, Padding};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Instantiated layer: spec, resolved per-sample shapes and parameters.
#[derive(Debug, Clone)]
pub(crate) struct Layer<T> {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub geom: Option<ConvGeometry>,
    /// `[weight, bias]` for conv/dense layers, empty otherwise.
    pub params: Vec<Tensor<T>>,
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Debug)]
pub(crate) enum Cache<T> {
    None,
    Cols(Vec<T>),
    Input(Vec<T>),
    Argmax(Vec<usize>),
    Mask(Vec<T>),
    Output(Vec<T>),
}

fn he_uniform<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.gen_range(-limit..limit)))
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec, in_shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Self, String> {
        let out_shape = spec.output_shape(in_shape)?;
        let (geom, params) = match &spec {
            LayerSpec::Conv2D { filters, kernel, stride, padding } => {
                let g = ConvGeometry::new([in_shape[0], in_shape[1], in_shape[2]], *kernel, *stride, *padding)
                    .ok_or("kernel does not fit input")?;
                let w = he_uniform(vec![*kernel, *kernel, in_shape[2], *filters], g.patch_len(), rng);
                (Some(g), vec![w, Tensor::zeros(vec![*filters])])
            }
            LayerSpec::TransposedConv2D { filters, kernel, stride, padding } => {
                let g = transposed_geometry(in_shape, &out_shape, *kernel, *stride, *padding)?;
                let in_c = in_shape[2];
                let w = he_uniform(vec![*kernel, *kernel, *filters, in_c], kernel * kernel * in_c, rng);
                (Some(g), vec![w, Tensor::zeros(vec![*filters])])
            }
            LayerSpec::Dense { units } => {
                let w = he_uniform(vec![in_shape[0], *units], in_shape[0], rng);
                (None, vec![w, Tensor::zeros(vec![*units])])
            }
            _ => (None, Vec::new()),
        };
        Ok(Self { spec, in_shape: in_shape.to_vec(), out_shape, geom, params })
    }

    pub fn in_len(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }

    /// Forward pass over a flat batch. `rng` is `Some` in train mode.
    pub fn forward(&self, x: &[T], batch: usize, rng: Option<&mut ChaCha8Rng>, keep: bool) -> (Vec<T>, Cache<T>) {
        match &self.spec {
            LayerSpec::Conv2D { filters, .. } => {
                let g = self.geom.as_ref().expect("conv geometry");
                let cols = g.im2col(x, batch);
                let m = batch * g.out_positions();
                let (w, b) = (&self.params[0], &self.params[1]);
                let mut out = broadcast_rows(b.data(), m);
                let k = g.patch_len();
                T::gemm(
                    m,
                    k,
                    *filters,
                    T::one(),
                    &cols,
                    (k as isize, 1),
                    w.data(),
                    (*filters as isize, 1),
                    T::one(),
                    &mut out,
                    (*filters as isize, 1),
                );
                (out, if keep { Cache::Cols(cols) } else { Cache::None })
            }
            LayerSpec::TransposedConv2D { filters, .. } => {
                let g = self.geom.as_ref().expect("transposed conv geometry");
                let in_c = self.in_shape[2];
                let m = batch * g.out_positions();
                let p = g.patch_len();
                let mut cols = vec![T::zero(); m * p];
                T::gemm(
                    m,
                    in_c,
                    p,
                    T::one(),
                    x,
                    (in_c as isize, 1),
                    self.params[0].data(),
                    (1, in_c as isize),
                    T::zero(),
                    &mut cols,
                    (p as isize, 1),
                );
                let mut out = g.col2im(&cols, batch);
                let bias = self.params[1].data();
                for px in out.chunks_exact_mut(*filters) {
                    for (v, &b) in px.iter_mut().zip(bias) {
                        *v += b;
                    }
                }
                (out, if keep { Cache::Input(x.to_vec()) } else { Cache::None })
            }
            LayerSpec::Dense { units } => {
                let n_in = self.in_shape[0];
                let mut out = broadcast_rows(self.params[1].data(), batch);
                T::gemm(
                    batch,
                    n_in,
                    *units,
                    T::one(),
                    x,
                    (n_in as isize, 1),
                    self.params[0].data(),
                    (*units as isize, 1),
                    T::one(),
                    &mut out,
                    (*units as isize, 1),
                );
                (out, if keep { Cache::Input(x.to_vec()) } else { Cache::None })
            }
            LayerSpec::MaxPool2D { size, stride } => {
                let (out, argmax) = self.max_pool(x, batch, *size, *stride);
                (out, if keep { Cache::Argmax(argmax) } else { Cache::None })
            }
            LayerSpec::Flatten | LayerSpec::Reshape { .. } => (x.to_vec(), Cache::None),
            LayerSpec::Dropout { rate } => match rng {
                Some(rng) if *rate > 0.0 => {
                    let keep_scale = T::from_f64_lossy(1.0 / (1.0 - rate));
                    let mask: Vec<T> =
                        (0..x.len()).map(|_| if rng.gen::<f64>() < *rate { T::zero() } else { keep_scale }).collect();
                    let out = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    (out, if keep { Cache::Mask(mask) } else { Cache::None })
                }
                _ => (x.to_vec(), Cache::None),
            },
            LayerSpec::ReLU => {
                let out: Vec<T> = x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
                let cache = if keep { Cache::Output(out.clone()) } else { Cache::None };
                (out, cache)
            }
            LayerSpec::Sigmoid => {
                let out: Vec<T> = x.iter().map(|&v| sigmoid(v)).collect();
                let cache = if keep { Cache::Output(out.clone()) } else { Cache::None };
                (out, cache)
            }
            LayerSpec::Softmax => {
                let mut out = x.to_vec();
                for row in out.chunks_exact_mut(self.out_len()) {
                    softmax_in_place(row);
                }
                let cache = if keep { Cache::Output(out.clone()) } else { Cache::None };
                (out, cache)
            }
        }
    }

    /// Returns the input gradient (when `need_input`) and one gradient per parameter.
    pub fn backward(
        &self,
        cache: &Cache<T>,
        grad_out: &[T],
        batch: usize,
        need_input: bool,
    ) -> (Option<Vec<T>>, Vec<Vec<T>>) {
        match (&self.spec, cache) {
            (LayerSpec::Conv2D { filters, .. }, Cache::Cols(cols)) => {
                let g = self.geom.as_ref().expect("conv geometry");
                let f = *filters;
                let m = batch * g.out_positions();
                let p = g.patch_len();
                let mut dw = vec![T::zero(); p * f];
                T::gemm(
                    p,
                    m,
                    f,
                    T::one(),
                    cols,
                    (1, p as isize),
                    grad_out,
                    (f as isize, 1),
                    T::zero(),
                    &mut dw,
                    (f as isize, 1),
                );
                let db = column_sums(grad_out, f);
                let dx = need_input.then(|| {
                    let mut dcols = vec![T::zero(); m * p];
                    T::gemm(
                        m,
                        f,
                        p,
                        T::one(),
                        grad_out,
                        (f as isize, 1),
                        self.params[0].data(),
                        (1, f as isize),
                        T::zero(),
                        &mut dcols,
                        (p as isize, 1),
                    );
                    g.col2im(&dcols, batch)
                });
                (dx, vec![dw, db])
            }
            (LayerSpec::TransposedConv2D { filters, .. }, Cache::Input(x)) => {
                let g = self.geom.as_ref().expect("transposed conv geometry");
                let in_c = self.in_shape[2];
                let m = batch * g.out_positions();
                let p = g.patch_len();
                let cols = g.im2col(grad_out, batch);
                let mut dw = vec![T::zero(); p * in_c];
                T::gemm(
                    p,
                    m,
                    in_c,
                    T::one(),
                    &cols,
                    (1, p as isize),
                    x,
                    (in_c as isize, 1),
                    T::zero(),
                    &mut dw,
                    (in_c as isize, 1),
                );
                let db = column_sums(grad_out, *filters);
                let dx = need_input.then(|| {
                    let mut dx = vec![T::zero(); m * in_c];
                    T::gemm(
                        m,
                        p,
                        in_c,
                        T::one(),
                        &cols,
                        (p as isize, 1),
                        self.params[0].data(),
                        (in_c as isize, 1),
                        T::zero(),
                        &mut dx,
                        (in_c as isize, 1),
                    );
                    dx
                });
                (dx, vec![dw, db])
            }
            (LayerSpec::Dense { units }, Cache::Input(x)) => {
                let n_in = self.in_shape[0];
                let u = *units;
                let mut dw = vec![T::zero(); n_in * u];
                T::gemm(
                    n_in,
                    batch,
                    u,
                    T::one(),
                    x,
                    (1, n_in as isize),
                    grad_out,
                    (u as isize, 1),
                    T::zero(),
                    &mut dw,
                    (u as isize, 1),
                );
                let db = column_sums(grad_out, u);
                let dx = need_input.then(|| {
                    let mut dx = vec![T::zero(); batch * n_in];
                    T::gemm(
                        batch,
                        u,
                        n_in,
                        T::one(),
                        grad_out,
                        (u as isize, 1),
                        self.params[0].data(),
                        (1, u as isize),
                        T::zero(),
                        &mut dx,
                        (n_in as isize, 1),
                    );
                    dx
                });
                (dx, vec![dw, db])
            }
            (LayerSpec::MaxPool2D { .. }, Cache::Argmax(argmax)) => {
                let dx = need_input.then(|| {
                    let mut dx = vec![T::zero(); batch * self.in_len()];
                    for (&src, &g) in argmax.iter().zip(grad_out) {
                        dx[src] += g;
                    }
                    dx
                });
                (dx, Vec::new())
            }
            (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
                (need_input.then(|| grad_out.iter().zip(mask).map(|(&g, &m)| g * m).collect()), Vec::new())
            }
            (LayerSpec::ReLU, Cache::Output(y)) => (
                need_input.then(|| {
                    grad_out.iter().zip(y).map(|(&g, &y)| if y > T::zero() { g } else { T::zero() }).collect()
                }),
                Vec::new(),
            ),
            (LayerSpec::Sigmoid, Cache::Output(y)) => (
                need_input.then(|| grad_out.iter().zip(y).map(|(&g, &y)| g * y * (T::one() - y)).collect()),
                Vec::new(),
            ),
            (LayerSpec::Softmax, Cache::Output(y)) => {
                let n = self.out_len();
                let dx = need_input.then(|| {
                    let mut dx = Vec::with_capacity(y.len());
                    for (yr, gr) in y.chunks_exact(n).zip(grad_out.chunks_exact(n)) {
                        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        dx.extend(yr.iter().zip(gr).map(|(&a, &b)| a * (b - dot)));
                    }
                    dx
                });
                (dx, Vec::new())
            }
            // shape-only layers and inference-mode dropout pass gradients through
            (LayerSpec::Flatten | LayerSpec::Reshape { .. } | LayerSpec::Dropout { .. }, Cache::None) => {
                (need_input.then(|| grad_out.to_vec()), Vec::new())
            }
            (spec, _) => unreachable!("backward through {:?} without its forward cache", spec.kind()),
        }
    }

    fn max_pool(&self, x: &[T], batch: usize, size: usize, stride: usize) -> (Vec<T>, Vec<usize>) {
        let [h, w, c] = [self.in_shape[0], self.in_shape[1], self.in_shape[2]];
        let [oh, ow] = [self.out_shape[0], self.out_shape[1]];
        let mut out = vec![T::zero(); batch * oh * ow * c];
        let mut argmax = vec![0usize; out.len()];
        for b in 0..batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let dst = ((b * oh + oy) * ow + ox) * c;
                    let (best_v, best_i) = (&mut out[dst..dst + c], &mut argmax[dst..dst + c]);
                    // channels are contiguous, so each window tap is one slice comparison
                    for ky in 0..size {
                        for kx in 0..size {
                            let src = ((b * h + oy * stride + ky) * w + ox * stride + kx) * c;
                            let tap = &x[src..src + c];
                            for ch in 0..c {
                                if (ky == 0 && kx == 0) || tap[ch] > best_v[ch] {
                                    best_v[ch] = tap[ch];
                                    best_i[ch] = src + ch;
                                }
                            }
                        }
                    }
                }
            }
        }
        (out, argmax)
    }
}

fn transposed_geometry(
    in_shape: &[usize],
    out_shape: &[usize],
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<ConvGeometry, String> {
    // the adjoint convolution maps the output grid back onto the input grid
    let g = ConvGeometry::new([out_shape[0], out_shape[1], out_shape[2]], kernel, stride, padding)
        .ok_or("kernel does not fit output")?;
    if g.out_h != in_shape[0] || g.out_w != in_shape[1] {
        return Err(format!("transposed conv geometry mismatch for input {in_shape:?}"));
    }
    Ok(g)
}

fn broadcast_rows<T: Scalar>(row: &[T], rows: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * row.len());
    for _ in 0..rows {
        out.extend_from_slice(row);
    }
    out
}

fn column_sums<T: Scalar>(m: &[T], cols: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); cols];
    for row in m.chunks_exact(cols) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
