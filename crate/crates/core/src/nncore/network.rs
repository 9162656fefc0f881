use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::layer::{same_pad, LayerSpec, NetworkSpec, Padding};
use super::tensor::Tensor;

/// Layer stack with instantiated parameters. Operates on single samples;
/// batching is done by the callers (mapping samples, summing gradients in a
/// fixed order).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    /// One Vec per layer: `[weights, bias]` for dense/conv, empty otherwise.
    params: Vec<Vec<Tensor>>,
}

/// Forward execution mode. Training mode draws dropout masks from the rng;
/// evaluation treats dropout as identity.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Per-layer activations (plus input) and dropout masks from one forward
/// pass, consumed by `backward`.
pub struct Trace {
    pub activations: Vec<Tensor>,
    masks: Vec<Option<Vec<f64>>>,
}

impl Trace {
    /// Network output.
    pub fn output(&self) -> &Tensor {
        self.activations.last().unwrap()
    }
}

/// Parameter gradients, aligned with `Network::params`.
#[derive(Debug, Clone)]
pub struct Gradients(pub Vec<Vec<Tensor>>);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Gradients {
        Gradients(
            net.params
                .iter()
                .map(|ts| ts.iter().map(|t| Tensor::zeros(t.shape.clone())).collect())
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                x.add_assign(y);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for ts in &mut self.0 {
            for t in ts {
                t.scale(factor);
            }
        }
    }
}

impl Network {
    /// Validate the spec and initialize parameters: weights uniform in
    /// `+-sqrt(6 / (fan_in + fan_out))` from a seeded generator, biases zero.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Network> {
        spec.shape_chain()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            params.push(match layer {
                LayerSpec::Dense { input, output } => {
                    let bound = (6.0 / (input + output) as f64).sqrt();
                    let w: Vec<f64> =
                        (0..input * output).map(|_| rng.gen_range(-bound..bound)).collect();
                    vec![
                        Tensor::new(vec![*output, *input], w)?,
                        Tensor::zeros(vec![*output]),
                    ]
                }
                LayerSpec::Conv2d { in_ch, out_ch, kernel, .. } => {
                    let fan_in = in_ch * kernel * kernel;
                    let fan_out = out_ch * kernel * kernel;
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let k: Vec<f64> = (0..out_ch * in_ch * kernel * kernel)
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect();
                    vec![
                        Tensor::new(vec![*out_ch, *in_ch, *kernel, *kernel], k)?,
                        Tensor::zeros(vec![*out_ch]),
                    ]
                }
                _ => Vec::new(),
            });
        }
        Ok(Network { spec, params })
    }

    pub fn from_parts(spec: NetworkSpec, params: Vec<Vec<Tensor>>) -> Result<Network> {
        let chain = spec.shape_chain()?;
        if params.len() != spec.layers.len() {
            return Err(Error::Dimension("params do not align with layers".into()));
        }
        let net = Network { spec, params };
        drop(chain);
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flat_map(|ts| ts.iter().map(Tensor::numel)).sum()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.spec.output_shape().expect("validated at init")
    }

    /// Run the stack, recording every intermediate activation.
    pub fn forward(&self, input: &Tensor, mode: &mut Mode) -> Result<Trace> {
        if input.shape != self.spec.input_shape {
            return Err(Error::Dimension(format!(
                "input shape {:?}, network expects {:?}",
                input.shape, self.spec.input_shape
            )));
        }
        let mut activations = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut masks = Vec::with_capacity(self.spec.layers.len());
        activations.push(input.clone());
        for (layer, params) in self.spec.layers.iter().zip(&self.params) {
            let x = activations.last().unwrap();
            let (y, mask) = apply_layer(layer, params, x, mode)?;
            activations.push(y);
            masks.push(mask);
        }
        Ok(Trace { activations, masks })
    }

    /// Convenience: forward in eval mode, returning only the output.
    pub fn eval(&self, input: &Tensor) -> Result<Tensor> {
        let trace = self.forward(input, &mut Mode::Eval)?;
        Ok(trace.activations.into_iter().next_back().unwrap())
    }

    /// Reverse pass. Returns parameter gradients and the gradient with
    /// respect to the network input.
    pub fn backward(&self, trace: &Trace, grad_output: &Tensor) -> Result<(Gradients, Tensor)> {
        if trace.activations.len() != self.spec.layers.len() + 1 {
            return Err(Error::Dimension("trace does not match network depth".into()));
        }
        if grad_output.shape != trace.output().shape {
            return Err(Error::Dimension(format!(
                "loss gradient shape {:?} vs output {:?}",
                grad_output.shape,
                trace.output().shape
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut g = grad_output.clone();
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let x = &trace.activations[i];
            let y = &trace.activations[i + 1];
            g = backward_layer(layer, &self.params[i], x, y, &g, &trace.masks[i], &mut grads.0[i])?;
        }
        Ok((grads, g))
    }
}

fn apply_layer(
    layer: &LayerSpec,
    params: &[Tensor],
    x: &Tensor,
    mode: &mut Mode,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    let y = match layer {
        LayerSpec::Dense { input, output } => {
            if x.shape != [*input] {
                return Err(Error::Dimension(format!(
                    "dense expects [{input}], got {:?}",
                    x.shape
                )));
            }
            let w = &params[0];
            let b = &params[1];
            let mut out = vec![0.0; *output];
            for (o, out_v) in out.iter_mut().enumerate() {
                let row = &w.data[o * input..(o + 1) * input];
                let mut acc = b.data[o];
                for (wv, xv) in row.iter().zip(&x.data) {
                    acc += wv * xv;
                }
                *out_v = acc;
            }
            Tensor { shape: vec![*output], data: out }
        }
        LayerSpec::Conv2d { stride, padding, kernel, .. } => {
            conv2d_forward(params, x, *kernel, *stride, *padding)?
        }
        LayerSpec::MaxPool2 => {
            let [c, h, w] = x.shape[..] else {
                return Err(Error::Dimension("maxpool expects [c,h,w]".into()));
            };
            let (oh, ow) = (h / 2, w / 2);
            let mut out = vec![0.0; c * oh * ow];
            for ch in 0..c {
                let plane = &x.data[ch * h * w..(ch + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let (iy, ix) = (oy * 2, ox * 2);
                        let m = plane[iy * w + ix]
                            .max(plane[iy * w + ix + 1])
                            .max(plane[(iy + 1) * w + ix])
                            .max(plane[(iy + 1) * w + ix + 1]);
                        out[(ch * oh + oy) * ow + ox] = m;
                    }
                }
            }
            Tensor { shape: vec![c, oh, ow], data: out }
        }
        LayerSpec::UpsampleNearest2 => {
            let [c, h, w] = x.shape[..] else {
                return Err(Error::Dimension("upsample expects [c,h,w]".into()));
            };
            let (oh, ow) = (h * 2, w * 2);
            let mut out = vec![0.0; c * oh * ow];
            for ch in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        let v = x.data[(ch * h + y) * w + xx];
                        let base = (ch * oh + y * 2) * ow + xx * 2;
                        out[base] = v;
                        out[base + 1] = v;
                        out[base + ow] = v;
                        out[base + ow + 1] = v;
                    }
                }
            }
            Tensor { shape: vec![c, oh, ow], data: out }
        }
        LayerSpec::Sigmoid => Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|&v| sigmoid(v)).collect(),
        },
        LayerSpec::Relu => Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        },
        LayerSpec::Softmax => {
            let max = x.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = x.data.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            Tensor { shape: x.shape.clone(), data: exps.iter().map(|&e| e / sum).collect() }
        }
        LayerSpec::Flatten => Tensor { shape: vec![x.numel()], data: x.data.clone() },
        LayerSpec::Reshape { shape } => x.reshaped(shape.clone())?,
        LayerSpec::Dropout { rate } => {
            return Ok(match mode {
                Mode::Eval => (x.clone(), None),
                Mode::Train(rng) => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = x
                        .data
                        .iter()
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let data = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
                    (Tensor { shape: x.shape.clone(), data }, Some(mask))
                }
            });
        }
    };
    Ok((y, None))
}

fn backward_layer(
    layer: &LayerSpec,
    params: &[Tensor],
    x: &Tensor,
    y: &Tensor,
    g: &Tensor,
    mask: &Option<Vec<f64>>,
    param_grads: &mut [Tensor],
) -> Result<Tensor> {
    Ok(match layer {
        LayerSpec::Dense { input, output } => {
            let w = &params[0];
            let gw = &mut param_grads[0];
            for o in 0..*output {
                let go = g.data[o];
                let row = &mut gw.data[o * input..(o + 1) * input];
                for (gv, xv) in row.iter_mut().zip(&x.data) {
                    *gv += go * xv;
                }
            }
            param_grads[1].data.iter_mut().zip(&g.data).for_each(|(b, gv)| *b += gv);
            let mut gx = vec![0.0; *input];
            for o in 0..*output {
                let go = g.data[o];
                let row = &w.data[o * input..(o + 1) * input];
                for (gxv, wv) in gx.iter_mut().zip(row) {
                    *gxv += go * wv;
                }
            }
            Tensor { shape: vec![*input], data: gx }
        }
        LayerSpec::Conv2d { stride, padding, kernel, .. } => {
            conv2d_backward(params, x, g, *kernel, *stride, *padding, param_grads)?
        }
        LayerSpec::MaxPool2 => {
            let [c, h, w] = x.shape[..] else { unreachable!() };
            let (oh, ow) = (h / 2, w / 2);
            let mut gx = vec![0.0; x.numel()];
            for ch in 0..c {
                let plane = &x.data[ch * h * w..(ch + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let (iy, ix) = (oy * 2, ox * 2);
                        // first maximum in scan order receives the gradient
                        let mut best = (iy, ix);
                        let mut best_v = plane[iy * w + ix];
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let v = plane[(iy + dy) * w + ix + dx];
                            if v > best_v {
                                best_v = v;
                                best = (iy + dy, ix + dx);
                            }
                        }
                        gx[ch * h * w + best.0 * w + best.1] += g.data[(ch * oh + oy) * ow + ox];
                    }
                }
            }
            Tensor { shape: x.shape.clone(), data: gx }
        }
        LayerSpec::UpsampleNearest2 => {
            let [c, h, w] = x.shape[..] else { unreachable!() };
            let (oh, ow) = (h * 2, w * 2);
            let mut gx = vec![0.0; x.numel()];
            for ch in 0..c {
                for y_ in 0..h {
                    for xx in 0..w {
                        let base = (ch * oh + y_ * 2) * ow + xx * 2;
                        gx[(ch * h + y_) * w + xx] =
                            g.data[base] + g.data[base + 1] + g.data[base + ow] + g.data[base + ow + 1];
                    }
                }
            }
            Tensor { shape: x.shape.clone(), data: gx }
        }
        LayerSpec::Sigmoid => Tensor {
            shape: x.shape.clone(),
            data: g.data.iter().zip(&y.data).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect(),
        },
        LayerSpec::Relu => Tensor {
            shape: x.shape.clone(),
            data: g
                .data
                .iter()
                .zip(&x.data)
                .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                .collect(),
        },
        LayerSpec::Softmax => {
            let dot: f64 = g.data.iter().zip(&y.data).map(|(gv, yv)| gv * yv).sum();
            Tensor {
                shape: x.shape.clone(),
                data: g.data.iter().zip(&y.data).map(|(gv, yv)| yv * (gv - dot)).collect(),
            }
        }
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
            Tensor { shape: x.shape.clone(), data: g.data.clone() }
        }
        LayerSpec::Dropout { .. } => match mask {
            None => g.clone(),
            Some(m) => Tensor {
                shape: x.shape.clone(),
                data: g.data.iter().zip(m).map(|(gv, mv)| gv * mv).collect(),
            },
        },
    })
}

fn conv2d_forward(
    params: &[Tensor],
    x: &Tensor,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let k = &params[0];
    let b = &params[1];
    let [in_ch, h, w] = x.shape[..] else {
        return Err(Error::Dimension("conv expects [c,h,w]".into()));
    };
    let out_ch = k.shape[0];
    if k.shape[1] != in_ch {
        return Err(Error::Dimension(format!(
            "conv kernel expects {} input channels, got {in_ch}",
            k.shape[1]
        )));
    }
    let (oh, ow, pt, pl) = conv_geometry(h, w, kernel, stride, padding)?;
    let mut out = vec![0.0; out_ch * oh * ow];
    for oc in 0..out_ch {
        let out_plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        out_plane.fill(b.data[oc]);
        for ic in 0..in_ch {
            let in_plane = &x.data[ic * h * w..(ic + 1) * h * w];
            let kbase = (oc * in_ch + ic) * kernel * kernel;
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let kv = k.data[kbase + ky * kernel + kx];
                    if kv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pt as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        let row = &in_plane[iy as usize * w..(iy as usize + 1) * w];
                        let orow = &mut out_plane[oy * ow..(oy + 1) * ow];
                        for (ox, ov) in orow.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if ix >= 0 && (ix as usize) < w {
                                *ov += kv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor { shape: vec![out_ch, oh, ow], data: out })
}

fn conv2d_backward(
    params: &[Tensor],
    x: &Tensor,
    g: &Tensor,
    kernel: usize,
    stride: usize,
    padding: Padding,
    param_grads: &mut [Tensor],
) -> Result<Tensor> {
    let k = &params[0];
    let [in_ch, h, w] = x.shape[..] else { unreachable!() };
    let out_ch = k.shape[0];
    let (oh, ow, pt, pl) = conv_geometry(h, w, kernel, stride, padding)?;
    let mut gx = vec![0.0; x.numel()];
    let (gk, gb) = param_grads.split_at_mut(1);
    let gk = &mut gk[0];
    let gb = &mut gb[0];
    for oc in 0..out_ch {
        let g_plane = &g.data[oc * oh * ow..(oc + 1) * oh * ow];
        gb.data[oc] += g_plane.iter().sum::<f64>();
        for ic in 0..in_ch {
            let in_plane = &x.data[ic * h * w..(ic + 1) * h * w];
            let gx_plane = &mut gx[ic * h * w..(ic + 1) * h * w];
            let kbase = (oc * in_ch + ic) * kernel * kernel;
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let kv = k.data[kbase + ky * kernel + kx];
                    let mut kg = 0.0;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pt as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        let row = &in_plane[iy as usize * w..(iy as usize + 1) * w];
                        let gx_row = &mut gx_plane[iy as usize * w..(iy as usize + 1) * w];
                        let grow = &g_plane[oy * ow..(oy + 1) * ow];
                        for (ox, gv) in grow.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if ix >= 0 && (ix as usize) < w {
                                kg += gv * row[ix as usize];
                                gx_row[ix as usize] += gv * kv;
                            }
                        }
                    }
                    gk.data[kbase + ky * kernel + kx] += kg;
                }
            }
        }
    }
    Ok(Tensor { shape: x.shape.clone(), data: gx })
}

fn conv_geometry(
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize, usize, usize)> {
    match padding {
        Padding::Same => Ok((
            h.div_ceil(stride),
            w.div_ceil(stride),
            same_pad(h, kernel, stride),
            same_pad(w, kernel, stride),
        )),
        Padding::Valid => {
            if h < kernel || w < kernel {
                return Err(Error::Dimension(format!(
                    "valid conv: input {h}x{w} smaller than kernel {kernel}"
                )));
            }
            Ok(((h - kernel) / stride + 1, (w - kernel) / stride + 1, 0, 0))
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Mean squared error over all elements; returns the loss and its gradient
/// with respect to the prediction.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape != target.shape {
        return Err(Error::Dimension(format!(
            "mse shapes {:?} vs {:?}",
            pred.shape, target.shape
        )));
    }
    let n = pred.numel() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.numel()];
    for (i, (p, t)) in pred.data.iter().zip(&target.data).enumerate() {
        let d = p - t;
        loss += d * d;
        grad[i] = 2.0 * d / n;
    }
    Ok((loss / n, Tensor { shape: pred.shape.clone(), data: grad }))
}

/// Negative log-likelihood of `class` under a probability vector (e.g. a
/// softmax output). Returns loss and gradient w.r.t. the probabilities.
pub fn cross_entropy(probs: &Tensor, class: usize) -> Result<(f64, Tensor)> {
    if class >= probs.numel() {
        return Err(Error::Dimension(format!(
            "class {class} out of range for {} outputs",
            probs.numel()
        )));
    }
    const FLOOR: f64 = 1e-300;
    let p = probs.data[class].max(FLOOR);
    let mut grad = vec![0.0; probs.numel()];
    grad[class] = -1.0 / p;
    Ok((-p.ln(), Tensor { shape: probs.shape.clone(), data: grad }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dense_identity(n: usize) -> Network {
        let spec = NetworkSpec::new(vec![n], vec![LayerSpec::Dense { input: n, output: n }]);
        let mut net = Network::init(spec, 0).unwrap();
        let w = &mut net.params_mut()[0][0];
        w.data.fill(0.0);
        for i in 0..n {
            w.data[i * n + i] = 1.0;
        }
        net
    }

    #[test]
    fn identity_dense_layer_passes_input_through() {
        let net = dense_identity(4);
        let x = Tensor::from_vec(vec![0.1, -0.7, 2.0, 0.0]);
        assert_eq!(net.eval(&x).unwrap(), x);
    }

    #[test]
    fn one_by_one_conv_scales_input() {
        let spec = NetworkSpec::new(
            vec![1, 3, 3],
            vec![LayerSpec::Conv2d { in_ch: 1, out_ch: 1, kernel: 1, stride: 1, padding: Padding::Valid }],
        );
        let mut net = Network::init(spec, 0).unwrap();
        net.params_mut()[0][0].data[0] = 2.0;
        net.params_mut()[0][1].data[0] = 0.0;
        let x = Tensor::new(vec![1, 3, 3], (0..9).map(f64::from).collect()).unwrap();
        let y = net.eval(&x).unwrap();
        for (a, b) in y.data.iter().zip(&x.data) {
            assert_abs_diff_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let spec = NetworkSpec::new(vec![5], vec![LayerSpec::Sigmoid]);
        let net = Network::init(spec, 0).unwrap();
        let y = net.eval(&Tensor::from_vec(vec![0.0; 5])).unwrap();
        for v in y.data {
            assert_abs_diff_eq!(v, 0.5);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = NetworkSpec::new(
            vec![1, 8, 8],
            vec![
                LayerSpec::Conv2d { in_ch: 1, out_ch: 3, kernel: 3, stride: 2, padding: Padding::Same },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { input: 48, output: 7 },
                LayerSpec::Softmax,
            ],
        );
        let net = Network::init(spec, 11).unwrap();
        let x = Tensor::new(vec![1, 8, 8], (0..64).map(|i| (i as f64 / 63.0).sin()).collect()).unwrap();
        let a = net.eval(&x).unwrap();
        let b = net.eval(&x).unwrap();
        assert_eq!(a.data, b.data);
        // softmax sums to one
        assert_abs_diff_eq!(a.data.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_loss_gradient_gives_zero_param_gradients() {
        let spec = NetworkSpec::new(
            vec![4],
            vec![LayerSpec::Dense { input: 4, output: 3 }, LayerSpec::Sigmoid],
        );
        let net = Network::init(spec, 3).unwrap();
        let x = Tensor::from_vec(vec![1.0, -1.0, 0.5, 0.25]);
        let trace = net.forward(&x, &mut Mode::Eval).unwrap();
        let (grads, gx) = net.backward(&trace, &Tensor::from_vec(vec![0.0; 3])).unwrap();
        assert!(grads.0.iter().flatten().all(|t| t.data.iter().all(|&v| v == 0.0)));
        assert!(gx.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_mse_gradient_matches_closed_form() {
        // single linear layer, mse over outputs: dL/dW[o][i] = 2*(y-t)[o]*x[i]/n_out
        let spec = NetworkSpec::new(vec![3], vec![LayerSpec::Dense { input: 3, output: 2 }]);
        let mut net = Network::init(spec, 5).unwrap();
        net.params_mut()[0][0].data.copy_from_slice(&[0.5, -0.2, 0.1, 0.3, 0.8, -0.6]);
        net.params_mut()[0][1].data.copy_from_slice(&[0.05, -0.15]);
        let x = Tensor::from_vec(vec![0.7, -0.3, 0.9]);
        let t = Tensor::from_vec(vec![0.2, -0.1]);
        let trace = net.forward(&x, &mut Mode::Eval).unwrap();
        let (_, gl) = mse(trace.output(), &t).unwrap();
        let (grads, _) = net.backward(&trace, &gl).unwrap();
        let y = &trace.output().data;
        for o in 0..2 {
            for i in 0..3 {
                let expect = 2.0 * (y[o] - t.data[o]) * x.data[i] / 2.0;
                assert_abs_diff_eq!(grads.0[0][0].data[o * 3 + i], expect, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(grads.0[0][1].data[o], 2.0 * (y[o] - t.data[o]) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let a = dense_identity(3);
        let spec = NetworkSpec::new(
            vec![3],
            vec![LayerSpec::Dense { input: 3, output: 3 }, LayerSpec::Relu],
        );
        let b = Network::init(spec, 2).unwrap();
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let trace = a.forward(&x, &mut Mode::Eval).unwrap();
        assert!(b.backward(&trace, &Tensor::from_vec(vec![0.0; 3])).is_err());
    }

    #[test]
    fn loss_identities() {
        let x = Tensor::from_vec(vec![0.3, 0.9, -0.4]);
        let (l, _) = mse(&x, &x).unwrap();
        assert_eq!(l, 0.0);
        let one_hot = Tensor::from_vec(vec![1e-9, 1.0 - 2e-9, 1e-9]);
        let (ce, _) = cross_entropy(&one_hot, 1).unwrap();
        assert!(ce < 1e-8);
    }

    #[test]
    fn dropout_train_vs_eval() {
        let spec = NetworkSpec::new(vec![1000], vec![LayerSpec::Dropout { rate: 0.4 }]);
        let net = Network::init(spec, 0).unwrap();
        let x = Tensor::from_vec(vec![1.0; 1000]);
        assert_eq!(net.eval(&x).unwrap(), x);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trace = net.forward(&x, &mut Mode::Train(&mut rng)).unwrap();
        let kept = trace.output().data.iter().filter(|&&v| v > 0.0).count();
        // inverted dropout preserves scale in expectation
        assert!((kept as f64 / 1000.0 - 0.6).abs() < 0.06);
        let mean: f64 = trace.output().data.iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 0.1);
        // same seed, same mask
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        let trace2 = net.forward(&x, &mut Mode::Train(&mut rng2)).unwrap();
        assert_eq!(trace.output().data, trace2.output().data);
    }
}
