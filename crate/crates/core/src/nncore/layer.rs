use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Output spatial extent `ceil(in / stride)`; zero padding split with the
    /// extra column/row at the end.
    Same,
    /// No padding; output extent `floor((in - k) / stride) + 1`.
    Valid,
}

/// Declarative layer descriptor. Parameter tensors live in `Network`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Conv2d { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: Padding },
    MaxPool2,
    UpsampleNearest2,
    Sigmoid,
    Relu,
    Softmax,
    Flatten,
    Reshape { shape: Vec<usize> },
    Dropout { rate: f64 },
}

impl LayerSpec {
    /// Number of parameter tensors this layer owns.
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } => 2,
            _ => 0,
        }
    }

    /// Output shape for a given input shape, or a dimension error if the
    /// layer cannot accept it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let err = |msg: String| Err(Error::Dimension(msg));
        match self {
            LayerSpec::Dense { input: n_in, output } => {
                if input != [*n_in] {
                    return err(format!("dense expects [{n_in}], got {input:?}"));
                }
                Ok(vec![*output])
            }
            LayerSpec::Conv2d { in_ch, out_ch, kernel, stride, padding } => {
                if *kernel < 1 {
                    return err("conv kernel extent must be >= 1".into());
                }
                if !(1..=2).contains(stride) {
                    return err("conv stride must be 1 or 2".into());
                }
                let [c, h, w] = *input else {
                    return err(format!("conv expects [c,h,w], got {input:?}"));
                };
                if c != *in_ch {
                    return err(format!("conv expects {in_ch} channels, got {c}"));
                }
                let out_extent = |n: usize| -> Result<usize> {
                    match padding {
                        Padding::Same => Ok(n.div_ceil(*stride)),
                        Padding::Valid => {
                            if n < *kernel {
                                return Err(Error::Dimension(format!(
                                    "valid conv: input extent {n} < kernel {kernel}"
                                )));
                            }
                            Ok((n - kernel) / stride + 1)
                        }
                    }
                };
                Ok(vec![*out_ch, out_extent(h)?, out_extent(w)?])
            }
            LayerSpec::MaxPool2 => {
                let [c, h, w] = *input else {
                    return err(format!("maxpool expects [c,h,w], got {input:?}"));
                };
                if h < 2 || w < 2 {
                    return err(format!("maxpool needs extents >= 2, got {h}x{w}"));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            LayerSpec::UpsampleNearest2 => {
                let [c, h, w] = *input else {
                    return err(format!("upsample expects [c,h,w], got {input:?}"));
                };
                Ok(vec![c, h * 2, w * 2])
            }
            LayerSpec::Sigmoid | LayerSpec::Relu | LayerSpec::Dropout { .. } => {
                Ok(input.to_vec())
            }
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return err(format!("softmax expects a vector, got {input:?}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                let n_in: usize = input.iter().product();
                let n_out: usize = shape.iter().product();
                if n_in != n_out {
                    return err(format!("reshape {input:?} -> {shape:?} changes element count"));
                }
                Ok(shape.clone())
            }
        }
    }
}

/// Ordered layer stack plus its expected input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self { input_shape, layers }
    }

    /// Shapes at every interface: `[input, after layer 0, ...]`.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        let mut chain = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(chain.last().unwrap()).map_err(|e| {
                Error::Dimension(format!("layer {i} ({layer:?}): {e}"))
            })?;
            chain.push(next);
        }
        Ok(chain)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shape_chain()?.pop().unwrap())
    }
}

/// Zero-pad amounts (top/left) for a `Same` convolution.
pub(crate) fn same_pad(extent: usize, kernel: usize, stride: usize) -> usize {
    let out = extent.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(extent);
    total / 2
}
