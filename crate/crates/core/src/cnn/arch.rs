use crate::error::{Error, Result};

/// Shape of the convolutional decoder.
///
/// Input is a single-channel `input_height × input_width` image (regions ×
/// time bins). Each conv block is a valid, stride-1 convolution followed by
/// batch normalization and ReLU; the flattened result feeds a ReLU dense
/// layer and `heads` parallel softmax classifiers of `classes` outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnArchitecture {
    pub n_conv_layers: usize,
    pub kernel: (usize, usize),
    pub filters: usize,
    pub dense_width: usize,
    /// One classifier head per symbol window.
    pub heads: usize,
    pub classes: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl CnnArchitecture {
    /// Four 2×2 conv blocks and a 512-wide dense layer, with the given filter
    /// count.
    pub fn with_filters(filters: usize, heads: usize, classes: usize, input_height: usize, input_width: usize) -> Self {
        CnnArchitecture {
            n_conv_layers: 4,
            kernel: (2, 2),
            filters,
            dense_width: 512,
            heads,
            classes,
            input_height,
            input_width,
        }
    }

    /// Reduced filter count for training on a workstation.
    pub fn desk(heads: usize) -> Self {
        Self::with_filters(32, heads, 8, 8, 50)
    }

    /// Full-size network: 512 filters per conv layer.
    pub fn paper_scale(heads: usize) -> Self {
        Self::with_filters(512, heads, 8, 8, 50)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_conv_layers", self.n_conv_layers),
            ("kernel height", self.kernel.0),
            ("kernel width", self.kernel.1),
            ("filters", self.filters),
            ("dense_width", self.dense_width),
            ("heads", self.heads),
            ("classes", self.classes),
            ("input_height", self.input_height),
            ("input_width", self.input_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let (kh, kw) = self.kernel;
        let shrink_h = (kh - 1) * self.n_conv_layers;
        let shrink_w = (kw - 1) * self.n_conv_layers;
        if self.input_height <= shrink_h || self.input_width <= shrink_w {
            return Err(Error::InvalidConfig(format!(
                "input {}x{} is too small for {} valid {}x{} convolutions",
                self.input_height, self.input_width, self.n_conv_layers, kh, kw
            )));
        }
        Ok(())
    }

    /// Spatial size after conv layer `layer` (0-based).
    pub fn conv_output_dims(&self, layer: usize) -> (usize, usize) {
        let (kh, kw) = self.kernel;
        (
            self.input_height - (kh - 1) * (layer + 1),
            self.input_width - (kw - 1) * (layer + 1),
        )
    }

    /// Number of features entering the dense layer.
    pub fn flat_features(&self) -> usize {
        let (h, w) = self.conv_output_dims(self.n_conv_layers - 1);
        h * w * self.filters
    }
}

/// Offsets of one conv block's tensors in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayout {
    pub c_in: usize,
    pub c_out: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// `[c_out, c_in, kh, kw]`.
    pub kernel: usize,
    pub bias: usize,
    pub gamma: usize,
    pub beta: usize,
}

/// Position of every learnable tensor in the flat parameter vector. The
/// order is also the checkpoint order: per conv block kernel, bias, γ, β;
/// then dense weights `[dense_width, flat]` and bias; then head weights
/// `[heads·classes, dense_width]` and bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub conv: Vec<ConvLayout>,
    pub dense_w: usize,
    pub dense_b: usize,
    pub head_w: usize,
    pub head_b: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(arch: &CnnArchitecture) -> ParamLayout {
        let (kh, kw) = arch.kernel;
        let mut offset = 0;
        let mut conv = Vec::with_capacity(arch.n_conv_layers);
        let (mut in_h, mut in_w, mut c_in) = (arch.input_height, arch.input_width, 1);
        for l in 0..arch.n_conv_layers {
            let (out_h, out_w) = arch.conv_output_dims(l);
            let c_out = arch.filters;
            let kernel = offset;
            offset += c_out * c_in * kh * kw;
            let bias = offset;
            offset += c_out;
            let gamma = offset;
            offset += c_out;
            let beta = offset;
            offset += c_out;
            conv.push(ConvLayout {
                c_in,
                c_out,
                in_h,
                in_w,
                out_h,
                out_w,
                kernel,
                bias,
                gamma,
                beta,
            });
            in_h = out_h;
            in_w = out_w;
            c_in = c_out;
        }
        let flat = arch.flat_features();
        let dense_w = offset;
        offset += arch.dense_width * flat;
        let dense_b = offset;
        offset += arch.dense_width;
        let head_w = offset;
        offset += arch.heads * arch.classes * arch.dense_width;
        let head_b = offset;
        offset += arch.heads * arch.classes;
        ParamLayout {
            conv,
            dense_w,
            dense_b,
            head_w,
            head_b,
            total: offset,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_input_shrinks_to_4x46() {
        let arch = CnnArchitecture::desk(10);
        arch.validate().unwrap();
        assert_eq!(arch.conv_output_dims(3), (4, 46));
        assert_eq!(arch.flat_features(), 4 * 46 * 32);
    }

    #[test]
    fn layout_counts_every_parameter() {
        let arch = CnnArchitecture {
            dense_width: 8,
            input_width: 10,
            ..CnnArchitecture::with_filters(2, 2, 8, 8, 10)
        };
        let layout = ParamLayout::new(&arch);
        let conv: usize = (1 * 2 * 4 + 6) + 3 * (2 * 2 * 4 + 6);
        let dense = 8 * (4 * 6 * 2) + 8;
        let heads = 16 * 8 + 16;
        assert_eq!(layout.total, conv + dense + heads);
        assert_eq!(layout.head_b + 16, layout.total);
    }

    #[test]
    fn rejects_inputs_too_small() {
        let arch = CnnArchitecture::with_filters(4, 1, 8, 4, 50);
        assert!(arch.validate().is_err());
        let arch = CnnArchitecture { filters: 0, ..CnnArchitecture::desk(3) };
        assert!(arch.validate().is_err());
    }
}
