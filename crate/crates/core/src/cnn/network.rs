//! Forward pass, loss and exact backpropagation.

use crate::cnn::model::CnnModel;
use crate::cnn::ops::{axpy, dot, softmax, sum};
use crate::error::{Error, Result};
use crate::topology::RegionIndex;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the old value in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.9;
/// Lower clamp on probabilities inside the log of the loss.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch normalization; activations are kept for
    /// backpropagation.
    Train,
    /// Running statistics; nothing is cached.
    Eval,
}

#[derive(Debug, Clone, Default)]
struct ConvCache {
    /// Layer input, `[B, c_in, in_h, in_w]`.
    input: Vec<f64>,
    /// Normalized pre-activation, `[B, c_out, out_h, out_w]`.
    xhat: Vec<f64>,
    /// Batch-norm output before ReLU.
    pre_relu: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Outputs of [`forward`]; in train mode also the activations needed by
/// [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub batch: usize,
    pub heads: usize,
    pub classes: usize,
    pub mode: Mode,
    /// `[B, heads, classes]` probabilities.
    pub probs: Vec<f64>,
    conv: Vec<ConvCache>,
    flat: Vec<f64>,
    dense_pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl ForwardPass {
    /// Probability vector of `head` for sample `sample`.
    pub fn head_probs(&self, sample: usize, head: usize) -> &[f64] {
        let start = (sample * self.heads + head) * self.classes;
        &self.probs[start..start + self.classes]
    }

    /// Per-head argmax, ties to the lowest class, `[B, heads]`.
    pub fn predictions(&self) -> Vec<RegionIndex> {
        self.probs
            .chunks(self.classes)
            .map(|p| RegionIndex(crate::decoders::argmax(p) as u8))
            .collect()
    }
}

/// Runs the network on `batch` single-channel images stored contiguously in
/// `input` (`[B, 1, H, W]`).
pub fn forward(model: &CnnModel, input: &[f64], batch: usize, mode: Mode) -> Result<ForwardPass> {
    let arch = &model.arch;
    let plane = arch.input_height * arch.input_width;
    if batch == 0 || input.len() != batch * plane {
        return Err(Error::ShapeMismatch {
            expected: format!("{batch} x 1 x {} x {}", arch.input_height, arch.input_width),
            got: format!("{} values", input.len()),
        });
    }
    let p = &model.params;
    let (kh, kw) = arch.kernel;
    let train = mode == Mode::Train;
    let mut caches = Vec::with_capacity(arch.n_conv_layers);
    let mut x = input.to_vec();

    for (l, conv) in model.layout.conv.iter().enumerate() {
        let in_plane = conv.in_h * conv.in_w;
        let out_plane = conv.out_h * conv.out_w;
        let mut z = vec![0.0; batch * conv.c_out * out_plane];
        for b in 0..batch {
            for co in 0..conv.c_out {
                let out = &mut z[(b * conv.c_out + co) * out_plane..][..out_plane];
                out.fill(p[conv.bias + co]);
                for ci in 0..conv.c_in {
                    let inp = &x[(b * conv.c_in + ci) * in_plane..][..in_plane];
                    let kbase = conv.kernel + (co * conv.c_in + ci) * kh * kw;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = p[kbase + ky * kw + kx];
                            for y in 0..conv.out_h {
                                axpy(
                                    wv,
                                    &inp[(y + ky) * conv.in_w + kx..][..conv.out_w],
                                    &mut out[y * conv.out_w..][..conv.out_w],
                                );
                            }
                        }
                    }
                }
            }
        }

        let n = (batch * out_plane) as f64;
        let mut mean = vec![0.0; conv.c_out];
        let mut var = vec![0.0; conv.c_out];
        if train {
            for c in 0..conv.c_out {
                let s: f64 = (0..batch).map(|b| sum(&z[(b * conv.c_out + c) * out_plane..][..out_plane])).sum();
                let m = s / n;
                let ss: f64 = (0..batch)
                    .map(|b| {
                        z[(b * conv.c_out + c) * out_plane..][..out_plane]
                            .iter()
                            .map(|v| (v - m) * (v - m))
                            .sum::<f64>()
                    })
                    .sum();
                mean[c] = m;
                var[c] = ss / n;
            }
        } else {
            mean.copy_from_slice(&model.running_mean[l]);
            var.copy_from_slice(&model.running_var[l]);
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();

        let mut xhat = vec![0.0; z.len()];
        let mut pre = vec![0.0; z.len()];
        let mut act = vec![0.0; z.len()];
        for b in 0..batch {
            for c in 0..conv.c_out {
                let gamma = p[conv.gamma + c];
                let beta = p[conv.beta + c];
                let range = (b * conv.c_out + c) * out_plane..(b * conv.c_out + c + 1) * out_plane;
                for i in range {
                    let xh = (z[i] - mean[c]) * inv_std[c];
                    let y = gamma * xh + beta;
                    xhat[i] = xh;
                    pre[i] = y;
                    act[i] = y.max(0.0);
                }
            }
        }
        let layer_input = std::mem::replace(&mut x, act);
        if train {
            caches.push(ConvCache {
                input: layer_input,
                xhat,
                pre_relu: pre,
                batch_mean: mean,
                batch_var: var,
                inv_std,
            });
        }
    }

    let flat_len = arch.flat_features();
    let flat = x;
    let dw = arch.dense_width;
    let mut dense_pre = vec![0.0; batch * dw];
    for o in 0..dw {
        let row = &p[model.layout.dense_w + o * flat_len..][..flat_len];
        let bias = p[model.layout.dense_b + o];
        for b in 0..batch {
            dense_pre[b * dw + o] = bias + dot(row, &flat[b * flat_len..][..flat_len]);
        }
    }
    let hidden: Vec<f64> = dense_pre.iter().map(|v| v.max(0.0)).collect();

    let outputs = arch.heads * arch.classes;
    let mut probs = vec![0.0; batch * outputs];
    for r in 0..outputs {
        let row = &p[model.layout.head_w + r * dw..][..dw];
        let bias = p[model.layout.head_b + r];
        for b in 0..batch {
            probs[b * outputs + r] = bias + dot(row, &hidden[b * dw..][..dw]);
        }
    }
    for head in probs.chunks_mut(arch.classes) {
        softmax(head);
    }

    let (flat, dense_pre, hidden) = if train {
        (flat, dense_pre, hidden)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    Ok(ForwardPass {
        batch,
        heads: arch.heads,
        classes: arch.classes,
        mode,
        probs,
        conv: caches,
        flat,
        dense_pre,
        hidden,
    })
}

fn check_labels(pass: &ForwardPass, labels: &[RegionIndex]) -> Result<()> {
    if labels.len() != pass.batch * pass.heads {
        return Err(Error::ShapeMismatch {
            expected: format!("{} x {} labels", pass.batch, pass.heads),
            got: labels.len().to_string(),
        });
    }
    if let Some(bad) = labels.iter().find(|l| l.get() >= pass.classes) {
        return Err(Error::InvalidInput(format!("label {bad} out of range")));
    }
    Ok(())
}

/// Mean over heads of each head's batch-averaged categorical cross-entropy.
/// `labels` holds the true class per `[sample, head]`.
pub fn loss(pass: &ForwardPass, labels: &[RegionIndex]) -> Result<f64> {
    loss_weighted(pass, labels, &vec![1.0; pass.heads])
}

/// [`loss`] with head `n`'s term scaled by `head_weights[n]`.
pub fn loss_weighted(pass: &ForwardPass, labels: &[RegionIndex], head_weights: &[f64]) -> Result<f64> {
    check_labels(pass, labels)?;
    let mut per_head = vec![0.0; pass.heads];
    for m in 0..pass.batch {
        for (n, acc) in per_head.iter_mut().enumerate() {
            let y = labels[m * pass.heads + n].get();
            *acc -= pass.head_probs(m, n)[y].max(LOG_CLAMP).ln();
        }
    }
    let b = pass.batch as f64;
    Ok(per_head
        .iter()
        .zip(head_weights)
        .map(|(l, c)| c * l / b)
        .sum::<f64>()
        / pass.heads as f64)
}

/// Gradient of [`loss`] with respect to every parameter, in the model's
/// parameter layout.
pub fn backward(model: &CnnModel, pass: &ForwardPass, labels: &[RegionIndex]) -> Result<Vec<f64>> {
    backward_weighted(model, pass, labels, &vec![1.0; pass.heads])
}

/// Gradient of [`loss_weighted`].
pub fn backward_weighted(
    model: &CnnModel,
    pass: &ForwardPass,
    labels: &[RegionIndex],
    head_weights: &[f64],
) -> Result<Vec<f64>> {
    if pass.mode != Mode::Train {
        return Err(Error::InvalidInput("backward needs a train-mode forward pass".into()));
    }
    check_labels(pass, labels)?;
    if head_weights.len() != pass.heads {
        return Err(Error::ShapeMismatch {
            expected: format!("{} head weights", pass.heads),
            got: head_weights.len().to_string(),
        });
    }
    let arch = &model.arch;
    let layout = &model.layout;
    let p = &model.params;
    let batch = pass.batch;
    let outputs = arch.heads * arch.classes;
    let dw = arch.dense_width;
    let flat_len = arch.flat_features();
    let mut grad = vec![0.0; p.len()];

    // Softmax + cross-entropy: dL/dlogit = c_n (p − y) / (B·w).
    let scale = 1.0 / (batch * arch.heads) as f64;
    let mut dlogits = pass.probs.clone();
    for m in 0..batch {
        for n in 0..arch.heads {
            let start = (m * arch.heads + n) * arch.classes;
            dlogits[start + labels[m * arch.heads + n].get()] -= 1.0;
            for v in &mut dlogits[start..start + arch.classes] {
                *v *= scale * head_weights[n];
            }
        }
    }

    let mut dhidden = vec![0.0; batch * dw];
    for r in 0..outputs {
        let row = &p[layout.head_w + r * dw..][..dw];
        let mut db = 0.0;
        for b in 0..batch {
            let g = dlogits[b * outputs + r];
            db += g;
            axpy(g, &pass.hidden[b * dw..][..dw], &mut grad[layout.head_w + r * dw..][..dw]);
            axpy(g, row, &mut dhidden[b * dw..][..dw]);
        }
        grad[layout.head_b + r] = db;
    }

    let dpre: Vec<f64> = dhidden
        .iter()
        .zip(&pass.dense_pre)
        .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
        .collect();
    let mut dflat = vec![0.0; batch * flat_len];
    for o in 0..dw {
        let row = &p[layout.dense_w + o * flat_len..][..flat_len];
        let mut db = 0.0;
        for b in 0..batch {
            let g = dpre[b * dw + o];
            if g == 0.0 {
                continue;
            }
            db += g;
            axpy(g, &pass.flat[b * flat_len..][..flat_len], &mut grad[layout.dense_w + o * flat_len..][..flat_len]);
            axpy(g, row, &mut dflat[b * flat_len..][..flat_len]);
        }
        grad[layout.dense_b + o] = db;
    }

    let (kh, kw) = arch.kernel;
    let mut dact = dflat;
    for (l, conv) in layout.conv.iter().enumerate().rev() {
        let cache = &pass.conv[l];
        let out_plane = conv.out_h * conv.out_w;
        let in_plane = conv.in_h * conv.in_w;
        let n = (batch * out_plane) as f64;

        // ReLU then batch norm, per channel.
        let mut dz = vec![0.0; dact.len()];
        for c in 0..conv.c_out {
            let gamma = p[conv.gamma + c];
            let mut dgamma = 0.0;
            let mut dbeta = 0.0;
            for b in 0..batch {
                let off = (b * conv.c_out + c) * out_plane;
                for i in off..off + out_plane {
                    let dy = if cache.pre_relu[i] > 0.0 { dact[i] } else { 0.0 };
                    dz[i] = dy;
                    dgamma += dy * cache.xhat[i];
                    dbeta += dy;
                }
            }
            grad[conv.gamma + c] = dgamma;
            grad[conv.beta + c] = dbeta;
            // dxhat = γ·dy, Σdxhat = γ·dβ, Σdxhat·xhat = γ·dγ.
            let k = cache.inv_std[c] / n;
            for b in 0..batch {
                let off = (b * conv.c_out + c) * out_plane;
                for i in off..off + out_plane {
                    let dxhat = gamma * dz[i];
                    dz[i] = k * (n * dxhat - gamma * dbeta - cache.xhat[i] * gamma * dgamma);
                }
            }
        }

        let mut dinput = if l > 0 { vec![0.0; batch * conv.c_in * in_plane] } else { Vec::new() };
        for co in 0..conv.c_out {
            let mut db = 0.0;
            for b in 0..batch {
                db += sum(&dz[(b * conv.c_out + co) * out_plane..][..out_plane]);
            }
            grad[conv.bias + co] = db;
            for ci in 0..conv.c_in {
                let kbase = conv.kernel + (co * conv.c_in + ci) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = 0.0;
                        let wv = p[kbase + ky * kw + kx];
                        for b in 0..batch {
                            let dout = &dz[(b * conv.c_out + co) * out_plane..][..out_plane];
                            let inp = &cache.input[(b * conv.c_in + ci) * in_plane..][..in_plane];
                            for y in 0..conv.out_h {
                                let drow = &dout[y * conv.out_w..][..conv.out_w];
                                acc += dot(drow, &inp[(y + ky) * conv.in_w + kx..][..conv.out_w]);
                                if l > 0 {
                                    let start = (b * conv.c_in + ci) * in_plane + (y + ky) * conv.in_w + kx;
                                    axpy(wv, drow, &mut dinput[start..start + conv.out_w]);
                                }
                            }
                        }
                        grad[kbase + ky * kw + kx] = acc;
                    }
                }
            }
        }
        dact = dinput;
    }
    Ok(grad)
}

/// Folds the pass's batch statistics into the model's running statistics.
pub fn update_running_stats(model: &mut CnnModel, pass: &ForwardPass) {
    for (l, cache) in pass.conv.iter().enumerate() {
        for c in 0..cache.batch_mean.len() {
            let rm = &mut model.running_mean[l][c];
            *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * cache.batch_mean[c];
            let rv = &mut model.running_var[l][c];
            *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * cache.batch_var[c];
        }
    }
}

/// Batch-normalized activations (before γ, β) of conv layer `layer`, for
/// inspection.
pub fn normalized_activations(pass: &ForwardPass, layer: usize) -> Option<&[f64]> {
    pass.conv.get(layer).map(|c| c.xhat.as_slice())
}
