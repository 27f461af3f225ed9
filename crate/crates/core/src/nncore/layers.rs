//! Layer forward/backward rules.
//!
//! Backward functions that produce parameter gradients *accumulate* into the
//! provided gradient buffers (so a batch can sum per-example contributions in
//! a fixed order); gradients flowing toward the input are returned as fresh
//! arrays. Every parallel loop is a gather per output cell with a fixed inner
//! summation order — see `crate::par`.

use super::{Activation, NdArray, PAD_ROW};
use crate::error::{Error, Result};
use crate::nncore::Rng;
use crate::par;

/// Row lookup: output row `i` is `table` row `indices[i]`.
pub fn embedding_forward(indices: &[usize], table: &NdArray) -> Result<NdArray> {
    let [v, d] = table.shape() else {
        return Err(Error::invalid("embedding table must be 2-D"));
    };
    let (v, d) = (*v, *d);
    let mut out = NdArray::zeros(&[indices.len(), d]);
    for (i, &idx) in indices.iter().enumerate() {
        if idx >= v {
            return Err(Error::invalid(format!(
                "embedding index {idx} out of range for table with {v} rows"
            )));
        }
        out.row_mut(i).copy_from_slice(table.row(idx));
    }
    Ok(out)
}

/// Scatter-add `upstream` row `i` into `grad` row `indices[i]`.
/// Duplicate indices accumulate; the padding row receives no gradient.
pub fn embedding_backward(indices: &[usize], upstream: &NdArray, grad: &mut NdArray) {
    debug_assert_eq!(upstream.shape()[0], indices.len());
    for (i, &idx) in indices.iter().enumerate() {
        if idx == PAD_ROW {
            continue;
        }
        let src = upstream.row(i);
        for (g, u) in grad.row_mut(idx).iter_mut().zip(src) {
            *g += u;
        }
    }
}

/// Valid 1-D convolution over word windows, stride 1, then activation.
///
/// `input` is `[L, D]`, `filters` `[F, h, D]`, `bias` `[F]`; the output is
/// `[L - h + 1, F]`. Each output cell is `act(bias[f] + <window_t, filter_f>)`.
pub fn conv1d_forward(
    input: &NdArray,
    filters: &NdArray,
    bias: &NdArray,
    act: Activation,
) -> Result<NdArray> {
    let [l, d] = input.shape() else {
        return Err(Error::invalid("conv input must be 2-D"));
    };
    let [f, h, fd] = filters.shape() else {
        return Err(Error::invalid("conv filters must be 3-D"));
    };
    let (l, d, f, h) = (*l, *d, *f, *h);
    if *fd != d {
        return Err(Error::invalid(format!(
            "filter depth {fd} does not match input depth {d}"
        )));
    }
    if bias.len() != f {
        return Err(Error::invalid("conv bias length must equal filter count"));
    }
    if l < h {
        return Err(Error::invalid(format!(
            "sequence length {l} shorter than window size {h}"
        )));
    }
    let t_len = l - h + 1;
    let window = h * d;
    let mut out = NdArray::zeros(&[t_len, f]);
    let xs = input.values();
    let ws = filters.values();
    let bs = bias.values();
    par::fill_rows(out.values_mut(), f, t_len * f * window, |t, row| {
        let win = &xs[t * d..t * d + window];
        for (fi, o) in row.iter_mut().enumerate() {
            let filt = &ws[fi * window..(fi + 1) * window];
            let mut acc = bs[fi];
            for (x, w) in win.iter().zip(filt) {
                acc += x * w;
            }
            *o = act.apply(acc);
        }
    });
    Ok(out)
}

/// Backward of conv + activation. Accumulates into `filters_grad` / `bias_grad`
/// and returns the gradient w.r.t. the input, `[L, D]`.
pub fn conv1d_backward(
    input: &NdArray,
    filters: &NdArray,
    post: &NdArray,
    act: Activation,
    upstream: &NdArray,
    filters_grad: &mut NdArray,
    bias_grad: &mut NdArray,
) -> NdArray {
    let (l, d) = (input.shape()[0], input.shape()[1]);
    let (f, h) = (filters.shape()[0], filters.shape()[1]);
    let t_len = l - h + 1;
    let window = h * d;

    // Pre-activation gradient.
    let mut dpre = NdArray::zeros(&[t_len, f]);
    for ((dp, up), y) in dpre
        .values_mut()
        .iter_mut()
        .zip(upstream.values())
        .zip(post.values())
    {
        *dp = up * act.grad_from_output(*y);
    }

    let xs = input.values();
    let ws = filters.values();
    let dps = dpre.values();

    for (fi, bg) in bias_grad.values_mut().iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in 0..t_len {
            acc += dps[t * f + fi];
        }
        *bg += acc;
    }

    // Filter gradients: one gather per filter coordinate, windows in order.
    par::fill_rows(
        filters_grad.values_mut(),
        window,
        f * window * t_len,
        |fi, frow| {
            for (jd, g) in frow.iter_mut().enumerate() {
                let mut acc = 0.0;
                for t in 0..t_len {
                    acc += dps[t * f + fi] * xs[t * d + jd];
                }
                *g += acc;
            }
        },
    );

    // Input gradient: gather per input cell over the windows that cover it,
    // offsets ascending, filters ascending.
    let mut d_input = NdArray::zeros(&[l, d]);
    par::fill_rows(d_input.values_mut(), d, l * d * h * f, |i, row| {
        for (di, g) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..h {
                let Some(t) = i.checked_sub(j) else { break };
                if t >= t_len {
                    continue;
                }
                for fi in 0..f {
                    acc += dps[t * f + fi] * ws[fi * window + j * d + di];
                }
            }
            *g = acc;
        }
    });
    d_input
}

/// Column-wise maximum over window positions: `[T, F]` → `[F]` plus the
/// argmax row per feature. Ties go to the earliest window.
pub fn max_over_time(featmap: &NdArray) -> Result<(NdArray, Vec<usize>)> {
    let [t_len, f] = featmap.shape() else {
        return Err(Error::invalid("feature map must be 2-D"));
    };
    let (t_len, f) = (*t_len, *f);
    if t_len == 0 {
        return Err(Error::invalid("feature map has no windows"));
    }
    let mut out = NdArray::zeros(&[f]);
    let mut argmax = vec![0usize; f];
    let vals = featmap.values();
    for fi in 0..f {
        let mut best = vals[fi];
        let mut best_t = 0usize;
        for t in 1..t_len {
            let v = vals[t * f + fi];
            if v > best {
                best = v;
                best_t = t;
            }
        }
        out.values_mut()[fi] = best;
        argmax[fi] = best_t;
    }
    Ok((out, argmax))
}

/// Route `upstream[f]` to the argmax position of feature `f`; zeros elsewhere.
pub fn max_over_time_backward(upstream: &NdArray, argmax: &[usize], t_len: usize) -> NdArray {
    let f = upstream.len();
    let mut d = NdArray::zeros(&[t_len, f]);
    for (fi, (&u, &t)) in upstream.values().iter().zip(argmax).enumerate() {
        d.values_mut()[t * f + fi] = u;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Infer,
}

/// Inverted dropout. In train mode each element is zeroed with probability
/// `p` and survivors are scaled by `1/(1-p)`; infer mode is the identity.
/// Returns the output and the multiplier mask used (all ones at inference).
pub fn dropout_forward(
    x: &NdArray,
    p: f64,
    mode: DropoutMode,
    rng: &mut Rng,
) -> Result<(NdArray, NdArray)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout probability {p} not in [0, 1)")));
    }
    let mut mask = NdArray::zeros(x.shape());
    mask.fill(1.0);
    if let DropoutMode::Train = mode {
        let keep_scale = 1.0 / (1.0 - p);
        for m in mask.values_mut() {
            *m = if rng.next_f64() < p { 0.0 } else { keep_scale };
        }
    }
    let mut out = x.clone();
    for (o, m) in out.values_mut().iter_mut().zip(mask.values()) {
        *o *= m;
    }
    Ok((out, mask))
}

/// Multiply upstream by the same mask/scale used in the forward pass.
pub fn dropout_backward(upstream: &NdArray, mask: &NdArray) -> NdArray {
    let mut d = upstream.clone();
    for (g, m) in d.values_mut().iter_mut().zip(mask.values()) {
        *g *= m;
    }
    d
}

/// Fully connected layer: `out = act(W·x + b)` with `W` of shape `[m, n]`.
pub fn dense_forward(
    x: &NdArray,
    weights: &NdArray,
    bias: &NdArray,
    act: Activation,
) -> Result<NdArray> {
    let [m, n] = weights.shape() else {
        return Err(Error::invalid("dense weights must be 2-D"));
    };
    let (m, n) = (*m, *n);
    if x.len() != n || bias.len() != m {
        return Err(Error::invalid(format!(
            "dense shape mismatch: weights [{m}, {n}], input [{}], bias [{}]",
            x.len(),
            bias.len()
        )));
    }
    let mut out = NdArray::zeros(&[m]);
    let xs = x.values();
    let ws = weights.values();
    let bs = bias.values();
    par::fill_rows(out.values_mut(), 1, m * n, |i, cell| {
        let row = &ws[i * n..(i + 1) * n];
        let mut acc = bs[i];
        for (w, xv) in row.iter().zip(xs) {
            acc += w * xv;
        }
        cell[0] = act.apply(acc);
    });
    Ok(out)
}

/// Backward of the dense layer. Accumulates into `weights_grad` / `bias_grad`
/// and returns the gradient w.r.t. `x`.
pub fn dense_backward(
    x: &NdArray,
    weights: &NdArray,
    post: &NdArray,
    act: Activation,
    upstream: &NdArray,
    weights_grad: &mut NdArray,
    bias_grad: &mut NdArray,
) -> NdArray {
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    let mut dpre = vec![0.0; m];
    for i in 0..m {
        dpre[i] = upstream.values()[i] * act.grad_from_output(post.values()[i]);
    }
    for (i, (bg, dp)) in bias_grad.values_mut().iter_mut().zip(&dpre).enumerate() {
        *bg += dp;
        let wrow = &mut weights_grad.values_mut()[i * n..(i + 1) * n];
        for (wg, xv) in wrow.iter_mut().zip(x.values()) {
            *wg += dp * xv;
        }
    }
    let ws = weights.values();
    let mut d_x = NdArray::zeros(&[n]);
    for (j, g) in d_x.values_mut().iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, dp) in dpre.iter().enumerate() {
            acc += dp * ws[i * n + j];
        }
        *g = acc;
    }
    d_x
}

/// Max-shifted softmax plus cross-entropy against `true_class`.
/// Returns `(loss, probs)`; the probabilities sum to 1 within 1e-12.
pub fn softmax_xent(logits: &NdArray, true_class: usize) -> Result<(f64, NdArray)> {
    let c = logits.len();
    if c < 2 {
        return Err(Error::invalid("softmax needs at least 2 classes"));
    }
    if true_class >= c {
        return Err(Error::invalid(format!(
            "true class {true_class} out of range for {c} classes"
        )));
    }
    let max = logits.values().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut probs = NdArray::zeros(&[c]);
    let mut sum = 0.0;
    for (p, &l) in probs.values_mut().iter_mut().zip(logits.values()) {
        *p = (l - max).exp();
        sum += *p;
    }
    for p in probs.values_mut() {
        *p /= sum;
    }
    let loss = -(logits.values()[true_class] - max - sum.ln());
    Ok((loss, probs))
}

/// Gradient of the loss w.r.t. the logits: `probs - onehot(true_class)`.
pub fn softmax_xent_backward(probs: &NdArray, true_class: usize) -> NdArray {
    let mut d = probs.clone();
    d.values_mut()[true_class] -= 1.0;
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{init_params, InitScheme};

    fn arr(shape: &[usize], v: Vec<f64>) -> NdArray {
        NdArray::from_vec(shape, v).unwrap()
    }

    #[test]
    fn embedding_lookup_matches_one_hot_rows() {
        // Identity-like table: one-hot rows.
        let table = arr(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let out = embedding_forward(&[2, 0], &table).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(out.row(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn embedding_pad_rows_stay_zero() {
        let mut table = arr(&[3, 2], vec![0.0; 6]);
        table.row_mut(1).copy_from_slice(&[5.0, 5.0]);
        let out = embedding_forward(&[0, 0, 0], &table).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_rejects_out_of_range() {
        let table = arr(&[2, 2], vec![0.0; 4]);
        assert!(embedding_forward(&[2], &table).is_err());
    }

    #[test]
    fn embedding_backward_accumulates_duplicates_and_skips_pad() {
        let mut grad = NdArray::zeros(&[4, 2]);
        let upstream = arr(&[3, 2], vec![1.0, 2.0, 10.0, 20.0, 0.5, 0.5]);
        embedding_backward(&[3, 3, 0], &upstream, &mut grad);
        assert_eq!(grad.row(3), &[11.0, 22.0]);
        assert_eq!(grad.row(0), &[0.0, 0.0]); // pad row frozen
    }

    #[test]
    fn conv_hand_example() {
        // Rows [1,0],[0,1],[1,1]; window 2; all-ones filter; zero bias → [2, 3].
        let input = arr(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let filters = arr(&[1, 2, 2], vec![1.0; 4]);
        let bias = NdArray::zeros(&[1]);
        let out = conv1d_forward(&input, &filters, &bias, Activation::Relu).unwrap();
        assert_eq!(out.values(), &[2.0, 3.0]);
    }

    #[test]
    fn conv_zero_filters_zero_output() {
        let input = arr(&[4, 3], (0..12).map(|v| v as f64).collect());
        let filters = NdArray::zeros(&[2, 2, 3]);
        let bias = NdArray::zeros(&[2]);
        let out = conv1d_forward(&input, &filters, &bias, Activation::None).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rejects_short_sequence() {
        let input = arr(&[2, 2], vec![0.0; 4]);
        let filters = NdArray::zeros(&[1, 3, 2]);
        let bias = NdArray::zeros(&[1]);
        let err = conv1d_forward(&input, &filters, &bias, Activation::Relu).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn conv_pre_activation_is_linear() {
        // conv(a*x) == a*conv(x) for zero bias, no activation.
        let mut rng = Rng::new(17);
        let x = init_params(&[6, 3], InitScheme::UniformXavier, &mut rng);
        let filters = init_params(&[2, 2, 3], InitScheme::UniformXavier, &mut rng);
        let bias = NdArray::zeros(&[2]);
        let alpha = 2.5;
        let mut xa = x.clone();
        for v in xa.values_mut() {
            *v *= alpha;
        }
        let base = conv1d_forward(&x, &filters, &bias, Activation::None).unwrap();
        let scaled = conv1d_forward(&xa, &filters, &bias, Activation::None).unwrap();
        for (s, b) in scaled.values().iter().zip(base.values()) {
            assert!((s - alpha * b).abs() < 1e-10);
        }
    }

    #[test]
    fn max_pool_single_row_is_identity() {
        let fm = arr(&[1, 3], vec![0.5, -1.0, 2.0]);
        let (out, argmax) = max_over_time(&fm).unwrap();
        assert_eq!(out.values(), &[0.5, -1.0, 2.0]);
        assert_eq!(argmax, vec![0, 0, 0]);
    }

    #[test]
    fn max_pool_picks_max_and_first_tie() {
        let fm = arr(&[2, 2], vec![2.0, 7.0, 3.0, 7.0]);
        let (out, argmax) = max_over_time(&fm).unwrap();
        assert_eq!(out.values(), &[3.0, 7.0]);
        assert_eq!(argmax, vec![1, 0]); // tie in column 1 goes to t=0
    }

    #[test]
    fn max_pool_backward_routes_single_cell_per_column() {
        let up = arr(&[2], vec![1.5, -2.0]);
        let d = max_over_time_backward(&up, &[1, 0], 3);
        assert_eq!(d.values(), &[0.0, -2.0, 1.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let x = arr(&[4], vec![1.0, -2.0, 3.0, 0.5]);
        let mut rng = Rng::new(1);
        let (infer, _) = dropout_forward(&x, 0.5, DropoutMode::Infer, &mut rng).unwrap();
        assert_eq!(infer.values(), x.values());
        let (p0, _) = dropout_forward(&x, 0.0, DropoutMode::Train, &mut rng).unwrap();
        assert_eq!(p0.values(), x.values());
        assert!(dropout_forward(&x, 1.0, DropoutMode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_statistics_at_half() {
        let n = 100_000;
        let x = arr(&[n], vec![1.0; n]);
        let mut rng = Rng::new(99);
        let (out, _) = dropout_forward(&x, 0.5, DropoutMode::Train, &mut rng).unwrap();
        let zeros = out.values().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "zero fraction {frac}");
        let mean = out.values().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn dense_identity_and_bias_relu() {
        let x = arr(&[2], vec![3.0, -4.0]);
        let eye = arr(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let zb = NdArray::zeros(&[2]);
        let out = dense_forward(&x, &eye, &zb, Activation::None).unwrap();
        assert_eq!(out.values(), x.values());

        let zw = NdArray::zeros(&[2, 2]);
        let b = arr(&[2], vec![1.0, -1.0]);
        let out = dense_forward(&x, &zw, &b, Activation::Relu).unwrap();
        assert_eq!(out.values(), &[1.0, 0.0]);
    }

    #[test]
    fn dense_matches_hand_expansion() {
        let mut rng = Rng::new(4);
        let x = init_params(&[3], InitScheme::UniformXavier, &mut rng);
        let w = init_params(&[4, 3], InitScheme::UniformXavier, &mut rng);
        let b = init_params(&[4], InitScheme::UniformXavier, &mut rng);
        let out = dense_forward(&x, &w, &b, Activation::None).unwrap();
        for i in 0..4 {
            let mut acc = b.values()[i];
            for j in 0..3 {
                acc += w.values()[i * 3 + j] * x.values()[j];
            }
            assert!((out.values()[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_rejects_shape_mismatch() {
        let x = arr(&[3], vec![0.0; 3]);
        let w = arr(&[2, 2], vec![0.0; 4]);
        let b = NdArray::zeros(&[2]);
        assert!(dense_forward(&x, &w, &b, Activation::None).is_err());
    }

    #[test]
    fn softmax_uniform_and_stability() {
        let (loss, probs) = softmax_xent(&arr(&[3], vec![0.0; 3]), 1).unwrap();
        for &p in probs.values() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);

        let (loss, probs) = softmax_xent(&arr(&[2], vec![1000.0, 0.0]), 0).unwrap();
        assert!(probs.all_finite());
        assert!(probs.values()[0] > 0.999_999);
        assert!(loss.abs() < 1e-9);
    }

    #[test]
    fn softmax_probs_sum_to_one() {
        let mut rng = Rng::new(21);
        for _ in 0..50 {
            let logits = init_params(&[8], InitScheme::Uniform { bound: 5.0 }, &mut rng);
            let (_, probs) = softmax_xent(&logits, 3).unwrap();
            let sum: f64 = probs.values().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(probs.values().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn softmax_grad_matches_finite_differences() {
        let mut rng = Rng::new(33);
        let logits = init_params(&[5], InitScheme::Uniform { bound: 2.0 }, &mut rng);
        let (_, probs) = softmax_xent(&logits, 2).unwrap();
        let analytic = softmax_xent_backward(&probs, 2);
        let delta = 1e-6;
        for i in 0..5 {
            let mut lp = logits.clone();
            lp.values_mut()[i] += delta;
            let mut lm = logits.clone();
            lm.values_mut()[i] -= delta;
            let (fp, _) = softmax_xent(&lp, 2).unwrap();
            let (fm, _) = softmax_xent(&lm, 2).unwrap();
            let numeric = (fp - fm) / (2.0 * delta);
            let a = analytic.values()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-6, "coord {i}: analytic {a}, numeric {numeric}");
        }
    }
}
