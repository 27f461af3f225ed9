//! The convolutional text classifier: random-init embeddings, parallel
//! conv+pool branches per window size, dropout, a hidden layer and softmax.

mod checkpoint;
mod train;

pub use checkpoint::Checkpoint;
pub use train::{train, EpochStat, SelectionMetric, TrainReport};

use crate::error::{Error, Result};
use crate::nncore::{
    self, init_params, Activation, DropoutMode, InitScheme, LossFn, NdArray, Parameter, Rng,
    PAD_ROW,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub embed_dim: usize,
    pub window_sizes: Vec<usize>,
    pub maps_per_window: usize,
    pub hidden_dim: usize,
    pub dropout_p: f64,
    pub activation: Activation,
    pub num_classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            embed_dim: 128,
            window_sizes: vec![3, 4, 5],
            maps_per_window: 100,
            hidden_dim: 128,
            dropout_p: 0.5,
            activation: Activation::Relu,
            num_classes: 8,
            epochs: 147,
            batch_size: 75,
            seed: 0,
            selection_metric: SelectionMetric::F1Micro,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0
            || self.maps_per_window == 0
            || self.hidden_dim == 0
            || self.epochs == 0
            || self.batch_size == 0
        {
            return Err(Error::invalid("model dimensions and budgets must be positive"));
        }
        if self.window_sizes.is_empty() || self.window_sizes.contains(&0) {
            return Err(Error::invalid("window sizes must be non-empty and positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!(
                "dropout {} not in [0, 1)",
                self.dropout_p
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        Ok(())
    }

    /// Width of the pooled concatenation feeding the hidden layer.
    pub fn concat_width(&self) -> usize {
        self.maps_per_window * self.window_sizes.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub window: usize,
    pub filters: Parameter,
    pub bias: Parameter,
}

/// The full parameter set plus its architecture config.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: CnnConfig,
    pub vocab_rows: usize,
    pub embedding: Parameter,
    pub convs: Vec<ConvBlock>,
    pub hidden_w: Parameter,
    pub hidden_b: Parameter,
    pub out_w: Parameter,
    pub out_b: Parameter,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache {
    embedded: NdArray,
    conv_posts: Vec<NdArray>,
    argmaxes: Vec<Vec<usize>>,
    dropout_out: NdArray,
    dropout_mask: NdArray,
    hidden_post: NdArray,
    logits: NdArray,
    pub probs: NdArray,
}

/// Initialize a model: embedding uniform in ±0.25 with the pad row frozen at
/// zero, conv filters and dense weights uniform-Xavier, biases zero.
/// Parameters are drawn in declared order, so a seed fixes every weight.
pub fn build_model(config: &CnnConfig, vocab_rows: usize, rng: &mut Rng) -> Result<Model> {
    config.validate()?;
    if vocab_rows < 2 {
        return Err(Error::invalid("embedding needs at least 2 rows (pad + unk)"));
    }
    let d = config.embed_dim;
    let mut embedding = init_params(&[vocab_rows, d], InitScheme::Uniform { bound: 0.25 }, rng);
    embedding.row_mut(PAD_ROW).fill(0.0);
    let embedding = Parameter::new(embedding);

    let convs = config
        .window_sizes
        .iter()
        .map(|&h| ConvBlock {
            window: h,
            filters: Parameter::new(init_params(
                &[config.maps_per_window, h, d],
                InitScheme::UniformXavier,
                rng,
            )),
            bias: Parameter::new(NdArray::zeros(&[config.maps_per_window])),
        })
        .collect();

    let w = config.concat_width();
    let hidden_w = Parameter::new(init_params(
        &[config.hidden_dim, w],
        InitScheme::UniformXavier,
        rng,
    ));
    let hidden_b = Parameter::new(NdArray::zeros(&[config.hidden_dim]));
    let out_w = Parameter::new(init_params(
        &[config.num_classes, config.hidden_dim],
        InitScheme::UniformXavier,
        rng,
    ));
    let out_b = Parameter::new(NdArray::zeros(&[config.num_classes]));

    Ok(Model {
        config: config.clone(),
        vocab_rows,
        embedding,
        convs,
        hidden_w,
        hidden_b,
        out_w,
        out_b,
    })
}

impl Model {
    /// Parameter values in declared order (checkpoint layout).
    pub fn param_values(&self) -> Vec<&NdArray> {
        let mut v = vec![&self.embedding.value];
        for c in &self.convs {
            v.push(&c.filters.value);
            v.push(&c.bias.value);
        }
        v.extend([
            &self.hidden_w.value,
            &self.hidden_b.value,
            &self.out_w.value,
            &self.out_b.value,
        ]);
        v
    }

    /// Named mutable parameters in declared order.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let Model {
            embedding,
            convs,
            hidden_w,
            hidden_b,
            out_w,
            out_b,
            ..
        } = self;
        let mut v: Vec<(String, &mut Parameter)> = vec![("embedding".to_string(), embedding)];
        for c in convs.iter_mut() {
            v.push((format!("conv{}.filters", c.window), &mut c.filters));
            v.push((format!("conv{}.bias", c.window), &mut c.bias));
        }
        v.push(("hidden.weights".to_string(), hidden_w));
        v.push(("hidden.bias".to_string(), hidden_b));
        v.push(("output.weights".to_string(), out_w));
        v.push(("output.bias".to_string(), out_b));
        v
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Rebuild a model from checkpointed values (zeroed optimizer state).
    pub fn from_values(
        config: &CnnConfig,
        vocab_rows: usize,
        values: Vec<NdArray>,
    ) -> Result<Model> {
        let mut model = build_model(config, vocab_rows, &mut Rng::new(0))?;
        {
            let mut params = model.params_mut();
            if values.len() != params.len() {
                return Err(Error::invalid(format!(
                    "expected {} parameter tensors, got {}",
                    params.len(),
                    values.len()
                )));
            }
            for ((name, p), v) in params.iter_mut().zip(values) {
                if p.value.shape() != v.shape() {
                    return Err(Error::invalid(format!(
                        "parameter {name}: shape {:?} does not match checkpoint {:?}",
                        p.value.shape(),
                        v.shape()
                    )));
                }
                **p = Parameter::new(v);
            }
        }
        Ok(model)
    }

    pub fn total_params(&self) -> usize {
        self.param_values().iter().map(|a| a.len()).sum()
    }

    /// Full pipeline: embedding → conv+pool per window → concat → dropout →
    /// hidden dense → output dense → softmax.
    pub fn forward(
        &self,
        indices: &[usize],
        mode: DropoutMode,
        rng: &mut Rng,
    ) -> Result<ForwardCache> {
        let act = self.config.activation;
        let embedded = nncore::embedding_forward(indices, &self.embedding.value)?;
        let f = self.config.maps_per_window;
        let mut conv_posts = Vec::with_capacity(self.convs.len());
        let mut argmaxes = Vec::with_capacity(self.convs.len());
        let mut concat = NdArray::zeros(&[self.config.concat_width()]);
        for (wi, c) in self.convs.iter().enumerate() {
            let post = nncore::conv1d_forward(&embedded, &c.filters.value, &c.bias.value, act)?;
            let (pooled, argmax) = nncore::max_over_time(&post)?;
            concat.values_mut()[wi * f..(wi + 1) * f].copy_from_slice(pooled.values());
            conv_posts.push(post);
            argmaxes.push(argmax);
        }
        let (dropout_out, dropout_mask) =
            nncore::dropout_forward(&concat, self.config.dropout_p, mode, rng)?;
        let hidden_post =
            nncore::dense_forward(&dropout_out, &self.hidden_w.value, &self.hidden_b.value, act)?;
        let logits = nncore::dense_forward(
            &hidden_post,
            &self.out_w.value,
            &self.out_b.value,
            Activation::None,
        )?;
        // softmax_xent against class 0 just for the normalized probabilities;
        // the loss term is recomputed by callers that know the true class.
        let (_, probs) = nncore::softmax_xent(&logits, 0)?;
        Ok(ForwardCache {
            embedded,
            conv_posts,
            argmaxes,
            dropout_out,
            dropout_mask,
            hidden_post,
            logits,
            probs,
        })
    }

    /// Forward plus cross-entropy loss against `true_class`.
    pub fn loss_forward(
        &self,
        indices: &[usize],
        true_class: usize,
        mode: DropoutMode,
        rng: &mut Rng,
    ) -> Result<(f64, ForwardCache)> {
        let cache = self.forward(indices, mode, rng)?;
        let (loss, _) = nncore::softmax_xent(&cache.logits, true_class)?;
        Ok((loss, cache))
    }

    /// Accumulate exact gradients of the cached forward into the parameter
    /// gradient buffers.
    pub fn backward(&mut self, indices: &[usize], cache: &ForwardCache, true_class: usize) {
        let act = self.config.activation;
        let f = self.config.maps_per_window;
        let d_logits = nncore::softmax_xent_backward(&cache.probs, true_class);
        let d_hidden = nncore::dense_backward(
            &cache.hidden_post,
            &self.out_w.value,
            &cache.logits,
            Activation::None,
            &d_logits,
            &mut self.out_w.grad,
            &mut self.out_b.grad,
        );
        let d_dropout_out = nncore::dense_backward(
            &cache.dropout_out,
            &self.hidden_w.value,
            &cache.hidden_post,
            act,
            &d_hidden,
            &mut self.hidden_w.grad,
            &mut self.hidden_b.grad,
        );
        let d_concat = nncore::dropout_backward(&d_dropout_out, &cache.dropout_mask);
        let mut d_embedded = NdArray::zeros(cache.embedded.shape());
        for (wi, c) in self.convs.iter_mut().enumerate() {
            let seg = NdArray::from_vec(
                &[f],
                d_concat.values()[wi * f..(wi + 1) * f].to_vec(),
            )
            .expect("segment shape");
            let t_len = cache.conv_posts[wi].shape()[0];
            let d_post = nncore::max_over_time_backward(&seg, &cache.argmaxes[wi], t_len);
            let d_x = nncore::conv1d_backward(
                &cache.embedded,
                &c.filters.value,
                &cache.conv_posts[wi],
                act,
                &d_post,
                &mut c.filters.grad,
                &mut c.bias.grad,
            );
            for (acc, v) in d_embedded.values_mut().iter_mut().zip(d_x.values()) {
                *acc += v;
            }
        }
        nncore::embedding_backward(indices, &d_embedded, &mut self.embedding.grad);
    }

    /// Inference-mode prediction: argmax with lowest-index tie-break.
    pub fn predict(&self, indices: &[usize]) -> Result<(usize, NdArray)> {
        let cache = self.forward(indices, DropoutMode::Infer, &mut Rng::new(0))?;
        let mut best = 0usize;
        for (i, &p) in cache.probs.values().iter().enumerate() {
            if p > cache.probs.values()[best] {
                best = i;
            }
        }
        Ok((best, cache.probs))
    }
}

/// A (model, labeled example) pair as a differentiable loss, for the
/// finite-difference gradient checker. Dropout runs in infer mode so the
/// loss is deterministic.
pub struct ModelLoss<'a> {
    pub model: &'a mut Model,
    pub indices: &'a [usize],
    pub true_class: usize,
}

impl LossFn for ModelLoss<'_> {
    fn loss(&mut self) -> Result<f64> {
        let (loss, _) = self.model.loss_forward(
            self.indices,
            self.true_class,
            DropoutMode::Infer,
            &mut Rng::new(0),
        )?;
        Ok(loss)
    }

    fn loss_with_grads(&mut self) -> Result<f64> {
        self.model.zero_grads();
        let (loss, cache) = self.model.loss_forward(
            self.indices,
            self.true_class,
            DropoutMode::Infer,
            &mut Rng::new(0),
        )?;
        self.model.backward(self.indices, &cache, self.true_class);
        Ok(loss)
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        self.model.params_mut()
    }
}
