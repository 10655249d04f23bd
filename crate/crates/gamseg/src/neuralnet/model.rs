//! The boundary detector: two 3x3 conv layers with ReLU, an optional
//! time max-pool (ablation switch, off by default), a two-layer bidirectional
//! LSTM with dropout between the layers, and a per-frame linear head.

use serde::{Deserialize, Serialize};

use super::layers::{
    dropout_backward, dropout_forward, maxpool_time_backward, maxpool_time_forward, relu_backward,
    relu_forward, BiLstm, BiLstmCache, Conv2d, Linear,
};
use super::tensor::{Scalar, Tensor};
use super::{NetError, NetResult};
use crate::features::FeatureMatrix;
use crate::rng::Rng;

/// Hyperparameters fixed at model construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub input_features: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub max_pool: bool,
    pub lstm_hidden: usize,
    pub dropout: f32,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            input_features: 98,
            conv1_filters: 32,
            conv2_filters: 64,
            max_pool: false,
            lstm_hidden: 128,
            dropout: 0.5,
        }
    }
}

impl ArchitectureConfig {
    /// Small instance for desk-scale experiments and gradient checking.
    pub fn reduced() -> Self {
        ArchitectureConfig {
            input_features: 98,
            conv1_filters: 2,
            conv2_filters: 4,
            max_pool: false,
            lstm_hidden: 8,
            dropout: 0.5,
        }
    }

    /// Width of the flattened conv output fed to the first LSTM layer.
    pub fn lstm_input(&self) -> usize {
        self.conv2_filters * self.input_features
    }
}

/// CNN + BiLSTM + FC boundary detector, generic over float width.
#[derive(Debug, Clone)]
pub struct Model<F: Scalar> {
    pub arch: ArchitectureConfig,
    pub conv1: Conv2d<F>,
    pub conv2: Conv2d<F>,
    pub lstm1: BiLstm<F>,
    pub lstm2: BiLstm<F>,
    pub fc: Linear<F>,
}

/// Intermediate activations retained by a training-mode forward pass; owning
/// one is the proof that backward has a graph to consume.
pub struct ForwardCache<F: Scalar> {
    input: Vec<F>, // [1, T, F]
    t_in: usize,
    t_out: usize,
    conv1_out: Vec<F>,
    relu1_mask: Vec<bool>,
    relu2_mask: Vec<bool>,
    pool_idx: Option<Vec<usize>>,
    lstm1_in: Vec<F>,
    lstm1_cache: BiLstmCache<F>,
    dropout_mask: Option<Vec<F>>,
    lstm2_in: Vec<F>,
    lstm2_cache: BiLstmCache<F>,
    lstm2_out: Vec<F>,
}

impl<F: Scalar> ForwardCache<F> {
    /// Fingerprint of the activation-sign pattern (ReLU masks and pool
    /// choices). Two evaluations with equal fingerprints lie in the same
    /// smooth region of the piecewise loss, which is what a finite-difference
    /// bracket needs to be meaningful.
    pub fn region_fingerprint(&self) -> u64 {
        let mut hash = 0xcbf29ce484222325u64; // FNV-1a
        let mut eat = |byte: u8| {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        };
        for mask in [&self.relu1_mask, &self.relu2_mask] {
            for chunk in mask.chunks(8) {
                let mut byte = 0u8;
                for (b, &m) in chunk.iter().enumerate() {
                    byte |= (m as u8) << b;
                }
                eat(byte);
            }
        }
        if let Some(idx) = &self.pool_idx {
            for &i in idx {
                eat((i & 0xff) as u8);
                eat(((i >> 8) & 0xff) as u8);
            }
        }
        hash
    }
}

impl<F: Scalar> Model<F> {
    pub fn init(arch: &ArchitectureConfig, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let hidden = arch.lstm_hidden;
        let mut model = Model {
            arch: arch.clone(),
            conv1: Conv2d::new(1, arch.conv1_filters, &mut rng),
            conv2: Conv2d::new(arch.conv1_filters, arch.conv2_filters, &mut rng),
            lstm1: BiLstm::new(arch.lstm_input(), hidden, &mut rng),
            lstm2: BiLstm::new(2 * hidden, hidden, &mut rng),
            fc: Linear::new(2 * hidden, 1, &mut rng),
        };
        for (_, p) in model.named_parameters_mut() {
            p.enable_grad();
        }
        model
    }

    /// Stable (name, tensor) listing used by the optimizer and checkpoints.
    pub fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out: Vec<(String, &mut Tensor<F>)> = vec![
            ("conv1.weight".into(), &mut self.conv1.weight),
            ("conv1.bias".into(), &mut self.conv1.bias),
            ("conv2.weight".into(), &mut self.conv2.weight),
            ("conv2.bias".into(), &mut self.conv2.bias),
        ];
        for (layer, lstm) in [("lstm1", &mut self.lstm1), ("lstm2", &mut self.lstm2)] {
            for (dir, cell) in [("fw", &mut lstm.fw), ("bw", &mut lstm.bw)] {
                let [w_ih, w_hh, b_ih, b_hh] = cell.parameters_mut();
                out.push((format!("{layer}.{dir}.w_ih"), w_ih));
                out.push((format!("{layer}.{dir}.w_hh"), w_hh));
                out.push((format!("{layer}.{dir}.b_ih"), b_ih));
                out.push((format!("{layer}.{dir}.b_hh"), b_hh));
            }
        }
        out.push(("fc.weight".into(), &mut self.fc.weight));
        out.push(("fc.bias".into(), &mut self.fc.bias));
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn num_parameters(&mut self) -> usize {
        self.named_parameters_mut().iter().map(|(_, p)| p.numel()).sum()
    }

    /// Frames the head emits for `t_in` input frames.
    pub fn output_len(&self, t_in: usize) -> usize {
        if self.arch.max_pool {
            t_in.div_ceil(2)
        } else {
            t_in
        }
    }

    fn check_input(&self, rows: usize, cols: usize) -> NetResult<()> {
        if rows != self.arch.input_features {
            return Err(NetError::ShapeMismatch(format!(
                "model expects {} feature rows, input has {rows}",
                self.arch.input_features
            )));
        }
        if cols == 0 {
            return Err(NetError::ShapeMismatch("input has no frames".into()));
        }
        Ok(())
    }

    /// Features arrive as rows x T; the conv stack wants a [1, T, rows] grid.
    fn features_to_input(fm: &FeatureMatrix) -> Vec<F> {
        let (rows, cols) = (fm.data.rows, fm.data.cols);
        let mut input = vec![F::ZERO; rows * cols];
        for r in 0..rows {
            let row = fm.data.row(r);
            for t in 0..cols {
                input[t * rows + r] = F::from_f32(row[t]);
            }
        }
        input
    }

    fn run_trunk(
        &self,
        input: Vec<F>,
        t_in: usize,
        dropout_rng: Option<&mut Rng>,
    ) -> (Vec<F>, ForwardCache<F>) {
        let f_len = self.arch.input_features;
        let mut conv1_out = self.conv1.forward(&input, t_in, f_len);
        let relu1_mask = relu_forward(&mut conv1_out);
        let mut conv2_out = self.conv2.forward(&conv1_out, t_in, f_len);
        let relu2_mask = relu_forward(&mut conv2_out);

        let c2 = self.arch.conv2_filters;
        let (pooled, pool_idx, t_out) = if self.arch.max_pool {
            let (p, idx, t_out) = maxpool_time_forward(&conv2_out, c2, t_in, f_len);
            (p, Some(idx), t_out)
        } else {
            (conv2_out, None, t_in)
        };

        // [C, T', F] -> [T', C*F] so each frame carries all channels.
        let width = c2 * f_len;
        let mut lstm1_in = vec![F::ZERO; t_out * width];
        for c in 0..c2 {
            for t in 0..t_out {
                let src = (c * t_out + t) * f_len;
                let dst = t * width + c * f_len;
                lstm1_in[dst..dst + f_len].copy_from_slice(&pooled[src..src + f_len]);
            }
        }

        let (lstm1_out, lstm1_cache) = self.lstm1.forward(&lstm1_in, t_out);
        let mut lstm2_in = lstm1_out;
        let dropout_mask = match dropout_rng {
            Some(rng) if self.arch.dropout > 0.0 => {
                Some(dropout_forward(&mut lstm2_in, self.arch.dropout, rng))
            }
            _ => None,
        };
        let (lstm2_out, lstm2_cache) = self.lstm2.forward(&lstm2_in, t_out);
        let logits = self.fc.forward(&lstm2_out, t_out);

        let cache = ForwardCache {
            input,
            t_in,
            t_out,
            conv1_out,
            relu1_mask,
            relu2_mask,
            pool_idx,
            lstm1_in,
            lstm1_cache,
            dropout_mask,
            lstm2_in,
            lstm2_cache,
            lstm2_out,
        };
        (logits, cache)
    }

    /// Deterministic inference pass: dropout disabled.
    pub fn forward_eval(&self, fm: &FeatureMatrix) -> NetResult<Vec<F>> {
        self.check_input(fm.data.rows, fm.data.cols)?;
        let input = Self::features_to_input(fm);
        let (logits, _) = self.run_trunk(input, fm.data.cols, None);
        Ok(logits)
    }

    /// Training pass: applies dropout and returns the activation cache needed
    /// by [`Model::backward`].
    pub fn forward_train(
        &self,
        fm: &FeatureMatrix,
        rng: &mut Rng,
    ) -> NetResult<(Vec<F>, ForwardCache<F>)> {
        self.check_input(fm.data.rows, fm.data.cols)?;
        let input = Self::features_to_input(fm);
        Ok(self.run_trunk(input, fm.data.cols, Some(rng)))
    }

    /// Gradient-check variant: keeps the cache but skips dropout so the loss
    /// is a deterministic function of the parameters.
    pub fn forward_train_no_dropout(
        &self,
        fm: &FeatureMatrix,
    ) -> NetResult<(Vec<F>, ForwardCache<F>)> {
        self.check_input(fm.data.rows, fm.data.cols)?;
        let input = Self::features_to_input(fm);
        Ok(self.run_trunk(input, fm.data.cols, None))
    }

    /// Backpropagate `dlogits` through the cache, accumulating parameter
    /// gradients. Consumes the cache: a backward pass always has a matching
    /// forward pass by construction.
    pub fn backward(&mut self, cache: ForwardCache<F>, dlogits: &[F]) {
        assert_eq!(dlogits.len(), cache.t_out, "logit gradient length mismatch");
        let f_len = self.arch.input_features;
        let c2 = self.arch.conv2_filters;
        let t_out = cache.t_out;

        let d_lstm2_out = self.fc.backward(&cache.lstm2_out, dlogits, t_out);
        let mut d_lstm2_in =
            self.lstm2.backward(&cache.lstm2_in, &cache.lstm2_cache, &d_lstm2_out, t_out);
        if let Some(mask) = &cache.dropout_mask {
            dropout_backward(&mut d_lstm2_in, mask);
        }
        let d_lstm1_in =
            self.lstm1.backward(&cache.lstm1_in, &cache.lstm1_cache, &d_lstm2_in, t_out);

        // [T', C*F] -> [C, T', F]
        let width = c2 * f_len;
        let mut d_pooled = vec![F::ZERO; c2 * t_out * f_len];
        for c in 0..c2 {
            for t in 0..t_out {
                let src = t * width + c * f_len;
                let dst = (c * t_out + t) * f_len;
                d_pooled[dst..dst + f_len].copy_from_slice(&d_lstm1_in[src..src + f_len]);
            }
        }

        let mut d_conv2 = match &cache.pool_idx {
            Some(idx) => maxpool_time_backward(&d_pooled, idx, c2, cache.t_in, t_out, f_len),
            None => d_pooled,
        };
        relu_backward(&mut d_conv2, &cache.relu2_mask);
        let mut d_conv1 = self.conv2.backward(&cache.conv1_out, &d_conv2, cache.t_in, f_len);
        relu_backward(&mut d_conv1, &cache.relu1_mask);
        let _ = self.conv1.backward(&cache.input, &d_conv1, cache.t_in, f_len);
    }
}
