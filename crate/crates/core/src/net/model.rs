//! Parameter storage, forward pass, and backpropagation.
//!
//! All parameters live in one flat buffer addressed through a fixed block
//! table, which keeps the optimizer, serialization, and finite-difference
//! checks trivial.

use super::{NetConfig, NetError};
use crate::label::ScoreInterval;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
    pub heads: usize,
    pub head_width: usize,
    pub n_clusters: usize,
}

impl NetDims {
    pub fn from_config(config: &NetConfig, n_clusters: usize) -> Self {
        NetDims {
            input: config.input_dim,
            hidden: config.hidden_dim,
            latent: config.latent_dim,
            heads: config.attention_heads.max(1),
            head_width: config.head_width,
            n_clusters,
        }
    }

    /// (name, rows, cols) for every parameter block, in storage order.
    pub fn blocks(&self) -> [(&'static str, usize, usize); 21] {
        let d = self.latent;
        [
            ("enc_w1", self.hidden, self.input),
            ("enc_b1", self.hidden, 1),
            ("enc_w2", d, self.hidden),
            ("enc_b2", d, 1),
            ("dec_w1", self.hidden, d),
            ("dec_b1", self.hidden, 1),
            ("dec_w2", self.input, self.hidden),
            ("dec_b2", self.input, 1),
            ("embedding", self.n_clusters, d),
            ("attn_q", d, d),
            ("attn_k", d, d),
            ("attn_v", d, d),
            ("attn_o", d, d),
            ("score_w1", self.head_width, 2 * d),
            ("score_b1", self.head_width, 1),
            ("score_w2", 1, self.head_width),
            ("score_b2", 1, 1),
            ("weight_w1", self.head_width, 2 * d),
            ("weight_b1", self.head_width, 1),
            ("weight_w2", self.input, self.head_width),
            ("weight_b2", self.input, 1),
        ]
    }

    pub fn total_len(&self) -> usize {
        self.blocks().iter().map(|(_, r, c)| r * c).sum()
    }

    fn offset_of(&self, name: &str) -> (usize, usize) {
        let mut offset = 0;
        for (block, rows, cols) in self.blocks() {
            let len = rows * cols;
            if block == name {
                return (offset, len);
            }
            offset += len;
        }
        panic!("unknown parameter block `{name}`");
    }
}

/// All learned parameters plus the dims that shape them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub dims: NetDims,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl NetParams {
    /// Seeded initialization: uniform Xavier ranges for the dense blocks,
    /// a tighter band for the embedding table, zero biases.
    pub fn init(dims: NetDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(dims.total_len());
        for (name, rows, cols) in dims.blocks() {
            let len = rows * cols;
            if name.contains("_b") {
                // bias vectors start at zero
                values.extend(std::iter::repeat_n(0.0, len));
            } else if name == "embedding" {
                values.extend((0..len).map(|_| rng.random_range(-0.1..0.1)));
            } else {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                values.extend((0..len).map(|_| rng.random_range(-a..a)));
            }
        }
        NetParams { dims, seed, values }
    }

    pub fn block(&self, name: &str) -> &[f64] {
        let (offset, len) = self.dims.offset_of(name);
        &self.values[offset..offset + len]
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }
}

/// Slice a gradient buffer the same way params are sliced.
fn grad_block<'g>(grads: &'g mut [f64], dims: &NetDims, name: &str) -> &'g mut [f64] {
    let (offset, len) = dims.offset_of(name);
    &mut grads[offset..offset + len]
}

/// y = W x with W row-major (rows × cols).
fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    (0..rows)
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            row.iter().zip(x).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// y = Wᵀ x.
fn matvec_t(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows);
    let mut y = vec![0.0; cols];
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        for (yc, wc) in y.iter_mut().zip(row) {
            *yc += wc * x[r];
        }
    }
    y
}

/// G += a ⊗ b.
fn outer_acc(grad: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, av) in a.iter().enumerate() {
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (g, bv) in row.iter_mut().zip(b) {
            *g += av * bv;
        }
    }
}

fn add_in_place(target: &mut [f64], source: &[f64]) {
    for (t, s) in target.iter_mut().zip(source) {
        *t += s;
    }
}

fn activate(x: &[f64]) -> Vec<f64> {
    // Smooth hidden activation keeps the whole network differentiable, so
    // finite-difference checks hold everywhere.
    x.iter().map(|v| v.tanh()).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|v| v / total).collect()
}

/// What the heads produced for one user.
#[derive(Debug, Clone)]
pub struct ScoreOutput {
    /// Bounded raw score in [−1, 1].
    pub raw_score: f64,
    /// Softmax feature weights: each in [0, 1], summing to 1.
    pub feature_weights: Vec<f64>,
    /// Affine map of the raw score into the cluster interval, rounded and
    /// clamped into [1, 900].
    pub zscore: u16,
}

/// Every intermediate value backprop needs, one user at a time.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub cluster_id: i64,
    pub enc_h_pre: Vec<f64>,
    pub enc_h: Vec<f64>,
    pub latent: Vec<f64>,
    pub dec_h_pre: Vec<f64>,
    pub dec_h: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub embedding: Vec<f64>,
    /// Projected tokens, 2 × latent each.
    pub q: [Vec<f64>; 2],
    pub k: [Vec<f64>; 2],
    pub v: [Vec<f64>; 2],
    /// Per head: row-softmaxed 2×2 attention weights.
    pub attn: Vec<[[f64; 2]; 2]>,
    /// Concatenated head outputs per token (pre output-projection).
    pub head_cat: [Vec<f64>; 2],
    /// Output-projected tokens.
    pub attended: [Vec<f64>; 2],
    /// Both attended tokens, concatenated (the heads' input).
    pub joint: Vec<f64>,
    pub score_h_pre: Vec<f64>,
    pub score_h: Vec<f64>,
    pub score_pre: f64,
    pub weight_h_pre: Vec<f64>,
    pub weight_h: Vec<f64>,
    pub logits: Vec<f64>,
    pub output: ScoreOutput,
}

/// Affine scale of a bounded score into its interval:
/// `round(lower + (s+1)/2 · (upper − lower))`, clamped into [1, 900].
pub fn scale_score(raw: f64, interval: &ScoreInterval) -> u16 {
    let continuous = scale_score_continuous(raw, interval);
    (continuous.round() as i64).clamp(
        i64::from(crate::label::SCORE_MIN),
        i64::from(crate::label::SCORE_MAX),
    ) as u16
}

/// Pre-rounding score the losses operate on.
pub fn scale_score_continuous(raw: f64, interval: &ScoreInterval) -> f64 {
    f64::from(interval.lower) + (raw + 1.0) / 2.0 * f64::from(interval.width())
}

/// Run one user through the network.
pub fn forward(
    params: &NetParams,
    features: &[f64],
    cluster_id: i64,
    interval: &ScoreInterval,
) -> Result<ScoreOutput, NetError> {
    forward_traced(params, features, cluster_id, interval).map(|t| t.output)
}

/// Forward pass keeping every intermediate for backprop and diagnostics.
pub fn forward_traced(
    params: &NetParams,
    features: &[f64],
    cluster_id: i64,
    interval: &ScoreInterval,
) -> Result<ForwardTrace, NetError> {
    let d = &params.dims;
    if cluster_id < 0 || cluster_id as usize >= d.n_clusters {
        return Err(NetError::UnknownCluster {
            id: cluster_id,
            n_clusters: d.n_clusters,
        });
    }
    debug_assert_eq!(features.len(), d.input);

    // Shared component 1: autoencoder.
    let enc_h_pre = {
        let mut v = matvec(params.block("enc_w1"), features, d.hidden, d.input);
        add_in_place(&mut v, params.block("enc_b1"));
        v
    };
    let enc_h = activate(&enc_h_pre);
    let latent = {
        let mut v = matvec(params.block("enc_w2"), &enc_h, d.latent, d.hidden);
        add_in_place(&mut v, params.block("enc_b2"));
        v
    };
    let dec_h_pre = {
        let mut v = matvec(params.block("dec_w1"), &latent, d.hidden, d.latent);
        add_in_place(&mut v, params.block("dec_b1"));
        v
    };
    let dec_h = activate(&dec_h_pre);
    let reconstruction = {
        let mut v = matvec(params.block("dec_w2"), &dec_h, d.input, d.hidden);
        add_in_place(&mut v, params.block("dec_b2"));
        v
    };

    // Shared component 2: cluster embedding.
    let embedding =
        params.block("embedding")[cluster_id as usize * d.latent..][..d.latent].to_vec();

    // Attention over the (latent, embedding) token pair.
    let tokens = [latent.clone(), embedding.clone()];
    let project = |name: &str| -> [Vec<f64>; 2] {
        let w = params.block(name);
        [
            matvec(w, &tokens[0], d.latent, d.latent),
            matvec(w, &tokens[1], d.latent, d.latent),
        ]
    };
    let q = project("attn_q");
    let k = project("attn_k");
    let v = project("attn_v");

    let dh = d.latent / d.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut attn = Vec::with_capacity(d.heads);
    let mut head_cat = [vec![0.0; d.latent], vec![0.0; d.latent]];
    for h in 0..d.heads {
        let span = h * dh..(h + 1) * dh;
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            a[span.clone()].iter().zip(&b[span.clone()]).map(|(x, y)| x * y).sum()
        };
        let mut weights = [[0.0f64; 2]; 2];
        for (i, q_i) in q.iter().enumerate() {
            let scores = [dot(q_i, &k[0]) * scale, dot(q_i, &k[1]) * scale];
            let soft = softmax(&scores);
            weights[i] = [soft[0], soft[1]];
            for (j, w_ij) in weights[i].iter().enumerate() {
                for (slot, value) in head_cat[i][span.clone()].iter_mut().zip(&v[j][span.clone()])
                {
                    *slot += w_ij * value;
                }
            }
        }
        attn.push(weights);
    }

    let wo = params.block("attn_o");
    let attended = [
        matvec(wo, &head_cat[0], d.latent, d.latent),
        matvec(wo, &head_cat[1], d.latent, d.latent),
    ];
    let mut joint = Vec::with_capacity(2 * d.latent);
    joint.extend_from_slice(&attended[0]);
    joint.extend_from_slice(&attended[1]);

    // Score head.
    let score_h_pre = {
        let mut v = matvec(params.block("score_w1"), &joint, d.head_width, 2 * d.latent);
        add_in_place(&mut v, params.block("score_b1"));
        v
    };
    let score_h = activate(&score_h_pre);
    let score_pre = params.block("score_w2")
        .iter()
        .zip(&score_h)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        + params.block("score_b2")[0];
    let raw_score = score_pre.tanh();

    // Feature-weight head.
    let weight_h_pre = {
        let mut v = matvec(params.block("weight_w1"), &joint, d.head_width, 2 * d.latent);
        add_in_place(&mut v, params.block("weight_b1"));
        v
    };
    let weight_h = activate(&weight_h_pre);
    let logits = {
        let mut v = matvec(params.block("weight_w2"), &weight_h, d.input, d.head_width);
        add_in_place(&mut v, params.block("weight_b2"));
        v
    };
    let feature_weights = softmax(&logits);

    let output = ScoreOutput {
        raw_score,
        feature_weights: feature_weights.clone(),
        zscore: scale_score(raw_score, interval),
    };

    Ok(ForwardTrace {
        cluster_id,
        enc_h_pre,
        enc_h,
        latent,
        dec_h_pre,
        dec_h,
        reconstruction,
        embedding,
        q,
        k,
        v,
        attn,
        head_cat,
        attended,
        joint,
        score_h_pre,
        score_h,
        score_pre,
        weight_h_pre,
        weight_h,
        logits,
        output,
    })
}

/// Upstream loss gradients for one user.
#[derive(Debug, Clone, Default)]
pub struct UserGrad {
    /// d loss / d raw_score.
    pub d_raw_score: f64,
    /// d loss / d feature_weights (post-softmax).
    pub d_weights: Vec<f64>,
    /// d loss / d reconstruction.
    pub d_reconstruction: Vec<f64>,
}

/// Accumulate parameter gradients for one user. `features` must be the
/// same vector the trace was produced from.
pub fn backward(
    params: &NetParams,
    features: &[f64],
    trace: &ForwardTrace,
    upstream: &UserGrad,
    grads: &mut [f64],
) {
    let d = params.dims;
    let dh = d.latent / d.heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // Score head backward.
    let d_score_pre = upstream.d_raw_score * (1.0 - trace.output.raw_score.powi(2));
    let mut d_joint = vec![0.0; 2 * d.latent];
    {
        let d_score_h: Vec<f64> = params.block("score_w2")
            .iter()
            .map(|w| w * d_score_pre)
            .collect();
        let d_score_h_pre: Vec<f64> = d_score_h
            .iter()
            .zip(&trace.score_h)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        let gw2 = grad_block(grads, &d, "score_w2");
        for (g, h) in gw2.iter_mut().zip(&trace.score_h) {
            *g += d_score_pre * h;
        }
        grad_block(grads, &d, "score_b2")[0] += d_score_pre;
        outer_acc(grad_block(grads, &d, "score_w1"), &d_score_h_pre, &trace.joint);
        add_in_place(grad_block(grads, &d, "score_b1"), &d_score_h_pre);
        add_in_place(
            &mut d_joint,
            &matvec_t(params.block("score_w1"), &d_score_h_pre, d.head_width, 2 * d.latent),
        );
    }

    // Weight head backward (softmax Jacobian first).
    if !upstream.d_weights.is_empty() {
        let a = &trace.output.feature_weights;
        let inner: f64 = upstream.d_weights.iter().zip(a).map(|(g, p)| g * p).sum();
        let d_logits: Vec<f64> = upstream
            .d_weights
            .iter()
            .zip(a)
            .map(|(g, p)| p * (g - inner))
            .collect();
        let d_weight_h = matvec_t(params.block("weight_w2"), &d_logits, d.input, d.head_width);
        let d_weight_h_pre: Vec<f64> = d_weight_h
            .iter()
            .zip(&trace.weight_h)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        outer_acc(grad_block(grads, &d, "weight_w2"), &d_logits, &trace.weight_h);
        add_in_place(grad_block(grads, &d, "weight_b2"), &d_logits);
        outer_acc(grad_block(grads, &d, "weight_w1"), &d_weight_h_pre, &trace.joint);
        add_in_place(grad_block(grads, &d, "weight_b1"), &d_weight_h_pre);
        add_in_place(
            &mut d_joint,
            &matvec_t(params.block("weight_w1"), &d_weight_h_pre, d.head_width, 2 * d.latent),
        );
    }

    // Through the output projection.
    let d_attended = [d_joint[..d.latent].to_vec(), d_joint[d.latent..].to_vec()];
    let wo = params.block("attn_o");
    let mut d_head_cat = [vec![0.0; d.latent], vec![0.0; d.latent]];
    for token in 0..2 {
        outer_acc(grad_block(grads, &d, "attn_o"), &d_attended[token], &trace.head_cat[token]);
        add_in_place(
            &mut d_head_cat[token],
            &matvec_t(wo, &d_attended[token], d.latent, d.latent),
        );
    }

    // Attention backward per head.
    let mut d_q = [vec![0.0; d.latent], vec![0.0; d.latent]];
    let mut d_k = [vec![0.0; d.latent], vec![0.0; d.latent]];
    let mut d_v = [vec![0.0; d.latent], vec![0.0; d.latent]];
    for h in 0..d.heads {
        let span = h * dh..(h + 1) * dh;
        let weights = &trace.attn[h];
        for i in 0..2 {
            let d_out = &d_head_cat[i][span.clone()];
            // dA[i][j] and dV accumulation.
            let mut d_attn_row = [0.0f64; 2];
            for j in 0..2 {
                d_attn_row[j] = d_out
                    .iter()
                    .zip(&trace.v[j][span.clone()])
                    .map(|(g, value)| g * value)
                    .sum();
                for (slot, g) in d_v[j][span.clone()].iter_mut().zip(d_out) {
                    *slot += weights[i][j] * g;
                }
            }
            // Softmax row Jacobian.
            let inner = d_attn_row[0] * weights[i][0] + d_attn_row[1] * weights[i][1];
            let d_scores = [
                weights[i][0] * (d_attn_row[0] - inner),
                weights[i][1] * (d_attn_row[1] - inner),
            ];
            for j in 0..2 {
                let g = d_scores[j] * scale;
                for (slot, kv) in d_q[i][span.clone()].iter_mut().zip(&trace.k[j][span.clone()]) {
                    *slot += g * kv;
                }
                for (slot, qv) in d_k[j][span.clone()].iter_mut().zip(&trace.q[i][span.clone()]) {
                    *slot += g * qv;
                }
            }
        }
    }

    // Through the Q/K/V projections into the two tokens.
    let tokens = [&trace.latent, &trace.embedding];
    let mut d_tokens = [vec![0.0; d.latent], vec![0.0; d.latent]];
    for (name, d_proj) in [("attn_q", &d_q), ("attn_k", &d_k), ("attn_v", &d_v)] {
        let w = params.block(name).to_vec();
        for token in 0..2 {
            outer_acc(grad_block(grads, &d, name), &d_proj[token], tokens[token]);
            add_in_place(
                &mut d_tokens[token],
                &matvec_t(&w, &d_proj[token], d.latent, d.latent),
            );
        }
    }

    // Embedding gradient.
    let emb_grad = grad_block(grads, &d, "embedding");
    let row = trace.cluster_id as usize * d.latent;
    add_in_place(&mut emb_grad[row..row + d.latent], &d_tokens[1]);

    // Decoder backward (reconstruction path into the latent).
    let mut d_latent = d_tokens[0].clone();
    if !upstream.d_reconstruction.is_empty() {
        let d_rec = &upstream.d_reconstruction;
        outer_acc(grad_block(grads, &d, "dec_w2"), d_rec, &trace.dec_h);
        add_in_place(grad_block(grads, &d, "dec_b2"), d_rec);
        let d_dec_h = matvec_t(params.block("dec_w2"), d_rec, d.input, d.hidden);
        let d_dec_h_pre: Vec<f64> = d_dec_h
            .iter()
            .zip(&trace.dec_h)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        outer_acc(grad_block(grads, &d, "dec_w1"), &d_dec_h_pre, &trace.latent);
        add_in_place(grad_block(grads, &d, "dec_b1"), &d_dec_h_pre);
        add_in_place(
            &mut d_latent,
            &matvec_t(params.block("dec_w1"), &d_dec_h_pre, d.hidden, d.latent),
        );
    }

    // Encoder backward.
    outer_acc(grad_block(grads, &d, "enc_w2"), &d_latent, &trace.enc_h);
    add_in_place(grad_block(grads, &d, "enc_b2"), &d_latent);
    let d_enc_h = matvec_t(params.block("enc_w2"), &d_latent, d.latent, d.hidden);
    let d_enc_h_pre: Vec<f64> = d_enc_h
        .iter()
        .zip(&trace.enc_h)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    outer_acc(grad_block(grads, &d, "enc_w1"), &d_enc_h_pre, features);
    add_in_place(grad_block(grads, &d, "enc_b1"), &d_enc_h_pre);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro_params(seed: u64) -> NetParams {
        let dims = NetDims {
            input: 4,
            hidden: 6,
            latent: 4,
            heads: 2,
            head_width: 5,
            n_clusters: 2,
        };
        NetParams::init(dims, seed)
    }

    fn interval() -> ScoreInterval {
        ScoreInterval {
            cluster_id: 0,
            lower: 300,
            upper: 400,
        }
    }

    #[test]
    fn outputs_respect_structural_ranges_untrained() {
        let params = micro_params(3);
        for c in 0..2 {
            let trace =
                forward_traced(&params, &[0.5, -1.2, 3.0, 0.0], c, &interval()).unwrap();
            let out = &trace.output;
            assert!(out.raw_score > -1.0 && out.raw_score < 1.0);
            let sum: f64 = out.feature_weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "simplex sum {sum}");
            assert!(out.feature_weights.iter().all(|w| (0.0..=1.0).contains(w)));
            assert!((1..=900).contains(&out.zscore));
        }
    }

    #[test]
    fn attention_rows_sum_to_one_per_head() {
        let params = micro_params(5);
        let trace = forward_traced(&params, &[1.0, 2.0, -0.5, 0.25], 1, &interval()).unwrap();
        assert_eq!(trace.attn.len(), 2);
        for head in &trace.attn {
            for row in head {
                assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_inputs_identical_outputs() {
        let params = micro_params(9);
        let a = forward(&params, &[0.1, 0.2, 0.3, 0.4], 0, &interval()).unwrap();
        let b = forward(&params, &[0.1, 0.2, 0.3, 0.4], 0, &interval()).unwrap();
        assert_eq!(a.raw_score, b.raw_score);
        assert_eq!(a.feature_weights, b.feature_weights);
    }

    #[test]
    fn unknown_cluster_is_refused() {
        let params = micro_params(1);
        assert!(matches!(
            forward(&params, &[0.0; 4], 5, &interval()),
            Err(NetError::UnknownCluster { id: 5, n_clusters: 2 })
        ));
        assert!(forward(&params, &[0.0; 4], -1, &interval()).is_err());
    }

    #[test]
    fn scale_score_hits_endpoints_and_midpoint() {
        let iv = interval();
        assert_eq!(scale_score(-1.0, &iv), 300);
        assert_eq!(scale_score(1.0, &iv), 400);
        assert_eq!(scale_score(0.0, &iv), 350);
    }

    #[test]
    fn scale_score_is_monotone_and_clamped() {
        let iv = interval();
        let mut last = 0u16;
        for step in 0..=100 {
            let s = -1.0 + 2.0 * step as f64 / 100.0;
            let z = scale_score(s, &iv);
            assert!(z >= last);
            last = z;
        }
        let wide = ScoreInterval { cluster_id: 0, lower: 1, upper: 900 };
        assert_eq!(scale_score(-1.0, &wide), 1);
        assert_eq!(scale_score(1.0, &wide), 900);
    }

    /// Full-network finite-difference check: every parameter's analytic
    /// gradient of a smooth composite loss matches central differences.
    #[test]
    fn gradients_match_finite_differences() {
        let params = micro_params(11);
        let features: Vec<Vec<f64>> = vec![
            vec![0.5, -1.0, 0.7, 0.2],
            vec![-0.3, 0.9, -0.2, 1.1],
            vec![1.4, 0.1, 0.6, -0.8],
        ];
        let clusters = [0i64, 1, 0];
        let iv = interval();

        // Smooth scalar loss exercising all three upstream paths.
        let loss = |p: &NetParams| -> f64 {
            let mut total = 0.0;
            for (x, &c) in features.iter().zip(&clusters) {
                let t = forward_traced(p, x, c, &iv).unwrap();
                total += t.output.raw_score.powi(2);
                total += t
                    .output
                    .feature_weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| (w - [0.4, 0.3, 0.2, 0.1][j]).powi(2))
                    .sum::<f64>();
                total += t
                    .reconstruction
                    .iter()
                    .zip(x)
                    .map(|(r, xv)| 0.1 * (r - xv).powi(2))
                    .sum::<f64>();
            }
            total
        };

        let mut grads = params.zeros_like();
        for (x, &c) in features.iter().zip(&clusters) {
            let t = forward_traced(&params, x, c, &iv).unwrap();
            let upstream = UserGrad {
                d_raw_score: 2.0 * t.output.raw_score,
                d_weights: t
                    .output
                    .feature_weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| 2.0 * (w - [0.4, 0.3, 0.2, 0.1][j]))
                    .collect(),
                d_reconstruction: t
                    .reconstruction
                    .iter()
                    .zip(x)
                    .map(|(r, xv)| 0.2 * (r - xv))
                    .collect(),
            };
            backward(&params, x, &t, &upstream, &mut grads);
        }

        let h = 1e-5;
        let mut worst = 0.0f64;
        #[allow(clippy::needless_range_loop)]
        for i in 0..params.values.len() {
            let mut plus = params.clone();
            plus.values[i] += h;
            let mut minus = params.clone();
            minus.values[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }
}
