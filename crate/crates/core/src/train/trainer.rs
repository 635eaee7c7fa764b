// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, write_manifest, CheckpointManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::influence::TokensFile;
use crate::model::{ModelConfig, ModelWeights};
use crate::train::{
    adam_step, evaluate, loss_and_grads, make_induction_batch, make_probe_sequence, AdamHyper, BatchStats,
    OptimizerState,
};

const INIT_STD: f64 = 0.02;
const EVAL_BATCH: usize = 64;

// independent ChaCha streams derived from the one seed
const STREAM_DATA: u64 = 1;
const STREAM_PROBE: u64 = 2;
const STREAM_EVAL: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub checkpoint_schedule: Vec<usize>,
    pub out_dir: PathBuf,
}

impl TrainConfig {
    /// Desk-scale defaults: 2 layers x 4 heads, d_model 64, 5000 steps.
    pub fn desk_default(out_dir: impl Into<PathBuf>) -> Self {
        let steps = 5000;
        TrainConfig {
            model: ModelConfig::desk_default(),
            steps,
            batch_size: 32,
            seq_len: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_schedule: default_schedule(steps),
            out_dir: out_dir.into(),
        }
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let fail = |m: String| Err(Error::Config(m));
        if self.seq_len < 2 || !self.seq_len.is_multiple_of(2) {
            return fail(format!("seq_len {} must be even and >= 2", self.seq_len));
        }
        if self.seq_len > self.model.n_ctx {
            return fail(format!("seq_len {} exceeds n_ctx {}", self.seq_len, self.model.n_ctx));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        let s = &self.checkpoint_schedule;
        if s.first() != Some(&0) || s.last() != Some(&self.steps) {
            return fail("checkpoint schedule must start at 0 and end at steps".into());
        }
        if s.windows(2).any(|w| w[0] >= w[1]) {
            return fail("checkpoint schedule must be strictly increasing".into());
        }
        Ok(())
    }
}

/// `{0} ∪ {2^k <= steps} ∪ {multiples of 500 <= steps} ∪ {steps}`, sorted.
pub fn default_schedule(steps: usize) -> Vec<usize> {
    let mut out = vec![0, steps];
    let mut p = 1usize;
    while p <= steps {
        out.push(p);
        p *= 2;
    }
    out.extend((1..=steps / 500).map(|k| k * 500));
    out.sort_unstable();
    out.dedup();
    out
}

/// GPT-style init: N(0, 0.02) for embeddings and projections, zero biases,
/// unit layer-norm scales. The unembedding starts at zero so the initial
/// prediction is exactly uniform.
pub fn init_weights(config: &ModelConfig, seed: u64) -> ModelWeights<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, INIT_STD as f32).expect("valid std");
    let mut w = ModelWeights::<f32>::zeros(config);
    for (name, mut t) in w.tensors_mut() {
        let leaf = name.rsplit('.').next().unwrap_or_default();
        if name == "unembed.W_U" {
            continue;
        }
        if name.ends_with("ln1.w") || name.ends_with("ln2.w") || name == "ln_f.w" {
            t.fill(1.0);
        } else if leaf.starts_with('W') {
            t.mapv_inplace(|_| normal.sample(&mut rng));
        }
    }
    w
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub manifest_path: PathBuf,
    pub tokens_path: PathBuf,
    #[serde(skip)]
    pub manifest: CheckpointManifest,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_repeat_accuracy: f64,
    pub final_first_half_accuracy: f64,
    pub seconds: f64,
}

pub fn checkpoint_file_name(step: usize) -> String {
    format!("ckpt_{step:06}.cgt")
}

pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(config, |_, _| {})
}

/// Train and write the checkpoint series, `manifest.json`, `train_log.csv`,
/// `tokens.json` (a held-out repeated probe) and `train_summary.json` into
/// `config.out_dir`. `progress` is called after every optimizer step.
pub fn train_with_progress(config: &TrainConfig, mut progress: impl FnMut(usize, &BatchStats)) -> Result<TrainReport> {
    config.validate()?;
    let started = Instant::now();
    let out = config.out_dir.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mcfg = &config.model;
    let hyper = config.hyper();
    let mut weights = init_weights(mcfg, config.seed);
    let mut state = OptimizerState::<f32>::new(mcfg);
    let mut data_rng = stream(config.seed, STREAM_DATA);

    let log_path = out.join("train_log.csv");
    let mut log = String::from("step,loss\n");
    let mut entries = Vec::new();
    let mut schedule = config.checkpoint_schedule.iter().peekable();
    let mut initial_loss = f64::NAN;

    for step in 0..=config.steps {
        if schedule.peek() == Some(&&step) {
            schedule.next();
            let name = checkpoint_file_name(step);
            save_checkpoint(&weights, mcfg, step as u64, &out.join(&name))?;
            entries.push(ManifestEntry {
                step: step as u64,
                path: name,
            });
        }
        if step == config.steps {
            break;
        }
        let batch = make_induction_batch(&mut data_rng, config.batch_size, config.seq_len, mcfg.vocab_size)?;
        let (stats, grads) = loss_and_grads(&weights, mcfg, &batch).map_err(|e| match e {
            Error::NonFiniteLoss => Error::Divergence { step },
            other => other,
        })?;
        if step == 0 {
            initial_loss = stats.loss;
        }
        log.push_str(&format!("{step},{}\n", stats.loss));
        adam_step(&mut weights, &grads, &mut state, &hyper);
        progress(step, &stats);
    }
    write_file(&log_path, log.as_bytes())?;

    let manifest = CheckpointManifest {
        model_config: mcfg.clone(),
        checkpoints: entries,
    };
    let manifest_path = out.join("manifest.json");
    write_manifest(&manifest, &manifest_path)?;

    let (tokens, target) = make_probe_sequence(&mut stream(config.seed, STREAM_PROBE), config.seq_len, mcfg.vocab_size)?;
    let tokens_path = out.join("tokens.json");
    TokensFile { tokens, target }.write(&tokens_path)?;

    let eval_batch = make_induction_batch(
        &mut stream(config.seed, STREAM_EVAL),
        EVAL_BATCH,
        config.seq_len,
        mcfg.vocab_size,
    )?;
    let final_stats = evaluate(&weights, mcfg, &eval_batch)?;

    let report = TrainReport {
        manifest_path,
        tokens_path,
        manifest,
        initial_loss,
        final_loss: final_stats.loss,
        final_repeat_accuracy: final_stats.repeat_accuracy,
        final_first_half_accuracy: final_stats.first_half_accuracy,
        seconds: started.elapsed().as_secs_f64(),
    };
    let summary = serde_json::json!({ "config": config, "report": report });
    let summary_path = out.join("train_summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::json(&summary_path, e))?;
    write_file(&summary_path, text.as_bytes())?;
    Ok(report)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
