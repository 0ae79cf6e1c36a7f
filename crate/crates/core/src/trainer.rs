//! Interleaved training of the four networks (one epoch per player per
//! outer iteration), ablation variants, and checkpointing.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{self, LossBreakdown, PhaseGrads};
use crate::matrix::Matrix;
use crate::model::{build_model_with_output, GeneratorOutput, QuadModel, Role};
use crate::net::{adam_step, AdamHyper, AdamState, Network};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Train {G_c, c} only; the h-factor in the product loss becomes 1.
    COnly,
    /// Train {G_h, h} only; the c-factor becomes 1.
    HOnly,
    /// Train c, h and G_c; both discriminative players feed from G_c.
    SharedGc,
    /// Train c, h and G_h; both feed from G_h.
    SharedGh,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub variant: Variant,
    pub symmetric_lh: bool,
    pub seed: u64,
    pub shuffle: bool,
    pub hidden: Vec<usize>,
    pub generator_hidden: Vec<usize>,
    pub use_batch_norm: bool,
    pub generator_output: GeneratorOutput,
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            lambda: 1.0,
            variant: Variant::Full,
            // The symmetric form trains h in both pair orders and is
            // noticeably more stable on the small 2-D configurations.
            symmetric_lh: true,
            seed: 0,
            shuffle: true,
            hidden: vec![64, 32],
            generator_hidden: vec![64, 32],
            // Noisy on the small batches of the 2-D configs.
            use_batch_norm: false,
            generator_output: GeneratorOutput::Identity,
            adam: AdamHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    GC,
    C,
    GH,
    H,
}

/// One line of the JSON-lines training log: per-epoch, per-player
/// averaged loss parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub player: Player,
    #[serde(flatten)]
    pub parts: LossBreakdown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptStates {
    pub c: AdamState,
    pub h: AdamState,
    pub g_c: AdamState,
    pub g_h: AdamState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub model: QuadModel,
    pub opt: OptStates,
    pub rng: ChaCha8Rng,
    /// Completed outer iterations.
    pub epoch: usize,
    pub steps: u64,
    /// Training-set statistics, carried so evaluation can standardize
    /// new inputs consistently.
    #[serde(default)]
    pub standardization: Option<crate::data::Standardization>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let json = serde_json::to_vec(ckpt)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Checkpoint(format!("corrupt checkpoint {}: {e}", path.display())))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {} unsupported (expected {})",
            ckpt.version, CHECKPOINT_VERSION
        )));
    }
    ckpt.model.validate()?;
    Ok(ckpt)
}

pub struct Trainer {
    pub model: QuadModel,
    pub opt: OptStates,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
    pub epoch: usize,
    pub steps: u64,
}

impl Trainer {
    pub fn new(d: usize, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        // One seed per network so architectures stay decoupled.
        let c = build_model_with_output(
            Role::Classifier,
            d,
            &config.hidden,
            config.use_batch_norm,
            config.generator_output,
            config.seed.wrapping_add(1),
        )?;
        let h = build_model_with_output(
            Role::Comparator,
            d,
            &config.hidden,
            config.use_batch_norm,
            config.generator_output,
            config.seed.wrapping_add(2),
        )?;
        let g_c = build_model_with_output(
            Role::Generator,
            d,
            &config.generator_hidden,
            config.use_batch_norm,
            config.generator_output,
            config.seed.wrapping_add(3),
        )?;
        let g_h = build_model_with_output(
            Role::Generator,
            d,
            &config.generator_hidden,
            config.use_batch_norm,
            config.generator_output,
            config.seed.wrapping_add(4),
        )?;
        let model = QuadModel { c, h, g_c, g_h, input_dim: d };
        model.validate()?;
        let opt = OptStates {
            c: AdamState::new(&model.c, config.adam),
            h: AdamState::new(&model.h, config.adam),
            g_c: AdamState::new(&model.g_c, config.adam),
            g_h: AdamState::new(&model.g_h, config.adam),
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer { model, opt, config, rng, epoch: 0, steps: 0 })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Self {
        Trainer {
            model: ckpt.model,
            opt: ckpt.opt,
            config: ckpt.config,
            rng: ckpt.rng,
            epoch: ckpt.epoch,
            steps: ckpt.steps,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            model: self.model.clone(),
            opt: self.opt.clone(),
            rng: self.rng.clone(),
            epoch: self.epoch,
            steps: self.steps,
            standardization: None,
        }
    }

    fn phases(&self) -> Vec<Player> {
        match self.config.variant {
            Variant::Full => vec![Player::GC, Player::C, Player::GH, Player::H],
            Variant::COnly => vec![Player::GC, Player::C],
            Variant::HOnly => vec![Player::GH, Player::H],
            Variant::SharedGc => vec![Player::GC, Player::C, Player::H],
            Variant::SharedGh => vec![Player::GH, Player::C, Player::H],
        }
    }

    /// One optimizer step for one player on one mini-batch.
    pub fn step_once(&mut self, player: Player, batch: &Matrix) -> Result<LossBreakdown> {
        self.step(player, batch)
    }

    fn step(&mut self, player: Player, batch: &Matrix) -> Result<LossBreakdown> {
        let cfg = &self.config;
        let c_generator: &Network = match cfg.variant {
            Variant::SharedGh => &self.model.g_h,
            _ => &self.model.g_c,
        };
        let h_generator: &Network = match cfg.variant {
            Variant::SharedGc => &self.model.g_c,
            _ => &self.model.g_h,
        };
        let use_h_factor = cfg.variant != Variant::COnly;
        let use_c_factor = cfg.variant != Variant::HOnly;

        let (phase, trained): (PhaseGrads, &mut Network) = match player {
            Player::C => (
                loss::c_phase_grads(&self.model.c, &self.model.h, c_generator, batch, use_h_factor)?,
                &mut self.model.c,
            ),
            Player::H => (
                loss::h_phase_grads(
                    &self.model.h,
                    &self.model.c,
                    h_generator,
                    batch,
                    cfg.symmetric_lh,
                    use_c_factor,
                )?,
                &mut self.model.h,
            ),
            Player::GC => (
                loss::gc_phase_grads(&self.model.g_c, &self.model.c, &self.model.h, batch, use_h_factor)?,
                &mut self.model.g_c,
            ),
            Player::GH => (
                loss::gh_phase_grads(
                    &self.model.g_h,
                    &self.model.c,
                    &self.model.h,
                    batch,
                    cfg.lambda,
                    cfg.symmetric_lh,
                    use_c_factor,
                )?,
                &mut self.model.g_h,
            ),
        };

        if !phase.breakdown.total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss for {player:?} at epoch {}",
                self.epoch
            )));
        }
        let opt = match player {
            Player::C => &mut self.opt.c,
            Player::H => &mut self.opt.h,
            Player::GC => &mut self.opt.g_c,
            Player::GH => &mut self.opt.g_h,
        };
        adam_step(trained, &phase.grads, opt)?;
        for trace in &phase.traces {
            trained.update_running_stats(trace);
        }
        self.steps += 1;
        Ok(phase.breakdown)
    }

    /// One outer iteration: every phase sees all mini-batches in the
    /// same (once-shuffled) order. Returns one log entry per phase.
    fn run_iteration(&mut self, data: &Matrix) -> Result<Vec<LogEntry>> {
        let n = data.rows();
        let bs = self.config.batch_size.min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        if self.config.shuffle {
            for i in (1..n).rev() {
                let j = self.rng.gen_range(0..=i);
                idx.swap(i, j);
            }
        }
        let batches: Vec<Matrix> = idx
            .chunks(bs)
            .map(|chunk| data.select_rows(chunk))
            .collect();

        let mut entries = Vec::new();
        for player in self.phases() {
            let mut acc = LossBreakdown::default();
            let mut rows = 0usize;
            for batch in &batches {
                let b = self.step(player, batch)?;
                let w = batch.rows() as f64;
                acc.total += b.total * w;
                acc.positive_term += b.positive_term * w;
                acc.product_term += b.product_term * w;
                acc.distance_term += b.distance_term * w;
                rows += batch.rows();
            }
            let w = rows as f64;
            acc.total /= w;
            acc.positive_term /= w;
            acc.product_term /= w;
            acc.distance_term /= w;
            entries.push(LogEntry { epoch: self.epoch + 1, player, parts: acc });
        }
        self.epoch += 1;
        Ok(entries)
    }

    /// Train until `config.epochs` completed outer iterations.
    ///
    /// Divergence policy: a non-finite loss restores the iteration-start
    /// snapshot, halves the learning rate once and retries; a second
    /// failure aborts.
    pub fn run(&mut self, data: &Matrix) -> Result<Vec<LogEntry>> {
        if data.rows() == 0 {
            return Err(Error::Data("empty training set".into()));
        }
        if data.cols() != self.model.input_dim {
            return Err(Error::Config("training data dim mismatch".into()));
        }
        let mut log = Vec::new();
        let mut lr_halved = false;
        while self.epoch < self.config.epochs {
            let snapshot = self.checkpoint();
            match self.run_iteration(data) {
                Ok(entries) => log.extend(entries),
                Err(Error::Numeric(msg)) => {
                    if lr_halved {
                        return Err(Error::Numeric(format!(
                            "training diverged again after lr halving: {msg}"
                        )));
                    }
                    lr_halved = true;
                    *self = Trainer::from_checkpoint(snapshot);
                    for opt in [
                        &mut self.opt.c,
                        &mut self.opt.h,
                        &mut self.opt.g_c,
                        &mut self.opt.g_h,
                    ] {
                        opt.hyper.lr *= 0.5;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok(log)
    }
}

/// Convenience wrapper: build a trainer for the data dimension, run the
/// configured number of iterations, return model and log.
pub fn train(data: &Matrix, config: TrainConfig) -> Result<(QuadModel, Vec<LogEntry>, u64)> {
    let mut trainer = Trainer::new(data.cols(), config)?;
    let log = trainer.run(data)?;
    Ok((trainer.model, log, trainer.steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_data(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, 2);
        for v in m.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        m
    }

    fn small_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            hidden: vec![8],
            generator_hidden: vec![8],
            ..Default::default()
        }
    }

    #[test]
    fn single_iteration_large_batch_runs_four_steps() {
        let data = toy_data(16, 0);
        let mut cfg = small_config(1);
        cfg.batch_size = 64; // larger than m
        let (_, log, steps) = train(&data, cfg).unwrap();
        assert_eq!(steps, 4);
        assert_eq!(log.len(), 4);
        let players: Vec<Player> = log.iter().map(|e| e.player).collect();
        assert_eq!(players, vec![Player::GC, Player::C, Player::GH, Player::H]);
    }

    #[test]
    fn step_count_matches_epoch_accounting() {
        let data = toy_data(100, 1);
        let mut cfg = small_config(3);
        cfg.batch_size = 32;
        let (_, _, steps) = train(&data, cfg).unwrap();
        // 4 * ceil(100/32) per outer iteration.
        assert_eq!(steps, 3 * 4 * 4);
    }

    #[test]
    fn fixed_seed_reproduces_final_state() {
        let data = toy_data(40, 2);
        let (m1, _, _) = train(&data, small_config(3)).unwrap();
        let (m2, _, _) = train(&data, small_config(3)).unwrap();
        assert_eq!(m1.c.state_hash(), m2.c.state_hash());
        assert_eq!(m1.h.state_hash(), m2.h.state_hash());
        assert_eq!(m1.g_c.state_hash(), m2.g_c.state_hash());
        assert_eq!(m1.g_h.state_hash(), m2.g_h.state_hash());
    }

    #[test]
    fn phase_isolation_one_player_per_step() {
        let data = toy_data(20, 3);
        let mut trainer = Trainer::new(2, small_config(1)).unwrap();
        for player in [Player::GC, Player::C, Player::GH, Player::H] {
            let hashes = [
                trainer.model.c.state_hash(),
                trainer.model.h.state_hash(),
                trainer.model.g_c.state_hash(),
                trainer.model.g_h.state_hash(),
            ];
            trainer.step(player, &data).unwrap();
            let after = [
                trainer.model.c.state_hash(),
                trainer.model.h.state_hash(),
                trainer.model.g_c.state_hash(),
                trainer.model.g_h.state_hash(),
            ];
            let changed: Vec<usize> =
                (0..4).filter(|&i| hashes[i] != after[i]).collect();
            let expected = match player {
                Player::C => 0,
                Player::H => 1,
                Player::GC => 2,
                Player::GH => 3,
            };
            assert_eq!(changed, vec![expected], "player {player:?}");
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_outputs() {
        let data = toy_data(30, 4);
        let mut trainer = Trainer::new(2, small_config(2)).unwrap();
        trainer.run(&data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &trainer.checkpoint()).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let probe = toy_data(5, 99);
        assert_eq!(
            trainer.model.c.apply(&probe).unwrap(),
            loaded.model.c.apply(&probe).unwrap()
        );
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let data = toy_data(30, 5);
        // Uninterrupted: 4 epochs.
        let (full_model, _, _) = train(&data, small_config(4)).unwrap();

        // Interrupted at 2, resumed to 4.
        let mut t = Trainer::new(2, small_config(2)).unwrap();
        t.run(&data).unwrap();
        let mut ckpt = t.checkpoint();
        ckpt.config.epochs = 4;
        let mut resumed = Trainer::from_checkpoint(ckpt);
        resumed.run(&data).unwrap();

        assert_eq!(full_model.c.state_hash(), resumed.model.c.state_hash());
        assert_eq!(full_model.h.state_hash(), resumed.model.h.state_hash());
        assert_eq!(full_model.g_c.state_hash(), resumed.model.g_c.state_hash());
        assert_eq!(full_model.g_h.state_hash(), resumed.model.g_h.state_hash());
    }

    #[test]
    fn truncated_checkpoint_is_corrupt_error() {
        let trainer = Trainer::new(2, small_config(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &trainer.checkpoint()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(_)) => {}
            other => panic!("expected corrupt-checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn shared_generator_variant_differs_from_full() {
        let data = toy_data(30, 6);
        let (full, _, _) = train(&data, small_config(2)).unwrap();
        let mut cfg = small_config(2);
        cfg.variant = Variant::SharedGc;
        let (shared, _, _) = train(&data, cfg).unwrap();
        assert_ne!(full.c.state_hash(), shared.c.state_hash());
    }

    #[test]
    fn ablation_variants_touch_only_their_players() {
        let data = toy_data(20, 7);
        let mut cfg = small_config(2);
        cfg.variant = Variant::COnly;
        let mut trainer = Trainer::new(2, cfg).unwrap();
        let h_before = trainer.model.h.state_hash();
        let gh_before = trainer.model.g_h.state_hash();
        trainer.run(&data).unwrap();
        assert_eq!(trainer.model.h.state_hash(), h_before);
        assert_eq!(trainer.model.g_h.state_hash(), gh_before);

        let mut cfg = small_config(2);
        cfg.variant = Variant::HOnly;
        let mut trainer = Trainer::new(2, cfg).unwrap();
        let c_before = trainer.model.c.state_hash();
        trainer.run(&data).unwrap();
        assert_eq!(trainer.model.c.state_hash(), c_before);
    }
}
