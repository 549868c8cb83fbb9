//! Interferometric GAN: an INN generator `G` and an INN discriminator `D`
//! trained adversarially.
//!
//! `G` maps a standard-normal noise vector to probabilities `p`, which become
//! pixels through `tanh(2p - 1)`. `D` reads an image and returns the
//! probability that it is real. Every network input (noise, real images,
//! fake images) is amplitude-encoded with the clamped norm, so an all-zero
//! vector cannot abort training.
//!
//! Each mini-batch performs one Adam step on `D` (with `G` frozen) followed
//! by one step on `G` (with the updated `D` frozen, gradients flowing back
//! through `D` into `G`).

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::autodiff::{backward, backward_with_input, forward_with_cache_encoded, grad_check, ordered_batch_sum};
use crate::datasets::{batch_iter, write_pgm, LabeledImageSet};
use crate::error::{InnError, Result};
use crate::loss::{neg_log, neg_log_grad};
use crate::model::{generator_head, generator_head_contrast, write_checkpoint, InputEncoding, Network, NetworkArch};
use crate::optim::{init_network, AdamConfig, AdamState, InitScheme};
use crate::report::fmt_f64;
use crate::rng::{self, StreamRng};

/// Encoding used for every GAN network input.
pub const GAN_ENCODING: InputEncoding = InputEncoding::Clamped;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanLoss {
    /// Cross-entropy losses `L_D`, `L_G`.
    Standard,
    /// `L'_D = -P_real + P_fake`, `L'_G = -P_fake`.
    Wasserstein,
}

impl GanLoss {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" | "bce" => Ok(Self::Standard),
            "wasserstein" => Ok(Self::Wasserstein),
            other => Err(InnError::Config(format!(
                "unknown GAN loss {other:?} (expected standard or wasserstein)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Wasserstein => "wasserstein",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub arch_d: NetworkArch,
    pub arch_g: NetworkArch,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    /// Images drawn (without replacement) from the dataset.
    pub data_size: usize,
    pub seed: u64,
    pub init: InitScheme,
    pub loss: GanLoss,
}

impl GanConfig {
    /// MNIST settings: `D = (400, 64, 1)`, `G = (8, 64, 400)`, `L = (3, 3)`,
    /// 5000 images, batch 128, 10 epochs, `lr = 0.01`, betas `(0.5, 0.9)`.
    pub fn mnist() -> Self {
        Self {
            arch_d: NetworkArch::new(vec![400, 64, 1], vec![3, 3]).expect("valid default"),
            arch_g: NetworkArch::new(vec![8, 64, 400], vec![3, 3]).expect("valid default"),
            batch_size: 128,
            epochs: 10,
            lr: 0.01,
            betas: (0.5, 0.9),
            data_size: 5000,
            seed: 0,
            init: InitScheme::Xavier,
            loss: GanLoss::Standard,
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.arch_g.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch_d.output_dim() != 1 {
            return Err(InnError::InvalidArchitecture(format!(
                "discriminator must end in width 1, got {}",
                self.arch_d.output_dim()
            )));
        }
        if self.arch_g.output_dim() != self.arch_d.input_dim() {
            return Err(InnError::InvalidArchitecture(format!(
                "generator output {} does not match discriminator input {}",
                self.arch_g.output_dim(),
                self.arch_d.input_dim()
            )));
        }
        if self.batch_size == 0 {
            return Err(InnError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// `N × dim` i.i.d. standard-normal draws.
pub fn sample_noise<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// `-(1/2N) Σ [ln D(x) + ln(1 - D(G(z)))]`.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    if d_real.len() != d_fake.len() {
        return Err(InnError::DimensionMismatch {
            expected: d_real.len(),
            found: d_fake.len(),
        });
    }
    if d_real.is_empty() {
        return Err(InnError::EmptyDataset("empty discriminator batch".into()));
    }
    let n = d_real.len() as f64;
    let sum: f64 = d_real
        .iter()
        .zip(d_fake)
        .map(|(&r, &f)| neg_log(r) + neg_log(1.0 - f))
        .sum();
    Ok(sum / (2.0 * n))
}

/// `-(1/N) Σ ln D(G(z))`.
pub fn generator_loss(d_fake: &[f64]) -> Result<f64> {
    if d_fake.is_empty() {
        return Err(InnError::EmptyDataset("empty generator batch".into()));
    }
    Ok(d_fake.iter().map(|&f| neg_log(f)).sum::<f64>() / d_fake.len() as f64)
}

/// `(L'_D, L'_G) = (-P_real + P_fake, -P_fake)`.
pub fn wasserstein_losses(p_real: f64, p_fake: f64) -> (f64, f64) {
    (-p_real + p_fake, -p_fake)
}

/// `(P_real, P_fake)`: batch means of the discriminator outputs.
pub fn mean_probs(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(InnError::EmptyDataset("mean of an empty batch".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((mean(d_real), mean(d_fake)))
}

/// Generator forward: noise to pixels in `(-1, 1)`.
pub fn generate(g: &Network, z: &[f64]) -> Result<Vec<f64>> {
    Ok(generator_head(&g.forward(z, GAN_ENCODING)?))
}

/// Loss adjoint `∂L_D/∂D` for one real (`real = true`) or fake sample,
/// scaled for a batch of `n` pairs.
fn d_adjoint(loss: GanLoss, real: bool, q: f64, n: f64) -> f64 {
    match (loss, real) {
        (GanLoss::Standard, true) => neg_log_grad(q) / (2.0 * n),
        (GanLoss::Standard, false) => -neg_log_grad(1.0 - q) / (2.0 * n),
        (GanLoss::Wasserstein, true) => -1.0 / n,
        (GanLoss::Wasserstein, false) => 1.0 / n,
    }
}

/// Loss adjoint `∂L_G/∂D(G(z))` for one sample of a batch of `n`.
fn g_adjoint(loss: GanLoss, q: f64, n: f64) -> f64 {
    match loss {
        GanLoss::Standard => neg_log_grad(q) / n,
        GanLoss::Wasserstein => -1.0 / n,
    }
}

/// Runs `z → G → tanh(2p-1) → D` and backpropagates `∂L/∂D = dq` into `G`.
/// Returns the flat `G` gradient and `D(G(z))`.
fn composite_backward(g: &Network, d: &Network, z: &[f64], dq: impl Fn(f64) -> f64) -> Result<(Vec<f64>, f64)> {
    let (p, g_cache) = forward_with_cache_encoded(g, z, GAN_ENCODING)?;
    let fake = generator_head(&p);
    let (q, d_cache) = forward_with_cache_encoded(d, &fake, GAN_ENCODING)?;
    let (_, x_bar) = backward_with_input(d, &d_cache, &[dq(q[0])])?;
    let p_bar: Vec<f64> = x_bar
        .iter()
        .zip(&fake)
        .map(|(xb, t)| xb * 2.0 * (1.0 - t * t))
        .collect();
    Ok((backward(g, &g_cache, &p_bar)?.flatten(), q[0]))
}

/// Scalar `-ln D(tanh(2 G(z) - 1))` of the composite network.
pub fn composite_generator_loss(g: &Network, d: &Network, z: &[f64]) -> Result<f64> {
    let fake = generate(g, z)?;
    Ok(neg_log(d.forward(&fake, GAN_ENCODING)?[0]))
}

/// Analytic gradient of [`composite_generator_loss`] over `G`'s phases.
pub fn composite_generator_grad(g: &Network, d: &Network, z: &[f64]) -> Result<Vec<f64>> {
    Ok(composite_backward(g, d, z, neg_log_grad)?.0)
}

/// Finite-difference check of [`composite_generator_grad`].
pub fn gradcheck_composite(g: &Network, d: &Network, z: &[f64], h: f64) -> Result<f64> {
    let analytic = composite_generator_grad(g, d, z)?;
    let mut probe = g.clone();
    grad_check(
        |theta| {
            probe.set_flat_params(theta).expect("same shape");
            composite_generator_loss(&probe, d, z).expect("valid composite")
        },
        &g.flat_params(),
        &analytic,
        h,
    )
}

/// One recorded training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanStep {
    pub step: usize,
    pub epoch: usize,
    pub l_d: f64,
    pub l_g: f64,
    pub p_real: f64,
    pub p_fake: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GanHistory {
    pub steps: Vec<GanStep>,
    /// Checkpoint files written so far, as `(D, G)` pairs.
    pub checkpoints: Vec<(PathBuf, PathBuf)>,
}

impl GanHistory {
    /// Mean of `(L_D, L_G, P_real, P_fake)` over the steps of one epoch.
    pub fn epoch_means(&self, epoch: usize) -> Option<(f64, f64, f64, f64)> {
        let rows: Vec<&GanStep> = self.steps.iter().filter(|s| s.epoch == epoch).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let sum = rows.iter().fold((0.0, 0.0, 0.0, 0.0), |a, s| {
            (a.0 + s.l_d, a.1 + s.l_g, a.2 + s.p_real, a.3 + s.p_fake)
        });
        Some((sum.0 / n, sum.1 / n, sum.2 / n, sum.3 / n))
    }
}

pub const HISTORY_CSV_HEADER: &str = "step,epoch,L_D,L_G,P_real,P_fake";

pub fn write_history_csv<W: Write>(history: &GanHistory, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HISTORY_CSV_HEADER}")?;
    for s in &history.steps {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.step,
            s.epoch,
            fmt_f64(s.l_d),
            fmt_f64(s.l_g),
            fmt_f64(s.p_real),
            fmt_f64(s.p_fake)
        )?;
    }
    Ok(())
}

/// Networks, optimizer moments and the noise stream of a GAN run.
#[derive(Debug, Clone)]
pub struct GanState {
    pub d: Network,
    pub g: Network,
    adam_d: AdamState,
    adam_g: AdamState,
    noise: StreamRng,
    loss: GanLoss,
}

impl GanState {
    /// Initializes both networks from the `init.D` and `init.G` streams.
    pub fn new(cfg: &GanConfig) -> Result<Self> {
        cfg.validate()?;
        let d = init_network(&cfg.arch_d, cfg.init, &mut rng::stream(cfg.seed, "init.D"));
        let g = init_network(&cfg.arch_g, cfg.init, &mut rng::stream(cfg.seed, "init.G"));
        let adam = AdamConfig::new(cfg.lr, cfg.betas);
        Ok(Self {
            adam_d: AdamState::new(d.param_count(), adam),
            adam_g: AdamState::new(g.param_count(), adam),
            d,
            g,
            noise: rng::stream(cfg.seed, "noise"),
            loss: cfg.loss,
        })
    }

    pub fn sample_noise(&mut self, n: usize) -> Vec<Vec<f64>> {
        let dim = self.g.arch().input_dim();
        sample_noise(n, dim, &mut self.noise)
    }

    /// One Adam step on `D` for real images `real` and noise `z` (same
    /// length). Returns `(L_D, P_real, P_fake)` before the update. `G` is
    /// only read.
    pub fn d_step(&mut self, real: &[&[f64]], z: &[Vec<f64>]) -> Result<(f64, f64, f64)> {
        if real.len() != z.len() || real.is_empty() {
            return Err(InnError::DimensionMismatch {
                expected: real.len(),
                found: z.len(),
            });
        }
        let n = real.len();
        let fakes = z
            .par_iter()
            .map(|zi| generate(&self.g, zi))
            .collect::<Result<Vec<_>>>()?;
        let d = &self.d;
        let loss = self.loss;
        let (grad, probs) = ordered_batch_sum(2 * n, d.param_count(), |k| {
            let (x, is_real) = if k < n {
                (real[k], true)
            } else {
                (fakes[k - n].as_slice(), false)
            };
            let (q, cache) = forward_with_cache_encoded(d, x, GAN_ENCODING)?;
            let adj = d_adjoint(loss, is_real, q[0], n as f64);
            Ok((backward(d, &cache, &[adj])?.flatten(), q[0]))
        })?;
        let (d_real, d_fake) = probs.split_at(n);
        let (p_real, p_fake) = mean_probs(d_real, d_fake)?;
        let l_d = match self.loss {
            GanLoss::Standard => discriminator_loss(d_real, d_fake)?,
            GanLoss::Wasserstein => wasserstein_losses(p_real, p_fake).0,
        };
        let mut flat = self.d.flat_params();
        self.adam_d.step(&mut flat, &grad)?;
        self.d.set_flat_params(&flat)?;
        Ok((l_d, p_real, p_fake))
    }

    /// One Adam step on `G` through the frozen `D`. Returns `L_G` before the
    /// update.
    pub fn g_step(&mut self, z: &[Vec<f64>]) -> Result<f64> {
        if z.is_empty() {
            return Err(InnError::EmptyDataset("empty noise batch".into()));
        }
        let n = z.len() as f64;
        let (g, d, loss) = (&self.g, &self.d, self.loss);
        let (grad, d_fake) = ordered_batch_sum(z.len(), g.param_count(), |k| {
            composite_backward(g, d, &z[k], |q| g_adjoint(loss, q, n))
        })?;
        let l_g = match self.loss {
            GanLoss::Standard => generator_loss(&d_fake)?,
            GanLoss::Wasserstein => -d_fake.iter().sum::<f64>() / n,
        };
        let mut flat = self.g.flat_params();
        self.adam_g.step(&mut flat, &grad)?;
        self.g.set_flat_params(&flat)?;
        Ok(l_g)
    }
}

#[derive(Debug, Clone)]
pub struct GanOutcome {
    pub d: Network,
    pub g: Network,
    pub history: GanHistory,
}

/// Draws `cfg.data_size` images from `data` using the `data` stream.
pub fn select_training_images(cfg: &GanConfig, data: &LabeledImageSet) -> Result<LabeledImageSet> {
    if cfg.data_size == 0 || cfg.data_size > data.len() {
        return Err(InnError::Config(format!(
            "data_size {} must be in 1..={}",
            cfg.data_size,
            data.len()
        )));
    }
    if data.pixel_count() != cfg.arch_d.input_dim() {
        return Err(InnError::DimensionMismatch {
            expected: cfg.arch_d.input_dim(),
            found: data.pixel_count(),
        });
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    if cfg.data_size < data.len() {
        idx.shuffle(&mut rng::stream(cfg.seed, "data"));
        idx.truncate(cfg.data_size);
    }
    Ok(data.select(&idx))
}

/// Full adversarial training run. With `checkpoint_dir`, `D` and `G` are
/// written after every epoch (`D_epoch<e>.inn`, `G_epoch<e>.inn`) and at the
/// end (`D.inn`, `G.inn`); a failing step leaves earlier checkpoints intact.
pub fn train_gan(cfg: &GanConfig, data: &LabeledImageSet, checkpoint_dir: Option<&Path>) -> Result<GanOutcome> {
    let train = select_training_images(cfg, data)?;
    let mut state = GanState::new(cfg)?;
    let mut history = GanHistory::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for batch in batch_iter(train.len(), cfg.batch_size, cfg.seed, epoch) {
            let z = state.sample_noise(batch.len());
            let real: Vec<&[f64]> = batch.iter().map(|&i| train.images[i].as_slice()).collect();
            let (l_d, p_real, p_fake) = state.d_step(&real, &z)?;
            let l_g = state.g_step(&z)?;
            if !l_d.is_finite() || !l_g.is_finite() {
                return Err(InnError::NonFiniteLoss { step });
            }
            history.steps.push(GanStep {
                step,
                epoch,
                l_d,
                l_g,
                p_real,
                p_fake,
            });
            step += 1;
        }
        if let Some((l_d, l_g, p_real, p_fake)) = history.epoch_means(epoch) {
            info!("epoch {epoch}: L_D={l_d:.4} L_G={l_g:.4} P_real={p_real:.4} P_fake={p_fake:.4}");
        }
        if let Some(dir) = checkpoint_dir {
            let pair = (
                dir.join(format!("D_epoch{epoch}.inn")),
                dir.join(format!("G_epoch{epoch}.inn")),
            );
            write_checkpoint(&state.d, &pair.0)?;
            write_checkpoint(&state.g, &pair.1)?;
            history.checkpoints.push(pair);
        }
    }
    if let Some(dir) = checkpoint_dir {
        let pair = (dir.join("D.inn"), dir.join("G.inn"));
        write_checkpoint(&state.d, &pair.0)?;
        write_checkpoint(&state.g, &pair.1)?;
        history.checkpoints.push(pair);
    }
    Ok(GanOutcome {
        d: state.d,
        g: state.g,
        history,
    })
}

/// `count` generated images from the `sample` stream of `seed`. `contrast`
/// selects the display head `tanh(3(2p - 1))`.
pub fn generate_images(g: &Network, count: usize, seed: u64, contrast: bool) -> Result<Vec<Vec<f64>>> {
    let z = sample_noise(count, g.arch().input_dim(), &mut rng::stream(seed, "sample"));
    z.par_iter()
        .map(|zi| {
            let p = g.forward(zi, GAN_ENCODING)?;
            Ok(if contrast {
                generator_head_contrast(&p)
            } else {
                generator_head(&p)
            })
        })
        .collect()
}

/// Per-pixel standard deviation across images, averaged over pixels.
pub fn pixel_diversity(images: &[Vec<f64>]) -> f64 {
    if images.len() < 2 {
        return 0.0;
    }
    let n = images.len() as f64;
    let d = images[0].len();
    let mut total = 0.0;
    for j in 0..d {
        let mean = images.iter().map(|im| im[j]).sum::<f64>() / n;
        let var = images.iter().map(|im| (im[j] - mean).powi(2)).sum::<f64>() / n;
        total += var.sqrt();
    }
    total / d as f64
}

/// `[-1, 1] → 0..=255` with round-half-up, so 0 maps to 128.
pub fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5 + 0.5).floor().min(255.0) as u8
}

/// Tiles `rows × cols` images of `height × width` row-major into one raster.
pub fn grid_bytes(images: &[Vec<f64>], height: usize, width: usize, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if rows * cols > images.len() {
        return Err(InnError::Config(format!(
            "grid {rows}x{cols} needs {} images, got {}",
            rows * cols,
            images.len()
        )));
    }
    if let Some(bad) = images.iter().find(|im| im.len() != height * width) {
        return Err(InnError::DimensionMismatch {
            expected: height * width,
            found: bad.len(),
        });
    }
    let gw = cols * width;
    let mut out = vec![0u8; rows * height * gw];
    for (k, img) in images.iter().take(rows * cols).enumerate() {
        let (r, c) = (k / cols, k % cols);
        for y in 0..height {
            for x in 0..width {
                out[(r * height + y) * gw + c * width + x] = to_byte(img[y * width + x]);
            }
        }
    }
    Ok(out)
}

/// Writes the grid as a binary PGM.
pub fn export_grid(
    images: &[Vec<f64>],
    height: usize,
    width: usize,
    rows: usize,
    cols: usize,
    path: &Path,
) -> Result<()> {
    let bytes = grid_bytes(images, height, width, rows, cols)?;
    write_pgm(path, cols * width, rows * height, &bytes)
}
