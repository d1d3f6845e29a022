//! Gaussian likelihood, preconditioned Crank–Nicolson sampling with
//! checkpointing, credible intervals and Bernstein–von Mises diagnostics.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::gp::MaternPrior;
use crate::stats;

/// A deterministic map from parameter vectors to real observation vectors,
/// compared in the Euclidean norm (Frobenius norm for matrix data).
pub trait ForwardModel: Sync {
    fn n_params(&self) -> usize;
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub y: Vec<f64>,
    pub sigma: f64,
}

impl Observations {
    pub fn new(y: Vec<f64>, sigma: f64) -> Result<Self> {
        if y.is_empty() {
            return invalid("no observations");
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation vector".into()));
        }
        if !(sigma > 0.0) {
            return invalid("noise level must be positive");
        }
        Ok(Self { y, sigma })
    }
}

/// `−‖Y − 𝒢(θ)‖² / (2σ²)`.
pub fn log_likelihood(model: &dyn ForwardModel, theta: &[f64], obs: &Observations) -> Result<f64> {
    let g = model.evaluate(theta)?;
    if g.len() != obs.y.len() {
        return invalid("model output does not match the observations");
    }
    let ss: f64 = g.iter().zip(&obs.y).map(|(a, b)| (a - b) * (a - b)).sum();
    if !ss.is_finite() {
        return Err(Error::NonFinite("likelihood residual".into()));
    }
    Ok(-ss / (2.0 * obs.sigma * obs.sigma))
}

/// Independent Matérn draws per component, multiplied by `scale`.
#[derive(Clone, Debug)]
pub struct ScaledPrior {
    pub base: MaternPrior,
    pub n_components: usize,
    pub scale: f64,
}

impl ScaledPrior {
    pub fn n_params(&self) -> usize {
        self.base.n() * self.n_components
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for c in self.base.draw_many(self.n_components, rng) {
            out.extend(c.into_iter().map(|v| v * self.scale));
        }
        out
    }

    /// Prior variance of one parameter entry.
    pub fn marginal_variance(&self) -> f64 {
        let a = self.base.cfg.amplitude * self.scale;
        a * a
    }
}

/// Linear functional `θ ↦ Σ w_i θ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub name: String,
    pub weights: Vec<f64>,
}

impl Functional {
    pub fn value(&self, theta: &[f64]) -> f64 {
        self.weights.iter().zip(theta).map(|(a, b)| a * b).sum()
    }
}

/// Metropolis ratio `exp(ℓ_to − ℓ_from)`; the prior cancels under pCN.
pub fn acceptance_ratio(loglik_from: f64, loglik_to: f64) -> f64 {
    (loglik_to - loglik_from).exp()
}

/// Current position of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcnState {
    pub theta: Vec<f64>,
    pub loglik: f64,
}

/// One pCN transition: `θ* = √(1−β²) θ + β ξ` with `ξ` a prior draw.
pub fn pcn_step<R: Rng + ?Sized>(
    state: &mut PcnState,
    beta: f64,
    prior_draw: &dyn Fn(&mut R) -> Vec<f64>,
    loglik: &dyn Fn(&[f64]) -> Result<f64>,
    rng: &mut R,
) -> Result<bool> {
    let xi = prior_draw(rng);
    let rho = (1.0 - beta * beta).max(0.0).sqrt();
    let proposal: Vec<f64> = state.theta.iter().zip(&xi).map(|(t, x)| rho * t + beta * x).collect();
    let l_new = loglik(&proposal)?;
    let u: f64 = rng.random();
    if u < acceptance_ratio(state.loglik, l_new).min(1.0) {
        state.theta = proposal;
        state.loglik = l_new;
        Ok(true)
    } else {
        Ok(false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Truth,
    PriorDraw,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_samples: usize,
    pub beta: f64,
    /// Tune `beta` during burn-in towards `target_acceptance`.
    pub adapt: bool,
    pub target_acceptance: [f64; 2],
    pub adapt_interval: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub init: Init,
    pub checkpoint_every: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            beta: 0.02,
            adapt: true,
            target_acceptance: [0.2, 0.3],
            adapt_interval: 100,
            burn_in: 1000,
            thinning: 1,
            init: Init::Truth,
            checkpoint_every: 2000,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples <= self.burn_in {
            return invalid("n_samples must exceed burn_in");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return invalid("beta must lie in (0, 1]");
        }
        if self.thinning == 0 || self.adapt_interval == 0 {
            return invalid("thinning and adapt_interval must be positive");
        }
        let [lo, hi] = self.target_acceptance;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return invalid("target acceptance must be an interval inside (0, 1)");
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.n_samples - self.burn_in).div_ceil(self.thinning)
    }
}

/// Output of [`run_chain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub names: Vec<String>,
    /// One series per tracked functional, after burn-in and thinning.
    pub tracked: Vec<Vec<f64>>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub final_beta: f64,
    pub mean_field: Vec<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub config: ChainConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    iteration: usize,
    state: PcnState,
    beta: f64,
    rng: ChaCha20Rng,
    window_accepted: usize,
    window_len: usize,
    burn_accepted: usize,
    accepted: usize,
    tracked: Vec<Vec<f64>>,
    mean_sum: Vec<f64>,
    n_mean: usize,
}

const CHECKPOINT_FILE: &str = "checkpoint.json";

fn fingerprint(cfg: &ChainConfig, seed: u64, obs: &Observations, tracked: &[Functional], init: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).unwrap_or_default());
    h.update(seed.to_le_bytes());
    h.update(obs.sigma.to_le_bytes());
    for v in obs.y.iter().chain(init) {
        h.update(v.to_le_bytes());
    }
    for f in tracked {
        for v in &f.weights {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn save_checkpoint(dir: &Path, cp: &Checkpoint) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join("checkpoint.json.tmp");
    fs::write(&tmp, serde_json::to_vec(cp)?)?;
    fs::rename(tmp, dir.join(CHECKPOINT_FILE))?;
    Ok(())
}

fn load_checkpoint(dir: &Path, fp: &str) -> Result<Option<Checkpoint>> {
    let path = dir.join(CHECKPOINT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let cp: Checkpoint = serde_json::from_slice(&fs::read(&path)?)?;
    if cp.fingerprint != fp {
        log::warn!("ignoring checkpoint at {} from a different run", path.display());
        return Ok(None);
    }
    Ok(Some(cp))
}

/// Runs pCN for `cfg.n_samples` iterations. With `checkpoint_dir` set, the
/// chain state is saved every `cfg.checkpoint_every` iterations and an
/// existing checkpoint of the same run is resumed; results are identical to
/// an uninterrupted run.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    model: &dyn ForwardModel,
    obs: &Observations,
    prior: &ScaledPrior,
    tracked: &[Functional],
    cfg: &ChainConfig,
    truth: Option<&[f64]>,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<ChainRecord> {
    cfg.validate()?;
    let np = model.n_params();
    if prior.n_params() != np || tracked.iter().any(|f| f.weights.len() != np) {
        return invalid("prior, tracked functionals and model disagree on the parameter dimension");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let theta0 = match cfg.init {
        Init::Truth => match truth {
            Some(t) if t.len() == np => t.to_vec(),
            _ => return invalid("initialization at the truth needs a truth vector of matching length"),
        },
        Init::PriorDraw => prior.draw(&mut rng),
        Init::Zero => vec![0.0; np],
    };
    let fp = fingerprint(cfg, seed, obs, tracked, &theta0);
    let loglik = |t: &[f64]| log_likelihood(model, t, obs);
    let draw = |r: &mut ChaCha20Rng| prior.draw(r);

    let resumed = match checkpoint_dir {
        Some(d) => load_checkpoint(d, &fp)?,
        None => None,
    };
    let mut cp = match resumed {
        Some(cp) => {
            log::info!("resuming chain at iteration {}", cp.iteration);
            cp
        }
        None => Checkpoint {
            fingerprint: fp,
            iteration: 0,
            state: PcnState {
                loglik: loglik(&theta0)?,
                theta: theta0,
            },
            beta: cfg.beta,
            rng,
            window_accepted: 0,
            window_len: 0,
            burn_accepted: 0,
            accepted: 0,
            tracked: vec![Vec::with_capacity(cfg.n_retained()); tracked.len()],
            mean_sum: vec![0.0; np],
            n_mean: 0,
        },
    };

    while cp.iteration < cfg.n_samples {
        let it = cp.iteration;
        let acc = pcn_step(&mut cp.state, cp.beta, &draw, &loglik, &mut cp.rng)?;
        if it < cfg.burn_in {
            cp.burn_accepted += acc as usize;
            cp.window_accepted += acc as usize;
            cp.window_len += 1;
            if cfg.adapt && cp.window_len == cfg.adapt_interval {
                let rate = cp.window_accepted as f64 / cp.window_len as f64;
                if rate < cfg.target_acceptance[0] {
                    cp.beta /= 1.25;
                } else if rate > cfg.target_acceptance[1] {
                    cp.beta = (cp.beta * 1.25).min(1.0);
                }
                cp.window_accepted = 0;
                cp.window_len = 0;
            }
        } else {
            cp.accepted += acc as usize;
            if (it - cfg.burn_in) % cfg.thinning == 0 {
                for (s, f) in cp.tracked.iter_mut().zip(tracked) {
                    s.push(f.value(&cp.state.theta));
                }
                for (m, t) in cp.mean_sum.iter_mut().zip(&cp.state.theta) {
                    *m += t;
                }
                cp.n_mean += 1;
            }
        }
        cp.iteration += 1;
        if let Some(d) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && cp.iteration % cfg.checkpoint_every == 0 && cp.iteration < cfg.n_samples {
                save_checkpoint(d, &cp)?;
            }
        }
    }
    if let Some(d) = checkpoint_dir {
        let p = d.join(CHECKPOINT_FILE);
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    let n_after = cfg.n_samples - cfg.burn_in;
    Ok(ChainRecord {
        names: tracked.iter().map(|f| f.name.clone()).collect(),
        tracked: cp.tracked,
        acceptance_rate: cp.accepted as f64 / n_after as f64,
        burn_in_acceptance_rate: if cfg.burn_in > 0 {
            cp.burn_accepted as f64 / cfg.burn_in as f64
        } else {
            f64::NAN
        },
        final_beta: cp.beta,
        mean_field: cp.mean_sum.iter().map(|s| s / cp.n_mean as f64).collect(),
        burn_in: cfg.burn_in,
        thinning: cfg.thinning,
        seed,
        config: cfg.clone(),
    })
}

/// Centre (sample mean) and smallest radius containing a `1 − ξ` fraction.
pub fn credible_interval(series: &[f64], xi: f64) -> Result<(f64, f64)> {
    if series.is_empty() || !(0.0..1.0).contains(&xi) {
        return invalid("credible interval needs samples and ξ in [0, 1)");
    }
    let c = stats::mean(series);
    let mut dev: Vec<f64> = series.iter().map(|v| (v - c).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let k = ((1.0 - xi) * dev.len() as f64).ceil() as usize;
    Ok((c, dev[k.clamp(1, dev.len()) - 1]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvmReport {
    /// Standard deviation of `√N (v − mean)`.
    pub scaled_sd: f64,
    pub ratio_to_theory: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Anderson–Darling statistic and p-value; the p-value assumes
    /// independent samples.
    pub anderson_darling: f64,
    pub p_value: f64,
    pub effective_sample_size: f64,
}

pub fn bvm_diagnostic(series: &[f64], sigma_sq_theory: f64, n: usize) -> Result<BvmReport> {
    if series.len() < 8 {
        return invalid("series too short for a normality diagnostic");
    }
    let scaled_sd = (n as f64).sqrt() * stats::std_dev(series);
    let ad = stats::anderson_darling_normal(series);
    Ok(BvmReport {
        scaled_sd,
        ratio_to_theory: scaled_sd / sigma_sq_theory.sqrt(),
        skewness: stats::skewness(series),
        excess_kurtosis: stats::excess_kurtosis(series),
        anderson_darling: ad.statistic,
        p_value: ad.p_value,
        effective_sample_size: stats::effective_sample_size(series),
    })
}

/// Outcome of one coverage replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    pub truth_value: f64,
    pub center: f64,
    pub radius: f64,
    pub covered: bool,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub xi: f64,
    pub fraction: f64,
    /// Binomial standard error `√(p(1−p)/M)`.
    pub std_error: f64,
    pub replications: Vec<Replication>,
    pub failures: Vec<(u64, String)>,
}

/// What one replication returns: the true functional value, the tracked
/// posterior series and the chain acceptance rate.
pub struct ReplicateOutput {
    pub truth_value: f64,
    pub series: Vec<f64>,
    pub acceptance_rate: f64,
}

/// Runs `replicate` for each seed and counts how often the `1 − ξ` credible
/// interval contains the true value. Failed replications are logged and
/// excluded.
pub fn coverage_experiment(
    seeds: &[u64],
    xi: f64,
    mut replicate: impl FnMut(u64) -> Result<ReplicateOutput>,
) -> Result<CoverageReport> {
    if seeds.len() < 20 {
        return invalid("coverage needs at least 20 replications");
    }
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        match replicate(seed).and_then(|o| {
            let (c, r) = credible_interval(&o.series, xi)?;
            Ok(Replication {
                seed,
                truth_value: o.truth_value,
                center: c,
                radius: r,
                covered: (o.truth_value - c).abs() <= r,
                acceptance_rate: o.acceptance_rate,
            })
        }) {
            Ok(r) => {
                log::info!("replication {seed}: covered = {}", r.covered);
                reps.push(r);
            }
            Err(e) => {
                log::warn!("replication {seed} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    if reps.is_empty() {
        return Err(Error::InvalidArgument("every replication failed".into()));
    }
    let m = reps.len() as f64;
    let p = reps.iter().filter(|r| r.covered).count() as f64 / m;
    Ok(CoverageReport {
        xi,
        fraction: p,
        std_error: (p * (1.0 - p) / m).sqrt(),
        replications: reps,
        failures,
    })
}
