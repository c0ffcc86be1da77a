//! Toy separation experiment: a linear demixer `y = W x` trained with the
//! SinkPIT loss on `-SI-SDR` costs.
//!
//! Everything the loss needs is an inner product, so each segment is reduced
//! to Gram matrices once and the per-epoch work is O(N^3) regardless of the
//! signal length. With `r = <s,y>^2 / (|s|^2 |y|^2)` and `y_j = sum_m W_jm x_m`,
//!
//! ```text
//! d SI-SDR / d r   = (10 / ln 10) / (r (1 - r))
//! d r / d w_j      = 2 d / (a b) * g_i  -  2 d^2 / (a b^2) * G w_j
//! ```
//!
//! where `d = <s_i, y_j>`, `a = |s_i|^2`, `b = |y_j|^2`, `g_i[m] = <x_m, s_i>`
//! and `G[m][m'] = <x_m, x_m'>`. Clamped SI-SDR values contribute no gradient.
//!
//! The update is steepest descent on `W` with an Armijo backtracking step:
//! the SI-SDR slope grows like `1 / (1 - r)` as an estimate locks onto a
//! source, so any fixed step eventually overshoots.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::assignment::hungarian;
use crate::error::{Error, Result};
use crate::gradient::sinkpit_value_and_grad;
use crate::matrix::{CostMatrix, Permutation, SquareMatrix};
use crate::signal::{
    dot, mix, pairwise_cost_matrix, random_mixing_gains, si_sdr_from_ratio, MixingMatrix, Waveform, DEFAULT_CLAMP_DB,
};
use crate::sinkhorn::{batch_sinkpit_loss, AnnealSchedule, SinkhornConfig, DEFAULT_ITERATIONS};

pub const MAX_SOURCES: usize = 8;

const MAX_BACKTRACKS: usize = 40;
const ARMIJO_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct DemixConfig {
    pub n: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    pub seed: u64,
    pub epochs: usize,
    /// First trial step of each epoch's backtracking line search.
    pub learning_rate: f64,
    pub iterations: usize,
    pub schedule: AnnealSchedule,
    pub dynamic_range_db: f64,
    /// Signal segments forming the training batch.
    pub segments: usize,
    /// Worker threads for per-segment gradients. Results are reduced in a
    /// fixed order, so the thread count does not change the output.
    pub threads: usize,
    /// Use `A = I` instead of random gains (already separated input).
    pub identity_mixing: bool,
}

impl Default for DemixConfig {
    fn default() -> Self {
        Self {
            n: 4,
            seconds: 1.0,
            sample_rate: crate::signal::DEFAULT_SAMPLE_RATE,
            seed: 1,
            epochs: 500,
            learning_rate: 0.3,
            iterations: DEFAULT_ITERATIONS,
            schedule: AnnealSchedule::default(),
            dynamic_range_db: 10.0,
            segments: 4,
            threads: 1,
            identity_mixing: false,
        }
    }
}

impl DemixConfig {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_SOURCES {
            return Err(Error::InvalidConfig(format!(
                "n must be in 1..={MAX_SOURCES}, got {}",
                self.n
            )));
        }
        if !(self.seconds > 0.0 && self.seconds.is_finite()) || self.sample_rate == 0 {
            return Err(Error::InvalidConfig(
                "signal duration and sample rate must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.segments == 0 || self.threads == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "segments, threads and iterations must be at least 1".into(),
            ));
        }
        if self.sample_count() < 2 * self.segments {
            return Err(Error::InvalidConfig(
                "signal too short for the requested segments".into(),
            ));
        }
        Ok(())
    }

    fn sample_count(&self) -> usize {
        (self.seconds * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemixState {
    /// Learned demixing matrix, row `j` produces estimate `j`.
    #[serde(serialize_with = "serialize_matrix")]
    pub w: SquareMatrix,
    pub epoch: usize,
    pub beta: f64,
    /// Batch SinkPIT loss at the start of each completed epoch.
    pub loss_history: Vec<f64>,
    /// Exact best assignment on the full-signal cost matrix at each epoch,
    /// serialized 1-based.
    #[serde(serialize_with = "serialize_permutations")]
    pub assignment_history: Vec<Permutation>,
}

fn serialize_matrix<S: serde::Serializer>(m: &SquareMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<&[f64]> = m.rows().collect();
    serde::Serialize::serialize(&rows, s)
}

fn serialize_permutations<S: serde::Serializer>(ps: &[Permutation], s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<usize>> = ps
        .iter()
        .map(|p| p.as_slice().iter().map(|j| j + 1).collect())
        .collect();
    serde::Serialize::serialize(&rows, s)
}

#[derive(Debug, Clone, Serialize)]
pub struct DemixReport {
    pub state: DemixState,
    pub mixing_gains: Vec<f64>,
    /// Mean SI-SDR (dB) of the best assignment when the mixtures are the estimates.
    pub baseline_si_sdr: f64,
    /// Mean SI-SDR (dB) of the best assignment for the learned estimates.
    pub final_si_sdr: f64,
    pub si_sdr_improvement: f64,
    /// Serialized 1-based.
    #[serde(serialize_with = "serialize_permutation")]
    pub final_permutation: Permutation,
}

fn serialize_permutation<S: serde::Serializer>(p: &Permutation, s: S) -> std::result::Result<S::Ok, S::Error> {
    let one_based: Vec<usize> = p.as_slice().iter().map(|j| j + 1).collect();
    serde::Serialize::serialize(&one_based, s)
}

/// White Gaussian noise through a two-pole resonator, one centre frequency per
/// source spread log-uniformly over 150 Hz .. 0.4 fs; normalized to unit RMS.
pub fn synth_sources(n: usize, len: usize, sample_rate: u32, seed: u64) -> Result<Vec<Waveform>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let fs = sample_rate as f64;
    let (lo, hi) = (150.0f64.min(0.1 * fs), 0.4 * fs);
    (0..n)
        .map(|i| {
            let frac = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            let centre = lo * (hi / lo).powf(frac);
            let radius: f64 = 0.97;
            let theta = 2.0 * std::f64::consts::PI * centre / fs;
            let (a1, a2) = (2.0 * radius * theta.cos(), -radius * radius);
            let (mut y1, mut y2) = (0.0, 0.0);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let y = normal.sample(&mut rng) + a1 * y1 + a2 * y2;
                y2 = y1;
                y1 = y;
                out.push(y);
            }
            let rms = (dot(&out, &out) / len as f64).sqrt();
            out.iter_mut().for_each(|x| *x /= rms);
            Waveform::new(out, sample_rate)
        })
        .collect()
}

/// Inner products of one segment.
#[derive(Debug, Clone)]
struct SegmentGram {
    /// `<x_m, x_m'>`, M x M.
    xx: SquareMatrix,
    /// `<x_m, s_i>`, stored as `xs[(m, i)]`.
    xs: SquareMatrix,
    /// `|s_i|^2`.
    ss: Vec<f64>,
}

impl SegmentGram {
    fn new(sources: &[&[f64]], mixtures: &[&[f64]]) -> Self {
        let n = sources.len();
        Self {
            xx: SquareMatrix::from_fn(n, |a, b| dot(mixtures[a], mixtures[b])),
            xs: SquareMatrix::from_fn(n, |m, i| dot(mixtures[m], sources[i])),
            ss: sources.iter().map(|s| dot(s, s)).collect(),
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.xx.as_mut_slice().iter_mut().zip(other.xx.as_slice()) {
            *a += b;
        }
        for (a, b) in self.xs.as_mut_slice().iter_mut().zip(other.xs.as_slice()) {
            *a += b;
        }
        for (a, b) in self.ss.iter_mut().zip(&other.ss) {
            *a += b;
        }
    }

    /// Per-pair quantities for estimates `W x`: (cost matrix, `d`, `b`, `r`, clamped mask).
    fn evaluate(&self, w: &SquareMatrix) -> Result<PairTerms> {
        let n = w.n();
        let gw: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|m| dot(self.xx.row(m), w.row(j))).collect())
            .collect();
        let energy: Vec<f64> = (0..n).map(|j| dot(w.row(j), &gw[j])).collect();
        let mut cross = SquareMatrix::zeros(n);
        let mut ratio = SquareMatrix::zeros(n);
        let mut cost = SquareMatrix::zeros(n);
        let mut clamped = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let d: f64 = (0..n).map(|m| w[(j, m)] * self.xs[(m, i)]).sum();
                if energy[j].is_nan() || energy[j] <= 0.0 {
                    return Err(Error::DegenerateSignal);
                }
                let r = d * d / (self.ss[i] * energy[j]);
                let (db, hit) = si_sdr_from_ratio(r, DEFAULT_CLAMP_DB);
                cross[(i, j)] = d;
                ratio[(i, j)] = r;
                cost[(i, j)] = -db;
                clamped[i * n + j] = hit;
            }
        }
        Ok(PairTerms {
            cost: CostMatrix::new(cost)?,
            cross,
            ratio,
            energy,
            gw,
            clamped,
        })
    }
}

struct PairTerms {
    cost: CostMatrix,
    cross: SquareMatrix,
    ratio: SquareMatrix,
    energy: Vec<f64>,
    gw: Vec<Vec<f64>>,
    clamped: Vec<bool>,
}

/// `dL/dW` given `dL/dC` for one segment.
fn chain_to_weights(g: &SegmentGram, t: &PairTerms, dl_dc: &SquareMatrix, w: &SquareMatrix) -> SquareMatrix {
    let n = w.n();
    let db_per_ln = 10.0 / std::f64::consts::LN_10;
    let mut out = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if t.clamped[i * n + j] {
                continue;
            }
            let r = t.ratio[(i, j)];
            let d = t.cross[(i, j)];
            let a = g.ss[i];
            let b = t.energy[j];
            // C = -SI-SDR.
            let coeff = -dl_dc[(i, j)] * db_per_ln / (r * (1.0 - r));
            let k1 = 2.0 * d / (a * b);
            let k2 = 2.0 * d * d / (a * b * b);
            for m in 0..n {
                out[(j, m)] += coeff * (k1 * g.xs[(m, i)] - k2 * t.gw[j][m]);
            }
        }
    }
    out
}

/// Per-segment cost terms, split across threads.
fn segment_costs(grams: &[SegmentGram], w: &SquareMatrix, threads: usize) -> Result<Vec<PairTerms>> {
    if threads <= 1 || grams.len() <= 1 {
        return grams.iter().map(|g| g.evaluate(w)).collect();
    }
    let chunk = grams.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = grams
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|g| g.evaluate(w)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(grams.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

fn batch_loss(grams: &[SegmentGram], w: &SquareMatrix, sinkhorn: &SinkhornConfig, threads: usize) -> Result<f64> {
    let costs: Vec<CostMatrix> = segment_costs(grams, w, threads)?.into_iter().map(|t| t.cost).collect();
    batch_sinkpit_loss(&costs, sinkhorn)
}

/// Mean SI-SDR of the best assignment, and that assignment.
fn best_assignment_si_sdr(sources: &[Waveform], estimates: &[Waveform]) -> Result<(f64, Permutation)> {
    let c = pairwise_cost_matrix(sources, estimates)?;
    let best = hungarian(&c);
    Ok((-best.mean_cost, best.permutation))
}

fn apply_demixer(w: &SquareMatrix, mixtures: &[Waveform]) -> Result<Vec<Waveform>> {
    let n = w.n();
    let gains = MixingMatrix::new_unchecked(n, n, w.as_slice().to_vec());
    mix(mixtures, &gains)
}

pub fn run_demix(cfg: &DemixConfig) -> Result<DemixReport> {
    cfg.validate()?;
    let n = cfg.n;
    let len = cfg.sample_count();
    let sources = synth_sources(n, len, cfg.sample_rate, cfg.seed)?;
    let a = if cfg.identity_mixing {
        MixingMatrix::identity(n)
    } else {
        random_mixing_gains(n, n, cfg.dynamic_range_db, cfg.seed.wrapping_add(0x9e37_79b9))?
    };
    let mixtures = mix(&sources, &a)?;

    let seg_len = len / cfg.segments;
    let grams: Vec<SegmentGram> = (0..cfg.segments)
        .map(|k| {
            let range = k * seg_len..(k + 1) * seg_len;
            let s: Vec<&[f64]> = sources.iter().map(|w| &w.samples()[range.clone()]).collect();
            let x: Vec<&[f64]> = mixtures.iter().map(|w| &w.samples()[range.clone()]).collect();
            SegmentGram::new(&s, &x)
        })
        .collect();
    let mut full = grams[0].clone();
    for g in &grams[1..] {
        full.add(g);
    }

    let (baseline_si_sdr, _) = best_assignment_si_sdr(&sources, &mixtures)?;

    let mut state = DemixState {
        w: SquareMatrix::identity(n),
        epoch: 0,
        beta: cfg.schedule.beta(0),
        loss_history: Vec::with_capacity(cfg.epochs),
        assignment_history: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        let beta = cfg.schedule.beta(epoch);
        let sinkhorn = SinkhornConfig::new(beta, cfg.iterations)?;
        let diverged = |e: Error| {
            if e.is_numeric() {
                Error::TrainingDiverged { epoch }
            } else {
                e
            }
        };
        let terms = segment_costs(&grams, &state.w, cfg.threads)?;

        // Per-segment gradients of the batch mean loss: dL/dC_k = grad_k / K.
        let mut grad_w = SquareMatrix::zeros(n);
        let mut value = 0.0;
        for (g, t) in grams.iter().zip(&terms) {
            let single = sinkpit_value_and_grad(&t.cost, &sinkhorn).map_err(diverged)?;
            value += single.value;
            let scaled = single.grad.map(|x| x / cfg.segments as f64);
            let gw = chain_to_weights(g, t, &scaled, &state.w);
            for (acc, x) in grad_w.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *acc += x;
            }
        }
        let loss = value / cfg.segments as f64;
        let grad_sq: f64 = grad_w.as_slice().iter().map(|g| g * g).sum();
        if !loss.is_finite() || !grad_sq.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let full_cost = full.evaluate(&state.w)?.cost;
        state.assignment_history.push(hungarian(&full_cost).permutation);
        state.loss_history.push(loss);

        // Backtracking (Armijo) along -grad, starting from the configured rate.
        let mut step = cfg.learning_rate;
        for _ in 0..MAX_BACKTRACKS {
            let trial = SquareMatrix::from_row_major(
                n,
                state
                    .w
                    .as_slice()
                    .iter()
                    .zip(grad_w.as_slice())
                    .map(|(w, g)| w - step * g)
                    .collect(),
            )?;
            let accepted = match batch_loss(&grams, &trial, &sinkhorn, cfg.threads) {
                Ok(trial_loss) => trial_loss <= loss - ARMIJO_FRACTION * step * grad_sq,
                Err(Error::DegenerateSignal) => false,
                Err(e) => return Err(diverged(e)),
            };
            if accepted {
                state.w = trial;
                break;
            }
            step *= 0.5;
        }
        state.epoch = epoch + 1;
        state.beta = beta;
    }

    let estimates = apply_demixer(&state.w, &mixtures)?;
    let (final_si_sdr, final_permutation) = best_assignment_si_sdr(&sources, &estimates)?;
    Ok(DemixReport {
        state,
        mixing_gains: a.gains().to_vec(),
        baseline_si_sdr,
        final_si_sdr,
        si_sdr_improvement: final_si_sdr - baseline_si_sdr,
        final_permutation,
    })
}

/// Trailing moving average with the given window (shorter at the start).
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        sum += x;
        if k >= window {
            sum -= xs[k - window];
        }
        out.push(sum / (k + 1).min(window) as f64);
    }
    out
}
