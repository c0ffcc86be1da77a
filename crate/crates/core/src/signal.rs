//! Waveforms, the SI-SDR metric, cost-matrix construction and the linear
//! mixing model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{CostMatrix, SquareMatrix};

pub const DEFAULT_SAMPLE_RATE: u32 = 8000;
pub const DEFAULT_CLAMP_DB: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) || sample_rate == 0 {
            return Err(Error::DegenerateSignal);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        dot(&self.samples, &self.samples)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiSdrOptions {
    /// Results are clamped to `[-clamp_db, clamp_db]`.
    pub clamp_db: f64,
    /// Subtract each signal's mean first (the common centered variant).
    pub zero_mean: bool,
}

impl Default for SiSdrOptions {
    fn default() -> Self {
        Self {
            clamp_db: DEFAULT_CLAMP_DB,
            zero_mean: false,
        }
    }
}

/// Squared correlation `<u,v>^2 / (|u|^2 |v|^2)` and its ingredients.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Correlation {
    pub cross: f64,
    pub energy_u: f64,
    pub energy_v: f64,
}

impl Correlation {
    pub fn ratio(&self) -> f64 {
        self.cross * self.cross / (self.energy_u * self.energy_v)
    }
}

/// dB value from a squared correlation, and whether the clamp engaged.
pub(crate) fn si_sdr_from_ratio(r: f64, clamp_db: f64) -> (f64, bool) {
    let r = r.clamp(0.0, 1.0);
    // Denominator |u|^2|v|^2 - <u,v>^2 underflows relative to |u|^2|v|^2.
    if 1.0 - r <= 1e-12 {
        return (clamp_db, true);
    }
    let db = 10.0 * (r / (1.0 - r)).log10();
    if db >= clamp_db {
        (clamp_db, true)
    } else if db <= -clamp_db {
        (-clamp_db, true)
    } else {
        (db, false)
    }
}

pub fn si_sdr(u: &Waveform, v: &Waveform) -> Result<f64> {
    si_sdr_with(u, v, &SiSdrOptions::default())
}

/// `10 log10(<u,v>^2 / (|u|^2 |v|^2 - <u,v>^2))`, symmetric in its arguments.
pub fn si_sdr_with(u: &Waveform, v: &Waveform, opts: &SiSdrOptions) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    let corr = if opts.zero_mean {
        let cu = centered(&u.samples);
        let cv = centered(&v.samples);
        Correlation {
            cross: dot(&cu, &cv),
            energy_u: dot(&cu, &cu),
            energy_v: dot(&cv, &cv),
        }
    } else {
        Correlation {
            cross: dot(&u.samples, &v.samples),
            energy_u: u.energy(),
            energy_v: v.energy(),
        }
    };
    if !(corr.energy_u > 0.0 && corr.energy_v > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    Ok(si_sdr_from_ratio(corr.ratio(), opts.clamp_db).0)
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// `C[i][j] = -si_sdr(estimate_j, source_i)`.
pub fn pairwise_cost_matrix(sources: &[Waveform], estimates: &[Waveform]) -> Result<CostMatrix> {
    pairwise_cost_matrix_with(sources, estimates, &SiSdrOptions::default())
}

pub fn pairwise_cost_matrix_with(
    sources: &[Waveform],
    estimates: &[Waveform],
    opts: &SiSdrOptions,
) -> Result<CostMatrix> {
    let n = sources.len();
    if estimates.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: estimates.len(),
        });
    }
    check_uniform(sources.iter().chain(estimates))?;
    let mut rows = Vec::with_capacity(n);
    for s in sources {
        let row = estimates
            .iter()
            .map(|y| si_sdr_with(y, s, opts).map(|db| -db))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    CostMatrix::from_rows(&rows)
}

fn check_uniform<'a>(mut signals: impl Iterator<Item = &'a Waveform>) -> Result<()> {
    let Some(first) = signals.next() else {
        return Err(Error::EmptyBatch);
    };
    for w in signals {
        if w.len() != first.len() {
            return Err(Error::LengthMismatch(first.len(), w.len()));
        }
        if w.sample_rate != first.sample_rate {
            return Err(Error::SampleRateMismatch(first.sample_rate, w.sample_rate));
        }
    }
    Ok(())
}

/// `M x N` matrix of positive linear gains.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    rows: usize,
    cols: usize,
    gains: Vec<f64>,
}

impl MixingMatrix {
    pub fn new(rows: usize, cols: usize, gains: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || gains.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: gains.len(),
            });
        }
        if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidConfig("mixing gains must be positive and finite".into()));
        }
        Ok(Self { rows, cols, gains })
    }

    /// Any finite gains, including zero and negative ones (used for demixers).
    pub(crate) fn new_unchecked(rows: usize, cols: usize, gains: Vec<f64>) -> Self {
        debug_assert_eq!(gains.len(), rows * cols);
        Self { rows, cols, gains }
    }

    pub fn identity(n: usize) -> Self {
        // Off-diagonal gains are zero, which the positive-gain constructor would reject.
        let m = SquareMatrix::identity(n);
        Self {
            rows: n,
            cols: n,
            gains: m.as_slice().to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gains[i * self.cols + j]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }
}

/// `x_i(t) = sum_j A_ij s_j(t)`.
pub fn mix(sources: &[Waveform], a: &MixingMatrix) -> Result<Vec<Waveform>> {
    if sources.len() != a.cols {
        return Err(Error::DimensionMismatch {
            expected: a.cols,
            actual: sources.len(),
        });
    }
    check_uniform(sources.iter())?;
    let len = sources[0].len();
    let rate = sources[0].sample_rate;
    (0..a.rows)
        .map(|i| {
            let mut out = vec![0.0; len];
            for (j, s) in sources.iter().enumerate() {
                let g = a.gain(i, j);
                for (o, x) in out.iter_mut().zip(&s.samples) {
                    *o += g * x;
                }
            }
            Waveform::new(out, rate)
        })
        .collect()
}

/// Gains `10^(U/20)` with `U ~ Uniform[-range/2, range/2]` dB.
pub fn random_mixing_gains(m: usize, n: usize, dynamic_range_db: f64, seed: u64) -> Result<MixingMatrix> {
    if !(dynamic_range_db >= 0.0 && dynamic_range_db.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "dynamic range must be >= 0 dB, got {dynamic_range_db}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains = (0..m * n)
        .map(|_| {
            let u = (rng.random::<f64>() - 0.5) * dynamic_range_db;
            10f64.powf(u / 20.0)
        })
        .collect();
    MixingMatrix::new(m, n, gains)
}
