//! Timing harness comparing brute-force PIT, Hungarian and SinkPIT.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{brute_force_pit, hungarian, BRUTE_FORCE_CAP};
use crate::error::{Error, Result};
use crate::matrix::CostMatrix;
use crate::sinkhorn::{sinkpit_loss, SinkhornConfig};

/// Standard deviation of the Gaussian benchmark costs.
pub const BENCH_COST_STD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BruteForce,
    Hungarian,
    Sinkpit,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::BruteForce, Method::Hungarian, Method::Sinkpit];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::BruteForce => "brute_force",
            Method::Hungarian => "hungarian",
            Method::Sinkpit => "sinkpit",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute_force" | "brute" => Ok(Method::BruteForce),
            "hungarian" => Ok(Method::Hungarian),
            "sinkpit" => Ok(Method::Sinkpit),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub n: usize,
    pub trials: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub sinkhorn: SinkhornConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: (2..=10).collect(),
            trials: 20,
            methods: Method::ALL.to_vec(),
            sinkhorn: SinkhornConfig::default(),
            seed: 0,
        }
    }
}

/// The matrix for `(n, trial)` depends only on the seed, so every method
/// solves the same problems.
pub fn bench_matrix(seed: u64, n: usize, trial: usize) -> CostMatrix {
    let stream = ((n as u64) << 32) | trial as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    CostMatrix::random_gaussian(n, BENCH_COST_STD, &mut rng)
}

fn solve_once(method: Method, c: &CostMatrix, cfg: &SinkhornConfig) -> Result<f64> {
    match method {
        Method::BruteForce => Ok(brute_force_pit(c)?.total_cost),
        Method::Hungarian => Ok(hungarian(c).total_cost),
        Method::Sinkpit => sinkpit_loss(c, cfg),
    }
}

/// Times one solve per trial with a monotonic clock; matrix generation is
/// excluded. Output is sorted by `(method, n)`.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if cfg.sizes.contains(&0) {
        return Err(Error::InvalidConfig("sizes must be positive".into()));
    }
    cfg.sinkhorn.validate()?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut sizes = cfg.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    if methods.contains(&Method::BruteForce) {
        if let Some(&n) = sizes.iter().find(|&&n| n > BRUTE_FORCE_CAP) {
            return Err(Error::TooLarge {
                n,
                cap: BRUTE_FORCE_CAP,
            });
        }
    }

    let mut records = Vec::new();
    for &method in &methods {
        for &n in &sizes {
            // Warm-up pass, not recorded.
            std::hint::black_box(solve_once(
                method,
                &bench_matrix(cfg.seed, n, usize::MAX >> 1),
                &cfg.sinkhorn,
            )?);
            let mut times = Vec::with_capacity(cfg.trials);
            for trial in 0..cfg.trials {
                let c = bench_matrix(cfg.seed, n, trial);
                let start = Instant::now();
                let v = solve_once(method, &c, &cfg.sinkhorn)?;
                let elapsed = start.elapsed().as_secs_f64();
                std::hint::black_box(v);
                times.push(elapsed.max(1e-9));
            }
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            let var = if times.len() > 1 {
                times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (times.len() - 1) as f64
            } else {
                0.0
            };
            records.push(BenchRecord {
                method,
                n,
                trials: cfg.trials,
                mean_seconds: mean,
                std_seconds: var.sqrt(),
            });
        }
    }
    Ok(records)
}

pub const CSV_HEADER: &str = "method,n,trials,mean_seconds,std_seconds";

pub fn write_csv(records: &[BenchRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{:e},{:e}",
            r.method, r.n, r.trials, r.mean_seconds, r.std_seconds
        )?;
    }
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Csv {
                line: 1,
                message: format!("expected header {CSV_HEADER:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Csv { line: k + 1, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
        out.push(BenchRecord {
            method: fields[0]
                .parse()
                .map_err(|_| bad(format!("unknown method {:?}", fields[0])))?,
            n: int(fields[1])?,
            trials: int(fields[2])?,
            mean_seconds: num(fields[3])?,
            std_seconds: num(fields[4])?,
        });
    }
    Ok(out)
}

/// Writes through a sibling temporary file so a failure leaves no partial output.
pub fn write_atomically(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path.file_name().ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "not a file path"),
        )
    })?;
    let tmp = path.with_file_name(format!(".{}.partial", file_name.to_string_lossy()));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Mean time for `(method, n)`, if recorded.
pub fn mean_time(records: &[BenchRecord], method: Method, n: usize) -> Option<f64> {
    records
        .iter()
        .find(|r| r.method == method && r.n == n)
        .map(|r| r.mean_seconds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_runs_every_method_sorted() {
        let cfg = BenchConfig {
            sizes: vec![3, 2],
            trials: 2,
            ..Default::default()
        };
        let records = run_bench(&cfg).unwrap();
        let keys: Vec<(Method, usize)> = records.iter().map(|r| (r.method, r.n)).collect();
        assert_eq!(
            keys,
            vec![
                (Method::BruteForce, 2),
                (Method::BruteForce, 3),
                (Method::Hungarian, 2),
                (Method::Hungarian, 3),
                (Method::Sinkpit, 2),
                (Method::Sinkpit, 3)
            ]
        );
        assert!(records.iter().all(|r| r.mean_seconds > 0.0 && r.trials == 2));
    }

    #[test]
    fn matrices_are_reproducible() {
        assert_eq!(bench_matrix(7, 5, 3), bench_matrix(7, 5, 3));
        assert_ne!(bench_matrix(7, 5, 3), bench_matrix(7, 5, 4));
        assert_ne!(bench_matrix(7, 5, 3), bench_matrix(8, 5, 3));
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![BenchRecord {
            method: Method::Sinkpit,
            n: 10,
            trials: 20,
            mean_seconds: 1.25e-4,
            std_seconds: 3e-6,
        }];
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,n,trials,mean_seconds,std_seconds\nsinkpit,10,20,"));
        assert_eq!(read_csv(&text).unwrap(), records);
        assert!(read_csv("nope\n").is_err());
    }

    #[test]
    fn rejects_oversized_brute_force() {
        let cfg = BenchConfig {
            sizes: vec![13],
            trials: 1,
            ..Default::default()
        };
        assert!(matches!(run_bench(&cfg), Err(Error::TooLarge { .. })));
        let cfg = BenchConfig {
            sizes: vec![13],
            trials: 1,
            methods: vec![Method::Hungarian],
            ..Default::default()
        };
        assert!(run_bench(&cfg).is_ok());
    }

    #[test]
    fn atomic_write_leaves_no_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("missing").join("out.csv");
        assert!(write_atomically(&target, b"x").is_err());
        assert!(!target.exists());
        let ok = dir.path().join("out.csv");
        write_atomically(&ok, b"abc").unwrap();
        assert_eq!(std::fs::read(&ok).unwrap(), b"abc");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
