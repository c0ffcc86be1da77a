//! Browser front end. The report builders are plain Rust and run natively in
//! tests; the `#[wasm_bindgen]` wrappers only serialize them to JSON.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sinkpit::demix::{moving_average, run_demix, DemixConfig};
use sinkpit::probpit::ln_factorial;
use sinkpit::{
    hungarian, probpit_loss, round_plan, sinkhorn_iterate, sinkpit_loss, CostMatrix, PermutationPrior, SinkhornConfig,
};
use wasm_bindgen::prelude::*;

/// Largest N offered by the page; ProbPIT enumerates N! permutations.
pub const MAX_N: usize = 8;
/// Epoch budget for the in-browser training run.
pub const MAX_EPOCHS: usize = 1000;

const COST_STD: f64 = 10.0;

fn costs(n: usize, seed: u64) -> Result<CostMatrix, String> {
    if n == 0 || n > MAX_N {
        return Err(format!("n must be in 1..={MAX_N}"));
    }
    Ok(CostMatrix::random_gaussian(
        n,
        COST_STD,
        &mut ChaCha8Rng::seed_from_u64(seed),
    ))
}

fn one_based(p: &sinkpit::Permutation) -> Vec<usize> {
    p.as_slice().iter().map(|j| j + 1).collect()
}

#[derive(Debug, Serialize)]
pub struct PlanView {
    pub n: usize,
    pub beta: f64,
    pub iterations: usize,
    pub costs: Vec<Vec<f64>>,
    pub plan: Vec<Vec<f64>>,
    pub marginal_deviation: f64,
    pub entropy: f64,
    pub sinkpit_loss: f64,
    pub pit_loss: f64,
    pub optimal: Vec<usize>,
    pub rounded: Vec<usize>,
}

/// Sinkhorn plan for a seeded `N(0, 10^2)` cost matrix.
pub fn plan_view(n: usize, beta: f64, iterations: usize, seed: u64) -> Result<PlanView, String> {
    let c = costs(n, seed)?;
    let cfg = SinkhornConfig::new(beta, iterations).map_err(|e| e.to_string())?;
    let plan = sinkhorn_iterate(&c, &cfg).map_err(|e| e.to_string())?.plan();
    let exact = hungarian(&c);
    Ok(PlanView {
        n,
        beta,
        iterations,
        costs: c.matrix().rows().map(<[f64]>::to_vec).collect(),
        plan: plan.matrix().rows().map(<[f64]>::to_vec).collect(),
        marginal_deviation: plan.marginal_deviation(),
        entropy: plan.entropy(),
        sinkpit_loss: sinkpit_loss(&c, &cfg).map_err(|e| e.to_string())?,
        pit_loss: exact.mean_cost,
        optimal: one_based(&exact.permutation),
        rounded: one_based(&round_plan(&plan)),
    })
}

#[derive(Debug, Serialize)]
pub struct RelaxationCurves {
    pub n: usize,
    pub pit_loss: f64,
    pub betas: Vec<f64>,
    pub sinkpit: Vec<f64>,
    pub gammas: Vec<f64>,
    /// `(probpit - ln N!) / N`, on the same per-source scale as `pit_loss`.
    pub probpit: Vec<f64>,
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Both relaxations against the exact loss as the temperature parameter varies.
pub fn relaxation_curves(n: usize, seed: u64, iterations: usize, points: usize) -> Result<RelaxationCurves, String> {
    let c = costs(n, seed)?;
    let points = points.clamp(2, 200);
    let betas = log_grid(0.01, 10.0, points);
    let gammas = log_grid(0.01, 100.0, points);
    let sinkpit = betas
        .iter()
        .map(|&b| {
            let cfg = SinkhornConfig::new(b, iterations).map_err(|e| e.to_string())?;
            sinkpit_loss(&c, &cfg).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let probpit = gammas
        .iter()
        .map(|&g| {
            probpit_loss(&c, g, &PermutationPrior::Flat)
                .map(|v| (v - ln_factorial(n)) / n as f64)
                .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RelaxationCurves {
        n,
        pit_loss: hungarian(&c).mean_cost,
        betas,
        sinkpit,
        gammas,
        probpit,
    })
}

#[derive(Debug, Serialize)]
pub struct TrainingView {
    pub epochs: usize,
    pub loss: Vec<f64>,
    pub smoothed_loss: Vec<f64>,
    pub betas: Vec<f64>,
    pub baseline_si_sdr: f64,
    pub final_si_sdr: f64,
    pub si_sdr_improvement: f64,
    pub permutation: Vec<usize>,
}

/// The demixing demo at browser scale.
pub fn training_view(n: usize, epochs: usize, seed: u64) -> Result<TrainingView, String> {
    if epochs == 0 || epochs > MAX_EPOCHS {
        return Err(format!("epochs must be in 1..={MAX_EPOCHS}"));
    }
    let cfg = DemixConfig {
        n,
        epochs,
        seed,
        ..Default::default()
    };
    let report = run_demix(&cfg).map_err(|e| e.to_string())?;
    let loss = report.state.loss_history;
    Ok(TrainingView {
        epochs,
        smoothed_loss: moving_average(&loss, 20),
        loss,
        betas: (0..epochs).map(|e| cfg.schedule.beta(e)).collect(),
        baseline_si_sdr: report.baseline_si_sdr,
        final_si_sdr: report.final_si_sdr,
        si_sdr_improvement: report.si_sdr_improvement,
        permutation: one_based(&report.final_permutation),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = planView)]
pub fn plan_view_json(n: usize, beta: f64, iterations: usize, seed: u32) -> Result<String, JsValue> {
    to_js(plan_view(n, beta, iterations, seed as u64))
}

#[wasm_bindgen(js_name = relaxationCurves)]
pub fn relaxation_curves_json(n: usize, seed: u32, iterations: usize, points: usize) -> Result<String, JsValue> {
    to_js(relaxation_curves(n, seed as u64, iterations, points))
}

#[wasm_bindgen(js_name = trainingView)]
pub fn training_view_json(n: usize, epochs: usize, seed: u32) -> Result<String, JsValue> {
    to_js(training_view(n, epochs, seed as u64))
}
