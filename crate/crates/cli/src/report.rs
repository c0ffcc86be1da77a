use std::fmt::Write;

use serde::Serialize;
use sinkpit::Permutation;

#[derive(Debug, Serialize)]
pub struct PlanSummary {
    pub row_sums: Vec<f64>,
    pub column_sums: Vec<f64>,
    pub max_deviation: f64,
}

#[derive(Debug, Serialize)]
pub struct MethodReport {
    pub method: &'static str,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_cost: Option<f64>,
    /// 1-based; the rounded plan for sinkpit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSummary>,
}

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub n: usize,
    pub results: Vec<MethodReport>,
    /// Whether every reported permutation is the same; only with `--all`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<bool>,
}

pub fn one_based(p: &Permutation) -> Vec<usize> {
    p.as_slice().iter().map(|j| j + 1).collect()
}

pub fn cycle_form(p: &[usize]) -> String {
    let items: Vec<String> = p.iter().map(usize::to_string).collect();
    format!("({})", items.join(" "))
}

fn numbers(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

impl SolveReport {
    pub fn agreement_of(results: &[MethodReport]) -> bool {
        let mut perms = results.iter().filter_map(|r| r.permutation.as_ref());
        match perms.next() {
            Some(first) => perms.all(|p| p == first),
            None => true,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        for r in &self.results {
            let _ = write!(out, "{:<12} loss {:.9}", r.method, r.loss);
            if let Some(t) = r.total_cost {
                let _ = write!(out, "  total {t:.9}");
            }
            if let Some(p) = &r.permutation {
                let label = if r.plan.is_some() { "rounded" } else { "permutation" };
                let _ = write!(out, "  {label} {}", cycle_form(p));
            }
            out.push('\n');
            if let Some(plan) = &r.plan {
                let _ = writeln!(out, "{:<12} row sums    {}", "", numbers(&plan.row_sums));
                let _ = writeln!(out, "{:<12} column sums {}", "", numbers(&plan.column_sums));
                let _ = writeln!(out, "{:<12} max deviation {:.3e}", "", plan.max_deviation);
            }
        }
        match self.agreement {
            Some(true) => out.push_str("agreement: all permutations agree\n"),
            Some(false) => out.push_str("agreement: permutations differ\n"),
            None => {}
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,loss,total_cost,permutation,max_deviation\n");
        for r in &self.results {
            let total = r.total_cost.map(|t| format!("{t:?}")).unwrap_or_default();
            let perm = r
                .permutation
                .as_ref()
                .map(|p| p.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            let dev = r
                .plan
                .as_ref()
                .map(|p| format!("{:e}", p.max_deviation))
                .unwrap_or_default();
            let _ = writeln!(out, "{},{:?},{total},{perm},{dev}", r.method, r.loss);
        }
        out
    }
}
