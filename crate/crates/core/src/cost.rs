//! Exact parameter and multiply-accumulate accounting over a built model.
//!
//! The headline "FLOPs" figure is a MAC count over convolution and linear
//! layers only; bias additions, activations, pooling, normalization, and the
//! attention operators' elementwise work are tallied separately. Display
//! supports both decimal (K/M/G = 10³ⁿ) and binary (Ki/Mi/Gi = 2¹⁰ⁿ) unit
//! bases; the binary base matches the formatter behind the reference
//! classification figures.

use crate::error::Result;
use crate::models::Model;
use crate::tensor::Shape;

/// One accounted layer.
#[derive(Debug, Clone)]
pub struct CostRow {
    pub name: String,
    pub params: u64,
    pub macs: u64,
    pub elem_ops: u64,
}

impl CostRow {
    pub fn new(name: impl Into<String>, params: u64, macs: u64, elem_ops: u64) -> CostRow {
        CostRow {
            name: name.into(),
            params,
            macs,
            elem_ops,
        }
    }

    pub fn elemwise(name: impl Into<String>, elem_ops: u64) -> CostRow {
        CostRow::new(name, 0, 0, elem_ops)
    }
}

/// Pure function of (model structure, input shape).
#[derive(Debug, Clone)]
pub struct CostReport {
    pub model: String,
    pub input: Shape,
    pub rows: Vec<CostRow>,
    pub total_params: u64,
    pub total_macs: u64,
    pub total_elem_ops: u64,
}

impl CostReport {
    pub fn from_rows(model: String, input: Shape, rows: Vec<CostRow>) -> CostReport {
        let total_params = rows.iter().map(|r| r.params).sum();
        let total_macs = rows.iter().map(|r| r.macs).sum();
        let total_elem_ops = rows.iter().map(|r| r.elem_ops).sum();
        CostReport {
            model,
            input,
            rows,
            total_params,
            total_macs,
            total_elem_ops,
        }
    }

    /// Totals with stem and classifier head rows excluded (the narrower
    /// counting convention some publications use).
    pub fn totals_excluding_stem_head(&self) -> (u64, u64) {
        let excluded = |name: &str| name.starts_with("stem.") || name.starts_with("head.");
        let params = self
            .rows
            .iter()
            .filter(|r| !excluded(&r.name))
            .map(|r| r.params)
            .sum();
        let macs = self
            .rows
            .iter()
            .filter(|r| !excluded(&r.name))
            .map(|r| r.macs)
            .sum();
        (params, macs)
    }
}

/// Unit base for human-readable figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitBase {
    Decimal,
    Binary,
}

impl UnitBase {
    pub fn kilo(&self) -> f64 {
        match self {
            UnitBase::Decimal => 1e3,
            UnitBase::Binary => 1024.0,
        }
    }
    pub fn mega(&self) -> f64 {
        self.kilo() * self.kilo()
    }
    pub fn giga(&self) -> f64 {
        self.mega() * self.kilo()
    }
}

/// Trainable parameter total by brute-force walk over the parameter store.
/// Kept independent of the analytic per-layer formulas so the two paths can
/// check each other.
pub fn count_params(model: &Model) -> u64 {
    model.store.trainable_count()
}

/// Per-layer analytic parameter/MAC accounting on the given input shape.
pub fn count_flops(model: &Model, input: Shape) -> Result<CostReport> {
    model.cost_report(input)
}

/// Side-by-side cost comparison; deltas are against the first entry.
pub struct Comparison {
    pub input: Shape,
    pub entries: Vec<CostReport>,
}

pub fn compare(models: &[&Model], input: Shape) -> Result<Comparison> {
    let entries = models
        .iter()
        .map(|m| m.cost_report(input))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { input, entries })
}

impl Comparison {
    pub fn render_table(&self, base: UnitBase) -> String {
        let mut out = String::new();
        let (pk, gk) = (base.kilo(), base.giga());
        out.push_str(&format!(
            "{:<24} {:>12} {:>12} {:>12} {:>12}\n",
            "model", "params (K)", "MACs (G)", "Δparams", "ΔMACs"
        ));
        let base_entry = &self.entries[0];
        for e in &self.entries {
            let dp = e.total_params as i64 - base_entry.total_params as i64;
            let dm = e.total_macs as i64 - base_entry.total_macs as i64;
            out.push_str(&format!(
                "{:<24} {:>12.1} {:>12.2} {:>+12} {:>+12}\n",
                e.model,
                e.total_params as f64 / pk,
                e.total_macs as f64 / gk,
                dp,
                dm
            ));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("model,params,macs,delta_params,delta_macs\n");
        let base_entry = &self.entries[0];
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.model,
                e.total_params,
                e.total_macs,
                e.total_params as i64 - base_entry.total_params as i64,
                e.total_macs as i64 - base_entry.total_macs as i64
            ));
        }
        out
    }
}
