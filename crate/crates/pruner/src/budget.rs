//! Per-layer kept-weight budgets from a global compression target.
//!
//! 3x3 layers are compressed harder than 1x1/FC layers by the factor `rho`
//! (default 1.15). Writing `W3`/`W1` for the weight totals of the two
//! classes and `r` for the global rate, the class rates must satisfy
//!
//! ```text
//! W/r = W3/r3 + W1/r1,    r3 = rho * r1
//! =>  r1 = (W3/rho + W1) * r / W,    r3 = rho * r1
//! ```
//!
//! If the closed form pushes a class rate below 1 (keeping more than all its
//! weights), that rate is clamped to 1 and the other class absorbs the
//! remaining budget; `r = 1` thus degenerates to keeping everything.

use std::collections::BTreeMap;

use crate::error::PruneError;
use model_graph::{count_weights, ModelGraph};

/// Global compression request: overall rate `r`, kernel-size ratio `rho`,
/// and optional per-layer rate overrides that bypass the class rates.
#[derive(Debug, Clone)]
pub struct CompressionTarget {
    pub rate: f64,
    pub rho: f64,
    pub overrides: BTreeMap<String, f64>,
}

impl CompressionTarget {
    pub fn new(rate: f64) -> Self {
        CompressionTarget {
            rate,
            rho: 1.15,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_rho(rate: f64, rho: f64) -> Self {
        CompressionTarget {
            rate,
            rho,
            overrides: BTreeMap::new(),
        }
    }
}

/// A layer's share of the global budget.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBudget {
    pub layer_id: String,
    pub total_weights: u64,
    pub kept_weights: u64,
    pub rate: f64,
    pub is_3x3: bool,
}

#[derive(Debug, Clone)]
pub struct BudgetPlan {
    pub per_layer: Vec<LayerBudget>,
    pub rate_3x3: f64,
    pub rate_other: f64,
    /// Exact (pre-rounding) kept total, for the global-rate equation check.
    pub kept_exact: f64,
}

impl BudgetPlan {
    pub fn kept_total(&self) -> u64 {
        self.per_layer.iter().map(|l| l.kept_weights).sum()
    }

    pub fn budget_for(&self, layer_id: &str) -> Option<u64> {
        self.per_layer
            .iter()
            .find(|l| l.layer_id == layer_id)
            .map(|l| l.kept_weights)
    }
}

/// Splits the model's weight total into per-layer kept budgets meeting the
/// global rate with the 3x3-vs-other ratio `rho`.
pub fn allocate_budgets(
    model: &ModelGraph,
    target: &CompressionTarget,
) -> Result<BudgetPlan, PruneError> {
    if !(target.rate >= 1.0) || !(target.rho > 0.0) {
        return Err(PruneError::InfeasibleTarget {
            message: format!(
                "rate {} and ratio {} must satisfy rate >= 1, ratio > 0",
                target.rate, target.rho
            ),
        });
    }
    let counts = count_weights(model);
    // Overridden layers are carved out before the class-rate solve.
    let mut w3 = 0.0f64;
    let mut w1 = 0.0f64;
    for layer in &counts.per_layer {
        if target.overrides.contains_key(&layer.layer_id) {
            continue;
        }
        if layer.is_3x3 {
            w3 += layer.weights as f64;
        } else {
            w1 += layer.weights as f64;
        }
    }
    // The global rate governs the whole model; overrides then spend their
    // share, leaving the rest for the two kernel-size classes.
    let mut budget = counts.total as f64 / target.rate;
    for (id, rate) in &target.overrides {
        let layer = counts
            .per_layer
            .iter()
            .find(|l| &l.layer_id == id)
            .ok_or_else(|| PruneError::InfeasibleTarget {
                message: format!("override names unknown layer `{id}`"),
            })?;
        if !(*rate >= 1.0) {
            return Err(PruneError::InfeasibleTarget {
                message: format!("override rate {rate} for `{id}` below 1"),
            });
        }
        // Overrides spend the global budget too.
        budget -= layer.weights as f64 / rate;
    }
    if budget < 0.0 {
        return Err(PruneError::InfeasibleTarget {
            message: "per-layer overrides alone exceed the global budget".into(),
        });
    }

    let (rate_3x3, rate_other) = solve_class_rates(w3, w1, budget, target.rho)?;

    let mut per_layer = Vec::with_capacity(counts.per_layer.len());
    let mut kept_exact = 0.0f64;
    for layer in &counts.per_layer {
        let rate = match target.overrides.get(&layer.layer_id) {
            Some(r) => *r,
            None if layer.is_3x3 => rate_3x3,
            None => rate_other,
        };
        let exact = layer.weights as f64 / rate;
        kept_exact += exact;
        let kept = exact.round() as u64;
        let min_kept = min_kept_weights(model, &layer.layer_id);
        if kept < min_kept {
            return Err(PruneError::InfeasibleTarget {
                message: format!(
                    "layer `{}` would keep {kept} weights; fewer than one column per block row-band (needs >= {min_kept})",
                    layer.layer_id
                ),
            });
        }
        per_layer.push(LayerBudget {
            layer_id: layer.layer_id.clone(),
            total_weights: layer.weights,
            kept_weights: kept,
            rate,
            is_3x3: layer.is_3x3,
        });
    }
    Ok(BudgetPlan {
        per_layer,
        rate_3x3,
        rate_other,
        kept_exact,
    })
}

/// One kept column per block row-band on average means keeping at least M
/// weights (each band keeps one column of band-height weights).
fn min_kept_weights(model: &ModelGraph, layer_id: &str) -> u64 {
    let shape = model
        .layer(layer_id)
        .and_then(|l| l.weight_shape)
        .expect("budgeted layers carry weights");
    shape.filters as u64
}

fn solve_class_rates(w3: f64, w1: f64, budget: f64, rho: f64) -> Result<(f64, f64), PruneError> {
    if w3 + w1 == 0.0 {
        return Ok((rho.max(1.0), 1.0));
    }
    if budget > w3 + w1 {
        return Err(PruneError::InfeasibleTarget {
            message: "budget exceeds the weight total".into(),
        });
    }
    let r1 = (w3 / rho + w1) / budget;
    let r3 = rho * r1;
    if r1 >= 1.0 && r3 >= 1.0 {
        return Ok((r3, r1));
    }
    // One class rate fell below 1x; clamp it and let the other class absorb
    // the rest of the budget.
    if r1 < 1.0 {
        let remaining = budget - w1;
        if remaining <= 0.0 {
            return Err(PruneError::InfeasibleTarget {
                message: "non-3x3 layers alone exceed the global budget".into(),
            });
        }
        let r3 = w3 / remaining;
        if r3 < 1.0 - 1e-12 {
            return Err(PruneError::InfeasibleTarget {
                message: format!("derived 3x3 rate {r3:.4} below 1"),
            });
        }
        Ok((r3.max(1.0), 1.0))
    } else {
        let remaining = budget - w3;
        if remaining <= 0.0 {
            return Err(PruneError::InfeasibleTarget {
                message: "3x3 layers alone exceed the global budget".into(),
            });
        }
        let r1 = w1 / remaining;
        if r1 < 1.0 - 1e-12 {
            return Err(PruneError::InfeasibleTarget {
                message: format!("derived non-3x3 rate {r1:.4} below 1"),
            });
        }
        Ok((1.0, r1.max(1.0)))
    }
}
