//! Structural complexity of a schema: weighted blend of nesting depth,
//! scalar-type diversity, object branching, and subtree reuse.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::json::schema::{ScalarKind, Schema};

/// Component scores, each normalized into [0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityInputs {
    pub nesting: f64,
    pub diversity: f64,
    pub branching: f64,
    pub reuse: f64,
}

/// Blend weights (nesting, diversity, branching, reuse). They sum to 1,
/// so all-one inputs score exactly 1.
pub const COMPLEXITY_WEIGHTS: (f64, f64, f64, f64) = (0.4, 0.2, 0.2, 0.2);

/// Depth at which nesting saturates.
pub const DEPTH_CAP: f64 = 6.0;
/// Mean object-branching factor at which branching saturates.
pub const BRANCHING_CAP: f64 = 10.0;

/// Computes the four component scores for a schema.
///
/// Nesting: max node depth (root = 0) over [`DEPTH_CAP`], capped at 1.
/// Diversity: (distinct scalar kinds − 1)/3, zero when no scalars.
/// Branching: mean child count of object nodes over [`BRANCHING_CAP`],
/// capped at 1, zero when no object nodes.
/// Reuse: fraction of container (object/array) nodes whose structural
/// signature occurs at least twice.
pub fn complexity_inputs(schema: &Schema) -> ComplexityInputs {
    let mut walk = Walk::default();
    walk.visit(schema, 0);

    let nesting = (walk.max_depth as f64 / DEPTH_CAP).min(1.0);

    let diversity = if walk.scalar_kinds.is_empty() {
        0.0
    } else {
        (walk.scalar_kinds.len() as f64 - 1.0) / 3.0
    };

    let branching = if walk.object_children.is_empty() {
        0.0
    } else {
        let mean = walk.object_children.iter().sum::<usize>() as f64
            / walk.object_children.len() as f64;
        (mean / BRANCHING_CAP).min(1.0)
    };

    let reuse = if walk.container_signatures.is_empty() {
        0.0
    } else {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for sig in &walk.container_signatures {
            *counts.entry(sig.as_str()).or_insert(0) += 1;
        }
        let duplicated: usize = walk
            .container_signatures
            .iter()
            .filter(|sig| counts[sig.as_str()] >= 2)
            .count();
        duplicated as f64 / walk.container_signatures.len().max(1) as f64
    };

    ComplexityInputs { nesting, diversity, branching, reuse }
}

/// Weighted blend of the component scores. Inputs outside [0,1] are a
/// range error.
pub fn complexity(inputs: &ComplexityInputs) -> Result<f64> {
    for (name, v) in [
        ("nesting", inputs.nesting),
        ("diversity", inputs.diversity),
        ("branching", inputs.branching),
        ("reuse", inputs.reuse),
    ] {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::Range(format!(
                "complexity input `{name}` = {v} is outside [0, 1]"
            )));
        }
    }
    let (a, b, g, d) = COMPLEXITY_WEIGHTS;
    Ok(a * inputs.nesting + b * inputs.diversity + g * inputs.branching + d * inputs.reuse)
}

/// Convenience: component scores blended in one call.
pub fn schema_complexity(schema: &Schema) -> f64 {
    complexity(&complexity_inputs(schema)).expect("component scores are normalized")
}

#[derive(Default)]
struct Walk {
    max_depth: usize,
    scalar_kinds: HashSet<ScalarKind>,
    object_children: Vec<usize>,
    container_signatures: Vec<String>,
}

impl Walk {
    fn visit(&mut self, schema: &Schema, depth: usize) {
        self.max_depth = self.max_depth.max(depth);
        match schema {
            Schema::Scalar(k) => {
                self.scalar_kinds.insert(*k);
            }
            Schema::Object(children) => {
                self.object_children.push(children.len());
                self.container_signatures.push(schema.signature());
                for child in children.values() {
                    self.visit(child, depth + 1);
                }
            }
            Schema::Array(item) => {
                self.container_signatures.push(schema.signature());
                self.visit(item, depth + 1);
            }
        }
    }
}
