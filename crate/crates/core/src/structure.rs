//! Normalization and structural classification of 2x2 click matrices.
//!
//! A 2x2 instance is normalized by permuting categories and/or types until
//! the largest click probability sits at (category 1, type x). The
//! normalized matrix then falls into exactly one of three classes, checked
//! in order with exact comparisons on the input values:
//!
//! * dominant row: `P[1][y] >= P[2][y]`
//! * dominant column: `P[2][x] >= P[2][y] > P[1][y]`
//! * dominant diagonal: everything else, i.e. `P[1][x] >= P[2][y] > P[1][y], P[2][x]`

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Instance, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    DominantRow,
    DominantColumn,
    DominantDiagonal,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Structure::DominantRow => "DominantRow",
            Structure::DominantColumn => "DominantColumn",
            Structure::DominantDiagonal => "DominantDiagonal",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dr" | "dominantrow" | "dominant-row" => Ok(Structure::DominantRow),
            "dc" | "dominantcolumn" | "dominant-column" => Ok(Structure::DominantColumn),
            "dd" | "dominantdiagonal" | "dominant-diagonal" => Ok(Structure::DominantDiagonal),
            other => Err(format!(
                "unknown structure '{other}' (expected dr, dc or dd)"
            )),
        }
    }
}

/// Row/column swaps that took an instance to normalized form. Each swap is
/// an involution, so applying the permutation twice is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Permutation {
    pub swap_categories: bool,
    pub swap_types: bool,
}

impl Permutation {
    pub fn category(&self, a: usize) -> usize {
        if self.swap_categories {
            1 - a
        } else {
            a
        }
    }

    pub fn user_type(&self, x: usize) -> usize {
        if self.swap_types {
            1 - x
        } else {
            x
        }
    }

    /// Applies the permutation to a 2x2 instance.
    pub fn apply(&self, instance: &Instance) -> Result<Instance> {
        instance.require_two_by_two()?;
        let permute = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..2)
                .map(|a| {
                    (0..2)
                        .map(|x| m[self.category(a)][self.user_type(x)])
                        .collect()
                })
                .collect()
        };
        let prior = (0..2)
            .map(|x| instance.prior()[self.user_type(x)])
            .collect();
        Instance::new(
            prior,
            permute(instance.click_matrix()),
            permute(instance.depart_matrix()),
            Some(instance.epsilon()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureClass {
    pub variant: Structure,
    pub permutation: Permutation,
}

/// Classifies a click matrix that is already in normalized form.
pub fn classify_normalized(click: &[Vec<f64>]) -> Structure {
    let (p1x, p1y) = (click[0][0], click[0][1]);
    let (p2x, p2y) = (click[1][0], click[1][1]);
    debug_assert!(p1x >= p1y && p1x >= p2x && p1x >= p2y);
    if p1y >= p2y {
        Structure::DominantRow
    } else if p2x >= p2y {
        Structure::DominantColumn
    } else {
        Structure::DominantDiagonal
    }
}

/// Moves the largest click probability to (category 1, type x) and
/// classifies the result. Ties for the maximum go to the first entry in
/// row-major order.
pub fn normalize_2x2(instance: &Instance) -> Result<(Instance, StructureClass)> {
    instance.require_two_by_two()?;
    let click = instance.click_matrix();
    let mut best = (0, 0);
    for a in 0..2 {
        for x in 0..2 {
            if click[a][x] > click[best.0][best.1] {
                best = (a, x);
            }
        }
    }
    let permutation = Permutation {
        swap_categories: best.0 == 1,
        swap_types: best.1 == 1,
    };
    let normalized = permutation.apply(instance)?;
    let variant = classify_normalized(normalized.click_matrix());
    Ok((
        normalized,
        StructureClass {
            variant,
            permutation,
        },
    ))
}

/// Classification of an arbitrary 2x2 instance.
pub fn classify(instance: &Instance) -> Result<Structure> {
    Ok(normalize_2x2(instance)?.1.variant)
}

/// Maps a policy over normalized categories back to the original labels.
pub fn denormalize_policy(policy: &Policy, structure: &StructureClass) -> Policy {
    let perm = structure.permutation;
    policy.relabel(|a| perm.category(a))
}
