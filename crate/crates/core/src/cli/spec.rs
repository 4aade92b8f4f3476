//! Job specifications read by the command line, and their JSON schemas.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Result;
use crate::restrict::RestrictionProblem;
use crate::tower::{gallery, BaireTower};

/// A tower given inline or by gallery name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TowerRef {
    Named { gallery: String },
    Inline(BaireTower),
}

impl TowerRef {
    pub fn resolve(&self) -> Result<BaireTower> {
        match self {
            TowerRef::Named { gallery: name } => gallery(name),
            TowerRef::Inline(t) => Ok(t.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuildSpec {
    Diagonal {
        tower: TowerRef,
        arity: usize,
        #[serde(default)]
        depth: Option<usize>,
    },
    Restriction {
        problem: RestrictionProblem,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub per_axis: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    /// Plan file, relative to the spec file.
    pub plan: String,
    #[serde(default)]
    pub points: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
}

pub fn default_cutoffs() -> Vec<usize> {
    vec![1 << 30]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalSuite {
    pub points: usize,
    #[serde(default)]
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSuite {
    /// Explicit centers, one point per variable.
    #[serde(default)]
    pub centers: Vec<Vec<Vec<f64>>>,
    /// Seeded certificate-backed centers on the diagonal.
    #[serde(default)]
    pub diagonal: usize,
    /// Seeded certificate-backed centers off the diagonal.
    #[serde(default)]
    pub off_diagonal: usize,
    /// Radii `2^-a .. 2^-b` for `[a, b]`.
    #[serde(default = "default_radii_exp")]
    pub radii_exp: (i32, i32),
    #[serde(default = "default_section_tol")]
    pub tol: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_radii_exp() -> (i32, i32) {
    (5, 20)
}

fn default_section_tol() -> f64 {
    1e-3
}

fn default_budget() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSuite {
    pub center: Vec<Vec<f64>>,
    #[serde(default = "default_radii_exp")]
    pub radii_exp: (i32, i32),
    /// Expected lower bound on the oscillation at every scale.
    #[serde(default = "default_joint_min")]
    pub min: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_joint_min() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suites {
    #[serde(default)]
    pub diagonal: Option<DiagonalSuite>,
    #[serde(default)]
    pub sections: Option<SectionSuite>,
    #[serde(default)]
    pub joint: Option<JointSuite>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub plan: String,
    /// Tower the diagonal is compared against; defaults to the plan's own.
    #[serde(default)]
    pub tower: Option<TowerRef>,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
    pub suites: Suites,
}

pub fn radii(exp: (i32, i32)) -> Vec<f64> {
    (exp.0..=exp.1).map(|e| 0.5_f64.powi(e)).collect()
}

/// JSON schemas of the three job specifications.
pub fn schemas() -> Value {
    let point = json!({"type": "array", "items": {"type": "array", "items": {"type": "number"}}});
    let tower_ref = json!({
        "oneOf": [
            {"type": "object", "required": ["gallery"], "properties": {"gallery": {"enum": crate::tower::GALLERY_NAMES}}},
            {"type": "object", "required": ["rank"], "description": "inline tower: rank, base | family, certificate"}
        ]
    });
    json!({
        "build": {
            "$schema": "https://json-schema.org/draft/2020-12/schema",
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind", "tower", "arity"],
                    "properties": {
                        "kind": {"const": "diagonal"},
                        "tower": tower_ref,
                        "arity": {"type": "integer", "minimum": 2},
                        "depth": {"type": "integer", "minimum": 1}
                    }
                },
                {
                    "type": "object",
                    "required": ["kind", "problem"],
                    "properties": {
                        "kind": {"const": "restriction"},
                        "problem": {
                            "type": "object",
                            "required": ["factors", "set", "g", "mode"],
                            "properties": {
                                "factors": {"type": "array", "description": "metric models"},
                                "set": {
                                    "type": "object",
                                    "required": ["pieces"],
                                    "properties": {
                                        "pieces": {"type": "array", "items": {
                                            "type": "object",
                                            "required": ["t_lo", "t_hi", "maps"]
                                        }},
                                        "claims": {"type": "array"}
                                    }
                                },
                                "g": {"type": "object", "description": "tower on the parameter interval"},
                                "mode": {"enum": ["embedding", "injective", "glued", "theorem2", "theorem4", "theorem5"]},
                                "cover": {"type": "array", "items": {"type": "object", "required": ["lo", "hi"]}},
                                "cutoffs": {"type": "object", "properties": {
                                    "s_cut": {"type": "integer"}, "depth": {"type": "integer"}, "samples": {"type": "integer"}
                                }},
                                "tolerances": {"type": "object", "properties": {
                                    "coherence": {"type": "number"}, "identify": {"type": "number"},
                                    "value": {"type": "number"}, "injectivity": {"type": "number"},
                                    "separation": {"type": "number"}
                                }}
                            }
                        }
                    }
                }
            ]
        },
        "eval": {
            "$schema": "https://json-schema.org/draft/2020-12/schema",
            "type": "object",
            "required": ["plan"],
            "properties": {
                "plan": {"type": "string"},
                "points": {"type": "array", "items": point},
                "grid": {"type": "object", "required": ["per_axis"], "properties": {"per_axis": {"type": "integer", "minimum": 2}}},
                "cutoffs": {"type": "array", "items": {"type": "integer", "minimum": 1}}
            }
        },
        "verify": {
            "$schema": "https://json-schema.org/draft/2020-12/schema",
            "type": "object",
            "required": ["plan", "suites"],
            "properties": {
                "plan": {"type": "string"},
                "tower": tower_ref,
                "cutoffs": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "suites": {
                    "type": "object",
                    "properties": {
                        "diagonal": {"type": "object", "required": ["points"]},
                        "sections": {"type": "object", "properties": {
                            "centers": {"type": "array", "items": point},
                            "diagonal": {"type": "integer"}, "off_diagonal": {"type": "integer"},
                            "radii_exp": {"type": "array", "items": {"type": "integer"}},
                            "tol": {"type": "number"}, "budget": {"type": "integer"}
                        }},
                        "joint": {"type": "object", "required": ["center"]}
                    }
                }
            }
        }
    })
}
