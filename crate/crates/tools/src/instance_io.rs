//! JSON files for instances and dual states.
//!
//! ```json
//! {"dim": 2, "d": [1.0, 1.0],
//!  "sets": [{"halfspaces": [{"f": [1.0, 0.0], "c": 0.0}, {"f": [0.0, 1.0], "c": "inf"}]}],
//!  "known_projection": [0.0, 1.0]}
//! ```
//!
//! Normals must already have unit length. Numbers are written in their
//! shortest round-trip form.

use std::fs;
use std::path::Path;

use dykstra::geometry::UNIT_TOL;
use dykstra::linalg::norm;
use dykstra::{DualState, ExtReal, Halfspace, Instance, PolyhedralSet};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ToolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OffsetDoc {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HalfspaceDoc {
    f: Vec<f64>,
    c: OffsetDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetDoc {
    halfspaces: Vec<HalfspaceDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    dim: usize,
    d: Vec<f64>,
    sets: Vec<SetDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    known_projection: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DualDoc {
    multipliers: Vec<Vec<f64>>,
}

fn to_doc(inst: &Instance) -> InstanceDoc {
    InstanceDoc {
        dim: inst.dim(),
        d: inst.d().to_vec(),
        sets: inst
            .sets()
            .iter()
            .map(|s| SetDoc {
                halfspaces: s
                    .halfspaces()
                    .iter()
                    .map(|h| HalfspaceDoc {
                        f: h.normal().to_vec(),
                        c: match h.offset() {
                            ExtReal::Finite(c) => OffsetDoc::Number(c),
                            ExtReal::PosInf => OffsetDoc::Text("inf".into()),
                        },
                    })
                    .collect(),
            })
            .collect(),
        known_projection: inst.known_projection().map(<[f64]>::to_vec),
    }
}

fn from_doc(doc: InstanceDoc, path: &Path) -> Result<Instance> {
    let bad = |loc: String, msg: String| ToolError::invalid(path, loc, msg);
    if doc.d.len() != doc.dim {
        return Err(bad(
            "d".into(),
            format!("length {} but dim is {}", doc.d.len(), doc.dim),
        ));
    }
    if let Some(xs) = &doc.known_projection {
        if xs.len() != doc.dim {
            return Err(bad(
                "known_projection".into(),
                format!("length {} but dim is {}", xs.len(), doc.dim),
            ));
        }
    }
    let mut sets = Vec::with_capacity(doc.sets.len());
    for (i, s) in doc.sets.into_iter().enumerate() {
        let mut hs = Vec::with_capacity(s.halfspaces.len());
        for (r, h) in s.halfspaces.into_iter().enumerate() {
            let loc = format!("sets[{i}].halfspaces[{r}]");
            if h.f.len() != doc.dim {
                return Err(bad(
                    loc,
                    format!("normal has length {} but dim is {}", h.f.len(), doc.dim),
                ));
            }
            let c = match h.c {
                OffsetDoc::Number(c) => ExtReal::Finite(c),
                OffsetDoc::Text(t) if t == "inf" => ExtReal::PosInf,
                OffsetDoc::Text(t) => return Err(bad(loc, format!("offset `{t}` is neither a number nor \"inf\""))),
            };
            let nf = norm(&h.f);
            if (nf - 1.0).abs() > UNIT_TOL {
                return Err(bad(
                    loc,
                    format!("normal has norm {nf}, not 1; divide both f and c by {nf} to normalize"),
                ));
            }
            hs.push(Halfspace::new(h.f, c).map_err(|e| bad(format!("sets[{i}].halfspaces[{r}]"), e.to_string()))?);
        }
        sets.push(PolyhedralSet::new(hs).map_err(|e| bad(format!("sets[{i}]"), e.to_string()))?);
    }
    Instance::new(doc.d, sets, doc.known_projection).map_err(|e| bad("instance".into(), e.to_string()))
}

pub fn instance_to_string(inst: &Instance) -> String {
    serde_json::to_string_pretty(&to_doc(inst)).expect("instance documents always serialize")
}

/// Parses an instance; `origin` names the source in error messages.
pub fn instance_from_str(text: &str, origin: &Path) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|source| ToolError::Json {
        path: origin.to_path_buf(),
        source,
    })?;
    from_doc(doc, origin)
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    instance_from_str(&text, path)
}

pub fn save_instance(inst: &Instance, path: &Path) -> Result<()> {
    fs::write(path, instance_to_string(inst) + "\n").map_err(|e| ToolError::io(path, e))
}

/// Reads `{"multipliers": [[...], ...]}` and checks it against `inst`.
pub fn load_dual(path: &Path, inst: &Instance) -> Result<DualState> {
    let text = fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    let doc: DualDoc = serde_json::from_str(&text).map_err(|source| ToolError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    DualState::from_multipliers(inst, doc.multipliers)
        .map_err(|e| ToolError::invalid(path, "multipliers", e.to_string()))
}

pub fn save_dual(y: &DualState, path: &Path) -> Result<()> {
    let doc = DualDoc {
        multipliers: y.multipliers().to_vec(),
    };
    let text = serde_json::to_string(&doc).expect("dual documents always serialize");
    fs::write(path, text + "\n").map_err(|e| ToolError::io(path, e))
}
