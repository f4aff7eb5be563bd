//! Model spec files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "pm",
//!   "restriction": {"kind": "family", "family": "partial-monotonicity", "params": {}},
//!   "covariates": [{"name": "W", "levels": ["0", "1"]}]
//! }
//! ```
//!
//! `inputs` and `responses` are required for explicit restrictions and
//! optional for family and predicate restrictions, where they default to the
//! family layout and must match it when given. Explicit types are objects
//! mapping each input label to a response label.

use super::{Covariate, Family, ModelSpec, Restriction};
use crate::error::{Error, Result};
use serde_json::{json, Map, Value};
use std::path::Path;

pub const SCHEMA_VERSION: u64 = 1;

fn schema(msg: impl Into<String>) -> Error {
    Error::SchemaMismatch(msg.into())
}

fn string_list(v: &Value, what: &str) -> Result<Vec<String>> {
    v.as_array()
        .ok_or_else(|| schema(format!("`{what}` must be an array")))?
        .iter()
        .map(|x| {
            x.as_str()
                .map(str::to_owned)
                .ok_or_else(|| schema(format!("`{what}` entries must be strings")))
        })
        .collect()
}

pub fn parse_spec(text: &str) -> Result<ModelSpec> {
    let v: Value = serde_json::from_str(text)?;
    let obj = v.as_object().ok_or_else(|| schema("model file must be a JSON object"))?;
    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(schema(format!("unsupported schema_version {other}"))),
        None => return Err(schema("missing schema_version")),
    }
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or("model")
        .to_owned();
    let restriction = obj
        .get("restriction")
        .and_then(Value::as_object)
        .ok_or_else(|| schema("missing restriction object"))?;
    let kind = restriction
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("restriction.kind missing"))?;

    let explicit_layout = || -> Result<(Vec<String>, Vec<Vec<String>>)> {
        let inputs = string_list(obj.get("inputs").ok_or_else(|| schema("missing inputs"))?, "inputs")?;
        let resp = obj
            .get("responses")
            .and_then(Value::as_object)
            .ok_or_else(|| schema("missing responses object"))?;
        let responses = inputs
            .iter()
            .map(|z| {
                resp.get(z)
                    .ok_or_else(|| schema(format!("no responses listed for input `{z}`")))
                    .and_then(|v| string_list(v, "responses"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((inputs, responses))
    };

    let mut spec = match kind {
        "explicit" => {
            let (inputs, responses) = explicit_layout()?;
            let types = restriction
                .get("types")
                .and_then(Value::as_array)
                .ok_or_else(|| schema("explicit restriction needs `types`"))?
                .iter()
                .map(|t| {
                    let t = t.as_object().ok_or_else(|| schema("each type must be an object"))?;
                    inputs
                        .iter()
                        .zip(&responses)
                        .map(|(z, rs)| {
                            let r = t
                                .get(z)
                                .and_then(Value::as_str)
                                .ok_or_else(|| Error::InvalidSpec(format!("type misses input `{z}`")))?;
                            rs.iter()
                                .position(|x| x == r)
                                .ok_or_else(|| Error::InvalidSpec(format!("`{r}` is not a response of `{z}`")))
                        })
                        .collect::<Result<Vec<usize>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            ModelSpec {
                name,
                inputs,
                responses,
                restriction: Restriction::Explicit(types),
                covariates: Vec::new(),
            }
        }
        "family" | "predicate" => {
            let key = if kind == "family" { "family" } else { "predicate" };
            let id = restriction
                .get(key)
                .and_then(Value::as_str)
                .ok_or_else(|| schema(format!("restriction.{key} missing")))?;
            let empty = Map::new();
            let params = restriction.get("params").and_then(Value::as_object).unwrap_or(&empty);
            let family = Family::from_id(id, params)?;
            let mut spec = if kind == "family" {
                ModelSpec::from_family(name, family)
            } else {
                ModelSpec::from_predicate(name, family)
            };
            if obj.contains_key("inputs") {
                let (inputs, responses) = explicit_layout()?;
                if inputs != spec.inputs || responses != spec.responses {
                    return Err(Error::InvalidSpec(format!(
                        "declared inputs/responses differ from the `{id}` layout"
                    )));
                }
            }
            spec.covariates.clear();
            spec
        }
        other => return Err(schema(format!("unknown restriction kind `{other}`"))),
    };

    if let Some(cov) = obj.get("covariates") {
        let list = cov.as_array().ok_or_else(|| schema("covariates must be an array"))?;
        for c in list {
            let name = c
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| schema("covariate needs a name"))?;
            let levels = string_list(c.get("levels").ok_or_else(|| schema("covariate needs levels"))?, "levels")?;
            spec.covariates.push(Covariate {
                name: name.to_owned(),
                levels,
            });
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ModelSpec> {
    parse_spec(&std::fs::read_to_string(path)?)
}

/// Serialize with the layout spelled out, so the file is self-describing.
pub fn spec_to_json(spec: &ModelSpec) -> Value {
    let responses: Map<String, Value> = spec
        .inputs
        .iter()
        .zip(&spec.responses)
        .map(|(z, rs)| (z.clone(), json!(rs)))
        .collect();
    let restriction = match &spec.restriction {
        Restriction::Explicit(types) => {
            let types: Vec<Value> = types
                .iter()
                .map(|t| {
                    let m: Map<String, Value> = t
                        .iter()
                        .enumerate()
                        .map(|(k, &r)| (spec.inputs[k].clone(), json!(spec.responses[k][r])))
                        .collect();
                    Value::Object(m)
                })
                .collect();
            json!({"kind": "explicit", "types": types})
        }
        Restriction::Family(f) => json!({"kind": "family", "family": f.id(), "params": family_params(f)}),
        Restriction::Predicate(f) => json!({"kind": "predicate", "predicate": f.id(), "params": family_params(f)}),
    };
    let covariates: Vec<Value> = spec
        .covariates
        .iter()
        .map(|c| json!({"name": c.name, "levels": c.levels}))
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "inputs": spec.inputs,
        "responses": responses,
        "restriction": restriction,
        "covariates": covariates,
    })
}

fn family_params(f: &Family) -> Value {
    use super::{Arm, Mediators, SpilloverSign};
    let arm = |a: &Arm| match a {
        Arm::C => "C",
        Arm::Sip => "SIP",
        Arm::Sia => "SIA",
    };
    match f {
        Family::IvExclusion { y, d, z } | Family::IvExclusionMonotonicity { y, d, z } => {
            json!({"y": y, "d": d, "z": z})
        }
        Family::IaMonotonicity { d, z } => json!({"d": d, "z": z}),
        Family::PartialMonotonicity { m } => json!({"instruments": m}),
        Family::MediationFull { mediators } => json!({"mediators": match mediators {
            Mediators::Both => "both",
            Mediators::First => "first",
        }}),
        Family::Exposure { assignments, .. } => json!({"assignments": assignments
            .iter()
            .map(|(a, b)| format!("({},{})", arm(a), arm(b)))
            .collect::<Vec<_>>()}),
        Family::Spillover { sign } => json!({"sign": match sign {
            SpilloverSign::None => "none",
            SpilloverSign::NonPositive => "nonpositive",
        }}),
        Family::CessationLength { waves, .. } => json!({"waves": waves}),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_family_and_explicit() {
        let text = r#"{"schema_version":1,"name":"pm",
            "restriction":{"kind":"family","family":"partial-monotonicity"},
            "covariates":[{"name":"W","levels":["0","1"]}]}"#;
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.k(), 4);
        let again = parse_spec(&spec_to_json(&spec).to_string()).unwrap();
        assert_eq!(spec, again);

        let text = r#"{"schema_version":1,"name":"fig1","inputs":["0","1"],
            "responses":{"0":["0","1"],"1":["0","1"]},
            "restriction":{"kind":"explicit","types":[{"0":"0","1":"0"},{"0":"0","1":"1"},{"0":"1","1":"1"}]}}"#;
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec, parse_spec(&spec_to_json(&spec).to_string()).unwrap());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let text = r#"{"schema_version":2,"restriction":{"kind":"family","family":"iv-exclusion"}}"#;
        assert!(matches!(parse_spec(text), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn mismatched_layout_is_rejected() {
        let text = r#"{"schema_version":1,"inputs":["a","b"],"responses":{"a":["0"],"b":["0"]},
            "restriction":{"kind":"family","family":"iv-exclusion"}}"#;
        assert!(matches!(parse_spec(text), Err(Error::InvalidSpec(_))));
    }
}
