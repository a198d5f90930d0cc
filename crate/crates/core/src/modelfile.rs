//! JSON model documents.
//!
//! A document is a single object whose `"kind"` selects how the system is
//! built: `"single_port"`, `"sg"`, `"multiport"` or `"raw"`. Matrices are
//! row-major arrays of arrays. Raw power-channel indices are zero-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_multiport, build_sg, build_single_port, MultiportParams, PwhSystem, SgParams, SinglePortParams,
};
use crate::numkernel::{Matrix, SymMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinglePortDocument {
    pub v_g: f64,
    pub r_l: f64,
    pub r_p: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "P")]
    pub p: f64,
    /// Externally reported stability power limit to compare against, in watts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_p_s_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgDocument {
    #[serde(rename = "M")]
    pub inertia: f64,
    #[serde(rename = "D_m")]
    pub d_m: f64,
    #[serde(rename = "D_d")]
    pub d_d: f64,
    pub tau_m: f64,
    pub omega_star: f64,
    #[serde(rename = "P_e")]
    pub p_e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl SinglePortDocument {
    pub fn params(&self) -> SinglePortParams {
        SinglePortParams { v_g: self.v_g, r_l: self.r_l, r_p: self.r_p, l: self.l, c: self.c, p: self.p }
    }

    pub fn from_params(p: &SinglePortParams) -> Self {
        Self { v_g: p.v_g, r_l: p.r_l, r_p: p.r_p, l: p.l, c: p.c, p: p.p, reported_p_s_max: None, units: None }
    }
}

impl SgDocument {
    pub fn params(&self) -> SgParams {
        SgParams {
            inertia: self.inertia,
            d_m: self.d_m,
            d_d: self.d_d,
            tau_m: self.tau_m,
            omega_star: self.omega_star,
            p_e: self.p_e,
        }
    }

    pub fn from_params(p: &SgParams) -> Self {
        Self {
            inertia: p.inertia,
            d_m: p.d_m,
            d_d: p.d_d,
            tau_m: p.tau_m,
            omega_star: p.omega_star,
            p_e: p.p_e,
            units: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiportDocument {
    #[serde(rename = "L")]
    pub inductance: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub capacitance: Vec<Vec<f64>>,
    #[serde(rename = "Z")]
    pub resistance: Vec<Vec<f64>>,
    #[serde(rename = "Y")]
    pub conductance: Vec<Vec<f64>>,
    #[serde(rename = "Gamma")]
    pub gamma: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub loads: Vec<f64>,
    pub u_c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDocument {
    #[serde(rename = "J")]
    pub j: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub power_channels: Vec<usize>,
    pub u_bar: Vec<f64>,
    pub u_c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDocument {
    SinglePort(SinglePortDocument),
    Sg(SgDocument),
    Multiport(MultiportDocument),
    Raw(RawDocument),
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    Matrix::from_rows(rows).map_err(|e| Error::Input(format!("{field}: {e}")))
}

fn sym_matrix(field: &str, rows: &[Vec<f64>]) -> Result<SymMatrix> {
    SymMatrix::new(matrix(field, rows)?).map_err(|e| Error::Input(format!("{field}: {e}")))
}

impl ModelDocument {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelDocument::SinglePort(_) => "single_port",
            ModelDocument::Sg(_) => "sg",
            ModelDocument::Multiport(_) => "multiport",
            ModelDocument::Raw(_) => "raw",
        }
    }

    /// Builds the system described by the document, enforcing all invariants.
    pub fn build(&self) -> Result<PwhSystem> {
        match self {
            ModelDocument::SinglePort(d) => build_single_port(&d.params()),
            ModelDocument::Sg(d) => build_sg(&d.params()),
            ModelDocument::Multiport(d) => build_multiport(&MultiportParams {
                inductance: sym_matrix("L", &d.inductance)?,
                capacitance: sym_matrix("C", &d.capacitance)?,
                resistance: sym_matrix("Z", &d.resistance)?,
                conductance: sym_matrix("Y", &d.conductance)?,
                gamma: matrix("Gamma", &d.gamma)?,
                loads: d.loads.clone(),
                u_c: d.u_c.clone(),
            }),
            ModelDocument::Raw(d) => PwhSystem::new(
                matrix("J", &d.j)?,
                sym_matrix("R", &d.r)?,
                sym_matrix("M", &d.m)?,
                d.power_channels.clone(),
                d.u_bar.clone(),
                d.u_c.clone(),
            ),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }

    /// Raw document reproducing an already built system.
    pub fn raw_from_system(sys: &PwhSystem) -> ModelDocument {
        ModelDocument::Raw(RawDocument {
            j: sys.j().to_rows(),
            r: sys.r().matrix().to_rows(),
            m: sys.m().matrix().to_rows(),
            power_channels: sys.power_channels().to_vec(),
            u_bar: sys.u_bar().to_vec(),
            u_c: sys.u_c().to_vec(),
            units: None,
        })
    }
}

fn parse_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { path: path.into(), message: message.into() }
}

fn parse_variant<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        parse_error(path, err.into_inner().to_string())
    })
}

/// Parses a model document without building the system.
pub fn parse_model(text: &str) -> Result<ModelDocument> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(".", e.to_string()))?;
    let serde_json::Value::Object(mut fields) = value else {
        return Err(parse_error(".", "model document must be a JSON object"));
    };
    let kind = match fields.remove("kind") {
        Some(serde_json::Value::String(k)) => k,
        Some(_) => return Err(parse_error("kind", "must be a string")),
        None => return Err(parse_error("kind", "missing field")),
    };
    let body = serde_json::Value::Object(fields);
    match kind.as_str() {
        "single_port" => parse_variant(body).map(ModelDocument::SinglePort),
        "sg" => parse_variant(body).map(ModelDocument::Sg),
        "multiport" => parse_variant(body).map(ModelDocument::Multiport),
        "raw" => parse_variant(body).map(ModelDocument::Raw),
        other => {
            Err(parse_error("kind", format!("unknown kind `{other}`, expected single_port, sg, multiport or raw")))
        }
    }
}

/// Parses and builds a system from a JSON model document.
pub fn load_model(text: &str) -> Result<PwhSystem> {
    parse_model(text)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = r#"{"kind":"single_port","v_g":24.0,"r_l":0.04,"r_p":0.1,"L":78e-6,"C":2e-3,"P":1000.0}"#;

    #[test]
    fn single_port_document_builds_reference_system() {
        let sys = load_model(TABLE1).unwrap();
        assert_eq!(sys, build_single_port(&SinglePortParams::REFERENCE).unwrap());
    }

    #[test]
    fn raw_rejects_non_skew_j() {
        let doc = r#"{"kind":"raw","J":[[0,1],[1,0]],"R":[[1,0],[0,1]],"M":[[1,0],[0,1]],
                      "power_channels":[],"u_bar":[0,0],"u_c":[0,0]}"#;
        assert!(matches!(load_model(doc), Err(Error::Input(_))));
    }

    #[test]
    fn schema_errors_carry_field_path() {
        let doc = r#"{"kind":"multiport","L":[[1e-4]],"C":[[1e-3]],"Z":[[0.1]],"Y":"oops",
                      "Gamma":[[1]],"P":[1],"u_c":[1,0]}"#;
        match parse_model(doc) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "Y"),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_model(r#"{"kind":"tokamak"}"#), Err(Error::Parse { .. })));
        assert!(matches!(parse_model("[1,2"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_fields_rejected() {
        let doc = TABLE1.replace("\"P\":1000.0", "\"P\":1000.0,\"Q\":1");
        assert!(matches!(parse_model(&doc), Err(Error::Parse { .. })));
    }

    #[test]
    fn optional_notes_accepted() {
        let doc = TABLE1.replace("\"P\":1000.0", "\"P\":1000.0,\"units\":\"SI\",\"reported_p_s_max\":2330");
        match parse_model(&doc).unwrap() {
            ModelDocument::SinglePort(d) => {
                assert_eq!(d.reported_p_s_max, Some(2330.0));
                assert_eq!(d.units.as_deref(), Some("SI"));
            }
            other => panic!("wrong kind {other:?}"),
        }
    }

    #[test]
    fn sg_requires_omega_star() {
        let doc = r#"{"kind":"sg","M":0.2,"D_m":1e-6,"D_d":1e-4,"tau_m":0.0027,"P_e":3.0}"#;
        assert!(matches!(parse_model(doc), Err(Error::Parse { .. })));
    }

    #[test]
    fn multiport_document_roundtrip() {
        let doc = ModelDocument::Multiport(MultiportDocument {
            inductance: vec![vec![1e-4, 0.0], vec![0.0, 2e-4]],
            capacitance: vec![vec![1e-3, 0.0], vec![0.0, 2e-3]],
            resistance: vec![vec![0.05, 0.01], vec![0.01, 0.08]],
            conductance: vec![vec![4.0, 0.0], vec![0.0, 5.0]],
            gamma: vec![vec![-1.0, 0.0], vec![1.0, -1.0]],
            loads: vec![50.0, 80.0],
            u_c: vec![24.0, 0.0, 0.0, 0.0],
            units: None,
        });
        let built = doc.build().unwrap();
        let reparsed = parse_model(&doc.to_json()).unwrap();
        assert_eq!(reparsed, doc);
        assert_eq!(reparsed.build().unwrap(), built);
        let raw = ModelDocument::raw_from_system(&built);
        assert_eq!(load_model(&raw.to_json()).unwrap(), built);
    }
}
