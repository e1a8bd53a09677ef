//! Experiment descriptors: the JSON surface of the batch driver. Unknown
//! fields are rejected, and sampling modes must carry a seed.

use kerrconv_core::C64;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DescriptorError {
    #[error("invalid JSON: {0}")]
    Syntax(String),
    #[error("descriptor schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("missing \"protocol\" field")]
    MissingProtocol,
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
    #[error("seed is mandatory when mode = {0}")]
    MissingSeed(&'static str),
    #[error("matrix must be square, got {rows} rows with row length {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("ragged matrix rows")]
    Ragged,
}

/// Complex entry encoded as `[re, im]`.
pub type JsonComplex = [f64; 2];
pub type JsonVector = Vec<JsonComplex>;
pub type JsonMatrix = Vec<Vec<JsonComplex>>;

pub fn parse_vector(v: &JsonVector) -> Array1<C64> {
    Array1::from_iter(v.iter().map(|[re, im]| C64::new(*re, *im)))
}

pub fn parse_matrix(m: &JsonMatrix) -> Result<Array2<C64>, DescriptorError> {
    let rows = m.len();
    let cols = m.first().map(|r| r.len()).unwrap_or(0);
    if m.iter().any(|r| r.len() != cols) {
        return Err(DescriptorError::Ragged);
    }
    if rows != cols {
        return Err(DescriptorError::NotSquare { rows, cols });
    }
    let mut out = Array2::zeros((rows, cols));
    for (i, row) in m.iter().enumerate() {
        for (j, [re, im]) in row.iter().enumerate() {
            out[[i, j]] = C64::new(*re, *im);
        }
    }
    Ok(out)
}

pub fn vector_json(v: &Array1<C64>) -> JsonVector {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn matrix_json(m: &Array2<C64>) -> JsonMatrix {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Conditional,
    Unconditional,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    A2b,
    B2a,
}

/// Detection target: the phase state or explicit Fock amplitudes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PsiSpec {
    Phase(String),
    State(JsonVector),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertDescriptor {
    pub direction: Direction,
    #[serde(rename = "N")]
    pub n: u32,
    pub mode: RunMode,
    /// "phase" or explicit amplitudes.
    pub psi: PsiSpec,
    #[serde(default)]
    pub phi: f64,
    /// Input state amplitudes; defaults to the zero-phase state.
    #[serde(default)]
    pub input: Option<JsonVector>,
    /// Repeat-until-success sample count (backward unconditional only).
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Target operator: an explicit matrix (polar-decomposed into a setup) or
/// the raw configuration pieces.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Matrix(JsonMatrix),
    Parts {
        #[serde(rename = "U")]
        u: JsonMatrix,
        #[serde(rename = "Tk")]
        tk: Vec<f64>,
        #[serde(rename = "UR")]
        ur: JsonMatrix,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineerDescriptor {
    #[serde(rename = "A")]
    pub target: TargetSpec,
    pub mode: RunMode,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub input: Option<JsonVector>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Overlap,
    Expectation,
    Purify,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureDescriptor {
    pub what: MeasureKind,
    pub rho: JsonMatrix,
    /// Channel array for overlap probes.
    #[serde(rename = "U", default)]
    pub u: Option<JsonMatrix>,
    /// Operator for expectation values.
    #[serde(rename = "Z", default)]
    pub z: Option<JsonMatrix>,
    #[serde(default)]
    pub channel: Option<usize>,
    #[serde(default)]
    pub mode: Option<SamplingMode>,
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Analytic,
    Shots,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneDir {
    Max,
    Min,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructDescriptor {
    pub rho: JsonMatrix,
    #[serde(default)]
    pub mode: Option<SamplingMode>,
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default = "default_direction")]
    pub direction: TuneDir,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Also extract the Fock matrix element by element.
    #[serde(default)]
    pub fock_matrix: bool,
}

fn default_direction() -> TuneDir {
    TuneDir::Max
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TelemanipMode {
    Conditional,
    Unconditional,
    /// Reduced-state analysis with the phase detector removed.
    Reduced,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemanipDescriptor {
    #[serde(rename = "A")]
    pub target: TargetSpec,
    pub mode: TelemanipMode,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub input: Option<JsonVector>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Vacuum-projected splitter identity over random cases.
    Appendix,
    /// Explicit device composition against the blockwise form.
    Device,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityCheckDescriptor {
    pub check: CheckKind,
    #[serde(rename = "N", default = "default_n")]
    pub n: u32,
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_n() -> u32 {
    2
}
fn default_cases() -> usize {
    50
}

#[derive(Clone, Debug, Serialize)]
pub enum ExperimentDescriptor {
    Convert(ConvertDescriptor),
    Engineer(EngineerDescriptor),
    Measure(MeasureDescriptor),
    Reconstruct(ReconstructDescriptor),
    Telemanip(TelemanipDescriptor),
    IdentityCheck(IdentityCheckDescriptor),
}

impl ExperimentDescriptor {
    pub fn protocol_name(&self) -> &'static str {
        match self {
            ExperimentDescriptor::Convert(_) => "convert",
            ExperimentDescriptor::Engineer(_) => "engineer",
            ExperimentDescriptor::Measure(_) => "measure",
            ExperimentDescriptor::Reconstruct(_) => "reconstruct",
            ExperimentDescriptor::Telemanip(_) => "telemanip",
            ExperimentDescriptor::IdentityCheck(_) => "identity-check",
        }
    }

    /// Override every embedded seed (the --seed flag).
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentDescriptor::Convert(d) => d.seed = Some(seed),
            ExperimentDescriptor::Engineer(d) => d.seed = Some(seed),
            ExperimentDescriptor::Measure(d) => d.seed = Some(seed),
            ExperimentDescriptor::Reconstruct(d) => d.seed = Some(seed),
            ExperimentDescriptor::Telemanip(d) => d.seed = Some(seed),
            ExperimentDescriptor::IdentityCheck(d) => d.seed = Some(seed),
        }
    }

    /// Strict parse: the protocol tag picks the schema, unknown fields
    /// anywhere are an error, and sampling modes demand a seed.
    pub fn parse(json: &str) -> Result<Self, DescriptorError> {
        let value: serde_json::Value =
            serde_json::from_str(json).map_err(|e| DescriptorError::Syntax(e.to_string()))?;
        let mut map = match value {
            serde_json::Value::Object(m) => m,
            _ => return Err(DescriptorError::MissingProtocol),
        };
        let protocol = map
            .remove("protocol")
            .and_then(|v| v.as_str().map(str::to_owned))
            .ok_or(DescriptorError::MissingProtocol)?;
        let rest = serde_json::Value::Object(map);
        fn typed<T: serde::de::DeserializeOwned>(
            v: serde_json::Value,
        ) -> Result<T, DescriptorError> {
            let mut track = serde_path_to_error::Track::new();
            let de = serde_path_to_error::Deserializer::new(v, &mut track);
            T::deserialize(de).map_err(|e| DescriptorError::Schema {
                path: track.path().to_string(),
                message: e.to_string(),
            })
        }
        let parsed = match protocol.as_str() {
            "convert" => ExperimentDescriptor::Convert(typed(rest)?),
            "engineer" => ExperimentDescriptor::Engineer(typed(rest)?),
            "measure" => ExperimentDescriptor::Measure(typed(rest)?),
            "reconstruct" => ExperimentDescriptor::Reconstruct(typed(rest)?),
            "telemanip" => ExperimentDescriptor::Telemanip(typed(rest)?),
            "identity-check" => ExperimentDescriptor::IdentityCheck(typed(rest)?),
            other => return Err(DescriptorError::UnknownProtocol(other.to_string())),
        };
        parsed.validate()?;
        Ok(parsed)
    }

    fn validate(&self) -> Result<(), DescriptorError> {
        match self {
            ExperimentDescriptor::Convert(d) => {
                if matches!(d.mode, RunMode::Unconditional)
                    && d.trials.is_some()
                    && d.seed.is_none()
                {
                    return Err(DescriptorError::MissingSeed("sampling"));
                }
            }
            ExperimentDescriptor::Measure(d)
                if matches!(d.mode, Some(SamplingMode::Shots)) && d.seed.is_none() =>
            {
                return Err(DescriptorError::MissingSeed("shots"));
            }
            ExperimentDescriptor::Reconstruct(d)
                if matches!(d.mode, Some(SamplingMode::Shots)) && d.seed.is_none() =>
            {
                return Err(DescriptorError::MissingSeed("shots"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical JSON of the descriptor (sorted keys), hashed for
    /// provenance.
    pub fn canonical_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("descriptors serialize");
        // unwrap the enum-variant wrapper into a flat tagged object
        if let serde_json::Value::Object(m) = &v {
            if m.len() == 1 {
                let (variant, inner) = m.iter().next().unwrap();
                let tag = match variant.as_str() {
                    "Convert" => "convert",
                    "Engineer" => "engineer",
                    "Measure" => "measure",
                    "Reconstruct" => "reconstruct",
                    "Telemanip" => "telemanip",
                    "IdentityCheck" => "identity-check",
                    _ => variant.as_str(),
                };
                if let serde_json::Value::Object(fields) = inner {
                    let mut flat = fields.clone();
                    flat.insert("protocol".into(), serde_json::Value::String(tag.into()));
                    v = serde_json::Value::Object(flat);
                }
            }
        }
        v
    }
}
