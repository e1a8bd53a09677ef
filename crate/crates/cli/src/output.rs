//! Result emission: JSON documents with a provenance header and the
//! four-column CSV table.

use crate::descriptor::ExperimentDescriptor;
use crate::runner::RunOutput;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Hash of the canonical descriptor serialization; the provenance anchor of
/// every run.
pub fn config_hash(descriptor: &ExperimentDescriptor) -> String {
    let canonical =
        serde_json::to_string(&descriptor.canonical_json()).expect("descriptor serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

pub fn document(descriptor: &ExperimentDescriptor, output: &RunOutput) -> Value {
    json!({
        "provenance": {
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": config_hash(descriptor),
            "protocol": descriptor.protocol_name(),
        },
        "descriptor": descriptor.canonical_json(),
        "results": output.results,
    })
}

pub fn error_document(descriptor: Option<&ExperimentDescriptor>, message: &str) -> Value {
    json!({
        "provenance": {
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": descriptor.map(config_hash),
        },
        "error": {
            "kind": "protocol",
            "message": message,
        },
    })
}

pub fn render(descriptor: &ExperimentDescriptor, output: &RunOutput, format: Format) -> String {
    match format {
        Format::Json => {
            let doc = document(descriptor, output);
            let mut s = serde_json::to_string_pretty(&doc).expect("results serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = format!(
                "# version={} config_hash={}\n",
                env!("CARGO_PKG_VERSION"),
                config_hash(descriptor)
            );
            s.push_str("outcome_label,probability,fidelity,trials\n");
            for row in &output.rows {
                let fid = row.fidelity.map(|f| f.to_string()).unwrap_or_default();
                let trials = row.trials.map(|t| t.to_string()).unwrap_or_default();
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    row.label.replace(',', ";"),
                    row.probability,
                    fid,
                    trials
                ));
            }
            if let Some(signals) = &output.signal_csv {
                s.push('\n');
                s.push_str(signals);
            }
            s
        }
    }
}
