//! Model documents: a JSON list of dense layers.
//!
//! ```json
//! { "layers": [ { "weights": [[1, 1, 0], [1, 0, 1]], "bias": [0, 0], "activation": "relu" } ] }
//! ```
//!
//! `weights` is row-major, one row per output neuron.

use std::fs;
use std::path::Path;

use attverify_core::{AffineLayer, Network};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: String,
}

impl ModelDocument {
    pub fn from_network(net: &Network<f64>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerDocument {
                weights: (0..l.out_dim()).map(|i| l.row(i).to_vec()).collect(),
                bias: l.bias().to_vec(),
                activation: if l.has_relu() { "relu" } else { "linear" }.to_string(),
            })
            .collect();
        ModelDocument { layers }
    }

    pub fn to_network(&self) -> Result<Network<f64>> {
        if self.layers.is_empty() {
            return Err(CliError::Model("no layers".into()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut width: Option<usize> = None;
        for (k, l) in self.layers.iter().enumerate() {
            let relu = match l.activation.as_str() {
                "relu" => true,
                "linear" => false,
                other => return Err(CliError::UnsupportedLayer(other.to_string())),
            };
            let in_dim = l.weights.first().map_or(0, Vec::len);
            if let Some(w) = width {
                if w != in_dim {
                    return Err(CliError::Model(format!(
                        "layer {k} expects {in_dim} inputs but the previous layer has {w} outputs"
                    )));
                }
            }
            let layer = AffineLayer::new(l.weights.clone(), l.bias.clone(), relu)
                .map_err(|e| CliError::Model(format!("layer {k}: {e}")))?;
            width = Some(layer.out_dim());
            layers.push(layer);
        }
        Ok(Network::new(layers)?)
    }
}

pub fn parse_model(text: &str) -> Result<Network<f64>> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|source| CliError::Json { what: "model", source })?;
    doc.to_network()
}

pub fn load_model(path: &Path) -> Result<Network<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text)
}

pub fn save_model(net: &Network<f64>, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&ModelDocument::from_network(net)).expect("model serializes");
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
