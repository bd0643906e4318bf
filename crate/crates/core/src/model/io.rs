use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpModel, TrainConfig};
use crate::dataset::Scaler;
use crate::error::{Error, Result};
use crate::labeling::LabelConfig;

pub const MODEL_FORMAT: &str = "mlp.v1";
const SCHEMA: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    schema: u32,
    tool_version: String,
    catalog_hash: String,
    input_dim: usize,
    hidden_units: usize,
    hidden_activation: String,
    output_activation: String,
    dropout_rate: f64,
    seed: u64,
    label_config: LabelConfig,
    train_config: TrainConfig,
    scaler: Scaler,
    /// `hidden_units` rows of `input_dim` weights.
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
    loss_trace: Vec<f64>,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

impl MlpModel {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format: MODEL_FORMAT.into(),
            schema: SCHEMA,
            tool_version: crate::TOOL_VERSION.into(),
            catalog_hash: self.catalog_hash.clone(),
            input_dim: self.input_dim,
            hidden_units: self.hidden_units,
            hidden_activation: "elu".into(),
            output_activation: "sigmoid".into(),
            dropout_rate: self.dropout_rate,
            seed: self.seed,
            label_config: self.label_config,
            train_config: self.train_config,
            scaler: self.scaler.clone(),
            w1: (0..self.hidden_units)
                .map(|j| {
                    (0..self.input_dim)
                        .map(|i| self.w1[i * self.hidden_units + j])
                        .collect()
                })
                .collect(),
            b1: self.b1.clone(),
            w2: self.w2.clone(),
            b2: self.b2,
            loss_trace: self.loss_trace.clone(),
            provenance: self.provenance.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses a model document and checks it against the catalog in use.
    pub fn from_json(text: &str, expected_catalog_hash: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        let reject = |msg: String| Err(Error::ModelFormat(msg));
        if doc.format != MODEL_FORMAT || doc.schema != SCHEMA {
            return reject(format!("unsupported format {} schema {}", doc.format, doc.schema));
        }
        if doc.catalog_hash != expected_catalog_hash {
            return reject(format!(
                "catalog hash {} does not match {}",
                doc.catalog_hash, expected_catalog_hash
            ));
        }
        if doc.hidden_activation != "elu" || doc.output_activation != "sigmoid" {
            return reject("unsupported activation".into());
        }
        let (d, h) = (doc.input_dim, doc.hidden_units);
        if doc.w1.len() != h
            || doc.w1.iter().any(|row| row.len() != d)
            || doc.b1.len() != h
            || doc.w2.len() != h
            || doc.scaler.min.len() != d
            || doc.scaler.max.len() != d
        {
            return reject("weight shapes disagree with declared dimensions".into());
        }
        let w1: Vec<f64> = (0..d).flat_map(|i| doc.w1.iter().map(move |row| row[i])).collect();
        if !w1.iter().chain(&doc.b1).chain(&doc.w2).all(|v| v.is_finite()) || !doc.b2.is_finite() {
            return reject("non-finite weight".into());
        }
        if !(0.0..1.0).contains(&doc.dropout_rate) {
            return reject("dropout rate outside [0, 1)".into());
        }
        Ok(Self {
            input_dim: d,
            hidden_units: h,
            w1,
            b1: doc.b1,
            w2: doc.w2,
            b2: doc.b2,
            dropout_rate: doc.dropout_rate,
            scaler: doc.scaler,
            label_config: doc.label_config,
            catalog_hash: doc.catalog_hash,
            seed: doc.seed,
            train_config: doc.train_config,
            loss_trace: doc.loss_trace,
            provenance: doc.provenance,
        })
    }
}

pub fn save(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn load(path: &Path, expected_catalog_hash: &str) -> Result<MlpModel> {
    MlpModel::from_json(&std::fs::read_to_string(path)?, expected_catalog_hash)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::train;

    fn trained() -> MlpModel {
        let rows = vec![
            vec![0.0, 1.0, 0.5],
            vec![1.0, 0.0, 0.25],
            vec![0.2, 0.9, 1.0],
            vec![0.9, 0.1, 0.0],
        ];
        let cfg = TrainConfig {
            epochs: 3,
            hidden_units: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let mut m = train(&rows, &[1, 0, 1, 0], &cfg).unwrap().model;
        m.catalog_hash = "abc".into();
        m.label_config = LabelConfig::new(0.2, 0.05).unwrap();
        m.scaler = Scaler::fit(rows.iter().map(Vec::as_slice)).unwrap();
        m.provenance.insert("alpha".into(), "0.2".into());
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save(&m, &path).unwrap();
        assert_eq!(load(&path, "abc").unwrap(), m);
    }

    #[test]
    fn wrong_catalog_hash_is_refused() {
        let text = trained().to_json().unwrap();
        assert!(matches!(MlpModel::from_json(&text, "xyz"), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn truncated_document_is_a_parse_error() {
        let text = trained().to_json().unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(MlpModel::from_json(cut, "abc"), Err(Error::Json(_))));
    }

    #[test]
    fn wrong_format_tag_is_refused() {
        let text = trained().to_json().unwrap().replacen("mlp.v1", "mlp.v9", 1);
        assert!(matches!(MlpModel::from_json(&text, "abc"), Err(Error::ModelFormat(_))));
    }
}
