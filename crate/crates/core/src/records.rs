//! On-disk formats.
//!
//! * Datasets, per-epoch metrics and prune reports are line-delimited JSON,
//!   one record per line.
//! * Dataset lines carry `example_id`, `clip_id`, `features`, `label`.
//!   Harness-private files add `clean_label` (`-1` marks out-of-vocabulary
//!   content) and `corrupted`.
//! * Models use a line-oriented text format:
//!
//! ```text
//! noisekit-model 1
//! architecture linear            (or: architecture one_hidden <units>)
//! input_dim <F>
//! num_classes <K>
//! layer <inputs> <outputs>
//! weights <inputs*outputs values, row-major, one row per output>
//! bias <outputs values>
//! ```
//!
//!   with one `layer`/`weights`/`bias` triple per layer, values in Rust's
//!   shortest round-trip exponent notation.
//! * Experiment summaries are a single JSON object.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClipId, Dataset, Example, ExampleId};
use crate::error::{Error, Result};
use crate::harness::{GroundTruth, TrackedDataset};
use crate::trainer::{Architecture, Layer, ModelParams};

const OOV_SENTINEL: i64 = -1;
const MODEL_MAGIC: &str = "noisekit-model 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRecord {
    pub example_id: ExampleId,
    pub clip_id: ClipId,
    pub features: Vec<f64>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_label: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupted: Option<bool>,
}

impl ExampleRecord {
    fn public(e: &Example) -> Self {
        Self {
            example_id: e.example_id,
            clip_id: e.clip_id,
            features: e.features.clone(),
            label: e.label,
            clean_label: None,
            corrupted: None,
        }
    }

    fn private(e: &Example, t: &GroundTruth) -> Self {
        Self {
            clean_label: Some(t.clean_label.map_or(OOV_SENTINEL, |c| c as i64)),
            corrupted: Some(t.corrupted),
            ..Self::public(e)
        }
    }

    fn split(self) -> (Example, GroundTruth) {
        let truth = GroundTruth {
            clean_label: match self.clean_label {
                None => Some(self.label),
                Some(c) if c < 0 => None,
                Some(c) => Some(c as usize),
            },
            corrupted: self.corrupted.unwrap_or(false),
        };
        (
            Example {
                example_id: self.example_id,
                clip_id: self.clip_id,
                features: self.features,
                label: self.label,
            },
            truth,
        )
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Appends one JSON record per line, flushing after each so progress is
/// visible while a run is in flight.
pub struct JsonlStream {
    path: std::path::PathBuf,
    writer: BufWriter<File>,
}

impl JsonlStream {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            writer: create(path)?,
        })
    }

    pub fn push<T: Serialize>(&mut self, item: &T) -> Result<()> {
        serde_json::to_writer(&mut self.writer, item)?;
        self.writer
            .write_all(b"\n")
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let records: Vec<ExampleRecord> = data.examples.iter().map(ExampleRecord::public).collect();
    write_jsonl(path, &records)
}

pub fn write_tracked_dataset(path: &Path, data: &TrackedDataset) -> Result<()> {
    let records: Vec<ExampleRecord> = data
        .data
        .examples
        .iter()
        .zip(&data.truth)
        .map(|(e, t)| ExampleRecord::private(e, t))
        .collect();
    write_jsonl(path, &records)
}

/// Reads public or private dataset files. Without private fields every
/// example is taken as clean. `num_classes` defaults to the largest label
/// plus one.
pub fn read_tracked_dataset(path: &Path, num_classes: Option<usize>) -> Result<TrackedDataset> {
    let records: Vec<ExampleRecord> = read_jsonl(path)?;
    let (examples, truth): (Vec<Example>, Vec<GroundTruth>) =
        records.into_iter().map(ExampleRecord::split).unzip();
    let k = num_classes.unwrap_or_else(|| examples.iter().map(|e| e.label + 1).max().unwrap_or(0).max(2));
    let data = Dataset::new(k, examples)?;
    Ok(TrackedDataset { data, truth })
}

pub fn read_dataset(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    Ok(read_tracked_dataset(path, num_classes)?.data)
}

fn join_values(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn model_to_text(model: &ModelParams) -> String {
    let mut s = String::new();
    s.push_str(MODEL_MAGIC);
    s.push('\n');
    match model.architecture {
        Architecture::Linear => s.push_str("architecture linear\n"),
        Architecture::OneHidden { hidden_units } => {
            s.push_str(&format!("architecture one_hidden {hidden_units}\n"))
        }
    }
    s.push_str(&format!("input_dim {}\nnum_classes {}\n", model.input_dim, model.num_classes));
    for layer in &model.layers {
        s.push_str(&format!("layer {} {}\n", layer.inputs, layer.outputs));
        s.push_str(&format!("weights {}\n", join_values(&layer.weights)));
        s.push_str(&format!("bias {}\n", join_values(&layer.bias)));
    }
    s
}

pub fn model_from_text(text: &str) -> std::result::Result<ModelParams, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| format!("missing {what} line"));

    if next("header")?.trim() != MODEL_MAGIC {
        return Err("not a noisekit model file".into());
    }
    let arch_line = next("architecture")?;
    let arch: Vec<&str> = arch_line.split_whitespace().collect();
    let architecture = match arch.as_slice() {
        ["architecture", "linear"] => Architecture::Linear,
        ["architecture", "one_hidden", units] => Architecture::OneHidden {
            hidden_units: units.parse().map_err(|e| format!("hidden units: {e}"))?,
        },
        _ => return Err(format!("bad architecture line `{arch_line}`")),
    };
    let field = |line: &str, key: &str| -> std::result::Result<usize, String> {
        match line.split_whitespace().collect::<Vec<_>>().as_slice() {
            [k, v] if *k == key => v.parse().map_err(|e| format!("{key}: {e}")),
            _ => Err(format!("expected `{key} <n>`, got `{line}`")),
        }
    };
    let input_dim = field(next("input_dim")?, "input_dim")?;
    let num_classes = field(next("num_classes")?, "num_classes")?;
    let n_layers = match architecture {
        Architecture::Linear => 1,
        Architecture::OneHidden { .. } => 2,
    };

    let values = |line: &str, key: &str| -> std::result::Result<Vec<f64>, String> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(format!("expected `{key} ...`, got `{line}`"));
        }
        parts
            .map(|v| v.parse::<f64>().map_err(|e| format!("{key} value `{v}`: {e}")))
            .collect()
    };
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let header = next("layer")?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let (inputs, outputs) = match dims.as_slice() {
            ["layer", i, o] => (
                i.parse().map_err(|e| format!("layer inputs: {e}"))?,
                o.parse().map_err(|e| format!("layer outputs: {e}"))?,
            ),
            _ => return Err(format!("bad layer line `{header}`")),
        };
        let weights = values(next("weights")?, "weights")?;
        let bias = values(next("bias")?, "bias")?;
        layers.push(Layer {
            inputs,
            outputs,
            weights,
            bias,
        });
    }
    let model = ModelParams {
        architecture,
        input_dim,
        num_classes,
        layers,
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn write_model(path: &Path, model: &ModelParams) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(model_to_text(model).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_text(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn model_text_round_trip() {
        for arch in [Architecture::Linear, Architecture::OneHidden { hidden_units: 3 }] {
            let mut model = ModelParams::init(arch, 4, 3, &mut RngStream::new(1, 1)).unwrap();
            model.layers[0].bias[0] = 1e-300;
            model.layers[0].weights[1] = -0.1;
            let text = model_to_text(&model);
            assert_eq!(model_from_text(&text).unwrap(), model);
        }
    }

    #[test]
    fn model_text_rejects_garbage() {
        assert!(model_from_text("hello").is_err());
        let model = ModelParams::init(Architecture::Linear, 2, 2, &mut RngStream::new(1, 1)).unwrap();
        let text = model_to_text(&model).replace("input_dim 2", "input_dim 3");
        assert!(model_from_text(&text).is_err());
    }

    #[test]
    fn private_record_fields() {
        let e = Example {
            example_id: 1,
            clip_id: 2,
            features: vec![0.5],
            label: 1,
        };
        let oov = ExampleRecord::private(&e, &GroundTruth { clean_label: None, corrupted: true });
        let line = serde_json::to_string(&oov).unwrap();
        assert_eq!(
            line,
            r#"{"example_id":1,"clip_id":2,"features":[0.5],"label":1,"clean_label":-1,"corrupted":true}"#
        );
        let (_, t) = oov.split();
        assert_eq!(t.clean_label, None);

        let public = serde_json::to_string(&ExampleRecord::public(&e)).unwrap();
        assert_eq!(public, r#"{"example_id":1,"clip_id":2,"features":[0.5],"label":1}"#);
    }
}
