//! Declarative layer tables for the four networks.
//!
//! Each builder emits a [`ModelSpec`]: an ordered list of rows carrying the
//! layer kind, filter count, kernel geometry and the expected input/output
//! shapes. The `describe` rendering is compared verbatim against committed
//! golden tables, so the architecture of every network is auditable without
//! instantiating any weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial shape in table convention: width x height x channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub w: usize,
    pub h: usize,
    pub c: usize,
}

impl Shape3 {
    pub fn new(w: usize, h: usize, c: usize) -> Self {
        Shape3 { w, h, c }
    }
}

impl std::fmt::Display for Shape3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} x {} x {}", self.w, self.h, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Max,
    Detection,
    Enc,
    Dec,
    Up,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Max => "max",
            LayerKind::Detection => "detection",
            LayerKind::Enc => "enc",
            LayerKind::Dec => "dec",
            LayerKind::Up => "up",
        }
    }
}

/// One row of an architecture table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
    pub filters: Option<usize>,
    /// Kernel geometry as printed, e.g. `3 x 3 / 1` or `2 x 2`.
    pub size: Option<String>,
    pub input: Option<Shape3>,
    pub output: Option<Shape3>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub rows: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Checks that each row's input shape equals the previous row's output.
    pub fn validate_chain(&self) -> Result<()> {
        let mut prev: Option<Shape3> = None;
        for row in &self.rows {
            if let (Some(p), Some(i)) = (prev, row.input) {
                if p != i {
                    return Err(Error::ModelConfig(format!(
                        "{}: layer {} expects input {} but previous layer produced {}",
                        self.name, row.index, i, p
                    )));
                }
            }
            if let Some(o) = row.output {
                prev = Some(o);
            }
        }
        Ok(())
    }

    /// Fixed-format rendering used for golden-file comparison.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.name));
        out.push_str("layer\tkind\tfilters\tsize\tinput\toutput\n");
        for row in &self.rows {
            let filters = row.filters.map(|f| f.to_string()).unwrap_or_default();
            let size = row.size.clone().unwrap_or_default();
            let input = row.input.map(|s| s.to_string()).unwrap_or_default();
            let output = row.output.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                row.index,
                row.kind.as_str(),
                filters,
                size,
                input,
                output
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_validation_catches_mismatch() {
        let spec = ModelSpec {
            name: "broken".into(),
            rows: vec![
                LayerSpec {
                    index: 0,
                    kind: LayerKind::Conv,
                    filters: Some(8),
                    size: Some("3 x 3 / 1".into()),
                    input: Some(Shape3::new(4, 4, 3)),
                    output: Some(Shape3::new(4, 4, 8)),
                },
                LayerSpec {
                    index: 1,
                    kind: LayerKind::Conv,
                    filters: Some(8),
                    size: Some("3 x 3 / 1".into()),
                    input: Some(Shape3::new(4, 4, 16)),
                    output: Some(Shape3::new(4, 4, 8)),
                },
            ],
        };
        assert!(spec.validate_chain().is_err());
    }
}
