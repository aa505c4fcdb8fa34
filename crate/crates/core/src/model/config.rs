use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of a GRU acoustic model.
///
/// Outputs have `vocab_size + 1` columns; the blank symbol is the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden_per_direction: usize,
    pub projection: usize,
    pub dropout: f64,
    pub bidirectional: bool,
    pub input_dim: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// Full-size bidirectional teacher: 4 layers, 512 units per direction,
    /// 100-unit projections, dropout 0.2.
    pub fn paper_teacher(input_dim: usize, vocab_size: usize) -> Self {
        Self {
            layers: 4,
            hidden_per_direction: 512,
            projection: 100,
            dropout: 0.2,
            bidirectional: true,
            input_dim,
            vocab_size,
        }
    }

    /// Full-size unidirectional student with 512 units.
    pub fn paper_student(input_dim: usize, vocab_size: usize) -> Self {
        Self { bidirectional: false, ..Self::paper_teacher(input_dim, vocab_size) }
    }

    /// Laptop-sized preset: 2 layers, 64 units per direction, 32-unit projections.
    pub fn desk(bidirectional: bool, input_dim: usize, vocab_size: usize) -> Self {
        Self {
            layers: 2,
            hidden_per_direction: 64,
            projection: 32,
            dropout: 0.2,
            bidirectional,
            input_dim,
            vocab_size,
        }
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn output_dim(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn blank(&self) -> usize {
        self.vocab_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden_per_direction == 0 || self.projection == 0 {
            return Err(Error::Config("layers, hidden_per_direction and projection must be positive".into()));
        }
        if self.input_dim == 0 || self.vocab_size == 0 {
            return Err(Error::Config("input_dim and vocab_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}
