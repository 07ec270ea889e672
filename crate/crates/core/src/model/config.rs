use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Topology of the bi-directional LSTM mask estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlstmConfig {
    pub num_layers: usize,
    pub cells_per_direction: usize,
    pub input_dim: usize,
    pub output_sources: usize,
    pub output_dim_per_source: usize,
    pub dropout_rate: f64,
}

impl BlstmConfig {
    /// Three layers of `cells` cells per direction, three 129-bin outputs and
    /// 50% dropout between layers.
    pub fn full_scale(cells: usize) -> Self {
        Self {
            num_layers: 3,
            cells_per_direction: cells,
            input_dim: 129,
            output_sources: 3,
            output_dim_per_source: 129,
            dropout_rate: 0.5,
        }
    }

    /// Small network that trains in minutes on one core.
    pub fn desk() -> Self {
        Self {
            num_layers: 2,
            cells_per_direction: 64,
            ..Self::full_scale(64)
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_sources * self.output_dim_per_source
    }

    /// Input width of recurrent layer `layer` (0-based).
    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            2 * self.cells_per_direction
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0
            || self.cells_per_direction == 0
            || self.input_dim == 0
            || self.output_sources == 0
            || self.output_dim_per_source == 0
        {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be positive: {self:?}"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        ParamLayout::new(self).len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }
}

/// A named, row-major matrix (or vector when `cols == 1`) inside the flat
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Indices of one LSTM direction's blocks within [`ParamLayout::blocks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmBlocks {
    /// `4H x in`, gate order input, forget, candidate, output.
    pub input_weights: usize,
    /// `4H x H`.
    pub recurrent_weights: usize,
    /// `4H`.
    pub bias: usize,
}

/// Layout of the flat parameter vector.
///
/// For each layer and direction: input weights, recurrent weights and bias;
/// then the output layer weights (`O x 2H`) and bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
    lstm: Vec<[LstmBlocks; 2]>,
    output_weights: usize,
    output_bias: usize,
}

impl ParamLayout {
    pub fn new(cfg: &BlstmConfig) -> Self {
        let h = cfg.cells_per_direction;
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            blocks.push(ParamBlock {
                name,
                offset,
                rows,
                cols,
            });
            offset += rows * cols;
            blocks.len() - 1
        };
        let mut lstm = Vec::with_capacity(cfg.num_layers);
        for layer in 0..cfg.num_layers {
            let input = cfg.layer_input_dim(layer);
            let dirs = Direction::BOTH.map(|d| LstmBlocks {
                input_weights: push(format!("lstm{layer}.{}.w_input", d.tag()), 4 * h, input),
                recurrent_weights: push(format!("lstm{layer}.{}.w_recurrent", d.tag()), 4 * h, h),
                bias: push(format!("lstm{layer}.{}.bias", d.tag()), 4 * h, 1),
            });
            lstm.push(dirs);
        }
        let output_weights = push("output.weight".into(), cfg.output_dim(), 2 * h);
        let output_bias = push("output.bias".into(), cfg.output_dim(), 1);
        Self {
            blocks,
            lstm,
            output_weights,
            output_bias,
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lstm(&self, layer: usize, dir: Direction) -> LstmBlocks {
        self.lstm[layer][dir.index()]
    }

    pub fn block(&self, idx: usize) -> &ParamBlock {
        &self.blocks[idx]
    }

    pub fn output_weights(&self) -> &ParamBlock {
        &self.blocks[self.output_weights]
    }

    pub fn output_bias(&self) -> &ParamBlock {
        &self.blocks[self.output_bias]
    }

    pub fn num_layers(&self) -> usize {
        self.lstm.len()
    }
}
