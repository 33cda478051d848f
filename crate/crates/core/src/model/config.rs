use serde::{Deserialize, Serialize};

use crate::error::{MfnError, Result};
use crate::matfunc::{Backend, Y_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalKind {
    Gcn,
    TwoBodyO3,
}

/// How `f(H)` feeds the next stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    /// First column of each diagonal block, mixed into node features.
    Diag,
    /// Full `f(H)` added to the next matrix-function layer's operator.
    Dense,
    /// `f(H)` restricted to the pattern, added to the next operator.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pure,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub local: LocalKind,
    /// Apply assemble, normalise and the matrix function after the local
    /// layer.
    pub matrix_function: bool,
    /// Operator channels `c`.
    pub channels: usize,
    /// Block size `M`.
    pub block_size: usize,
    /// Conjugate pole pairs.
    pub poles: usize,
    /// Initial imaginary part of every pole.
    #[serde(default = "default_pole_imag")]
    pub pole_imag: f64,
    pub update: UpdateKind,
    #[serde(with = "backend_str")]
    pub backend: Backend,
}

fn default_pole_imag() -> f64 {
    1.0
}

mod backend_str {
    use super::Backend;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Backend, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Backend, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Node feature channels.
    pub hidden: usize,
    /// Edge feature width (pure models).
    pub edge_hidden: usize,
    /// Hidden width of the matrix-construction perceptron (pure models).
    pub mlp_hidden: usize,
    /// Hidden width of the later-layer readout perceptrons.
    pub readout_hidden: usize,
    /// Output width: classes, or 1 for regression.
    pub outputs: usize,
    /// Node label (pure) or species (geometric) vocabulary.
    pub node_vocab: usize,
    /// Edge label vocabulary (pure models).
    pub edge_vocab: usize,
    /// Radial cutoff (geometric models).
    pub cutoff: f64,
    /// Learnable per-edge scalar transport term on the assembled
    /// operator (geometric models).
    pub transport: bool,
    pub y_min: f64,
    pub layers: Vec<LayerConfig>,
}

impl ModelConfig {
    /// Pure-graph model: `layers` GCN layers of which the first `mfn` carry
    /// a matrix function with `channels` operator channels and `poles`
    /// pairs.
    pub fn pure(
        node_vocab: usize,
        edge_vocab: usize,
        outputs: usize,
        hidden: usize,
        layers: usize,
        mfn: usize,
        channels: usize,
        poles: usize,
    ) -> Self {
        let layers = (0..layers)
            .map(|t| LayerConfig {
                local: LocalKind::Gcn,
                matrix_function: t < mfn,
                channels,
                block_size: 1,
                poles,
                pole_imag: 1.0,
                update: UpdateKind::Diag,
                backend: Backend::Spectral,
            })
            .collect();
        Self {
            kind: ModelKind::Pure,
            hidden,
            edge_hidden: channels.max(1),
            mlp_hidden: hidden,
            readout_hidden: 16,
            outputs,
            node_vocab,
            edge_vocab: edge_vocab.max(1),
            cutoff: 0.0,
            transport: false,
            y_min: Y_MIN,
            layers,
        }
    }

    /// Geometric model with `L = 1` features; `mfn[t]` selects the layers
    /// carrying a matrix function.
    pub fn geometric(species: usize, cutoff: f64, hidden: usize, mfn: &[bool], backend: Backend) -> Self {
        let layers = mfn
            .iter()
            .map(|&on| LayerConfig {
                local: LocalKind::TwoBodyO3,
                matrix_function: on,
                channels: hidden,
                block_size: 4,
                poles: 8,
                pole_imag: 1.0,
                update: UpdateKind::Diag,
                backend,
            })
            .collect();
        Self {
            kind: ModelKind::Geometric,
            hidden,
            edge_hidden: 0,
            mlp_hidden: 0,
            readout_hidden: 16,
            outputs: 1,
            node_vocab: species,
            edge_vocab: 0,
            cutoff,
            transport: true,
            y_min: Y_MIN,
            layers,
        }
    }

    /// Same architecture with every matrix function removed.
    pub fn without_matrix_functions(&self) -> Self {
        let mut c = self.clone();
        for l in &mut c.layers {
            l.matrix_function = false;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MfnError::Precondition(m));
        if self.layers.is_empty() {
            return bad("model needs at least one layer".into());
        }
        if self.hidden == 0 || self.outputs == 0 || self.node_vocab == 0 {
            return bad("hidden, outputs and node_vocab must be positive".into());
        }
        if !(self.y_min >= 0.0) {
            return bad(format!("y_min {} must be non-negative", self.y_min));
        }
        for (t, l) in self.layers.iter().enumerate() {
            let expected = match self.kind {
                ModelKind::Pure => LocalKind::Gcn,
                ModelKind::Geometric => LocalKind::TwoBodyO3,
            };
            if l.local != expected {
                return bad(format!("layer {t}: local layer {:?} does not fit a {:?} model", l.local, self.kind));
            }
            if !l.matrix_function {
                continue;
            }
            if l.channels == 0 || l.poles == 0 {
                return bad(format!("layer {t}: channels and poles must be positive"));
            }
            if !(l.pole_imag > self.y_min) {
                return bad(format!("layer {t}: initial pole height {} not above y_min", l.pole_imag));
            }
            let m = match self.kind {
                ModelKind::Pure => 1,
                ModelKind::Geometric => 4,
            };
            if l.block_size != m {
                return bad(format!("layer {t}: block size must be {m} for a {:?} model", self.kind));
            }
            if l.update == UpdateKind::Dense && !l.backend.is_dense() {
                return bad(format!("layer {t}: dense update needs a dense backend, got {}", l.backend));
            }
        }
        match self.kind {
            ModelKind::Pure => {
                if self.layers.iter().any(|l| l.matrix_function) && (self.edge_hidden == 0 || self.mlp_hidden == 0 || self.edge_vocab == 0)
                {
                    return bad("pure matrix-function layers need edge_hidden, mlp_hidden and edge_vocab".into());
                }
            }
            ModelKind::Geometric => {
                if !(self.cutoff > 0.0) {
                    return bad(format!("cutoff {} must be positive", self.cutoff));
                }
            }
        }
        if self.layers.len() > 1 && self.readout_hidden == 0 {
            return bad("readout_hidden must be positive".into());
        }
        Ok(())
    }

    /// Whether layer `t` evaluates `f` on the complete pattern.
    pub(crate) fn full_output(&self, t: usize) -> bool {
        self.layers[t].update == UpdateKind::Dense
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::OrderingMethod;

    #[test]
    fn dense_update_needs_dense_backend() {
        let mut c = ModelConfig::pure(3, 2, 2, 8, 2, 1, 4, 2);
        c.layers[0].update = UpdateKind::Dense;
        c.layers[0].backend = Backend::Selected(OrderingMethod::NestedDissection);
        assert!(matches!(c.validate(), Err(MfnError::Precondition(_))));
        c.layers[0].backend = Backend::DenseResolvent;
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let c = ModelConfig::geometric(2, 1.2, 8, &[true, false], Backend::Selected(OrderingMethod::Rcm));
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"selected:rcm\""));
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn geometric_layers_must_be_two_body() {
        let mut c = ModelConfig::geometric(2, 1.2, 8, &[true], Backend::Spectral);
        c.layers[0].local = LocalKind::Gcn;
        assert!(c.validate().is_err());
    }
}
