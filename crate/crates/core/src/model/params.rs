use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, ModelKind};
use crate::error::{MfnError, Result};
use crate::linalg::RMat;
use crate::matfunc::PoleSet;
use crate::operator::RADIAL_FUNCTIONS;

/// Named trainable tensors in a fixed enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    values: Vec<RMat>,
}

enum Init {
    Zero,
    Xavier,
    Embedding,
    Poles(usize, f64),
}

fn tensor_table(config: &ModelConfig) -> Vec<(String, usize, usize, Init)> {
    let mut out = Vec::new();
    let mut push = |name: String, r: usize, c: usize, init: Init| out.push((name, r, c, init));
    let f = config.hidden;
    let nr = RADIAL_FUNCTIONS;
    match config.kind {
        ModelKind::Pure => {
            push("node_embedding".into(), config.node_vocab, f, Init::Embedding);
            if config.layers.iter().any(|l| l.matrix_function) {
                push("edge_embedding".into(), config.edge_vocab, config.edge_hidden, Init::Embedding);
            }
        }
        ModelKind::Geometric => push("species_embedding".into(), config.node_vocab, f, Init::Embedding),
    }
    for (t, l) in config.layers.iter().enumerate() {
        let p = |s: &str| format!("layer{t}.{s}");
        match config.kind {
            ModelKind::Pure => {
                push(p("gcn.w_self"), f, f, Init::Xavier);
                push(p("gcn.w_nbr"), f, f, Init::Xavier);
                push(p("gcn.b"), 1, f, Init::Zero);
            }
            ModelKind::Geometric => {
                if t > 0 {
                    push(p("local.w_in"), f, f, Init::Xavier);
                }
                push(p("local.radial"), nr, f, Init::Xavier);
                push(p("local.w_self"), f, f, Init::Xavier);
            }
        }
        if l.matrix_function {
            let c = l.channels;
            match config.kind {
                ModelKind::Pure => {
                    let (fe, hm) = (config.edge_hidden, config.mlp_hidden);
                    push(p("mlp.w1"), 2 * f + fe, hm, Init::Xavier);
                    push(p("mlp.b1"), 1, hm, Init::Zero);
                    push(p("mlp.w2"), hm, c, Init::Xavier);
                    push(p("mlp.b2"), 1, c, Init::Zero);
                    push(p("self_embedding"), 1, fe, Init::Embedding);
                }
                ModelKind::Geometric => {
                    push(p("op.proj"), f, c, Init::Xavier);
                    push(p("op.radial"), nr, c, Init::Xavier);
                    if config.transport {
                        push(p("op.transport_s"), nr, c, Init::Xavier);
                        push(p("op.transport_p"), nr, c, Init::Xavier);
                    }
                }
            }
            push(p("poles"), 1, 4 * l.poles, Init::Poles(l.poles, l.pole_imag));
            push(p("mixer"), c, f, Init::Xavier);
            if config.kind == ModelKind::Pure {
                let fe = config.edge_hidden;
                push(p("edge.w1"), c, fe, Init::Xavier);
                push(p("edge.b1"), 1, fe, Init::Zero);
                push(p("edge.w2"), fe, fe, Init::Xavier);
                push(p("edge.b2"), 1, fe, Init::Zero);
            }
        }
        let o = config.outputs;
        if t == 0 {
            push(format!("readout{t}.w"), f, o, Init::Xavier);
            push(format!("readout{t}.b"), 1, o, Init::Zero);
        } else {
            let h = config.readout_hidden;
            push(format!("readout{t}.w1"), f, h, Init::Xavier);
            push(format!("readout{t}.b1"), 1, h, Init::Zero);
            push(format!("readout{t}.w2"), h, o, Init::Xavier);
            push(format!("readout{t}.b2"), 1, o, Init::Zero);
        }
    }
    out
}

impl ModelParams {
    /// Seeded initialisation: Xavier-uniform weights, zero biases,
    /// unit-variance uniform embeddings, default pole sets.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (name, r, c, init) in tensor_table(config) {
            let v = match init {
                Init::Zero => RMat::zeros(r, c),
                Init::Xavier => {
                    let bound = (6.0 / (r + c) as f64).sqrt();
                    RMat::from_fn(r, c, |_, _| rng.gen_range(-bound..bound))
                }
                Init::Embedding => {
                    let bound = 3f64.sqrt();
                    RMat::from_fn(r, c, |_, _| rng.gen_range(-bound..bound))
                }
                Init::Poles(p, imag) => {
                    RMat::from_vec(1, 4 * p, PoleSet::init_with(p, imag, config.y_min, &mut rng).to_vec())
                }
            };
            names.push(name);
            values.push(v);
        }
        Ok(Self { names, values })
    }

    /// Rebuilds from explicit tensors, checking names and shapes against
    /// `config`.
    pub fn from_parts(config: &ModelConfig, names: Vec<String>, values: Vec<RMat>) -> Result<Self> {
        let expected = tensor_table(config);
        if names.len() != expected.len() || values.len() != expected.len() {
            return Err(MfnError::Consistency(format!(
                "{} tensors supplied, config needs {}",
                names.len(),
                expected.len()
            )));
        }
        for ((n, v), (en, r, c, _)) in names.iter().zip(&values).zip(&expected) {
            if n != en || v.rows() != *r || v.cols() != *c {
                return Err(MfnError::Consistency(format!(
                    "tensor {n} {}x{} does not match {en} {r}x{c}",
                    v.rows(),
                    v.cols()
                )));
            }
        }
        Ok(Self { names, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[RMat] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [RMat] {
        &mut self.values
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| MfnError::Internal(format!("no parameter named {name}")))
    }

    pub fn get(&self, name: &str) -> Result<&RMat> {
        Ok(&self.values[self.index_of(name)?])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut RMat> {
        let i = self.index_of(name)?;
        Ok(&mut self.values[i])
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.values.iter().map(|v| (v.rows(), v.cols())).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.as_slice().len()).sum()
    }

    /// All coordinates concatenated in enumeration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.as_slice().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(crate::error::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut off = 0;
        for v in &mut self.values {
            let n = v.as_slice().len();
            v.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Copies every tensor whose name and shape also occur in `other`.
    pub fn copy_matching(&mut self, other: &ModelParams) {
        for (n, v) in self.names.iter().zip(&mut self.values) {
            if let Ok(src) = other.get(n) {
                if (src.rows(), src.cols()) == (v.rows(), v.cols()) {
                    *v = src.clone();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfunc::Backend;

    #[test]
    fn init_is_deterministic_and_ordered() {
        let c = ModelConfig::pure(7, 4, 2, 8, 3, 2, 4, 2);
        let a = ModelParams::init(&c, 3).unwrap();
        let b = ModelParams::init(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.names()[0], "node_embedding");
        assert_ne!(a, ModelParams::init(&c, 4).unwrap());
        let flat = a.flatten();
        let mut z = a.clone();
        z.set_flat(&vec![0.0; flat.len()]).unwrap();
        z.set_flat(&flat).unwrap();
        assert_eq!(z, a);
    }

    #[test]
    fn from_parts_checks_shapes() {
        let c = ModelConfig::geometric(2, 1.2, 4, &[true, false], Backend::Spectral);
        let p = ModelParams::init(&c, 0).unwrap();
        let ok = ModelParams::from_parts(&c, p.names().to_vec(), p.values().to_vec());
        assert!(ok.is_ok());
        let mut vals = p.values().to_vec();
        vals[0] = RMat::zeros(1, 1);
        assert!(ModelParams::from_parts(&c, p.names().to_vec(), vals).is_err());
    }
}
