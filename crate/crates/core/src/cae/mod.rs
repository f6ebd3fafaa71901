//! Four-block 3D convolutional autoencoder with residual bypasses in the
//! encoder and a mirrored deconvolution/unpooling decoder.

mod checkpoint;
mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use spec::{Bypass, NetworkSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ndgrad::{Graph, ParamStore, Tensor, Var};
use crate::volio::Volume;

/// Low-dimensional representation produced by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sq_dist(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: NetworkSpec,
    params: ParamStore,
    exec: Exec,
}

pub(crate) fn conv_name(block: usize, conv: usize) -> String {
    format!("enc{block}.conv{conv}")
}

pub(crate) fn deconv_name(block: usize, conv: usize) -> String {
    format!("dec{block}.deconv{conv}")
}

pub(crate) fn proj_name(bypass: usize) -> String {
    format!("bypass{bypass}.proj")
}

impl Model {
    /// Builds the network with He-normal weights drawn from `init_seed` and zero biases.
    pub fn build(spec: NetworkSpec, init_seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut params = ParamStore::new();
        for layer in spec.param_layout() {
            let std = (2.0 / layer.fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let n: usize = layer.weight.iter().product();
            let w = (0..n).map(|_| normal.sample(&mut rng)).collect();
            params.insert(format!("{}.w", layer.name), Tensor::new(layer.weight, w)?)?;
            params.insert(format!("{}.b", layer.name), Tensor::zeros(&[layer.bias]))?;
        }
        Ok(Model { spec, params, exec: Exec::default() })
    }

    pub(crate) fn from_parts(spec: NetworkSpec, params: ParamStore) -> Result<Model> {
        spec.validate()?;
        let expected = Model::build(spec.clone(), 0)?;
        let same_layout = expected.params.len() == params.len()
            && expected
                .params
                .iter()
                .zip(params.iter())
                .all(|((n1, p1), (n2, p2))| n1 == n2 && p1.value.shape() == p2.value.shape());
        if !same_layout {
            return Err(Error::SpecMismatch("parameter layout does not match network spec".into()));
        }
        Ok(Model { spec, params, exec: Exec::default() })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    pub fn embedding_dim(&self) -> usize {
        self.spec.embedding_dim()
    }

    pub fn new_graph(&self) -> Graph {
        Graph::with_exec(self.exec)
    }

    /// Places a volume on the graph as a `[1, Z, Y, X]` constant on the `[0, 1]` scale.
    pub fn input(&self, g: &mut Graph, v: &Volume) -> Result<Var> {
        if v.dims() != self.spec.input_dims {
            return Err(Error::Shape(format!(
                "volume dims {:?} do not match network input {:?}",
                v.dims(),
                self.spec.input_dims
            )));
        }
        g.constant(Tensor::new(self.spec.tensor_shape(1), v.to_unit_scale())?)
    }

    /// Records the encoder on `g`, returning the flattened embedding `[D_z]`.
    pub fn encode_graph(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let spec = &self.spec;
        let mut h = x;
        let mut block_outputs: Vec<Var> = Vec::with_capacity(4);
        for block in 0..4 {
            for conv in 0..spec.convs_per_block[block] {
                let name = conv_name(block, conv);
                let w = g.param(&self.params, &format!("{name}.w"))?;
                let b = g.param(&self.params, &format!("{name}.b"))?;
                let mut y = g.conv3d_same(h, w, Some(b))?;
                for (j, bp) in spec.bypasses.iter().enumerate() {
                    if bp.to_block == block && bp.to_conv == conv {
                        let skip = block_outputs[bp.from_block];
                        let skip = if spec.bypass_needs_projection(bp) {
                            let pw = g.param(&self.params, &format!("{}.w", proj_name(j)))?;
                            let pb = g.param(&self.params, &format!("{}.b", proj_name(j)))?;
                            g.conv3d_same(skip, pw, Some(pb))?
                        } else {
                            skip
                        };
                        y = g.add(y, skip)?;
                    }
                }
                h = g.relu(y)?;
            }
            let (pooled, _) = g.maxpool3d(h)?;
            h = pooled;
            block_outputs.push(h);
        }
        let w = g.param(&self.params, "bottleneck.w")?;
        let b = g.param(&self.params, "bottleneck.b")?;
        // The code layer is linear.
        let z = g.conv3d_same(h, w, Some(b))?;
        g.flatten(z)
    }

    /// Records the decoder on `g`, returning `[1, Z, Y, X]` on the `[0, 1]` scale (unclamped).
    pub fn decode_graph(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let spec = &self.spec;
        let zlen = g.value(z).len();
        if zlen != spec.embedding_dim() {
            return Err(Error::Shape(format!(
                "embedding length {zlen} does not match {}",
                spec.embedding_dim()
            )));
        }
        let s = spec.spatial_at(4);
        let mut h = g.reshape(z, vec![spec.bottleneck_channels, s[0], s[1], s[2]])?;
        let w = g.param(&self.params, "expand.w")?;
        let b = g.param(&self.params, "expand.b")?;
        let y = g.deconv3d(h, w, Some(b), 1, 0)?;
        h = g.relu(y)?;
        for block in (0..4).rev() {
            h = g.unpool_corner(h)?;
            let m = spec.convs_per_block[block];
            for conv in 0..m {
                let name = deconv_name(block, conv);
                let w = g.param(&self.params, &format!("{name}.w"))?;
                let b = g.param(&self.params, &format!("{name}.b"))?;
                let k = spec.kernel;
                let y = g.deconv3d(h, w, Some(b), 1, k / 2)?;
                let last_layer = block == 0 && conv + 1 == m;
                h = if last_layer { y } else { g.relu(y)? };
            }
        }
        Ok(h)
    }

    pub fn encode(&self, v: &Volume) -> Result<Embedding> {
        let mut g = self.new_graph();
        let x = self.input(&mut g, v)?;
        let z = self.encode_graph(&mut g, x)?;
        Ok(Embedding(g.value(z).data().to_vec()))
    }

    pub fn decode(&self, z: &Embedding) -> Result<Volume> {
        let mut g = self.new_graph();
        let zv = g.constant(Tensor::new(vec![z.len()], z.0.clone())?)?;
        let y = self.decode_graph(&mut g, zv)?;
        Volume::from_unit_scale(self.spec.input_dims, g.value(y).data())
    }

    /// Encoder and decoder on one graph.
    pub fn forward(&self, v: &Volume) -> Result<(Embedding, Volume)> {
        let mut g = self.new_graph();
        let x = self.input(&mut g, v)?;
        let z = self.encode_graph(&mut g, x)?;
        let y = self.decode_graph(&mut g, z)?;
        Ok((
            Embedding(g.value(z).data().to_vec()),
            Volume::from_unit_scale(self.spec.input_dims, g.value(y).data())?,
        ))
    }
}

#[cfg(test)]
mod tests;
