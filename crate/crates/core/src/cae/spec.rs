use crate::error::{Error, Result};

/// Residual connection from the pooled output of `from_block` to the
/// pre-activation of conv `to_conv` in `to_block` (blocks are zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bypass {
    pub from_block: usize,
    pub to_block: usize,
    pub to_conv: usize,
}

/// Declarative description of the autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// Volume extents `(X, Y, Z)`; each must be divisible by 16.
    pub input_dims: [usize; 3],
    pub block_channels: [usize; 4],
    pub convs_per_block: [usize; 4],
    pub kernel: usize,
    pub bottleneck_channels: usize,
    pub bypasses: Vec<Bypass>,
}

pub(crate) struct LayerShape {
    pub name: String,
    pub weight: Vec<usize>,
    pub fan_in: usize,
    pub bias: usize,
}

impl NetworkSpec {
    fn with(input_dims: [usize; 3], block_channels: [usize; 4]) -> Self {
        NetworkSpec {
            input_dims,
            block_channels,
            convs_per_block: [1, 1, 3, 3],
            kernel: 3,
            bottleneck_channels: 1,
            bypasses: vec![
                Bypass { from_block: 1, to_block: 2, to_conv: 2 },
                Bypass { from_block: 2, to_block: 3, to_conv: 2 },
            ],
        }
    }

    /// 80x96x80 input, 150-dimensional embedding.
    pub fn full() -> Self {
        NetworkSpec::with([80, 96, 80], [8, 16, 32, 32])
    }

    /// 32x32x32 input, 8-dimensional embedding.
    pub fn desk() -> Self {
        NetworkSpec::with([32, 32, 32], [4, 8, 16, 16])
    }

    pub fn custom(input_dims: [usize; 3], block_channels: [usize; 4]) -> Self {
        NetworkSpec::with(input_dims, block_channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("invalid network spec: {m}")));
        if self.input_dims.iter().any(|&d| d == 0 || d % 16 != 0) {
            return bad(format!("input dims {:?} must be positive multiples of 16", self.input_dims));
        }
        if self.block_channels.contains(&0) || self.convs_per_block.contains(&0) {
            return bad("channel and conv counts must be positive".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel {} must be odd", self.kernel));
        }
        if self.bottleneck_channels == 0 {
            return bad("bottleneck channels must be positive".into());
        }
        for (i, bp) in self.bypasses.iter().enumerate() {
            if bp.from_block >= 3 || bp.to_block != bp.from_block + 1 {
                return bad(format!("bypass {i} must join block b's output to block b+1"));
            }
            if bp.to_conv >= self.convs_per_block[bp.to_block] {
                return bad(format!("bypass {i} targets missing conv {}", bp.to_conv));
            }
            if self.bypasses[..i].iter().any(|o| o == bp) {
                return bad(format!("bypass {i} duplicated"));
            }
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.spatial_at(4).iter().product::<usize>() * self.bottleneck_channels
    }

    pub fn voxel_count(&self) -> usize {
        self.input_dims.iter().product()
    }

    /// `[Z, Y, X] / 2^level`, the tensor spatial extents after `level` pools.
    pub fn spatial_at(&self, level: u32) -> [usize; 3] {
        let [x, y, z] = self.input_dims;
        [z >> level, y >> level, x >> level]
    }

    pub(crate) fn tensor_shape(&self, channels: usize) -> Vec<usize> {
        let s = self.spatial_at(0);
        vec![channels, s[0], s[1], s[2]]
    }

    fn block_input_channels(&self, block: usize) -> usize {
        if block == 0 {
            1
        } else {
            self.block_channels[block - 1]
        }
    }

    pub(crate) fn bypass_needs_projection(&self, bp: &Bypass) -> bool {
        self.block_channels[bp.from_block] != self.block_channels[bp.to_block]
    }

    /// Every weight in initialization and serialization order.
    pub(crate) fn param_layout(&self) -> Vec<LayerShape> {
        let k = self.kernel;
        let k3 = k * k * k;
        let mut out = Vec::new();
        for block in 0..4 {
            let c = self.block_channels[block];
            for conv in 0..self.convs_per_block[block] {
                let cin = if conv == 0 { self.block_input_channels(block) } else { c };
                out.push(LayerShape {
                    name: super::conv_name(block, conv),
                    weight: vec![c, cin, k, k, k],
                    fan_in: cin * k3,
                    bias: c,
                });
            }
        }
        for (j, bp) in self.bypasses.iter().enumerate() {
            if self.bypass_needs_projection(bp) {
                let (cf, ct) = (self.block_channels[bp.from_block], self.block_channels[bp.to_block]);
                out.push(LayerShape {
                    name: super::proj_name(j),
                    weight: vec![ct, cf, 1, 1, 1],
                    fan_in: cf,
                    bias: ct,
                });
            }
        }
        let (c4, bn) = (self.block_channels[3], self.bottleneck_channels);
        out.push(LayerShape { name: "bottleneck".into(), weight: vec![bn, c4, 1, 1, 1], fan_in: c4, bias: bn });
        out.push(LayerShape { name: "expand".into(), weight: vec![bn, c4, 1, 1, 1], fan_in: bn, bias: c4 });
        for block in (0..4).rev() {
            let c = self.block_channels[block];
            let m = self.convs_per_block[block];
            for conv in 0..m {
                let cout = if conv + 1 == m { self.block_input_channels(block) } else { c };
                out.push(LayerShape {
                    name: super::deconv_name(block, conv),
                    weight: vec![c, cout, k, k, k],
                    fan_in: c * k3,
                    bias: cout,
                });
            }
        }
        out
    }
}
