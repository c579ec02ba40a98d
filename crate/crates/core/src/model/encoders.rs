//! Face, audio and body-pose feature encoders.
//!
//! Volumes are 5-d throughout: face `[N, C, H, W, T]`, audio
//! `[N, C, 13, 1, 4T]`, body `[N, C, V, 1, T]`. Every encoder ends in a
//! `[N, 128, T]` feature.

use alloc::format;
use alloc::vec::Vec;

use super::layers::{same, Bn, Builder, Conv, Ctx};
use crate::autograd::Var;
use crate::error::{bail, Result};
use crate::kernels::conv::ConvGeom;
use crate::params::ParamId;
use crate::skeleton::{PartitionedAdjacency, SkeletonTopology};
use crate::{Scalar, Tensor};

pub const FEATURE_DIM: usize = 128;
pub const MFCC_DIM: usize = 13;
pub const MFCC_PER_FRAME: usize = 4;
pub const PATH_KERNELS: [usize; 2] = [3, 5];
pub const VISUAL_CHANNELS: [(usize, usize); 3] = [(1, 32), (32, 64), (64, 128)];
pub const BODY_CHANNELS: [(usize, usize); 3] = [(3, 32), (32, 64), (64, 128)];

/// Which axes a visual block's "spatial" convolution covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// `κ×κ` over height and width.
    Face,
    /// `κ` over the coefficient axis.
    Audio,
}

impl Stream {
    pub fn spatial_geom(self, k: usize, stride: usize) -> ConvGeom {
        let p = same(k);
        match self {
            Stream::Face => ConvGeom::new([k, k, 1], [stride, stride, 1], [p, p, 0]),
            Stream::Audio => ConvGeom::new([k, 1, 1], [1, 1, 1], [p, 0, 0]),
        }
    }

    pub fn pool_geom(self) -> ConvGeom {
        match self {
            Stream::Face => ConvGeom::new([3, 3, 1], [2, 2, 1], [1, 1, 0]),
            Stream::Audio => ConvGeom::new([1, 1, 3], [1, 1, 2], [0, 0, 1]),
        }
    }
}

pub fn temporal_geom(k: usize) -> ConvGeom {
    ConvGeom::new([1, 1, k], [1, 1, 1], [0, 0, same(k)])
}

#[derive(Clone, Debug)]
pub struct VisualPath {
    pub kernel: usize,
    pub spatial: Conv,
    pub spatial_bn: Bn,
    pub temporal: Conv,
    pub temporal_bn: Bn,
}

/// Two separable spatio-temporal paths, summed, then a pointwise merge.
#[derive(Clone, Debug)]
pub struct VisualBlock {
    pub paths: Vec<VisualPath>,
    pub merge: Conv,
    pub merge_bn: Bn,
}

impl VisualBlock {
    pub fn build<S: Scalar>(
        b: &mut Builder<'_, S>,
        name: &str,
        stream: Stream,
        c_in: usize,
        c_out: usize,
        stride: usize,
    ) -> Result<Self> {
        let mut paths = Vec::new();
        for k in PATH_KERNELS {
            let p = format!("{name}.k{k}");
            paths.push(VisualPath {
                kernel: k,
                spatial: b.conv(&format!("{p}.spatial"), c_in, c_out, stream.spatial_geom(k, stride))?,
                spatial_bn: b.bn(&format!("{p}.spatial_bn"), c_out)?,
                temporal: b.conv(&format!("{p}.temporal"), c_out, c_out, temporal_geom(k))?,
                temporal_bn: b.bn(&format!("{p}.temporal_bn"), c_out)?,
            });
        }
        Ok(Self {
            paths,
            merge: b.conv(&format!("{name}.merge"), c_out, c_out, ConvGeom::POINTWISE)?,
            merge_bn: b.bn(&format!("{name}.merge_bn"), c_out)?,
        })
    }

    pub fn forward<S: Scalar>(&self, cx: &mut Ctx<'_, S>, x: Var) -> Result<Var> {
        let mut outs = Vec::with_capacity(self.paths.len());
        for p in &self.paths {
            let y = cx.conv_bn(x, &p.spatial, &p.spatial_bn, true)?;
            outs.push(cx.conv_bn(y, &p.temporal, &p.temporal_bn, true)?);
        }
        let shape = cx.graph.shape(outs[0]).to_vec();
        if outs.iter().any(|&o| cx.graph.shape(o) != shape.as_slice()) {
            bail!(Dimension, "block paths disagree in output shape");
        }
        let sum = cx.graph.add_n(&outs)?;
        cx.conv_bn(sum, &self.merge, &self.merge_bn, true)
    }
}

#[derive(Clone, Debug)]
pub struct VisualEncoder {
    pub stream: Stream,
    pub blocks: Vec<VisualBlock>,
}

impl VisualEncoder {
    pub fn build<S: Scalar>(b: &mut Builder<'_, S>, name: &str, stream: Stream) -> Result<Self> {
        let blocks = VISUAL_CHANNELS
            .iter()
            .enumerate()
            .map(|(i, &(ci, co))| {
                let stride = if stream == Stream::Face && i == 0 { 2 } else { 1 };
                VisualBlock::build(b, &format!("{name}.block{}", i + 1), stream, ci, co, stride)
            })
            .collect::<Result<_>>()?;
        Ok(Self { stream, blocks })
    }

    /// Face `[N, 1, H, W, T]` or audio `[N, 1, 13, 1, 4T]` → `[N, 128, T]`.
    pub fn forward<S: Scalar>(&self, cx: &mut Ctx<'_, S>, x: Var) -> Result<Var> {
        let shape = cx.graph.shape(x).to_vec();
        if shape.len() != 5 || shape[1] != 1 {
            bail!(Dimension, "encoder input must be [N, 1, D0, D1, T], got {shape:?}");
        }
        if self.stream == Stream::Audio && shape[4] % MFCC_PER_FRAME != 0 {
            bail!(
                Alignment,
                "audio extent {} is not a multiple of {MFCC_PER_FRAME}",
                shape[4]
            );
        }
        let pool = self.stream.pool_geom();
        let mut h = x;
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(cx, h)?;
            if i + 1 < self.blocks.len() {
                h = cx.graph.max_pool(h, pool)?;
            }
        }
        match self.stream {
            Stream::Face => cx.graph.global_max_spatial(h),
            Stream::Audio => cx.graph.global_mean_spatial(h),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BodyPath {
    pub kernel: usize,
    pub radius: usize,
    /// Pointwise projection to `κ·C_out` channels, partition-major.
    pub graph: Conv,
    /// This path's own copy of the normalized partition matrices `[κ, V, V]`.
    pub adjacency: ParamId,
    pub graph_bn: Bn,
    pub temporal: Conv,
    pub temporal_bn: Bn,
}

#[derive(Clone, Debug)]
pub struct BodyBlock {
    pub paths: Vec<BodyPath>,
    pub merge: Conv,
    pub merge_bn: Bn,
}

impl BodyBlock {
    pub fn build<S: Scalar>(
        b: &mut Builder<'_, S>,
        name: &str,
        topo: &SkeletonTopology,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        let v = topo.n_joints;
        let mut paths = Vec::new();
        for k in PATH_KERNELS {
            let radius = (k - 1) / 2;
            let part = PartitionedAdjacency::build(topo, radius)?;
            let p = format!("{name}.k{k}");
            let bmat = Tensor::from_vec(&[k, v, v], part.b_stacked().iter().map(|&x| S::of(x)).collect())?;
            paths.push(BodyPath {
                kernel: k,
                radius,
                graph: b.conv(&format!("{p}.graph"), c_in, k * c_out, ConvGeom::POINTWISE)?,
                adjacency: b.raw(&format!("{p}.graph.adjacency"), bmat)?,
                graph_bn: b.bn(&format!("{p}.graph_bn"), c_out)?,
                temporal: b.conv(&format!("{p}.temporal"), c_out, c_out, temporal_geom(k))?,
                temporal_bn: b.bn(&format!("{p}.temporal_bn"), c_out)?,
            });
        }
        Ok(Self {
            paths,
            merge: b.conv(&format!("{name}.merge"), c_out, c_out, ConvGeom::POINTWISE)?,
            merge_bn: b.bn(&format!("{name}.merge_bn"), c_out)?,
        })
    }

    pub fn forward<S: Scalar>(&self, cx: &mut Ctx<'_, S>, x: Var) -> Result<Var> {
        let mut outs = Vec::with_capacity(self.paths.len());
        for p in &self.paths {
            let z = graph_conv(cx, x, &p.graph, p.adjacency, p.kernel)?;
            let z = cx.bn(z, &p.graph_bn)?;
            let z = cx.graph.relu(z);
            outs.push(cx.conv_bn(z, &p.temporal, &p.temporal_bn, false)?);
        }
        let sum = cx.graph.add_n(&outs)?;
        cx.conv_bn(sum, &self.merge, &self.merge_bn, true)
    }
}

/// Pointwise projection to `κ·C_out` channels, then contraction of each
/// partition block with its matrix.
pub fn graph_conv<S: Scalar>(cx: &mut Ctx<'_, S>, x: Var, proj: &Conv, adjacency: ParamId, kernel: usize) -> Result<Var> {
    let k = cx.store.tensor(adjacency).shape()[0];
    if k != kernel {
        bail!(Config, "path of spatial kernel {kernel} holds {k} partition matrices");
    }
    let m = cx.conv(x, proj)?;
    let b = cx.param(adjacency);
    cx.graph.contract(m, b)
}

#[derive(Clone, Debug)]
pub struct BodyEncoder {
    pub topology: SkeletonTopology,
    /// Per-(coordinate, joint) input normalization over `3·V` channels.
    pub input_bn: Bn,
    pub blocks: Vec<BodyBlock>,
}

impl BodyEncoder {
    pub fn build<S: Scalar>(b: &mut Builder<'_, S>, name: &str, topo: SkeletonTopology) -> Result<Self> {
        let input_bn = b.bn(&format!("{name}.input_bn"), 3 * topo.n_joints)?;
        let blocks = BODY_CHANNELS
            .iter()
            .enumerate()
            .map(|(i, &(ci, co))| BodyBlock::build(b, &format!("{name}.block{}", i + 1), &topo, ci, co))
            .collect::<Result<_>>()?;
        Ok(Self {
            topology: topo,
            input_bn,
            blocks,
        })
    }

    /// `[N, 3, V, 1, T]` → `[N, 128, T]`.
    pub fn forward<S: Scalar>(&self, cx: &mut Ctx<'_, S>, x: Var) -> Result<Var> {
        let shape = cx.graph.shape(x).to_vec();
        let v = self.topology.n_joints;
        if shape.len() != 5 || shape[1] != 3 || shape[3] != 1 {
            bail!(Dimension, "pose input must be [N, 3, V, 1, T], got {shape:?}");
        }
        if shape[2] != v {
            bail!(Dimension, "pose input has {} joints, topology has {v}", shape[2]);
        }
        let (n, t) = (shape[0], shape[4]);
        let flat = cx.graph.reshape(x, &[n, 3 * v, 1, 1, t])?;
        let flat = cx.bn(flat, &self.input_bn)?;
        let mut h = cx.graph.reshape(flat, &shape)?;
        for block in &self.blocks {
            h = block.forward(cx, h)?;
        }
        cx.graph.global_mean_spatial(h)
    }
}
