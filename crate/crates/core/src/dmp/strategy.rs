//! Decomposition strategies: how a global domain is split over a rank grid
//! and which halo regions have to be exchanged.

use thiserror::Error;

use super::{ExchangeDecl, GridTopology};
use crate::ir::Attribute;
use crate::stencil::{AccessExtent, Bounds};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DecompositionError {
    #[error("grid {grid} has {grid_rank} dimensions but the domain only {domain_rank}")]
    RankMismatch { grid: GridTopology, grid_rank: usize, domain_rank: usize },
    #[error("dimension {dim} has {points} points, fewer than the {ranks} ranks along it")]
    TooManyRanks { dim: usize, points: i64, ranks: usize },
    #[error("coordinate {coord:?} is outside grid {grid}")]
    BadCoordinate { coord: Vec<usize>, grid: GridTopology },
}

pub trait DecompositionStrategy {
    fn name(&self) -> &'static str;

    /// Core (halo-free) part of `global` owned by the rank at `coord`.
    fn local_bounds(&self, global: &Bounds, topo: &GridTopology, coord: &[usize]) -> Result<Bounds, DecompositionError>;

    /// The `#dmp.grid` attribute describing the topology.
    fn grid_attr(&self, topo: &GridTopology) -> Attribute {
        Attribute::Grid(topo.clone())
    }

    /// Exchanges the rank at `coord` performs for an operand read with
    /// `extent`, in coordinates of its halo-extended local buffer.
    fn generate_exchanges(&self, extent: &AccessExtent, local: &Bounds, topo: &GridTopology, coord: &[usize]) -> Vec<ExchangeDecl>;
}

/// Block distribution along the leading dimensions. Dimension `d` of
/// extent `E` over `p` ranks gives rank `i` a slab of `E / p` points, plus
/// one for the first `E % p` ranks.
#[derive(Debug, Clone, Copy, Default)]
pub struct SlicingStrategy;

/// Start offset and size of slab `i` when `extent` points go to `parts` ranks.
pub fn slab(extent: i64, parts: usize, i: usize) -> (i64, i64) {
    let p = parts as i64;
    let i = i as i64;
    let (q, r) = (extent / p, extent % p);
    (i * q + i.min(r), q + i64::from(i < r))
}

impl DecompositionStrategy for SlicingStrategy {
    fn name(&self) -> &'static str {
        "slice"
    }

    fn local_bounds(&self, global: &Bounds, topo: &GridTopology, coord: &[usize]) -> Result<Bounds, DecompositionError> {
        if topo.rank() > global.rank() {
            return Err(DecompositionError::RankMismatch { grid: topo.clone(), grid_rank: topo.rank(), domain_rank: global.rank() });
        }
        if coord.len() != topo.rank() || coord.iter().zip(&topo.dims).any(|(c, d)| c >= d) {
            return Err(DecompositionError::BadCoordinate { coord: coord.to_vec(), grid: topo.clone() });
        }
        let mut lb = global.lb.clone();
        let mut ub = global.ub.clone();
        for d in 0..topo.rank() {
            let extent = global.ub[d] - global.lb[d];
            if (topo.dims[d] as i64) > extent {
                return Err(DecompositionError::TooManyRanks { dim: d, points: extent, ranks: topo.dims[d] });
            }
            let (start, size) = slab(extent, topo.dims[d], coord[d]);
            lb[d] = global.lb[d] + start;
            ub[d] = lb[d] + size;
        }
        Ok(Bounds::new(lb, ub))
    }

    fn generate_exchanges(&self, extent: &AccessExtent, local: &Bounds, topo: &GridTopology, coord: &[usize]) -> Vec<ExchangeDecl> {
        let width = extent.halo_width();
        let core_at = width.clone();
        exchange_templates_at(&core_at, &local.shape(), &width, topo)
            .into_iter()
            .filter(|e| topo.neighbor_rank(coord, &e.to).is_some())
            .collect()
    }
}

pub fn local_bounds(global: &Bounds, topo: &GridTopology, coord: &[usize]) -> Result<Bounds, DecompositionError> {
    SlicingStrategy.local_bounds(global, topo, coord)
}

pub fn generate_exchanges(extent: &AccessExtent, local: &Bounds, topo: &GridTopology, coord: &[usize]) -> Vec<ExchangeDecl> {
    SlicingStrategy.generate_exchanges(extent, local, topo, coord)
}

/// Rank-independent exchange templates for a core of shape `core_shape`
/// surrounded by a symmetric halo: one per direction along every grid
/// dimension with more than one rank. Whether the neighbor exists is
/// decided per rank at run time.
pub fn exchange_templates(extent: &AccessExtent, core_shape: &[i64], topo: &GridTopology) -> Vec<ExchangeDecl> {
    let width = extent.halo_width();
    exchange_templates_at(&width, core_shape, &width, topo)
}

/// Templates for a buffer whose core starts at `core_at` and has shape
/// `core_shape`; `width[d]` is the halo depth exchanged along dimension `d`.
/// Dimension-major order, negative direction first.
pub fn exchange_templates_at(core_at: &[i64], core_shape: &[i64], width: &[i64], topo: &GridTopology) -> Vec<ExchangeDecl> {
    let mut out = Vec::new();
    for d in 0..topo.rank() {
        let w = width[d];
        if topo.dims[d] < 2 || w == 0 {
            continue;
        }
        for dir in [-1i64, 1] {
            let mut at = core_at.to_vec();
            let mut size = core_shape.to_vec();
            let mut source_offset = vec![0; core_at.len()];
            let mut to = vec![0; topo.rank()];
            size[d] = w;
            to[d] = dir;
            if dir < 0 {
                at[d] = core_at[d] - w;
                source_offset[d] = w;
            } else {
                at[d] = core_at[d] + core_shape[d];
                source_offset[d] = -w;
            }
            out.push(ExchangeDecl { at, size, source_offset, to });
        }
    }
    out
}
