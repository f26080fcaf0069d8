//! Geometry of the two-level lattice.
//!
//! Sites live on the discrete torus `(Z/(W·L))²` and are grouped into `L²`
//! blocks of `W²` sites each: block `(b1, b2)` owns the axis-aligned square
//! of sites `[b1·W, (b1+1)·W) × [b2·W, (b2+1)·W)`. The total dimension is
//! `N = W²·L²`.
//!
//! Blocks carry the periodic L¹ (taxicab) metric on `(Z/L)²`; all decay
//! statements about propagators and loop amplitudes are expressed in this
//! block metric. `L >= 3` is required throughout so that the 5-point
//! nearest-neighbour stencil has five *distinct* blocks in every row.

use thiserror::Error;

/// Errors from constructing lattice geometry.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    /// Block width `W` must be at least 1.
    #[error("block width W must be >= 1, got {0}")]
    WidthTooSmall(usize),
    /// Torus side `L` must be at least 3 so the 5-point stencil rows contain
    /// five distinct blocks (no double-counted neighbours).
    #[error("block torus side L must be >= 3, got {0}")]
    SideTooSmall(usize),
}

/// Dimensions of the two-level lattice: `L² ` blocks of `W²` sites,
/// `N = W²·L²` sites total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGeometry {
    w: usize,
    l: usize,
}

impl BlockGeometry {
    /// Creates a geometry with block width `w >= 1` and block torus side
    /// `l >= 3`.
    pub fn new(w: usize, l: usize) -> Result<Self, GeometryError> {
        if w < 1 {
            return Err(GeometryError::WidthTooSmall(w));
        }
        if l < 3 {
            return Err(GeometryError::SideTooSmall(l));
        }
        Ok(Self { w, l })
    }

    /// Block width `W` (sites per block axis).
    pub fn w(&self) -> usize {
        self.w
    }

    /// Block torus side `L` (blocks per axis).
    pub fn l(&self) -> usize {
        self.l
    }

    /// Sites per axis, `W·L`.
    pub fn side(&self) -> usize {
        self.w * self.l
    }

    /// Total number of sites, `N = (W·L)²`.
    pub fn n_sites(&self) -> usize {
        self.side() * self.side()
    }

    /// Number of blocks, `L²`.
    pub fn n_blocks(&self) -> usize {
        self.l * self.l
    }

    /// Sites per block, `W²`.
    pub fn block_size(&self) -> usize {
        self.w * self.w
    }

    /// The block containing a site.
    pub fn block_of(&self, site: SiteIndex) -> BlockIndex {
        debug_assert!(site.0 < self.side() && site.1 < self.side());
        BlockIndex(site.0 / self.w, site.1 / self.w)
    }

    /// The block containing the site with flattened index `flat`.
    pub fn block_of_flat(&self, flat: usize) -> BlockIndex {
        self.block_of(SiteIndex::from_flat(flat, self))
    }

    /// Flattened site indices owned by `block`, in row-major order within the
    /// block (first axis outer, second axis inner).
    pub fn block_sites(&self, block: BlockIndex) -> Vec<usize> {
        debug_assert!(block.0 < self.l && block.1 < self.l);
        let side = self.side();
        let mut out = Vec::with_capacity(self.block_size());
        for i1 in 0..self.w {
            let x1 = block.0 * self.w + i1;
            for i2 in 0..self.w {
                let x2 = block.1 * self.w + i2;
                out.push(x1 * side + x2);
            }
        }
        out
    }

    /// All blocks in row-major order: `(0,0), (0,1), ..., (L-1,L-1)`.
    pub fn blocks(&self) -> impl Iterator<Item = BlockIndex> + '_ {
        let l = self.l;
        (0..l * l).map(move |f| BlockIndex(f / l, f % l))
    }

    /// Periodic L¹ distance between two blocks on the torus `(Z/L)²`.
    pub fn block_distance(&self, a: BlockIndex, b: BlockIndex) -> usize {
        axis_distance(a.0, b.0, self.l) + axis_distance(a.1, b.1, self.l)
    }
}

/// One coordinate's contribution to the periodic L¹ metric on `Z/l`.
fn axis_distance(a: usize, b: usize, l: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(l - d)
}

/// Index of a block on the torus `(Z/L)²`, with coordinates canonical in
/// `[0, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockIndex(pub usize, pub usize);

impl BlockIndex {
    /// Canonicalizes possibly out-of-range (e.g. negative) coordinates
    /// modulo `l`.
    pub fn wrap(c1: i64, c2: i64, l: usize) -> Self {
        let l = l as i64;
        BlockIndex((c1.rem_euclid(l)) as usize, (c2.rem_euclid(l)) as usize)
    }

    /// Row-major flattening, `b1·L + b2`.
    pub fn flat(&self, l: usize) -> usize {
        self.0 * l + self.1
    }

    /// Inverse of [`BlockIndex::flat`].
    pub fn from_flat(flat: usize, l: usize) -> Self {
        BlockIndex(flat / l, flat % l)
    }

    /// The canonical offset `self - other` on the torus, as a block index in
    /// `[0, L)²` (i.e. the translation carrying `other` to `self`).
    pub fn offset_from(&self, other: BlockIndex, l: usize) -> BlockIndex {
        BlockIndex::wrap(
            self.0 as i64 - other.0 as i64,
            self.1 as i64 - other.1 as i64,
            l,
        )
    }

    /// Translates this block by `offset` on the torus.
    pub fn shifted_by(&self, offset: BlockIndex, l: usize) -> BlockIndex {
        BlockIndex::wrap(
            self.0 as i64 + offset.0 as i64,
            self.1 as i64 + offset.1 as i64,
            l,
        )
    }

    /// Periodic L¹ distance of this block from the origin block `(0, 0)`.
    pub fn norm(&self, l: usize) -> usize {
        axis_distance(self.0, 0, l) + axis_distance(self.1, 0, l)
    }
}

/// Index of a site on the torus `(Z/(W·L))²`, with coordinates canonical in
/// `[0, W·L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SiteIndex(pub usize, pub usize);

impl SiteIndex {
    /// Row-major flattening, `x1·(W·L) + x2`.
    pub fn flat(&self, geom: &BlockGeometry) -> usize {
        self.0 * geom.side() + self.1
    }

    /// Inverse of [`SiteIndex::flat`].
    pub fn from_flat(flat: usize, geom: &BlockGeometry) -> Self {
        let side = geom.side();
        SiteIndex(flat / side, flat % side)
    }
}
