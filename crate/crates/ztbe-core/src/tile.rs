//! The three-level tiling hierarchy and its coordinate bijection.
//!
//! A padded matrix decomposes into 64x64 block tiles, each block into a
//! 4x4 grid of 16x16 tensor-core tiles, each of those into a 2x2 grid of
//! 8x8 fragment tiles. One canonical total order over fragments is shared
//! by the compressor, both decoders, and the offset table:
//!
//! * blocks: row-major over the matrix
//! * tensor-core tiles: row-major within a block
//! * fragments: column-major within a tensor-core tile
//! * elements: position 0..64, row-major within the fragment
//!
//! Fragment order is column-major because that is how matrix-multiply
//! operand registers are laid out; the rest is fixed here once so nothing
//! downstream has to guess.

use crate::error::{Error, Result};

/// Elements per fragment side.
pub const FRAG_DIM: usize = 8;
/// Elements per tensor-core tile side.
pub const TCT_DIM: usize = 16;
/// Elements per block tile side.
pub const BLOCK_DIM: usize = 64;
/// Fragments per tensor-core tile side (2x2 grid).
pub const FRAGS_PER_TCT_SIDE: usize = TCT_DIM / FRAG_DIM;
/// Tensor-core tiles per block side (4x4 grid).
pub const TCTS_PER_BLOCK_SIDE: usize = BLOCK_DIM / TCT_DIM;
/// Fragments per block tile (64).
pub const FRAGS_PER_BLOCK: usize =
    FRAGS_PER_TCT_SIDE * FRAGS_PER_TCT_SIDE * TCTS_PER_BLOCK_SIDE * TCTS_PER_BLOCK_SIDE;
/// Elements per fragment.
pub const FRAG_ELEMS: usize = FRAG_DIM * FRAG_DIM;
/// Elements per block tile.
pub const BLOCK_ELEMS: usize = BLOCK_DIM * BLOCK_DIM;

/// Round a dimension up to the next block-tile multiple (minimum one block).
pub fn pad_dim(dim: usize) -> usize {
    dim.div_ceil(BLOCK_DIM) * BLOCK_DIM
}

/// Position of one element in the tiling hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileCoordinates {
    pub block_row: usize,
    pub block_col: usize,
    /// Tensor-core tile index within the block, row-major over the 4x4 grid.
    pub tct_index: usize,
    /// Fragment index within the tensor-core tile, column-major over the 2x2 grid.
    pub frag_index: usize,
    /// Element position within the fragment, row-major over 8x8.
    pub pos: usize,
}

/// Map a padded matrix position to tile coordinates.
pub fn coords_of(
    row: usize,
    col: usize,
    padded_rows: usize,
    padded_cols: usize,
) -> Result<TileCoordinates> {
    if row >= padded_rows || col >= padded_cols {
        return Err(Error::CoordsOutOfRange {
            row,
            col,
            rows: padded_rows,
            cols: padded_cols,
        });
    }
    let (block_row, in_block_row) = (row / BLOCK_DIM, row % BLOCK_DIM);
    let (block_col, in_block_col) = (col / BLOCK_DIM, col % BLOCK_DIM);
    let (tct_row, in_tct_row) = (in_block_row / TCT_DIM, in_block_row % TCT_DIM);
    let (tct_col, in_tct_col) = (in_block_col / TCT_DIM, in_block_col % TCT_DIM);
    let (frag_row, in_frag_row) = (in_tct_row / FRAG_DIM, in_tct_row % FRAG_DIM);
    let (frag_col, in_frag_col) = (in_tct_col / FRAG_DIM, in_tct_col % FRAG_DIM);
    Ok(TileCoordinates {
        block_row,
        block_col,
        tct_index: tct_row * TCTS_PER_BLOCK_SIDE + tct_col,
        frag_index: frag_col * FRAGS_PER_TCT_SIDE + frag_row,
        pos: in_frag_row * FRAG_DIM + in_frag_col,
    })
}

/// Inverse of [`coords_of`].
pub fn index_of(coords: &TileCoordinates) -> (usize, usize) {
    let tct_row = coords.tct_index / TCTS_PER_BLOCK_SIDE;
    let tct_col = coords.tct_index % TCTS_PER_BLOCK_SIDE;
    let frag_col = coords.frag_index / FRAGS_PER_TCT_SIDE;
    let frag_row = coords.frag_index % FRAGS_PER_TCT_SIDE;
    let row = coords.block_row * BLOCK_DIM
        + tct_row * TCT_DIM
        + frag_row * FRAG_DIM
        + coords.pos / FRAG_DIM;
    let col = coords.block_col * BLOCK_DIM
        + tct_col * TCT_DIM
        + frag_col * FRAG_DIM
        + coords.pos % FRAG_DIM;
    (row, col)
}

/// Linear fragment index in the canonical total order, given a block's
/// linear index and the fragment's place inside it.
#[inline]
pub fn frag_linear_index(block_linear: usize, tct_index: usize, frag_index: usize) -> usize {
    (block_linear * TCTS_PER_BLOCK_SIDE * TCTS_PER_BLOCK_SIDE + tct_index) * FRAGS_PER_TCT_SIDE
        * FRAGS_PER_TCT_SIDE
        + frag_index
}

/// Top-left padded-matrix coordinates of a fragment identified by its
/// place within a block.
pub fn frag_origin(
    block_row: usize,
    block_col: usize,
    tct_index: usize,
    frag_index: usize,
) -> (usize, usize) {
    let base = TileCoordinates {
        block_row,
        block_col,
        tct_index,
        frag_index,
        pos: 0,
    };
    index_of(&base)
}
