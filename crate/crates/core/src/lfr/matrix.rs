use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Signal widths of an LFR interconnection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub n_z1: usize,
    pub n_w1: usize,
    pub n_z2: usize,
    pub n_w2: usize,
}

impl Dims {
    pub fn rows(&self) -> usize {
        self.n_x + self.n_y + self.n_z1 + self.n_z2
    }

    pub fn cols(&self) -> usize {
        self.n_x + self.n_u + self.n_w1 + self.n_w2
    }

    pub fn row_width(&self, r: RowBlock) -> usize {
        match r {
            RowBlock::X => self.n_x,
            RowBlock::Y => self.n_y,
            RowBlock::Z1 => self.n_z1,
            RowBlock::Z2 => self.n_z2,
        }
    }

    pub fn col_width(&self, c: ColBlock) -> usize {
        match c {
            ColBlock::X => self.n_x,
            ColBlock::U => self.n_u,
            ColBlock::W1 => self.n_w1,
            ColBlock::W2 => self.n_w2,
        }
    }

    pub fn row_offset(&self, r: RowBlock) -> usize {
        RowBlock::ALL
            .iter()
            .take_while(|b| **b != r)
            .map(|b| self.row_width(*b))
            .sum()
    }

    pub fn col_offset(&self, c: ColBlock) -> usize {
        ColBlock::ALL
            .iter()
            .take_while(|b| **b != c)
            .map(|b| self.col_width(*b))
            .sum()
    }
}

/// Row partition of `S`: next state, output, baseline port input, augmentation port input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowBlock {
    X,
    Y,
    Z1,
    Z2,
}

impl RowBlock {
    pub const ALL: [RowBlock; 4] = [RowBlock::X, RowBlock::Y, RowBlock::Z1, RowBlock::Z2];
}

/// Column partition of `S`: state, input, baseline port output, augmentation port output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColBlock {
    X,
    U,
    W1,
    W2,
}

impl ColBlock {
    pub const ALL: [ColBlock; 4] = [ColBlock::X, ColBlock::U, ColBlock::W1, ColBlock::W2];
}

/// The fixed interconnection matrix routing `(x, u, w1, w2)` to `(x+, y, z1, z2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectionMatrix {
    dims: Dims,
    entries: DMatrix<f64>,
}

impl InterconnectionMatrix {
    pub fn new(dims: Dims, entries: DMatrix<f64>) -> Result<Self> {
        check_len("interconnection rows", dims.rows(), entries.nrows())?;
        check_len("interconnection columns", dims.cols(), entries.ncols())?;
        Ok(InterconnectionMatrix { dims, entries })
    }

    pub fn zeros(dims: Dims) -> Self {
        InterconnectionMatrix {
            dims,
            entries: DMatrix::zeros(dims.rows(), dims.cols()),
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.entries
    }

    pub fn block(&self, r: RowBlock, c: ColBlock) -> DMatrix<f64> {
        self.entries
            .view(
                (self.dims.row_offset(r), self.dims.col_offset(c)),
                (self.dims.row_width(r), self.dims.col_width(c)),
            )
            .into_owned()
    }

    pub fn set_block(&mut self, r: RowBlock, c: ColBlock, block: &DMatrix<f64>) -> Result<()> {
        check_len("block rows", self.dims.row_width(r), block.nrows())?;
        check_len("block columns", self.dims.col_width(c), block.ncols())?;
        let (r0, c0) = (self.dims.row_offset(r), self.dims.col_offset(c));
        self.entries
            .view_mut((r0, c0), (block.nrows(), block.ncols()))
            .copy_from(block);
        Ok(())
    }

    /// Writes an identity into the sub-block starting at the given offsets
    /// within block `(r, c)`.
    pub fn set_identity(
        &mut self,
        r: RowBlock,
        c: ColBlock,
        row_off: usize,
        col_off: usize,
        n: usize,
    ) -> Result<()> {
        if row_off + n > self.dims.row_width(r) || col_off + n > self.dims.col_width(c) {
            return Err(Error::InvalidArgument(format!(
                "identity of size {n} does not fit block ({r:?}, {c:?})"
            )));
        }
        let (r0, c0) = (self.dims.row_offset(r) + row_off, self.dims.col_offset(c) + col_off);
        for i in 0..n {
            self.entries[(r0 + i, c0 + i)] = 1.0;
        }
        Ok(())
    }

    pub fn block_is_zero(&self, r: RowBlock, c: ColBlock) -> bool {
        self.entries
            .view(
                (self.dims.row_offset(r), self.dims.col_offset(c)),
                (self.dims.row_width(r), self.dims.col_width(c)),
            )
            .iter()
            .all(|v| *v == 0.0)
    }

    /// Reassembles a matrix from its sixteen blocks.
    pub fn from_blocks(dims: Dims, block: impl Fn(RowBlock, ColBlock) -> DMatrix<f64>) -> Result<Self> {
        let mut s = InterconnectionMatrix::zeros(dims);
        for r in RowBlock::ALL {
            for c in ColBlock::ALL {
                s.set_block(r, c, &block(r, c))?;
            }
        }
        Ok(s)
    }

    pub fn to_document(&self) -> MatrixDocument {
        let mut entries = Vec::with_capacity(self.entries.len());
        for r in 0..self.entries.nrows() {
            entries.extend(self.entries.row(r).iter().copied());
        }
        MatrixDocument {
            dims: self.dims,
            entries,
        }
    }

    pub fn from_document(doc: &MatrixDocument) -> Result<Self> {
        check_len(
            "interconnection entries",
            doc.dims.rows() * doc.dims.cols(),
            doc.entries.len(),
        )?;
        let entries = DMatrix::from_row_slice(doc.dims.rows(), doc.dims.cols(), &doc.entries);
        InterconnectionMatrix::new(doc.dims, entries)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MatrixDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// Serialized form: the dimension record plus row-major entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub dims: Dims,
    pub entries: Vec<f64>,
}
