use std::io::{BufRead, Write};

use super::{parse_error, parse_number, tokens, IngestError};
use crate::numfmt::write_g17;
use crate::raster::{reorient, GridGeometry, GridRaster, Orientation};

/// The optional six-line header of an ASCII grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AsciiGridHeader {
    pub n_cols: usize,
    pub n_rows: usize,
    /// West edge (or centre of column 0 when `centered`).
    pub xll: f64,
    /// South edge (or centre of the bottom row when `centered`).
    pub yll: f64,
    pub cell_size: f64,
    pub nodata: Option<f64>,
    /// `xllcenter`/`yllcenter` rather than `xllcorner`/`yllcorner`.
    pub centered: bool,
}

impl AsciiGridHeader {
    pub fn geometry(&self) -> Result<GridGeometry, IngestError> {
        let (west, south) = if self.centered {
            (self.xll - self.cell_size / 2.0, self.yll - self.cell_size / 2.0)
        } else {
            (self.xll, self.yll)
        };
        Ok(GridGeometry::new(
            self.n_rows,
            self.n_cols,
            south,
            west,
            self.cell_size,
            Orientation::NorthToSouth,
        )?)
    }
}

#[derive(Default)]
struct HeaderFields {
    n_cols: Option<usize>,
    n_rows: Option<usize>,
    xll: Option<(f64, bool)>,
    yll: Option<(f64, bool)>,
    cell_size: Option<f64>,
    nodata: Option<f64>,
}

impl HeaderFields {
    fn apply(&mut self, line_no: u64, line: &[u8]) -> Result<(), IngestError> {
        let mut toks = tokens(line);
        let (_, key) = toks.next().expect("header line has a key");
        let (col, raw) = toks.next().ok_or_else(|| IngestError::Header {
            line: line_no,
            message: format!("missing value for {}", String::from_utf8_lossy(key)),
        })?;
        if toks.next().is_some() {
            return Err(IngestError::Header {
                line: line_no,
                message: "trailing fields after value".into(),
            });
        }
        let number = parse_number(raw).ok_or_else(|| parse_error(line_no, col, raw))?;
        let count = || -> Result<usize, IngestError> {
            if number >= 1.0 && number.fract() == 0.0 {
                Ok(number as usize)
            } else {
                Err(parse_error(line_no, col, raw))
            }
        };
        match key.to_ascii_lowercase().as_slice() {
            b"ncols" => self.n_cols = Some(count()?),
            b"nrows" => self.n_rows = Some(count()?),
            b"xllcorner" => self.xll = Some((number, false)),
            b"xllcenter" => self.xll = Some((number, true)),
            b"yllcorner" => self.yll = Some((number, false)),
            b"yllcenter" => self.yll = Some((number, true)),
            b"cellsize" => self.cell_size = Some(number),
            b"nodata_value" => self.nodata = Some(number),
            other => {
                return Err(IngestError::Header {
                    line: line_no,
                    message: format!("unknown key {:?}", String::from_utf8_lossy(other)),
                })
            }
        }
        Ok(())
    }

    fn finish(self, line_no: u64) -> Result<AsciiGridHeader, IngestError> {
        let missing = |what: &str| IngestError::Header {
            line: line_no,
            message: format!("header lacks {what}"),
        };
        let (xll, x_centered) = self.xll.ok_or_else(|| missing("xllcorner"))?;
        let (yll, y_centered) = self.yll.ok_or_else(|| missing("yllcorner"))?;
        if x_centered != y_centered {
            return Err(IngestError::Header {
                line: line_no,
                message: "mixed corner and center registration".into(),
            });
        }
        Ok(AsciiGridHeader {
            n_cols: self.n_cols.ok_or_else(|| missing("ncols"))?,
            n_rows: self.n_rows.ok_or_else(|| missing("nrows"))?,
            xll,
            yll,
            cell_size: self.cell_size.ok_or_else(|| missing("cellsize"))?,
            nodata: self.nodata,
            centered: x_centered,
        })
    }
}

/// Reads an ASCII grid, with or without the standard header.
///
/// Cells equal to the nodata sentinel (the header's `NODATA_value` when
/// present, otherwise `nodata`) and `NaN` cells are masked. A header, when
/// present, defines the geometry; headerless files need `expected_dims`
/// (rows, columns) and are placed as a global grid. The returned grid is
/// north-to-south, as the file is.
pub fn read_ascii_grid<R: BufRead>(
    mut reader: R,
    nodata: f64,
    expected_dims: Option<(usize, usize)>,
) -> Result<GridRaster, IngestError> {
    let mut buf = Vec::with_capacity(1 << 16);
    let mut line_no: u64 = 0;
    let mut header = HeaderFields::default();
    let mut saw_header = false;
    let mut header_end = 0;

    // Header lines start with a letter; the first line that does not is body.
    let first_body_line = loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break None;
        }
        line_no += 1;
        match buf.iter().find(|b| !b.is_ascii_whitespace()) {
            None => continue,
            Some(b) if b.is_ascii_alphabetic() && !starts_with_nan(&buf) => {
                header.apply(line_no, &buf)?;
                saw_header = true;
                header_end = line_no;
            }
            Some(_) => break Some(std::mem::take(&mut buf)),
        }
    };

    let (geometry, nodata) = if saw_header {
        let h = header.finish(header_end)?;
        let geometry = h.geometry().map_err(|e| IngestError::Header {
            line: header_end,
            message: e.to_string(),
        })?;
        (geometry, h.nodata.unwrap_or(nodata))
    } else {
        let (n_rows, n_cols) = expected_dims.ok_or(IngestError::MissingDimensions)?;
        (GridGeometry::global(n_rows, n_cols, Orientation::NorthToSouth)?, nodata)
    };
    let (n_rows, n_cols) = (geometry.n_rows(), geometry.n_cols());
    let total = n_rows * n_cols;
    let mut values = Vec::with_capacity(total);
    let mut mask = Vec::with_capacity(total);

    let mut pending = first_body_line;
    loop {
        let line = match pending.take() {
            Some(l) => l,
            None => {
                buf.clear();
                if reader.read_until(b'\n', &mut buf)? == 0 {
                    break;
                }
                line_no += 1;
                std::mem::take(&mut buf)
            }
        };
        let row_start = values.len();
        for (column, tok) in tokens(&line) {
            if values.len() == total {
                return Err(IngestError::CellCount {
                    line: line_no,
                    expected: total,
                    found: values.len() + tokens(&line).skip(values.len() - row_start).count(),
                });
            }
            let v = parse_number(tok).ok_or_else(|| parse_error(line_no, column, tok))?;
            let valid = v != nodata && !v.is_nan();
            values.push(if valid { v } else { 0.0 });
            mask.push(valid);
        }
        let found = values.len() - row_start;
        if found != 0 && found != n_cols {
            return Err(IngestError::RaggedRow {
                line: line_no,
                expected: n_cols,
                found,
            });
        }
        buf = line;
    }
    if values.len() != total {
        return Err(IngestError::CellCount {
            line: line_no,
            expected: total,
            found: values.len(),
        });
    }
    Ok(GridRaster::new(geometry, values, mask)?)
}

fn starts_with_nan(line: &[u8]) -> bool {
    tokens(line)
        .next()
        .map(|(_, t)| t.eq_ignore_ascii_case(b"nan"))
        .unwrap_or(false)
}

/// Parses an in-memory ASCII grid. See [`read_ascii_grid`].
pub fn parse_ascii_grid(
    bytes: &[u8],
    nodata: f64,
    expected_dims: Option<(usize, usize)>,
) -> Result<GridRaster, IngestError> {
    read_ascii_grid(bytes, nodata, expected_dims)
}

/// Writes `grid` with a full header, north row first, masked cells as
/// `nodata`, values at 17 significant digits.
pub fn write_ascii_grid<W: Write>(mut out: W, grid: &GridRaster, nodata: f64) -> std::io::Result<()> {
    let grid = reorient(grid, Orientation::NorthToSouth);
    let g = grid.geometry();
    let mut line = String::with_capacity(64);
    for (key, v) in [
        ("ncols", g.n_cols() as f64),
        ("nrows", g.n_rows() as f64),
        ("xllcorner", g.west()),
        ("yllcorner", g.south()),
        ("cellsize", g.cell_size()),
        ("NODATA_value", nodata),
    ] {
        line.clear();
        line.push_str(key);
        line.push(' ');
        write_g17(&mut line, v);
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    let nodata_text = crate::numfmt::g17(nodata);
    for r in 0..g.n_rows() {
        line.clear();
        for c in 0..g.n_cols() {
            if c > 0 {
                line.push(' ');
            }
            match grid.get(r, c) {
                Some(v) => write_g17(&mut line, v),
                None => line.push_str(&nodata_text),
            }
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}
