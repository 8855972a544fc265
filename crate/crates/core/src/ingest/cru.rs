use std::io::{BufRead, Write};

use super::{parse_error, parse_number, tokens, IngestError, CRU_NODATA};
use crate::numfmt::write_g17;
use crate::raster::{GridGeometry, GridRaster, MonthlyArchive, Orientation};
use crate::Year;

/// Width of one field in fixed-layout `.dat` files.
const FIELD_WIDTH: usize = 5;

/// Shape of a CRU-style `.dat` archive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CruLayout {
    pub n_lat: usize,
    pub n_cols: usize,
    pub start_year: Year,
    pub n_years: usize,
    pub nodata: f64,
}

impl CruLayout {
    pub fn new(n_lat: usize, n_cols: usize, start_year: Year, n_years: usize) -> Self {
        Self {
            n_lat,
            n_cols,
            start_year,
            n_years,
            nodata: CRU_NODATA,
        }
    }

    /// Number of data lines: one per latitude band, month and year.
    pub fn n_lines(&self) -> usize {
        self.n_lat * 12 * self.n_years
    }

    /// Global south-to-north grid; band 0 is the southernmost.
    pub fn geometry(&self) -> Result<GridGeometry, IngestError> {
        Ok(GridGeometry::global(self.n_lat, self.n_cols, Orientation::SouthToNorth)?)
    }
}

/// One month of an archive.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthGrid {
    pub year: Year,
    /// 1 = January.
    pub month: u32,
    pub grid: GridRaster,
}

/// Streams a `.dat` archive one monthly grid at a time.
///
/// Line `l + m·n_lat + y·n_lat·12` (all 0-based) holds latitude band `l`
/// of month `m` of year `y`. Values stay in the file's units (0.1 °C).
pub struct CruReader<R> {
    reader: R,
    layout: CruLayout,
    geometry: GridGeometry,
    line_no: u64,
    rows_read: usize,
    buf: Vec<u8>,
    finished: bool,
}

impl<R: BufRead> CruReader<R> {
    pub fn new(reader: R, layout: CruLayout) -> Result<Self, IngestError> {
        let geometry = layout.geometry()?;
        Ok(Self {
            reader,
            layout,
            geometry,
            line_no: 0,
            rows_read: 0,
            buf: Vec::with_capacity(FIELD_WIDTH * layout.n_cols + 2),
            finished: false,
        })
    }

    pub fn layout(&self) -> &CruLayout {
        &self.layout
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    /// Next non-blank line, or `None` at end of input.
    fn next_line(&mut self) -> Result<bool, IngestError> {
        loop {
            self.buf.clear();
            if self.reader.read_until(b'\n', &mut self.buf)? == 0 {
                return Ok(false);
            }
            self.line_no += 1;
            if self.buf.iter().any(|b| !b.is_ascii_whitespace()) {
                return Ok(true);
            }
        }
    }

    fn parse_row(&self, values: &mut [f64], mask: &mut [bool]) -> Result<(), IngestError> {
        let n_cols = self.layout.n_cols;
        let nodata = self.layout.nodata;
        let mut count = 0usize;
        for (column, tok) in tokens(&self.buf) {
            if count == n_cols {
                count += 1;
                break;
            }
            match parse_number(tok) {
                Some(v) => {
                    let valid = v != nodata && !v.is_nan();
                    values[count] = if valid { v } else { 0.0 };
                    mask[count] = valid;
                }
                None => return self.parse_fixed_width(values, mask, (column, tok)),
            }
            count += 1;
        }
        if count == n_cols {
            return Ok(());
        }
        // Adjacent fields may touch in fixed-width files ("-1234-1234").
        let body = trim_newline(&self.buf);
        if body.len() == FIELD_WIDTH * n_cols {
            return self.parse_fixed_width(values, mask, (1, body));
        }
        Err(IngestError::RaggedRow {
            line: self.line_no,
            expected: n_cols,
            found: tokens(&self.buf).count(),
        })
    }

    fn parse_fixed_width(
        &self,
        values: &mut [f64],
        mask: &mut [bool],
        first_bad: (usize, &[u8]),
    ) -> Result<(), IngestError> {
        let n_cols = self.layout.n_cols;
        let body = trim_newline(&self.buf);
        if body.len() != FIELD_WIDTH * n_cols {
            return Err(parse_error(self.line_no, first_bad.0, first_bad.1));
        }
        for (i, field) in body.chunks(FIELD_WIDTH).enumerate() {
            let lead = field.iter().take_while(|b| b.is_ascii_whitespace()).count();
            let column = i * FIELD_WIDTH + lead + 1;
            let tok = field.trim_ascii();
            let v = parse_number(tok).ok_or_else(|| parse_error(self.line_no, column, tok))?;
            let valid = v != self.layout.nodata && !v.is_nan();
            values[i] = if valid { v } else { 0.0 };
            mask[i] = valid;
        }
        Ok(())
    }

    fn read_month(&mut self) -> Result<Option<MonthGrid>, IngestError> {
        let expected = self.layout.n_lines();
        if self.rows_read == expected {
            // Anything but blank lines after the last expected row is an error.
            let mut extra = 0;
            while self.next_line()? {
                extra += 1;
            }
            if extra > 0 {
                return Err(IngestError::RowCount {
                    line: self.line_no,
                    expected,
                    found: expected + extra,
                });
            }
            return Ok(None);
        }
        let month_index = self.rows_read / self.layout.n_lat;
        let year = self.layout.start_year + (month_index / 12) as Year;
        let month = (month_index % 12) as u32 + 1;
        let n = self.geometry.len();
        let mut values = vec![0.0; n];
        let mut mask = vec![false; n];
        let n_cols = self.layout.n_cols;
        for band in 0..self.layout.n_lat {
            if !self.next_line()? {
                return Err(IngestError::RowCount {
                    line: self.line_no,
                    expected,
                    found: self.rows_read,
                });
            }
            let span = band * n_cols..(band + 1) * n_cols;
            self.parse_row(&mut values[span.clone()], &mut mask[span])?;
            self.rows_read += 1;
        }
        Ok(Some(MonthGrid {
            year,
            month,
            grid: GridRaster::new(self.geometry, values, mask)?,
        }))
    }
}

impl<R: BufRead> Iterator for CruReader<R> {
    type Item = Result<MonthGrid, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.read_month() {
            Ok(Some(m)) => Some(Ok(m)),
            Ok(None) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

fn trim_newline(line: &[u8]) -> &[u8] {
    let mut end = line.len();
    while end > 0 && (line[end - 1] == b'\n' || line[end - 1] == b'\r') {
        end -= 1;
    }
    &line[..end]
}

/// Reads a whole archive into memory.
pub fn read_cru_dat<R: BufRead>(reader: R, layout: CruLayout) -> Result<MonthlyArchive, IngestError> {
    let grids = CruReader::new(reader, layout)?
        .map(|m| m.map(|m| m.grid))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonthlyArchive::new(layout.start_year, layout.n_years, grids)?)
}

/// Parses an in-memory archive. See [`CruReader`].
pub fn parse_cru_dat(
    bytes: &[u8],
    n_lat: usize,
    n_cols: usize,
    start_year: Year,
    n_years: usize,
) -> Result<MonthlyArchive, IngestError> {
    read_cru_dat(bytes, CruLayout::new(n_lat, n_cols, start_year, n_years))
}

/// Appends one field right-aligned in a 5-wide slot, always leaving at
/// least one space before it.
pub(crate) fn push_field(line: &mut Vec<u8>, text: &[u8]) {
    let pad = if text.len() < FIELD_WIDTH { FIELD_WIDTH - text.len() } else { 1 };
    line.extend(std::iter::repeat_n(b' ', pad));
    line.extend_from_slice(text);
}

/// Writes one monthly grid as `n_lat` lines, southern band first.
pub fn write_month<W: Write>(out: &mut W, grid: &GridRaster, nodata: f64) -> std::io::Result<()> {
    let grid = crate::raster::reorient(grid, Orientation::SouthToNorth);
    let mut line = Vec::with_capacity(FIELD_WIDTH * grid.n_cols() + 1);
    let mut text = String::with_capacity(24);
    for r in 0..grid.n_rows() {
        line.clear();
        for c in 0..grid.n_cols() {
            text.clear();
            write_g17(&mut text, grid.get(r, c).unwrap_or(nodata));
            push_field(&mut line, text.as_bytes());
        }
        line.push(b'\n');
        out.write_all(&line)?;
    }
    Ok(())
}

/// Writes an archive in the `.dat` layout; masked cells become `nodata`.
pub fn write_cru_dat<W: Write>(mut out: W, archive: &MonthlyArchive, nodata: f64) -> std::io::Result<()> {
    for g in archive.grids() {
        write_month(&mut out, g, nodata)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The value the test generator puts at (year, month, band, col), in 0.1 °C.
    fn generator(y: usize, m: usize, l: usize, c: usize) -> i64 {
        (y * 1000 + m * 50 + l * 7 + c) as i64 - 300
    }

    fn synthetic_file(n_lat: usize, n_cols: usize, n_years: usize) -> String {
        let mut s = String::new();
        for y in 0..n_years {
            for m in 0..12 {
                for l in 0..n_lat {
                    for c in 0..n_cols {
                        s.push_str(&format!("{:>5}", generator(y, m, l, c)));
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    #[test]
    fn one_year_two_bands_three_columns() {
        let archive = parse_cru_dat(synthetic_file(2, 3, 1).as_bytes(), 2, 3, 1901, 1).unwrap();
        assert_eq!(archive.grids().len(), 12);
        for m in 0..12 {
            let g = archive.month(1901, m as u32 + 1).unwrap();
            assert_eq!(g.orientation(), Orientation::SouthToNorth);
            for l in 0..2 {
                for c in 0..3 {
                    assert_eq!(g.get(l, c), Some(generator(0, m, l, c) as f64));
                }
            }
        }
    }

    #[test]
    fn index_arithmetic_matches_triple_loop() {
        let (n_lat, n_cols, n_years) = (3, 4, 2);
        let text = synthetic_file(n_lat, n_cols, n_years);
        let archive = parse_cru_dat(text.as_bytes(), n_lat, n_cols, 1990, n_years).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        for y in 1..=n_years {
            for m in 1..=12 {
                for l in 1..=n_lat {
                    let a_ind = l + (m - 1) * n_lat + (y - 1) * n_lat * 12;
                    let fields: Vec<f64> = lines[a_ind - 1]
                        .split_whitespace()
                        .map(|t| t.parse().unwrap())
                        .collect();
                    let g = archive.month(1990 + y as Year - 1, m as u32).unwrap();
                    for (c, v) in fields.iter().enumerate() {
                        assert_eq!(g.get(l - 1, c), Some(*v));
                    }
                }
            }
        }
    }

    #[test]
    fn sentinel_is_masked_in_place() {
        let mut lines: Vec<String> = synthetic_file(2, 3, 2).lines().map(String::from).collect();
        // year 2, month 4, band 1, column 2 (all 0-based: y=1, m=3, l=1, c=2)
        let idx = 1 + 3 * 2 + 2 * 12;
        let mut fields: Vec<String> = lines[idx].split_whitespace().map(String::from).collect();
        fields[2] = "-999".into();
        lines[idx] = fields.iter().map(|f| format!("{f:>5}")).collect();
        let text = lines.join("\n");
        let archive = parse_cru_dat(text.as_bytes(), 2, 3, 1901, 2).unwrap();
        let g = archive.month(1902, 4).unwrap();
        assert_eq!(g.get(1, 2), None);
        assert_eq!(g.valid_count(), 5);
        assert_eq!(archive.grids().iter().map(|g| g.valid_count()).sum::<usize>(), 24 * 6 - 1);
    }

    #[test]
    fn truncated_file_names_expected_and_found() {
        let text = synthetic_file(2, 3, 1);
        let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        match parse_cru_dat(truncated.as_bytes(), 2, 3, 1901, 1) {
            Err(IngestError::RowCount { expected, found, .. }) => assert_eq!((expected, found), (24, 20)),
            other => panic!("{other:?}"),
        }
        let long = format!("{text}{}\n", "    1    2    3");
        assert!(matches!(
            parse_cru_dat(long.as_bytes(), 2, 3, 1901, 1),
            Err(IngestError::RowCount { expected: 24, found: 25, line: 25 })
        ));
    }

    #[test]
    fn field_errors() {
        let mut lines: Vec<String> = synthetic_file(2, 3, 1).lines().map(String::from).collect();
        lines[5] = "    1    2".into();
        let text = lines.join("\n");
        assert!(matches!(
            parse_cru_dat(text.as_bytes(), 2, 3, 1901, 1),
            Err(IngestError::RaggedRow { line: 6, expected: 3, found: 2 })
        ));
        lines[5] = "    1   x2    3".into();
        let text = lines.join("\n");
        assert!(matches!(
            parse_cru_dat(text.as_bytes(), 2, 3, 1901, 1),
            Err(IngestError::Parse { line: 6, column: 9, .. })
        ));
    }

    #[test]
    fn touching_fixed_width_fields() {
        let mut text = String::new();
        for _ in 0..12 {
            text.push_str("-1234-1234 -999\n");
        }
        let a = parse_cru_dat(text.as_bytes(), 1, 3, 2000, 1).unwrap();
        let g = &a.grids()[0];
        assert_eq!((g.get(0, 0), g.get(0, 1), g.get(0, 2)), (Some(-1234.0), Some(-1234.0), None));
    }

    #[test]
    fn write_then_read_is_identity() {
        let text = synthetic_file(2, 3, 2);
        let a = parse_cru_dat(text.as_bytes(), 2, 3, 1901, 2).unwrap();
        let mut out = Vec::new();
        write_cru_dat(&mut out, &a, CRU_NODATA).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        assert_eq!(parse_cru_dat(&out, 2, 3, 1901, 2).unwrap(), a);
    }
}
