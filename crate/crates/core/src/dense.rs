//! Dense column-major storage and the elementary kernels every factorization
//! builds on. All reductions accumulate strictly left to right so results are
//! reproducible bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix stored column by column: element `(i, j)` lives at
/// `data[j * rows + i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix. Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds a matrix from column-major values.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} values supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of rows (convenient for literals).
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if m == 0 || n == 0 {
            return Err(Error::dim("empty row list"));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dim("ragged rows"));
        }
        let mut out = Self::zeros(m, n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out.set(i, j, v);
            }
        }
        Ok(out)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                out.set(i, j, f(i, j));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let rows = self.rows;
        &mut self.data[j * rows..(j + 1) * rows]
    }

    /// Strided view of column `j` starting at row `start`.
    pub fn col_view(&self, j: usize, start: usize) -> VectorView<'_> {
        VectorView {
            data: &self.data,
            offset: j * self.rows + start,
            stride: 1,
            len: self.rows - start,
        }
    }

    /// Strided view of row `i`.
    pub fn row_view(&self, i: usize) -> VectorView<'_> {
        VectorView {
            data: &self.data,
            offset: i,
            stride: self.rows,
            len: self.cols,
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Frobenius norm via the overflow-safe `nrm2` kernel.
    pub fn frobenius_norm(&self) -> f64 {
        nrm2(&VectorView::from_slice(&self.data))
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dim(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Copy of the rectangular block with top-left corner `(r0, c0)`.
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self.get(r0 + i, c0 + j))
    }
}

/// Read-only strided window over a buffer: element `k` is
/// `data[offset + k * stride]`.
#[derive(Debug, Clone, Copy)]
pub struct VectorView<'a> {
    data: &'a [f64],
    offset: usize,
    stride: usize,
    len: usize,
}

impl<'a> VectorView<'a> {
    pub fn new(data: &'a [f64], offset: usize, stride: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::dim("vector view must not be empty"));
        }
        if stride == 0 {
            return Err(Error::dim("vector view stride must be positive"));
        }
        let last = offset + (len - 1) * stride;
        if last >= data.len() {
            return Err(Error::dim(format!(
                "view reaches index {last} of a buffer of length {}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            offset,
            stride,
            len,
        })
    }

    /// Contiguous view of a whole slice. Panics on an empty slice.
    pub fn from_slice(data: &'a [f64]) -> Self {
        assert!(!data.is_empty(), "vector view must not be empty");
        Self {
            data,
            offset: 0,
            stride: 1,
            len: data.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        debug_assert!(k < self.len);
        self.data[self.offset + k * self.stride]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.get(k))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }
}

/// Left-to-right dot product of two contiguous slices of equal length.
#[inline]
pub(crate) fn dot_slices(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = x[0] * y[0];
    for k in 1..x.len() {
        acc += x[k] * y[k];
    }
    acc
}

/// `sum x[k] * y[k]`, accumulated in index order.
pub fn dot(x: &VectorView, y: &VectorView) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "dot of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut acc = x.get(0) * y.get(0);
    for k in 1..x.len() {
        acc += x.get(k) * y.get(k);
    }
    Ok(acc)
}

/// Euclidean norm with max-abs rescaling so that large entries never overflow.
pub fn nrm2(x: &VectorView) -> f64 {
    nrm2_iter(x.len(), |k| x.get(k))
}

pub(crate) fn nrm2_slice(x: &[f64]) -> f64 {
    nrm2_iter(x.len(), |k| x[k])
}

fn nrm2_iter(len: usize, at: impl Fn(usize) -> f64) -> f64 {
    let mut scale = 0.0_f64;
    for k in 0..len {
        scale = scale.max(at(k).abs());
    }
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let inv = 1.0 / scale;
    let mut sum = 0.0;
    if inv.is_finite() {
        for k in 0..len {
            let s = at(k) * inv;
            sum += s * s;
        }
    } else {
        for k in 0..len {
            let s = at(k) / scale;
            sum += s * s;
        }
    }
    scale * sum.sqrt()
}

/// `A x` or `A^T x`; each output element is accumulated in index order.
pub fn gemv(a: &Matrix, x: &VectorView, transpose: bool) -> Result<Vec<f64>> {
    let (m, n) = a.shape();
    if transpose {
        if x.len() != m {
            return Err(Error::dim(format!("A^T x with A {m}x{n} and x of length {}", x.len())));
        }
        let xs = x.to_vec();
        Ok((0..n).map(|j| dot_slices(a.col(j), &xs)).collect())
    } else {
        if x.len() != n {
            return Err(Error::dim(format!("A x with A {m}x{n} and x of length {}", x.len())));
        }
        let x0 = x.get(0);
        let mut y: Vec<f64> = a.col(0).iter().map(|&v| v * x0).collect();
        for j in 1..n {
            let xj = x.get(j);
            for (yi, &aij) in y.iter_mut().zip(a.col(j)) {
                *yi += aij * xj;
            }
        }
        Ok(y)
    }
}

/// `A B`, or `C + A B` when `c` is given. Every output element accumulates its
/// `k` terms in index order, starting from `C(i, j)` when accumulating.
pub fn gemm(a: &Matrix, b: &Matrix, c: Option<&Matrix>) -> Result<Matrix> {
    let (m, k) = a.shape();
    let (kb, n) = b.shape();
    if k != kb {
        return Err(Error::dim(format!(
            "gemm inner dimensions {m}x{k} * {kb}x{n}"
        )));
    }
    if let Some(c) = c {
        if c.shape() != (m, n) {
            return Err(Error::dim(format!(
                "gemm accumulator is {:?}, expected ({m}, {n})",
                c.shape()
            )));
        }
    }
    let mut out = match c {
        Some(c) => c.clone(),
        None => Matrix::zeros(m, n),
    };
    for j in 0..n {
        let bcol = b.col(j);
        let ocol = &mut out.data[j * m..(j + 1) * m];
        let start = if c.is_none() {
            let b0 = bcol[0];
            for (o, &av) in ocol.iter_mut().zip(a.col(0)) {
                *o = av * b0;
            }
            1
        } else {
            0
        };
        for (p, &bp) in bcol.iter().enumerate().skip(start) {
            for (o, &av) in ocol.iter_mut().zip(a.col(p)) {
                *o += av * bp;
            }
        }
    }
    Ok(out)
}

/// Back substitution for `R x = b` with `R` upper triangular.
pub fn solve_upper_triangular(r: &Matrix, b: &VectorView) -> Result<Vec<f64>> {
    let n = r.rows();
    if !r.is_square() {
        return Err(Error::dim(format!("triangular solve needs a square matrix, got {:?}", r.shape())));
    }
    if b.len() != n {
        return Err(Error::dim(format!("right-hand side length {} for order {n}", b.len())));
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let d = r.get(i, i);
        if d == 0.0 {
            return Err(Error::Singular { index: i });
        }
        let mut s = b.get(i);
        for (j, &xj) in x.iter().enumerate().skip(i + 1) {
            s -= r.get(i, j) * xj;
        }
        x[i] = s / d;
    }
    Ok(x)
}

const MM_HEADER: &str = "%%MatrixMarket matrix array real general";

/// Parses a dense Matrix Market "array real general" document.
pub fn parse_matrix_market(text: &str) -> Result<Matrix> {
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    let expected = ["%%matrixmarket", "matrix", "array", "real", "general"];
    if tokens.len() != expected.len() || tokens.iter().zip(expected).any(|(t, e)| t != e) {
        return Err(parse_err(
            1,
            format!("unsupported header {header:?}; expected {MM_HEADER:?}"),
        ));
    }

    let mut size: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    let mut last_line = 1;
    for (lineno, line) in lines {
        last_line = lineno;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        match size {
            None => {
                let dims: Vec<&str> = trimmed.split_whitespace().collect();
                if dims.len() != 2 {
                    return Err(parse_err(lineno, format!("expected \"rows cols\", found {trimmed:?}")));
                }
                let parse_dim = |s: &str| {
                    s.parse::<usize>()
                        .ok()
                        .filter(|&d| d > 0)
                        .ok_or_else(|| parse_err(lineno, format!("invalid dimension {s:?}")))
                };
                let dims = (parse_dim(dims[0])?, parse_dim(dims[1])?);
                values.reserve(dims.0 * dims.1);
                size = Some(dims);
            }
            Some((m, n)) => {
                for tok in trimmed.split_whitespace() {
                    if values.len() == m * n {
                        return Err(parse_err(lineno, format!("more than {} values", m * n)));
                    }
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("non-numeric token {tok:?}")))?;
                    values.push(v);
                }
            }
        }
    }
    let (m, n) = size.ok_or_else(|| parse_err(last_line, "missing size line".into()))?;
    if values.len() != m * n {
        return Err(parse_err(
            last_line,
            format!("expected {} values, found {}", m * n, values.len()),
        ));
    }
    Matrix::from_col_major(m, n, values)
}

/// Renders a matrix as a Matrix Market "array real general" document using
/// shortest round-trip decimal formatting.
pub fn format_matrix_market(m: &Matrix) -> String {
    let mut out = String::with_capacity(24 * m.data.len() + 64);
    out.push_str(MM_HEADER);
    out.push('\n');
    let _ = writeln!(out, "{} {}", m.rows, m.cols);
    for v in &m.data {
        let _ = writeln!(out, "{v:e}");
    }
    out
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text)
}

pub fn write_matrix_market(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix_market(m)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> VectorView<'_> {
        VectorView::from_slice(x)
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&v(&[1.0, 0.0, 0.0]), &v(&[5.0, 7.0, 9.0])).unwrap(), 5.0);
        assert_eq!(dot(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), 0.0);
        assert_eq!(dot(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap(), 32.0);
        assert!(matches!(
            dot(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn nrm2_examples() {
        assert_eq!(nrm2(&v(&[3.0, 4.0])), 5.0);
        assert_eq!(nrm2(&v(&[0.0, 0.0, 0.0])), 0.0);
        let big = nrm2(&v(&[1e200, 1e200]));
        let expected = 1e200 * 2f64.sqrt();
        assert!((big - expected).abs() <= 4.0 * f64::EPSILON * expected);
    }

    #[test]
    fn nrm2_tiny_scale_does_not_overflow_reciprocal() {
        let x = [1e-310, -3e-310];
        let got = nrm2(&v(&x));
        let expected = 1e-310 * 10f64.sqrt();
        assert!((got - expected).abs() <= 1e-6 * expected);
    }

    #[test]
    fn strided_view_bounds() {
        let buf = [1.0, 2.0, 3.0, 4.0, 5.0];
        let view = VectorView::new(&buf, 1, 2, 2).unwrap();
        assert_eq!(view.to_vec(), vec![2.0, 4.0]);
        assert!(VectorView::new(&buf, 1, 2, 3).is_err());
        assert!(VectorView::new(&buf, 0, 1, 0).is_err());
    }

    #[test]
    fn gemv_examples() {
        let i3 = Matrix::identity(3);
        assert_eq!(gemv(&i3, &v(&[1.0, 2.0, 3.0]), false).unwrap(), vec![1.0, 2.0, 3.0]);
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(gemv(&a, &v(&[1.0, 1.0]), false).unwrap(), vec![3.0, 7.0]);
        assert_eq!(gemv(&a, &v(&[1.0, 1.0]), true).unwrap(), vec![4.0, 6.0]);
        assert!(gemv(&a, &v(&[1.0]), false).is_err());
    }

    #[test]
    fn gemm_examples() {
        let b = Matrix::from_rows(&[&[1.5, -2.0], &[0.25, 7.0]]).unwrap();
        assert_eq!(gemm(&Matrix::identity(2), &b, None).unwrap(), b);
        let ones = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let twos = Matrix::from_rows(&[&[2.0, 2.0], &[2.0, 2.0]]).unwrap();
        assert_eq!(gemm(&ones, &ones, None).unwrap(), twos);
        let s = |x: f64| Matrix::from_rows(&[&[x]]).unwrap();
        assert_eq!(gemm(&s(2.0), &s(3.0), Some(&s(1.0))).unwrap(), s(7.0));
        assert!(gemm(&ones, &s(1.0), None).is_err());
    }

    #[test]
    fn triangular_solve_examples() {
        let x = solve_upper_triangular(&Matrix::identity(3), &v(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
        let r = Matrix::from_rows(&[&[2.0, 1.0], &[0.0, 4.0]]).unwrap();
        assert_eq!(solve_upper_triangular(&r, &v(&[4.0, 8.0])).unwrap(), vec![1.0, 2.0]);
        let sing = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(
            solve_upper_triangular(&sing, &v(&[1.0, 1.0])),
            Err(Error::Singular { index: 1 })
        ));
    }

    #[test]
    fn matrix_market_format() {
        let text = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
        let m = parse_matrix_market(text).unwrap();
        assert_eq!(m, Matrix::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]]).unwrap());

        let short = "%%MatrixMarket matrix array real general\n3 1\n1\n2\n";
        assert!(matches!(parse_matrix_market(short), Err(Error::Parse { .. })));

        let bad = "%%MatrixMarket matrix array real general\n% c\n2 1\n1\nx\n";
        assert!(matches!(
            parse_matrix_market(bad),
            Err(Error::Parse { line: 5, .. })
        ));

        let coord = "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2\n";
        assert!(matches!(
            parse_matrix_market(coord),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn matrix_market_round_trip_is_exact() {
        let m = Matrix::from_col_major(
            3,
            2,
            vec![0.1, -1.0 / 3.0, 1e-300, 6.02e23, f64::MIN_POSITIVE, -0.0],
        )
        .unwrap();
        let back = parse_matrix_market(&format_matrix_market(&m)).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
