//! Matrix and vector readers.
//!
//! Matrices come as Matrix Market (`coordinate` or `array`, `real` or
//! `integer`, `general` or `symmetric`) or as whitespace-delimited dense
//! text with one row per line. Vectors are one value per line; a Matrix
//! Market file with a single column is accepted too.

use std::fs;
use std::path::Path;

use lprefine::{Matrix, Vector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> ReadError {
    ReadError::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String, ReadError> {
    fs::read_to_string(path).map_err(|source| ReadError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_matrix(path: &Path) -> Result<Matrix, ReadError> {
    let text = read_text(path)?;
    parse_matrix(&text, &path.display().to_string())
}

pub fn read_vector(path: &Path) -> Result<Vector, ReadError> {
    let text = read_text(path)?;
    parse_vector(&text, &path.display().to_string())
}

pub fn parse_matrix(text: &str, name: &str) -> Result<Matrix, ReadError> {
    if text.trim_start().starts_with("%%MatrixMarket") {
        parse_market(text, name)
    } else {
        parse_dense(text, name)
    }
}

pub fn parse_vector(text: &str, name: &str) -> Result<Vector, ReadError> {
    let m = parse_matrix(text, name)?;
    if m.ncols() == 1 || m.nrows() == 0 {
        return Ok(m.column_iter().next().map(|c| c.into_owned()).unwrap_or_else(|| Vector::zeros(0)));
    }
    if m.nrows() == 1 {
        return Ok(m.row(0).transpose());
    }
    Err(parse_err(name, 0, format!("expected a vector, found a {}x{} matrix", m.nrows(), m.ncols())))
}

fn number(tok: &str, name: &str, line: usize) -> Result<f64, ReadError> {
    tok.parse::<f64>().map_err(|_| parse_err(name, line, format!("bad number `{tok}`")))
}

fn index(tok: &str, name: &str, line: usize) -> Result<usize, ReadError> {
    match tok.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(parse_err(name, line, format!("bad index `{tok}`"))),
    }
}

fn parse_dense(text: &str, name: &str) -> Result<Matrix, ReadError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line.split_whitespace().map(|t| number(t, name, i + 1)).collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(name, i + 1, format!("row has {} entries, expected {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

fn parse_market(text: &str, name: &str) -> Result<Matrix, ReadError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().expect("caller checked the banner");
    let head: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if head.len() != 5 || head[1] != "matrix" {
        return Err(parse_err(name, 1, "expected `%%MatrixMarket matrix <format> <field> <symmetry>`"));
    }
    let coordinate = match head[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => return Err(parse_err(name, 1, format!("unsupported format `{f}`"))),
    };
    if !matches!(head[3].as_str(), "real" | "integer" | "double") {
        return Err(parse_err(name, 1, format!("unsupported field `{}`", head[3])));
    }
    let symmetric = match head[4].as_str() {
        "general" => false,
        "symmetric" => true,
        s => return Err(parse_err(name, 1, format!("unsupported symmetry `{s}`"))),
    };
    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let Some((sl, size)) = body.next() else {
        return Err(parse_err(name, 1, "missing size line"));
    };
    let dims = size.split_whitespace().map(|t| t.parse::<usize>()).collect::<Result<Vec<_>, _>>().map_err(|_| parse_err(name, sl + 1, "bad size line"))?;
    let (rows, cols) = match (coordinate, dims.as_slice()) {
        (true, [r, c, _]) | (false, [r, c]) => (*r, *c),
        _ => return Err(parse_err(name, sl + 1, "bad size line")),
    };
    if symmetric && rows != cols {
        return Err(parse_err(name, sl + 1, "symmetric matrix must be square"));
    }
    let mut m = Matrix::zeros(rows, cols);
    if coordinate {
        let nnz = dims[2];
        let mut seen = 0;
        for (ln, line) in body {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(name, ln + 1, "expected `row col value`"));
            }
            let (i, j, v) = (index(f[0], name, ln + 1)?, index(f[1], name, ln + 1)?, number(f[2], name, ln + 1)?);
            if i >= rows || j >= cols {
                return Err(parse_err(name, ln + 1, format!("entry ({}, {}) outside {rows}x{cols}", i + 1, j + 1)));
            }
            m[(i, j)] += v;
            if symmetric && i != j {
                m[(j, i)] += v;
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(name, sl + 1, format!("declared {nnz} entries, found {seen}")));
        }
    } else {
        // Column-major; symmetric arrays list the lower triangle only.
        let slots: Vec<(usize, usize)> = (0..cols).flat_map(|j| (if symmetric { j } else { 0 }..rows).map(move |i| (i, j))).collect();
        let mut k = 0;
        for (ln, line) in body {
            for tok in line.split_whitespace() {
                let Some(&(i, j)) = slots.get(k) else {
                    return Err(parse_err(name, ln + 1, "too many entries"));
                };
                let v = number(tok, name, ln + 1)?;
                m[(i, j)] = v;
                if symmetric {
                    m[(j, i)] = v;
                }
                k += 1;
            }
        }
        if k != slots.len() {
            return Err(parse_err(name, sl + 1, format!("expected {} entries, found {k}", slots.len())));
        }
    }
    Ok(m)
}

/// Matrix Market `array` text for `m`, values at 17 significant digits.
pub fn write_market_array(m: &Matrix) -> String {
    let mut out = format!("%%MatrixMarket matrix array real general\n{} {}\n", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out.push_str(&format!("{:.16e}\n", m[(i, j)]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_general() {
        let t = "%%MatrixMarket matrix coordinate real general\n% note\n2 3 3\n1 1 1.5\n2 3 -2\n1 1 0.5\n";
        let m = parse_matrix(t, "t").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 0.0, -2.0]));
    }

    #[test]
    fn coordinate_symmetric() {
        let t = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 4\n2 1 1\n";
        let m = parse_matrix(t, "t").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn array_is_column_major() {
        let t = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
        let m = parse_matrix(t, "t").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        assert_eq!(parse_matrix(&write_market_array(&m), "t").unwrap(), m);
        let wide = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(parse_matrix(&write_market_array(&wide), "t").unwrap(), wide);
    }

    #[test]
    fn symmetric_array_lower_triangle() {
        let t = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n";
        let m = parse_matrix(t, "t").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
    }

    #[test]
    fn dense_and_vectors() {
        let m = parse_matrix("1 2\n3 4 # tail\n\n", "t").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(parse_vector("1\n2\n3\n", "v").unwrap(), Vector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(parse_vector("", "v").unwrap().len(), 0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_matrix("1 2\n3\n", "t").is_err());
        assert!(parse_matrix("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1\n", "t").is_err());
        assert!(parse_matrix("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1\n", "t").is_err());
        assert!(parse_matrix("%%MatrixMarket matrix coordinate real general\n1 1 1\n2 1 1\n", "t").is_err());
        assert!(parse_vector("1 2\n3 4\n", "v").is_err());
    }
}
