//! CSV readers for designs, responses and feature vectors.
//!
//! A design file is either dense (header row of feature ids, one row per
//! sample) or a sparse triplet list with header `row,col,value` and 0-based
//! indices. The header decides which.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use std::fs::File;
use std::path::Path;
use treeagg::{CountDesign, CscMatrix, FeatureTree};

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn number(s: &str, path: &Path, line: u64) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| anyhow!("{}:{}: invalid number '{}'", path.display(), line, s))?;
    if !v.is_finite() {
        bail!("{}:{}: non-finite value '{}'", path.display(), line, s);
    }
    Ok(v)
}

fn records(path: &Path, headers: bool) -> Result<(Option<csv::StringRecord>, Vec<(u64, csv::StringRecord)>)> {
    let mut rdr = reader(path, headers)?;
    let head = if headers {
        Some(rdr.headers().map_err(|e| anyhow!("{}:1: {}", path.display(), e))?.clone())
    } else {
        None
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow!("{}:{}: {}", path.display(), line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok((head, rows))
}

/// Design matrix plus the feature ids from a dense header (`None` for
/// triplet files).
pub struct Design {
    pub x: CountDesign,
    pub ids: Option<Vec<String>>,
}

/// `shape` gives the dimensions of a triplet file, whose trailing all-zero
/// rows and columns would otherwise be lost.
pub fn read_design(path: &Path, shape: Option<(usize, usize)>) -> Result<Design> {
    let (head, rows) = records(path, true)?;
    let head = head.expect("headers requested");
    let names: Vec<&str> = head.iter().collect();
    if names == ["row", "col", "value"] {
        let mut trip = Vec::with_capacity(rows.len());
        let (mut nr, mut nc) = (0, 0);
        for (line, rec) in &rows {
            if rec.len() != 3 {
                bail!("{}:{}: expected 3 fields, found {}", path.display(), line, rec.len());
            }
            let idx = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| anyhow!("{}:{}: invalid index '{}'", path.display(), line, s))
            };
            let (r, c) = (idx(&rec[0])?, idx(&rec[1])?);
            let v = number(&rec[2], path, *line)?;
            nr = nr.max(r + 1);
            nc = nc.max(c + 1);
            trip.push((r, c, v));
        }
        if let Some((n, p)) = shape {
            if nr > n || nc > p {
                bail!("{}: entries reach ({}, {}) outside a {}x{} design", path.display(), nr - 1, nc - 1, n, p);
            }
            (nr, nc) = (n, p);
        }
        let csc = CscMatrix::from_triplets(nr, nc, &trip).with_context(|| format!("{}", path.display()))?;
        let x = CountDesign::from_sparse(csc).with_context(|| format!("{}", path.display()))?;
        return Ok(Design { x, ids: None });
    }
    let p = names.len();
    if p == 0 || rows.is_empty() {
        bail!("{}: empty design", path.display());
    }
    let mut data = Vec::with_capacity(rows.len() * p);
    for (line, rec) in &rows {
        if rec.len() != p {
            bail!("{}:{}: expected {} fields, found {}", path.display(), line, p, rec.len());
        }
        for s in rec.iter() {
            data.push(number(s, path, *line)?);
        }
    }
    let m = DMatrix::from_row_slice(rows.len(), p, &data);
    let x = CountDesign::from_dense(m).with_context(|| format!("{}", path.display()))?;
    Ok(Design {
        x,
        ids: Some(names.iter().map(|s| s.to_string()).collect()),
    })
}

/// One value per line. A first line that is not a number is taken as a
/// header.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_numeric_rows(path)?;
    if m.ncols() != 1 {
        bail!("{}: expected a single column, found {}", path.display(), m.ncols());
    }
    Ok(m.column(0).into_owned())
}

/// Numeric table with an optional header row.
pub fn read_numeric_rows(path: &Path) -> Result<DMatrix<f64>> {
    let (_, rows) = records(path, false)?;
    let skip = usize::from(rows.first().is_some_and(|(_, r)| r.iter().any(|s| s.parse::<f64>().is_err())));
    let rows = &rows[skip..];
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let w = rows[0].1.len();
    let mut data = Vec::with_capacity(rows.len() * w);
    for (line, rec) in rows {
        if rec.len() != w {
            bail!("{}:{}: expected {} fields, found {}", path.display(), line, w, rec.len());
        }
        for s in rec.iter() {
            data.push(number(s, path, *line)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), w, &data))
}

/// Puts the design columns in the tree's feature order. Dense headers that
/// name exactly the leaf labels are matched by label; otherwise columns are
/// taken in file order.
pub fn align_to_tree(design: Design, tree: &FeatureTree) -> Result<CountDesign> {
    let p = tree.leaf_count();
    if design.x.ncols() != p {
        bail!("design has {} columns but the tree has {} leaves", design.x.ncols(), p);
    }
    let Some(ids) = design.ids else {
        return Ok(design.x);
    };
    let labels: Option<Vec<usize>> = ids.iter().map(|s| s.parse().ok()).collect();
    let Some(labels) = labels else {
        return Ok(design.x);
    };
    let mut perm = Vec::with_capacity(p);
    for j in 0..p {
        match labels.iter().position(|&l| l == tree.label(j)) {
            Some(c) => perm.push(c),
            None => return Ok(design.x),
        }
    }
    if perm.iter().enumerate().all(|(j, &c)| j == c) {
        return Ok(design.x);
    }
    Ok(design.x.column_subset(&perm))
}
