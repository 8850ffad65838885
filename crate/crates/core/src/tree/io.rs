//! Parent-list CSV: header `node_id,parent_id` with an optional `height`
//! column. The root has an empty `parent_id`; leaves have an empty height.

use super::{BuildOptions, FeatureTree, ParentEntry};
use crate::error::{Error, Result};
use std::io::{Read, Write};

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads a parent list. Line numbers in errors are 1-based file lines.
pub fn read_tree_csv<R: Read>(reader: R, opts: BuildOptions) -> Result<FeatureTree> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("node_id").ok_or_else(|| parse_err(1, "missing column 'node_id'"))?;
    let parent_col = col("parent_id").ok_or_else(|| parse_err(1, "missing column 'parent_id'"))?;
    let height_col = col("height");

    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: usize = rec[id_col]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid node_id '{}'", &rec[id_col])))?;
        let parent = match &rec[parent_col] {
            "" => None,
            s => Some(
                s.parse()
                    .map_err(|_| parse_err(line, format!("invalid parent_id '{}'", s)))?,
            ),
        };
        let height = match height_col.map(|c| &rec[c]) {
            None | Some("") => None,
            Some(s) => {
                let h: f64 = s
                    .parse()
                    .map_err(|_| parse_err(line, format!("invalid height '{}'", s)))?;
                if !h.is_finite() {
                    return Err(parse_err(line, "height must be finite"));
                }
                Some(h)
            }
        };
        entries.push(ParentEntry { id, parent, height });
    }
    FeatureTree::from_parent_list(&entries, opts)
}

/// Writes the tree in canonical node order. The `height` column is emitted
/// only when some node carries a height.
pub fn write_tree_csv<W: Write>(tree: &FeatureTree, mut out: W) -> Result<()> {
    let entries = tree.to_parent_list();
    let with_height = entries.iter().any(|e| e.height.is_some());
    if with_height {
        writeln!(out, "node_id,parent_id,height")?;
    } else {
        writeln!(out, "node_id,parent_id")?;
    }
    for e in &entries {
        let parent = e.parent.map(|p| p.to_string()).unwrap_or_default();
        if with_height {
            let h = e.height.map(|h| h.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{}", e.id, parent, h)?;
        } else {
            writeln!(out, "{},{}", e.id, parent)?;
        }
    }
    Ok(())
}
