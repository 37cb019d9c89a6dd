//! Grid-map CSV: one row per node in index order (lexicographic in the
//! integer coordinates, central coordinate fastest).
//!
//! ```text
//! index,x1,y1,t,boundary,v1[,v2...]    Euclidean targets
//! index,x1,y1,t,boundary,leg,radius    spider targets (leg 0 is the hub)
//! ```

use std::sync::Arc;

use hlab_core::cat0::{TargetPoint, TargetSpace};
use hlab_core::solver::{GridMap, Lattice};

use crate::run::{csv_body, encode_point, fmt};
use crate::CliError;

fn header(lattice: &Lattice, space: TargetSpace) -> Vec<String> {
    let n = lattice.n();
    let mut h = vec!["index".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=n).map(|i| format!("y{i}")));
    h.extend(["t".to_string(), "boundary".to_string()]);
    match space {
        TargetSpace::Euclidean { dim } => h.extend((1..=dim).map(|k| format!("v{k}"))),
        TargetSpace::Spider { .. } => h.extend(["leg".to_string(), "radius".to_string()]),
    }
    h
}

pub fn write_gridmap(u: &GridMap) -> String {
    let lat = u.lattice();
    let rows: Vec<Vec<String>> = (0..lat.len())
        .map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(lat.point(i).coords().iter().map(|v| fmt(*v)));
            row.push(u8::from(lat.is_boundary(i)).to_string());
            row.extend(encode_point(u.space(), &u.get(i)));
            row
        })
        .collect();
    csv_body(&header(lat, u.space()), &rows)
}

/// Reads a grid map written for the same lattice and target.
pub fn read_gridmap(text: &str, lattice: Arc<Lattice>, space: TargetSpace) -> Result<GridMap, CliError> {
    let bad = |m: String| CliError::Validation(format!("boundary.table: {m}"));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let want = header(&lattice, space);
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if got != want {
        return Err(bad(format!("header {got:?} does not match {want:?}")));
    }
    let mut map = GridMap::new(Arc::clone(&lattice), space)?;
    let dim = 2 * lattice.n() + 1;
    let mut seen = 0usize;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| -> Result<f64, CliError> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: column {k}: {e}", line + 2)))
        };
        let i: usize = rec[0].parse().map_err(|e| bad(format!("row {}: index: {e}", line + 2)))?;
        if i != seen || i >= lattice.len() {
            return Err(bad(format!("row {}: expected node {seen}", line + 2)));
        }
        let p = lattice.point(i);
        for k in 0..dim {
            if (num(1 + k)? - p.coords()[k]).abs() > 1e-12 {
                return Err(bad(format!("row {}: coordinates do not match the lattice", line + 2)));
            }
        }
        let base = dim + 2;
        let v = match space {
            TargetSpace::Euclidean { dim: d } => {
                TargetPoint::euclidean(&(0..d).map(|k| num(base + k)).collect::<Result<Vec<_>, _>>()?)
            }
            TargetSpace::Spider { .. } => {
                let leg: usize = rec[base].parse().map_err(|e| bad(format!("row {}: leg: {e}", line + 2)))?;
                TargetPoint::spider(leg, num(base + 1)?)?
            }
        };
        map.set(i, &v)?;
        seen += 1;
    }
    if seen != lattice.len() {
        return Err(bad(format!("{seen} rows for {} nodes", lattice.len())));
    }
    Ok(map)
}
