//! CSV input and output: the dataset schema (`x_1,…,x_p,a,y`), tabulated
//! policy columns, benchmark tables, and diagnostic dumps of the Bellman
//! recursion and the interval cost map.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cost::CostCache;
use crate::dataset::Dataset;
use crate::error::{DjqeError, Result};
use crate::partitioner::Segmentation;
use crate::scalar::Scalar;
use crate::synthetic::BenchmarkRow;

fn io_err(path: &Path, source: std::io::Error) -> DjqeError {
    DjqeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn row_err(path: &Path, row: usize, message: impl Into<String>) -> DjqeError {
    DjqeError::CsvRow {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn parse_field<T: Scalar>(path: &Path, row: usize, name: &str, raw: &str) -> Result<T> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| row_err(path, row, format!("column {name}: invalid number {raw:?}")))?;
    Ok(T::of(v))
}

/// Write a dataset in the `x_1..x_p,a,y` schema. Actions are written in
/// their normalized `[0,1]` form; [`Dataset::action_scale`] maps them back
/// to original units.
pub fn write_dataset<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let p = dataset.feature_dim();
    let mut header = Vec::with_capacity(p + 2);
    for j in 1..=p {
        header.push(format!("x_{j}"));
    }
    header.push("a".into());
    header.push("y".into());
    writeln!(w, "{}", header.join(",")).map_err(|e| io_err(path, e))?;
    for i in 0..dataset.len() {
        let mut fields: Vec<String> = dataset.row(i).iter().map(|v| v.to_string()).collect();
        fields.push(dataset.action(i).to_string());
        fields.push(dataset.reward(i).to_string());
        writeln!(w, "{}", fields.join(",")).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read a dataset in the `x_1..x_p,a,y` schema; `p` is inferred from the
/// header. Actions outside `[0,1]` are min-max normalized and the affine
/// map is recorded on the dataset.
pub fn read_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| row_err(path, 1, e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(row_err(path, 1, "header must end with columns a,y"));
    }
    let p = header.len() - 2;
    if p == 0 {
        return Err(row_err(path, 1, "no feature columns x_1.. found"));
    }
    for (j, field) in header.iter().take(p).enumerate() {
        let expected = format!("x_{}", j + 1);
        if field != expected {
            return Err(row_err(
                path,
                1,
                format!("expected column {expected:?}, found {field:?}"),
            ));
        }
    }
    if &header[p] != "a" || &header[p + 1] != "y" {
        return Err(row_err(path, 1, "header must end with columns a,y"));
    }

    let mut features = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2; // 1-based, counting the header line
        let record = record.map_err(|e| row_err(path, row, e.to_string()))?;
        if record.len() != p + 2 {
            return Err(row_err(
                path,
                row,
                format!("expected {} fields, found {}", p + 2, record.len()),
            ));
        }
        for (j, raw) in record.iter().take(p).enumerate() {
            features.push(parse_field::<T>(path, row, &header[j], raw)?);
        }
        actions.push(parse_field::<T>(path, row, "a", &record[p])?);
        rewards.push(parse_field::<T>(path, row, "y", &record[p + 1])?);
    }
    Dataset::from_raw_actions(features, p, actions, rewards)
}

/// Read a tabulated policy: a single-column CSV with header `a`, one
/// target action per dataset row.
pub fn read_policy_column<T: Scalar>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| row_err(path, 1, e.to_string()))?
        .clone();
    if header.len() != 1 || &header[0] != "a" {
        return Err(row_err(path, 1, "policy file must have a single column a"));
    }
    let mut actions = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| row_err(path, row, e.to_string()))?;
        if record.len() != 1 {
            return Err(row_err(path, row, "expected a single field"));
        }
        actions.push(parse_field::<T>(path, row, "a", &record[0])?);
    }
    Ok(actions)
}

/// Write a tabulated policy as a single-column CSV with header `a`.
pub fn write_policy_column<T: Scalar>(actions: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "a").map_err(|e| io_err(path, e))?;
    for a in actions {
        writeln!(w, "{a}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Write benchmark rows in the `scenario,n,method,bias,sd,mse,reps,seed`
/// schema; output is byte-stable for identical inputs.
pub fn write_benchmark_rows<T: Scalar>(rows: &[BenchmarkRow<T>], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "scenario,n,method,bias,sd,mse,reps,seed").map_err(|e| io_err(path, e))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.scenario.as_str(),
            r.n,
            r.method.as_str(),
            r.bias,
            r.sd,
            r.mse,
            r.reps,
            r.seed
        )
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Dump the Bellman values and backpointers of a segmentation as
/// `v,bell,tau` rows (one per grid point 0..=m).
pub fn write_bellman<T: Scalar>(seg: &Segmentation<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "v,bell,tau").map_err(|e| io_err(path, e))?;
    for (v, (bell, tau)) in seg.bellman.iter().zip(&seg.backpointers).enumerate() {
        writeln!(w, "{v},{bell},{tau}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Dump every computed interval cost as `lo,hi,cost,n_samples` rows,
/// sorted by interval.
pub fn write_cost_map<T: Scalar>(cache: &CostCache<'_, T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "lo,hi,cost,n_samples").map_err(|e| io_err(path, e))?;
    for (iv, entry) in cache.entries_sorted() {
        writeln!(w, "{},{},{},{}", iv.lo(), iv.hi(), entry.cost, entry.n_samples)
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
