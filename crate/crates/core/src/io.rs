//! On-disk formats for datasets and fit results.
//!
//! A dataset directory holds `graph.txt` (edge list), `labels.txt`
//! (`node cluster group`, 1-based) and `signals.csv` (`D` rows, header
//! `n1..nN`). A fit directory holds `graph.txt`, `labels.csv`
//! (`node,label`), `objective.csv` and `config.txt`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{FgcError, Result};
use crate::graph::{read_edge_list, write_edge_list, SignalMatrix, WeightVector};
use crate::pipeline::FitResult;
use crate::synthetic::{sample_signals, vsbm_generate, GroundTruth, NoiseSpec, VsbmParams};

pub const GRAPH_FILE: &str = "graph.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const SIGNALS_FILE: &str = "signals.csv";
pub const FIT_LABELS_FILE: &str = "labels.csv";
pub const OBJECTIVE_FILE: &str = "objective.csv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub weights: WeightVector,
    pub cluster_labels: Vec<usize>,
    pub group_labels: Vec<usize>,
    pub signals: SignalMatrix,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.weights.num_nodes()
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn num_groups(&self) -> usize {
        self.group_labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Seed of the signal stream paired with graph seed `seed`.
pub fn signal_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Graph from `seed`, then `n` signals from the paired stream.
pub fn generate_dataset(params: &VsbmParams, n: usize, noise: &NoiseSpec, seed: u64) -> Result<(GroundTruth, Dataset)> {
    let truth = vsbm_generate(params, seed)?;
    let signals = sample_signals(&truth.laplacian, n, noise, signal_seed(seed))?;
    let data = Dataset {
        weights: truth.weights.clone(),
        cluster_labels: truth.cluster_labels.clone(),
        group_labels: truth.group_labels.clone(),
        signals,
    };
    Ok((truth, data))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| FgcError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| FgcError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FgcError::io(dir, e))
}

fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = create(path)?;
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| FgcError::io(path, e))
}

fn location(path: &Path, line: usize) -> String {
    format!("{}:{}", path.display(), line)
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| FgcError::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push((n + 1, t.to_string()));
        }
    }
    Ok(out)
}

fn fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_index(path: &Path, line: usize, s: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(FgcError::parse(
            location(path, line),
            format!("expected a 1-based index, got {s:?}"),
        )),
    }
}

pub fn write_graph(path: &Path, w: &WeightVector) -> Result<()> {
    write_with(path, |out| write_edge_list(w, out))
}

pub fn read_graph(path: &Path) -> Result<WeightVector> {
    read_edge_list(open(path)?).map_err(|e| match e {
        FgcError::Parse { location, message } => FgcError::parse(format!("{} {location}", path.display()), message),
        other => other,
    })
}

pub fn write_signals(path: &Path, x: &SignalMatrix) -> Result<()> {
    write_with(path, |out| {
        let header: Vec<String> = (1..=x.ncols()).map(|c| format!("n{c}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in x.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    })
}

pub fn read_signals(path: &Path) -> Result<SignalMatrix> {
    let lines = content_lines(path)?;
    let Some(((_, header), body)) = lines.split_first() else {
        return Err(FgcError::parse(path.display().to_string(), "empty signals file"));
    };
    let n = header.split(',').count();
    let mut values = Vec::with_capacity(body.len() * n);
    for (line, text) in body {
        let row: Vec<&str> = text.split(',').collect();
        if row.len() != n {
            return Err(FgcError::parse(
                location(path, *line),
                format!("expected {n} columns, found {}", row.len()),
            ));
        }
        for cell in row {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| FgcError::parse(location(path, *line), format!("bad number {cell:?}")))?;
            values.push(v);
        }
    }
    Ok(DMatrix::from_row_slice(body.len(), n, &values))
}

pub fn write_truth_labels(path: &Path, clusters: &[usize], groups: &[usize]) -> Result<()> {
    write_with(path, |out| {
        writeln!(out, "node cluster group")?;
        for (i, (c, g)) in clusters.iter().zip(groups).enumerate() {
            writeln!(out, "{} {} {}", i + 1, c + 1, g + 1)?;
        }
        Ok(())
    })
}

/// Reads `node cluster group` lines (header optional).
pub fn read_truth_labels(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let rows = read_indexed(path, 2)?;
    Ok(rows.into_iter().map(|r| (r[0], r[1])).unzip())
}

/// Reads a standalone `node,group` file (header optional).
pub fn read_group_labels(path: &Path) -> Result<Vec<usize>> {
    Ok(read_indexed(path, 1)?.into_iter().map(|r| r[0]).collect())
}

/// Lines of `node v1 .. vk` with 1-based entries, returned zero-based and
/// ordered by node. Every node `1..=D` must appear exactly once.
fn read_indexed(path: &Path, width: usize) -> Result<Vec<Vec<usize>>> {
    let mut rows: Vec<Option<Vec<usize>>> = Vec::new();
    for (line, text) in content_lines(path)? {
        let f = fields(&text);
        if f.first().is_some_and(|s| s.parse::<usize>().is_err()) {
            continue;
        }
        if f.len() != width + 1 {
            return Err(FgcError::parse(
                location(path, line),
                format!("expected {} fields, found {}", width + 1, f.len()),
            ));
        }
        let node = parse_index(path, line, f[0])?;
        let vals = f[1..]
            .iter()
            .map(|s| parse_index(path, line, s))
            .collect::<Result<Vec<_>>>()?;
        if node >= rows.len() {
            rows.resize(node + 1, None);
        }
        if rows[node].replace(vals).is_some() {
            return Err(FgcError::parse(
                location(path, line),
                format!("node {} listed twice", node + 1),
            ));
        }
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| FgcError::parse(path.display().to_string(), format!("node {} missing", i + 1))))
        .collect()
}

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    ensure_dir(dir)?;
    write_graph(&dir.join(GRAPH_FILE), &data.weights)?;
    write_truth_labels(&dir.join(LABELS_FILE), &data.cluster_labels, &data.group_labels)?;
    write_signals(&dir.join(SIGNALS_FILE), &data.signals)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let weights = read_graph(&dir.join(GRAPH_FILE))?;
    let (cluster_labels, group_labels) = read_truth_labels(&dir.join(LABELS_FILE))?;
    let signals = read_signals(&dir.join(SIGNALS_FILE))?;
    let d = weights.num_nodes();
    if cluster_labels.len() != d || signals.nrows() != d {
        return Err(FgcError::DimensionMismatch(format!(
            "graph has {d} nodes, labels {}, signals {}",
            cluster_labels.len(),
            signals.nrows()
        )));
    }
    Ok(Dataset {
        weights,
        cluster_labels,
        group_labels,
        signals,
    })
}

/// Writes a fit directory. `config` is the `key = value` snapshot.
pub fn write_fit(dir: &Path, fit: &FitResult, config: &[(String, String)]) -> Result<()> {
    ensure_dir(dir)?;
    write_graph(&dir.join(GRAPH_FILE), &fit.weights)?;
    write_with(&dir.join(FIT_LABELS_FILE), |out| {
        writeln!(out, "node,label")?;
        for (i, l) in fit.labels.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, l + 1)?;
        }
        Ok(())
    })?;
    write_with(&dir.join(OBJECTIVE_FILE), |out| {
        writeln!(out, "sweep,objective")?;
        for (i, j) in fit.objective_history.iter().enumerate() {
            writeln!(out, "{},{j:e}", i + 1)?;
        }
        Ok(())
    })?;
    write_with(&dir.join(CONFIG_FILE), |out| {
        writeln!(out, "method = {}", fit.method)?;
        writeln!(out, "num_clusters = {}", fit.num_clusters)?;
        writeln!(out, "iterations = {}", fit.iterations)?;
        writeln!(out, "converged = {}", fit.converged)?;
        for (k, v) in config {
            writeln!(out, "{k} = {v}")?;
        }
        Ok(())
    })
}

/// Learned graph and zero-based labels of a fit directory.
pub fn read_fit(dir: &Path) -> Result<(WeightVector, Vec<usize>)> {
    let weights = read_graph(&dir.join(GRAPH_FILE))?;
    let labels = read_indexed(&dir.join(FIT_LABELS_FILE), 1)?
        .into_iter()
        .map(|r| r[0])
        .collect();
    Ok((weights, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_survives_a_write_read_cycle() {
        let params = VsbmParams {
            num_nodes: 12,
            num_clusters: 2,
            ..Default::default()
        };
        let (_, data) = generate_dataset(&params, 7, &NoiseSpec::Uniform { lo: 0.0, hi: 0.2 }, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.cluster_labels, data.cluster_labels);
        assert_eq!(back.group_labels, data.group_labels);
        assert_eq!(back.signals, data.signals);
        for (a, b) in back.weights.values().iter().zip(data.weights.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn group_file_accepts_commas_and_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("groups.csv");
        fs::write(&path, "node,group\n2,1\n1,2\n3,2\n").unwrap();
        assert_eq!(read_group_labels(&path).unwrap(), vec![1, 0, 1]);
        fs::write(&path, "1,1\n3,1\n").unwrap();
        assert!(read_group_labels(&path).is_err());
    }

    #[test]
    fn ragged_signal_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "n1,n2\n1,2\n3\n").unwrap();
        let err = read_signals(&path).unwrap_err();
        assert!(err.to_string().contains(":3"), "{err}");
    }
}
