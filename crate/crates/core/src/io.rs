//! On-disk formats: dataset bundles, poisoned bundles with their
//! perturbation traces, trajectory CSVs, and a converter from the LINQS raw
//! citation files.
//!
//! A bundle directory holds `meta.json`, `edges.csv` (`src,dst`, `src <
//! dst`), `features.csv` (one headerless row per node) or
//! `features.triplets` (`node,dim,value`), `labels.csv` (`node,label`) and
//! optionally `splits.json`. A poisoned bundle adds `perturbations.csv` and
//! `config.json`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attack::{replay, Action, AttackConfig, AttackMethod, AttackTrace, PerturbationRecord};
use crate::diagnostics::TrajectoryPoint;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelData};
use crate::sparse::Csr;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const DENSE_FEATURES_FILE: &str = "features.csv";
pub const SPARSE_FEATURES_FILE: &str = "features.triplets";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLITS_FILE: &str = "splits.json";
pub const PERTURBATIONS_FILE: &str = "perturbations.csv";
pub const CONFIG_FILE: &str = "config.json";

pub const PERTURBATION_HEADER: &str =
    "iter,i,j,action,saliency,intra_pseudo,intra_gt,h_pseudo,h_gt,lambda1,lambda2";
pub const TRAJECTORY_HEADER: &str = "iter,h_gt,h_pseudo,lower_limit,upper_limit";

/// Train fraction used when a bundle has no `splits.json`.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureStorage {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub feature_storage: FeatureStorage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Format with 17 significant digits in the style of C's `%.17g`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        file: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Non-empty lines with 1-based line numbers, skipping a leading header
/// equal to `header`.
fn data_lines(path: &Path, header: Option<&str>) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && header.is_some_and(|h| h == trimmed) {
            continue;
        }
        out.push((idx + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn parse_fields<const N: usize>(path: &Path, line: usize, text: &str) -> Result<[String; N]> {
    let fields: Vec<String> = text.split(',').map(|f| f.trim().to_string()).collect();
    fields
        .try_into()
        .map_err(|v: Vec<String>| schema(path, line, format!("expected {N} fields, found {}", v.len())))
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| schema(path, line, format!("cannot parse {what} from '{field}'")))
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, text) in data_lines(path, Some("src,dst"))? {
        let [a, b] = parse_fields::<2>(path, line, &text)?;
        let src: usize = parse(path, line, &a, "src")?;
        let dst: usize = parse(path, line, &b, "dst")?;
        for idx in [src, dst] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, len: n });
            }
        }
        if src == dst {
            return Err(Error::SelfLoopInInput(src));
        }
        if src > dst {
            return Err(schema(path, line, format!("edge ({src}, {dst}) must satisfy src < dst")));
        }
        edges.push((src, dst));
    }
    Ok(edges)
}

fn read_features(dir: &Path, meta: &Meta) -> Result<Csr> {
    let (n, d) = (meta.num_nodes, meta.feature_dim);
    match meta.feature_storage {
        FeatureStorage::Dense => {
            let path = dir.join(DENSE_FEATURES_FILE);
            let rows = data_lines(&path, None)?;
            if rows.len() != n {
                return Err(schema(&path, rows.len(), format!("{} rows for {n} nodes", rows.len())));
            }
            let mut triplets = Vec::new();
            for (r, (line, text)) in rows.iter().enumerate() {
                let values: Vec<&str> = text.split(',').collect();
                if values.len() != d {
                    return Err(schema(&path, *line, format!("{} columns, expected {d}", values.len())));
                }
                for (c, v) in values.iter().enumerate() {
                    let v: f64 = parse(&path, *line, v.trim(), "feature")?;
                    if v != 0.0 {
                        triplets.push((r, c, v));
                    }
                }
            }
            Csr::from_triplets(n, d, triplets)
        }
        FeatureStorage::Sparse => {
            let path = dir.join(SPARSE_FEATURES_FILE);
            let mut triplets = Vec::new();
            let mut seen = BTreeSet::new();
            for (line, text) in data_lines(&path, Some("node,dim,value"))? {
                let [a, b, c] = parse_fields::<3>(&path, line, &text)?;
                let node: usize = parse(&path, line, &a, "node")?;
                let dim: usize = parse(&path, line, &b, "dim")?;
                let value: f64 = parse(&path, line, &c, "value")?;
                if node >= n {
                    return Err(Error::IndexOutOfRange { index: node, len: n });
                }
                if dim >= d {
                    return Err(schema(&path, line, format!("dimension {dim} >= {d}")));
                }
                if !seen.insert((node, dim)) {
                    return Err(schema(&path, line, format!("duplicate entry ({node}, {dim})")));
                }
                triplets.push((node, dim, value));
            }
            Csr::from_triplets(n, d, triplets)
        }
    }
}

fn read_labels(path: &Path, meta: &Meta) -> Result<Vec<usize>> {
    let n = meta.num_nodes;
    let mut labels = vec![None; n];
    for (line, text) in data_lines(path, Some("node,label"))? {
        let [a, b] = parse_fields::<2>(path, line, &text)?;
        let node: usize = parse(path, line, &a, "node")?;
        let label: usize = parse(path, line, &b, "label")?;
        if node >= n {
            return Err(Error::IndexOutOfRange { index: node, len: n });
        }
        if label >= meta.num_classes {
            return Err(schema(path, line, format!("label {label} >= {}", meta.num_classes)));
        }
        if labels[node].replace(label).is_some() {
            return Err(schema(path, line, format!("node {node} labeled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| schema(path, 0, format!("node {i} has no label"))))
        .collect()
}

/// Load a bundle; when `splits.json` is absent a stratified split is drawn
/// from `split_seed`.
pub fn load_dataset_with_seed(dir: &Path, split_seed: u64) -> Result<(Graph, LabelData)> {
    let meta: Meta = read_json(&dir.join(META_FILE))?;
    let edges = read_edges(&dir.join(EDGES_FILE), meta.num_nodes)?;
    let features = read_features(dir, &meta)?;
    let graph = Graph::new(meta.num_nodes, &edges, features)?;
    let labels = read_labels(&dir.join(LABELS_FILE), &meta)?;
    let splits_path = dir.join(SPLITS_FILE);
    let labels = if splits_path.exists() {
        let splits: Splits = read_json(&splits_path)?;
        LabelData::new(labels, meta.num_classes, splits.train, splits.test)?
    } else {
        LabelData::stratified(labels, meta.num_classes, DEFAULT_TRAIN_FRACTION, split_seed)?
    };
    Ok((graph, labels))
}

pub fn load_dataset(dir: &Path) -> Result<(Graph, LabelData)> {
    load_dataset_with_seed(dir, 0)
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

fn write_lines(path: &Path, header: Option<&str>, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    let err = io_err(path);
    let go = || -> std::io::Result<()> {
        if let Some(h) = header {
            writeln!(w, "{h}")?;
        }
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()
    };
    go().map_err(err)
}

pub fn write_edges(path: &Path, graph: &Graph) -> Result<()> {
    write_lines(path, Some("src,dst"), graph.edges().map(|(i, j)| format!("{i},{j}")))
}

/// Write a bundle. Features are stored sparsely when fewer than half of the
/// entries are nonzero.
pub fn save_dataset(dir: &Path, graph: &Graph, labels: &LabelData, split_seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let features = graph.features();
    let (n, d) = features.shape();
    let storage = if 2 * features.nnz() < n * d {
        FeatureStorage::Sparse
    } else {
        FeatureStorage::Dense
    };
    let meta = Meta {
        num_nodes: n,
        num_classes: labels.k_classes,
        feature_dim: d,
        feature_storage: storage,
    };
    write_json(&dir.join(META_FILE), &meta)?;
    write_edges(&dir.join(EDGES_FILE), graph)?;
    match storage {
        FeatureStorage::Dense => {
            let dense = features.to_dense();
            write_lines(
                &dir.join(DENSE_FEATURES_FILE),
                None,
                dense.rows().into_iter().map(|row| {
                    row.iter().map(|&v| format_float(v)).collect::<Vec<_>>().join(",")
                }),
            )?;
        }
        FeatureStorage::Sparse => {
            write_lines(
                &dir.join(SPARSE_FEATURES_FILE),
                Some("node,dim,value"),
                features.iter().map(|(r, c, v)| format!("{r},{c},{}", format_float(v))),
            )?;
        }
    }
    write_lines(
        &dir.join(LABELS_FILE),
        Some("node,label"),
        labels.labels.iter().enumerate().map(|(i, l)| format!("{i},{l}")),
    )?;
    write_json(
        &dir.join(SPLITS_FILE),
        &Splits {
            train: labels.train.clone(),
            test: labels.test.clone(),
            seed: split_seed,
        },
    )
}

/// FNV-1a digest of the sorted edge list, as 16 hex digits.
pub fn edge_hash(graph: &Graph) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(graph.n_nodes() as u64);
    for (i, j) in graph.edges() {
        feed(i as u64);
        feed(j as u64);
    }
    format!("{h:016x}")
}

/// Contents of a poisoned bundle's `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonedConfig {
    pub method: AttackMethod,
    pub attack: AttackConfig,
    pub budget: usize,
    pub clean_edge_count: usize,
    pub clean_edge_hash: String,
    pub poisoned_edge_hash: String,
    pub clean_h_pseudo: f64,
    pub clean_h_gt: f64,
    pub merged_labels: Vec<usize>,
}

fn bool_field(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_perturbations(path: &Path, records: &[PerturbationRecord]) -> Result<()> {
    write_lines(
        path,
        Some(PERTURBATION_HEADER),
        records.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.iter,
                r.i,
                r.j,
                r.action.as_str(),
                format_float(r.saliency),
                bool_field(r.intra_pseudo),
                bool_field(r.intra_gt),
                format_float(r.h_pseudo),
                format_float(r.h_gt),
                format_float(r.lambda1),
                format_float(r.lambda2),
            )
        }),
    )
}

pub fn read_perturbations(path: &Path) -> Result<Vec<PerturbationRecord>> {
    let lines = data_lines(path, None)?;
    let mut iter = lines.into_iter();
    match iter.next() {
        Some((_, h)) if h == PERTURBATION_HEADER => {}
        Some((line, h)) => return Err(schema(path, line, format!("unexpected header '{h}'"))),
        None => return Err(schema(path, 1, "missing header")),
    }
    let flag = |line: usize, s: &str| match s {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(schema(path, line, format!("bad flag '{other}'"))),
    };
    iter.map(|(line, text)| {
        let f = parse_fields::<11>(path, line, &text)?;
        Ok(PerturbationRecord {
            iter: parse(path, line, &f[0], "iter")?,
            i: parse(path, line, &f[1], "i")?,
            j: parse(path, line, &f[2], "j")?,
            action: f[3].parse::<Action>().map_err(|_| schema(path, line, format!("bad action '{}'", f[3])))?,
            saliency: parse(path, line, &f[4], "saliency")?,
            intra_pseudo: flag(line, &f[5])?,
            intra_gt: flag(line, &f[6])?,
            h_pseudo: parse(path, line, &f[7], "h_pseudo")?,
            h_gt: parse(path, line, &f[8], "h_gt")?,
            lambda1: parse(path, line, &f[9], "lambda1")?,
            lambda2: parse(path, line, &f[10], "lambda2")?,
        })
    })
    .collect()
}

/// Write the poisoned graph as a full bundle (so it can be evaluated
/// directly) plus `perturbations.csv` and `config.json`.
pub fn save_poisoned(
    dir: &Path,
    clean: &Graph,
    poisoned: &Graph,
    labels: &LabelData,
    trace: &AttackTrace,
    split_seed: u64,
) -> Result<()> {
    let replayed = replay(clean, &trace.records)?;
    if &replayed != poisoned {
        return Err(Error::ReplayMismatch("trace does not reproduce the poisoned graph".into()));
    }
    save_dataset(dir, poisoned, labels, split_seed)?;
    write_perturbations(&dir.join(PERTURBATIONS_FILE), &trace.records)?;
    let config = PoisonedConfig {
        method: trace.method,
        attack: trace.config.clone(),
        budget: trace.records.len(),
        clean_edge_count: trace.clean_edge_count,
        clean_edge_hash: edge_hash(clean),
        poisoned_edge_hash: edge_hash(poisoned),
        clean_h_pseudo: trace.clean_h_pseudo,
        clean_h_gt: trace.clean_h_gt,
        merged_labels: trace.merged_labels.clone(),
    };
    write_json(&dir.join(CONFIG_FILE), &config)
}

fn trace_from(config: PoisonedConfig, records: Vec<PerturbationRecord>) -> AttackTrace {
    AttackTrace {
        method: config.method,
        config: config.attack,
        clean_edge_count: config.clean_edge_count,
        clean_h_pseudo: config.clean_h_pseudo,
        clean_h_gt: config.clean_h_gt,
        merged_labels: config.merged_labels,
        records,
    }
}

/// Read `perturbations.csv` and `config.json` from a poisoned bundle or
/// from the directory containing the given `perturbations.csv`.
pub fn load_trace(path: &Path) -> Result<AttackTrace> {
    let (dir, csv) = if path.is_dir() {
        (path.to_path_buf(), path.join(PERTURBATIONS_FILE))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")), path.to_path_buf())
    };
    let records = read_perturbations(&csv)?;
    let config: PoisonedConfig = read_json(&dir.join(CONFIG_FILE))?;
    Ok(trace_from(config, records))
}

#[derive(Debug, Clone)]
pub struct PoisonedBundle {
    pub clean: Graph,
    pub poisoned: Graph,
    pub labels: LabelData,
    pub trace: AttackTrace,
}

/// Load a poisoned bundle, undo its trace to recover the clean graph and
/// check both graphs against the digests in `config.json`.
pub fn load_poisoned(dir: &Path) -> Result<PoisonedBundle> {
    let (poisoned, labels) = load_dataset(dir)?;
    let records = read_perturbations(&dir.join(PERTURBATIONS_FILE))?;
    let config: PoisonedConfig = read_json(&dir.join(CONFIG_FILE))?;
    if edge_hash(&poisoned) != config.poisoned_edge_hash {
        return Err(Error::ReplayMismatch("stored edges do not match the recorded digest".into()));
    }
    let mut clean = poisoned.clone();
    for r in records.iter().rev() {
        let added_back = clean.flip(r.i, r.j);
        if added_back != (r.action == Action::Remove) {
            return Err(Error::ReplayMismatch(format!(
                "iteration {}: {} of ({}, {}) is inconsistent with the stored graph",
                r.iter,
                r.action.as_str(),
                r.i,
                r.j
            )));
        }
    }
    if edge_hash(&clean) != config.clean_edge_hash || clean.edge_count() != config.clean_edge_count {
        return Err(Error::ReplayMismatch("undoing the trace does not give the clean graph".into()));
    }
    if replay(&clean, &records)? != poisoned {
        return Err(Error::ReplayMismatch("forward replay differs from stored graph".into()));
    }
    Ok(PoisonedBundle {
        clean,
        poisoned,
        labels,
        trace: trace_from(config, records),
    })
}

/// Trajectory rows as CSV text, header included.
pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.iter,
            format_float(p.h_gt),
            format_float(p.h_pseudo),
            format_float(p.lower_limit),
            format_float(p.upper_limit)
        ));
    }
    out
}

pub fn write_trajectory(path: &Path, points: &[TrajectoryPoint]) -> Result<()> {
    fs::write(path, trajectory_csv(points)).map_err(io_err(path))
}

/// What the LINQS converter saw and kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_names: Vec<String>,
    pub raw_citation_lines: usize,
    pub undirected_edges: usize,
    pub dropped_self_loops: usize,
    pub dropped_unknown_ids: usize,
    pub duplicate_citations: usize,
}

fn find_with_extension(dir: &Path, ext: &str) -> Result<PathBuf> {
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    found.sort();
    found
        .into_iter()
        .next()
        .ok_or_else(|| schema(dir, 0, format!("no *.{ext} file in directory")))
}

/// Convert a LINQS directory (`<name>.content` with `id f₁ … f_d class`
/// rows and `<name>.cites` with `cited citing` rows) into a bundle.
/// Citations are symmetrized and deduplicated; self-citations and
/// citations to ids absent from the content file are dropped. Node order
/// follows the content file; classes are numbered by sorted name.
pub fn ingest_linqs(raw_dir: &Path, bundle: &Path, split_seed: u64) -> Result<IngestSummary> {
    let content = find_with_extension(raw_dir, "content")?;
    let cites = find_with_extension(raw_dir, "cites")?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(Vec<f64>, String)> = Vec::new();
    let mut dim = None;
    for (line, text) in data_lines(&content, None)? {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(schema(&content, line, "expected id, features and class"));
        }
        let d = fields.len() - 2;
        if *dim.get_or_insert(d) != d {
            return Err(schema(&content, line, format!("{d} features, expected {}", dim.unwrap_or(0))));
        }
        let features = fields[1..=d]
            .iter()
            .map(|v| parse(&content, line, v, "feature"))
            .collect::<Result<Vec<f64>>>()?;
        if ids.insert(fields[0].to_string(), rows.len()).is_some() {
            return Err(schema(&content, line, format!("duplicate id '{}'", fields[0])));
        }
        rows.push((features, fields[d + 1].to_string()));
    }
    let n = rows.len();
    let d = dim.unwrap_or(0);
    let classes: BTreeMap<String, usize> = rows
        .iter()
        .map(|(_, c)| c.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(k, c)| (c, k))
        .collect();

    let mut edges = BTreeSet::new();
    let (mut raw, mut loops, mut unknown, mut dupes) = (0, 0, 0, 0);
    for (line, text) in data_lines(&cites, None)? {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(schema(&cites, line, "expected two ids"));
        }
        raw += 1;
        let (Some(&a), Some(&b)) = (ids.get(fields[0]), ids.get(fields[1])) else {
            unknown += 1;
            continue;
        };
        if a == b {
            loops += 1;
            continue;
        }
        if !edges.insert((a.min(b), a.max(b))) {
            dupes += 1;
        }
    }

    let triplets = rows
        .iter()
        .enumerate()
        .flat_map(|(r, (f, _))| {
            f.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(move |(c, v)| (r, c, *v))
        })
        .collect();
    let features = Csr::from_triplets(n, d, triplets)?;
    let edges: Vec<_> = edges.into_iter().collect();
    let graph = Graph::new(n, &edges, features)?;
    let labels: Vec<usize> = rows.iter().map(|(_, c)| classes[c]).collect();
    let labels = LabelData::stratified(labels, classes.len(), DEFAULT_TRAIN_FRACTION, split_seed)?;
    save_dataset(bundle, &graph, &labels, split_seed)?;
    Ok(IngestSummary {
        num_nodes: n,
        num_classes: classes.len(),
        feature_dim: d,
        class_names: classes.into_keys().collect(),
        raw_citation_lines: raw,
        undirected_edges: edges.len(),
        dropped_self_loops: loops,
        dropped_unknown_ids: unknown,
        duplicate_citations: dupes,
    })
}
