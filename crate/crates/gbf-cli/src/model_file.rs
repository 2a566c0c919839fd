//! The on-disk model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! byte 0        format version (currently 1)
//! then sections тtag, u64 length of payload, payload:
//!   1 PARAMS      family u8 (0 gaussian, 1 binomial, 2 poisson),
//!                 stages u8, variance_mode u8 (0 raw, 1 corrected),
//!                 residual_source u8 (0 in-sample, 1 out-of-bag),
//!                 n_trees u64, sample_fraction f64, mtry u64,
//!                 min_node_size u64, max_depth u64 (u64::MAX = none),
//!                 tree_seed u64, forest_seed u64, n_features u64,
//!                 n_train u64
//!   2 ETA0        f64
//!   3 U0          count u64, then count f64
//!   4 TRAIN_ETA   rows u64, cols u64, then row-major f64
//!   5 TRAIN_LL    count u64, then count f64
//!   6 FOREST      one section per stage, in stage order:
//!                 k u64, n u64, n_trees u64,
//!                 per tree a node table (count u64, then nodes:
//!                   kind u8 = 0 split: feature u32, threshold f64,
//!                                      left u32, right u32
//!                   kind u8 = 1 leaf:  value f64, id u32),
//!                 then per tree its in-bag rows (count u64, u32 indices,
//!                 sorted ascending)
//!   7 FINGERPRINT u64 FNV-1a hash of the raw training-data file bytes
//! ```
//!
//! Floats are stored bit-exactly, so a round trip reproduces every
//! prediction bit for bit.

use gbf::family::Family;
use gbf::forest::{ForestModel, ForestParams};
use gbf::model::{GbfModel, GbfParams, ResidualSource, VarianceMode};
use gbf::tree::{Node, Tree, TreeParams};
use std::io::Write;
use std::path::Path;

pub const FORMAT_VERSION: u8 = 1;

const TAG_PARAMS: u8 = 1;
const TAG_ETA0: u8 = 2;
const TAG_U0: u8 = 3;
const TAG_TRAIN_ETA: u8 = 4;
const TAG_TRAIN_LL: u8 = 5;
const TAG_FOREST: u8 = 6;
const TAG_FINGERPRINT: u8 = 7;

#[derive(Debug)]
pub enum ModelFileError {
    Io(std::io::Error),
    Format(String),
}

impl std::fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelFileError::Io(e) => write!(f, "io error: {e}"),
            ModelFileError::Format(m) => write!(f, "model file format error: {m}"),
        }
    }
}

impl std::error::Error for ModelFileError {}

impl From<std::io::Error> for ModelFileError {
    fn from(e: std::io::Error) -> Self {
        ModelFileError::Io(e)
    }
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, ModelFileError> {
    Err(ModelFileError::Format(msg.into()))
}

/// FNV-1a 64-bit hash; used to fingerprint the training-data file.
pub fn fingerprint_bytes(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub struct ModelFile {
    pub model: GbfModel,
    pub fingerprint: u64,
}

pub fn save(model: &GbfModel, fingerprint: u64, path: &Path) -> Result<(), ModelFileError> {
    let bytes = encode(model, fingerprint);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelFile, ModelFileError> {
    decode(&std::fs::read(path)?)
}

struct SectionWriter {
    out: Vec<u8>,
}

impl SectionWriter {
    fn section(&mut self, tag: u8, payload: &[u8]) {
        self.out.push(tag);
        self.out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        self.out.extend_from_slice(payload);
    }
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn encode(model: &GbfModel, fingerprint: u64) -> Vec<u8> {
    let mut w = SectionWriter {
        out: vec![FORMAT_VERSION],
    };
    let params = model.params();

    let mut buf = vec![match params.family {
        Family::Gaussian => 0u8,
        Family::Binomial => 1,
        Family::Poisson => 2,
    }];
    buf.push(params.stages as u8);
    buf.push(match params.variance_mode {
        VarianceMode::Raw => 0u8,
        VarianceMode::Corrected => 1,
    });
    buf.push(match params.residual_source {
        ResidualSource::InSample => 0u8,
        ResidualSource::OutOfBag => 1,
    });
    push_u64(&mut buf, params.forest.n_trees as u64);
    push_f64(&mut buf, params.forest.sample_fraction);
    push_u64(&mut buf, params.forest.tree.mtry as u64);
    push_u64(&mut buf, params.forest.tree.min_node_size as u64);
    push_u64(
        &mut buf,
        params.forest.tree.max_depth.map_or(u64::MAX, |d| d as u64),
    );
    push_u64(&mut buf, params.forest.tree.seed);
    push_u64(&mut buf, params.forest.seed);
    push_u64(&mut buf, model.n_features() as u64);
    push_u64(&mut buf, model.n_train() as u64);
    w.section(TAG_PARAMS, &buf);

    w.section(TAG_ETA0, &model.eta0().to_le_bytes());

    let mut buf = Vec::new();
    push_u64(&mut buf, model.u0().len() as u64);
    for &v in model.u0() {
        push_f64(&mut buf, v);
    }
    w.section(TAG_U0, &buf);

    let mut buf = Vec::new();
    push_u64(&mut buf, model.train_eta().len() as u64);
    push_u64(&mut buf, model.n_train() as u64);
    for row in model.train_eta() {
        for &v in row {
            push_f64(&mut buf, v);
        }
    }
    w.section(TAG_TRAIN_ETA, &buf);

    let mut buf = Vec::new();
    push_u64(&mut buf, model.train_ll().len() as u64);
    for &v in model.train_ll() {
        push_f64(&mut buf, v);
    }
    w.section(TAG_TRAIN_LL, &buf);

    for forest in model.forests() {
        let mut buf = Vec::new();
        push_u64(&mut buf, forest.subsample_size() as u64);
        push_u64(&mut buf, forest.n_train() as u64);
        push_u64(&mut buf, forest.n_trees() as u64);
        for tree in forest.trees() {
            push_u64(&mut buf, tree.nodes().len() as u64);
            for node in tree.nodes() {
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        buf.push(0);
                        push_u32(&mut buf, *feature);
                        push_f64(&mut buf, *threshold);
                        push_u32(&mut buf, *left);
                        push_u32(&mut buf, *right);
                    }
                    Node::Leaf { value, id } => {
                        buf.push(1);
                        push_f64(&mut buf, *value);
                        push_u32(&mut buf, *id);
                    }
                }
            }
        }
        for b in 0..forest.n_trees() {
            let rows = forest.in_bag(b);
            push_u64(&mut buf, rows.len() as u64);
            for &r in rows {
                push_u32(&mut buf, r);
            }
        }
        w.section(TAG_FOREST, &buf);
    }

    w.section(TAG_FINGERPRINT, &fingerprint.to_le_bytes());
    w.out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        if self.pos + n > self.bytes.len() {
            return format_err("unexpected end of data");
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, ModelFileError> {
        Ok(self.u64()? as usize)
    }

    fn done(&self) -> bool {
        self.pos >= self.bytes.len()
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelFile, ModelFileError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let version = cur.u8()?;
    if version != FORMAT_VERSION {
        return format_err(format!("unsupported format version {version}"));
    }

    let mut params: Option<(GbfParams, usize, usize)> = None;
    let mut eta0: Option<f64> = None;
    let mut u0: Option<Vec<f64>> = None;
    let mut train_eta: Option<Vec<Vec<f64>>> = None;
    let mut train_ll: Option<Vec<f64>> = None;
    let mut forests: Vec<ForestModel> = Vec::new();
    let mut fingerprint: Option<u64> = None;

    while !cur.done() {
        let tag = cur.u8()?;
        let len = cur.usize()?;
        let payload = cur.take(len)?;
        let mut c = Cursor {
            bytes: payload,
            pos: 0,
        };
        match tag {
            TAG_PARAMS => {
                let family = match c.u8()? {
                    0 => Family::Gaussian,
                    1 => Family::Binomial,
                    2 => Family::Poisson,
                    other => return format_err(format!("unknown family code {other}")),
                };
                let stages = c.u8()? as usize;
                let variance_mode = match c.u8()? {
                    0 => VarianceMode::Raw,
                    1 => VarianceMode::Corrected,
                    other => return format_err(format!("unknown variance mode {other}")),
                };
                let residual_source = match c.u8()? {
                    0 => ResidualSource::InSample,
                    1 => ResidualSource::OutOfBag,
                    other => return format_err(format!("unknown residual source {other}")),
                };
                let n_trees = c.usize()?;
                let sample_fraction = c.f64()?;
                let mtry = c.usize()?;
                let min_node_size = c.usize()?;
                let max_depth = match c.u64()? {
                    u64::MAX => None,
                    d => Some(d as usize),
                };
                let tree_seed = c.u64()?;
                let forest_seed = c.u64()?;
                let n_features = c.usize()?;
                let n_train = c.usize()?;
                params = Some((
                    GbfParams {
                        family,
                        forest: ForestParams {
                            n_trees,
                            sample_fraction,
                            tree: TreeParams {
                                mtry,
                                min_node_size,
                                max_depth,
                                seed: tree_seed,
                            },
                            seed: forest_seed,
                        },
                        stages,
                        variance_mode,
                        residual_source,
                    },
                    n_features,
                    n_train,
                ));
            }
            TAG_ETA0 => eta0 = Some(c.f64()?),
            TAG_U0 => {
                let count = c.usize()?;
                let mut v = Vec::with_capacity(count);
                for _ in 0..count {
                    v.push(c.f64()?);
                }
                u0 = Some(v);
            }
            TAG_TRAIN_ETA => {
                let rows = c.usize()?;
                let cols = c.usize()?;
                let mut m = Vec::with_capacity(rows);
                for _ in 0..rows {
                    let mut row = Vec::with_capacity(cols);
                    for _ in 0..cols {
                        row.push(c.f64()?);
                    }
                    m.push(row);
                }
                train_eta = Some(m);
            }
            TAG_TRAIN_LL => {
                let count = c.usize()?;
                let mut v = Vec::with_capacity(count);
                for _ in 0..count {
                    v.push(c.f64()?);
                }
                train_ll = Some(v);
            }
            TAG_FOREST => {
                let k = c.usize()?;
                let n = c.usize()?;
                let n_trees = c.usize()?;
                let mut trees = Vec::with_capacity(n_trees);
                for _ in 0..n_trees {
                    let node_count = c.usize()?;
                    let mut nodes = Vec::with_capacity(node_count);
                    for _ in 0..node_count {
                        nodes.push(match c.u8()? {
                            0 => {
                                let feature = c.u32()?;
                                let threshold = c.f64()?;
                                let left = c.u32()?;
                                let right = c.u32()?;
                                Node::Split {
                                    feature,
                                    threshold,
                                    left,
                                    right,
                                }
                            }
                            1 => {
                                let value = c.f64()?;
                                let id = c.u32()?;
                                Node::Leaf { value, id }
                            }
                            other => {
                                return format_err(format!("unknown node kind {other}"))
                            }
                        });
                    }
                    trees.push(
                        Tree::from_nodes(nodes)
                            .map_err(|e| ModelFileError::Format(e.to_string()))?,
                    );
                }
                let mut in_bag = Vec::with_capacity(n_trees);
                for _ in 0..n_trees {
                    let count = c.usize()?;
                    let mut rows = Vec::with_capacity(count);
                    for _ in 0..count {
                        rows.push(c.u32()?);
                    }
                    in_bag.push(rows);
                }
                forests.push(
                    ForestModel::from_parts(trees, in_bag, k, n)
                        .map_err(|e| ModelFileError::Format(e.to_string()))?,
                );
            }
            TAG_FINGERPRINT => fingerprint = Some(c.u64()?),
            other => return format_err(format!("unknown section tag {other}")),
        }
        if !c.done() {
            return format_err(format!("trailing bytes in section {tag}"));
        }
    }

    let (params, n_features, n_train) =
        params.ok_or_else(|| ModelFileError::Format("missing params section".into()))?;
    let eta0 = eta0.ok_or_else(|| ModelFileError::Format("missing eta0 section".into()))?;
    let u0 = u0.ok_or_else(|| ModelFileError::Format("missing u0 section".into()))?;
    let train_eta =
        train_eta.ok_or_else(|| ModelFileError::Format("missing train_eta section".into()))?;
    let train_ll =
        train_ll.ok_or_else(|| ModelFileError::Format("missing train_ll section".into()))?;
    let fingerprint =
        fingerprint.ok_or_else(|| ModelFileError::Format("missing fingerprint section".into()))?;
    if u0.len() != n_train {
        return format_err("u0 length differs from recorded n_train");
    }
    let model = GbfModel::from_parts(params, eta0, u0, forests, train_eta, train_ll, n_features)
        .map_err(|e| ModelFileError::Format(e.to_string()))?;
    Ok(ModelFile { model, fingerprint })
}
