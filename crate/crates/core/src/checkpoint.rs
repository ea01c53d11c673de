//! Binary model container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "LLEM1" | version u16 | section u8 | model kind u8 | schema hash [32]
//! | stats count u32 | (mean f64, std f64) * count | section body
//! ```
//!
//! A network block is `labels u32, label u8 * labels, encoder_layers u32,
//! layers u32, dims u32 * (layers + 1), activation u8 * layers`, then per
//! layer the `out x in` weights row-major followed by the bias. Tree nodes are
//! written in arena order.

use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::classifiers::{HierarchicalModel, ModelBody, ModelKind, NetClassifier, RatingModel};
use crate::epc::{CoarseRating, EnergyRating, Encoder, FeatureSchema};
use crate::nn::{Activation, Dense, DenseNet};
use crate::scarf::ScarfEncoder;
use crate::trees::{ForestModel, GbtModel, Tree, TreeNode};

pub const MAGIC: &[u8; 5] = b"LLEM1";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Section {
    /// Plain or SCARF fine-tuned network (encoder plus head).
    Net = 1,
    Hierarchical = 2,
    Tree = 3,
    Forest = 4,
    Gbt = 5,
    /// Pretrained SCARF encoder without a head.
    Encoder = 6,
}

impl Section {
    fn from_code(c: u8) -> Option<Section> {
        Some(match c {
            1 => Section::Net,
            2 => Section::Hierarchical,
            3 => Section::Tree,
            4 => Section::Forest,
            5 => Section::Gbt,
            6 => Section::Encoder,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not an LLEM1 checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint schema hash {found} does not match schema {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("unknown section tag {0}")]
    UnknownSection(u8),
    #[error("expected a {expected} section, found {found:?}")]
    WrongSection { expected: &'static str, found: Section },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint i/o: {0}")]
    Io(String),
}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            CheckpointError::Truncated
        } else {
            CheckpointError::Io(e.to_string())
        }
    }
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

fn kind_code(k: ModelKind) -> u8 {
    ModelKind::ALL.iter().position(|&m| m == k).unwrap() as u8
}

fn section_of(body: &ModelBody) -> Section {
    match body {
        ModelBody::Net(_) => Section::Net,
        ModelBody::Hierarchical(_) => Section::Hierarchical,
        ModelBody::Tree(_) => Section::Tree,
        ModelBody::Forest(_) => Section::Forest,
        ModelBody::Gbt(_) => Section::Gbt,
    }
}

fn expected_section(k: ModelKind) -> Section {
    match k {
        ModelKind::DecisionTree => Section::Tree,
        ModelKind::Gbt => Section::Gbt,
        ModelKind::RandomForest => Section::Forest,
        ModelKind::Mlp | ModelKind::Scarf => Section::Net,
        ModelKind::C2fMlp | ModelKind::C2fScarf => Section::Hierarchical,
    }
}

fn len_u32(w: &mut Vec<u8>, n: usize) {
    w.write_u32::<LE>(u32::try_from(n).expect("length fits u32")).unwrap();
}

fn write_header(w: &mut Vec<u8>, section: Section, kind: u8, schema: &FeatureSchema, stats: &[(f64, f64)]) {
    w.extend_from_slice(MAGIC);
    w.write_u16::<LE>(FORMAT_VERSION).unwrap();
    w.write_u8(section as u8).unwrap();
    w.write_u8(kind).unwrap();
    w.extend_from_slice(&schema.hash());
    len_u32(w, stats.len());
    for &(m, s) in stats {
        w.write_f64::<LE>(m).unwrap();
        w.write_f64::<LE>(s).unwrap();
    }
}

fn write_net(w: &mut Vec<u8>, net: &DenseNet, encoder_layers: usize, labels: &[EnergyRating]) {
    len_u32(w, labels.len());
    for l in labels {
        w.write_u8(l.index() as u8).unwrap();
    }
    len_u32(w, encoder_layers);
    len_u32(w, net.layers().len());
    for d in net.dims() {
        len_u32(w, d);
    }
    for l in net.layers() {
        w.write_u8(l.activation.code()).unwrap();
    }
    for l in net.layers() {
        for &v in l.weights.iter() {
            w.write_f64::<LE>(v).unwrap();
        }
        for &v in l.bias.iter() {
            w.write_f64::<LE>(v).unwrap();
        }
    }
}

fn write_tree(w: &mut Vec<u8>, t: &Tree) {
    w.write_f64::<LE>(t.root_weight).unwrap();
    len_u32(w, t.nodes.len());
    for n in &t.nodes {
        match n {
            TreeNode::Leaf { value } => {
                w.write_u8(0).unwrap();
                len_u32(w, value.len());
                for &v in value {
                    w.write_f64::<LE>(v).unwrap();
                }
            }
            TreeNode::Split { feature, threshold, left, right, decrease } => {
                w.write_u8(1).unwrap();
                len_u32(w, *feature);
                w.write_f64::<LE>(*threshold).unwrap();
                len_u32(w, *left);
                len_u32(w, *right);
                w.write_f64::<LE>(*decrease).unwrap();
            }
        }
    }
}

/// Serialises a trained model with its encoder statistics.
pub fn save_model(model: &RatingModel, schema: &FeatureSchema) -> Vec<u8> {
    let mut w = Vec::new();
    write_header(&mut w, section_of(&model.body), kind_code(model.kind), schema, &model.encoder.stats());
    match &model.body {
        ModelBody::Net(n) => write_net(&mut w, &n.net, n.encoder_layers, &n.labels),
        ModelBody::Hierarchical(h) => {
            write_net(&mut w, &h.coarse.net, h.coarse.encoder_layers, &h.coarse.labels);
            len_u32(&mut w, h.fine.len());
            for f in &h.fine {
                write_net(&mut w, &f.net, f.encoder_layers, &f.labels);
            }
        }
        ModelBody::Tree(t) => write_tree(&mut w, t),
        ModelBody::Forest(f) => {
            len_u32(&mut w, f.features_per_split);
            len_u32(&mut w, f.classes);
            len_u32(&mut w, f.trees.len());
            for t in &f.trees {
                write_tree(&mut w, t);
            }
        }
        ModelBody::Gbt(g) => {
            w.write_f64::<LE>(g.shrinkage).unwrap();
            len_u32(&mut w, g.base.len());
            for b in &g.base {
                w.write_u8(b.is_some() as u8).unwrap();
                w.write_f64::<LE>(b.unwrap_or(0.0)).unwrap();
            }
            for ts in &g.trees {
                len_u32(&mut w, ts.len());
                for t in ts {
                    write_tree(&mut w, t);
                }
            }
        }
    }
    w
}

/// Serialises a pretrained SCARF encoder.
pub fn save_encoder(enc: &ScarfEncoder, encoder: &Encoder, schema: &FeatureSchema) -> Vec<u8> {
    let mut w = Vec::new();
    write_header(&mut w, Section::Encoder, kind_code(ModelKind::Scarf), schema, &encoder.stats());
    len_u32(&mut w, enc.epochs);
    w.write_f64::<LE>(enc.temperature).unwrap();
    w.write_f64::<LE>(enc.corruption_rate).unwrap();
    len_u32(&mut w, enc.losses.len());
    for &l in &enc.losses {
        w.write_f64::<LE>(l).unwrap();
    }
    write_net(&mut w, &enc.net, enc.net.layers().len(), &[]);
    w
}

/// Short content hash used as a model version string.
pub fn checkpoint_version(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

struct Reader<'a> {
    r: &'a [u8],
}

impl Reader<'_> {
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.r.read_u8()?)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(self.r.read_u16::<LE>()?)
    }

    /// Count that must be coverable by the bytes left, at `unit` bytes each.
    fn len(&mut self, unit: usize) -> Result<usize, CheckpointError> {
        let n = self.r.read_u32::<LE>()? as usize;
        if n.saturating_mul(unit) > self.r.len() {
            return Err(CheckpointError::Truncated);
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(self.r.read_f64::<LE>()?)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        if n.saturating_mul(8) > self.r.len() {
            return Err(CheckpointError::Truncated);
        }
        let mut v = vec![0.0; n];
        self.r.read_f64_into::<LE>(&mut v)?;
        Ok(v)
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b)?;
        Ok(b)
    }

    fn rating(&mut self) -> Result<EnergyRating, CheckpointError> {
        let i = self.u8()?;
        EnergyRating::from_index(i as usize).ok_or_else(|| corrupt(format!("rating index {i}")))
    }

    fn net(&mut self) -> Result<NetClassifier, CheckpointError> {
        let n_labels = self.len(1)?;
        let labels = (0..n_labels).map(|_| self.rating()).collect::<Result<Vec<_>, _>>()?;
        let encoder_layers = self.len(0)?;
        let n_layers = self.len(4)?;
        if n_layers == 0 {
            return Err(corrupt("network without layers"));
        }
        let dims = (0..=n_layers).map(|_| self.len(0)).collect::<Result<Vec<_>, _>>()?;
        let acts = (0..n_layers)
            .map(|_| {
                let c = self.u8()?;
                Activation::from_code(c).ok_or_else(|| corrupt(format!("activation code {c}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut layers = Vec::with_capacity(n_layers);
        for (k, &activation) in acts.iter().enumerate() {
            let (i, o) = (dims[k], dims[k + 1]);
            let w = self.f64s(o.checked_mul(i).ok_or(CheckpointError::Truncated)?)?;
            let b = self.f64s(o)?;
            let weights = Array2::from_shape_vec((o, i), w).map_err(|e| corrupt(e.to_string()))?;
            layers.push(Dense { weights, bias: Array1::from(b), activation });
        }
        if encoder_layers > n_layers {
            return Err(corrupt("encoder layer count exceeds network depth"));
        }
        if !labels.is_empty() && labels.len() != dims[n_layers] {
            return Err(corrupt("label count differs from output width"));
        }
        let net = DenseNet::from_layers(layers).map_err(|e| corrupt(e.to_string()))?;
        Ok(NetClassifier { net, encoder_layers, labels })
    }

    fn tree(&mut self) -> Result<Tree, CheckpointError> {
        let root_weight = self.f64()?;
        let n = self.len(1)?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(match self.u8()? {
                0 => {
                    let k = self.len(8)?;
                    TreeNode::Leaf { value: self.f64s(k)? }
                }
                1 => {
                    let feature = self.len(0)?;
                    let threshold = self.f64()?;
                    let left = self.len(0)?;
                    let right = self.len(0)?;
                    let decrease = self.f64()?;
                    TreeNode::Split { feature, threshold, left, right, decrease }
                }
                t => return Err(corrupt(format!("node tag {t}"))),
            });
        }
        for (i, node) in nodes.iter().enumerate() {
            if let TreeNode::Split { left, right, .. } = node {
                if *left <= i || *right <= i || *left >= n || *right >= n {
                    return Err(corrupt(format!("node {i} has invalid children")));
                }
            }
        }
        if nodes.is_empty() {
            return Err(corrupt("empty tree"));
        }
        Ok(Tree { nodes, root_weight })
    }
}

struct Header {
    section: Section,
    kind: u8,
    stats: Vec<(f64, f64)>,
}

fn read_header(r: &mut Reader, schema: &FeatureSchema) -> Result<Header, CheckpointError> {
    let magic: [u8; 5] = r.bytes().map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let v = r.u16()?;
    if v != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(v));
    }
    let tag = r.u8()?;
    let section = Section::from_code(tag).ok_or(CheckpointError::UnknownSection(tag))?;
    let kind = r.u8()?;
    let hash: [u8; 32] = r.bytes()?;
    if hash != schema.hash() {
        return Err(CheckpointError::SchemaMismatch { expected: hex::encode(schema.hash()), found: hex::encode(hash) });
    }
    let n = r.len(16)?;
    if n != schema.len() {
        return Err(corrupt(format!("{n} encoder statistics for a {}-feature schema", schema.len())));
    }
    let stats = (0..n).map(|_| Ok((r.f64()?, r.f64()?))).collect::<Result<Vec<_>, CheckpointError>>()?;
    Ok(Header { section, kind, stats })
}

fn finish<T>(r: &Reader, v: T) -> Result<T, CheckpointError> {
    if r.r.is_empty() {
        Ok(v)
    } else {
        Err(corrupt(format!("{} trailing bytes", r.r.len())))
    }
}

pub fn load_model(bytes: &[u8], schema: &FeatureSchema) -> Result<RatingModel, CheckpointError> {
    let mut r = Reader { r: bytes };
    let h = read_header(&mut r, schema)?;
    let kind = *ModelKind::ALL.get(h.kind as usize).ok_or_else(|| corrupt(format!("model kind {}", h.kind)))?;
    if h.section == Section::Encoder {
        return Err(CheckpointError::WrongSection { expected: "model", found: h.section });
    }
    if expected_section(kind) != h.section {
        return Err(corrupt(format!("{} model stored in a {:?} section", kind.name(), h.section)));
    }
    let encoder = Encoder::from_stats(schema, &h.stats);
    let body = match h.section {
        Section::Net => ModelBody::Net(r.net()?),
        Section::Hierarchical => {
            let coarse = r.net()?;
            let n = r.len(0)?;
            if n != CoarseRating::COUNT || coarse.net.output_dim() != CoarseRating::COUNT {
                return Err(corrupt("hierarchical model needs 5 coarse groups"));
            }
            let fine = (0..n).map(|_| r.net()).collect::<Result<Vec<_>, _>>()?;
            ModelBody::Hierarchical(HierarchicalModel { coarse, fine })
        }
        Section::Tree => ModelBody::Tree(r.tree()?),
        Section::Forest => {
            let features_per_split = r.len(0)?;
            let classes = r.len(0)?;
            let n = r.len(1)?;
            let trees = (0..n).map(|_| r.tree()).collect::<Result<Vec<_>, _>>()?;
            ModelBody::Forest(ForestModel { trees, features_per_split, classes })
        }
        Section::Gbt => {
            let shrinkage = r.f64()?;
            let k = r.len(9)?;
            let mut base = Vec::with_capacity(k);
            for _ in 0..k {
                let present = r.u8()?;
                let v = r.f64()?;
                base.push((present != 0).then_some(v));
            }
            let mut trees = Vec::with_capacity(k);
            for _ in 0..k {
                let n = r.len(1)?;
                trees.push((0..n).map(|_| r.tree()).collect::<Result<Vec<_>, _>>()?);
            }
            ModelBody::Gbt(GbtModel { base, trees, shrinkage })
        }
        Section::Encoder => unreachable!(),
    };
    let dim = encoder.encoded_dim();
    let nets: Vec<&NetClassifier> = match &body {
        ModelBody::Net(n) => vec![n],
        ModelBody::Hierarchical(h) => std::iter::once(&h.coarse).chain(&h.fine).collect(),
        _ => vec![],
    };
    if nets.iter().any(|n| n.net.input_dim() != dim) {
        return Err(corrupt("network input width differs from the encoded dimension"));
    }
    finish(&r, RatingModel { kind, encoder, body })
}

pub fn load_encoder(bytes: &[u8], schema: &FeatureSchema) -> Result<(ScarfEncoder, Encoder), CheckpointError> {
    let mut r = Reader { r: bytes };
    let h = read_header(&mut r, schema)?;
    if h.section != Section::Encoder {
        return Err(CheckpointError::WrongSection { expected: "encoder", found: h.section });
    }
    let epochs = r.len(0)?;
    let temperature = r.f64()?;
    let corruption_rate = r.f64()?;
    let n = r.len(8)?;
    let losses = r.f64s(n)?;
    let net = r.net()?.net;
    let enc = ScarfEncoder { net, epochs, temperature, corruption_rate, losses };
    finish(&r, (enc, Encoder::from_stats(schema, &h.stats)))
}

pub fn write_model(path: &Path, model: &RatingModel, schema: &FeatureSchema) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(&save_model(model, schema)).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))
}

/// Model and the version string of its bytes.
pub fn read_model(path: &Path, schema: &FeatureSchema) -> Result<(RatingModel, String), CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
    Ok((load_model(&bytes, schema)?, checkpoint_version(&bytes)))
}
