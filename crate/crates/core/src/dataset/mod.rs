//! Dataset manifests: deterministic, digestable listings of labeled images.
//!
//! A manifest pins down exactly what a training or evaluation run sees: the
//! record order, the labels, and a content digest over the serialized
//! records. Two manifests with equal digests describe the same dataset
//! view. Manifests come in two kinds: `downstream` (covid / non_covid
//! classification) and `pretext` (original / flipped orientation).

mod ingest;
mod pretext;

pub use ingest::{ingest_corpus, ingest_layout, merge_validation, ListingEntry, SplitListing};
pub use pretext::{build_pretext_dataset, horizontal_flip, take_fraction, STANDARD_FRACTIONS};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Covid,
    NonCovid,
}

impl ClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Covid => "covid",
            ClassLabel::NonCovid => "non_covid",
        }
    }

    /// Binary target; covid is the positive class.
    pub fn target(self) -> u8 {
        match self {
            ClassLabel::Covid => 1,
            ClassLabel::NonCovid => 0,
        }
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covid" => Ok(ClassLabel::Covid),
            "non_covid" => Ok(ClassLabel::NonCovid),
            other => Err(Error::Manifest(format!("unknown class label {other:?}"))),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Orientation {
    Original,
    Flipped,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Original => "original",
            Orientation::Flipped => "flipped",
        }
    }

    /// Binary target; flipped is the positive class.
    pub fn target(self) -> u8 {
        match self {
            Orientation::Original => 0,
            Orientation::Flipped => 1,
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Orientation::Original),
            "flipped" => Ok(Orientation::Flipped),
            other => Err(Error::Manifest(format!("unknown orientation {other:?}"))),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled image of the downstream classification task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub source_path: PathBuf,
    pub class_label: ClassLabel,
    /// Assigned at ingestion and never changed afterwards; the pre-arranged
    /// splits are kept to avoid patient leakage between train and test.
    pub split: Split,
    pub patient_id: Option<String>,
}

/// One image of the flip-detection pretext task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretextRecord {
    pub image_id: String,
    pub source_path: PathBuf,
    pub orientation_label: Orientation,
    pub split: Split,
    /// Lexicographic rank of the filename within its orientation folder.
    /// An original record and its flip share the same order_index.
    pub order_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestKind {
    Downstream,
    Pretext,
}

impl ManifestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ManifestKind::Downstream => "downstream",
            ManifestKind::Pretext => "pretext",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Records {
    Downstream(Vec<ImageRecord>),
    Pretext(Vec<PretextRecord>),
}

/// A training/evaluation sample in kind-independent form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub image_id: String,
    pub source_path: PathBuf,
    /// Positive class is covid (downstream) or flipped (pretext).
    pub label: u8,
}

/// Ordered, checksummed record listing. Immutable after construction; all
/// mutating operations return a new manifest with a freshly computed digest.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    fraction: f64,
    records: Records,
    content_digest: String,
}

const MANIFEST_MAGIC: &str = "# tss-manifest: v1";

fn check_field(what: &str, value: &str) -> Result<()> {
    if value.contains('\t') || value.contains('\n') || value.contains('\r') {
        return Err(Error::InvalidInput(format!(
            "{what} {value:?} contains tab or newline characters"
        )));
    }
    Ok(())
}

fn path_str(path: &Path) -> Result<&str> {
    path.to_str()
        .ok_or_else(|| Error::InvalidInput(format!("path {} is not valid UTF-8", path.display())))
}

impl DatasetManifest {
    /// Build a downstream manifest, validating id uniqueness.
    pub fn new_downstream(records: Vec<ImageRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            check_field("image_id", &r.image_id)?;
            check_field("source_path", path_str(&r.source_path)?)?;
            if let Some(p) = &r.patient_id {
                check_field("patient_id", p)?;
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::DuplicateImageId {
                    id: r.image_id.clone(),
                });
            }
        }
        let records = Records::Downstream(records);
        let content_digest = digest_of(&records);
        Ok(DatasetManifest {
            fraction: 1.0,
            records,
            content_digest,
        })
    }

    /// Build a pretext manifest, validating id uniqueness, orientation
    /// parity, and the pairing of original/flipped records by order_index.
    pub fn new_pretext(records: Vec<PretextRecord>, fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        let mut seen = BTreeSet::new();
        let mut by_index: BTreeMap<usize, Vec<&PretextRecord>> = BTreeMap::new();
        for r in &records {
            check_field("image_id", &r.image_id)?;
            check_field("source_path", path_str(&r.source_path)?)?;
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::DuplicateImageId {
                    id: r.image_id.clone(),
                });
            }
            by_index.entry(r.order_index).or_default().push(r);
        }
        for (idx, pair) in &by_index {
            let [a, b] = pair.as_slice() else {
                return Err(Error::Manifest(format!(
                    "order_index {idx} has {} records, expected an original/flipped pair",
                    pair.len()
                )));
            };
            if a.orientation_label == b.orientation_label {
                return Err(Error::Manifest(format!(
                    "order_index {idx} has two {} records",
                    a.orientation_label
                )));
            }
            if a.split != b.split {
                return Err(Error::Manifest(format!(
                    "order_index {idx} pairs a {} record with a {} record",
                    a.split, b.split
                )));
            }
        }
        let records = Records::Pretext(records);
        let content_digest = digest_of(&records);
        Ok(DatasetManifest {
            fraction,
            records,
            content_digest,
        })
    }

    pub fn kind(&self) -> ManifestKind {
        match &self.records {
            Records::Downstream(_) => ManifestKind::Downstream,
            Records::Pretext(_) => ManifestKind::Pretext,
        }
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn content_digest(&self) -> &str {
        &self.content_digest
    }

    pub fn len(&self) -> usize {
        match &self.records {
            Records::Downstream(r) => r.len(),
            Records::Pretext(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn downstream_records(&self) -> Result<&[ImageRecord]> {
        match &self.records {
            Records::Downstream(r) => Ok(r),
            Records::Pretext(_) => Err(Error::Manifest(
                "expected a downstream manifest, got a pretext manifest".into(),
            )),
        }
    }

    pub fn pretext_records(&self) -> Result<&[PretextRecord]> {
        match &self.records {
            Records::Pretext(r) => Ok(r),
            Records::Downstream(_) => Err(Error::Manifest(
                "expected a pretext manifest, got a downstream manifest".into(),
            )),
        }
    }

    pub fn image_ids(&self) -> Vec<&str> {
        match &self.records {
            Records::Downstream(r) => r.iter().map(|x| x.image_id.as_str()).collect(),
            Records::Pretext(r) => r.iter().map(|x| x.image_id.as_str()).collect(),
        }
    }

    /// Kind-independent (id, path, binary label) view used by training and
    /// evaluation. Positive class: covid / flipped.
    pub fn samples(&self) -> Vec<Sample> {
        match &self.records {
            Records::Downstream(r) => r
                .iter()
                .map(|x| Sample {
                    image_id: x.image_id.clone(),
                    source_path: x.source_path.clone(),
                    label: x.class_label.target(),
                })
                .collect(),
            Records::Pretext(r) => r
                .iter()
                .map(|x| Sample {
                    image_id: x.image_id.clone(),
                    source_path: x.source_path.clone(),
                    label: x.orientation_label.target(),
                })
                .collect(),
        }
    }

    /// New manifest containing only the records of one split, in order.
    pub fn filter_split(&self, split: Split) -> Result<DatasetManifest> {
        match &self.records {
            Records::Downstream(r) => DatasetManifest::new_downstream(
                r.iter().filter(|x| x.split == split).cloned().collect(),
            ),
            Records::Pretext(r) => DatasetManifest::new_pretext(
                r.iter().filter(|x| x.split == split).cloned().collect(),
                self.fraction,
            ),
        }
    }

    /// Record counts keyed by (split, label string); for reporting.
    pub fn counts(&self) -> BTreeMap<(Split, String), usize> {
        let mut out = BTreeMap::new();
        match &self.records {
            Records::Downstream(r) => {
                for x in r {
                    *out.entry((x.split, x.class_label.to_string())).or_insert(0) += 1;
                }
            }
            Records::Pretext(r) => {
                for x in r {
                    *out.entry((x.split, x.orientation_label.to_string()))
                        .or_insert(0) += 1;
                }
            }
        }
        out
    }

    pub fn split_count(&self, split: Split) -> usize {
        match &self.records {
            Records::Downstream(r) => r.iter().filter(|x| x.split == split).count(),
            Records::Pretext(r) => r.iter().filter(|x| x.split == split).count(),
        }
    }

    /// Serialize to the line-delimited manifest format:
    /// a commented header (format version, kind, fraction, digest) followed
    /// by one tab-separated record per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MANIFEST_MAGIC);
        out.push('\n');
        out.push_str(&format!("# kind: {}\n", self.kind().as_str()));
        out.push_str(&format!("# fraction: {}\n", self.fraction));
        out.push_str(&format!("# digest: {}\n", self.content_digest));
        for line in record_lines(&self.records) {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parse the manifest format, recomputing and verifying the digest.
    pub fn from_text(text: &str) -> Result<DatasetManifest> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default();
        if magic != MANIFEST_MAGIC {
            return Err(Error::Manifest(format!(
                "not a manifest file (first line {magic:?})"
            )));
        }
        let header = |line: Option<&str>, key: &str| -> Result<String> {
            let line = line.ok_or_else(|| Error::Manifest("truncated header".into()))?;
            let prefix = format!("# {key}: ");
            line.strip_prefix(&prefix)
                .map(str::to_string)
                .ok_or_else(|| Error::Manifest(format!("expected {key:?} header, got {line:?}")))
        };
        let kind = header(lines.next(), "kind")?;
        let fraction: f64 = header(lines.next(), "fraction")?
            .parse()
            .map_err(|_| Error::Manifest("bad fraction header".into()))?;
        let digest = header(lines.next(), "digest")?;

        let manifest = match kind.as_str() {
            "downstream" => {
                let records = lines
                    .map(parse_downstream_line)
                    .collect::<Result<Vec<_>>>()?;
                let m = DatasetManifest::new_downstream(records)?;
                if (fraction - 1.0).abs() > f64::EPSILON {
                    return Err(Error::Manifest(
                        "downstream manifests always have fraction 1".into(),
                    ));
                }
                m
            }
            "pretext" => {
                let records = lines.map(parse_pretext_line).collect::<Result<Vec<_>>>()?;
                DatasetManifest::new_pretext(records, fraction)?
            }
            other => return Err(Error::Manifest(format!("unknown manifest kind {other:?}"))),
        };
        if manifest.content_digest != digest {
            return Err(Error::Manifest(format!(
                "digest mismatch: header says {digest}, records hash to {}",
                manifest.content_digest
            )));
        }
        Ok(manifest)
    }

    pub fn read_from(path: &Path) -> Result<DatasetManifest> {
        if !path.exists() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DatasetManifest::from_text(&text)
    }
}

pub(crate) fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fraction must be in (0, 1], got {f}"
        )));
    }
    Ok(())
}

fn record_lines(records: &Records) -> Vec<String> {
    match records {
        Records::Downstream(rs) => rs
            .iter()
            .map(|r| {
                let mut line = format!(
                    "{}\t{}\t{}\t{}",
                    r.image_id,
                    r.source_path.display(),
                    r.class_label,
                    r.split
                );
                if let Some(p) = &r.patient_id {
                    line.push('\t');
                    line.push_str(p);
                }
                line
            })
            .collect(),
        Records::Pretext(rs) => rs
            .iter()
            .map(|r| {
                format!(
                    "{}\t{}\t{}\t{}\t{}",
                    r.image_id,
                    r.source_path.display(),
                    r.orientation_label,
                    r.split,
                    r.order_index
                )
            })
            .collect(),
    }
}

/// Digest of the logical content: ids, labels, splits, and ordering.
/// Source paths are deliberately excluded so relocating a dataset on disk
/// (or rebuilding it into another directory) keeps the digest.
fn digest_of(records: &Records) -> String {
    let content_lines: Vec<String> = match records {
        Records::Downstream(rs) => rs
            .iter()
            .map(|r| {
                let mut line = format!("{}\t{}\t{}", r.image_id, r.class_label, r.split);
                if let Some(p) = &r.patient_id {
                    line.push('\t');
                    line.push_str(p);
                }
                line
            })
            .collect(),
        Records::Pretext(rs) => rs
            .iter()
            .map(|r| {
                format!(
                    "{}\t{}\t{}\t{}",
                    r.image_id, r.orientation_label, r.split, r.order_index
                )
            })
            .collect(),
    };
    let mut hasher = Sha256::new();
    for (i, line) in content_lines.iter().enumerate() {
        if i > 0 {
            hasher.update(b"\n");
        }
        hasher.update(line.as_bytes());
    }
    let bytes = hasher.finalize();
    let mut hex = String::with_capacity(7 + 64);
    hex.push_str("sha256:");
    for b in bytes {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn parse_downstream_line(line: &str) -> Result<ImageRecord> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 && fields.len() != 5 {
        return Err(Error::Manifest(format!(
            "downstream record needs 4 or 5 fields, got {}: {line:?}",
            fields.len()
        )));
    }
    Ok(ImageRecord {
        image_id: fields[0].to_string(),
        source_path: PathBuf::from(fields[1]),
        class_label: fields[2].parse()?,
        split: fields[3].parse()?,
        patient_id: fields.get(4).map(|s| s.to_string()),
    })
}

fn parse_pretext_line(line: &str) -> Result<PretextRecord> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(Error::Manifest(format!(
            "pretext record needs 5 fields, got {}: {line:?}",
            fields.len()
        )));
    }
    Ok(PretextRecord {
        image_id: fields[0].to_string(),
        source_path: PathBuf::from(fields[1]),
        orientation_label: fields[2].parse()?,
        split: fields[3].parse()?,
        order_index: fields[4]
            .parse()
            .map_err(|_| Error::Manifest(format!("bad order_index in {line:?}")))?,
    })
}
