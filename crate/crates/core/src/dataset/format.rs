//! KFV1 binary feature files and the CSV alternative.
//!
//! KFV1 layout, little-endian, no padding:
//!
//! ```text
//! "KFV1" | u32 version=1 | u32 n_samples | u32 feature_dim | u32 n_classes
//! u16 tag_len | tag bytes (UTF-8)
//! n_classes × (u16 len | name bytes)
//! n_samples × feature_dim f32, row-major
//! n_samples × u16 label
//! ```

use std::path::Path;

use super::FeatureDataset;
use crate::error::{KanError, Result};

pub const KFV1_MAGIC: &[u8; 4] = b"KFV1";
pub const KFV1_VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str, what: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| KanError::Format(format!("{what} is {} bytes, limit is 65535", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| KanError::Format(format!("{what} {v} does not fit in u32")))
}

/// Serializes a dataset to KFV1 bytes. Empty datasets are rejected.
pub fn encode_kfv1(dataset: &FeatureDataset) -> Result<Vec<u8>> {
    let n = dataset.n_samples();
    if n == 0 {
        return Err(KanError::Format(
            "refusing to write a dataset with zero samples".into(),
        ));
    }
    let dim = dataset.feature_dim();
    let mut out = Vec::with_capacity(32 + n * dim * 4 + n * 2);
    out.extend_from_slice(KFV1_MAGIC);
    out.extend_from_slice(&KFV1_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(n, "n_samples")?.to_le_bytes());
    out.extend_from_slice(&to_u32(dim, "feature_dim")?.to_le_bytes());
    out.extend_from_slice(&to_u32(dataset.n_classes(), "n_classes")?.to_le_bytes());
    put_str(&mut out, dataset.backbone_tag(), "backbone tag")?;
    for name in dataset.class_names() {
        put_str(&mut out, name, "class name")?;
    }
    for &v in dataset.features() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &label in dataset.labels() {
        let l = u16::try_from(label)
            .map_err(|_| KanError::Format(format!("label {label} does not fit in u16")))?;
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                KanError::Format(format!(
                    "truncated file: need {n} bytes for {what} at offset {}, {} remain",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| KanError::Format(format!("{what} is not valid UTF-8")))
    }
}

/// Parses KFV1 bytes into a validated dataset.
pub fn decode_kfv1(bytes: &[u8]) -> Result<FeatureDataset> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != KFV1_MAGIC {
        return Err(KanError::Format(format!(
            "bad magic {magic:?}, expected \"KFV1\""
        )));
    }
    let version = r.u32("version")?;
    if version != KFV1_VERSION {
        return Err(KanError::Format(format!(
            "unsupported KFV1 version {version}"
        )));
    }
    let n = r.u32("n_samples")? as usize;
    let dim = r.u32("feature_dim")? as usize;
    let n_classes = r.u32("n_classes")? as usize;
    if n == 0 {
        return Err(KanError::Format("file holds zero samples".into()));
    }
    if dim == 0 {
        return Err(KanError::Format("feature_dim is zero".into()));
    }
    if n_classes < 2 {
        return Err(KanError::Format(format!(
            "need at least 2 classes, header says {n_classes}"
        )));
    }
    let tag = r.string("backbone tag")?;
    let mut class_names = Vec::with_capacity(n_classes.min(1 << 16));
    for c in 0..n_classes {
        class_names.push(r.string(&format!("class name {c}"))?);
    }
    let n_values = n
        .checked_mul(dim)
        .ok_or_else(|| KanError::Format("n_samples × feature_dim overflows".into()))?;
    let feature_bytes = n_values
        .checked_mul(4)
        .ok_or_else(|| KanError::Format("feature payload size overflows".into()))?;
    let raw = r.take(feature_bytes, "feature payload")?;
    let features: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let raw = r.take(n * 2, "labels")?;
    let labels: Vec<usize> = raw
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect();
    if r.pos != bytes.len() {
        return Err(KanError::Format(format!(
            "{} trailing bytes after labels",
            bytes.len() - r.pos
        )));
    }
    FeatureDataset::new(features, dim, labels, class_names, tag)
}

/// Writes `dataset` as KFV1, replacing any existing file and creating
/// missing parent directories.
pub fn save_features(dataset: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_kfv1(dataset)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| KanError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| KanError::io(path, e))
}

/// Loads a KFV1 file, or a CSV file with header `label,class_name,f0,…`.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| KanError::io(path, e))?;
    if bytes.starts_with(KFV1_MAGIC) {
        return decode_kfv1(&bytes);
    }
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return parse_csv(&bytes);
    }
    let head = &bytes[..bytes.len().min(4)];
    Err(KanError::Format(format!(
        "{}: bad magic {head:?}, expected \"KFV1\" or a .csv file",
        path.display()
    )))
}

fn parse_csv(bytes: &[u8]) -> Result<FeatureDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| KanError::Format(format!("csv header: {e}")))?
        .clone();
    if headers.len() < 3 || &headers[0] != "label" || &headers[1] != "class_name" {
        return Err(KanError::Format(
            "csv header must be label,class_name,f0,...,f{D-1}".into(),
        ));
    }
    for (j, h) in headers.iter().skip(2).enumerate() {
        if h != format!("f{j}") {
            return Err(KanError::Format(format!(
                "csv column {} should be f{j}, found {h}",
                j + 2
            )));
        }
    }
    let dim = headers.len() - 2;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut names: Vec<Option<String>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| KanError::Format(format!("csv row {}: {e}", line + 1)))?;
        if record.len() != dim + 2 {
            return Err(KanError::Format(format!(
                "csv row {} has {} fields, expected {}",
                line + 1,
                record.len(),
                dim + 2
            )));
        }
        let label: usize = record[0].trim().parse().map_err(|_| {
            KanError::Format(format!("csv row {}: bad label {:?}", line + 1, &record[0]))
        })?;
        if label >= names.len() {
            names.resize(label + 1, None);
        }
        match &names[label] {
            Some(existing) if existing != &record[1] => {
                return Err(KanError::Format(format!(
                    "csv row {}: label {label} named both {existing:?} and {:?}",
                    line + 1,
                    &record[1]
                )));
            }
            Some(_) => {}
            None => names[label] = Some(record[1].to_string()),
        }
        for field in record.iter().skip(2) {
            let v: f32 = field.trim().parse().map_err(|_| {
                KanError::Format(format!("csv row {}: bad feature {field:?}", line + 1))
            })?;
            features.push(v);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(KanError::Format("csv file holds zero samples".into()));
    }
    let class_names = names
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.unwrap_or_else(|| format!("class_{i}")))
        .collect();
    FeatureDataset::new(features, dim, labels, class_names, "csv")
}
