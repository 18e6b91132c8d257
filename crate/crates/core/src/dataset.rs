//! Dense data matrices, class labels, their on-disk formats, a synthetic
//! Gaussian-mixture generator and stratified fold splitting.

use std::fs;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg, io_err, Error, Result};
use crate::projection::{streams, RngStream};

const MATRIX_MAGIC: &[u8; 4] = b"ANNM";
const LABEL_MAGIC: &[u8; 4] = b"ANNL";
const FORMAT_VERSION: u32 = 1;

/// Dense row-major `n x d` matrix of `f32` values. Row `i` is point `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
}

impl DataMatrix {
    /// Wraps `values` as an `n x d` matrix. Rejects empty shapes, length
    /// mismatches and non-finite entries.
    pub fn new(n: usize, d: usize, values: Vec<f32>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(arg(format!("matrix shape must be non-empty, got {n}x{d}")));
        }
        if n.checked_mul(d) != Some(values.len()) {
            return Err(arg(format!(
                "matrix {n}x{d} needs {} values, got {}",
                n.saturating_mul(d),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(arg(format!("non-finite value at row {}, column {}", pos / d, pos % d)));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(arg("rows have unequal lengths"));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.d)
    }

    /// Copies the given rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(arg(format!("row {i} out of range for n={}", self.n)));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.d, values)
    }

    /// 64-bit FNV-1a over the little-endian payload bytes.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv1a::new();
        for v in &self.values {
            h.write(&v.to_le_bytes());
        }
        h.finish()
    }
}

/// 64-bit FNV-1a hasher.
#[derive(Clone, Copy, Debug)]
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

/// Class ids with index-aligned display names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    ids: Vec<u32>,
    class_names: Vec<String>,
}

impl LabelVector {
    /// Every id must be `< class_names.len()` and every class must occur.
    pub fn new(ids: Vec<u32>, class_names: Vec<String>) -> Result<Self> {
        let c = class_names.len();
        let mut seen = vec![false; c];
        for (i, &id) in ids.iter().enumerate() {
            let slot = seen
                .get_mut(id as usize)
                .ok_or_else(|| arg(format!("label {id} at position {i} out of range for {c} classes")))?;
            *slot = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(arg(format!(
                "class {missing} ({:?}) has no members",
                class_names[missing]
            )));
        }
        Ok(Self { ids, class_names })
    }

    /// Factorizes string labels by first appearance.
    pub fn from_strings<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut class_names: Vec<String> = Vec::new();
        let mut lookup = std::collections::HashMap::new();
        let ids = labels
            .iter()
            .map(|s| {
                let s = s.as_ref();
                *lookup.entry(s.to_owned()).or_insert_with(|| {
                    class_names.push(s.to_owned());
                    (class_names.len() - 1) as u32
                })
            })
            .collect();
        Self { ids, class_names }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Labels of the given positions. The class id space (and names) is
    /// kept whole, so a subset may leave some classes without members.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

pub fn load_csv(
    path: &Path,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<(DataMatrix, Option<LabelVector>)> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_csv(file, has_header, label_column)
}

/// Parses CSV records into a matrix; `label_column` (0-based) is split off
/// and factorized by first appearance.
pub fn read_csv<R: Read>(
    reader: R,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<(DataMatrix, Option<LabelVector>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut arity = None;
    let mut n = 0usize;
    for (row, record) in rdr.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| Error::Format(format!("record {row}: {e}")))?;
        match arity {
            None => arity = Some(record.len()),
            Some(a) if a != record.len() => {
                return Err(Error::Format(format!(
                    "record {row} has {} fields, expected {a}",
                    record.len()
                )))
            }
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == label_column {
                labels.push(cell.trim().to_owned());
                continue;
            }
            let v: f32 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("record {row}, column {}: cannot parse {cell:?}", col + 1)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "record {row}, column {}: non-finite value {cell:?}",
                    col + 1
                )));
            }
            values.push(v);
        }
        n += 1;
    }
    let arity = arity.ok_or_else(|| Error::Format("empty CSV input".into()))?;
    if let Some(lc) = label_column {
        if lc >= arity {
            return Err(Error::Format(format!(
                "label column {lc} out of range for {arity} fields"
            )));
        }
    }
    let d = arity - usize::from(label_column.is_some());
    if d == 0 {
        return Err(Error::Format("no feature columns".into()));
    }
    let matrix = DataMatrix::new(n, d, values).map_err(|e| Error::Format(e.to_string()))?;
    let labels = label_column.map(|_| LabelVector::from_strings(&labels));
    Ok((matrix, labels))
}

/// Writes the matrix as CSV without header, using shortest round-trip
/// float formatting.
pub fn write_csv<W: std::io::Write>(matrix: &DataMatrix, labels: Option<&LabelVector>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, row) in matrix.rows().enumerate() {
        let mut fields: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(l) = labels {
            fields.push(l.class_names()[l.ids()[i] as usize].clone());
        }
        fields.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&fields).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn encode_matrix(matrix: &DataMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + matrix.values.len() * 4);
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.n as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.d as u64).to_le_bytes());
    for v in &matrix.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DataMatrix> {
    let mut r = ByteReader::new(bytes);
    r.magic(MATRIX_MAGIC)?;
    r.version()?;
    let n = r.u64()?;
    let d = r.u64()?;
    let payload = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("shape {n}x{d} overflows")))?;
    let available = r.remaining() as u64;
    if available < payload {
        return Err(Error::Truncated {
            required: payload,
            available,
        });
    }
    if available > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            available - payload
        )));
    }
    let values = r
        .take(payload as usize)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DataMatrix::new(n as usize, d as usize, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_binary(matrix: &DataMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_matrix(matrix)).map_err(io_err(path))
}

pub fn load_binary(path: &Path) -> Result<DataMatrix> {
    decode_matrix(&fs::read(path).map_err(io_err(path))?)
}

pub fn encode_labels(labels: &LabelVector) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(LABEL_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(labels.ids.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(labels.class_names.len() as u64).to_le_bytes());
    for id in &labels.ids {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    for name in &labels.class_names {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    buf
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelVector> {
    let mut r = ByteReader::new(bytes);
    r.magic(LABEL_MAGIC)?;
    r.version()?;
    let n = r.u64()? as usize;
    let c = r.u64()? as usize;
    let ids = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let mut names = Vec::with_capacity(c.min(1 << 16));
    for _ in 0..c {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        names.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::Format("class name is not valid UTF-8".into()))?);
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    LabelVector::new(ids, names).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_labels(labels: &LabelVector, path: &Path) -> Result<()> {
    fs::write(path, encode_labels(labels)).map_err(io_err(path))
}

pub fn load_labels(path: &Path) -> Result<LabelVector> {
    decode_labels(&fs::read(path).map_err(io_err(path))?)
}

/// Little-endian cursor shared by the binary decoders.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(Error::Truncated {
                required: (self.pos + len) as u64,
                available: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found = self.take(4)?;
        if found != expected {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub(crate) fn version(&mut self) -> Result<()> {
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(Error::BadVersion(v)),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Gaussian mixture: `c` centers uniform in `[-1, 1]^d`, point `i` belongs
/// to class `i % c` and sits at its center plus isotropic noise with
/// standard deviation `spread`.
pub fn generate_synthetic(n: usize, d: usize, c: usize, spread: f64, seed: u64) -> Result<(DataMatrix, LabelVector)> {
    if c == 0 || n < c {
        return Err(arg(format!("need n >= classes >= 1, got n={n}, classes={c}")));
    }
    if d == 0 {
        return Err(arg("d must be at least 1"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(arg(format!("spread must be positive, got {spread}")));
    }
    let mut rng = RngStream::new(seed, streams::SYNTHETIC);
    let centers: Vec<f64> = (0..c * d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut values = Vec::with_capacity(n * d);
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % c;
        ids.push(class as u32);
        let center = &centers[class * d..(class + 1) * d];
        for &mu in center {
            let z: f64 = rng.sample(StandardNormal);
            values.push((mu + spread * z) as f32);
        }
    }
    let names = (0..c).map(|k| format!("class{k}")).collect();
    Ok((DataMatrix::new(n, d, values)?, LabelVector::new(ids, names)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Fold {
    /// Ascending.
    pub train: Vec<usize>,
    /// Ascending.
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub fold_count: usize,
    pub seed: u64,
}

/// Shuffles each class's members (seeded) and deals them round-robin over
/// the folds. The dealing position carries over between classes so that
/// fold sizes also stay within one of each other.
pub fn stratified_kfold(labels: &LabelVector, fold_count: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if fold_count < 2 {
        return Err(arg(format!("fold_count must be at least 2, got {fold_count}")));
    }
    if fold_count > n {
        return Err(arg(format!("fold_count {fold_count} exceeds n={n}")));
    }
    let mut members = vec![Vec::new(); labels.class_count()];
    for (i, &id) in labels.ids().iter().enumerate() {
        members[id as usize].push(i);
    }
    let mut rng = RngStream::new(seed, streams::FOLDS);
    let mut fold_of = vec![0usize; n];
    let mut next = 0usize;
    for class in &mut members {
        class.shuffle(&mut rng);
        for &i in class.iter() {
            fold_of[i] = next;
            next = (next + 1) % fold_count;
        }
    }
    let folds = (0..fold_count)
        .map(|f| {
            let (test, train) = (0..n).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect();
    Ok(FoldPlan {
        folds,
        fold_count,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str, label: Option<usize>) -> Result<(DataMatrix, Option<LabelVector>)> {
        read_csv(text.as_bytes(), false, label)
    }

    #[test]
    fn csv_plain_matrix() {
        let (m, l) = csv("1,2\n3,4\n5,6", None).unwrap();
        assert_eq!((m.n(), m.d()), (3, 2));
        assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(l.is_none());
    }

    #[test]
    fn csv_labels_factorized_by_first_appearance() {
        let (m, l) = csv("a,1.0\nb,2.0\na,3.0", Some(0)).unwrap();
        let l = l.unwrap();
        assert_eq!(m.d(), 1);
        assert_eq!(l.ids(), &[0, 1, 0]);
        assert_eq!(l.class_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(csv("1,NaN\n", None), Err(Error::Format(_))));
        assert!(matches!(csv("1,inf\n", None), Err(Error::Format(_))));
        let e = csv("1,2\n3\n", None).unwrap_err().to_string();
        assert!(e.contains("record 2"), "{e}");
        let e = csv("1,2\n3,x\n", None).unwrap_err().to_string();
        assert!(e.contains("record 2, column 2"), "{e}");
        assert!(matches!(csv("", None), Err(Error::Format(_))));
    }

    #[test]
    fn csv_header_skipped() {
        let (m, _) = read_csv("x,y\n1,2\n".as_bytes(), true, None).unwrap();
        assert_eq!(m.n(), 1);
    }

    #[test]
    fn matrix_file_layout() {
        let m = DataMatrix::new(1, 1, vec![0.0]).unwrap();
        let bytes = encode_matrix(&m);
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..4], b"ANNM");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
    }

    #[test]
    fn matrix_decode_errors() {
        let m = DataMatrix::new(2, 3, vec![1.0; 6]).unwrap();
        let mut bytes = encode_matrix(&m);
        bytes.truncate(24 + 20);
        match decode_matrix(&bytes) {
            Err(Error::Truncated { required, available }) => assert_eq!((required, available), (24, 20)),
            other => panic!("{other:?}"),
        }
        let mut bad = encode_matrix(&m);
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_matrix(&bad), Err(Error::BadMagic { .. })));
        let mut bad = encode_matrix(&m);
        bad[4] = 2;
        assert!(matches!(decode_matrix(&bad), Err(Error::BadVersion(2))));
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(DataMatrix::new(0, 3, vec![]).is_err());
        assert!(DataMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let l = LabelVector::from_strings(&["x", "yy", "x", "zé"]);
        assert_eq!(decode_labels(&encode_labels(&l)).unwrap(), l);
    }

    #[test]
    fn synthetic_is_deterministic_and_round_robin() {
        let a = generate_synthetic(10, 4, 2, 0.1, 7).unwrap();
        let b = generate_synthetic(10, 4, 2, 0.1, 7).unwrap();
        assert_eq!(a, b);
        let (_, l) = generate_synthetic(10, 4, 3, 0.1, 1).unwrap();
        let mut sizes = [0; 3];
        for &id in l.ids() {
            sizes[id as usize] += 1;
        }
        assert_eq!(sizes, [4, 3, 3]);
        assert!(generate_synthetic(2, 4, 3, 0.1, 1).is_err());
        assert!(generate_synthetic(5, 4, 0, 0.1, 1).is_err());
        assert!(generate_synthetic(5, 4, 2, 0.0, 1).is_err());
    }

    #[test]
    fn tight_clusters_have_same_class_nearest_neighbor() {
        let (m, l) = generate_synthetic(60, 8, 4, 1e-9, 3).unwrap();
        // brute-force 1-NN, excluding self
        for i in 0..m.n() {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in (0..m.n()).filter(|&j| j != i) {
                let d: f64 = m
                    .row(i)
                    .iter()
                    .zip(m.row(j))
                    .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                    .sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            assert_eq!(l.ids()[i], l.ids()[best.1]);
        }
    }

    #[test]
    fn kfold_two_balanced_classes() {
        let l = LabelVector::new((0..10).map(|i| (i % 2) as u32).collect(), vec!["a".into(), "b".into()]).unwrap();
        let plan = stratified_kfold(&l, 5, 11).unwrap();
        let mut all: Vec<usize> = Vec::new();
        for f in &plan.folds {
            let mut ids: Vec<u32> = f.test.iter().map(|&i| l.ids()[i]).collect();
            ids.sort();
            assert_eq!(ids, vec![0, 1]);
            all.extend(&f.test);
        }
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_seed_sensitivity() {
        let (_, l) = generate_synthetic(40, 1, 3, 0.1, 0).unwrap();
        let base = stratified_kfold(&l, 4, 0).unwrap();
        assert_eq!(base, stratified_kfold(&l, 4, 0).unwrap());
        let differing = (1..=20)
            .filter(|&s| stratified_kfold(&l, 4, s).unwrap().folds != base.folds)
            .count();
        assert!(differing >= 19, "only {differing} of 20 seeds changed the plan");
    }

    #[test]
    fn kfold_argument_errors() {
        let l = LabelVector::from_strings(&["a", "b", "a"]);
        assert!(stratified_kfold(&l, 1, 0).is_err());
        assert!(stratified_kfold(&l, 4, 0).is_err());
    }
}
