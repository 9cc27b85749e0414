//! Text format:
//!
//! ```text
//! ROWSSL-EMB 1
//! N d C_old C_new
//! id true_label is_labeled v_1 ... v_d
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{EmbeddingDataset, Sample};
use crate::error::{Error, Result};
use crate::numerics::DenseVector;

pub const MAGIC: &str = "ROWSSL-EMB 1";

/// Writes floats with the shortest representation that parses back to the
/// same bits.
pub fn write_dataset<W: Write>(ds: &EmbeddingDataset, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{} {} {} {}", ds.len(), ds.dim(), ds.known_classes(), ds.novel_classes())?;
    for s in ds.samples() {
        write!(w, "{} {} {}", s.id, s.label, u8::from(s.labeled))?;
        for v in s.vector.iter() {
            write!(w, " {v:?}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_dataset(ds, BufWriter::new(file))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_dataset(BufReader::new(file), path)
}

fn parse<T: std::str::FromStr>(tok: &str, what: &str, path: &Path, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse {what} from {tok:?}"),
    })
}

/// `origin` only labels error messages.
pub fn read_dataset<R: Read>(reader: R, origin: impl Into<PathBuf>) -> Result<EmbeddingDataset> {
    let path: PathBuf = origin.into();
    let err = |line: usize, msg: String| Error::Parse { path: path.clone(), line, msg };
    let mut lines = BufReader::new(reader).lines();

    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic != MAGIC {
        return Err(err(1, format!("expected header {MAGIC:?}, found {magic:?}")));
    }
    let header = lines.next().transpose()?.ok_or_else(|| err(2, "missing size line".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 {
        return Err(err(2, format!("size line needs 4 fields, found {}", fields.len())));
    }
    let n: usize = parse(fields[0], "N", &path, 2)?;
    let dim: usize = parse(fields[1], "d", &path, 2)?;
    let known: usize = parse(fields[2], "C_old", &path, 2)?;
    let novel: usize = parse(fields[3], "C_new", &path, 2)?;

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let line_no = i + 3;
        let line = lines
            .next()
            .transpose()?
            .ok_or_else(|| err(line_no, format!("expected {n} samples, file ends after {i}")))?;
        let toks: Vec<&str> = line.split(' ').collect();
        if toks.len() != dim + 3 {
            return Err(err(line_no, format!("expected {} columns, found {}", dim + 3, toks.len())));
        }
        let id: u64 = parse(toks[0], "id", &path, line_no)?;
        let label: usize = parse(toks[1], "true_label", &path, line_no)?;
        let labeled = match toks[2] {
            "0" => false,
            "1" => true,
            other => return Err(err(line_no, format!("is_labeled must be 0 or 1, found {other:?}"))),
        };
        let mut values = Vec::with_capacity(dim);
        for t in &toks[3..] {
            let v: f64 = parse(t, "value", &path, line_no)?;
            if !v.is_finite() {
                return Err(err(line_no, format!("non-finite value {t:?}")));
            }
            values.push(v);
        }
        samples.push(Sample { id, vector: DenseVector::new(values)?, label, labeled });
    }
    if let Some(extra) = lines.next().transpose()? {
        if !extra.is_empty() {
            return Err(err(n + 3, "unexpected data after the last sample".into()));
        }
    }
    EmbeddingDataset::new(dim, known, novel, samples)
}
