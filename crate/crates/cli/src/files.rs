//! File helpers: atomic writes and the small text formats used next to
//! animation files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use skinfit::anim::{read_anim, write_anim};
use skinfit::codec::{decode, MAGIC};
use skinfit::predictor::LabelSet;
use skinfit::{AnimSequence, SkinningModel, WeightMap};

/// Writes through a temporary file in the destination directory and
/// renames it into place, so a failed command never leaves a partial file.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        fill(&mut out)?;
        out.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_anim(path: &Path) -> Result<AnimSequence> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_anim(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

pub fn save_anim(path: &Path, seq: &AnimSequence) -> Result<()> {
    write_atomic(path, |out| Ok(write_anim(seq, out)?))
}

pub fn load_model(path: &Path) -> Result<SkinningModel> {
    let bytes = fs::read(path).with_context(|| format!("opening {}", path.display()))?;
    decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// True when the file starts with the compressed-container magic.
pub fn is_compressed(path: &Path) -> Result<bool> {
    let mut head = [0u8; 4];
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let n = std::io::Read::read(&mut file, &mut head)?;
    Ok(n == 4 && head == MAGIC)
}

/// `LABELS <N> <width>` followed by one row of 0/1 per vertex.
pub fn write_labels(out: &mut dyn Write, labels: &LabelSet) -> Result<()> {
    writeln!(out, "LABELS {} {}", labels.rows().len(), labels.width())?;
    for row in labels.rows() {
        let line: Vec<&str> = row.iter().map(|&v| if v == 1.0 { "1" } else { "0" }).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<LabelSet> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (n, width) = match fields.as_slice() {
        ["LABELS", n, w] => (n.parse::<usize>()?, w.parse::<usize>()?),
        _ => bail!("{}: bad label header `{header}`", path.display()),
    };
    let mut rows = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: line {}", path.display(), i + 2))?;
        if row.len() != width {
            bail!("{}: line {} has {} labels, expected {width}", path.display(), i + 2, row.len());
        }
        rows.push(row);
    }
    if rows.len() != n {
        bail!("{}: {} label rows, header says {n}", path.display(), rows.len());
    }
    LabelSet::new(rows).with_context(|| format!("validating {}", path.display()))
}

/// `WEIGHTS <N>` followed by `bone:weight` pairs per vertex.
pub fn write_weights(out: &mut dyn Write, weights: &WeightMap) -> Result<()> {
    writeln!(out, "WEIGHTS {}", weights.vertex_count())?;
    for vertex in weights.influences() {
        let line: Vec<String> = vertex.iter().map(|(b, w)| format!("{b}:{w:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Every `*.anim` file in `dir` with its sibling `.labels` file, sorted by
/// name.
pub fn dataset_files(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut pairs = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "anim") {
            let labels = path.with_extension("labels");
            if !labels.exists() {
                bail!("{} has no label file {}", path.display(), labels.display());
            }
            pairs.push((path, labels));
        }
    }
    if pairs.is_empty() {
        bail!("no .anim files in {}", dir.display());
    }
    pairs.sort();
    Ok(pairs)
}
