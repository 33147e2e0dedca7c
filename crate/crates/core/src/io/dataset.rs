use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{read_container, read_file, write_atomic, write_container, FormatError, SignalContainer, SignalKind};
use crate::error::{Error, Result};
use crate::ist::ReconProblem;
use crate::sampling::Schedule;
use crate::scalar::Scalar;
use crate::spectral::{ComplexSeries, Domain, Shape};
use crate::training::{Dataset, DatasetSpec, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u64,
    /// Generating spec, if the set is synthetic.
    pub spec: Option<DatasetSpec>,
    pub n: usize,
    pub grid_n: usize,
    pub ve: bool,
    pub n_train: usize,
    pub n_valid: usize,
}

const SPLITS: [&str; 2] = ["train", "valid"];

fn write_split<T: Scalar>(dir: &Path, name: &str, samples: &[Sample<T>], grid_n: usize, ve: bool) -> Result<()> {
    let cast = |v: &Complex<T>| Complex::new(v.re.f64(), v.im.f64());
    let inputs: Vec<_> = samples.iter().flat_map(|s| s.problem.y_full.values().iter().map(cast)).collect();
    let labels: Vec<_> = samples.iter().flat_map(|s| s.label.values().iter().map(cast)).collect();
    let shape = Shape::Plane(samples.len(), grid_n);
    let inputs = SignalContainer::new(SignalKind::Fid, shape, ve, inputs)?;
    let labels = SignalContainer::new(SignalKind::Spectrum, shape, ve, labels)?;
    write_container(&inputs, &dir.join(format!("{name}_inputs.sig")))?;
    write_container(&labels, &dir.join(format!("{name}_labels.sig")))?;
    let mut masks = String::new();
    for s in samples {
        let idx: Vec<String> = s.problem.schedule.indices().iter().map(|i| i.to_string()).collect();
        masks.push_str(&idx.join(" "));
        masks.push('\n');
    }
    write_atomic(&dir.join(format!("{name}_masks.txt")), masks.as_bytes())?;
    Ok(())
}

/// Writes `manifest.json` and, per split, `<split>_inputs.sig` (zero-filled
/// working-grid signals, one row per sample), `<split>_labels.sig` (reference
/// spectra) and `<split>_masks.txt` (working-grid indices, one line per
/// sample).
pub fn write_dataset<T: Scalar>(data: &Dataset<T>, spec: Option<&DatasetSpec>, dir: &Path) -> Result<DatasetManifest> {
    let first = data
        .train
        .first()
        .ok_or_else(|| Error::invalid("dataset", "empty training split"))?;
    if first.problem.shape().dims() != 1 {
        return Err(Error::Unsupported("only line datasets can be written".into()));
    }
    std::fs::create_dir_all(dir).map_err(|source| FormatError::Io { path: dir.to_path_buf(), source })?;
    let grid_n = first.problem.shape().len();
    let manifest = DatasetManifest {
        format_version: 1,
        spec: spec.cloned(),
        n: first.problem.original_n,
        grid_n,
        ve: first.problem.ve,
        n_train: data.train.len(),
        n_valid: data.valid.len(),
    };
    for (name, samples) in SPLITS.iter().zip([&data.train, &data.valid]) {
        if samples.iter().any(|s| s.problem.shape().len() != grid_n || s.problem.ve != manifest.ve) {
            return Err(Error::Shape("samples differ in grid or virtual echo".into()));
        }
        write_split(dir, name, samples, grid_n, manifest.ve)?;
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(FormatError::from)?;
    write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

fn read_split<T: Scalar>(dir: &Path, name: &str, m: &DatasetManifest, count: usize) -> Result<Vec<Sample<T>>> {
    let inputs = read_container(&dir.join(format!("{name}_inputs.sig")))?;
    let labels = read_container(&dir.join(format!("{name}_labels.sig")))?;
    let expect = vec![count, m.grid_n];
    if count == 0 {
        return Ok(Vec::new());
    }
    if inputs.header.shape != expect || labels.header.shape != expect {
        return Err(Error::Shape(format!("{name} containers do not match manifest {expect:?}")));
    }
    let mpath = dir.join(format!("{name}_masks.txt"));
    let masks = String::from_utf8(read_file(&mpath)?).map_err(|_| FormatError::Table { line: 0, reason: "not UTF-8".into() })?;
    let lines: Vec<&str> = masks.lines().collect();
    if lines.len() != count {
        return Err(Error::Shape(format!("{} mask lines for {count} samples", lines.len())));
    }
    let cast = |v: &Complex<f64>| Complex::new(T::of(v.re), T::of(v.im));
    (0..count)
        .map(|q| {
            let idx = lines[q]
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| FormatError::Table { line: q + 1, reason: e.to_string() })?;
            let schedule = Schedule::new(Shape::Line(m.grid_n), idx, 0)?;
            let row = q * m.grid_n..(q + 1) * m.grid_n;
            let y = ComplexSeries::time(inputs.payload[row.clone()].iter().map(cast).collect())?;
            let label = ComplexSeries::line(labels.payload[row].iter().map(cast).collect(), Domain::Frequency)?;
            let problem = ReconProblem::new(y, schedule, m.ve, m.n)?;
            Ok(Sample { problem, label, peaks: Vec::new() })
        })
        .collect()
}

pub fn read_dataset<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, DatasetManifest)> {
    let bytes = read_file(&dir.join("manifest.json"))?;
    let m: DatasetManifest = serde_json::from_slice(&bytes).map_err(FormatError::from)?;
    if m.format_version != 1 {
        return Err(FormatError::VersionMismatch { found: m.format_version, supported: 1 }.into());
    }
    let train = read_split(dir, "train", &m, m.n_train)?;
    let valid = read_split(dir, "valid", &m, m.n_valid)?;
    Ok((Dataset { train, valid }, m))
}
