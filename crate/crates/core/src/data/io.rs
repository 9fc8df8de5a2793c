use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabeledRecord, OutcomeKind, SplitDataset, SyntheticSpec, UnlabeledRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// JSON sidecar written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DatasetMetadata<T> {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub dim: usize,
    pub outcome_kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SyntheticSpec<T>>,
}

impl<T: Scalar> DatasetMetadata<T> {
    pub fn of(ds: &SplitDataset<T>, spec: Option<SyntheticSpec<T>>) -> Self {
        Self { n: ds.n(), big_n: ds.big_n(), dim: ds.dim(), outcome_kind: ds.outcome_kind(), spec }
    }
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the dataset as CSV with header `x_0..x_{d-1},y,f`. Labeled rows
/// come first; unlabeled rows leave `y` empty. Values use the shortest
/// representation that parses back to the same float.
pub fn write_csv<T: Scalar>(ds: &SplitDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x_{j}")).collect();
    header.push("y".into());
    header.push("f".into());
    writeln!(w, "{}", header.join(","))?;
    let row = |x: &[T], y: Option<T>, f: T| {
        let mut cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        cells.push(y.map(|v| v.to_string()).unwrap_or_default());
        cells.push(f.to_string());
        cells.join(",")
    };
    for r in ds.labeled() {
        writeln!(w, "{}", row(&r.x, Some(r.y), r.f))?;
    }
    for r in ds.unlabeled() {
        writeln!(w, "{}", row(&r.x, None, r.f))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metadata<T: Scalar>(meta: &DatasetMetadata<T>, csv_path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = sidecar_path(csv_path.as_ref());
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), meta)?;
    Ok(path)
}

pub fn read_metadata<T: Scalar>(csv_path: impl AsRef<Path>) -> Result<Option<DatasetMetadata<T>>> {
    let path = sidecar_path(csv_path.as_ref());
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_reader(File::open(path)?)?))
}

/// Reads a dataset CSV. The outcome kind comes from the JSON sidecar when
/// present; otherwise a file whose labeled `y` values are all 0 or 1 is
/// read as binary.
pub fn read_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<SplitDataset<T>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    let width = header.len();
    if width < 2 || &header[width - 2] != "y" || &header[width - 1] != "f" {
        return Err(Error::Parse { line: 1, message: "header must end with `y,f`".into() });
    }
    let dim = width - 2;
    for (j, name) in header.iter().take(dim).enumerate() {
        if name != format!("x_{j}") {
            return Err(Error::Parse { line: 1, message: format!("expected column `x_{j}`, found `{name}`") });
        }
    }
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::Parse { line, message: format!("expected {width} fields, found {}", rec.len()) });
        }
        let parse = |s: &str, col: &str| -> Result<T> {
            let v: f64 =
                s.parse().map_err(|_| Error::Parse { line, message: format!("column `{col}`: cannot parse `{s}`") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("column `{col}`: non-finite value") });
            }
            Ok(T::of(v))
        };
        let x = (0..dim).map(|j| parse(&rec[j], &header[j])).collect::<Result<Vec<T>>>()?;
        let f = parse(&rec[dim + 1], "f")?;
        if rec[dim].is_empty() {
            unlabeled.push(UnlabeledRecord::new(x, f));
        } else {
            labeled.push(LabeledRecord::new(x, parse(&rec[dim], "y")?, f));
        }
    }
    let kind = match read_metadata::<T>(path)? {
        Some(meta) => meta.outcome_kind,
        None if !labeled.is_empty() && labeled.iter().all(|r| r.y == T::zero() || r.y == T::one()) => {
            OutcomeKind::Binary
        }
        None => OutcomeKind::Continuous,
    };
    SplitDataset::new(labeled, unlabeled, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate;
    use proptest::prelude::*;

    #[test]
    fn empty_y_rows_are_unlabeled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "x_0,y,f\n1.5,2,2.5\n0.5,,3\n").unwrap();
        let ds: SplitDataset<f64> = read_csv(&p).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.unlabeled(), &[UnlabeledRecord::new(vec![0.5], 3.0)]);
        assert_eq!(ds.outcome_kind(), OutcomeKind::Continuous);
    }

    #[test]
    fn zero_dimensional_file_matches_builder() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mean.csv");
        std::fs::write(&p, "y,f\n1,1\n0,1\n,0\n,1\n").unwrap();
        let ds: SplitDataset<f64> = read_csv(&p).unwrap();
        let expected = SplitDataset::from_columns(&[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], OutcomeKind::Binary).unwrap();
        assert_eq!(ds, expected);
        assert_eq!(ds.dim(), 0);
    }

    #[test]
    fn malformed_rows_report_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "x_0,y,f\n1,2,3\n1,abc,3\n").unwrap();
        match read_csv::<f64>(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "x_0,y,f\n1,2,3\n1,2\n").unwrap();
        assert!(matches!(read_csv::<f64>(&p), Err(Error::Parse { line: 3, .. })));
        std::fs::write(&p, "a,y,f\n1,2,3\n").unwrap();
        assert!(matches!(read_csv::<f64>(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn generated_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let mut spec = SyntheticSpec::continuous(40, 25, 0.3, 0.7, 5);
        spec.dim = 2;
        spec.theta_star = vec![0.25, -1.0];
        let ds = generate(&spec).unwrap();
        write_csv(&ds, &p).unwrap();
        write_metadata(&DatasetMetadata::of(&ds, Some(spec.clone())), &p).unwrap();
        let back: SplitDataset<f64> = read_csv(&p).unwrap();
        assert_eq!(back, ds);
        let meta: DatasetMetadata<f64> = read_metadata(&p).unwrap().unwrap();
        assert_eq!(meta.spec, Some(spec));
        assert_eq!((meta.n, meta.big_n), (40, 25));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn csv_round_trip_is_lossless(
            ys in proptest::collection::vec(-1e12f64..1e12, 1..20),
            fu in proptest::collection::vec(-1e-9f64..1e-9, 0..10),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.csv");
            let fl: Vec<f64> = ys.iter().map(|v| v * 0.5 + 1e-300).collect();
            let ds = SplitDataset::from_columns(&ys, &fl, &fu, OutcomeKind::Continuous).unwrap();
            write_csv(&ds, &p).unwrap();
            write_metadata(&DatasetMetadata::<f64>::of(&ds, None), &p).unwrap();
            let back: SplitDataset<f64> = read_csv(&p).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
