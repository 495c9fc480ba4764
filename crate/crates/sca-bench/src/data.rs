//! Dataset ingestion and preprocessing: CSV parsing with missing-value
//! markers, per-column median imputation over the whole dataset, affine
//! range normalization (inputs to `[-0.5, 0.5]`, regression targets to
//! `[-0.9, 0.9]`), seeded train/test splitting, and synthetic desk-scale
//! tasks.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sca_core::linalg::Mat;
use sca_core::{Dataset, TaskKind};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("ragged row at line {line}: expected {expected} fields, got {actual}")]
    RaggedRow {
        line: u64,
        expected: usize,
        actual: usize,
    },
    #[error("csv parse failure: {0}")]
    Csv(String),
    #[error("column {column} has no present values")]
    AllMissingColumn { column: usize },
    #[error("table still contains missing values (column {column})")]
    MissingValues { column: usize },
    #[error("column index {column} out of range for {width} columns")]
    ColumnOutOfRange { column: usize, width: usize },
    #[error("binary targets must be 0 or 1, found {value}")]
    NonBinaryTarget { value: f64 },
    #[error("{0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Core(#[from] sca_core::Error),
}

/// How to read one CSV file. Column indices refer to the file's original
/// column order.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub delimiter: u8,
    pub has_header: bool,
    /// Index of the prediction target.
    pub target_column: usize,
    /// Identifier or leakage columns to discard before training.
    pub drop_columns: Vec<usize>,
}

impl CsvSchema {
    pub fn comma(target_column: usize) -> CsvSchema {
        CsvSchema {
            delimiter: b',',
            has_header: true,
            target_column,
            drop_columns: Vec::new(),
        }
    }
}

/// Parsed numeric table; empty cells and non-numeric tokens are missing.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Option<Vec<String>>,
    pub rows: Vec<Vec<Option<f64>>>,
    width: usize,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.width
    }
}

/// Reads a delimited numeric file. Ragged rows are an error naming the
/// offending line; cells that do not parse as numbers (including the usual
/// `?` / `NA` markers) become missing values.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<RawTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DataError::Csv(e.to_string()),
        })?;
    let headers = if schema.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| DataError::Csv(e.to_string()))?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut width = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(i as u64 + 1);
        if width == 0 {
            width = record.len();
        } else if record.len() != width {
            return Err(DataError::RaggedRow {
                line,
                expected: width,
                actual: record.len(),
            });
        }
        rows.push(
            record
                .iter()
                .map(|cell| {
                    let trimmed = cell.trim();
                    if trimmed.is_empty() {
                        None
                    } else {
                        trimmed.parse::<f64>().ok().filter(|v| v.is_finite())
                    }
                })
                .collect(),
        );
    }
    Ok(RawTable {
        headers,
        rows,
        width,
    })
}

/// Replaces every missing cell with its column's median over the entire
/// table. Errors if a column has no present value at all.
pub fn impute_median(table: &mut RawTable) -> Result<(), DataError> {
    for col in 0..table.n_cols() {
        let mut present: Vec<f64> = table
            .rows
            .iter()
            .filter_map(|row| row[col])
            .collect();
        if present.is_empty() {
            return Err(DataError::AllMissingColumn { column: col });
        }
        if present.len() == table.n_rows() {
            continue;
        }
        present.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = present.len();
        let median = if m % 2 == 1 {
            present[m / 2]
        } else {
            0.5 * (present[m / 2 - 1] + present[m / 2])
        };
        for row in &mut table.rows {
            if row[col].is_none() {
                row[col] = Some(median);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeKind {
    /// Map each column's range onto `[-0.5, 0.5]`.
    Input,
    /// Map onto `[-0.9, 0.9]`.
    Output,
}

impl NormalizeKind {
    fn range(self) -> (f64, f64) {
        match self {
            NormalizeKind::Input => (-0.5, 0.5),
            NormalizeKind::Output => (-0.9, 0.9),
        }
    }
}

/// Per-column affine map, kept so predictions can be mapped back to the
/// original units. Constant columns map to the range midpoint and invert to
/// their original value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColumnAffine {
    pub src_min: f64,
    pub src_max: f64,
    pub dst_lo: f64,
    pub dst_hi: f64,
}

impl ColumnAffine {
    fn fit(values: impl Iterator<Item = f64>, kind: NormalizeKind) -> ColumnAffine {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let (dst_lo, dst_hi) = kind.range();
        ColumnAffine {
            src_min: lo,
            src_max: hi,
            dst_lo,
            dst_hi,
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.src_max == self.src_min {
            0.5 * (self.dst_lo + self.dst_hi)
        } else {
            let mapped = self.dst_lo
                + (v - self.src_min) * (self.dst_hi - self.dst_lo)
                    / (self.src_max - self.src_min);
            // rounding may overshoot the endpoints by an ulp
            mapped.clamp(self.dst_lo.min(self.dst_hi), self.dst_lo.max(self.dst_hi))
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.src_max == self.src_min {
            self.src_min
        } else {
            self.src_min
                + (v - self.dst_lo) * (self.src_max - self.src_min)
                    / (self.dst_hi - self.dst_lo)
        }
    }
}

/// Normalizes every column of a matrix in place, returning the affine
/// parameters for the inverse transform.
pub fn normalize_columns(mat: &mut Mat, kind: NormalizeKind) -> Vec<ColumnAffine> {
    let mut params = Vec::with_capacity(mat.cols());
    for col in 0..mat.cols() {
        let affine = ColumnAffine::fit((0..mat.rows()).map(|r| mat.get(r, col)), kind);
        for r in 0..mat.rows() {
            mat.set(r, col, affine.apply(mat.get(r, col)));
        }
        params.push(affine);
    }
    params
}

/// Normalizes a target vector; same conventions as [`normalize_columns`].
pub fn normalize_targets(targets: &mut [f64], kind: NormalizeKind) -> ColumnAffine {
    let affine = ColumnAffine::fit(targets.iter().copied(), kind);
    for v in targets.iter_mut() {
        *v = affine.apply(*v);
    }
    affine
}

/// Normalization parameters of a preprocessed dataset.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NormParams {
    pub inputs: Vec<ColumnAffine>,
    pub target: Option<ColumnAffine>,
}

/// Runs the full preprocessing protocol on an imputed table: drop columns,
/// separate the target, normalize inputs (and regression targets). The
/// protocol normalizes over the entire dataset before any split;
/// `stats_rows` restricts the statistics to the given rows instead (the
/// train-only alternative) while still transforming every row.
pub fn table_to_dataset(
    table: &RawTable,
    schema: &CsvSchema,
    name: &str,
    task: TaskKind,
) -> Result<(Dataset, NormParams), DataError> {
    if table.n_rows() == 0 {
        return Err(DataError::Invalid("table has no rows"));
    }
    let width = table.n_cols();
    if schema.target_column >= width {
        return Err(DataError::ColumnOutOfRange {
            column: schema.target_column,
            width,
        });
    }
    for &c in &schema.drop_columns {
        if c >= width {
            return Err(DataError::ColumnOutOfRange { column: c, width });
        }
    }
    let feature_cols: Vec<usize> = (0..width)
        .filter(|c| *c != schema.target_column && !schema.drop_columns.contains(c))
        .collect();
    if feature_cols.is_empty() {
        return Err(DataError::Invalid("no feature columns left"));
    }
    let mut inputs = Mat::zeros(table.n_rows(), feature_cols.len());
    let mut targets = Vec::with_capacity(table.n_rows());
    for (r, row) in table.rows.iter().enumerate() {
        for (t, &c) in feature_cols.iter().enumerate() {
            match row[c] {
                Some(v) => inputs.set(r, t, v),
                None => return Err(DataError::MissingValues { column: c }),
            }
        }
        match row[schema.target_column] {
            Some(v) => targets.push(v),
            None => {
                return Err(DataError::MissingValues {
                    column: schema.target_column,
                })
            }
        }
    }
    let input_params = normalize_columns(&mut inputs, NormalizeKind::Input);
    let target_param = match task {
        TaskKind::Regression => Some(normalize_targets(&mut targets, NormalizeKind::Output)),
        TaskKind::Binary => {
            for &v in &targets {
                if v != 0.0 && v != 1.0 {
                    return Err(DataError::NonBinaryTarget { value: v });
                }
            }
            None
        }
    };
    let dataset = Dataset::new(name.to_string(), inputs, targets, task)?;
    Ok((
        dataset,
        NormParams {
            inputs: input_params,
            target: target_param,
        },
    ))
}

/// Random train/test split parameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> SplitSpec {
        SplitSpec {
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Seed-deterministic disjoint split; the test side gets
/// `round(N * fraction)` samples.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), DataError> {
    let n = dataset.len();
    if n < 4 {
        return Err(DataError::Invalid("need at least 4 samples to split"));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(DataError::Invalid("test fraction must lie in (0, 1)"));
    }
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(DataError::Invalid("split leaves an empty side"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let gather = |ids: &[usize], suffix: &str| -> Result<Dataset, DataError> {
        let mut inputs = Mat::zeros(ids.len(), dataset.feature_dim());
        let mut targets = Vec::with_capacity(ids.len());
        for (r, &i) in ids.iter().enumerate() {
            inputs.row_mut(r).copy_from_slice(dataset.inputs.row(i));
            targets.push(dataset.targets[i]);
        }
        Ok(Dataset::new(
            format!("{}/{suffix}", dataset.name),
            inputs,
            targets,
            dataset.task,
        )?)
    };
    let test = gather(&idx[..n_test], "test")?;
    let train = gather(&idx[n_test..], "train")?;
    Ok((train, test))
}

fn unit_direction(rng: &mut ChaCha20Rng, d: usize) -> Vec<f64> {
    // scaled so the dot product with inputs has roughly unit variance
    let c = 3.0 / (d as f64).sqrt();
    (0..d).map(|_| rng.gen_range(-c..c)).collect()
}

fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Synthetic nonlinear regression task
/// `y = sin(a.x) + 0.5 (b.x)^2 + noise`, normalized per the protocol.
pub fn synth_regression(
    n: usize,
    d: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::Core(sca_core::Error::EmptyDataset));
    }
    if d == 0 {
        return Err(DataError::Invalid("need at least one feature"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let a = unit_direction(&mut rng, d);
    let b = unit_direction(&mut rng, d);
    let mut inputs = Mat::zeros(n, d);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let mut sa = 0.0;
        let mut sb = 0.0;
        for c in 0..d {
            let x = rng.gen_range(-1.0..1.0);
            inputs.set(i, c, x);
            sa += a[c] * x;
            sb += b[c] * x;
        }
        targets.push(sa.sin() + 0.5 * sb * sb + noise * gaussian(&mut rng));
    }
    normalize_columns(&mut inputs, NormalizeKind::Input);
    normalize_targets(&mut targets, NormalizeKind::Output);
    Ok(Dataset::new(
        "synth-regression".to_string(),
        inputs,
        targets,
        TaskKind::Regression,
    )?)
}

/// Synthetic binary classification: the regression surface thresholded at
/// its median with Gaussian label noise, giving a learnable but imperfect
/// decision boundary.
pub fn synth_binary(n: usize, d: usize, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::Core(sca_core::Error::EmptyDataset));
    }
    if d == 0 {
        return Err(DataError::Invalid("need at least one feature"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let a = unit_direction(&mut rng, d);
    let b = unit_direction(&mut rng, d);
    let mut inputs = Mat::zeros(n, d);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut sa = 0.0;
        let mut sb = 0.0;
        for c in 0..d {
            let x = rng.gen_range(-1.0..1.0);
            inputs.set(i, c, x);
            sa += a[c] * x;
            sb += b[c] * x;
        }
        scores.push(sa.sin() + 0.5 * sb * sb);
    }
    let mut sorted = scores.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let median = sorted[n / 2];
    let targets: Vec<f64> = scores
        .iter()
        .map(|s| f64::from(s + 0.3 * gaussian(&mut rng) > median))
        .collect();
    normalize_columns(&mut inputs, NormalizeKind::Input);
    Ok(Dataset::new(
        "synth-binary".to_string(),
        inputs,
        targets,
        TaskKind::Binary,
    )?)
}

/// Published source of one benchmark dataset plus its loading schema.
#[derive(Debug, Clone)]
pub struct DatasetPreset {
    pub name: &'static str,
    pub url: &'static str,
    pub filename: &'static str,
    pub schema: CsvSchema,
    /// Expected (rows, columns) of the raw file body.
    pub expected_shape: (usize, usize),
    pub task: TaskKind,
}

/// The four mid-sized UCI regression benchmarks. Files are user-supplied
/// (see `fetch-data`); identifier and leakage columns are dropped by the
/// schemas.
pub fn uci_presets() -> Vec<DatasetPreset> {
    vec![
        DatasetPreset {
            name: "casp",
            url: "https://archive.ics.uci.edu/ml/machine-learning-databases/00265/CASP.csv",
            filename: "CASP.csv",
            schema: CsvSchema::comma(0),
            expected_shape: (45730, 10),
            task: TaskKind::Regression,
        },
        DatasetPreset {
            name: "parkinsons",
            url: "https://archive.ics.uci.edu/ml/machine-learning-databases/parkinsons/telemonitoring/parkinsons_updrs.data",
            filename: "parkinsons_updrs.data",
            schema: CsvSchema {
                delimiter: b',',
                has_header: true,
                target_column: 5, // total_UPDRS
                drop_columns: vec![0, 4], // subject id, motor_UPDRS
            },
            expected_shape: (5875, 22),
            task: TaskKind::Regression,
        },
        DatasetPreset {
            name: "skillcraft",
            url: "https://archive.ics.uci.edu/ml/machine-learning-databases/00272/SkillCraft1_Dataset.csv",
            filename: "SkillCraft1_Dataset.csv",
            schema: CsvSchema {
                delimiter: b',',
                has_header: true,
                target_column: 1, // LeagueIndex
                drop_columns: vec![0], // GameID
            },
            expected_shape: (3395, 20),
            task: TaskKind::Regression,
        },
        DatasetPreset {
            name: "wine",
            url: "https://archive.ics.uci.edu/ml/machine-learning-databases/wine-quality/winequality-white.csv",
            filename: "winequality-white.csv",
            schema: CsvSchema {
                delimiter: b';',
                has_header: true,
                target_column: 11, // quality
                drop_columns: vec![],
            },
            expected_shape: (4898, 12),
            task: TaskKind::Regression,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_well_formed_file() {
        let f = write_temp("a,b\n1,2\n3,4\n5,6\n");
        let t = load_csv(f.path(), &CsvSchema::comma(0)).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_cols(), 2);
        assert_eq!(t.rows[2][1], Some(6.0));
    }

    #[test]
    fn empty_cell_becomes_missing() {
        let f = write_temp("a,b\n1,\n3,4\n");
        let t = load_csv(f.path(), &CsvSchema::comma(0)).unwrap();
        assert_eq!(t.rows[0][1], None);
        assert_eq!(t.rows[0][0], Some(1.0));
    }

    #[test]
    fn question_mark_and_na_become_missing() {
        let f = write_temp("a,b\n?,NA\n3,4\n");
        let t = load_csv(f.path(), &CsvSchema::comma(0)).unwrap();
        assert_eq!(t.rows[0], vec![None, None]);
    }

    #[test]
    fn ragged_row_errors_with_line_number() {
        let f = write_temp("a,b\n1,2\n3,4,5\n");
        match load_csv(f.path(), &CsvSchema::comma(0)) {
            Err(DataError::RaggedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn median_imputation_odd_and_even() {
        let f = write_temp("a,b\n1,9\n,8\n3,7\n");
        let mut t = load_csv(f.path(), &CsvSchema::comma(0)).unwrap();
        impute_median(&mut t).unwrap();
        assert_eq!(t.rows[1][0], Some(2.0)); // median of {1, 3}

        let f = write_temp("a,b\n1,0\n2,0\n3,0\n,0\n100,0\n");
        let mut t = load_csv(f.path(), &CsvSchema::comma(0)).unwrap();
        impute_median(&mut t).unwrap();
        assert_eq!(t.rows[3][0], Some(2.5)); // median of {1, 2, 3, 100}
    }

    #[test]
    fn imputation_leaves_complete_tables_alone() {
        let f = write_temp("a,b\n1,2\n3,4\n");
        let mut t = load_csv(f.path(), &CsvSchema::comma(0)).unwrap();
        let before = t.rows.clone();
        impute_median(&mut t).unwrap();
        assert_eq!(t.rows, before);
    }

    #[test]
    fn all_missing_column_errors() {
        let f = write_temp("a,b\n1,\n2,\n");
        let mut t = load_csv(f.path(), &CsvSchema::comma(0)).unwrap();
        assert!(matches!(
            impute_median(&mut t),
            Err(DataError::AllMissingColumn { column: 1 })
        ));
    }

    #[test]
    fn normalization_hits_range_endpoints() {
        let mut m = Mat::from_vec(2, 1, vec![0.0, 10.0]).unwrap();
        normalize_columns(&mut m, NormalizeKind::Input);
        assert_eq!(m.get(0, 0), -0.5);
        assert_eq!(m.get(1, 0), 0.5);
    }

    #[test]
    fn constant_column_maps_to_midpoint() {
        let mut m = Mat::from_vec(3, 1, vec![7.0, 7.0, 7.0]).unwrap();
        let p = normalize_columns(&mut m, NormalizeKind::Input);
        for r in 0..3 {
            assert_eq!(m.get(r, 0), 0.0);
        }
        assert_eq!(p[0].invert(0.0), 7.0);
    }

    #[test]
    fn target_normalization_interpolates() {
        let mut t = vec![3.0, 5.0, 7.0];
        normalize_targets(&mut t, NormalizeKind::Output);
        assert!((t[0] + 0.9).abs() < 1e-15);
        assert!(t[1].abs() < 1e-15);
        assert!((t[2] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn split_counts_and_determinism() {
        let ds = synth_regression(100, 3, 0.0, 9).unwrap();
        let spec = SplitSpec {
            test_fraction: 0.25,
            seed: 4,
        };
        let (train, test) = split(&ds, &spec).unwrap();
        assert_eq!(test.len(), 25);
        assert_eq!(train.len(), 75);
        let (train2, test2) = split(&ds, &spec).unwrap();
        assert_eq!(train.targets, train2.targets);
        assert_eq!(test.targets, test2.targets);
    }

    #[test]
    fn synth_regression_is_deterministic_and_in_range() {
        let a = synth_regression(200, 5, 0.0, 33).unwrap();
        let b = synth_regression(200, 5, 0.0, 33).unwrap();
        assert_eq!(a.targets, b.targets);
        assert!(a.targets.iter().all(|t| (-0.9..=0.9).contains(t)));
        for r in 0..a.len() {
            assert!(a.inputs.row(r).iter().all(|v| (-0.5..=0.5).contains(v)));
        }
        assert!(matches!(
            synth_regression(0, 5, 0.0, 1),
            Err(DataError::Core(sca_core::Error::EmptyDataset))
        ));
    }

    #[test]
    fn synth_binary_has_both_classes() {
        let ds = synth_binary(500, 4, 7).unwrap();
        let pos = ds.targets.iter().filter(|&&t| t == 1.0).count();
        assert!(pos > 100 && pos < 400, "positives: {pos}");
    }
}
