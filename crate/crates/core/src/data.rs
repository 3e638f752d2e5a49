//! Panel construction: the synthetic multi-task generator and CSV
//! ingestion with median binarization.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, Panel};

/// Parameters of the synthetic generator.
///
/// Individuals get uniform +/-1 feature vectors; the first
/// `group1_fraction` of them form group 1. Each task draws a majority and a
/// minority weight vector, group-1 individuals join the majority group with
/// probability `q` (group 2 with probability `1 - q`), and labels come from
/// the sign of the selected weight vector's inner product with the
/// features (ties label 0). Larger `q` injects more unfairness: at q = 1
/// the majority group is fixed across tasks, at q = 0.5 it is random.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub q: f64,
    pub group1_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, m: usize, d: usize, q: f64, seed: u64) -> Self {
        Self {
            n,
            m,
            d,
            q,
            group1_fraction: 0.75,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("need n, m, d >= 1".into()));
        }
        if !(0.5..=1.0).contains(&self.q) {
            return Err(Error::InvalidParameter(format!(
                "q must lie in [0.5, 1], got {}",
                self.q
            )));
        }
        if !(self.group1_fraction > 0.0 && self.group1_fraction < 1.0) {
            return Err(Error::InvalidParameter(
                "group1_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn group1_size(&self) -> usize {
        ((self.group1_fraction * self.n as f64).ceil() as usize).min(self.n)
    }
}

/// A generated panel plus extra task columns held out for zero-label rate
/// estimation.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub panel: Panel,
    pub holdout_labels: Vec<Vec<u8>>,
}

fn sign_vector(rng: &mut ChaCha20Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn label_from(weights: &[f64], x: &[f64]) -> u8 {
    let mut dot = 0.0;
    for (w, v) in weights.iter().zip(x) {
        dot += w * v;
    }
    u8::from(dot > 0.0)
}

/// Generates a panel from one seeded stream. Draw order is fixed: features
/// row by row, then one (majority, minority) weight pair per task, then the
/// n x m coin matrix row by row; holdout tasks follow, each drawing its
/// weight pair and then its n coins. The main panel is therefore
/// bit-identical for a given (spec, seed) regardless of `holdout_tasks`.
pub fn generate_synthetic(spec: &SyntheticSpec, holdout_tasks: usize) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let m = spec.m;
    let d = spec.d;

    let rows: Vec<Vec<f64>> = (0..n).map(|_| sign_vector(&mut rng, d)).collect();
    let task_weights: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
        .map(|_| (sign_vector(&mut rng, d), sign_vector(&mut rng, d)))
        .collect();

    let group1 = spec.group1_size();
    let mut use_majority = vec![vec![false; m]; n];
    for (i, row) in use_majority.iter_mut().enumerate() {
        let p_maj = if i < group1 { spec.q } else { 1.0 - spec.q };
        for cell in row.iter_mut() {
            *cell = rng.random::<f64>() < p_maj;
        }
    }

    let mut labels: Vec<Vec<u8>> = vec![vec![0; n]; m];
    for j in 0..m {
        let (maj, min) = &task_weights[j];
        for i in 0..n {
            let w = if use_majority[i][j] { maj } else { min };
            labels[j][i] = label_from(w, &rows[i]);
        }
    }

    let mut holdout_labels = Vec::with_capacity(holdout_tasks);
    for _ in 0..holdout_tasks {
        let maj = sign_vector(&mut rng, d);
        let min = sign_vector(&mut rng, d);
        let mut col = vec![0u8; n];
        for (i, c) in col.iter_mut().enumerate() {
            let p_maj = if i < group1 { spec.q } else { 1.0 - spec.q };
            let w = if rng.random::<f64>() < p_maj { &maj } else { &min };
            *c = label_from(w, &rows[i]);
        }
        holdout_labels.push(col);
    }

    let panel = Panel::new(
        FeatureMatrix::from_rows(rows)?,
        labels,
        (0..n).map(|i| format!("i{i:04}")).collect(),
        (0..m).map(|j| format!("t{j:04}")).collect(),
    )?;
    Ok(SyntheticData {
        panel,
        holdout_labels,
    })
}

/// Ingestion choices for CSV panels.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Leading columns to drop before classifying the rest (identifier
    /// columns that happen to be numeric).
    pub skip_leading_columns: usize,
}

/// What ingestion did to the file, for the run manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DataManifest {
    pub task_columns: Vec<String>,
    pub feature_columns: Vec<String>,
    pub skipped_columns: Vec<String>,
    pub imputed_cells: usize,
    /// Positive-label fraction per task column after binarization.
    pub positive_fractions: Vec<f64>,
    /// Task columns that binarized to all-0 or all-1.
    pub degenerate_tasks: Vec<String>,
}

pub struct CsvPanel {
    pub panel: Panel,
    pub manifest: DataManifest,
}

fn is_missing(field: &str) -> bool {
    let t = field.trim();
    t.is_empty() || t == "?"
}

fn parse_cell(field: &str) -> Option<Option<f64>> {
    // Some(None) = missing, Some(v) = numeric, None = non-numeric.
    if is_missing(field) {
        Some(None)
    } else {
        field.trim().parse::<f64>().ok().map(Some)
    }
}

/// Median over the given values; even counts average the two middles.
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Loads a panel from a CSV file: the first `n` data rows; among the usable
/// numeric columns, the first `m` become tasks (binarized at the column
/// median over those rows, strictly-above mapping to 1) and the next `d`
/// become real-valued features. Missing cells ("" or "?") are imputed with
/// the column median. A header row is detected by any non-numeric,
/// non-missing field in the first record.
pub fn load_crime_csv(
    path: &Path,
    n: usize,
    m: usize,
    d: usize,
    options: &CsvOptions,
) -> Result<CsvPanel> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::InvalidParameter("need n, m, d >= 1".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)?;

    let mut records = reader.records();
    let first = match records.next() {
        Some(rec) => rec?,
        None => return Err(Error::Data("empty CSV file".into())),
    };
    let width = first.len();
    let has_header = first.iter().any(|f| parse_cell(f).is_none());
    let mut names: Vec<String> = if has_header {
        first.iter().map(|f| f.trim().to_string()).collect()
    } else {
        (0..width).map(|c| format!("col{c}")).collect()
    };

    let mut rows: Vec<csv::StringRecord> = Vec::with_capacity(n);
    if !has_header {
        rows.push(first);
    }
    for rec in records {
        if rows.len() >= n {
            break;
        }
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Data(format!(
                "row {} has {} fields, expected {width}",
                rows.len() + 1,
                rec.len()
            )));
        }
        rows.push(rec);
    }
    if rows.len() < n {
        return Err(Error::Data(format!(
            "need {n} data rows, file has {}",
            rows.len()
        )));
    }

    // Parse every candidate column over the selected rows.
    let skip = options.skip_leading_columns;
    if skip >= width {
        return Err(Error::Data("skip_leading_columns drops every column".into()));
    }
    names.drain(..skip);
    let mut usable: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    let mut skipped_columns: Vec<String> = Vec::new();
    for (c, name) in (skip..width).zip(names) {
        let mut parsed = Vec::with_capacity(n);
        let mut numeric = true;
        for row in &rows {
            match parse_cell(&row[c]) {
                Some(cell) => parsed.push(cell),
                None => {
                    numeric = false;
                    break;
                }
            }
        }
        if numeric && parsed.iter().any(|c| c.is_some()) {
            usable.push((name, parsed));
        } else {
            skipped_columns.push(name);
        }
    }
    if usable.len() < m + d {
        return Err(Error::Data(format!(
            "need {m} task + {d} feature columns, found {} usable numeric columns",
            usable.len()
        )));
    }

    let mut manifest = DataManifest {
        skipped_columns,
        ..DataManifest::default()
    };

    // Impute with the per-column median and record the fill count.
    let mut impute = |cells: &[Option<f64>]| -> Vec<f64> {
        let present: Vec<f64> = cells.iter().flatten().copied().collect();
        let med = median(&present);
        cells
            .iter()
            .map(|c| match c {
                Some(v) => *v,
                None => {
                    manifest.imputed_cells += 1;
                    med
                }
            })
            .collect()
    };

    let mut labels: Vec<Vec<u8>> = Vec::with_capacity(m);
    for (name, cells) in &usable[..m] {
        let values = impute(cells);
        let med = median(&values);
        let col: Vec<u8> = values.iter().map(|&v| u8::from(v > med)).collect();
        let positive = col.iter().filter(|&&b| b == 1).count() as f64 / n as f64;
        manifest.positive_fractions.push(positive);
        if positive == 0.0 || positive == 1.0 {
            manifest.degenerate_tasks.push(name.clone());
        }
        manifest.task_columns.push(name.clone());
        labels.push(col);
    }

    let mut feature_rows: Vec<Vec<f64>> = vec![Vec::with_capacity(d); n];
    for (name, cells) in &usable[m..m + d] {
        let values = impute(cells);
        for (i, v) in values.into_iter().enumerate() {
            feature_rows[i].push(v);
        }
        manifest.feature_columns.push(name.clone());
    }

    let panel = Panel::new(
        FeatureMatrix::from_rows(feature_rows)?,
        labels,
        (0..n).map(|i| format!("row{i:04}")).collect(),
        manifest.task_columns.clone(),
    )?;
    Ok(CsvPanel { panel, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn group_one_has_ceil_size() {
        let spec = SyntheticSpec::new(10, 2, 3, 0.8, 1);
        assert_eq!(spec.group1_size(), 8); // ceil(7.5)
        let spec = SyntheticSpec::new(200, 50, 20, 0.8, 1);
        assert_eq!(spec.group1_size(), 150);
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let spec = SyntheticSpec::new(30, 8, 5, 0.8, 42);
        let a = generate_synthetic(&spec, 3).unwrap();
        let b = generate_synthetic(&spec, 3).unwrap();
        assert_eq!(a.panel.features().as_slice(), b.panel.features().as_slice());
        for j in 0..8 {
            assert_eq!(a.panel.task_column(j), b.panel.task_column(j));
        }
        assert_eq!(a.holdout_labels, b.holdout_labels);
    }

    #[test]
    fn holdout_count_does_not_disturb_the_panel() {
        let spec = SyntheticSpec::new(20, 5, 4, 0.9, 7);
        let a = generate_synthetic(&spec, 0).unwrap();
        let b = generate_synthetic(&spec, 10).unwrap();
        assert_eq!(a.panel.features().as_slice(), b.panel.features().as_slice());
        for j in 0..5 {
            assert_eq!(a.panel.task_column(j), b.panel.task_column(j));
        }
        assert_eq!(b.holdout_labels.len(), 10);
    }

    #[test]
    fn features_are_signs_and_labels_binary() {
        let spec = SyntheticSpec::new(25, 6, 4, 0.5, 3);
        let data = generate_synthetic(&spec, 0).unwrap();
        for &v in data.panel.features().as_slice() {
            assert!(v == 1.0 || v == -1.0);
        }
        for j in 0..6 {
            assert!(data.panel.task_column(j).iter().all(|&b| b <= 1));
        }
    }

    #[test]
    fn q_one_uses_fixed_majority_group() {
        // At q = 1 group 1 always gets the majority vector and group 2 the
        // minority vector, so labels are a deterministic function of the
        // weight draws. Check by regenerating with the same seed: every
        // group-1 row must agree with the majority labeling.
        let spec = SyntheticSpec {
            n: 16,
            m: 4,
            d: 6,
            q: 1.0,
            group1_fraction: 0.75,
            seed: 5,
        };
        let data = generate_synthetic(&spec, 0).unwrap();
        // Reconstruct the draws with a fresh stream in the documented order.
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..16).map(|_| sign_vector(&mut rng, 6)).collect();
        let weights: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
            .map(|_| (sign_vector(&mut rng, 6), sign_vector(&mut rng, 6)))
            .collect();
        for (j, (maj, min)) in weights.iter().enumerate() {
            for (i, row) in rows.iter().enumerate() {
                let w = if i < 12 { maj } else { min };
                assert_eq!(data.panel.task_column(j)[i], label_from(w, row));
            }
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate_synthetic(&SyntheticSpec::new(10, 2, 3, 0.4, 1), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(10, 2, 3, 1.1, 1), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(0, 2, 3, 0.8, 1), 0).is_err());
    }

    fn write_temp_csv(content: &str) -> std::path::PathBuf {
        let mut path = std::env::temp_dir();
        path.push(format!(
            "aif_test_{}_{}.csv",
            std::process::id(),
            content.len()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn csv_loads_with_header_and_median_binarization() {
        let csv = "name,t1,t2,f1,f2\n\
                   a,0.1,5,1.0,10\n\
                   b,0.2,4,2.0,20\n\
                   c,0.3,3,3.0,30\n\
                   d,0.4,2,4.0,40\n";
        let path = write_temp_csv(csv);
        let loaded = load_crime_csv(&path, 4, 2, 2, &CsvOptions::default()).unwrap();
        std::fs::remove_file(&path).ok();
        let panel = &loaded.panel;
        assert_eq!(panel.n(), 4);
        assert_eq!(panel.m(), 2);
        assert_eq!(panel.d(), 2);
        // t1 median is 0.25: rows c, d exceed it.
        assert_eq!(panel.task_column(0), &[0, 0, 1, 1]);
        // t2 median is 3.5: rows a, b exceed it.
        assert_eq!(panel.task_column(1), &[1, 1, 0, 0]);
        // Non-numeric name column is skipped.
        assert_eq!(loaded.manifest.skipped_columns, vec!["name".to_string()]);
        assert_eq!(panel.features().row(0), &[1.0, 10.0]);
    }

    #[test]
    fn csv_constant_column_binarizes_to_zero() {
        let csv = "5,1\n5,2\n5,3\n";
        let path = write_temp_csv(csv);
        let loaded = load_crime_csv(&path, 3, 1, 1, &CsvOptions::default()).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(loaded.panel.task_column(0), &[0, 0, 0]);
        assert_eq!(loaded.manifest.degenerate_tasks, vec!["col0".to_string()]);
    }

    #[test]
    fn csv_imputes_missing_with_median() {
        let csv = "1,7\n?,8\n3,9\n,10\n5,11\n";
        let path = write_temp_csv(csv);
        let loaded = load_crime_csv(&path, 5, 1, 1, &CsvOptions::default()).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(loaded.manifest.imputed_cells, 2);
        // Median of {1,3,5} = 3; imputed rows binarize to 0 (3 > 3 is false).
        assert_eq!(loaded.panel.task_column(0), &[0, 0, 0, 0, 1]);
    }

    #[test]
    fn csv_is_deterministic() {
        let csv = "0.5,1.5,2.5\n1.5,0.5,3.5\n2.5,2.0,1.0\n";
        let path = write_temp_csv(csv);
        let a = load_crime_csv(&path, 3, 1, 2, &CsvOptions::default()).unwrap();
        let b = load_crime_csv(&path, 3, 1, 2, &CsvOptions::default()).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(a.panel.task_column(0), b.panel.task_column(0));
        assert_eq!(a.panel.features().as_slice(), b.panel.features().as_slice());
    }

    #[test]
    fn csv_errors_on_shortfalls() {
        let csv = "1,2\n3,4\n";
        let path = write_temp_csv(csv);
        assert!(load_crime_csv(&path, 5, 1, 1, &CsvOptions::default()).is_err());
        assert!(load_crime_csv(&path, 2, 2, 1, &CsvOptions::default()).is_err());
        std::fs::remove_file(&path).ok();
        assert!(load_crime_csv(
            Path::new("/nonexistent/file.csv"),
            2,
            1,
            1,
            &CsvOptions::default()
        )
        .is_err());
    }
}
