//! Loading and curating raw CSV tables: plausibility bounds, row missingness
//! filtering and median imputation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default row missingness threshold (fraction of cells).
pub const DEFAULT_ROW_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Ordinal,
    Binary,
}

impl VariableKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VariableKind::Continuous)
    }
}

/// Per-variable schema entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default)]
    pub unit: String,
    #[serde(rename = "lower", default)]
    pub lower_bound: Option<f64>,
    #[serde(rename = "upper", default)]
    pub upper_bound: Option<f64>,
}

impl VariableMeta {
    pub fn new(name: impl Into<String>, kind: VariableKind) -> Self {
        VariableMeta {
            name: name.into(),
            kind,
            unit: String::new(),
            lower_bound: None,
            upper_bound: None,
        }
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.lower_bound = Some(lower);
        self.upper_bound = Some(upper);
        self
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    fn validate(&self) -> Result<()> {
        if let (Some(lo), Some(hi)) = (self.lower_bound, self.upper_bound) {
            if !(lo < hi) {
                return Err(Error::Schema(format!(
                    "variable {}: lower bound {lo} is not below upper bound {hi}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Closed-interval bound check.
    pub fn in_bounds(&self, x: f64) -> bool {
        self.lower_bound.is_none_or(|lo| x >= lo) && self.upper_bound.is_none_or(|hi| x <= hi)
    }
}

/// Reads a schema file: a JSON array of [`VariableMeta`] objects.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Vec<VariableMeta>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let schema: Vec<VariableMeta> = serde_json::from_str(&text)?;
    let mut seen = HashSet::new();
    for meta in &schema {
        meta.validate()?;
        if !seen.insert(meta.name.as_str()) {
            return Err(Error::Schema(format!("duplicate variable {}", meta.name)));
        }
    }
    Ok(schema)
}

/// One variable: metadata plus values, `None` marking a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub meta: VariableMeta,
    pub values: Vec<Option<f64>>,
    /// Original labels of a binary column whose codes were not already 0/1;
    /// `levels[0]` encodes as 0 and `levels[1]` as 1.
    pub levels: Vec<String>,
}

impl Column {
    pub fn new(meta: VariableMeta, values: Vec<Option<f64>>) -> Self {
        Column {
            meta,
            values,
            levels: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Values with missing cells removed.
    pub fn observed(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    /// Dense values, failing on the first missing cell.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::Data(format!("column {} has a missing value at row {i}", self.name())))
            })
            .collect()
    }

    fn format_cell(&self, v: Option<f64>) -> String {
        match v {
            None => String::new(),
            Some(x) if !self.levels.is_empty() && (x == 0.0 || x == 1.0) => self.levels[x as usize].clone(),
            Some(x) => format!("{x}"),
        }
    }
}

/// Column-major table of named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    columns: Vec<Column>,
    n_rows: usize,
}

impl DataTable {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.values.len());
        let mut seen = HashSet::new();
        for col in &columns {
            if col.values.len() != n_rows {
                return Err(Error::Data(format!(
                    "column {} has {} rows, expected {n_rows}",
                    col.name(),
                    col.values.len()
                )));
            }
            if !seen.insert(col.name().to_string()) {
                return Err(Error::Data(format!("duplicate variable {}", col.name())));
            }
            col.meta.validate()?;
        }
        Ok(DataTable { columns, n_rows })
    }

    /// Builds a fully observed table from dense columns.
    pub fn from_dense(metas: Vec<VariableMeta>, data: Vec<Vec<f64>>) -> Result<Self> {
        if metas.len() != data.len() {
            return Err(Error::Data(format!(
                "{} variables but {} data columns",
                metas.len(),
                data.len()
            )));
        }
        let columns = metas
            .into_iter()
            .zip(data)
            .map(|(m, v)| Column::new(m, v.into_iter().map(Some).collect()))
            .collect();
        DataTable::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name().to_string()).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.columns.iter().map(Column::n_missing).sum()
    }

    /// Keeps the rows whose index satisfies `keep`.
    pub fn filter_rows<F: Fn(usize) -> bool>(&self, keep: F) -> DataTable {
        let rows: Vec<usize> = (0..self.n_rows).filter(|&i| keep(i)).collect();
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                meta: c.meta.clone(),
                values: rows.iter().map(|&i| c.values[i]).collect(),
                levels: c.levels.clone(),
            })
            .collect();
        DataTable {
            columns,
            n_rows: rows.len(),
        }
    }

    /// Table restricted to the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<DataTable> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("variable {n} not in table")))
            })
            .collect::<Result<Vec<_>>>()?;
        DataTable::new(columns)
    }

    /// Writes the table as CSV with a header row. Missing cells are empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(Column::name))?;
        for i in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|c| c.format_cell(c.values[i])))?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Missing-cell codes, compared case-insensitively after trimming.
pub fn is_missing_code(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("null")
}

/// Loads a CSV file, keeping the schema's variables in schema order.
pub fn load_table(path: impl AsRef<Path>, schema: &[VariableMeta]) -> Result<DataTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema)
}

pub fn read_table<R: Read>(reader: R, schema: &[VariableMeta]) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut positions = Vec::with_capacity(schema.len());
    for meta in schema {
        meta.validate()?;
        let pos = header
            .iter()
            .position(|h| *h == meta.name)
            .ok_or_else(|| Error::Schema(format!("variable {} not found in CSV header", meta.name)))?;
        positions.push(pos);
    }
    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); schema.len()];
    for record in rdr.records() {
        let record = record?;
        for (j, &pos) in positions.iter().enumerate() {
            let cell = record.get(pos).unwrap_or("");
            raw[j].push(if is_missing_code(cell) {
                None
            } else {
                Some(cell.trim().to_string())
            });
        }
    }
    let columns = schema
        .iter()
        .zip(raw)
        .map(|(meta, cells)| parse_column(meta, cells))
        .collect::<Result<Vec<_>>>()?;
    DataTable::new(columns)
}

fn parse_column(meta: &VariableMeta, cells: Vec<Option<String>>) -> Result<Column> {
    if meta.kind != VariableKind::Binary {
        let values = cells
            .iter()
            .map(|c| c.as_deref().and_then(|s| s.parse::<f64>().ok()).filter(|x| x.is_finite()))
            .collect();
        return Ok(Column::new(meta.clone(), values));
    }
    let distinct: BTreeSet<&str> = cells.iter().flatten().map(String::as_str).collect();
    if distinct.len() > 2 {
        return Err(Error::Data(format!(
            "binary variable {} has {} distinct codes: {:?}",
            meta.name,
            distinct.len(),
            distinct.iter().take(5).collect::<Vec<_>>()
        )));
    }
    let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse::<f64>().ok()).collect();
    let already_01 = numeric
        .as_ref()
        .is_some_and(|v| v.iter().all(|&x| x == 0.0 || x == 1.0));
    if already_01 {
        let values = cells
            .iter()
            .map(|c| c.as_deref().and_then(|s| s.parse::<f64>().ok()))
            .collect();
        return Ok(Column::new(meta.clone(), values));
    }
    // order codes numerically when possible, lexicographically otherwise
    let mut levels: Vec<String> = distinct.iter().map(|s| s.to_string()).collect();
    if numeric.is_some() {
        levels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let values = cells
        .iter()
        .map(|c| c.as_ref().map(|s| levels.iter().position(|l| l == s).unwrap() as f64))
        .collect();
    Ok(Column {
        meta: meta.clone(),
        values,
        levels,
    })
}

/// Counts recorded while curating a table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationLog {
    pub n_rows_in: usize,
    pub n_rows_out: usize,
    pub n_rows_dropped: usize,
    pub row_threshold: f64,
    /// Cells turned missing by the bound check, per variable.
    pub out_of_bounds: BTreeMap<String, usize>,
    /// Cells filled by median imputation, per variable.
    pub imputed: BTreeMap<String, usize>,
}

impl CurationLog {
    pub fn total_out_of_bounds(&self) -> usize {
        self.out_of_bounds.values().sum()
    }
}

/// Turns every value strictly outside its variable's closed bound interval
/// into a missing cell.
pub fn apply_bounds(table: &DataTable, log: &mut CurationLog) -> DataTable {
    let columns = table
        .columns
        .iter()
        .map(|c| {
            let mut n_out = 0;
            let values = c
                .values
                .iter()
                .map(|v| match v {
                    Some(x) if !c.meta.in_bounds(*x) => {
                        n_out += 1;
                        None
                    }
                    other => *other,
                })
                .collect();
            *log.out_of_bounds.entry(c.name().to_string()).or_insert(0) += n_out;
            Column {
                meta: c.meta.clone(),
                values,
                levels: c.levels.clone(),
            }
        })
        .collect();
    DataTable {
        columns,
        n_rows: table.n_rows,
    }
}

/// Drops rows whose fraction of missing cells exceeds `row_threshold`.
pub fn filter_missing_rows(table: &DataTable, row_threshold: f64, log: &mut CurationLog) -> Result<DataTable> {
    if !(0.0..=1.0).contains(&row_threshold) {
        return Err(Error::Data(format!("row threshold {row_threshold} outside [0, 1]")));
    }
    let d = table.n_cols().max(1) as f64;
    let keep: Vec<bool> = (0..table.n_rows)
        .map(|i| {
            let missing = table.columns.iter().filter(|c| c.values[i].is_none()).count();
            missing as f64 / d <= row_threshold
        })
        .collect();
    let out = table.filter_rows(|i| keep[i]);
    log.row_threshold = row_threshold;
    log.n_rows_dropped += table.n_rows - out.n_rows;
    if out.n_rows == 0 && table.n_rows > 0 {
        return Err(Error::Data(format!(
            "all {} rows exceed the missingness threshold {row_threshold}",
            table.n_rows
        )));
    }
    Ok(out)
}

/// Column median: midpoint of the central pair for continuous variables,
/// lower central order statistic for ordinal and binary ones.
pub fn column_median(values: &[f64], kind: VariableKind) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else if kind.is_discrete() {
        sorted[n / 2 - 1]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Replaces every missing cell with its column median.
pub fn impute_median(table: &DataTable, log: &mut CurationLog) -> Result<DataTable> {
    let columns = table
        .columns
        .iter()
        .map(|c| {
            let n_missing = c.n_missing();
            if n_missing > 0 {
                let median = column_median(&c.observed(), c.meta.kind)
                    .ok_or_else(|| Error::Data(format!("column {} has no observed values", c.name())))?;
                *log.imputed.entry(c.name().to_string()).or_insert(0) += n_missing;
                Ok(Column {
                    meta: c.meta.clone(),
                    values: c.values.iter().map(|v| Some(v.unwrap_or(median))).collect(),
                    levels: c.levels.clone(),
                })
            } else {
                log.imputed.entry(c.name().to_string()).or_insert(0);
                Ok(c.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DataTable {
        columns,
        n_rows: table.n_rows,
    })
}

/// Bounds, then row filtering, then median imputation.
pub fn curate(table: &DataTable, row_threshold: f64) -> Result<(DataTable, CurationLog)> {
    let mut log = CurationLog {
        n_rows_in: table.n_rows,
        row_threshold,
        ..CurationLog::default()
    };
    let bounded = apply_bounds(table, &mut log);
    let filtered = filter_missing_rows(&bounded, row_threshold, &mut log)?;
    let imputed = impute_median(&filtered, &mut log)?;
    log.n_rows_out = imputed.n_rows;
    Ok((imputed, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn age() -> VariableMeta {
        VariableMeta::new("Age", VariableKind::Continuous).with_bounds(18.0, 110.0)
    }

    fn col(meta: VariableMeta, v: &[Option<f64>]) -> Column {
        Column::new(meta, v.to_vec())
    }

    #[test]
    fn parses_simple_csv() {
        let csv = "Age,K\n18,4.1\n87,NA\n45,5.0\n";
        let schema = vec![age(), VariableMeta::new("K", VariableKind::Continuous).with_bounds(2.0, 10.0)];
        let t = read_table(csv.as_bytes(), &schema).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.column("Age").unwrap().values, vec![Some(18.0), Some(87.0), Some(45.0)]);
        assert_eq!(t.column("K").unwrap().values[1], None);
    }

    #[test]
    fn missing_codes_are_case_insensitive() {
        for code in ["", " ", "NA", "na", "NaN", "nan", "null", "NULL"] {
            assert!(is_missing_code(code), "{code:?}");
        }
        assert!(!is_missing_code("0"));
    }

    #[test]
    fn unparseable_cell_becomes_missing() {
        let t = read_table("Age\n18\nabc\n".as_bytes(), &[age()]).unwrap();
        assert_eq!(t.column("Age").unwrap().values, vec![Some(18.0), None]);
    }

    #[test]
    fn absent_schema_variable_is_an_error() {
        let schema = vec![age(), VariableMeta::new("K", VariableKind::Continuous)];
        let err = read_table("Age\n18\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn binary_with_three_codes_is_rejected() {
        let meta = VariableMeta::new("Sex", VariableKind::Binary);
        let err = read_table("Sex\nM\nF\nX\n".as_bytes(), &[meta]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn binary_labels_are_encoded_and_restored() {
        let meta = VariableMeta::new("Sex", VariableKind::Binary);
        let t = read_table("Sex\nM\nF\nM\n".as_bytes(), &[meta]).unwrap();
        assert_eq!(t.column("Sex").unwrap().values, vec![Some(1.0), Some(0.0), Some(1.0)]);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "Sex\nM\nF\nM\n");
    }

    #[test]
    fn bounds_are_closed_intervals() {
        let t = DataTable::new(vec![col(age(), &[Some(112.0), Some(110.0), Some(18.0), Some(17.9)])]).unwrap();
        let mut log = CurationLog::default();
        let b = apply_bounds(&t, &mut log);
        assert_eq!(b.column("Age").unwrap().values, vec![None, Some(110.0), Some(18.0), None]);
        assert_eq!(log.out_of_bounds["Age"], 2);
    }

    #[test]
    fn potassium_in_bounds_is_kept() {
        let k = VariableMeta::new("K", VariableKind::Continuous).with_bounds(2.0, 10.0);
        let t = DataTable::new(vec![col(k, &[Some(5.0)])]).unwrap();
        let b = apply_bounds(&t, &mut CurationLog::default());
        assert_eq!(b.column("K").unwrap().values, vec![Some(5.0)]);
    }

    #[test]
    fn row_filter_uses_strict_exceedance() {
        // 33 columns: one row with 2 missing (6.1%), one with 1 (3.0%), one complete
        let columns = (0..33)
            .map(|j| {
                let v = vec![
                    if j < 2 { None } else { Some(1.0) },
                    if j == 0 { None } else { Some(1.0) },
                    Some(1.0),
                ];
                col(VariableMeta::new(format!("v{j}"), VariableKind::Continuous), &v)
            })
            .collect();
        let t = DataTable::new(columns).unwrap();
        let mut log = CurationLog::default();
        let f = filter_missing_rows(&t, 0.05, &mut log).unwrap();
        assert_eq!(f.n_rows(), 2);
        assert_eq!(log.n_rows_dropped, 1);
        let all = filter_missing_rows(&t, 1.0, &mut CurationLog::default()).unwrap();
        assert_eq!(all.n_rows(), 3);
    }

    #[test]
    fn dropping_every_row_is_an_error() {
        let t = DataTable::new(vec![col(age(), &[None, None])]).unwrap();
        assert!(filter_missing_rows(&t, 0.05, &mut CurationLog::default()).is_err());
    }

    #[test]
    fn median_conventions() {
        let c = VariableMeta::new("x", VariableKind::Continuous);
        let b = VariableMeta::new("b", VariableKind::Binary);
        let t = DataTable::new(vec![
            col(c, &[Some(1.0), None, Some(3.0), Some(2.0)]),
            col(b, &[Some(0.0), Some(0.0), Some(1.0), None]),
        ])
        .unwrap();
        let mut log = CurationLog::default();
        let out = impute_median(&t, &mut log).unwrap();
        assert_eq!(out.column("x").unwrap().values[1], Some(2.0));
        assert_eq!(out.column("b").unwrap().values[3], Some(0.0));
        assert_eq!(out.n_missing(), 0);
        assert_eq!(log.imputed["x"], 1);

        assert_eq!(column_median(&[1.0, 3.0], VariableKind::Continuous), Some(2.0));
        assert_eq!(column_median(&[1.0, 3.0], VariableKind::Ordinal), Some(1.0));
        assert_eq!(column_median(&[0.0, 1.0], VariableKind::Binary), Some(0.0));
    }

    #[test]
    fn fully_missing_column_is_named_in_the_error() {
        let t = DataTable::new(vec![col(age(), &[None, None])]).unwrap();
        let err = impute_median(&t, &mut CurationLog::default()).unwrap_err();
        assert!(err.to_string().contains("Age"));
    }

    #[test]
    fn complete_table_is_unchanged_by_imputation() {
        let t = DataTable::new(vec![col(age(), &[Some(20.0), Some(30.0)])]).unwrap();
        assert_eq!(impute_median(&t, &mut CurationLog::default()).unwrap(), t);
    }

    #[test]
    fn schema_rejects_inverted_bounds() {
        let meta = VariableMeta::new("x", VariableKind::Continuous).with_bounds(5.0, 1.0);
        assert!(DataTable::new(vec![col(meta, &[Some(1.0)])]).is_err());
    }
}
