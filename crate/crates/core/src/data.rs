//! Dataset representation, CSV ingestion and validation.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Covariate,
    Category,
    Response,
    Ignore,
}

/// Maps CSV header names to roles.
///
/// Stored on disk as TOML:
///
/// ```toml
/// default = "covariate"   # optional, role of headers not listed below
///
/// [columns]
/// g = "category"
/// y = "response"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Role>,
    #[serde(default)]
    pub columns: BTreeMap<String, Role>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ResolvedSchema {
    covariates: Vec<usize>,
    category: usize,
    response: Option<usize>,
}

impl ColumnSchema {
    /// Category and optional response named; everything else is a covariate.
    pub fn simple(category: &str, response: Option<&str>) -> Self {
        let mut columns = BTreeMap::new();
        columns.insert(category.to_string(), Role::Category);
        if let Some(r) = response {
            columns.insert(r.to_string(), Role::Response);
        }
        ColumnSchema {
            default: Some(Role::Covariate),
            columns,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: ColumnSchema =
            toml::from_str(text).map_err(|e| Error::Schema(format!("invalid schema file: {e}")))?;
        schema.check_counts()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    fn check_counts(&self) -> Result<()> {
        let cats = self
            .columns
            .values()
            .filter(|r| **r == Role::Category)
            .count();
        let resp = self
            .columns
            .values()
            .filter(|r| **r == Role::Response)
            .count();
        if cats != 1 {
            return Err(Error::Schema(format!(
                "exactly one category column required, found {cats}"
            )));
        }
        if resp > 1 {
            return Err(Error::Schema(format!(
                "at most one response column allowed, found {resp}"
            )));
        }
        if matches!(self.default, Some(Role::Category) | Some(Role::Response)) {
            return Err(Error::Schema(
                "default role must be covariate or ignore".to_string(),
            ));
        }
        Ok(())
    }

    fn resolve(&self, headers: &[String]) -> Result<ResolvedSchema> {
        self.check_counts()?;
        for name in self.columns.keys() {
            if !headers.iter().any(|h| h == name) {
                return Err(Error::Schema(format!("missing column '{name}'")));
            }
        }
        let mut covariates = Vec::new();
        let mut category = None;
        let mut response = None;
        for (j, h) in headers.iter().enumerate() {
            let role = match self.columns.get(h).copied().or(self.default) {
                Some(r) => r,
                None => return Err(Error::Schema(format!("no role given for column '{h}'"))),
            };
            match role {
                Role::Covariate => covariates.push(j),
                Role::Category => category = Some(j),
                Role::Response => response = Some(j),
                Role::Ignore => {}
            }
        }
        Ok(ResolvedSchema {
            covariates,
            category: category.expect("checked above"),
            response,
        })
    }
}

/// `n` observations of covariates `x` (n×p), a categorical column `g` with
/// dense 0-based level indices, and an optional response `y`.
///
/// Level indices are dense over `level_names`; after [`Dataset::split_rows`]
/// some levels may have zero rows, which [`Dataset::level_counts`] reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    g: Vec<usize>,
    y: Option<Vec<f64>>,
    level_names: Vec<String>,
    covariate_names: Vec<String>,
    category_name: String,
    response_name: Option<String>,
}

impl Dataset {
    /// Builds a dataset with default column names `x1..xp`, `g` and `y`.
    pub fn new(
        x: DMatrix<f64>,
        g: Vec<usize>,
        y: Option<Vec<f64>>,
        level_names: Vec<String>,
    ) -> Result<Self> {
        let covariate_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let response_name = y.as_ref().map(|_| "y".to_string());
        Self::with_names(
            x,
            g,
            y,
            level_names,
            covariate_names,
            "g".to_string(),
            response_name,
        )
    }

    pub fn with_names(
        x: DMatrix<f64>,
        g: Vec<usize>,
        y: Option<Vec<f64>>,
        level_names: Vec<String>,
        covariate_names: Vec<String>,
        category_name: String,
        response_name: Option<String>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Empty("dataset has no rows".to_string()));
        }
        if g.len() != n {
            return Err(Error::Dimension(format!(
                "category vector has length {}, expected {n}",
                g.len()
            )));
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                x.ncols()
            )));
        }
        let m = level_names.len();
        if let Some((row, &gi)) = g.iter().enumerate().find(|(_, &gi)| gi >= m) {
            return Err(Error::Data {
                row,
                column: category_name,
                message: format!("level index {gi} outside 0..{m}"),
            });
        }
        for j in 0..x.ncols() {
            for i in 0..n {
                if !x[(i, j)].is_finite() {
                    return Err(Error::Data {
                        row: i,
                        column: covariate_names[j].clone(),
                        message: "non-finite value".to_string(),
                    });
                }
            }
        }
        if let Some(y) = &y {
            if y.len() != n {
                return Err(Error::Dimension(format!(
                    "response has length {}, expected {n}",
                    y.len()
                )));
            }
            if let Some(row) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data {
                    row,
                    column: response_name.clone().unwrap_or_else(|| "y".to_string()),
                    message: "non-finite value".to_string(),
                });
            }
        }
        let has_y = y.is_some();
        Ok(Dataset {
            x,
            g,
            y,
            level_names,
            covariate_names,
            category_name,
            response_name: if has_y {
                response_name.or_else(|| Some("y".to_string()))
            } else {
                None
            },
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of levels in the catalog (including levels with zero rows).
    pub fn m(&self) -> usize {
        self.level_names.len()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn g(&self) -> &[usize] {
        &self.g
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn category_name(&self) -> &str {
        &self.category_name
    }

    pub fn response_name(&self) -> Option<&str> {
        self.response_name.as_deref()
    }

    pub fn level_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.m()];
        for &gi in &self.g {
            counts[gi] += 1;
        }
        counts
    }

    /// Replaces the response (same length required).
    pub fn with_response(mut self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!(
                "response has length {}, expected {}",
                y.len(),
                self.n()
            )));
        }
        if self.response_name.is_none() {
            self.response_name = Some("y".to_string());
        }
        self.y = Some(y);
        Ok(self)
    }

    /// Restricts to the given rows, in the given order. The level catalog is
    /// kept as is, so levels absent from the subset report zero counts.
    pub fn split_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::Empty("row subset is empty".to_string()));
        }
        let n = self.n();
        let mut seen = vec![false; n];
        for &r in rows {
            if r >= n {
                return Err(Error::Bounds { index: r, len: n });
            }
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::Config(format!("row {r} listed twice in subset")));
            }
        }
        let x = self.x.select_rows(rows.iter());
        let g = rows.iter().map(|&r| self.g[r]).collect();
        let y = self
            .y
            .as_ref()
            .map(|y| rows.iter().map(|&r| y[r]).collect());
        Ok(Dataset {
            x,
            g,
            y,
            level_names: self.level_names.clone(),
            covariate_names: self.covariate_names.clone(),
            category_name: self.category_name.clone(),
            response_name: self.response_name.clone(),
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, schema)
    }

    /// Parses CSV with a header row. Level strings become dense indices in
    /// order of first appearance.
    pub fn read_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let resolved = schema.resolve(&headers)?;

        let p = resolved.covariates.len();
        let mut values: Vec<f64> = Vec::new();
        let mut g = Vec::new();
        let mut y = Vec::new();
        let mut level_names: Vec<String> = Vec::new();
        let mut level_index: HashMap<String, usize> = HashMap::new();

        let parse = |row: usize, col: usize, cell: &str| -> Result<f64> {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Data {
                row,
                column: headers[col].clone(),
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    column: headers[col].clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            Ok(v)
        };

        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Data {
                    row,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            for &j in &resolved.covariates {
                values.push(parse(row, j, &record[j])?);
            }
            let level = &record[resolved.category];
            let next = level_names.len();
            let idx = *level_index.entry(level.to_string()).or_insert_with(|| {
                level_names.push(level.to_string());
                next
            });
            g.push(idx);
            if let Some(j) = resolved.response {
                y.push(parse(row, j, &record[j])?);
            }
        }
        if g.is_empty() {
            return Err(Error::Empty("CSV file has no data rows".to_string()));
        }
        let n = g.len();
        let x = DMatrix::from_row_slice(n, p, &values);
        Dataset::with_names(
            x,
            g,
            resolved.response.map(|_| y),
            level_names,
            resolved
                .covariates
                .iter()
                .map(|&j| headers[j].clone())
                .collect(),
            headers[resolved.category].clone(),
            resolved.response.map(|j| headers[j].clone()),
        )
    }

    /// Writes covariates, the category (as level strings) and the response.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.covariate_names.iter().map(String::as_str).collect();
        header.push(&self.category_name);
        if let Some(r) = &self.response_name {
            header.push(r);
        }
        wtr.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.extend((0..self.p()).map(|j| format!("{}", self.x[(i, j)])));
            record.push(self.level_names[self.g[i]].clone());
            if let Some(y) = &self.y {
                record.push(format!("{}", y[i]));
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// The schema that reads back what [`Dataset::write_csv`] produces.
    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema::simple(&self.category_name, self.response_name.as_deref())
    }
}
