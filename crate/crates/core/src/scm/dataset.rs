//! Multi-environment datasets.
//!
//! Row layout: covariate matrix, response vector, and a per-row environment
//! index into an ordered label list. The CSV format is
//! `x_<label>,...,y,env` with `.` as the decimal separator.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::Task;

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Covariate labels, one per column.
    pub columns: Vec<String>,
    /// n x d covariate matrix.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Ordered distinct environment labels.
    pub env_labels: Vec<String>,
    /// Per-row index into `env_labels`.
    pub env: Vec<u32>,
    pub task: Task,
}

impl Dataset {
    pub fn new(
        columns: Vec<String>,
        x: DMatrix<f64>,
        y: Vec<f64>,
        env_labels: Vec<String>,
        env: Vec<u32>,
        task: Task,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || env.len() != n {
            return Err(Error::validation(
                "covariates, response, and environment labels must have equal length",
            ));
        }
        if x.ncols() != columns.len() {
            return Err(Error::validation("column labels must match matrix width"));
        }
        if env.iter().any(|&e| e as usize >= env_labels.len()) {
            return Err(Error::validation("environment index out of range"));
        }
        if task == Task::Classification && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::validation(
                "classification responses must be in {0,1}",
            ));
        }
        Ok(Dataset {
            columns,
            x,
            y,
            env_labels,
            env,
            task,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_envs(&self) -> usize {
        self.env_labels.len()
    }

    pub fn col_index(&self, label: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::input(format!("unknown column `{label}`")))
    }

    /// Row indices belonging to environment `e`.
    pub fn rows_in_env(&self, e: u32) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.env[i] == e).collect()
    }

    /// Counts per environment, in label order.
    pub fn env_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_envs()];
        for &e in &self.env {
            counts[e as usize] += 1;
        }
        counts
    }

    /// Stacks datasets with identical schemas; environment label lists must
    /// be identical as well.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::input("cannot concatenate zero datasets"))?;
        let mut x_rows = Vec::new();
        let mut y = Vec::new();
        let mut env = Vec::new();
        for p in parts {
            if p.columns != first.columns
                || p.env_labels != first.env_labels
                || p.task != first.task
            {
                return Err(Error::validation("datasets have mismatched schemas"));
            }
            for i in 0..p.n() {
                x_rows.push(p.x.row(i).into_owned());
                y.push(p.y[i]);
                env.push(p.env[i]);
            }
        }
        let x = DMatrix::from_rows(&x_rows);
        Dataset::new(
            first.columns.clone(),
            x,
            y,
            first.env_labels.clone(),
            env,
            first.task,
        )
    }

    /// Selects rows by index into a new dataset (schema preserved).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(rows.len(), self.d(), |i, j| self.x[(rows[i], j)]);
        Dataset {
            columns: self.columns.clone(),
            x,
            y: rows.iter().map(|&i| self.y[i]).collect(),
            env_labels: self.env_labels.clone(),
            env: rows.iter().map(|&i| self.env[i]).collect(),
            task: self.task,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("x_{c}"))
            .chain(["y".to_string(), "env".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n() {
            let mut fields: Vec<String> =
                (0..self.d()).map(|j| format!("{}", self.x[(i, j)])).collect();
            fields.push(format!("{}", self.y[i]));
            fields.push(self.env_labels[self.env[i] as usize].clone());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, task: Task) -> Result<Dataset> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::validation("empty CSV"))?
            .map_err(Error::Io)?;
        let fields: Vec<&str> = header.trim_end().split(',').collect();
        if fields.len() < 2
            || fields[fields.len() - 2] != "y"
            || fields[fields.len() - 1] != "env"
        {
            return Err(Error::validation(
                "CSV header must end with `y,env` after the covariate columns",
            ));
        }
        let columns: Vec<String> = fields[..fields.len() - 2]
            .iter()
            .map(|f| {
                f.strip_prefix("x_")
                    .map(|s| s.to_string())
                    .ok_or_else(|| Error::validation(format!("covariate column `{f}` must start with `x_`")))
            })
            .collect::<Result<_>>()?;
        let d = columns.len();
        let mut x_data = Vec::new();
        let mut y = Vec::new();
        let mut env_labels: Vec<String> = Vec::new();
        let mut env = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.trim_end().split(',').collect();
            if parts.len() != d + 2 {
                return Err(Error::validation(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 2,
                    d + 2,
                    parts.len()
                )));
            }
            for (j, p) in parts[..d].iter().enumerate() {
                let v: f64 = p.parse().map_err(|_| {
                    Error::validation(format!(
                        "line {}: field `{}` (column {}) is not a number",
                        lineno + 2,
                        p,
                        j + 1
                    ))
                })?;
                x_data.push(v);
            }
            let yv: f64 = parts[d].parse().map_err(|_| {
                Error::validation(format!("line {}: bad response `{}`", lineno + 2, parts[d]))
            })?;
            y.push(yv);
            let label = parts[d + 1].to_string();
            let idx = match env_labels.iter().position(|l| *l == label) {
                Some(i) => i,
                None => {
                    env_labels.push(label);
                    env_labels.len() - 1
                }
            };
            env.push(idx as u32);
        }
        let n = y.len();
        let x = DMatrix::from_row_slice(n, d, &x_data);
        Dataset::new(columns, x, y, env_labels, env, task)
    }
}
