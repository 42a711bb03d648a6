//! Parsed system definitions and the JSON file format.

use super::expr::{CompiledExpr, EvalError, Expr, Var};
use super::parser::{parse_expr, ParseError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Linear,
    Nonlinear,
}

#[derive(Debug, Error)]
pub enum SysdefError {
    #[error("entry ({row},{col}): {source}")]
    Entry {
        row: usize,
        col: usize,
        source: ParseError,
    },
    #[error("component {idx}: {source}")]
    Component { idx: usize, source: ParseError },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("linear system needs an n x n entry matrix, got {rows} rows / row {row} has {cols} entries (n = {n})")]
    BadShape {
        n: usize,
        rows: usize,
        row: usize,
        cols: usize,
    },
    #[error("linear entry ({row},{col}) references state variables; linear entries are functions of t only")]
    StateInLinearEntry { row: usize, col: usize },
    #[error("triangular flag set but entry ({row},{col}) below the diagonal is not the zero literal")]
    NotTriangular { row: usize, col: usize },
    #[error("triangular flag set but component {idx} references x{bad} (allowed: x{idx}..x{n})")]
    NotTriangularField { idx: usize, bad: usize, n: usize },
    #[error("block split must satisfy 0 < p < n, got p = {p}, n = {n}")]
    BadBlockSplit { p: usize, n: usize },
    #[error("jacobian requested on a linear system")]
    NotNonlinear,
    #[error("coefficient matrix requested on a nonlinear system")]
    NotLinear,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
enum Entries {
    /// Row-major n x n matrix of expressions in `t`.
    Linear(Vec<Expr>),
    /// n vector-field components in `(t, x)`.
    Nonlinear(Vec<Expr>),
}

/// A parsed time-dependent linear system `x' = A(t) x` or nonlinear vector
/// field `x' = f(t, x)`, with symbolic partial derivatives prepared at load
/// time. Immutable after construction; evaluation is pure.
#[derive(Debug, Clone)]
pub struct SystemDef {
    name: String,
    description: Option<String>,
    kind: SystemKind,
    n: usize,
    triangular: bool,
    block_split: Option<usize>,
    entries: Entries,
    compiled: Vec<CompiledExpr>,
    /// Row-major Jacobian expressions (nonlinear systems only).
    jac: Option<Vec<Expr>>,
    jac_compiled: Option<Vec<CompiledExpr>>,
}

/// On-disk JSON document. `entries` is a nested array of expression strings
/// for linear systems and a flat array for nonlinear ones.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    kind: SystemKind,
    n: usize,
    #[serde(default)]
    triangular: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    block_split: Option<usize>,
    entries: EntriesFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum EntriesFile {
    Matrix(Vec<Vec<String>>),
    Fields(Vec<String>),
}

impl SystemDef {
    /// Build a linear system from row-major entry strings.
    pub fn linear(
        name: &str,
        n: usize,
        entries: &[Vec<String>],
        triangular: bool,
        block_split: Option<usize>,
    ) -> Result<SystemDef, SysdefError> {
        if n == 0 {
            return Err(SysdefError::ZeroDimension);
        }
        if entries.len() != n {
            return Err(SysdefError::BadShape {
                n,
                rows: entries.len(),
                row: 0,
                cols: 0,
            });
        }
        let mut exprs = Vec::with_capacity(n * n);
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(SysdefError::BadShape {
                    n,
                    rows: entries.len(),
                    row: i,
                    cols: row.len(),
                });
            }
            for (j, text) in row.iter().enumerate() {
                let e = parse_expr(text, 0).map_err(|source| match source {
                    // n = 0 makes every state reference an unknown variable;
                    // report it as a state-in-linear-entry problem instead.
                    ParseError::UnknownVariable { .. } => SysdefError::StateInLinearEntry {
                        row: i + 1,
                        col: j + 1,
                    },
                    other => SysdefError::Entry {
                        row: i + 1,
                        col: j + 1,
                        source: other,
                    },
                })?;
                exprs.push(e);
            }
        }
        if triangular {
            for i in 0..n {
                for j in 0..i {
                    if !exprs[i * n + j].is_zero_literal() {
                        return Err(SysdefError::NotTriangular {
                            row: i + 1,
                            col: j + 1,
                        });
                    }
                }
            }
        }
        if let Some(p) = block_split {
            if p == 0 || p >= n {
                return Err(SysdefError::BadBlockSplit { p, n });
            }
        }
        let compiled = exprs.iter().map(Expr::compile).collect();
        Ok(SystemDef {
            name: name.to_string(),
            description: None,
            kind: SystemKind::Linear,
            n,
            triangular,
            block_split,
            entries: Entries::Linear(exprs),
            compiled,
            jac: None,
            jac_compiled: None,
        })
    }

    /// Build a nonlinear vector field from component strings.
    pub fn nonlinear(
        name: &str,
        n: usize,
        fields: &[String],
        triangular: bool,
    ) -> Result<SystemDef, SysdefError> {
        if n == 0 {
            return Err(SysdefError::ZeroDimension);
        }
        if fields.len() != n {
            return Err(SysdefError::BadShape {
                n,
                rows: fields.len(),
                row: 0,
                cols: 0,
            });
        }
        let mut exprs = Vec::with_capacity(n);
        for (i, text) in fields.iter().enumerate() {
            let e = parse_expr(text, n)
                .map_err(|source| SysdefError::Component { idx: i + 1, source })?;
            exprs.push(e);
        }
        if triangular {
            // f_i may reference only t and x_i..x_n.
            for (i, e) in exprs.iter().enumerate() {
                let lo = e.min_state_ref();
                if lo != usize::MAX && lo < i + 1 {
                    return Err(SysdefError::NotTriangularField {
                        idx: i + 1,
                        bad: lo,
                        n,
                    });
                }
            }
        }
        let jac: Vec<Expr> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| exprs[i].differentiate(Var::State(j)))
            .collect();
        let compiled = exprs.iter().map(Expr::compile).collect();
        let jac_compiled = Some(jac.iter().map(Expr::compile).collect());
        Ok(SystemDef {
            name: name.to_string(),
            description: None,
            kind: SystemKind::Nonlinear,
            n,
            triangular,
            block_split: None,
            entries: Entries::Nonlinear(exprs),
            compiled,
            jac: Some(jac),
            jac_compiled,
        })
    }

    pub fn load(path: &Path) -> Result<SystemDef, SysdefError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<SystemDef, SysdefError> {
        let file: SystemFile = serde_json::from_str(text)?;
        let mut def = match (&file.kind, &file.entries) {
            (SystemKind::Linear, EntriesFile::Matrix(rows)) => SystemDef::linear(
                &file.name,
                file.n,
                rows,
                file.triangular,
                file.block_split,
            )?,
            (SystemKind::Nonlinear, EntriesFile::Fields(fields)) => {
                SystemDef::nonlinear(&file.name, file.n, fields, file.triangular)?
            }
            (SystemKind::Linear, EntriesFile::Fields(_)) => {
                return Err(SysdefError::BadShape {
                    n: file.n,
                    rows: 0,
                    row: 0,
                    cols: 0,
                })
            }
            (SystemKind::Nonlinear, EntriesFile::Matrix(_)) => {
                return Err(SysdefError::BadShape {
                    n: file.n,
                    rows: 0,
                    row: 0,
                    cols: 0,
                })
            }
        };
        def.description = file.description;
        Ok(def)
    }

    pub fn to_json(&self) -> String {
        let entries = match &self.entries {
            Entries::Linear(exprs) => EntriesFile::Matrix(
                (0..self.n)
                    .map(|i| (0..self.n).map(|j| exprs[i * self.n + j].to_string()).collect())
                    .collect(),
            ),
            Entries::Nonlinear(exprs) => {
                EntriesFile::Fields(exprs.iter().map(Expr::to_string).collect())
            }
        };
        let file = SystemFile {
            name: self.name.clone(),
            description: self.description.clone(),
            kind: self.kind,
            n: self.n,
            triangular: self.triangular,
            block_split: self.block_split,
            entries,
        };
        serde_json::to_string_pretty(&file).expect("system serialization cannot fail")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_triangular(&self) -> bool {
        self.triangular
    }

    pub fn block_split(&self) -> Option<usize> {
        self.block_split
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        match &self.entries {
            Entries::Linear(e) => &e[i * self.n + j],
            Entries::Nonlinear(_) => panic!("entry() on a nonlinear system"),
        }
    }

    pub fn component(&self, i: usize) -> &Expr {
        match &self.entries {
            Entries::Nonlinear(e) => &e[i],
            Entries::Linear(_) => panic!("component() on a linear system"),
        }
    }

    /// Evaluate the coefficient matrix A(t) of a linear system.
    pub fn coefficient_matrix(&self, t: f64) -> Result<DMatrix<f64>, SysdefError> {
        if self.kind != SystemKind::Linear {
            return Err(SysdefError::NotLinear);
        }
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self.compiled[i * n + j].eval(t, &[])?;
            }
        }
        Ok(out)
    }

    /// Evaluate the vector field f(t, x) of a nonlinear system.
    pub fn vector_field(&self, t: f64, x: &[f64]) -> Result<DVector<f64>, SysdefError> {
        if self.kind != SystemKind::Nonlinear {
            return Err(SysdefError::NotNonlinear);
        }
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            out[i] = self.compiled[i].eval(t, x)?;
        }
        Ok(out)
    }

    /// Symbolic partial derivative ∂f_i/∂x_j of a nonlinear system.
    pub fn partial(&self, i: usize, j: usize) -> Result<&Expr, SysdefError> {
        self.jac
            .as_ref()
            .map(|jac| &jac[i * self.n + j])
            .ok_or(SysdefError::NotNonlinear)
    }

    /// Jacobian matrix of evaluated symbolic partials at (t, x).
    ///
    /// Exactly upper triangular when the triangular flag is set: the
    /// below-diagonal partials are the literal zero by the construction
    /// invariant.
    pub fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, SysdefError> {
        let jac = self.jac_compiled.as_ref().ok_or(SysdefError::NotNonlinear)?;
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = jac[i * n + j].eval(t, x)?;
            }
        }
        Ok(out)
    }

    /// Extract the diagonal blocks and coupling block of a block-split linear
    /// system, as fresh linear systems (A, B) plus the p x (n-p) coupling
    /// entry expressions.
    pub fn split_blocks(&self) -> Result<(SystemDef, SystemDef, Vec<Vec<Expr>>), SysdefError> {
        let p = self.block_split.ok_or(SysdefError::BadBlockSplit { p: 0, n: self.n })?;
        let exprs = match &self.entries {
            Entries::Linear(e) => e,
            Entries::Nonlinear(_) => return Err(SysdefError::NotLinear),
        };
        let n = self.n;
        // The lower-left block must vanish identically for the split to make sense.
        for i in p..n {
            for j in 0..p {
                if !exprs[i * n + j].is_zero_literal() {
                    return Err(SysdefError::NotTriangular {
                        row: i + 1,
                        col: j + 1,
                    });
                }
            }
        }
        let rows_a: Vec<Vec<String>> = (0..p)
            .map(|i| (0..p).map(|j| exprs[i * n + j].to_string()).collect())
            .collect();
        let rows_b: Vec<Vec<String>> = (p..n)
            .map(|i| (p..n).map(|j| exprs[i * n + j].to_string()).collect())
            .collect();
        let a = SystemDef::linear(&format!("{}::top", self.name), p, &rows_a, false, None)?;
        let b = SystemDef::linear(&format!("{}::bottom", self.name), n - p, &rows_b, false, None)?;
        let c: Vec<Vec<Expr>> = (0..p)
            .map(|i| (p..n).map(|j| exprs[i * n + j].clone()).collect())
            .collect();
        Ok((a, b, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(strs: &[&[&str]]) -> Vec<Vec<String>> {
        strs.iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn jacobian_examples() {
        let s = SystemDef::nonlinear("neg", 1, &["-x1".to_string()], false).unwrap();
        let j = s.jacobian(0.0, &[5.0]).unwrap();
        assert_eq!(j[(0, 0)], -1.0);

        let s = SystemDef::nonlinear(
            "tri",
            2,
            &["-x1 + exp(-2*t)*sin(x2)".to_string(), "-x2".to_string()],
            true,
        )
        .unwrap();
        let j = s.jacobian(0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(j[(0, 0)], -1.0);
        assert_eq!(j[(0, 1)], 1.0);
        assert_eq!(j[(1, 0)], 0.0);
        assert_eq!(j[(1, 1)], -1.0);
    }

    #[test]
    fn triangular_violations_rejected_at_load() {
        let err = SystemDef::nonlinear(
            "bad",
            2,
            &["-x1".to_string(), "-x2 + x1".to_string()],
            true,
        )
        .unwrap_err();
        assert!(matches!(err, SysdefError::NotTriangularField { idx: 2, bad: 1, .. }));

        let err = SystemDef::linear(
            "bad",
            2,
            &rows(&[&["-1", "0"], &["1", "-2"]]),
            true,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, SysdefError::NotTriangular { row: 2, col: 1 }));
    }

    #[test]
    fn triangular_jacobian_has_exact_zeros() {
        let s = SystemDef::nonlinear(
            "tri3",
            3,
            &[
                "-x1 + t*tanh(x2) - x3^2".to_string(),
                "-2*x2 + sin(x3)".to_string(),
                "-3*x3".to_string(),
            ],
            true,
        )
        .unwrap();
        for k in 0..10 {
            let t = 0.3 * k as f64;
            let x = [1.0 + t, -0.5 * t, t.sin()];
            let j = s.jacobian(t, &x).unwrap();
            for i in 0..3 {
                for jj in 0..i {
                    assert_eq!(j[(i, jj)], 0.0);
                }
            }
        }
    }

    #[test]
    fn linear_entries_reject_state() {
        let err =
            SystemDef::linear("bad", 1, &rows(&[&["x1"]]), false, None).unwrap_err();
        assert!(matches!(err, SysdefError::StateInLinearEntry { row: 1, col: 1 }));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{
            "name": "barreira-valls",
            "kind": "linear",
            "n": 1,
            "triangular": false,
            "entries": [["-3 - t*sin(t)"]]
        }"#;
        let s = SystemDef::from_json(text).unwrap();
        assert_eq!(s.dim(), 1);
        let a = s.coefficient_matrix(0.0).unwrap();
        assert_eq!(a[(0, 0)], -3.0);
        let re = SystemDef::from_json(&s.to_json()).unwrap();
        let t = 2.7;
        assert_eq!(
            s.coefficient_matrix(t).unwrap(),
            re.coefficient_matrix(t).unwrap()
        );
    }

    #[test]
    fn json_rejects_unknown_fields_and_bad_split() {
        let text = r#"{"name":"x","kind":"linear","n":1,"entries":[["0"]],"extra":1}"#;
        assert!(SystemDef::from_json(text).is_err());
        let text = r#"{"name":"x","kind":"linear","n":2,"block_split":2,
                       "entries":[["-1","1"],["0","-2"]]}"#;
        assert!(matches!(
            SystemDef::from_json(text),
            Err(SysdefError::BadBlockSplit { p: 2, n: 2 })
        ));
    }

    #[test]
    fn block_split_extraction() {
        let text = r#"{"name":"stb","kind":"linear","n":3,"block_split":2,
            "entries":[["-1","1","exp(-t)"],["0","-2","1"],["0","0","-3"]]}"#;
        let s = SystemDef::from_json(text).unwrap();
        let (a, b, c) = s.split_blocks().unwrap();
        assert_eq!(a.dim(), 2);
        assert_eq!(b.dim(), 1);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].len(), 1);
        let am = a.coefficient_matrix(0.0).unwrap();
        assert_eq!(am[(0, 1)], 1.0);
        assert_eq!(b.coefficient_matrix(0.0).unwrap()[(0, 0)], -3.0);
        assert_eq!(c[0][0].eval(0.0, None).unwrap(), 1.0);
    }
}
