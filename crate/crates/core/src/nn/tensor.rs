//! Dense storage types and the named parameter collections built from them.

use std::collections::BTreeMap;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape("Matrix::from_rows", "ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out += self · x`
    #[inline]
    pub(crate) fn gemv_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · y`
    #[inline]
    pub(crate) fn gemv_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
    }

    /// `self += y · xᵀ`
    #[inline]
    pub(crate) fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            for (w, &xj) in row.iter_mut().zip(x) {
                *w += yi * xj;
            }
        }
    }
}

/// Inner product with four interleaved partial sums, so the summation order
/// is fixed by the length alone.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(v: [f64; N]) -> Self {
        Vector(v.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Shape of a single named parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Matrix { rows: usize, cols: usize },
    Vector { len: usize },
}

impl Shape {
    pub fn numel(&self) -> usize {
        match *self {
            Shape::Matrix { rows, cols } => rows * cols,
            Shape::Vector { len } => len,
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Matrix { rows, cols } => write!(f, "{rows}x{cols}"),
            Shape::Vector { len } => write!(f, "[{len}]"),
        }
    }
}

/// A weight matrix or a bias vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Matrix(Matrix),
    Vector(Vector),
}

impl Param {
    pub fn zeros(shape: Shape) -> Self {
        match shape {
            Shape::Matrix { rows, cols } => Param::Matrix(Matrix::zeros(rows, cols)),
            Shape::Vector { len } => Param::Vector(Vector::zeros(len)),
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Param::Matrix(m) => Shape::Matrix {
                rows: m.rows(),
                cols: m.cols(),
            },
            Param::Vector(v) => Shape::Vector { len: v.len() },
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Param::Matrix(m) => m.as_slice(),
            Param::Vector(v) => v,
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Param::Matrix(m) => m.as_mut_slice(),
            Param::Vector(v) => v,
        }
    }

    pub(crate) fn from_shape_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        match shape {
            Shape::Matrix { rows, cols } => Matrix::from_vec(rows, cols, data).map(Param::Matrix),
            Shape::Vector { len } => {
                if data.len() != len {
                    return Err(Error::shape("Param", "vector length mismatch"));
                }
                Ok(Param::Vector(Vector(data)))
            }
        }
    }
}

/// Named parameters, iterated in lexicographic name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Param>,
}

/// Gradients keyed and shaped exactly like the [`ParamSet`] they differentiate.
pub type GradientSet = ParamSet;

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// All-zero set with the given shapes.
    pub fn zeros<'a, I>(shapes: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Shape)>,
    {
        let entries = shapes
            .into_iter()
            .map(|(name, shape)| (name.to_string(), Param::zeros(shape)))
            .collect();
        ParamSet { entries }
    }

    /// Zeros shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| (k.clone(), Param::zeros(p.shape())))
                .collect(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Param) -> Option<Param> {
        self.entries.insert(name.into(), param)
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.entries.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|p| p.shape().numel()).sum()
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        match self.entries.get(name) {
            Some(Param::Matrix(m)) => Ok(m),
            Some(Param::Vector(_)) => Err(Error::shape("ParamSet", format!("{name} is a vector, expected a matrix"))),
            None => Err(Error::usage("ParamSet", format!("missing parameter {name}"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&Vector> {
        match self.entries.get(name) {
            Some(Param::Vector(v)) => Ok(v),
            Some(Param::Matrix(_)) => Err(Error::shape("ParamSet", format!("{name} is a matrix, expected a vector"))),
            None => Err(Error::usage("ParamSet", format!("missing parameter {name}"))),
        }
    }

    pub fn matrix_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        match self.entries.get_mut(name) {
            Some(Param::Matrix(m)) => Ok(m),
            _ => Err(Error::usage("ParamSet", format!("missing matrix {name}"))),
        }
    }

    pub fn vector_mut(&mut self, name: &str) -> Result<&mut Vector> {
        match self.entries.get_mut(name) {
            Some(Param::Vector(v)) => Ok(v),
            _ => Err(Error::usage("ParamSet", format!("missing vector {name}"))),
        }
    }

    /// Entries whose name starts with `prefix`, as a new set.
    pub fn subset(&self, prefix: &str) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .range(prefix.to_string()..)
                .take_while(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Removes every entry whose name starts with `prefix`.
    pub fn remove_prefix(&mut self, prefix: &str) {
        self.entries.retain(|k, _| !k.starts_with(prefix));
    }

    /// Moves all entries of `other` into `self`, replacing duplicates.
    pub fn extend(&mut self, other: ParamSet) {
        self.entries.extend(other.entries);
    }

    /// `self += other`, entry by entry; both sets must be congruent.
    pub fn add_assign(&mut self, other: &ParamSet) -> Result<()> {
        self.check_congruent(other, "ParamSet::add_assign")?;
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for p in self.entries.values_mut() {
            for x in p.as_mut_slice() {
                *x *= factor;
            }
        }
    }

    /// Same names in the same order with the same shapes.
    pub fn check_congruent(&self, other: &ParamSet, op: &'static str) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::shape(
                op,
                format!("{} entries vs {} entries", self.entries.len(), other.entries.len()),
            ));
        }
        for ((ka, a), (kb, b)) in self.entries.iter().zip(other.entries.iter()) {
            if ka != kb {
                return Err(Error::shape(op, format!("parameter {ka} paired with {kb}")));
            }
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    op,
                    format!("{ka}: {} vs {}", a.shape(), b.shape()),
                ));
            }
        }
        Ok(())
    }

    /// Little-endian bytes of every entry in name order, for hashing and checkpoints.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.numel() * 8);
        for (name, p) in &self.entries {
            out.extend_from_slice(name.as_bytes());
            for v in p.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_is_lexicographic() {
        let mut p = ParamSet::new();
        p.insert("b.x", Param::Vector(Vector::zeros(1)));
        p.insert("a.y", Param::Vector(Vector::zeros(1)));
        p.insert("a.b", Param::Vector(Vector::zeros(1)));
        let names: Vec<_> = p.names().collect();
        assert_eq!(names, ["a.b", "a.y", "b.x"]);
    }

    #[test]
    fn subset_by_prefix() {
        let mut p = ParamSet::new();
        for n in ["decoder.l0.W", "estimator.fc.b", "estimator.gru.W_hr", "generator.l0.b"] {
            p.insert(n, Param::Vector(Vector::zeros(2)));
        }
        let est: Vec<_> = p.subset("estimator.").names().map(String::from).collect();
        assert_eq!(est, ["estimator.fc.b", "estimator.gru.W_hr"]);
        p.remove_prefix("estimator.");
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn congruence_reports_the_offending_name() {
        let a = ParamSet::zeros([("w", Shape::Matrix { rows: 2, cols: 3 })]);
        let b = ParamSet::zeros([("w", Shape::Matrix { rows: 3, cols: 2 })]);
        let err = a.check_congruent(&b, "test").unwrap_err().to_string();
        assert!(err.contains("w: 2x3 vs 3x2"), "{err}");
    }

    #[test]
    fn matrix_products() {
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let mut y = vec![0.0; 3];
        w.gemv_acc(&[1.0, -1.0], &mut y);
        assert_eq!(y, [-1.0, -1.0, -1.0]);
        let mut x = vec![0.0; 2];
        w.gemv_t_acc(&[1.0, 0.0, 1.0], &mut x);
        assert_eq!(x, [6.0, 8.0]);
        let mut g = Matrix::zeros(3, 2);
        g.outer_acc(&[1.0, 2.0, 0.0], &[3.0, 4.0]);
        assert_eq!(g.as_slice(), &[3.0, 4.0, 6.0, 8.0, 0.0, 0.0]);
    }
}
