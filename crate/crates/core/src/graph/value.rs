//! Node values: scalars, vectors and small dense matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Shape of a node value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    /// Number of scalar components.
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape from a dimension list: `[]`, `[d]` or `[r, c]`.
    pub fn from_dims(dims: &[usize]) -> Option<Shape> {
        match dims {
            [] => Some(Shape::Scalar),
            [n] => Some(Shape::Vector(*n)),
            [r, c] => Some(Shape::Matrix(*r, *c)),
            _ => None,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Scalar => vec![],
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }

    /// Column-name suffixes for each component, 1-based (`""`, `".2"`, `".1.2"`).
    pub fn component_suffixes(&self) -> Vec<String> {
        match *self {
            Shape::Scalar => vec![String::new()],
            Shape::Vector(n) => (1..=n).map(|i| format!(".{i}")).collect(),
            Shape::Matrix(r, c) => (1..=r)
                .flat_map(|i| (1..=c).map(move |j| format!(".{i}.{j}")))
                .collect(),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "vector[{n}]"),
            Shape::Matrix(r, c) => write!(f, "matrix[{r}x{c}]"),
        }
    }
}

/// A concrete value held by a node or produced by an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(DMatrix<f64>),
}

impl Value {
    pub fn shape(&self) -> Shape {
        match self {
            Value::Scalar(_) => Shape::Scalar,
            Value::Vector(v) => Shape::Vector(v.len()),
            Value::Matrix(m) => Shape::Matrix(m.nrows(), m.ncols()),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Value::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            Value::Matrix(m) => Some(m),
            _ => None,
        }
    }

    /// Components in row-major order.
    pub fn components(&self) -> Vec<f64> {
        match self {
            Value::Scalar(x) => vec![*x],
            Value::Vector(v) => v.clone(),
            Value::Matrix(m) => {
                let mut out = Vec::with_capacity(m.len());
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        out.push(m[(i, j)]);
                    }
                }
                out
            }
        }
    }

    /// Component `k` in row-major order.
    pub fn component(&self, k: usize) -> f64 {
        match self {
            Value::Scalar(x) => *x,
            Value::Vector(v) => v[k],
            Value::Matrix(m) => m[(k / m.ncols(), k % m.ncols())],
        }
    }

    /// Inverse of [`Value::components`].
    pub fn from_components(shape: Shape, comps: &[f64]) -> Value {
        debug_assert_eq!(shape.len(), comps.len());
        match shape {
            Shape::Scalar => Value::Scalar(comps[0]),
            Shape::Vector(_) => Value::Vector(comps.to_vec()),
            Shape::Matrix(r, c) => Value::Matrix(DMatrix::from_row_slice(r, c, comps)),
        }
    }

    pub fn zeros(shape: Shape) -> Value {
        Value::from_components(shape, &vec![0.0; shape.len()])
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Scalar(x) => x.is_finite(),
            Value::Vector(v) => v.iter().all(|x| x.is_finite()),
            Value::Matrix(m) => m.iter().all(|x| x.is_finite()),
        }
    }
}

/// JSON representation of a value: a number, a list, or a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueRepr {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl ValueRepr {
    pub fn into_value(self) -> Result<Value, String> {
        match self {
            ValueRepr::Scalar(x) => Ok(Value::Scalar(x)),
            ValueRepr::Vector(v) => Ok(Value::Vector(v)),
            ValueRepr::Matrix(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err("ragged matrix rows".into());
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                Ok(Value::Matrix(DMatrix::from_row_slice(r, c, &flat)))
            }
        }
    }
}

impl From<&Value> for ValueRepr {
    fn from(v: &Value) -> Self {
        match v {
            Value::Scalar(x) => ValueRepr::Scalar(*x),
            Value::Vector(v) => ValueRepr::Vector(v.clone()),
            Value::Matrix(m) => ValueRepr::Matrix(
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect(),
            ),
        }
    }
}
