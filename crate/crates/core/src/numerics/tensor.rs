use std::rc::Rc;
use std::sync::Arc;

use thiserror::Error;

use super::autograd::GradNode;

/// Element type tag. Storage is always f64 internally; the tag controls how a
/// tensor is serialized and which precision a pipeline advertises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension error in {op}: {details}")]
    Dimension { op: &'static str, details: String },
    #[error("dtype mismatch in {op}: {details}")]
    DtypeMismatch { op: &'static str, details: String },
    #[error("numeric error in {op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("gradient error: {0}")]
    Gradient(String),
    #[error("validation error: {0}")]
    Validation(String),
}

pub(crate) type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major tensor. Values are immutable after construction; cloning is
/// cheap (shared storage). Gradient tracking attaches a tape node that records
/// how the tensor was produced.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    dtype: Dtype,
    data: Arc<Vec<f64>>,
    node: Option<Rc<GradNode>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("dtype", &self.dtype)
            .field("tracked", &self.node.is_some())
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>, dtype: Dtype) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::Dimension {
                op: "new",
                details: format!("shape {:?} requires {} values, got {}", shape, numel, data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: "new" });
        }
        Ok(Tensor { shape, dtype, data: Arc::new(data), node: None })
    }

    pub(crate) fn from_arc(
        op: &'static str,
        shape: Vec<usize>,
        data: Arc<Vec<f64>>,
        dtype: Dtype,
        node: Option<Rc<GradNode>>,
    ) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        debug_assert_eq!(numel, data.len());
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
        Ok(Tensor { shape, dtype, data, node })
    }

    pub fn zeros(shape: Vec<usize>, dtype: Dtype) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor { shape, dtype, data: Arc::new(vec![0.0; numel]), node: None }
    }

    pub fn full(shape: Vec<usize>, value: f64, dtype: Dtype) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor { shape, dtype, data: Arc::new(vec![value; numel]), node: None }
    }

    pub fn scalar(value: f64, dtype: Dtype) -> Tensor {
        Tensor { shape: vec![], dtype, data: Arc::new(vec![value]), node: None }
    }

    /// Identity matrix, used by degenerate-parameter test hooks.
    pub fn eye(n: usize, dtype: Dtype) -> Tensor {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor { shape: vec![n, n], dtype, data: Arc::new(data), node: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub(crate) fn node(&self) -> Option<&Rc<GradNode>> {
        self.node.as_ref()
    }

    /// Same values under a different precision tag.
    pub fn cast(&self, dtype: Dtype) -> Tensor {
        let mut t = self.clone();
        t.dtype = dtype;
        t
    }

    /// Detached view: same values, no tape history.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            dtype: self.dtype,
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    /// Marks this tensor as a gradient leaf. Only float64 tensors participate
    /// in gradient work.
    pub fn requires_grad(&self) -> Result<Tensor> {
        if self.dtype != Dtype::F64 {
            return Err(TensorError::Gradient(
                "gradient tracking requires float64 tensors".into(),
            ));
        }
        let mut t = self.detach();
        t.node = Some(GradNode::leaf(self.numel()));
        Ok(t)
    }

    /// Accumulated gradient, if this tensor is a tracked leaf (or intermediate)
    /// and a backward pass has run.
    pub fn grad(&self) -> Option<Tensor> {
        self.node.as_ref().map(|n| {
            let g = n.grad.borrow().clone();
            Tensor {
                shape: self.shape.clone(),
                dtype: self.dtype,
                data: Arc::new(g),
                node: None,
            }
        })
    }

    /// Reverse pass from a tracked scalar. Gradients accumulate into every
    /// tracked tensor reachable on the tape.
    pub fn backward(&self) -> Result<()> {
        let node = self.node.as_ref().ok_or_else(|| {
            TensorError::Gradient("backward called on an untracked tensor".into())
        })?;
        if self.numel() != 1 {
            return Err(TensorError::Gradient(format!(
                "backward requires a scalar output, got shape {:?}",
                self.shape
            )));
        }
        super::autograd::run_backward(node);
        Ok(())
    }

    pub fn value(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }
}
