//! Reverse-mode automatic differentiation over dense n-dimensional arrays.
//!
//! Every [`Tensor`] is an immutable value. A tensor becomes *tracked* once it
//! is registered as a leaf on a [`Graph`] (or is computed from a tracked
//! tensor while that graph is recording). Operations on tracked tensors append
//! nodes to the graph in evaluation order, so the append order is always a
//! valid topological order.
//!
//! Backward rules are written in terms of the same tensor operations. Running
//! [`grad`] with `create_higher_order = true` therefore records the backward
//! pass on the graph itself, and a second differentiation through the returned
//! gradients is valid. This is what second-order MAML needs.
//!
//! ```
//! use ssml::tensor::{grad, Graph, Tensor};
//!
//! let graph = Graph::<f64>::new();
//! let w = graph.leaf(&Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap());
//! let loss = w.mul(&w).unwrap().sum().unwrap();
//! let g = grad(&loss, &[&w], true).unwrap();
//! assert_eq!(g[0].to_vec(), vec![2.0, 4.0]);
//! // d/dw sum(2w) = 2
//! let gg = grad(&g[0].sum().unwrap(), &[&w], false).unwrap();
//! assert_eq!(gg[0].to_vec(), vec![2.0, 2.0]);
//! ```

mod conv;
mod grad;
mod loss;
mod ops;
mod params;

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

pub use conv::{batchnorm2d, conv2d, maxpool2d, maxpool2d_ceil};
pub use grad::grad;
pub use loss::{mse_loss, softmax_cross_entropy, softmax_xent_temperature};
pub use params::{finite_diff_grad, GradMap, ParamSet};

pub(crate) use conv::ConvGeom;

/// Element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    /// Tag used in the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<DType> {
        match tag {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DType::F32 => f.write_str("float32"),
            DType::F64 => f.write_str("float64"),
        }
    }
}

/// Floating-point element types supported by the engine.
pub trait Scalar:
    num_traits::Float + fmt::Debug + fmt::Display + Default + Send + Sync + std::iter::Sum + 'static
{
    const DTYPE: DType;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * op(a) * op(b) + beta * c` with explicit strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        // SAFETY: every addressed element lies inside the slices (checked above).
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte chunk"))
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        // SAFETY: every addressed element lies inside the slices (checked above).
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte chunk"))
    }
}

#[allow(clippy::too_many_arguments)]
fn check_gemm_bounds(
    m: usize,
    k: usize,
    n: usize,
    la: usize,
    rsa: isize,
    csa: isize,
    lb: usize,
    rsb: isize,
    csb: isize,
    lc: usize,
    rsc: isize,
    csc: isize,
) {
    let last = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
            (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
        }
    };
    assert!(last(m, k, rsa, csa) <= la, "gemm: lhs out of bounds");
    assert!(last(k, n, rsb, csb) <= lb, "gemm: rhs out of bounds");
    assert!(last(m, n, rsc, csc) <= lc, "gemm: output out of bounds");
}

/// Errors raised by tensor operations and differentiation.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward: tensor #{0} of `wrt` is not reachable from the loss")]
    Unreachable(usize),
    #[error("operands belong to different gradient graphs")]
    GraphMismatch,
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Append-only record of differentiable operations.
///
/// A graph and its tracked tensors belong to one thread of execution; use
/// one graph per task when working in parallel.
pub struct Graph<T: Scalar> {
    inner: Arc<GraphInner<T>>,
}

struct GraphInner<T: Scalar> {
    nodes: Mutex<Vec<Arc<Node<T>>>>,
    recording: AtomicBool,
}

impl<T: Scalar> Clone for Graph<T> {
    fn clone(&self) -> Self {
        Graph {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> fmt::Debug for Graph<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.len()).finish()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            inner: Arc::new(GraphInner {
                nodes: Mutex::new(Vec::new()),
                recording: AtomicBool::new(true),
            }),
        }
    }

    /// Registers `value` as a differentiable leaf of this graph.
    pub fn leaf(&self, value: &Tensor<T>) -> Tensor<T> {
        let id = self.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
        });
        Tensor {
            shape: value.shape.clone(),
            data: Arc::clone(&value.data),
            var: Some(Var {
                graph: self.clone(),
                id,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.nodes.lock().expect("graph lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same(&self, other: &Graph<T>) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn is_recording(&self) -> bool {
        self.inner.recording.load(Ordering::Relaxed)
    }

    pub(crate) fn set_recording(&self, on: bool) -> bool {
        self.inner.recording.swap(on, Ordering::Relaxed)
    }

    fn push(&self, node: Node<T>) -> usize {
        let mut nodes = self.inner.nodes.lock().expect("graph lock");
        nodes.push(Arc::new(node));
        nodes.len() - 1
    }

    pub(crate) fn nodes_upto(&self, last: usize) -> Vec<Arc<Node<T>>> {
        let nodes = self.inner.nodes.lock().expect("graph lock");
        nodes[..=last].to_vec()
    }
}

#[derive(Clone)]
pub(crate) struct Var<T: Scalar> {
    pub(crate) graph: Graph<T>,
    pub(crate) id: usize,
}

/// A value captured by a node for use in its backward rule. Holds the node id
/// but not the graph, so graphs never own references to themselves.
#[derive(Clone)]
pub(crate) struct Saved<T: Scalar> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    id: Option<usize>,
}

impl<T: Scalar> Saved<T> {
    pub(crate) fn of(t: &Tensor<T>) -> Self {
        Saved {
            shape: t.shape.clone(),
            data: Arc::clone(&t.data),
            id: t.var.as_ref().map(|v| v.id),
        }
    }

    /// Reconstitutes the tensor; it is tracked only while `graph` records.
    pub(crate) fn load(&self, graph: &Graph<T>) -> Tensor<T> {
        let var = match self.id {
            Some(id) if graph.is_recording() => Some(Var {
                graph: graph.clone(),
                id,
            }),
            _ => None,
        };
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            var,
        }
    }
}

pub(crate) struct Node<T: Scalar> {
    pub(crate) op: Op<T>,
    /// Graph ids of the operation's inputs, `None` for untracked inputs.
    pub(crate) inputs: Vec<Option<usize>>,
}

pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add {
        a: Vec<usize>,
        b: Vec<usize>,
    },
    Sub {
        a: Vec<usize>,
        b: Vec<usize>,
    },
    Mul {
        a: Saved<T>,
        b: Saved<T>,
    },
    Neg,
    Scale(T),
    AddScalar,
    Relu {
        mask: Arc<Vec<T>>,
        shape: Vec<usize>,
    },
    Sigmoid {
        x: Saved<T>,
    },
    Exp {
        x: Saved<T>,
    },
    Log {
        x: Saved<T>,
    },
    Powf {
        x: Saved<T>,
        p: T,
    },
    SumTo {
        input: Vec<usize>,
    },
    BroadcastTo {
        input: Vec<usize>,
    },
    Reshape {
        input: Vec<usize>,
    },
    Gather {
        idx: Arc<Vec<usize>>,
        src: Vec<usize>,
    },
    ScatterAdd {
        idx: Arc<Vec<usize>>,
        src: Vec<usize>,
    },
    MatMul {
        a: Saved<T>,
        b: Saved<T>,
        ta: bool,
        tb: bool,
    },
    Conv {
        x: Saved<T>,
        w: Saved<T>,
        geom: ConvGeom,
    },
    ConvInputGrad {
        g: Saved<T>,
        w: Saved<T>,
        geom: ConvGeom,
    },
    ConvWeightGrad {
        g: Saved<T>,
        x: Saved<T>,
        geom: ConvGeom,
    },
}

impl<T: Scalar> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Neg => "negate",
            Op::Scale(_) => "scale",
            Op::AddScalar => "add_scalar",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Exp { .. } => "exp",
            Op::Log { .. } => "log",
            Op::Powf { .. } => "powf",
            Op::SumTo { .. } => "sum_to",
            Op::BroadcastTo { .. } => "broadcast_to",
            Op::Reshape { .. } => "reshape",
            Op::Gather { .. } => "gather",
            Op::ScatterAdd { .. } => "scatter_add",
            Op::MatMul { .. } => "matmul",
            Op::Conv { .. } => "conv2d",
            Op::ConvInputGrad { .. } => "conv2d_input_grad",
            Op::ConvWeightGrad { .. } => "conv2d_weight_grad",
        }
    }
}

/// Dense row-major array, optionally tracked by a [`Graph`].
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    var: Option<Var<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            var: self.var.clone(),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape).field("dtype", &T::DTYPE);
        if let Some(v) = &self.var {
            s.field("node", &v.id);
        }
        if self.data.len() <= 16 {
            s.field("data", &self.data);
        }
        s.finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::Invalid {
                op: "from_vec",
                msg: format!(
                    "shape {shape:?} holds {} elements, buffer has {}",
                    numel(shape),
                    data.len()
                ),
            });
        }
        Ok(Self::raw(data, shape.to_vec()))
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::from_vec(data.iter().map(|&v| T::from_f64(v)).collect(), shape)
    }

    pub fn scalar(v: T) -> Self {
        Self::raw(vec![v], Vec::new())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::raw(vec![v; numel(shape)], shape.to_vec())
    }

    pub(crate) fn raw(data: Vec<T>, shape: Vec<usize>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            shape,
            data: Arc::new(data),
            var: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.as_ref().clone()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_tracked(&self) -> bool {
        self.var.is_some()
    }

    pub fn graph(&self) -> Option<&Graph<T>> {
        self.var.as_ref().map(|v| &v.graph)
    }

    /// Same values, disconnected from any graph.
    pub fn detach(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            var: None,
        }
    }

    pub(crate) fn node_id(&self) -> Option<usize> {
        self.var.as_ref().map(|v| v.id)
    }

    /// Same buffer, element-for-element.
    pub fn bit_eq(&self, other: &Tensor<T>) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| Scalar::to_f64(*a).to_bits() == Scalar::to_f64(*b).to_bits())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::raw(
            self.data.iter().map(|v| U::from_f64(Scalar::to_f64(*v))).collect(),
            self.shape.clone(),
        )
    }
}

/// Builds the output tensor of an operation, recording a node when any input
/// is tracked by a recording graph.
pub(crate) fn record<T: Scalar>(
    data: Vec<T>,
    shape: Vec<usize>,
    inputs: &[&Tensor<T>],
    op: impl FnOnce() -> Op<T>,
) -> Result<Tensor<T>> {
    let mut graph: Option<&Graph<T>> = None;
    for t in inputs {
        if let Some(v) = &t.var {
            match graph {
                None => graph = Some(&v.graph),
                Some(g) if g.same(&v.graph) => {}
                Some(_) => return Err(TensorError::GraphMismatch),
            }
        }
    }
    let op = op();
    if cfg!(debug_assertions) && data.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite { op: op.name() });
    }
    let var = match graph {
        Some(g) if g.is_recording() => {
            let ids = inputs.iter().map(|t| t.node_id()).collect();
            let id = g.push(Node { op, inputs: ids });
            Some(Var { graph: g.clone(), id })
        }
        _ => None,
    };
    Ok(Tensor {
        shape,
        data: Arc::new(data),
        var,
    })
}
