use std::sync::Arc;

use super::{numel, record, Op, Result, Saved, Scalar, Tensor, TensorError};

/// Result shape of trailing-dimension broadcasting, if compatible.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Iteration plan for reading operands broadcast to a common output shape.
///
/// Dimensions are coalesced where every operand is either contiguous or
/// constant across them, so the innermost run is as long as possible. `runs`
/// holds the starting offset of each operand for every run, in output order.
struct Broadcast {
    run: usize,
    inner: Vec<usize>,
    runs: Vec<Vec<usize>>,
}

fn aligned_strides(src: &[usize], rank: usize) -> Vec<usize> {
    let offset = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        if src[i] != 1 {
            strides[i + offset] = acc;
        }
        acc *= src[i];
    }
    strides
}

impl Broadcast {
    fn new(sources: &[&[usize]], out: &[usize]) -> Broadcast {
        let strides: Vec<Vec<usize>> = sources.iter().map(|s| aligned_strides(s, out.len())).collect();
        // Coalesce from the innermost dimension outwards.
        let mut dims: Vec<usize> = Vec::new();
        let mut dstrides: Vec<Vec<usize>> = vec![Vec::new(); sources.len()];
        for d in (0..out.len()).rev() {
            if out[d] == 1 {
                continue;
            }
            let mergeable = !dims.is_empty()
                && strides
                    .iter()
                    .zip(&dstrides)
                    .all(|(s, ds)| s[d] == ds[ds.len() - 1] * dims[dims.len() - 1]);
            if mergeable {
                *dims.last_mut().expect("non-empty") *= out[d];
            } else {
                dims.push(out[d]);
                for (s, ds) in strides.iter().zip(dstrides.iter_mut()) {
                    ds.push(s[d]);
                }
            }
        }
        if dims.is_empty() {
            return Broadcast {
                run: usize::from(numel(out) > 0),
                inner: vec![0; sources.len()],
                runs: vec![vec![0; sources.len()]],
            };
        }
        // dims[0] is the innermost (coalesced) dimension.
        let run = dims[0];
        let inner = dstrides.iter().map(|ds| ds[0]).collect();
        let outer = &dims[1..];
        let count: usize = outer.iter().product();
        let mut runs = Vec::with_capacity(count);
        let mut idx = vec![0usize; outer.len()];
        let mut cur = vec![0usize; sources.len()];
        for _ in 0..count {
            runs.push(cur.clone());
            for (k, &len) in outer.iter().enumerate() {
                idx[k] += 1;
                for (c, ds) in cur.iter_mut().zip(&dstrides) {
                    *c += ds[k + 1];
                }
                if idx[k] < len {
                    break;
                }
                for (c, ds) in cur.iter_mut().zip(&dstrides) {
                    *c -= ds[k + 1] * len;
                }
                idx[k] = 0;
            }
        }
        Broadcast { run, inner, runs }
    }
}

impl<T: Scalar> Tensor<T> {
    fn zip_broadcast(
        &self,
        other: &Tensor<T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<(Vec<T>, Vec<usize>)> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok((data, self.shape.clone()));
        }
        let shape = broadcast_shape(&self.shape, &other.shape).ok_or_else(|| TensorError::ShapeMismatch {
            op,
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        })?;
        let plan = Broadcast::new(&[&self.shape, &other.shape], &shape);
        let (sa, sb) = (plan.inner[0], plan.inner[1]);
        let mut data = Vec::with_capacity(numel(&shape));
        for offs in &plan.runs {
            let (oa, ob) = (offs[0], offs[1]);
            match (sa, sb) {
                (1, 1) => data.extend(
                    self.data[oa..oa + plan.run]
                        .iter()
                        .zip(&other.data[ob..ob + plan.run])
                        .map(|(&a, &b)| f(a, b)),
                ),
                (1, 0) => {
                    let b = other.data[ob];
                    data.extend(self.data[oa..oa + plan.run].iter().map(|&a| f(a, b)));
                }
                (0, 1) => {
                    let a = self.data[oa];
                    data.extend(other.data[ob..ob + plan.run].iter().map(|&b| f(a, b)));
                }
                _ => data.extend((0..plan.run).map(|k| f(self.data[oa + k * sa], other.data[ob + k * sb]))),
            }
        }
        Ok((data, shape))
    }

    fn unary(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.data.iter().map(|&v| f(v)).collect()
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (data, shape) = self.zip_broadcast(other, "add", |a, b| a + b)?;
        record(data, shape, &[self, other], || Op::Add {
            a: self.shape.clone(),
            b: other.shape.clone(),
        })
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (data, shape) = self.zip_broadcast(other, "sub", |a, b| a - b)?;
        record(data, shape, &[self, other], || Op::Sub {
            a: self.shape.clone(),
            b: other.shape.clone(),
        })
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (data, shape) = self.zip_broadcast(other, "mul", |a, b| a * b)?;
        record(data, shape, &[self, other], || Op::Mul {
            a: Saved::of(self),
            b: Saved::of(other),
        })
    }

    pub fn neg(&self) -> Result<Tensor<T>> {
        record(self.unary(|v| -v), self.shape.clone(), &[self], || Op::Neg)
    }

    /// Multiplication by a constant.
    pub fn scale(&self, c: T) -> Result<Tensor<T>> {
        record(self.unary(|v| v * c), self.shape.clone(), &[self], || Op::Scale(c))
    }

    pub fn add_scalar(&self, c: T) -> Result<Tensor<T>> {
        record(self.unary(|v| v + c), self.shape.clone(), &[self], || Op::AddScalar)
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        let mask: Vec<T> = self.unary(|v| if v > T::zero() { T::one() } else { T::zero() });
        let data = self.unary(|v| if v > T::zero() { v } else { T::zero() });
        record(data, self.shape.clone(), &[self], || Op::Relu {
            mask: Arc::new(mask),
            shape: self.shape.clone(),
        })
    }

    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        let data = self.unary(|v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        });
        record(data, self.shape.clone(), &[self], || Op::Sigmoid { x: Saved::of(self) })
    }

    pub fn exp(&self) -> Result<Tensor<T>> {
        record(self.unary(|v| v.exp()), self.shape.clone(), &[self], || Op::Exp {
            x: Saved::of(self),
        })
    }

    pub fn log(&self) -> Result<Tensor<T>> {
        record(self.unary(|v| v.ln()), self.shape.clone(), &[self], || Op::Log {
            x: Saved::of(self),
        })
    }

    pub fn powf(&self, p: T) -> Result<Tensor<T>> {
        record(self.unary(|v| v.powf(p)), self.shape.clone(), &[self], || Op::Powf {
            x: Saved::of(self),
            p,
        })
    }

    /// Sums over broadcast dimensions so the result has `target` shape.
    pub fn sum_to(&self, target: &[usize]) -> Result<Tensor<T>> {
        if self.shape == target {
            return Ok(self.clone());
        }
        match broadcast_shape(target, &self.shape) {
            Some(s) if s == self.shape => {}
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "sum_to",
                    lhs: self.shape.clone(),
                    rhs: target.to_vec(),
                })
            }
        }
        let plan = Broadcast::new(&[target, &self.shape], &self.shape);
        let mut out = vec![T::zero(); numel(target)];
        let st = plan.inner[0];
        for offs in &plan.runs {
            let (ot, oi) = (offs[0], offs[1]);
            let src = &self.data[oi..oi + plan.run];
            if st == 0 {
                out[ot] = src.iter().fold(out[ot], |acc, &v| acc + v);
            } else {
                for (k, &v) in src.iter().enumerate() {
                    out[ot + k * st] = out[ot + k * st] + v;
                }
            }
        }
        record(out, target.to_vec(), &[self], || Op::SumTo {
            input: self.shape.clone(),
        })
    }

    pub fn broadcast_to(&self, target: &[usize]) -> Result<Tensor<T>> {
        if self.shape == target {
            return Ok(self.clone());
        }
        match broadcast_shape(&self.shape, target) {
            Some(s) if s == target => {}
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "broadcast_to",
                    lhs: self.shape.clone(),
                    rhs: target.to_vec(),
                })
            }
        }
        let plan = Broadcast::new(&[&self.shape], target);
        let s0 = plan.inner[0];
        let mut out = Vec::with_capacity(numel(target));
        for offs in &plan.runs {
            out.extend((0..plan.run).map(|k| self.data[offs[0] + k * s0]));
        }
        record(out, target.to_vec(), &[self], || Op::BroadcastTo {
            input: self.shape.clone(),
        })
    }

    pub fn sum(&self) -> Result<Tensor<T>> {
        self.sum_to(&[])
    }

    pub fn mean(&self) -> Result<Tensor<T>> {
        let n = T::from_f64(self.numel() as f64);
        self.sum()?.scale(T::one() / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        if shape == self.shape.as_slice() {
            return Ok(self.clone());
        }
        record(self.data.as_ref().clone(), shape.to_vec(), &[self], || Op::Reshape {
            input: self.shape.clone(),
        })
    }

    /// `out.flat[i] = self.flat[idx[i]]`.
    pub fn gather(&self, idx: Arc<Vec<usize>>, shape: &[usize]) -> Result<Tensor<T>> {
        if idx.len() != numel(shape) {
            return Err(TensorError::Invalid {
                op: "gather",
                msg: format!("{} indices for output shape {shape:?}", idx.len()),
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.numel()) {
            return Err(TensorError::Invalid {
                op: "gather",
                msg: format!("index {bad} out of range for {} elements", self.numel()),
            });
        }
        let out = idx.iter().map(|&i| self.data[i]).collect();
        record(out, shape.to_vec(), &[self], || Op::Gather {
            idx,
            src: self.shape.clone(),
        })
    }

    /// `out.flat[idx[i]] += self.flat[i]` into zeros of `shape`.
    pub fn scatter_add(&self, idx: Arc<Vec<usize>>, shape: &[usize]) -> Result<Tensor<T>> {
        if idx.len() != self.numel() {
            return Err(TensorError::Invalid {
                op: "scatter_add",
                msg: format!("{} indices for {} elements", idx.len(), self.numel()),
            });
        }
        let n = numel(shape);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(TensorError::Invalid {
                op: "scatter_add",
                msg: format!("index {bad} out of range for output of {n} elements"),
            });
        }
        let mut out = vec![T::zero(); n];
        for (&j, &v) in idx.iter().zip(self.data.iter()) {
            out[j] = out[j] + v;
        }
        record(out, shape.to_vec(), &[self], || Op::ScatterAdd {
            idx,
            src: self.shape.clone(),
        })
    }

    /// Selects slices along axis 0, in the given order (repeats allowed).
    pub fn index_select(&self, rows: &[usize]) -> Result<Tensor<T>> {
        let (n, row) = self.split_rows("index_select")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(TensorError::Invalid {
                op: "index_select",
                msg: format!("row {bad} out of range for {n} rows"),
            });
        }
        let idx: Vec<usize> = rows.iter().flat_map(|&r| r * row..(r + 1) * row).collect();
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        self.gather(Arc::new(idx), &shape)
    }

    /// Sums slices along axis 0 into `groups` buckets: row `i` goes to
    /// bucket `group_of[i]`.
    pub fn index_add(&self, group_of: &[usize], groups: usize) -> Result<Tensor<T>> {
        let (n, row) = self.split_rows("index_add")?;
        if group_of.len() != n || group_of.iter().any(|&g| g >= groups) {
            return Err(TensorError::Invalid {
                op: "index_add",
                msg: format!("bad grouping for {n} rows into {groups} groups"),
            });
        }
        let idx: Vec<usize> = group_of.iter().flat_map(|&g| g * row..(g + 1) * row).collect();
        let mut shape = self.shape.clone();
        shape[0] = groups;
        self.scatter_add(Arc::new(idx), &shape)
    }

    fn split_rows(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.rank() == 0 {
            return Err(TensorError::Rank {
                op,
                expected: 1,
                shape: self.shape.clone(),
            });
        }
        let n = self.shape[0];
        Ok((n, self.numel().checked_div(n).unwrap_or(0)))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() || start + len > self.shape[axis] {
            return Err(TensorError::Invalid {
                op: "narrow",
                msg: format!("[{start}, {}) on axis {axis} of {:?}", start + len, self.shape),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let extent = self.shape[axis];
        let mut idx = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            for a in start..start + len {
                let base = (o * extent + a) * inner;
                idx.extend(base..base + inner);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        self.gather(Arc::new(idx), &shape)
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts.first().ok_or_else(|| TensorError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        if axis >= first.rank() {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: format!("axis {axis} for shape {:?}", first.shape),
            });
        }
        for p in parts {
            let same = p.rank() == first.rank()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !same {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut shape = first.shape.clone();
        shape[axis] = total;
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut acc: Option<Tensor<T>> = None;
        let mut offset = 0;
        for p in parts {
            let extent = p.shape[axis];
            let mut idx = Vec::with_capacity(p.numel());
            for o in 0..outer {
                for a in 0..extent {
                    let base = (o * total + offset + a) * inner;
                    idx.extend(base..base + inner);
                }
            }
            let placed = p.scatter_add(Arc::new(idx), &shape)?;
            acc = Some(match acc {
                None => placed,
                Some(prev) => prev.add(&placed)?,
            });
            offset += extent;
        }
        Ok(acc.expect("at least one part"))
    }

    /// Row-wise maximum of a rank-2 tensor, as an untracked `[rows, 1]` tensor.
    pub fn row_max(&self) -> Result<Tensor<T>> {
        if self.rank() != 2 {
            return Err(TensorError::Rank {
                op: "row_max",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let cols = self.shape[1];
        let out = self
            .data
            .chunks(cols.max(1))
            .map(|r| r.iter().copied().fold(T::neg_infinity(), T::max))
            .collect();
        Ok(Tensor::raw(out, vec![self.shape[0], 1]))
    }

    /// Index of the maximum per row (first on ties).
    pub fn argmax_rows(&self) -> Result<Vec<usize>> {
        if self.rank() != 2 {
            return Err(TensorError::Rank {
                op: "argmax_rows",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        Ok(self
            .data
            .chunks(self.shape[1].max(1))
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        matmul_t(self, other, false, false)
    }
}

/// `op(a) · op(b)` where `op` optionally transposes a rank-2 operand.
pub(crate) fn matmul_t<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, ta: bool, tb: bool) -> Result<Tensor<T>> {
    for t in [a, b] {
        if t.rank() != 2 {
            return Err(TensorError::Rank {
                op: "matmul",
                expected: 2,
                shape: t.shape.clone(),
            });
        }
    }
    let (ar, ac) = (a.shape[0], a.shape[1]);
    let (br, bc) = (b.shape[0], b.shape[1]);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    let mut out = vec![T::zero(); m * n];
    if m > 0 && n > 0 && k > 0 {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &a.data,
            rsa,
            csa,
            &b.data,
            rsb,
            csb,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
    }
    record(out, vec![m, n], &[a, b], || Op::MatMul {
        a: Saved::of(a),
        b: Saved::of(b),
        ta,
        tb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64], s: &[usize]) -> Tensor<f64> {
        Tensor::from_f64(v, s).unwrap()
    }

    #[test]
    fn relu_and_sigmoid_values() {
        assert_eq!(t(&[-1.0, 0.0, 2.0], &[3]).relu().unwrap().to_vec(), vec![0.0, 0.0, 2.0]);
        assert_eq!(t(&[0.0], &[1]).sigmoid().unwrap().to_vec(), vec![0.5]);
    }

    #[test]
    fn add_and_broadcast() {
        assert_eq!(
            t(&[1.0, 2.0], &[2]).add(&t(&[3.0, 4.0], &[2])).unwrap().to_vec(),
            vec![4.0, 6.0]
        );
        let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = t(&[10.0, 20.0, 30.0], &[3]);
        assert_eq!(x.add(&b).unwrap().to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let col = t(&[1.0, 2.0], &[2, 1]);
        assert_eq!(x.mul(&col).unwrap().to_vec(), vec![1.0, 2.0, 3.0, 8.0, 10.0, 12.0]);
        assert!(matches!(
            x.add(&t(&[1.0, 2.0], &[2])),
            Err(TensorError::ShapeMismatch { op: "add", .. })
        ));
    }

    #[test]
    fn sum_to_reverses_broadcast() {
        let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        assert_eq!(x.sum_to(&[3]).unwrap().to_vec(), vec![5.0, 7.0, 9.0]);
        assert_eq!(x.sum_to(&[2, 1]).unwrap().to_vec(), vec![6.0, 15.0]);
        assert_eq!(x.sum().unwrap().item(), 21.0);
        assert!(x.sum_to(&[2]).is_err());
    }

    #[test]
    fn matmul_examples() {
        let eye = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let m = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        assert_eq!(eye.matmul(&m).unwrap().to_vec(), m.to_vec());
        let r = t(&[1.0, 2.0], &[1, 2]).matmul(&t(&[3.0, 4.0], &[2, 1])).unwrap();
        assert_eq!(r.shape(), &[1, 1]);
        assert_eq!(r.item(), 11.0);
        assert!(matches!(
            m.matmul(&t(&[1.0; 3], &[3, 1])),
            Err(TensorError::ShapeMismatch { .. })
        ));
        assert!(matches!(m.matmul(&t(&[1.0; 2], &[2])), Err(TensorError::Rank { .. })));
    }

    #[test]
    fn transposed_matmul_matches_explicit() {
        let a = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let at = t(&[1.0, 4.0, 2.0, 5.0, 3.0, 6.0], &[3, 2]);
        let lhs = matmul_t(&a, &a, true, false).unwrap();
        let rhs = at.matmul(&a).unwrap();
        assert_eq!(lhs.to_vec(), rhs.to_vec());
        let lhs = matmul_t(&a, &a, false, true).unwrap();
        let rhs = a.matmul(&at).unwrap();
        assert_eq!(lhs.to_vec(), rhs.to_vec());
    }

    #[test]
    fn narrow_concat_layout() {
        let a = t(&[1.0, 2.0, 3.0, 4.0], &[1, 2, 2]);
        let b = t(&[5.0, 6.0, 7.0, 8.0], &[1, 2, 2]);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[1, 4, 2]);
        assert_eq!(c.to_vec(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(c.narrow(1, 0, 2).unwrap().to_vec(), a.to_vec());
        assert_eq!(c.narrow(1, 2, 2).unwrap().to_vec(), b.to_vec());
        let rows = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]);
        assert_eq!(
            rows.index_select(&[2, 0, 2]).unwrap().to_vec(),
            vec![5.0, 6.0, 1.0, 2.0, 5.0, 6.0]
        );
        assert_eq!(
            rows.index_add(&[1, 0, 1], 2).unwrap().to_vec(),
            vec![3.0, 4.0, 6.0, 8.0]
        );
    }

    /// Reference broadcast: decode every output index and re-encode it in the
    /// source shape.
    fn naive_source_index(src: &[usize], out: &[usize], flat: usize) -> usize {
        let mut rem = flat;
        let mut coords = vec![0; out.len()];
        for d in (0..out.len()).rev() {
            coords[d] = rem % out[d];
            rem /= out[d];
        }
        let offset = out.len() - src.len();
        src.iter().enumerate().fold(0, |acc, (i, &len)| {
            acc * len + if len == 1 { 0 } else { coords[i + offset] }
        })
    }

    /// Two shapes broadcastable against each other; the first may have
    /// fewer leading dimensions.
    fn shapes() -> impl proptest::strategy::Strategy<Value = (Vec<usize>, Vec<usize>)> {
        use proptest::prelude::*;
        (
            prop::collection::vec((1usize..4, any::<bool>(), any::<bool>()), 0..5),
            0usize..5,
        )
            .prop_map(|(dims, drop)| {
                let a: Vec<usize> = dims.iter().map(|&(n, keep, _)| if keep { n } else { 1 }).collect();
                let b: Vec<usize> = dims.iter().map(|&(n, _, keep)| if keep { n } else { 1 }).collect();
                let drop = drop.min(a.len());
                (a[drop..].to_vec(), b)
            })
    }

    proptest::proptest! {
        #[test]
        fn broadcasting_matches_reference((sa, sb) in shapes()) {
            let na: usize = sa.iter().product();
            let nb: usize = sb.iter().product();
            let a = t(&(0..na).map(|v| v as f64).collect::<Vec<_>>(), &sa);
            let b = t(&(0..nb).map(|v| 100.0 * v as f64).collect::<Vec<_>>(), &sb);
            let out = broadcast_shape(&sa, &sb).unwrap();
            let sum = a.add(&b).unwrap();
            proptest::prop_assert_eq!(sum.shape(), out.as_slice());
            for (i, &v) in sum.data().iter().enumerate() {
                let expect = a.data()[naive_source_index(&sa, &out, i)] + b.data()[naive_source_index(&sb, &out, i)];
                proptest::prop_assert_eq!(v, expect);
            }
            let spread = a.broadcast_to(&out).unwrap();
            let mut reduced = vec![0.0; na];
            for (i, &v) in spread.data().iter().enumerate() {
                let j = naive_source_index(&sa, &out, i);
                proptest::prop_assert_eq!(v, a.data()[j]);
                reduced[j] += v;
            }
            proptest::prop_assert_eq!(spread.sum_to(&sa).unwrap().to_vec(), reduced);
        }
    }
}
