use std::sync::Arc;

use super::conv::{conv_apply, conv_input_grad, conv_weight_grad};
use super::ops::matmul_t;
use super::{Graph, Node, Op, Result, Scalar, Tensor, TensorError};

/// Reverse-mode gradients of a scalar `loss` with respect to each tensor in
/// `wrt`, returned in the same order.
///
/// Only nodes downstream of some `wrt` tensor are visited, so differentiating
/// with respect to intermediate values (e.g. adapted parameters) does not walk
/// back through the history that produced them.
///
/// With `create_higher_order`, the backward computation is itself recorded and
/// the returned gradients are graph-connected.
pub fn grad<T: Scalar>(loss: &Tensor<T>, wrt: &[&Tensor<T>], create_higher_order: bool) -> Result<Vec<Tensor<T>>> {
    if loss.numel() != 1 {
        return Err(TensorError::NotScalar(loss.shape().to_vec()));
    }
    let var = loss.var.as_ref().ok_or(TensorError::Unreachable(0))?;
    let graph = var.graph.clone();
    let last = var.id;

    let mut targets = Vec::with_capacity(wrt.len());
    for (i, t) in wrt.iter().enumerate() {
        match &t.var {
            Some(v) if v.graph.same(&graph) && v.id <= last => targets.push(v.id),
            Some(v) if !v.graph.same(&graph) => return Err(TensorError::GraphMismatch),
            _ => return Err(TensorError::Unreachable(i)),
        }
    }
    let first = targets.iter().copied().min().unwrap_or(last);
    let nodes = graph.nodes_upto(last);

    // Nodes whose value depends on some target.
    let mut live = vec![false; last + 1];
    for &t in &targets {
        live[t] = true;
    }
    for id in first..=last {
        if !live[id] {
            live[id] = nodes[id].inputs.iter().any(|i| matches!(i, Some(j) if live[*j]));
        }
    }
    if !live[last] {
        return Err(TensorError::Unreachable(0));
    }

    let previous = graph.set_recording(create_higher_order);
    let result = sweep(&graph, &nodes, &live, first, last, loss.shape());
    graph.set_recording(previous);
    let mut grads = result?;

    let mut out = Vec::with_capacity(targets.len());
    for (i, &t) in targets.iter().enumerate() {
        match grads[t].take() {
            Some(g) => {
                out.push(g.clone());
                grads[t] = Some(g);
            }
            None => return Err(TensorError::Unreachable(i)),
        }
    }
    Ok(out)
}

fn sweep<T: Scalar>(
    graph: &Graph<T>,
    nodes: &[Arc<Node<T>>],
    live: &[bool],
    first: usize,
    last: usize,
    loss_shape: &[usize],
) -> Result<Vec<Option<Tensor<T>>>> {
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; last + 1];
    grads[last] = Some(Tensor::ones(loss_shape));
    for id in (first..=last).rev() {
        if !live[id] {
            continue;
        }
        let Some(g) = grads[id].clone() else { continue };
        let node = &nodes[id];
        if matches!(node.op, Op::Leaf) {
            continue;
        }
        let needs: Vec<bool> = node.inputs.iter().map(|i| matches!(i, Some(j) if live[*j])).collect();
        if !needs.iter().any(|&n| n) {
            continue;
        }
        let input_grads = backward_rule(graph, &node.op, &g, &needs)?;
        for ((slot, need), gi) in node.inputs.iter().zip(&needs).zip(input_grads) {
            if !need {
                continue;
            }
            let (Some(j), Some(gi)) = (slot, gi) else { continue };
            grads[*j] = Some(match grads[*j].take() {
                None => gi,
                Some(prev) => prev.add(&gi)?,
            });
        }
    }
    Ok(grads)
}

fn opt<T: Scalar>(need: bool, f: impl FnOnce() -> Result<Tensor<T>>) -> Result<Option<Tensor<T>>> {
    if need {
        f().map(Some)
    } else {
        Ok(None)
    }
}

/// Vector-Jacobian products of one node, expressed with recorded tensor ops.
fn backward_rule<T: Scalar>(
    graph: &Graph<T>,
    op: &Op<T>,
    g: &Tensor<T>,
    needs: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    let need = |i: usize| needs.get(i).copied().unwrap_or(false);
    Ok(match op {
        Op::Leaf => Vec::new(),
        Op::Add { a, b } => vec![
            if need(0) { Some(g.sum_to(a)?) } else { None },
            if need(1) { Some(g.sum_to(b)?) } else { None },
        ],
        Op::Sub { a, b } => vec![
            if need(0) { Some(g.sum_to(a)?) } else { None },
            if need(1) { Some(g.sum_to(b)?.neg()?) } else { None },
        ],
        Op::Mul { a, b } => {
            let (a, b) = (a.load(graph), b.load(graph));
            vec![
                if need(0) {
                    Some(g.mul(&b)?.sum_to(a.shape())?)
                } else {
                    None
                },
                if need(1) {
                    Some(g.mul(&a)?.sum_to(b.shape())?)
                } else {
                    None
                },
            ]
        }
        Op::Neg => vec![Some(g.neg()?)],
        Op::Scale(c) => vec![Some(g.scale(*c)?)],
        Op::AddScalar => vec![Some(g.clone())],
        Op::Relu { mask, shape } => {
            let mask = Tensor {
                shape: shape.clone(),
                data: Arc::clone(mask),
                var: None,
            };
            vec![Some(g.mul(&mask)?)]
        }
        Op::Sigmoid { x } => {
            let y = x.load(graph).sigmoid()?;
            let dy = y.mul(&y.neg()?.add_scalar(T::one())?)?;
            vec![Some(g.mul(&dy)?)]
        }
        Op::Exp { x } => {
            let y = x.load(graph).exp()?;
            vec![Some(g.mul(&y)?)]
        }
        Op::Log { x } => {
            let inv = x.load(graph).powf(-T::one())?;
            vec![Some(g.mul(&inv)?)]
        }
        Op::Powf { x, p } => {
            let x = x.load(graph);
            let d = x.powf(*p - T::one())?.scale(*p)?;
            vec![Some(g.mul(&d)?)]
        }
        Op::SumTo { input } => vec![Some(g.broadcast_to(input)?)],
        Op::BroadcastTo { input } => vec![Some(g.sum_to(input)?)],
        Op::Reshape { input } => vec![Some(g.reshape(input)?)],
        Op::Gather { idx, src } => vec![Some(g.scatter_add(Arc::clone(idx), src)?)],
        Op::ScatterAdd { idx, src } => vec![Some(g.gather(Arc::clone(idx), src)?)],
        Op::MatMul { a, b, ta, tb } => {
            let (a, b) = (a.load(graph), b.load(graph));
            let ga = opt(need(0), || {
                if *ta {
                    matmul_t(&b, g, *tb, true)
                } else {
                    matmul_t(g, &b, false, !*tb)
                }
            })?;
            let gb = opt(need(1), || {
                if *tb {
                    matmul_t(g, &a, true, *ta)
                } else {
                    matmul_t(&a, g, !*ta, false)
                }
            })?;
            vec![ga, gb]
        }
        Op::Conv { x, w, geom } => {
            let (x, w) = (x.load(graph), w.load(graph));
            vec![
                opt(need(0), || conv_input_grad(g, &w, *geom))?,
                opt(need(1), || conv_weight_grad(g, &x, *geom))?,
            ]
        }
        Op::ConvInputGrad { g: gy, w, geom } => {
            // out = A_x^T(gy, w); upstream g has the input's shape.
            let (gy, w) = (gy.load(graph), w.load(graph));
            vec![
                opt(need(0), || conv_apply(g, &w, *geom))?,
                opt(need(1), || conv_weight_grad(&gy, g, *geom))?,
            ]
        }
        Op::ConvWeightGrad { g: gy, x, geom } => {
            // out = A_w^T(gy, x); upstream g has the weight's shape.
            let (gy, x) = (gy.load(graph), x.load(graph));
            vec![
                opt(need(0), || conv_apply(&x, g, *geom))?,
                opt(need(1), || conv_input_grad(&gy, g, *geom))?,
            ]
        }
    })
}
