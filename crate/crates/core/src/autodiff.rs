//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Tape`] borrows the parameter tensors of a model and records every
//! primitive applied to them. Nodes are appended in evaluation order, so
//! walking the tape backwards is a valid (and deterministic) topological
//! order for the backward pass.

use crate::error::{Result, SinetError};
use crate::ops::{self, Activation, LstmCache};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Conv1d { input: NodeId, kernels: NodeId, bias: NodeId },
    Relu { input: NodeId },
    MaxPool { input: NodeId, argmax: Vec<usize> },
    Dense { input: NodeId, weight: NodeId, bias: NodeId, activation: Activation },
    Lstm { seq: NodeId, w: NodeId, u: NodeId, b: NodeId, return_sequence: bool, cache: Box<LstmCache> },
    Concat { a: NodeId, b: NodeId },
    Stack { items: Vec<NodeId> },
    Mse { pred: NodeId, target: NodeId },
    Sum { input: NodeId },
}

#[derive(Debug)]
struct Node {
    /// `None` for parameter nodes, whose value lives in the borrowed slice.
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    /// A tape with no parameters; leaves are created with [`Tape::input`].
    pub fn empty() -> Tape<'static> {
        Tape {
            params: &[],
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(i), _) => &self.params[*i],
            (_, Some(v)) => v,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, value: Option<Tensor>, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Records a leaf. Its gradient is tracked iff `tensor.requires_grad()`.
    pub fn input(&mut self, tensor: Tensor) -> NodeId {
        let rg = tensor.requires_grad();
        self.push(Some(tensor), Op::Input, rg)
    }

    /// Records a reference to parameter `index` of the borrowed slice.
    pub fn param(&mut self, index: usize) -> Result<NodeId> {
        let p = self.params.get(index).ok_or_else(|| {
            SinetError::Dimension(format!(
                "parameter index {index} out of range ({} parameters)",
                self.params.len()
            ))
        })?;
        let rg = p.requires_grad();
        Ok(self.push(None, Op::Param(index), rg))
    }

    pub fn conv1d_same(&mut self, input: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
        let out = ops::conv1d_same(self.value(input), self.value(kernels), self.value(bias))?;
        let rg = self.rg(&[input, kernels, bias]);
        Ok(self.push(Some(out), Op::Conv1d { input, kernels, bias }, rg))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let out = ops::relu(self.value(input));
        let rg = self.rg(&[input]);
        self.push(Some(out), Op::Relu { input }, rg)
    }

    pub fn maxpool1d(&mut self, input: NodeId, pool_size: usize) -> Result<NodeId> {
        let (out, argmax) = ops::maxpool1d_with_argmax(self.value(input), pool_size)?;
        let rg = self.rg(&[input]);
        Ok(self.push(Some(out), Op::MaxPool { input, argmax }, rg))
    }

    pub fn dense(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        activation: Activation,
    ) -> Result<NodeId> {
        let out = ops::dense(self.value(input), self.value(weight), self.value(bias), activation)?;
        let rg = self.rg(&[input, weight, bias]);
        Ok(self.push(Some(out), Op::Dense { input, weight, bias, activation }, rg))
    }

    pub fn lstm(
        &mut self,
        seq: NodeId,
        w: NodeId,
        u: NodeId,
        b: NodeId,
        return_sequence: bool,
    ) -> Result<NodeId> {
        let (out, cache) = ops::lstm_forward_cached(
            self.value(seq),
            self.value(w),
            self.value(u),
            self.value(b),
            return_sequence,
        )?;
        let rg = self.rg(&[seq, w, u, b]);
        let op = Op::Lstm {
            seq,
            w,
            u,
            b,
            return_sequence,
            cache: Box::new(cache),
        };
        Ok(self.push(Some(out), op, rg))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::concat(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Some(out), Op::Concat { a, b }, rg))
    }

    /// Gathers one-element nodes into a vector `[items.len()]`.
    pub fn stack_scalars(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let mut data = Vec::with_capacity(items.len());
        for &id in items {
            data.push(self.value(id).item()?);
        }
        let rg = self.rg(items);
        Ok(self.push(Some(Tensor::vector(data)), Op::Stack { items: items.to_vec() }, rg))
    }

    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let out = ops::mse_loss(self.value(pred), self.value(target))?;
        let rg = self.rg(&[pred, target]);
        Ok(self.push(Some(out), Op::Mse { pred, target }, rg))
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let s = self.value(input).data().iter().sum();
        let rg = self.rg(&[input]);
        self.push(Some(Tensor::scalar(s)), Op::Sum { input }, rg)
    }

    /// Which side of every non-differentiable point the recorded forward pass
    /// took: the positive mask of each ReLU (including dense ReLU) and the
    /// winning index of each pooling window, in tape order.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { .. }
                | Op::Dense {
                    activation: Activation::Relu,
                    ..
                } => {
                    let v = node.value.as_ref().expect("activation value");
                    out.extend(v.data().iter().map(|&y| usize::from(y > 0.0)));
                }
                Op::MaxPool { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    /// Backpropagates from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let v = self.value(loss);
        if v.len() != 1 {
            return Err(SinetError::Rank(format!(
                "backward needs a scalar loss, got shape {:?}",
                v.shape()
            )));
        }
        self.backward_seeded(loss, &[1.0])
    }

    /// Backpropagates an arbitrary upstream gradient `seed` (same length as `root`).
    pub fn backward_seeded(&self, root: NodeId, seed: &[f64]) -> Result<Gradients> {
        if seed.len() != self.value(root).len() {
            return Err(SinetError::Dimension(format!(
                "seed of length {} for node of shape {:?}",
                seed.len(),
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(seed.to_vec());

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut param_grads: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];
        for (node, g) in self.nodes.iter().zip(&grads) {
            if let (Op::Param(i), Some(g)) = (&node.op, g) {
                add_into(&mut param_grads[*i], g);
            }
        }
        Ok(Gradients {
            nodes: grads,
            params: param_grads,
        })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Conv1d { input, kernels, bias } => {
                let (dx, dk, db) = ops::conv1d_same_backward(
                    self.value(*input),
                    self.value(*kernels),
                    g,
                    self.wants(*input),
                );
                if let Some(dx) = dx {
                    add_into(&mut grads[input.0], &dx);
                }
                self.add_if(*kernels, &dk, grads);
                self.add_if(*bias, &db, grads);
            }
            Op::Relu { input } => {
                let out = node.value.as_ref().expect("relu value");
                let d: Vec<f64> = g
                    .iter()
                    .zip(out.data())
                    .map(|(g, &y)| if y > 0.0 { *g } else { 0.0 })
                    .collect();
                self.add_if(*input, &d, grads);
            }
            Op::MaxPool { input, argmax } => {
                if self.wants(*input) {
                    let mut d = vec![0.0; self.value(*input).len()];
                    for (&src, gv) in argmax.iter().zip(g) {
                        d[src] += gv;
                    }
                    add_into(&mut grads[input.0], &d);
                }
            }
            Op::Dense { input, weight, bias, activation } => {
                let (dx, dw, db) = ops::dense_backward(
                    self.value(*input),
                    self.value(*weight),
                    node.value.as_ref().expect("dense value"),
                    *activation,
                    g,
                    self.wants(*input),
                );
                if let Some(dx) = dx {
                    add_into(&mut grads[input.0], &dx);
                }
                self.add_if(*weight, &dw, grads);
                self.add_if(*bias, &db, grads);
            }
            Op::Lstm { seq, w, u, b, return_sequence, cache } => {
                let lg = ops::lstm_backward(
                    self.value(*seq),
                    self.value(*w),
                    self.value(*u),
                    cache,
                    *return_sequence,
                    g,
                    self.wants(*seq),
                );
                if let Some(ds) = lg.d_seq {
                    add_into(&mut grads[seq.0], &ds);
                }
                self.add_if(*w, &lg.d_w, grads);
                self.add_if(*u, &lg.d_u, grads);
                self.add_if(*b, &lg.d_b, grads);
            }
            Op::Concat { a, b } => {
                let n = self.value(*a).len();
                self.add_if(*a, &g[..n], grads);
                self.add_if(*b, &g[n..], grads);
            }
            Op::Stack { items } => {
                for (id, gv) in items.iter().zip(g) {
                    self.add_if(*id, &[*gv], grads);
                }
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred).data();
                let t = self.value(*target).data();
                let scale = 2.0 * g[0] / p.len() as f64;
                let dp: Vec<f64> = p.iter().zip(t).map(|(p, t)| scale * (p - t)).collect();
                if self.wants(*target) {
                    let dt: Vec<f64> = dp.iter().map(|v| -v).collect();
                    add_into(&mut grads[target.0], &dt);
                }
                self.add_if(*pred, &dp, grads);
            }
            Op::Sum { input } => {
                let n = self.value(*input).len();
                self.add_if(*input, &vec![g[0]; n], grads);
            }
        }
    }

    fn add_if(&self, id: NodeId, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        if self.wants(id) {
            add_into(&mut grads[id.0], g);
        }
    }
}

fn add_into(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a recorded node, if it was reached.
    pub fn wrt(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes.get(id.0)?.as_deref()
    }

    /// Gradient with respect to parameter `index` (summed over all its uses).
    pub fn param(&self, index: usize) -> Option<&[f64]> {
        self.params.get(index)?.as_deref()
    }

    /// Dense per-parameter gradients; unreached parameters get zeros.
    pub fn into_param_grads(self, params: &[Tensor]) -> Vec<Vec<f64>> {
        self.params
            .into_iter()
            .zip(params)
            .map(|(g, p)| g.unwrap_or_else(|| vec![0.0; p.len()]))
            .collect()
    }

    /// Adds parameter gradients into dense per-parameter accumulators.
    pub fn add_params_to(&self, acc: &mut [Vec<f64>]) {
        for (a, g) in acc.iter_mut().zip(&self.params) {
            if let Some(g) = g {
                a.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }

    /// Adds parameter gradients into each `requires_grad` tensor's `grad` buffer.
    /// Repeated calls accumulate; call [`Tensor::zero_grad`] to reset.
    pub fn accumulate_into(&self, params: &mut [Tensor]) {
        for (p, g) in params.iter_mut().zip(&self.params) {
            if let (true, Some(g)) = (p.requires_grad(), g) {
                p.accumulate_grad(g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_unit_gradient() {
        let mut tape = Tape::empty();
        let x = tape.input(Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap().with_requires_grad(true));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::empty();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]).with_requires_grad(true));
        assert!(matches!(tape.backward(x), Err(SinetError::Rank(_))));
    }

    #[test]
    fn concat_gradient_splits_by_position() {
        let mut tape = Tape::empty();
        let a = tape.input(Tensor::vector(vec![1.0, 2.0]).with_requires_grad(true));
        let b = tape.input(Tensor::vector(vec![3.0]).with_requires_grad(true));
        let c = tape.concat(a, b).unwrap();
        let s = tape.sum(c);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(a).unwrap(), &[1.0, 1.0]);
        assert_eq!(g.wrt(b).unwrap(), &[1.0]);
    }

    #[test]
    fn no_grad_leaves_are_skipped() {
        let mut tape = Tape::empty();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.input(Tensor::vector(vec![0.0, 0.0]).with_requires_grad(true));
        let l = tape.mse_loss(x, y).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(g.wrt(x).is_none());
        assert_eq!(g.wrt(y).unwrap(), &[-1.0, -2.0]);
    }

    #[test]
    fn param_grads_accumulate_across_calls() {
        let mut params = vec![Tensor::vector(vec![1.0, -1.0]).with_requires_grad(true)];
        for _ in 0..2 {
            let grads = {
                let mut tape = Tape::new(&params);
                let p = tape.param(0).unwrap();
                let s = tape.sum(p);
                tape.backward(s).unwrap()
            };
            grads.accumulate_into(&mut params);
        }
        assert_eq!(params[0].grad().unwrap(), &[2.0, 2.0]);
    }
}
