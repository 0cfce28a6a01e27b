//! Per-call tape: each op output owns a node pointing at its parent nodes and
//! a closure that scatters the output gradient back into them.

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

pub(crate) struct GradNode {
    pub(crate) parents: Vec<Rc<GradNode>>,
    pub(crate) grad: RefCell<Vec<f64>>,
    /// Called with this node's gradient; accumulates into the captured parents.
    /// None for leaves.
    backward: Option<Box<dyn Fn(&[f64])>>,
}

impl GradNode {
    pub(crate) fn leaf(numel: usize) -> Rc<GradNode> {
        Rc::new(GradNode {
            parents: Vec::new(),
            grad: RefCell::new(vec![0.0; numel]),
            backward: None,
        })
    }

    pub(crate) fn op(
        numel: usize,
        parents: Vec<Rc<GradNode>>,
        backward: impl Fn(&[f64]) + 'static,
    ) -> Rc<GradNode> {
        Rc::new(GradNode {
            parents,
            grad: RefCell::new(vec![0.0; numel]),
            backward: Some(Box::new(backward)),
        })
    }

    pub(crate) fn accumulate(&self, delta: &[f64]) {
        let mut g = self.grad.borrow_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }
}

/// Reverse-topological traversal from the scalar output node.
pub(crate) fn run_backward(output: &Rc<GradNode>) {
    let mut order: Vec<Rc<GradNode>> = Vec::new();
    let mut visited: HashSet<*const GradNode> = HashSet::new();
    // Iterative post-order DFS; tapes for the whole encoder get deep.
    let mut stack: Vec<(Rc<GradNode>, usize)> = vec![(Rc::clone(output), 0)];
    visited.insert(Rc::as_ptr(output));
    while let Some((node, child)) = stack.pop() {
        if child < node.parents.len() {
            let parent = Rc::clone(&node.parents[child]);
            stack.push((node, child + 1));
            if visited.insert(Rc::as_ptr(&parent)) {
                stack.push((parent, 0));
            }
        } else {
            order.push(node);
        }
    }
    output.grad.borrow_mut()[0] = 1.0;
    for node in order.iter().rev() {
        if let Some(backward) = &node.backward {
            let grad = node.grad.borrow().clone();
            backward(&grad);
        }
    }
}
