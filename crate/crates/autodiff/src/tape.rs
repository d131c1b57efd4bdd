//! The computation tape.
//!
//! Every value produced during a forward pass lives on a [`Tape`] as a node.
//! Nodes that depend on a trainable leaf also record the [`Op`] that produced
//! them, so [`Tape::backward`] can walk the tape in reverse and accumulate
//! vector-Jacobian products into the leaves.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use ndarray::Array2;

use crate::error::{Result, TensorError};

/// Dense row-major matrix of doubles. Scalars are `1 x 1`.
pub type Matrix = Array2<f64>;

/// Inputs handed to [`Op::backward`].
pub struct BackwardContext<'a> {
    pub inputs: &'a [&'a Matrix],
    pub output: &'a Matrix,
    /// Gradient of the final scalar with respect to `output`.
    pub grad: &'a Matrix,
    /// Which inputs actually need a gradient. Entries for `false` may be `None`.
    pub needs_grad: &'a [bool],
}

/// A differentiable primitive.
///
/// `forward` computes the output from input values. `backward` returns one
/// entry per input holding the gradient with respect to that input (same
/// shape as the input), or `None` when `needs_grad` is false for it.
pub trait Op {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Matrix]) -> Result<Matrix>;

    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Matrix>>>;
}

enum Origin {
    Leaf,
    Constant,
    Computed { op: Box<dyn Op>, inputs: Vec<usize> },
}

struct Node {
    value: Rc<Matrix>,
    requires_grad: bool,
    origin: Origin,
}

/// Records forward computations for one backward pass.
///
/// A tape is confined to one thread. After [`Tape::backward`] the tape is
/// cleared and every [`Var`] created before becomes stale.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    generation: Cell<u64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("generation", &self.generation.get())
            .finish()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
    generation: u64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), generation: Cell::new(0) }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, requires_grad: bool, origin: Origin) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), requires_grad, origin });
        Var { tape: self, id: nodes.len() - 1, generation: self.generation.get() }
    }

    /// Trainable leaf; its gradient is reported by [`Tape::backward`].
    pub fn param(&self, value: Matrix) -> Var<'_> {
        self.push(value, true, Origin::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, false, Origin::Constant)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Matrix::from_elem((1, 1), value))
    }

    /// Runs `op` forward on `inputs`, recording it when any input needs a gradient.
    pub fn apply<O: Op + 'static>(&self, op: O, inputs: &[Var<'_>]) -> Result<Var<'_>> {
        let (values, requires_grad) = {
            let nodes = self.nodes.borrow();
            let mut values = Vec::with_capacity(inputs.len());
            let mut requires_grad = false;
            for v in inputs {
                self.check(v)?;
                let node = &nodes[v.id];
                requires_grad |= node.requires_grad;
                values.push(Rc::clone(&node.value));
            }
            (values, requires_grad)
        };
        let refs: Vec<&Matrix> = values.iter().map(|v| v.as_ref()).collect();
        let out = op.forward(&refs)?;
        let origin = if requires_grad {
            Origin::Computed { op: Box::new(op), inputs: inputs.iter().map(|v| v.id).collect() }
        } else {
            Origin::Constant
        };
        Ok(self.push(out, requires_grad, origin))
    }

    fn check(&self, v: &Var<'_>) -> Result<()> {
        if !std::ptr::eq(self, v.tape) || v.generation != self.generation.get() {
            return Err(TensorError::StaleVar);
        }
        Ok(())
    }

    pub(crate) fn value_of(&self, v: &Var<'_>) -> Result<Rc<Matrix>> {
        self.check(v)?;
        Ok(Rc::clone(&self.nodes.borrow()[v.id].value))
    }

    /// Propagates gradients of the scalar `output` back to every trainable leaf,
    /// then clears the tape.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        self.check(&output)?;
        let generation = self.generation.get();
        let result = {
            let nodes = self.nodes.borrow();
            let root = &nodes[output.id];
            if root.value.dim() != (1, 1) {
                return Err(TensorError::Contract(format!(
                    "backward needs a scalar output, got shape {:?}",
                    root.value.dim()
                )));
            }
            let mut grads: Vec<Option<Matrix>> = vec![None; output.id + 1];
            let mut leaf_grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
            if root.requires_grad {
                grads[output.id] = Some(Matrix::ones((1, 1)));
            }
            for id in (0..=output.id).rev() {
                let Some(grad) = grads[id].take() else { continue };
                let node = &nodes[id];
                match &node.origin {
                    Origin::Leaf => leaf_grads[id] = Some(grad),
                    Origin::Constant => {}
                    Origin::Computed { op, inputs } => {
                        let input_values: Vec<&Matrix> =
                            inputs.iter().map(|&i| nodes[i].value.as_ref()).collect();
                        let needs: Vec<bool> = inputs.iter().map(|&i| nodes[i].requires_grad).collect();
                        let ctx = BackwardContext {
                            inputs: &input_values,
                            output: &node.value,
                            grad: &grad,
                            needs_grad: &needs,
                        };
                        let input_grads = op.backward(&ctx)?;
                        if input_grads.len() != inputs.len() {
                            return Err(TensorError::Contract(format!(
                                "`{}` returned {} gradients for {} inputs",
                                op.name(),
                                input_grads.len(),
                                inputs.len()
                            )));
                        }
                        for ((&input, g), need) in inputs.iter().zip(input_grads).zip(&needs) {
                            let (Some(g), true) = (g, *need) else { continue };
                            if g.dim() != nodes[input].value.dim() {
                                return Err(TensorError::Contract(format!(
                                    "`{}` produced gradient of shape {:?} for input of shape {:?}",
                                    op.name(),
                                    g.dim(),
                                    nodes[input].value.dim()
                                )));
                            }
                            match &mut grads[input] {
                                Some(acc) => *acc += &g,
                                slot @ None => *slot = Some(g),
                            }
                        }
                    }
                }
            }
            Gradients { generation, grads: leaf_grads }
        };
        self.nodes.borrow_mut().clear();
        self.generation.set(generation + 1);
        Ok(result)
    }
}

/// Leaf gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    generation: u64,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for a trainable leaf created on the tape before `backward`.
    /// `None` when the leaf did not influence the output.
    pub fn get(&self, leaf: &Var<'_>) -> Option<&Matrix> {
        if leaf.generation != self.generation {
            return None;
        }
        self.grads.get(leaf.id).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but moves the gradient out.
    pub fn take(&mut self, leaf: &Var<'_>) -> Option<Matrix> {
        if leaf.generation != self.generation {
            return None;
        }
        self.grads.get_mut(leaf.id).and_then(Option::take)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Shared handle to the forward value.
    pub fn value(&self) -> Result<Rc<Matrix>> {
        self.tape.value_of(self)
    }

    pub fn shape(&self) -> Result<(usize, usize)> {
        Ok(self.value()?.dim())
    }

    /// Value of a `1 x 1` variable.
    pub fn scalar_value(&self) -> Result<f64> {
        let v = self.value()?;
        if v.dim() != (1, 1) {
            return Err(TensorError::Contract(format!("expected a scalar, got {:?}", v.dim())));
        }
        Ok(v[[0, 0]])
    }
}
