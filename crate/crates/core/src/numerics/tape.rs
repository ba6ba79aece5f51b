use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{Float, ParamId, ParamStore, Tensor};

/// Backward rule of a recorded op: receives the output gradient and a
/// per-parent "needs gradient" mask, returns one optional gradient per parent.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>>>;

struct Node<T> {
    value: Arc<Tensor<T>>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    origin: Option<(u64, ParamId)>,
}

/// Reverse-mode recording of a computation.
///
/// A tape lives for one forward/backward pass. Parameters are bound from
/// their [`ParamStore`] and gradients are routed back via [`Gradients`].
pub struct Tape<T: Float> {
    nodes: RefCell<Vec<Node<T>>>,
    bound: RefCell<HashMap<(u64, ParamId), usize>>,
    grad_enabled: bool,
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T: Float> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Float> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Float> Copy for Var<'_, T> {}

impl<T: Float> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            bound: RefCell::new(HashMap::new()),
            grad_enabled: true,
        }
    }

    /// A tape that records values only; `backward` is unavailable.
    pub fn no_grad() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.constant_arc(Arc::new(value))
    }

    pub fn constant_arc(&self, value: Arc<Tensor<T>>) -> Var<'_, T> {
        self.push(Node {
            value,
            requires_grad: false,
            parents: vec![],
            backward: None,
            origin: None,
        })
    }

    /// Input whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Node {
            value: Arc::new(value),
            requires_grad: self.grad_enabled,
            parents: vec![],
            backward: None,
            origin: None,
        })
    }

    /// Binds a parameter; repeated binds on the same tape share one node.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<'_, T> {
        let key = (store.uid(), id);
        if let Some(&node) = self.bound.borrow().get(&key) {
            return Var {
                tape: self,
                id: node,
            };
        }
        let v = self.push(Node {
            value: store.get(id).value.clone(),
            requires_grad: self.grad_enabled,
            parents: vec![],
            backward: None,
            origin: Some(key),
        });
        self.bound.borrow_mut().insert(key, v.id);
        v
    }

    /// Records the result of an op.
    pub(crate) fn record<F>(&self, value: Tensor<T>, parents: &[Var<'_, T>], backward: F) -> Var<'_, T>
    where
        F: Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + 'static,
    {
        let parent_ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = self.grad_enabled && {
            let nodes = self.nodes.borrow();
            parent_ids.iter().any(|&p| nodes[p].requires_grad)
        };
        self.push(Node {
            value: Arc::new(value),
            requires_grad,
            parents: if requires_grad { parent_ids } else { vec![] },
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            origin: None,
        })
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        if !self.grad_enabled {
            return Err(Error::InvalidArgument(
                "backward on a no-grad tape".into(),
            ));
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut out = Gradients {
            params: Vec::new(),
            leaves: HashMap::new(),
        };
        if !root.requires_grad {
            return Ok(out);
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![T::one()]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            match &node.backward {
                Some(bw) => {
                    let needs: Vec<bool> =
                        node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
                    let pgrads = bw(&g, &needs);
                    debug_assert_eq!(pgrads.len(), node.parents.len());
                    for (&p, pg) in node.parents.iter().zip(pgrads) {
                        let Some(pg) = pg else { continue };
                        if !nodes[p].requires_grad {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), nodes[p].value.numel());
                        match &mut grads[p] {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                            slot @ None => *slot = Some(pg),
                        }
                    }
                }
                None if node.requires_grad => match node.origin {
                    Some(key) => out.params.push((key, g)),
                    None => {
                        out.leaves.insert(id, g);
                    }
                },
                None => {}
            }
        }
        Ok(out)
    }
}

impl<'t, T: Float> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.constant_arc(self.value())
    }

    /// Scalar value of a one-element var.
    pub fn item(&self) -> Result<T> {
        self.value().item()
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    params: Vec<((u64, ParamId), Vec<T>)>,
    leaves: HashMap<usize, Vec<T>>,
}

impl<T: Float> Gradients<T> {
    /// Gradient of a [`Tape::leaf`] input.
    pub fn wrt(&self, var: Var<'_, T>) -> Option<&[T]> {
        self.leaves.get(&var.id).map(Vec::as_slice)
    }

    /// Gradient of one parameter of `store`.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Option<&[T]> {
        self.params
            .iter()
            .find(|((uid, pid), _)| *uid == store.uid() && *pid == id)
            .map(|(_, g)| g.as_slice())
    }

    pub(crate) fn params_of(&self, uid: u64) -> impl Iterator<Item = (ParamId, &[T])> {
        self.params
            .iter()
            .filter(move |((u, _), _)| *u == uid)
            .map(|((_, id), g)| (*id, g.as_slice()))
    }
}
