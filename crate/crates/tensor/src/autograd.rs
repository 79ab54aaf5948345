//! Graph walking and gradient accumulation.
//!
//! The graph is implicit: each op output holds handles to its parents and a
//! closure mapping its output gradient to per-parent gradients. `backward`
//! walks that structure once, leaves the gradient of every reachable
//! grad-requiring node in its slot, and refuses to run twice over the same
//! nodes without an intervening `clear_grad`.

use std::cell::Cell;
use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn next_node_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Runs `f` with graph recording disabled. Ops executed inside produce
/// detached constants, so inference passes allocate no backward state.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|c| c.replace(false)));
    f()
}

/// Reverse-mode sweep from a scalar loss.
///
/// Gradients accumulate into every grad-requiring node reachable from
/// `loss`, intermediates included. If any such node already holds a
/// gradient the call fails: retaining the graph across sweeps is not
/// supported, callers must `clear_grad` (or rebuild the graph) between
/// steps so stale gradients cannot silently mix into fresh ones.
pub fn backward<T: Scalar>(loss: &Tensor<T>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarLoss {
            numel: loss.numel(),
            shape: loss.shape().to_vec(),
        });
    }
    if !loss.is_requires_grad() {
        return Err(TensorError::InvalidArgument {
            op: "backward",
            msg: "loss is detached from any grad-requiring input".to_string(),
        });
    }

    // Iterative postorder DFS restricted to grad-requiring nodes. Postorder
    // lists parents before users, so the reverse is a valid order for
    // pushing gradients from the loss down to the leaves.
    let mut order: Vec<Tensor<T>> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Tensor<T>, usize)> = vec![(loss.clone(), 0)];
    seen.insert(loss.id());
    while let Some((node, next_parent)) = stack.pop() {
        let parents = node.parents();
        if next_parent < parents.len() {
            let parent = parents[next_parent].clone();
            stack.push((node, next_parent + 1));
            if parent.is_requires_grad() && seen.insert(parent.id()) {
                stack.push((parent, 0));
            }
        } else {
            order.push(node);
        }
    }

    for node in &order {
        if node.has_grad() {
            return Err(TensorError::GradAlreadyPresent { id: node.id() });
        }
    }

    loss.set_grad(vec![T::one()]);
    for node in order.iter().rev() {
        let Some(back) = node.backward_fn() else {
            continue;
        };
        let parent_grads = {
            let slot = node.grad_slot().borrow();
            let gout = slot
                .as_ref()
                .expect("node reachable from the loss received no gradient");
            back(gout)
        };
        let parents = node.parents();
        debug_assert_eq!(parent_grads.len(), parents.len());
        for (parent, grad) in parents.iter().zip(parent_grads) {
            let Some(grad) = grad else { continue };
            if !parent.is_requires_grad() {
                continue;
            }
            debug_assert_eq!(grad.len(), parent.numel());
            let mut slot = parent.grad_slot().borrow_mut();
            match slot.as_mut() {
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grad) {
                        *a += *g;
                    }
                }
                None => *slot = Some(grad),
            }
        }
    }
    Ok(())
}
