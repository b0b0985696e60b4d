use std::collections::{HashMap, HashSet};

use super::{Float, Tensor};
use crate::error::{Error, Result};

impl<F: Float> Tensor<F> {
    /// Back-propagates from this scalar into every reachable leaf created with
    /// [`Tensor::param`]. Gradients add onto whatever the leaves already hold.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut grads: HashMap<usize, Vec<F>> = HashMap::new();
        grads.insert(self.node_id(), vec![F::one()]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.node_id()) else {
                continue;
            };
            match t.grad_fn() {
                Some(gf) => {
                    let needs: Vec<bool> = gf.parents.iter().map(|p| p.requires_grad()).collect();
                    let parent_grads = (gf.backward)(&g, &needs);
                    debug_assert_eq!(parent_grads.len(), gf.parents.len(), "{}", gf.name);
                    for ((p, pg), need) in gf.parents.iter().zip(parent_grads).zip(needs) {
                        let (Some(pg), true) = (pg, need) else { continue };
                        debug_assert_eq!(pg.len(), p.numel(), "{} grad size", gf.name);
                        match grads.get_mut(&p.node_id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                            None => {
                                grads.insert(p.node_id(), pg);
                            }
                        }
                    }
                }
                None => t.accumulate_grad(&g),
            }
        }
        Ok(())
    }

    /// Post-order over the nodes that require gradients (parents first).
    fn topo_order(&self) -> Vec<Tensor<F>> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack: Vec<(Tensor<F>, usize)> = vec![(self.clone(), 0)];
        seen.insert(self.node_id());
        while let Some((t, next)) = stack.pop() {
            let parents = t.grad_fn().map(|g| g.parents.as_slice()).unwrap_or(&[]);
            if next < parents.len() {
                let p = parents[next].clone();
                stack.push((t, next + 1));
                if p.requires_grad() && seen.insert(p.node_id()) {
                    stack.push((p, 0));
                }
            } else {
                order.push(t);
            }
        }
        order
    }
}
