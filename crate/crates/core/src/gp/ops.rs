//! Tree generation and variation operators.

use rand::Rng;

use super::{GpConfig, Individual};
use crate::expr::{prefix_depth, subtree_end, ExprTree, Node, OpKind};

/// Ephemeral random constants are drawn from this interval.
pub const CONST_RANGE: (f64, f64) = (-1.0, 1.0);

/// Attempts made after the first before crossover or subtree mutation gives
/// up on a depth-overflowing child and copies the parent.
pub const DEPTH_RETRIES: usize = 8;

/// Maximum depth of the random subtree grafted by subtree mutation.
pub const MUTATION_SUBTREE_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    /// Every branch reaches exactly the target depth.
    Full,
    /// Branches stop at random between the minimum and the target depth.
    Grow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationMode {
    Subtree,
    Point,
}

fn random_terminal<R: Rng + ?Sized>(rng: &mut R, input_dim: usize) -> Node {
    // One slot per variable plus one for a fresh constant.
    let pick = rng.random_range(0..=input_dim);
    if pick < input_dim {
        Node::Var(pick)
    } else {
        Node::Const(rng.random_range(CONST_RANGE.0..=CONST_RANGE.1))
    }
}

fn random_op<R: Rng + ?Sized>(rng: &mut R) -> OpKind {
    OpKind::ALL[rng.random_range(0..OpKind::ALL.len())]
}

/// Appends a random tree in prefix order. Nodes above `min_depth` are always
/// operators and nodes at `max_depth` always terminals, so the result has
/// depth in `[min_depth, max_depth]`.
pub fn generate_into<R: Rng + ?Sized>(
    rng: &mut R,
    method: InitMethod,
    min_depth: usize,
    max_depth: usize,
    input_dim: usize,
    out: &mut Vec<Node>,
) {
    fn go<R: Rng + ?Sized>(
        rng: &mut R,
        method: InitMethod,
        depth: usize,
        min_depth: usize,
        max_depth: usize,
        input_dim: usize,
        out: &mut Vec<Node>,
    ) {
        let is_op = if depth >= max_depth {
            false
        } else if depth < min_depth || method == InitMethod::Full {
            true
        } else {
            let n_ops = OpKind::ALL.len();
            rng.random_range(0..n_ops + input_dim + 1) < n_ops
        };
        if is_op {
            let k = random_op(rng);
            out.push(Node::Op(k));
            for _ in 0..k.arity() {
                go(rng, method, depth + 1, min_depth, max_depth, input_dim, out);
            }
        } else {
            out.push(random_terminal(rng, input_dim));
        }
    }
    go(rng, method, 0, min_depth, max_depth, input_dim, out);
}

pub fn generate<R: Rng + ?Sized>(
    rng: &mut R,
    method: InitMethod,
    min_depth: usize,
    max_depth: usize,
    input_dim: usize,
) -> ExprTree {
    let mut nodes = Vec::new();
    generate_into(rng, method, min_depth, max_depth, input_dim, &mut nodes);
    ExprTree::from_prefix_unchecked(nodes, input_dim)
}

/// Ramped half-and-half initialisation. Slot `i` uses `Full` when `i` is
/// even and `Grow` otherwise, with target depths cycling through
/// `init_depth_range`. Each slot draws from its own seeded stream.
pub fn init_population(cfg: &GpConfig, input_dim: usize) -> Vec<ExprTree> {
    let (lo, hi) = cfg.init_depth_range;
    let ramp = hi - lo + 1;
    (0..cfg.population_size)
        .map(|i| {
            let mut rng = crate::rng::stream(cfg.seed, &[0, i as u64]);
            let method = if i % 2 == 0 {
                InitMethod::Full
            } else {
                InitMethod::Grow
            };
            let target = lo + (i / 2) % ramp;
            generate(&mut rng, method, lo, target, input_dim)
        })
        .collect()
}

fn better(a: &Individual, b: &Individual) -> bool {
    (a.penalized_fitness, a.tree.node_count()) < (b.penalized_fitness, b.tree.node_count())
}

/// Index of the winner of a `k`-way tournament drawn with replacement.
/// Lower penalized fitness wins, then fewer nodes, then the earlier draw.
pub fn tournament_index<R: Rng + ?Sized>(pop: &[Individual], k: usize, rng: &mut R) -> usize {
    assert!(!pop.is_empty(), "tournament over an empty population");
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..k.max(1) {
        let c = rng.random_range(0..pop.len());
        if better(&pop[c], &pop[best]) {
            best = c;
        }
    }
    best
}

pub fn tournament_select<'a, R: Rng + ?Sized>(
    pop: &'a [Individual],
    k: usize,
    rng: &mut R,
) -> &'a Individual {
    &pop[tournament_index(pop, k, rng)]
}

fn splice(host: &[Node], start: usize, end: usize, graft: &[Node]) -> Vec<Node> {
    let mut out = Vec::with_capacity(host.len() - (end - start) + graft.len());
    out.extend_from_slice(&host[..start]);
    out.extend_from_slice(graft);
    out.extend_from_slice(&host[end..]);
    out
}

/// Replaces a uniformly chosen subtree of `a` with a uniformly chosen subtree
/// of `b`. Falls back to a copy of `a` if every attempt exceeds `max_depth`.
pub fn crossover<R: Rng + ?Sized>(
    a: &ExprTree,
    b: &ExprTree,
    max_depth: usize,
    rng: &mut R,
) -> ExprTree {
    let (an, bn) = (a.nodes(), b.nodes());
    for _ in 0..=DEPTH_RETRIES {
        let s = rng.random_range(0..an.len());
        let e = subtree_end(an, s);
        let s2 = rng.random_range(0..bn.len());
        let e2 = subtree_end(bn, s2);
        let child = splice(an, s, e, &bn[s2..e2]);
        if prefix_depth(&child) <= max_depth {
            return ExprTree::from_prefix_unchecked(child, a.input_dim());
        }
    }
    a.clone()
}

pub fn mutate<R: Rng + ?Sized>(
    t: &ExprTree,
    mode: MutationMode,
    max_depth: usize,
    rng: &mut R,
) -> ExprTree {
    let nodes = t.nodes();
    let dim = t.input_dim();
    match mode {
        MutationMode::Subtree => {
            for _ in 0..=DEPTH_RETRIES {
                let s = rng.random_range(0..nodes.len());
                let e = subtree_end(nodes, s);
                let mut graft = Vec::new();
                generate_into(
                    rng,
                    InitMethod::Grow,
                    0,
                    MUTATION_SUBTREE_DEPTH,
                    dim,
                    &mut graft,
                );
                let child = splice(nodes, s, e, &graft);
                if prefix_depth(&child) <= max_depth {
                    return ExprTree::from_prefix_unchecked(child, dim);
                }
            }
            t.clone()
        }
        MutationMode::Point => {
            let mut child = nodes.to_vec();
            let i = rng.random_range(0..child.len());
            child[i] = match child[i] {
                Node::Op(k) => {
                    let same: &[OpKind] = if k.arity() == 2 {
                        &OpKind::BINARY
                    } else {
                        &OpKind::UNARY
                    };
                    let others: Vec<OpKind> = same.iter().copied().filter(|&o| o != k).collect();
                    Node::Op(others[rng.random_range(0..others.len())])
                }
                _ => random_terminal(rng, dim),
            };
            ExprTree::from_prefix_unchecked(child, dim)
        }
    }
}
