//! Random covering instances and an exhaustive optimum.

use cidre_core::bitset::VertexSet;
use cidre_core::cost::CostEstimate;
use cidre_core::select::{
    check_feasible, contraction_acyclic, run_selection, ClassOccurrences, CoverProblem, Selection,
    Strategy,
};
use rand::seq::index::sample;
use rand::Rng;

use super::rng;

pub fn baseline() -> CostEstimate {
    CostEstimate {
        t_clk_ns: 1.0,
        area: 100.0,
        met_baseline_timing: true,
    }
}

/// Up to 10 classes and 25 occurrences over a few random DAG blocks.
pub fn instance(seed: u64) -> CoverProblem {
    let mut r = rng(seed);
    let blocks = r.gen_range(1..=3);
    let n = 12;
    let succs: Vec<Vec<Vec<usize>>> = (0..blocks)
        .map(|_| {
            (0..n)
                .map(|u| (u + 1..n).filter(|_| r.gen_bool(0.2)).collect())
                .collect()
        })
        .collect();
    let counts = (0..blocks).map(|_| r.gen_range(1..50)).collect();
    let n_classes = r.gen_range(3..=10);
    let mut budget = 25usize;
    let mut classes = Vec::new();
    for _ in 0..n_classes {
        let size = r.gen_range(2..=4);
        let mut occurrences = Vec::new();
        let want = r.gen_range(1..=4).min(budget);
        let mut tries = 0;
        while occurrences.len() < want && tries < 100 {
            tries += 1;
            let b = r.gen_range(0..blocks);
            let set = VertexSet::from_items(n, sample(&mut r, n, size));
            if contraction_acyclic(&succs[b], &[&set]) {
                occurrences.push((b, set));
            }
        }
        budget -= occurrences.len();
        classes.push(ClassOccurrences { size, occurrences });
        if budget == 0 {
            break;
        }
    }
    CoverProblem {
        succs,
        counts,
        classes,
    }
}

pub fn select(p: &CoverProblem, u_max: usize, strategy: Strategy) -> Selection {
    run_selection(p, 1_000_000, u_max, strategy, baseline(), |_| Ok::<_, ()>(baseline())).unwrap()
}

/// Best total weight of a feasible occurrence set using at most `u_max`
/// classes, by exhaustive search with a remaining-weight bound.
pub fn optimum(p: &CoverProblem, u_max: usize) -> u64 {
    let items: Vec<(usize, usize)> = p
        .classes
        .iter()
        .enumerate()
        .flat_map(|(c, cl)| (0..cl.occurrences.len()).map(move |o| (c, o)))
        .collect();
    let weights: Vec<u64> = items.iter().map(|&(c, o)| p.weight(c, o)).collect();
    let mut suffix = vec![0u64; items.len() + 1];
    for k in (0..items.len()).rev() {
        suffix[k] = suffix[k + 1] + weights[k];
    }
    fn go(
        p: &CoverProblem,
        items: &[(usize, usize)],
        weights: &[u64],
        suffix: &[u64],
        u_max: usize,
        k: usize,
        chosen: &mut Vec<(usize, usize)>,
        value: u64,
        best: &mut u64,
    ) {
        *best = (*best).max(value);
        if k == items.len() || value + suffix[k] <= *best {
            return;
        }
        chosen.push(items[k]);
        let mut classes: Vec<usize> = chosen.iter().map(|x| x.0).collect();
        classes.dedup();
        if classes.len() <= u_max && check_feasible(p, chosen).is_ok() {
            go(p, items, weights, suffix, u_max, k + 1, chosen, value + weights[k], best);
        }
        chosen.pop();
        go(p, items, weights, suffix, u_max, k + 1, chosen, value, best);
    }
    let mut best = 0;
    go(p, &items, &weights, &suffix, u_max, 0, &mut Vec::new(), 0, &mut best);
    best
}

