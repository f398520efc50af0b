use std::collections::HashMap;

use super::RawInteraction;

/// Keeps the maximal subset of interactions in which every user and every item has
/// at least `k` interactions, peeling until a fixpoint. Input order is preserved.
pub fn kcore_filter(interactions: Vec<RawInteraction>, k: usize) -> Vec<RawInteraction> {
    assert!(k >= 1, "k-core requires k >= 1");
    if k == 1 {
        return interactions;
    }
    let mut user_ix: HashMap<&str, usize> = HashMap::new();
    let mut item_ix: HashMap<&str, usize> = HashMap::new();
    let edges: Vec<(usize, usize)> = interactions
        .iter()
        .map(|r| {
            let n = user_ix.len();
            let u = *user_ix.entry(r.user_id.as_str()).or_insert(n);
            let n = item_ix.len();
            let i = *item_ix.entry(r.item_id.as_str()).or_insert(n);
            (u, i)
        })
        .collect();
    let mut user_deg = vec![0usize; user_ix.len()];
    let mut item_deg = vec![0usize; item_ix.len()];
    for &(u, i) in &edges {
        user_deg[u] += 1;
        item_deg[i] += 1;
    }
    let mut alive = vec![true; edges.len()];
    loop {
        let mut changed = false;
        for (e, &(u, i)) in edges.iter().enumerate() {
            if alive[e] && (user_deg[u] < k || item_deg[i] < k) {
                alive[e] = false;
                user_deg[u] -= 1;
                item_deg[i] -= 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    interactions
        .into_iter()
        .zip(alive)
        .filter_map(|(r, keep)| keep.then_some(r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn row(u: &str, i: &str) -> RawInteraction {
        RawInteraction {
            user_id: u.into(),
            item_id: i.into(),
            rating: 5,
            timestamp: 0,
        }
    }

    fn degrees_ok(rows: &[RawInteraction], k: usize) -> bool {
        let mut ud: HashMap<&str, usize> = HashMap::new();
        let mut id: HashMap<&str, usize> = HashMap::new();
        for r in rows {
            *ud.entry(&r.user_id).or_default() += 1;
            *id.entry(&r.item_id).or_default() += 1;
        }
        ud.values().chain(id.values()).all(|&d| d >= k)
    }

    /// Brute force: the k-core is the largest edge subset satisfying the degree
    /// constraint (valid subsets are closed under union, so it is unique).
    fn brute_force(rows: &[RawInteraction], k: usize) -> Vec<usize> {
        let n = rows.len();
        let mut best: Vec<usize> = Vec::new();
        for mask in 0u32..(1 << n) {
            let chosen: Vec<usize> = (0..n).filter(|b| mask & (1 << b) != 0).collect();
            let subset: Vec<RawInteraction> = chosen.iter().map(|&b| rows[b].clone()).collect();
            if chosen.len() > best.len() && degrees_ok(&subset, k) {
                best = chosen;
            }
        }
        best
    }

    #[test]
    fn k1_is_identity() {
        let rows = vec![row("a", "x"), row("b", "y")];
        assert_eq!(kcore_filter(rows.clone(), 1), rows);
    }

    #[test]
    fn peeling_cascades() {
        // a has one interaction; removing it drops x to degree 1, which removes b-x too.
        let rows = vec![
            row("a", "x"),
            row("b", "x"),
            row("b", "y"),
            row("c", "y"),
            row("c", "z"),
            row("b", "z"),
        ];
        let out = kcore_filter(rows, 2);
        assert!(out.iter().all(|r| r.user_id != "a" && r.item_id != "x"));
        assert!(degrees_ok(&out, 2));
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn six_node_toy_graph_matches_brute_force() {
        // users a,b,c; items x,y,z
        let rows = vec![
            row("a", "x"),
            row("a", "y"),
            row("b", "x"),
            row("b", "y"),
            row("b", "z"),
            row("c", "z"),
            row("c", "y"),
            row("a", "z"),
            row("c", "x"),
        ];
        for k in 1..=4 {
            let expected: Vec<RawInteraction> = brute_force(&rows, k).into_iter().map(|b| rows[b].clone()).collect();
            assert_eq!(kcore_filter(rows.clone(), k), expected, "k={k}");
        }
        let sparse = vec![
            row("a", "x"),
            row("a", "y"),
            row("b", "x"),
            row("b", "y"),
            row("c", "y"),
            row("c", "z"),
        ];
        for k in 1..=3 {
            let expected: Vec<RawInteraction> =
                brute_force(&sparse, k).into_iter().map(|b| sparse[b].clone()).collect();
            assert_eq!(kcore_filter(sparse.clone(), k), expected, "k={k}");
        }
    }
}
