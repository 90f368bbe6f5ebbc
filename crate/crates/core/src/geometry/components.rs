/// Connected components of an undirected graph.
///
/// Component ids are dense from 0 and assigned in order of each component's
/// smallest vertex index.
pub fn connected_components(vertex_count: usize, edges: &[(u32, u32)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..vertex_count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let ra = find(&mut parent, a as usize);
        let rb = find(&mut parent, b as usize);
        if ra != rb {
            // Keep the smaller index as root.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    let mut label = vec![usize::MAX; vertex_count];
    let mut ids = vec![0usize; vertex_count];
    let mut next = 0;
    for v in 0..vertex_count {
        let r = find(&mut parent, v);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        ids[v] = label[r];
    }
    ids
}

pub fn component_count(ids: &[usize]) -> usize {
    ids.iter().max().map_or(0, |m| m + 1)
}
