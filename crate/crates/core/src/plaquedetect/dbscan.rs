//! Density-based clustering of 2-D points.

/// Cluster assignment of one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Cluster(usize),
    Noise,
}

/// DBSCAN with Euclidean `eps` and `min_pts` (the point itself included).
///
/// Points are visited in input order and clusters numbered in order of
/// discovery, so the result is deterministic. Neighbour queries use a uniform
/// grid with cell size `eps`.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<Membership> {
    let n = points.len();
    let mut out = vec![Membership::Noise; n];
    if n == 0 {
        return out;
    }
    let cell = eps.max(f64::MIN_POSITIVE);
    let key = |p: (f64, f64)| ((p.0 / cell).floor() as i64, (p.1 / cell).floor() as i64);
    let mut grid: std::collections::HashMap<(i64, i64), Vec<usize>> = std::collections::HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let neighbours = |i: usize| -> Vec<usize> {
        let p = points[i];
        let (kx, ky) = key(p);
        let mut v = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(bucket) = grid.get(&(kx + dx, ky + dy)) {
                    for &j in bucket {
                        let q = points[j];
                        if (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) <= eps2 {
                            v.push(j);
                        }
                    }
                }
            }
        }
        v.sort_unstable();
        v
    };

    let mut visited = vec![false; n];
    let mut next_cluster = 0usize;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbours(i);
        if nb.len() < min_pts {
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        out[i] = Membership::Cluster(c);
        let mut queue: std::collections::VecDeque<usize> = nb.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if out[j] == Membership::Noise {
                out[j] = Membership::Cluster(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nbj = neighbours(j);
            if nbj.len() >= min_pts {
                queue.extend(nbj);
            }
        }
    }
    out
}
