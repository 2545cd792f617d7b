use crate::{Error, Result};

/// Indices of the points not strictly dominated in both coordinates
/// (lower is better), in input order.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Result<Vec<usize>> {
    if points.iter().any(|(t, e)| !t.is_finite() || !e.is_finite()) {
        return Err(Error::InvalidInput("pareto points must be finite".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0));

    let mut keep = vec![false; points.len()];
    // Lowest error among points with strictly smaller time.
    let mut best_before = f64::INFINITY;
    let mut start = 0;
    while start < order.len() {
        let t = points[order[start]].0;
        let end = start + order[start..].iter().take_while(|&&i| points[i].0 == t).count();
        let mut group_best = f64::INFINITY;
        for &i in &order[start..end] {
            let e = points[i].1;
            keep[i] = !(best_before < e);
            group_best = group_best.min(e);
        }
        best_before = best_before.min(group_best);
        start = end;
    }
    Ok((0..points.len()).filter(|&i| keep[i]).collect())
}

/// The non-dominated points themselves.
pub fn pareto_points(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    Ok(pareto_frontier(points)?.into_iter().map(|i| points[i]).collect())
}
