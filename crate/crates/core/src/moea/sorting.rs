use crate::eval::{dominates, EvalPoint};
use crate::scalar::Scalar;

/// Fast non-dominated sort. Front 0 holds the non-dominated indices; every
/// index lands in exactly one front.
pub fn fast_nondominated_sort<T: Scalar>(points: &[EvalPoint<T>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j]) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance within one front. Boundary points of each objective are
/// infinite; interior points sum their normalized neighbour gaps.
pub fn crowding_distance<T: Scalar>(front: &[EvalPoint<T>]) -> Vec<f64> {
    let n = front.len();
    let mut distance = vec![0.0f64; n];
    if n == 0 {
        return distance;
    }
    let objectives: [fn(&EvalPoint<T>) -> f64; 2] =
        [|p| p.accuracy.as_f64(), |p| p.mflops_per_image.as_f64()];
    for objective in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objective(&front[a]).total_cmp(&objective(&front[b])));
        let lo = objective(&front[order[0]]);
        let hi = objective(&front[order[n - 1]]);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            let gap = objective(&front[w[2]]) - objective(&front[w[0]]);
            distance[w[1]] += gap / range;
        }
    }
    distance
}
