//! Real-coded variation: simulated binary crossover and bounded polynomial mutation.

use rand::Rng;

use super::genome::Genome;

/// Chance that an individual gene pair is recombined once a pair is crossed.
const SBX_GENE_PROB: f64 = 0.5;
const IDENTICAL_GENES: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variation {
    pub sbx_eta: f64,
    pub crossover_prob: f64,
    pub mutation_eta: f64,
    pub mutation_prob: f64,
}

/// SBX on one gene pair with uniform draw `u`; children straddle the parents'
/// mean symmetrically.
pub fn sbx_pair(y1: f64, y2: f64, eta: f64, u: f64) -> (f64, f64) {
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    let c1 = 0.5 * ((1.0 + beta) * y1 + (1.0 - beta) * y2);
    let c2 = 0.5 * ((1.0 - beta) * y1 + (1.0 + beta) * y2);
    (c1, c2)
}

pub fn sbx_crossover<R: Rng + ?Sized>(
    p1: &Genome,
    p2: &Genome,
    bounds: &[(f64, f64)],
    var: &Variation,
    rng: &mut R,
) -> (Genome, Genome) {
    assert_eq!(p1.genes.len(), p2.genes.len(), "parents differ in length");
    let mut c1 = p1.clone();
    let mut c2 = p2.clone();
    if !rng.random_bool(var.crossover_prob) {
        return (c1, c2);
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        let (y1, y2) = (p1.genes[i], p2.genes[i]);
        if !rng.random_bool(SBX_GENE_PROB) || (y1 - y2).abs() < IDENTICAL_GENES {
            continue;
        }
        let (a, b) = sbx_pair(y1, y2, var.sbx_eta, rng.random::<f64>());
        c1.genes[i] = a.clamp(lo, hi);
        c2.genes[i] = b.clamp(lo, hi);
    }
    (c1, c2)
}

/// Bounded polynomial mutation of a single gene with uniform draw `u`.
pub fn polynomial_gene(y: f64, lo: f64, hi: f64, eta: f64, u: f64) -> f64 {
    let range = hi - lo;
    if range <= 0.0 {
        return y;
    }
    let power = 1.0 / (eta + 1.0);
    let delta_q = if u < 0.5 {
        let delta1 = (y - lo) / range;
        let val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - delta1).powf(eta + 1.0);
        val.powf(power) - 1.0
    } else {
        let delta2 = (hi - y) / range;
        let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - delta2).powf(eta + 1.0);
        1.0 - val.powf(power)
    };
    (y + delta_q * range).clamp(lo, hi)
}

pub fn polynomial_mutation<R: Rng + ?Sized>(
    genome: &Genome,
    bounds: &[(f64, f64)],
    var: &Variation,
    rng: &mut R,
) -> Genome {
    let mut out = genome.clone();
    for (gene, &(lo, hi)) in out.genes.iter_mut().zip(bounds) {
        if rng.random_bool(var.mutation_prob) {
            *gene = polynomial_gene(*gene, lo, hi, var.mutation_eta, rng.random::<f64>());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn var() -> Variation {
        Variation {
            sbx_eta: 20.0,
            crossover_prob: 0.9,
            mutation_eta: 25.0,
            mutation_prob: 0.1,
        }
    }

    fn bounds(n: usize) -> Vec<(f64, f64)> {
        vec![(0.0, 100.0); n]
    }

    #[test]
    fn zero_crossover_probability_copies_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p1 = Genome {
            genes: vec![1.0, 50.0, 99.0],
        };
        let p2 = Genome {
            genes: vec![80.0, 2.0, 30.0],
        };
        let v = Variation {
            crossover_prob: 0.0,
            ..var()
        };
        let (a, b) = sbx_crossover(&p1, &p2, &bounds(3), &v, &mut rng);
        assert_eq!((a, b), (p1, p2));
    }

    #[test]
    fn identical_parents_give_identical_children() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Genome {
            genes: vec![3.0, 44.0, 70.5, 0.0],
        };
        for _ in 0..100 {
            let (a, b) = sbx_crossover(&p, &p, &bounds(4), &var(), &mut rng);
            assert_eq!(a, p);
            assert_eq!(b, p);
        }
    }

    #[test]
    fn sbx_preserves_the_parent_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let y1: f64 = rng.random_range(-50.0..50.0);
            let y2: f64 = rng.random_range(-50.0..50.0);
            let (c1, c2) = sbx_pair(y1, y2, 20.0, rng.random::<f64>());
            assert!(((c1 + c2) / 2.0 - (y1 + y2) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mutation_probability_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Genome {
            genes: vec![1.0, 2.0, 3.0],
        };
        let v = Variation {
            mutation_prob: 0.0,
            ..var()
        };
        assert_eq!(polynomial_mutation(&g, &bounds(3), &v, &mut rng), g);
    }

    #[test]
    fn mutation_at_lower_bound_moving_down_stays_put() {
        for u in [0.0, 0.1, 0.25, 0.49] {
            assert_eq!(polynomial_gene(0.0, 0.0, 100.0, 25.0, u), 0.0);
        }
        for u in [0.5, 0.75, 0.999] {
            assert_eq!(polynomial_gene(100.0, 0.0, 100.0, 25.0, u), 100.0);
        }
    }

    #[test]
    fn mutation_stays_in_bounds_and_is_unbiased_at_the_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        let trials = 100_000;
        for _ in 0..trials {
            let y = polynomial_gene(50.0, 0.0, 100.0, 25.0, rng.random::<f64>());
            assert!((0.0..=100.0).contains(&y));
            sum += y - 50.0;
        }
        assert!((sum / trials as f64).abs() < 1.0);
    }
}
