//! Gauss–Hermite rules for the weight `exp(-x^2)`.
//!
//! Nodes are found by Newton iteration on the orthonormal Hermite recurrence,
//! seeded with the usual asymptotic guesses, then symmetrised. The rule with
//! `n` nodes integrates `exp(-x^2) * q(x)` exactly for polynomials `q` of
//! degree up to `2n - 1`.

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `ln(w_k) + x_k^2`, the per-node term that adaptive quadrature needs.
    pub log_weight_plus_sq: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss-Hermite rule needs at least one node");
        let (nodes, weights) = hermite_nodes(n);
        let log_weight_plus_sq = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w.ln() + x * x)
            .collect();
        Self {
            nodes,
            weights,
            log_weight_plus_sq,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    // ascending order
    x.reverse();
    w.reverse();
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 15, 30, 41] {
            let rule = GaussHermite::new(n);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - PI.sqrt()).abs() < 1e-12, "n={n} sum={s}");
        }
    }

    #[test]
    fn exact_for_even_moments() {
        // ∫ x^{2k} e^{-x^2} dx = Γ(k + 1/2)
        let rule = GaussHermite::new(15);
        let gamma_half = [
            PI.sqrt(),
            PI.sqrt() / 2.0,
            3.0 * PI.sqrt() / 4.0,
            15.0 * PI.sqrt() / 8.0,
            105.0 * PI.sqrt() / 16.0,
        ];
        for (k, expected) in gamma_half.iter().enumerate() {
            let got: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x.powi(2 * k as i32))
                .sum();
            assert!((got - expected).abs() < 1e-11 * expected.max(1.0), "k={k}");
        }
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let rule = GaussHermite::new(15);
        for pair in rule.nodes.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        for i in 0..15 {
            assert!((rule.nodes[i] + rule.nodes[14 - i]).abs() < 1e-13);
        }
    }
}
