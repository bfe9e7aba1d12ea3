//! Gauss–Legendre rules on [-1, 1] and on arbitrary intervals.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// (node, weight) pairs on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("non-zero");
    GaussLegendre::new(n).as_node_weight_pairs().to_vec()
}

/// Nodes and weights mapped to [a, b].
pub fn mapped(rule: &[(f64, f64)], a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let h = 0.5 * (b - a);
    let m = 0.5 * (b + a);
    rule.iter().map(move |&(x, w)| (m + h * x, h * w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials() {
        let r = gauss_legendre(5);
        let v: f64 = mapped(&r, 0.0, 2.0).map(|(x, w)| w * x.powi(9)).sum();
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-11);
    }
}
