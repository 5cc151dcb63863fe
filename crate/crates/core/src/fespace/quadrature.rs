//! Symmetric quadrature rules on the reference triangle.

use std::sync::LazyLock;

/// A rule with barycentric points; weights sum to the reference area 1/2.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn from_orbits(degree: usize, orbits: &[(Orbit, f64)]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(orbit, w) in orbits {
            let pts: Vec<[f64; 3]> = match orbit {
                Orbit::Centroid => vec![[1.0 / 3.0; 3]],
                Orbit::Three(a) => {
                    let b = 1.0 - 2.0 * a;
                    vec![[b, a, a], [a, b, a], [a, a, b]]
                }
                Orbit::Six(a, b) => {
                    let c = 1.0 - a - b;
                    vec![[a, b, c], [b, c, a], [c, a, b], [b, a, c], [a, c, b], [c, b, a]]
                }
            };
            for p in pts {
                points.push(p);
                weights.push(0.5 * w);
            }
        }
        Self { points, weights, degree }
    }
}

#[derive(Clone, Copy)]
enum Orbit {
    #[allow(dead_code)]
    Centroid,
    Three(f64),
    Six(f64, f64),
}

/// Six-point rule exact for polynomials of degree 4.
pub static DEGREE4: LazyLock<QuadratureRule> = LazyLock::new(|| {
    QuadratureRule::from_orbits(
        4,
        &[
            (Orbit::Three(0.091_576_213_509_770_743_46), 0.109_951_743_655_321_867_39),
            (Orbit::Three(0.445_948_490_915_964_886_32), 0.223_381_589_678_011_465_94),
        ],
    )
});

/// Twelve-point rule exact for polynomials of degree 6.
pub static DEGREE6: LazyLock<QuadratureRule> = LazyLock::new(|| {
    QuadratureRule::from_orbits(
        6,
        &[
            (Orbit::Three(0.249_286_745_170_910_421_29), 0.116_786_275_726_379_366_03),
            (Orbit::Three(0.063_089_014_491_502_228_34), 0.050_844_906_370_206_816_92),
            (
                Orbit::Six(0.053_145_049_844_816_947_35, 0.310_352_451_033_784_405_42),
                0.082_851_075_618_373_575_19,
            ),
        ],
    )
});

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Closed form of the monomial integral over the reference triangle.
    fn exact_monomial(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn check(rule: &QuadratureRule) {
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - 0.5).abs() < 1e-15);
        for a in 0..=rule.degree as u32 {
            for b in 0..=(rule.degree as u32 - a) {
                let q: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                    .sum();
                let exact = exact_monomial(a, b);
                assert!(((q - exact) / exact).abs() < 1e-14, "x^{a} y^{b}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn degree4_exactness() {
        check(&DEGREE4);
        assert_eq!(DEGREE4.len(), 6);
    }

    #[test]
    fn degree6_exactness() {
        check(&DEGREE6);
        assert_eq!(DEGREE6.len(), 12);
    }

    #[test]
    fn degree6_is_not_exact_for_degree_eight() {
        let q: f64 = DEGREE6
            .points
            .iter()
            .zip(&DEGREE6.weights)
            .map(|(p, w)| w * p[1].powi(8))
            .sum();
        assert!(((q - exact_monomial(8, 0)) / exact_monomial(8, 0)).abs() > 1e-10);
    }
}
