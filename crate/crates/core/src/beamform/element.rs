//! Closed-form single-element subproblems.

use crate::C64;

/// Coefficients of the scalar problem
/// `max_{|phi|=1} omega3 * min(Re(eta3 phi) + beta3, beta4) + Re(eta1 phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementCoefficients {
    pub eta1: C64,
    pub eta3: C64,
    pub beta3: f64,
    pub beta4: f64,
    pub omega3: f64,
}

impl ElementCoefficients {
    pub fn value(&self, phi: C64) -> f64 {
        let min = f64::min((self.eta3 * phi).re + self.beta3, self.beta4);
        self.omega3 * min + (self.eta1 * phi).re
    }

    /// Unit-modulus points where the two arguments of the min are equal.
    pub fn boundary_points(&self) -> Option<[C64; 2]> {
        let mag = self.eta3.norm();
        if mag == 0.0 {
            return None;
        }
        let c = (self.beta4 - self.beta3) / mag;
        if c.abs() > 1.0 {
            return None;
        }
        let base = -self.eta3.arg();
        let spread = c.acos();
        Some([C64::from_polar(1.0, base + spread), C64::from_polar(1.0, base - spread)])
    }
}

fn align(z: C64) -> C64 {
    if z == C64::new(0.0, 0.0) {
        C64::new(1.0, 0.0)
    } else {
        C64::from_polar(1.0, -z.arg())
    }
}

/// Exact maximizer over the unit circle.
///
/// Candidates are the two boundary phases (when they exist) followed by the
/// maximizers of each smooth branch; the first best candidate wins ties.
pub fn solve_unit_modulus(c: &ElementCoefficients) -> C64 {
    let comm_branch = align(c.eta1 + c.omega3 * c.eta3);
    let free_branch = align(c.eta1);
    match c.boundary_points() {
        Some([b1, b2]) if c.omega3 > 0.0 => {
            let mut best = b1;
            let mut best_val = c.value(b1);
            for cand in [b2, comm_branch, free_branch] {
                let v = c.value(cand);
                if v > best_val {
                    best = cand;
                    best_val = v;
                }
            }
            best
        }
        _ => {
            if c.omega3 > 0.0 && c.eta3.norm() + c.beta3 <= c.beta4 {
                comm_branch
            } else {
                free_branch
            }
        }
    }
}

/// Coefficients of the relaxed binary problem
/// `max_{x in [-1,1]} q x^2 + omega3 * min(a x + beta3, beta4) + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryCoefficients {
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub omega3: f64,
}

impl BinaryCoefficients {
    pub fn value(&self, x: f64) -> f64 {
        self.q * x * x + self.omega3 * f64::min(self.a * x + self.beta3, self.beta4) + self.b * x
    }
}

/// Exact maximizer over `[-1, 1]`, ties resolved toward `+1`.
pub fn solve_relaxed_binary(c: &BinaryCoefficients) -> f64 {
    let mut candidates = vec![1.0, -1.0];
    if c.omega3 > 0.0 && c.a != 0.0 {
        candidates.push((c.beta4 - c.beta3) / c.a);
    }
    if c.q < 0.0 {
        let w3 = if c.omega3 > 0.0 { c.omega3 } else { 0.0 };
        candidates.push(-(c.b + w3 * c.a) / (2.0 * c.q));
        candidates.push(-c.b / (2.0 * c.q));
    }
    let mut best = 1.0;
    let mut best_val = c.value(1.0);
    for &x in &candidates[1..] {
        if !(x.is_finite() && (-1.0..=1.0).contains(&x)) {
            continue;
        }
        let v = c.value(x);
        if v > best_val {
            best = x;
            best_val = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_complex(rng: &mut impl Rng, scale: f64) -> C64 {
        C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
    }

    fn random_coefficients(rng: &mut impl Rng) -> ElementCoefficients {
        let eta3 = random_complex(rng, 1.0);
        let beta3 = rng.random_range(-1.0..1.0);
        ElementCoefficients {
            eta1: random_complex(rng, 1.0),
            eta3,
            beta3,
            // keep the boundary reachable most of the time
            beta4: beta3 + rng.random_range(-1.2..1.2) * eta3.norm(),
            omega3: rng.random_range(0.0..3.0),
        }
    }

    fn grid_max(c: &ElementCoefficients, points: usize) -> f64 {
        (0..points)
            .map(|i| c.value(C64::from_polar(1.0, 2.0 * PI * i as f64 / points as f64)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn pure_linear_term_aligns() {
        let c = ElementCoefficients {
            eta1: C64::new(2.0, 0.0),
            eta3: C64::new(0.3, 0.1),
            beta3: 0.0,
            beta4: 0.0,
            omega3: 0.0,
        };
        let phi = solve_unit_modulus(&c);
        assert!((phi - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dominating_comm_branch() {
        let eta3 = C64::from_polar(0.8, 1.1);
        let c = ElementCoefficients {
            eta1: C64::new(0.0, 0.0),
            eta3,
            beta3: 0.0,
            beta4: 1e6,
            omega3: 2.0,
        };
        let phi = solve_unit_modulus(&c);
        assert!((phi - C64::from_polar(1.0, -(2.0 * eta3).arg())).norm() < 1e-12);
    }

    #[test]
    fn zero_eta3_is_pure_linear() {
        let c = ElementCoefficients {
            eta1: C64::from_polar(1.0, 0.7),
            eta3: C64::new(0.0, 0.0),
            beta3: 0.2,
            beta4: -0.1,
            omega3: 1.0,
        };
        assert!((solve_unit_modulus(&c) - C64::from_polar(1.0, -0.7)).norm() < 1e-12);
    }

    #[test]
    fn matches_phase_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let c = random_coefficients(&mut rng);
            let phi = solve_unit_modulus(&c);
            assert!((phi.norm() - 1.0).abs() < 1e-12);
            assert!(c.value(phi) >= grid_max(&c, 20_000) - 1e-6);
        }
    }

    fn random_binary(rng: &mut impl Rng) -> BinaryCoefficients {
        let beta3 = rng.random_range(-1.0..1.0);
        BinaryCoefficients {
            q: rng.random_range(-2.0..2.0),
            a: rng.random_range(-1.0..1.0),
            b: rng.random_range(-1.0..1.0),
            beta3,
            beta4: beta3 + rng.random_range(-1.0..1.0),
            omega3: rng.random_range(0.0..3.0),
        }
    }

    #[test]
    fn convex_quadratic_picks_endpoint_toward_plus_one() {
        let c = BinaryCoefficients { q: 10.0, a: 0.0, b: 0.0, beta3: 0.0, beta4: 0.0, omega3: 0.0 };
        assert_eq!(solve_relaxed_binary(&c), 1.0);
    }

    #[test]
    fn positive_linear_term_picks_plus_one() {
        let c = BinaryCoefficients { q: 0.0, a: 0.4, b: 0.5, beta3: 0.0, beta4: 0.0, omega3: 0.0 };
        assert_eq!(solve_relaxed_binary(&c), 1.0);
    }

    #[test]
    fn matches_interval_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let c = random_binary(&mut rng);
            let x = solve_relaxed_binary(&c);
            assert!((-1.0..=1.0).contains(&x));
            let grid = (0..=20_000)
                .map(|i| c.value(-1.0 + 2.0 * i as f64 / 20_000.0))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(c.value(x) >= grid - 1e-6);
        }
    }
}
