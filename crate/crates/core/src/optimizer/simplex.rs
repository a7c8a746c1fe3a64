//! Minimal Nelder-Mead simplex minimizer used to refine grid-search seeds.
//!
//! Standard coefficients (reflection 1, expansion 2, contraction 0.5, shrink
//! 0.5), deterministic tie handling, no restarts. The caller embeds any box
//! constraints in the objective itself (clamping or penalties), so the search
//! space here is unconstrained R^n.

/// Minimizes `f` starting from `x0` with an initial simplex of edge
/// `init_step` along each axis. Returns the best vertex and its value.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    init_step: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    assert!(n >= 1, "need at least one dimension");

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += init_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iter {
        // Order vertices by value (stable: equal values keep insertion order).
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let spread = values[worst] - values[best];
        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max);
        if spread <= 1e-13 * (1.0 + values[best].abs()) && diameter <= 1e-10 {
            break;
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; n];
        for (i, v) in simplex.iter().enumerate() {
            if i != worst {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x;
                }
            }
        }
        for c in &mut centroid {
            *c /= n as f64;
        }

        let blend = |a: f64, pt: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(pt)
                .map(|(c, x)| c + a * (c - x))
                .collect()
        };

        let reflected = blend(1.0, &simplex[worst]);
        let fr = f(&reflected);
        if fr < values[best] {
            let expanded = blend(2.0, &simplex[worst]);
            let fe = f(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = if fr < values[worst] {
                blend(0.5, &simplex[worst])
            } else {
                blend(-0.5, &simplex[worst])
            };
            let fc = f(&contracted);
            if fc < values[worst].min(fr) {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                // Shrink everything toward the best vertex.
                let anchor = simplex[best].clone();
                for (i, v) in simplex.iter_mut().enumerate() {
                    if i != best {
                        for (x, a) in v.iter_mut().zip(&anchor) {
                            *x = a + 0.5 * (*x - a);
                        }
                        values[i] = f(v);
                    }
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex.swap_remove(best), values[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_shifted_quadratic() {
        let (x, fx) = minimize(
            |v| (v[0] - 3.0).powi(2) + 2.0 * (v[1] + 1.5).powi(2),
            &[0.0, 0.0],
            0.5,
            500,
        );
        assert!((x[0] - 3.0).abs() < 1e-6, "x0 = {}", x[0]);
        assert!((x[1] + 1.5).abs() < 1e-6, "x1 = {}", x[1]);
        assert!(fx < 1e-10);
    }

    #[test]
    fn minimizes_rosenbrock_valley() {
        let (x, fx) = minimize(
            |v| (1.0 - v[0]).powi(2) + 100.0 * (v[1] - v[0] * v[0]).powi(2),
            &[-1.2, 1.0],
            0.5,
            5000,
        );
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4, "x = {x:?}");
        assert!(fx < 1e-8);
    }

    #[test]
    fn is_deterministic() {
        let run = || {
            minimize(
                |v| v[0].sin() + v[1].cos() + 0.1 * (v[0] * v[0] + v[1] * v[1]),
                &[2.0, 2.0],
                0.3,
                300,
            )
        };
        let (xa, fa) = run();
        let (xb, fb) = run();
        assert_eq!(xa, xb);
        assert_eq!(fa.to_bits(), fb.to_bits());
    }
}
