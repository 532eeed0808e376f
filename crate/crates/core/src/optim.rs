//! Deterministic box-constrained Nelder-Mead.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop once the simplex's objective spread falls below this.
    pub f_tolerance: f64,
    /// ...and its vertices lie within this distance (in box-relative units).
    pub x_tolerance: f64,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            f_tolerance: 1e-12,
            x_tolerance: 1e-8,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn clamp_to(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Minimizes `f` over the box `bounds` starting from `start`. Trial points
/// are clamped into the box; non-finite objective values rank last.
pub fn nelder_mead<F>(
    mut f: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    assert_eq!(n, bounds.len(), "one bound per coordinate");
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut x0 = start.to_vec();
    clamp_to(&mut x0, bounds);
    if n == 0 {
        let value = eval(&x0);
        return Minimum {
            x: x0,
            value,
            iterations: 0,
            converged: true,
        };
    }

    let widths: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo).max(0.0)).collect();
    let mut simplex = vec![x0.clone()];
    for i in 0..n {
        let mut v = x0.clone();
        let step = opts.initial_step * widths[i];
        // step inward if the start sits on the upper bound
        v[i] = if v[i] + step <= bounds[i].1 {
            v[i] + step
        } else {
            v[i] - step
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let spread = |simplex: &[Vec<f64>]| {
        simplex[1..]
            .iter()
            .flat_map(|v| {
                v.iter().zip(&simplex[0]).zip(&widths).map(|((a, b), w)| {
                    if *w > 0.0 {
                        (a - b).abs() / w
                    } else {
                        0.0
                    }
                })
            })
            .fold(0.0, f64::max)
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let f_spread = values[n] - values[0];
        if (f_spread.is_finite() && f_spread <= opts.f_tolerance)
            && spread(&simplex) <= opts.x_tolerance
        {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp_to(&mut p, bounds);
            p
        };

        let reflected = along(1.0);
        let fr = eval(&reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = eval(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = along(0.5);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = along(-0.5);
            let fc = eval(&c);
            (c, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = best[j] + 0.5 * (simplex[i][j] - best[j]);
            }
            values[i] = eval(&simplex[i]);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_in_box() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(
            f,
            &[-1.2, 1.0],
            &[(-2.0, 2.0), (-2.0, 2.0)],
            &NelderMeadOptions {
                max_iterations: 10_000,
                ..Default::default()
            },
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn minimum_on_the_boundary() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2) + (x[1] - 0.5).powi(2);
        let m = nelder_mead(
            f,
            &[0.5, 0.0],
            &[(0.0, 1.0), (0.0, 1.0)],
            &Default::default(),
        );
        assert!(m.x[0].abs() < 1e-6);
        assert!((m.x[1] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[0] * x[1] - 0.1).powi(2);
        let b = [(0.0, 1.0), (0.0, 1.0)];
        let a = nelder_mead(f, &[0.9, 0.9], &b, &Default::default());
        let c = nelder_mead(f, &[0.9, 0.9], &b, &Default::default());
        assert_eq!(a, c);
    }
}
