//! Box-constrained quasi-Newton minimisation with a Newton polishing stage.

use super::linalg::{cholesky, cholesky_solve, dot, identity, mat_vec, Matrix};

#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Gradient with components zeroed where the bound blocks descent.
    pub fn projected(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&xi, &gi))| {
                let at_lower = xi <= self.lower[i] && gi > 0.0;
                let at_upper = xi >= self.upper[i] && gi < 0.0;
                if at_lower || at_upper {
                    0.0
                } else {
                    gi
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Newton steps attempted after the quasi-Newton phase.
    pub polish_steps: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub projected_grad_norm: f64,
    /// Hessian of the objective at `x` (finite differences of the gradient),
    /// when it could be computed.
    pub hessian: Option<Matrix>,
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Central-difference Hessian of a gradient function, symmetrised.
pub fn fd_hessian<E>(
    grad: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    x: &[f64],
) -> Result<Matrix, E> {
    let n = x.len();
    let mut h = vec![vec![0.0; n]; n];
    for j in 0..n {
        let step = 1e-5 * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        xp[j] += step;
        let mut xm = x.to_vec();
        xm[j] -= step;
        let (_, gp) = grad(&xp)?;
        let (_, gm) = grad(&xm)?;
        for i in 0..n {
            h[i][j] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = avg;
            h[j][i] = avg;
        }
    }
    Ok(h)
}

/// Minimises `f` (value and gradient) within `bounds`, starting from `x0`.
pub fn minimize<E>(
    f: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    x0: &[f64],
    bounds: &Bounds,
    opts: &MinimizeOptions,
) -> Result<Minimum, E> {
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let (mut fx, mut g) = f(&x)?;
    let mut inv_h = identity(n);
    let mut first_step = true;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let pg = bounds.projected(&x, &g);
        if max_norm(&pg) < opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = mat_vec(&inv_h, &pg).iter().map(|v| -v).collect();
        for i in 0..n {
            if pg[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        if dot(&d, &pg) >= 0.0 {
            // not a descent direction: restart from steepest descent
            inv_h = identity(n);
            d = pg.iter().map(|v| -v).collect();
        }
        if first_step {
            let scale = 1.0 / max_norm(&d).max(1.0);
            d.iter_mut().for_each(|v| *v *= scale);
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            bounds.clamp(&mut xn);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if let Ok((fnew, gnew)) = f(&xn) {
                if fnew.is_finite() && fnew <= fx + 1e-4 * dot(&g, &step) {
                    accepted = Some((xn, fnew, gnew, step));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gnew, s)) = accepted else {
            break;
        };
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first_step {
                let gamma = sy / dot(&y, &y);
                inv_h = identity(n).into_iter().map(|r| r.into_iter().map(|v| v * gamma).collect()).collect();
            }
            // H+ = (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy = mat_vec(&inv_h, &y);
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    inv_h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        first_step = false;
        let improvement = fx - fnew;
        x = xn;
        fx = fnew;
        g = gnew;
        if improvement.abs() <= 1e-15 * fx.abs().max(1.0) && max_norm(&s) < 1e-14 {
            break;
        }
    }

    // Newton polishing with a finite-difference Hessian.
    let mut hessian = None;
    for _ in 0..opts.polish_steps {
        let h = fd_hessian(f, &x)?;
        let pg = bounds.projected(&x, &g);
        let free: Vec<usize> = (0..n).filter(|&i| pg[i] != 0.0 || (x[i] > bounds.lower[i] && x[i] < bounds.upper[i])).collect();
        hessian = Some(h.clone());
        if max_norm(&pg) < opts.grad_tol * 1e-3 || free.is_empty() {
            break;
        }
        let sub: Matrix = free.iter().map(|&i| free.iter().map(|&j| h[i][j]).collect()).collect();
        let Some(l) = cholesky(&sub) else { break };
        let rhs: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
        let step = cholesky_solve(&l, &rhs);
        let mut xn = x.clone();
        for (k, &i) in free.iter().enumerate() {
            xn[i] += step[k];
        }
        bounds.clamp(&mut xn);
        let (fnew, gnew) = f(&xn)?;
        let better_grad = max_norm(&bounds.projected(&xn, &gnew)) < max_norm(&pg);
        if fnew.is_finite() && (fnew < fx || (fnew <= fx + 1e-9 * fx.abs().max(1.0) && better_grad)) {
            x = xn;
            fx = fnew;
            g = gnew;
            iterations += 1;
            hessian = None;
        } else {
            break;
        }
    }
    if hessian.is_none() {
        hessian = Some(fd_hessian(f, &x)?);
    }
    let projected_grad_norm = max_norm(&bounds.projected(&x, &g));
    Ok(Minimum {
        x,
        value: fx,
        gradient: g,
        iterations,
        projected_grad_norm,
        hessian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>), ()> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let bounds = Bounds {
            lower: vec![-5.0, -5.0],
            upper: vec![5.0, 5.0],
        };
        let opts = MinimizeOptions {
            grad_tol: 1e-8,
            max_iter: 500,
            polish_steps: 5,
        };
        let m = minimize(&mut rosenbrock, &[-1.2, 1.0], &bounds, &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn respects_bounds() {
        // minimum of (x-3)^2 with x <= 2 sits on the bound
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> { Ok(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)])) };
        let bounds = Bounds {
            lower: vec![-2.0],
            upper: vec![2.0],
        };
        let opts = MinimizeOptions {
            grad_tol: 1e-8,
            max_iter: 100,
            polish_steps: 3,
        };
        let m = minimize(&mut f, &[0.0], &bounds, &opts).unwrap();
        assert_eq!(m.x[0], 2.0);
        assert_eq!(m.projected_grad_norm, 0.0);
    }
}
