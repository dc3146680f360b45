use crate::error::{Error, Result};
use crate::grid::TriField;

/// Inverse transformation kernel `l` from
/// `l(x, y) = k(x, y) + int_y^x k(x, s) l(s, y) ds`, by successive approximation.
pub fn solve_inverse_kernel(k_hat: &TriField, tol: f64, max_iter: usize) -> Result<TriField> {
    if !k_hat.is_finite() {
        return Err(Error::InvalidInput("k_hat is not finite".into()));
    }
    let tri = k_hat.tri();
    let n = tri.n_points();
    let h = tri.grid().dx();
    let mut l = k_hat.clone();
    let mut next = TriField::zeros(tri);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        for i in 0..n {
            let k_row = k_hat.row(i);
            for j in 0..=i {
                let mut acc = 0.0;
                if i > j {
                    acc = 0.5 * (k_row[j] * l.get(j, j) + k_row[i] * l.get(i, j));
                    for m in (j + 1)..i {
                        acc += k_row[m] * l.get(m, j);
                    }
                }
                next.set(i, j, k_row[j] + h * acc);
            }
        }
        residual = next.sub(&l)?.sup_norm();
        std::mem::swap(&mut l, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            return Ok(l);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;

    #[test]
    fn zero_kernel_inverts_to_zero() {
        let tri = Grid1D::new(11).unwrap().tri();
        let l = solve_inverse_kernel(&TriField::zeros(tri), 1e-12, 10).unwrap();
        assert_eq!(l.sup_norm(), 0.0);
    }

    #[test]
    fn constant_kernel_has_exponential_inverse() {
        // l(x, y) = c + c int_y^x l(s, y) ds  =>  l = c e^{c (x - y)}
        let c = 0.5;
        let tri = Grid1D::new(201).unwrap().tri();
        let l = solve_inverse_kernel(&TriField::from_fn(tri, |_, _| c), 1e-13, 200).unwrap();
        let exact = TriField::from_fn(tri, |x, y| c * (c * (x - y)).exp());
        let err = l.sub(&exact).unwrap().sup_norm();
        assert!(err <= 1e-6, "error {err}");
    }

    #[test]
    fn respects_growth_bound() {
        let tri = Grid1D::new(41).unwrap().tri();
        let k = TriField::from_fn(tri, |x, y| 0.7 * (3.0 * x - y).sin());
        let l = solve_inverse_kernel(&k, 1e-12, 200).unwrap();
        let kb = k.sup_norm();
        assert!(l.sup_norm() <= kb * kb.exp() + 1e-12);
    }
}
