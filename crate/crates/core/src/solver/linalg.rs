use crate::scalar::Scalar;

/// Solves `a x = b` by Gauss–Jordan elimination. Free variables are set to
/// zero, which gives the lexicographically least basic solution. Returns
/// `None` for inconsistent systems.
pub fn solve<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let mut best = None;
        let mut weight = 0.0;
        for (k, row) in a.iter().enumerate().skip(r) {
            let w = row[c].pivot_weight();
            if !row[c].is_negligible() && w > weight {
                weight = w;
                best = Some(k);
                if S::EXACT {
                    break;
                }
            }
        }
        let Some(p) = best else { continue };
        a.swap(r, p);
        b.swap(r, p);
        let piv = a[r][c].clone();
        for x in a[r].iter_mut() {
            *x = x.clone() / piv.clone();
        }
        b[r] = b[r].clone() / piv;
        for k in 0..rows {
            if k == r || a[k][c].is_negligible() {
                continue;
            }
            let f = a[k][c].clone();
            for j in 0..cols {
                let v = a[r][j].clone() * f.clone();
                a[k][j] = a[k][j].clone() - v;
            }
            let v = b[r].clone() * f;
            b[k] = b[k].clone() - v;
        }
        pivots.push((r, c));
        r += 1;
    }
    if b.iter().skip(r).any(|v| !v.is_negligible()) {
        return None;
    }
    let mut x = vec![S::zero(); cols];
    for (row, col) in pivots {
        x[col] = b[row].clone();
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio};
    use crate::Rational;

    #[test]
    fn unique_solution() {
        let a = vec![vec![int(2), int(1)], vec![int(1), int(3)]];
        let x = solve::<Rational>(a, vec![int(3), int(5)]).unwrap();
        assert_eq!(x, vec![ratio(4, 5), ratio(7, 5)]);
    }

    #[test]
    fn free_variables_are_zero() {
        let a = vec![vec![int(1), int(1)]];
        assert_eq!(solve::<Rational>(a, vec![int(1)]).unwrap(), vec![int(1), int(0)]);
    }

    #[test]
    fn inconsistent_is_none() {
        let a = vec![vec![int(1)], vec![int(1)]];
        assert!(solve::<Rational>(a, vec![int(1), int(2)]).is_none());
        let f = vec![vec![1.0f64], vec![1.0]];
        assert!(solve::<f64>(f, vec![1.0, 2.0]).is_none());
    }
}
