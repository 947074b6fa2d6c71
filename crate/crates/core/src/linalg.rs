//! Small dense-band elimination and compensated summation.

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Solves `A x = b` for a Z-matrix `A` (non-positive off-diagonal) given as
/// sparse rows, by banded Gaussian elimination without pivoting.
///
/// A Z-matrix is a non-singular M-matrix exactly when every pivot of this
/// elimination is positive, so `None` is returned as soon as a pivot is not,
/// which callers read as "the underlying exponential moment diverges".
pub(crate) fn solve_m_matrix(rows: &[Vec<(usize, f64)>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rows.len();
    debug_assert_eq!(rhs.len(), n);
    if n == 0 {
        return Some(Vec::new());
    }
    let (mut lower, mut upper) = (0usize, 0usize);
    for (i, row) in rows.iter().enumerate() {
        for &(j, _) in row {
            if j < i {
                lower = lower.max(i - j);
            } else {
                upper = upper.max(j - i);
            }
        }
    }
    let width = lower + upper + 1;
    let mut band = vec![0.0; n * width];
    let at = |i: usize, j: usize| i * width + (j + lower - i);
    let mut scale = vec![0.0f64; n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            band[at(i, j)] += v;
            if i == j {
                scale[i] = v.abs();
            }
        }
    }
    let mut b = rhs.to_vec();
    for k in 0..n {
        let pivot = band[at(k, k)];
        if !(pivot > 1e-13 * scale[k].max(f64::MIN_POSITIVE)) {
            return None;
        }
        let last_row = (k + lower).min(n - 1);
        let last_col = (k + upper).min(n - 1);
        for i in k + 1..=last_row {
            let factor = band[at(i, k)] / pivot;
            if factor == 0.0 {
                continue;
            }
            band[at(i, k)] = 0.0;
            for j in k + 1..=last_col {
                band[at(i, j)] -= factor * band[at(k, j)];
            }
            b[i] -= factor * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..=(i + upper).min(n - 1) {
            acc -= band[at(i, j)] * x[j];
        }
        x[i] = acc / band[at(i, i)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_m_matrix() {
        // 2x - y = 1, -x + 2y - z = 0, -y + 2z = 1  =>  x = y = z = 1
        let rows = vec![
            vec![(0, 2.0), (1, -1.0)],
            vec![(0, -1.0), (1, 2.0), (2, -1.0)],
            vec![(1, -1.0), (2, 2.0)],
        ];
        let x = solve_m_matrix(&rows, &[1.0, 0.0, 1.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn full_band() {
        let rows = vec![
            vec![(0, 4.0), (2, -1.0)],
            vec![(0, -1.0), (1, 4.0), (2, -1.0)],
            vec![(0, -2.0), (1, -1.0), (2, 4.0)],
        ];
        let rhs = [2.0, 3.0, 1.0];
        let x = solve_m_matrix(&rows, &rhs).unwrap();
        for (row, r) in rows.iter().zip(rhs) {
            let lhs: f64 = row.iter().map(|&(j, v)| v * x[j]).sum();
            assert!((lhs - r).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_or_indefinite_is_rejected() {
        let rows = vec![vec![(0, 1.0), (1, -1.0)], vec![(0, -1.0), (1, 1.0)]];
        assert!(solve_m_matrix(&rows, &[0.0, 0.0]).is_none());
        let rows = vec![vec![(0, -1.0)]];
        assert!(solve_m_matrix(&rows, &[1.0]).is_none());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        assert!((s.value() - (1.0 + 1e-14)).abs() < 1e-16);
    }
}
