//! Euclidean distances with compensated summation and exact enumeration of
//! short lattice vectors.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("lattice needs at least one basis vector")]
    EmptyBasis,
    #[error("basis vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("{count} basis vectors cannot be independent in dimension {dim}")]
    TooManyVectors { count: usize, dim: usize },
    #[error("basis vectors are linearly dependent (smallest Gram eigenvalue {min_eigenvalue:e})")]
    Dependent { min_eigenvalue: f64 },
    #[error("enumeration would visit {0} lattice points")]
    EnumerationTooLarge(u128),
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y))).sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    compensated_sum(a.iter().map(|x| x * x)).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

fn solve_spd(g: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    // Gaussian elimination with partial pivoting; d is tiny.
    let d = g.len();
    let mut m: Vec<Vec<f64>> = g
        .iter()
        .zip(rhs)
        .map(|(row, &r)| {
            let mut row = row.clone();
            row.push(r);
            row
        })
        .collect();
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for row in (col + 1)..d {
            let f = m[row][col] / m[col][col];
            for k in col..=d {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = ((row + 1)..d).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][d] - s) / m[row][row];
    }
    x
}

/// A lattice `origin + Σ kᵢ bᵢ` with linearly independent basis vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    basis: Vec<Vec<f64>>,
    origin: Vec<f64>,
    gram: Vec<Vec<f64>>,
    min_eigenvalue: f64,
}

const MAX_ENUMERATION: u128 = 50_000_000;

impl Lattice {
    pub fn new(basis: Vec<Vec<f64>>, origin: Vec<f64>) -> Result<Self, LatticeError> {
        let n = origin.len();
        if basis.is_empty() {
            return Err(LatticeError::EmptyBasis);
        }
        if basis.len() > n {
            return Err(LatticeError::TooManyVectors {
                count: basis.len(),
                dim: n,
            });
        }
        for (index, b) in basis.iter().enumerate() {
            if b.len() != n {
                return Err(LatticeError::DimensionMismatch {
                    index,
                    got: b.len(),
                    expected: n,
                });
            }
        }
        let gram: Vec<Vec<f64>> = basis
            .iter()
            .map(|bi| basis.iter().map(|bj| dot(bi, bj)).collect())
            .collect();
        let scale = gram.iter().enumerate().map(|(i, r)| r[i]).fold(0.0, f64::max);
        let min_eigenvalue = symmetric_eigenvalues(gram.clone())
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if !(min_eigenvalue > 1e-12 * scale) {
            return Err(LatticeError::Dependent { min_eigenvalue });
        }
        Ok(Lattice {
            basis,
            origin,
            gram,
            min_eigenvalue,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn dimension(&self) -> usize {
        self.origin.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn point(&self, coords: &[i64]) -> Vec<f64> {
        (0..self.dimension())
            .map(|axis| {
                compensated_sum(
                    std::iter::once(self.origin[axis]).chain(
                        coords
                            .iter()
                            .zip(&self.basis)
                            .map(|(&k, b)| k as f64 * b[axis]),
                    ),
                )
            })
            .collect()
    }

    fn vector(&self, coords: &[i64]) -> Vec<f64> {
        (0..self.dimension())
            .map(|axis| {
                compensated_sum(
                    coords
                        .iter()
                        .zip(&self.basis)
                        .map(|(&k, b)| k as f64 * b[axis]),
                )
            })
            .collect()
    }

    /// Visit every integer vector in the box `center ± half_width`.
    fn for_each_in_box(
        &self,
        center: &[i64],
        half_width: i64,
        mut f: impl FnMut(&[i64]),
    ) -> Result<(), LatticeError> {
        let d = self.rank();
        let side = 2 * half_width as u128 + 1;
        let total = side.checked_pow(d as u32).unwrap_or(u128::MAX);
        if total > MAX_ENUMERATION {
            return Err(LatticeError::EnumerationTooLarge(total));
        }
        let mut k: Vec<i64> = center.iter().map(|c| c - half_width).collect();
        loop {
            f(&k);
            let mut axis = 0;
            loop {
                if axis == d {
                    return Ok(());
                }
                k[axis] += 1;
                if k[axis] <= center[axis] + half_width {
                    break;
                }
                k[axis] = center[axis] - half_width;
                axis += 1;
            }
        }
    }

    /// Length of the shortest nonzero lattice vector, by exhaustive
    /// enumeration inside the eigenvalue bound.
    pub fn min_vector_length(&self) -> Result<f64, LatticeError> {
        let shortest_basis = self.basis.iter().map(|b| norm(b)).fold(f64::INFINITY, f64::min);
        let half_width = (shortest_basis / self.min_eigenvalue.sqrt()).floor() as i64;
        let mut best = shortest_basis;
        let zero = vec![0i64; self.rank()];
        self.for_each_in_box(&zero, half_width.max(1), |k| {
            if k.iter().all(|&x| x == 0) {
                return;
            }
            let len = norm(&self.vector(k));
            if len < best {
                best = len;
            }
        })?;
        Ok(best)
    }

    /// Distance from `p` to the nearest lattice point, with the coordinates of
    /// a minimiser.
    pub fn closest_point(&self, p: &[f64]) -> Result<(f64, Vec<i64>), LatticeError> {
        let rel: Vec<f64> = p.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        let rhs: Vec<f64> = self.basis.iter().map(|b| dot(b, &rel)).collect();
        let kappa = solve_spd(&self.gram, &rhs);
        let rounded: Vec<i64> = kappa.iter().map(|x| x.round() as i64).collect();
        let in_span: Vec<f64> = (0..self.dimension())
            .map(|axis| {
                compensated_sum(
                    kappa
                        .iter()
                        .zip(&rounded)
                        .zip(&self.basis)
                        .map(|((&kf, &kr), b)| (kr as f64 - kf) * b[axis]),
                )
            })
            .collect();
        let span_dist = norm(&in_span);
        let half_width = (span_dist / self.min_eigenvalue.sqrt()).ceil() as i64 + 1;
        let mut best = (f64::INFINITY, rounded.clone());
        self.for_each_in_box(&rounded, half_width, |k| {
            let d = distance(&self.point(k), p);
            if d < best.0 {
                best = (d, k.to_vec());
            }
        })?;
        Ok(best)
    }

    /// Lattice points within distance `radius` of `p`.
    pub fn points_near(&self, p: &[f64], radius: f64) -> Result<Vec<Vec<i64>>, LatticeError> {
        let rel: Vec<f64> = p.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        let rhs: Vec<f64> = self.basis.iter().map(|b| dot(b, &rel)).collect();
        let kappa = solve_spd(&self.gram, &rhs);
        let center: Vec<i64> = kappa.iter().map(|x| x.round() as i64).collect();
        let half_width = (radius / self.min_eigenvalue.sqrt()).ceil() as i64 + 1;
        let mut out = Vec::new();
        self.for_each_in_box(&center, half_width, |k| {
            if distance(&self.point(k), p) <= radius {
                out.push(k.to_vec());
            }
        })?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compensated_sum_recovers_cancelled_digits() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn square_lattice_in_three_dimensions() {
        let l = Lattice::new(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            vec![0.0; 3],
        )
        .unwrap();
        assert_relative_eq!(l.min_vector_length().unwrap(), 1.0);
        let (d, k) = l.closest_point(&[2.4, -0.7, 0.5]).unwrap();
        assert_eq!(k, vec![2, -1]);
        assert_relative_eq!(d, (0.16f64 + 0.09 + 0.25).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn skewed_basis_shortest_vector_is_not_a_basis_vector() {
        // b1 = (1, 0), b2 = (10.1, 0.3): b2 - 10 b1 = (0.1, 0.3).
        let l = Lattice::new(vec![vec![1.0, 0.0], vec![10.1, 0.3]], vec![0.0, 0.0]).unwrap();
        assert_relative_eq!(l.min_vector_length().unwrap(), 0.1f64.hypot(0.3), epsilon = 1e-12);
    }

    #[test]
    fn dependent_basis_rejected() {
        let err = Lattice::new(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, LatticeError::Dependent { .. }));
    }

    #[test]
    fn jacobi_eigenvalues() {
        let mut ev = symmetric_eigenvalues(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        ev.sort_by(f64::total_cmp);
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 3.0, epsilon = 1e-12);
    }
}
