//! Small dense helpers shared by the solver and the tests.

use nalgebra::DMatrix;

/// Orthonormal bases of the row space and the nullspace of `a` (m×n).
#[derive(Clone, Debug)]
pub struct RowSpaceSplit {
    pub rank: usize,
    /// Indices of `rank` rows of `a` that are linearly independent.
    pub independent_rows: Vec<usize>,
    /// n×rank, spans the row space of `a`.
    pub range: DMatrix<f64>,
    /// n×(n−rank), spans the nullspace of `a`.
    pub null: DMatrix<f64>,
}

/// Splits `Rⁿ` using a column-pivoted QR of `aᵀ`. A pivot counts toward the
/// rank when it exceeds `rel_tol` times the largest pivot.
///
/// Column-pivoted QR is used instead of an SVD because it stays accurate to
/// working precision on the rank-deficient wide matrices this crate produces.
pub fn row_space_split(a: &DMatrix<f64>, rel_tol: f64) -> RowSpaceSplit {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return RowSpaceSplit {
            rank: 0,
            independent_rows: Vec::new(),
            range: DMatrix::zeros(n, 0),
            null: DMatrix::identity(n, n),
        };
    }
    let qr = a.transpose().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.first().copied().unwrap_or(0.0);
    let rank = if largest == 0.0 {
        0
    } else {
        diag.iter().take_while(|d| **d > rel_tol * largest).count()
    };
    let mut order = DMatrix::from_fn(1, a.nrows(), |_, j| j as f64);
    qr.p().permute_columns(&mut order);
    let mut independent_rows: Vec<usize> = order.iter().take(rank).map(|v| *v as usize).collect();
    independent_rows.sort_unstable();
    let mut qt = DMatrix::identity(n, n);
    qr.q_tr_mul(&mut qt);
    let q = qt.transpose();
    RowSpaceSplit {
        rank,
        independent_rows,
        range: q.columns(0, rank).into_owned(),
        null: q.columns(rank, n - rank).into_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_deficient_wide_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = DMatrix::from_fn(3, 36, |_, _| rng.random_range(-1.0..1.0));
        let mix = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let a = mix * b;
        let split = row_space_split(&a, 1e-10);
        assert_eq!(split.rank, 3);
        assert_eq!(split.null.ncols(), 33);
        assert_eq!(split.independent_rows.len(), 3);
        assert!((&a * &split.null).amax() < 1e-13);
        let q = DMatrix::from_columns(
            &split.range.column_iter().chain(split.null.column_iter()).collect::<Vec<_>>(),
        );
        assert!((q.transpose() * &q - DMatrix::identity(36, 36)).amax() < 1e-13);
    }

    #[test]
    fn duplicate_row_is_reported_dependent() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.0]);
        let split = row_space_split(&a, 1e-10);
        assert_eq!(split.rank, 2);
        let rows = &split.independent_rows;
        assert!(rows.contains(&1) && (rows.contains(&0) ^ rows.contains(&2)));
    }

    #[test]
    fn empty_and_zero() {
        let split = row_space_split(&DMatrix::zeros(0, 4), 1e-10);
        assert_eq!((split.rank, split.null.ncols()), (0, 4));
        let split = row_space_split(&DMatrix::zeros(2, 4), 1e-10);
        assert_eq!((split.rank, split.null.ncols()), (0, 4));
    }
}
