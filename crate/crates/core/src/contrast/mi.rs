use crate::{Error, Result};

fn check_joint(joint: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = joint.len();
    let cols = joint.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::Data("joint table is empty".into()));
    }
    if joint.iter().any(|r| r.len() != cols) {
        return Err(Error::Data("joint table rows have different lengths".into()));
    }
    let mut total = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Data(format!("joint entry ({i}, {j}) = {p} is not a probability")));
            }
            total += p;
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!("joint table sums to {total}, not 1")));
    }
    Ok((rows, cols))
}

/// Mutual information of a discrete joint table in nats, with `0·log 0 = 0`.
pub fn discrete_mi(joint: &[Vec<f64>]) -> Result<f64> {
    let (_, cols) = check_joint(joint)?;
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    Ok(mi)
}

fn check_perm(perm: &[usize], n: usize, axis: &str) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::Data(format!("{axis} relabeling has {} entries for {n} values", perm.len())));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Data(format!("{axis} relabeling {perm:?} is not a bijection")));
        }
    }
    Ok(())
}

/// Relabels the table (`x → perm_x[x]`, `y → perm_y[y]`) and returns the MI
/// before and after.
pub fn mi_invariance_check(joint: &[Vec<f64>], perm_x: &[usize], perm_y: &[usize]) -> Result<(f64, f64)> {
    let (rows, cols) = check_joint(joint)?;
    check_perm(perm_x, rows, "row")?;
    check_perm(perm_y, cols, "column")?;
    let mut relabeled = vec![vec![0.0; cols]; rows];
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            relabeled[perm_x[i]][perm_y[j]] = p;
        }
    }
    Ok((discrete_mi(joint)?, discrete_mi(&relabeled)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_tables() {
        assert_abs_diff_eq!(discrete_mi(&[vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(discrete_mi(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            discrete_mi(&[vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap(),
            0.192_744_757_021_757_53,
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_tables() {
        assert!(discrete_mi(&[vec![0.5, -0.1], vec![0.3, 0.3]]).is_err());
        assert!(discrete_mi(&[vec![0.5, 0.1], vec![0.3, 0.3]]).is_err());
        assert!(discrete_mi(&[]).is_err());
        assert!(mi_invariance_check(&[vec![0.5, 0.0], vec![0.0, 0.5]], &[0, 0], &[0, 1]).is_err());
        assert!(mi_invariance_check(&[vec![0.5, 0.0], vec![0.0, 0.5]], &[0], &[0, 1]).is_err());
    }

    #[test]
    fn swapping_rows_keeps_log2() {
        let (a, b) = mi_invariance_check(&[vec![0.5, 0.0], vec![0.0, 0.5]], &[1, 0], &[0, 1]).unwrap();
        assert_eq!(a, b);
        assert_abs_diff_eq!(b, 2f64.ln(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn relabeling_preserves_mi(
            raw in prop::collection::vec(0.0f64..1.0, 16),
            px in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
            py in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let joint: Vec<Vec<f64>> = raw.chunks(4).map(|r| r.iter().map(|v| v / total).collect()).collect();
            let (a, b) = mi_invariance_check(&joint, &px, &py).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= -1e-12);
        }
    }
}
