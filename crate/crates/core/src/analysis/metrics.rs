use super::trajectory::{Snapshot, Trajectory};
use crate::derivation::argmax;
use crate::error::{Error, Result};
use crate::searchspace::RelaxMode;

/// Distance of a relaxed row from the discrete encoding it stands for.
///
/// Softmax rows: L2 distance to the one-hot vector at the argmax. Sigmoid
/// rows: mean of `min(z, 1 − z)`. Zero exactly for a valid discrete row.
pub fn discrepancy(row: &[f64], mode: RelaxMode) -> Result<f64> {
    if row.is_empty() {
        return Err(Error::invalid("discrepancy", "empty row"));
    }
    if row.iter().any(|z| !(0.0..=1.0).contains(z)) {
        return Err(Error::invalid("discrepancy", "entries must lie in [0, 1]"));
    }
    match mode {
        RelaxMode::SoftmaxExclusive => {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("discrepancy", format!("softmax row sums to {sum}")));
            }
            let k = argmax(row);
            let sq: f64 = row
                .iter()
                .enumerate()
                .map(|(i, &z)| if i == k { (1.0 - z).powi(2) } else { z * z })
                .sum();
            Ok(sq.sqrt())
        }
        RelaxMode::SigmoidCollaborative => Ok(row.iter().map(|&z| z.min(1.0 - z)).sum::<f64>() / row.len() as f64),
    }
}

/// Mean row discrepancy of a snapshot.
pub fn mean_discrepancy(snapshot: &Snapshot, mode: RelaxMode) -> Result<f64> {
    let rows: Vec<&Vec<f64>> = snapshot.groups.iter().flatten().collect();
    if rows.is_empty() {
        return Err(Error::invalid("discrepancy", "empty snapshot"));
    }
    let total = rows.iter().map(|r| discrepancy(r, mode)).sum::<Result<f64>>()?;
    Ok(total / rows.len() as f64)
}

/// Equal-width counts of `values` over [0, 1]; 1.0 falls in the last bin.
pub fn histogram(values: impl IntoIterator<Item = f64>, bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::Config(format!("histogram needs at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0; bins];
    for z in values {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::invalid("histogram", format!("value {z} outside [0, 1]")));
        }
        counts[((z * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(counts)
}

/// Histogram of σ(α) for raw architecture weights.
pub fn sigma_histogram(alphas: &[f64], bins: usize) -> Result<Vec<usize>> {
    histogram(alphas.iter().map(|&a| RelaxMode::SigmoidCollaborative.relax(&[a])[0]), bins)
}

/// Share of values in `[0, edge] ∪ [1 − edge, 1]`.
pub fn polarized_fraction(values: &[f64], edge: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.iter().filter(|&&z| z <= edge || z >= 1.0 - edge).count();
    n as f64 / values.len() as f64
}

/// Share of values outside the open band `(0.5 − half_width, 0.5 + half_width)`
/// around the fair point.
pub fn departed_fraction(values: &[f64], half_width: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.iter().filter(|&&z| (z - 0.5).abs() > half_width).count();
    n as f64 / values.len() as f64
}

/// First recorded epoch at which at least `share` of all weights have left
/// `[0.5 − half_width, 0.5 + half_width]`.
pub fn epochs_to_departure(traj: &Trajectory, half_width: f64, share: f64) -> Option<usize> {
    traj.snapshots.iter().find_map(|s| {
        let v: Vec<f64> = s.values().collect();
        (departed_fraction(&v, half_width) >= share).then_some(s.epoch)
    })
}

/// True when the series rises by at least `tol` and later falls by at least
/// `tol` from that peak, or the mirror image.
pub fn is_non_monotone(series: &[f64], tol: f64) -> bool {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut peak, mut trough) = (f64::NEG_INFINITY, f64::INFINITY);
    for &v in series {
        // A peak at least `tol` above an earlier value, then a drop from it.
        if peak - v >= tol || v - trough >= tol {
            return true;
        }
        lo = lo.min(v);
        hi = hi.max(v);
        if v - lo >= tol {
            peak = peak.max(v);
        }
        if hi - v >= tol {
            trough = trough.min(v);
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_rows_have_no_discrepancy() {
        assert_eq!(discrepancy(&[0.0, 1.0, 0.0], RelaxMode::SoftmaxExclusive).unwrap(), 0.0);
        assert_eq!(discrepancy(&[0.0, 1.0, 1.0], RelaxMode::SigmoidCollaborative).unwrap(), 0.0);
        assert_eq!(discrepancy(&[0.5; 4], RelaxMode::SigmoidCollaborative).unwrap(), 0.5);
    }

    #[test]
    fn softmax_row_example() {
        let row = [0.235, 0.057, 0.17, 0.016, 0.187, 0.269, 0.066];
        let expect = ((0.269f64 - 1.0).powi(2)
            + 0.235f64.powi(2)
            + 0.057f64.powi(2)
            + 0.17f64.powi(2)
            + 0.016f64.powi(2)
            + 0.187f64.powi(2)
            + 0.066f64.powi(2))
        .sqrt();
        let d = discrepancy(&row, RelaxMode::SoftmaxExclusive).unwrap();
        assert!((d - expect).abs() < 1e-12);
        assert!((d - 0.813213).abs() < 1e-6, "{d}");
    }

    #[test]
    fn invalid_rows() {
        assert!(discrepancy(&[0.5, 0.6], RelaxMode::SoftmaxExclusive).is_err());
        assert!(discrepancy(&[1.5], RelaxMode::SigmoidCollaborative).is_err());
        assert!(discrepancy(&[], RelaxMode::SigmoidCollaborative).is_err());
    }

    #[test]
    fn histogram_cases() {
        assert_eq!(sigma_histogram(&[0.0; 9], 10).unwrap()[5], 9);
        let h = sigma_histogram(&[-40.0, 40.0, -40.0, 40.0], 10).unwrap();
        assert_eq!((h[0], h[9], h.iter().sum::<usize>()), (2, 2, 4));
        assert!(sigma_histogram(&[0.0], 1).is_err());
    }

    #[test]
    fn polarization_shares() {
        let v = [0.05, 0.95, 0.5, 0.1];
        assert_eq!(polarized_fraction(&v, 0.1), 0.75);
        assert_eq!(departed_fraction(&v, 0.1), 0.75);
    }

    #[test]
    fn monotone_detection() {
        assert!(!is_non_monotone(&[0.5, 0.6, 0.7, 0.9], 0.05));
        assert!(!is_non_monotone(&[0.5, 0.4, 0.2], 0.05));
        assert!(is_non_monotone(&[0.5, 0.7, 0.6, 0.3], 0.05));
        assert!(is_non_monotone(&[0.5, 0.3, 0.8], 0.05));
        assert!(!is_non_monotone(&[0.5, 0.52, 0.51, 0.9], 0.05));
    }
}
