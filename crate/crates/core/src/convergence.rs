//! Observed convergence orders from refinement sequences.

/// Node count per axis after `level` halvings of the spacing.
pub fn refined_nodes(m0: usize, level: u32) -> usize {
    (m0 - 1) * (1usize << level) + 1
}

/// Least-squares slope of `log e` against `log h`. `None` with fewer than
/// two points or when some error is not positive.
pub fn fit_order(h: &[f64], e: &[f64]) -> Option<f64> {
    if h.len() != e.len() || h.len() < 2 || e.iter().chain(h).any(|v| !(*v > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Orders between consecutive levels, `log(e_k / e_{k+1}) / log(h_k / h_{k+1})`.
pub fn successive_orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(e.windows(2))
        .map(|(hw, ew)| (ew[0] / ew[1]).ln() / (hw[0] / hw[1]).ln())
        .collect()
}

/// Strictly decreasing.
pub fn is_decreasing(e: &[f64]) -> bool {
    e.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn refined_counts() {
        assert_eq!(refined_nodes(9, 0), 9);
        assert_eq!(refined_nodes(9, 2), 33);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(fit_order(&[0.1], &[1.0]), None);
        assert_eq!(fit_order(&[0.1, 0.05], &[1.0, 0.0]), None);
        assert_eq!(fit_order(&[0.1, 0.1], &[1.0, 0.5]), None);
    }

    proptest! {
        #[test]
        fn power_laws_are_recovered(c in 0.01f64..100.0, q in -1.0f64..4.0, h0 in 0.01f64..1.0) {
            let h = [h0, h0 / 2.0, h0 / 4.0, h0 / 8.0];
            let e: Vec<f64> = h.iter().map(|x| c * x.powf(q)).collect();
            let fit = fit_order(&h, &e).unwrap();
            prop_assert!((fit - q).abs() < 1e-9);
            for o in successive_orders(&h, &e) {
                prop_assert!((o - q).abs() < 1e-9);
            }
        }
    }
}
