/// Least-squares nondecreasing projection by pool-adjacent-violators.
pub fn isotonic_project(values: &[f64]) -> Vec<f64> {
    // (block mean, block size)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            let last = blocks.last_mut().unwrap();
            *last = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, n) in blocks {
        out.extend(std::iter::repeat_n(m, n));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monotone_input_untouched() {
        assert_eq!(isotonic_project(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pair_pooled() {
        assert_eq!(isotonic_project(&[2.0, 1.0]), vec![1.5, 1.5]);
    }

    /// Brute force over the three-point QP: the optimum pools some contiguous
    /// blocks, so enumerate every block partition and keep the feasible best.
    fn brute_force_three(y: [f64; 3]) -> Vec<f64> {
        let parts: [&[usize]; 4] = [&[1, 1, 1], &[2, 1], &[1, 2], &[3]];
        let mut best: Option<(f64, Vec<f64>)> = None;
        for p in parts {
            let mut fit = Vec::new();
            let mut start = 0;
            for &len in p {
                let m = y[start..start + len].iter().sum::<f64>() / len as f64;
                fit.extend(std::iter::repeat_n(m, len));
                start += len;
            }
            if fit.windows(2).any(|w| w[0] > w[1]) {
                continue;
            }
            let sse: f64 = fit.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(s, _)| sse < *s) {
                best = Some((sse, fit));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn three_point_against_brute_force() {
        assert_eq!(brute_force_three([3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic_project(&[3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let fit = isotonic_project(&[a, b, c]);
            let bf = brute_force_three([a, b, c]);
            for (x, y) in fit.iter().zip(&bf) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn idempotent_and_monotone(v in prop::collection::vec(-10.0f64..10.0, 0..50)) {
            let once = isotonic_project(&v);
            prop_assert!(once.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(isotonic_project(&once), once.clone());
            let mean_in: f64 = v.iter().sum();
            let mean_out: f64 = once.iter().sum();
            prop_assert!((mean_in - mean_out).abs() < 1e-9);
        }
    }
}
