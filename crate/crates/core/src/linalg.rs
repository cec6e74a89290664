//! Small dense helpers on `f64` slices. Matrices are row-major.

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    match v.len() {
        1 => v[0].abs(),
        _ => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

#[inline]
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean distance `|a - b|`.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    match a.len() {
        1 => (a[0] - b[0]).abs(),
        _ => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Pairwise (cascade) summation. The split is always at `len / 2`, so for
/// power-of-two block lengths summing in two nested stages reproduces the
/// one-stage result bit for bit.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Pairwise sum of `xs[start], xs[start + stride], ...` (`count` terms).
pub fn pairwise_sum_strided(xs: &[f64], start: usize, stride: usize, count: usize) -> f64 {
    match count {
        0 => 0.0,
        1 => xs[start],
        2 => xs[start] + xs[start + stride],
        n => {
            let half = n / 2;
            pairwise_sum_strided(xs, start, stride, half)
                + pairwise_sum_strided(xs, start + half * stride, stride, n - half)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_nesting_is_bit_exact_for_dyadic_blocks() {
        let xs: Vec<f64> = (0..64).map(|i| ((i * 7919) % 113) as f64 * 0.1 - 3.3).collect();
        let direct = pairwise_sum(&xs);
        let stage: Vec<f64> = xs.chunks(4).map(pairwise_sum).collect();
        assert_eq!(direct.to_bits(), pairwise_sum(&stage).to_bits());
    }

    #[test]
    fn strided_matches_contiguous() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let even: Vec<f64> = xs.iter().step_by(2).copied().collect();
        assert_eq!(
            pairwise_sum(&even).to_bits(),
            pairwise_sum_strided(&xs, 0, 2, 15).to_bits()
        );
    }

    #[test]
    fn norms() {
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
        assert_eq!(norm(&[-2.0]), 2.0);
        assert_eq!(dist(&[1.0, 1.0], &[4.0, 5.0]), 5.0);
    }
}
