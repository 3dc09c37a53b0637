/// Modified Shepp–Logan ellipses: intensity, semi-axes, centre, rotation (degrees).
const ELLIPSES: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Row-major `m × n` Shepp–Logan phantom with values in `[0, 1]`.
pub fn shepp_logan(m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let y = 1.0 - (2 * i + 1) as f64 / m as f64;
        for j in 0..n {
            let x = (2 * j + 1) as f64 / n as f64 - 1.0;
            let mut v = 0.0;
            for &[a, ax, ay, cx, cy, deg] in &ELLIPSES {
                let (s, c) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * c + dy * s;
                let w = -dx * s + dy * c;
                if (u / ax).powi(2) + (w / ay).powi(2) <= 1.0 {
                    v += a;
                }
            }
            out[i * n + j] = v.clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_range_and_structure() {
        let p = shepp_logan(64, 64);
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // corners are background, the skull rim is bright
        assert_eq!(p[0], 0.0);
        assert!(p.iter().any(|&v| v == 1.0));
        assert!(p.iter().filter(|&&v| v > 0.0).count() > 64 * 64 / 3);
    }
}
