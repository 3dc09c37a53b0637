use crate::error::{Error, Result};

fn energies(u: &[f64], u0: &[f64]) -> Result<(f64, f64)> {
    if u.len() != u0.len() {
        return Err(Error::shape(&[u0.len()], &[u.len()]));
    }
    let signal = u.iter().map(|v| v * v).sum();
    let err = u.iter().zip(u0).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((signal, err))
}

/// `10 log₁₀(‖u‖² / ‖u - u₀‖²)` on magnitude images; `+∞` when `u = u₀`.
pub fn snr(u: &[f64], u0: &[f64]) -> Result<f64> {
    let (s, e) = energies(u, u0)?;
    Ok(if e == 0.0 { f64::INFINITY } else { 10.0 * (s / e).log10() })
}

/// `10 log₁₀(‖u‖² / (‖u - u₀‖²/n))`; note the signal energy, not a peak value.
pub fn psnr(u: &[f64], u0: &[f64]) -> Result<f64> {
    let (s, e) = energies(u, u0)?;
    let n = u.len() as f64;
    Ok(if e == 0.0 { f64::INFINITY } else { 10.0 * (n * s / e).log10() })
}

/// `‖u - u₀‖ / (√n ‖u₀‖)`.
pub fn rel_err(u: &[f64], u0: &[f64]) -> Result<f64> {
    let (_, e) = energies(u, u0)?;
    let n0: f64 = u0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if e == 0.0 {
        return Ok(0.0);
    }
    Ok(e.sqrt() / ((u.len() as f64).sqrt() * n0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubled_image_snr() {
        let u0 = [0.5, 1.0, 0.25, 0.0];
        let u: Vec<f64> = u0.iter().map(|v| 2.0 * v).collect();
        assert!((snr(&u, &u0).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn psnr_offset_and_identity() {
        let u0 = [0.3, 0.9, 0.1, 0.7, 0.2, 0.4];
        let u = [0.31, 0.85, 0.1, 0.75, 0.0, 0.5];
        let d = psnr(&u, &u0).unwrap() - snr(&u, &u0).unwrap();
        assert!((d - 10.0 * 6f64.log10()).abs() < 1e-12);
        assert_eq!(snr(&u0, &u0).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&u0, &u0).unwrap(), f64::INFINITY);
        assert_eq!(rel_err(&u0, &u0).unwrap(), 0.0);
        assert!(snr(&u, &u0[..3]).is_err());
    }

    #[test]
    fn rel_err_formula() {
        let u0 = [3.0, 4.0];
        let u = [3.0, 5.0];
        assert!((rel_err(&u, &u0).unwrap() - 1.0 / (2f64.sqrt() * 5.0)).abs() < 1e-15);
    }
}
