//! Number formatting for artifacts: 17 significant digits in raw CSV,
//! 6 for human-readable output.

/// Scientific notation with 17 significant digits; round-trips every `f64`.
pub fn full(v: f64) -> String {
    format!("{v:.16e}")
}

/// `%.6g`-style rendering.
pub fn short(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        let s = format!("{v:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent present");
        return format!("{}e{e}", trim_zeros(mantissa));
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123_456_789.123_456_78, f64::MIN_POSITIVE] {
            assert_eq!(full(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(full(0.25), "2.5000000000000000e-1");
    }

    #[test]
    fn short_matches_printf_g() {
        assert_eq!(short(0.0), "0");
        assert_eq!(short(1.0), "1");
        assert_eq!(short(0.384_134_6), "0.384135");
        assert_eq!(short(123_456.7), "123457");
        assert_eq!(short(1_234_567.0), "1.23457e6");
        assert_eq!(short(0.000_012_345_67), "1.23457e-5");
        assert_eq!(short(-2.5), "-2.5");
    }
}
