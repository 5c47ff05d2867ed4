//! Deterministic numeric formatting for file outputs: 10 significant digits,
//! positional where readable, scientific otherwise, trailing zeros trimmed.

pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{v:.9e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_common_values() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(-2.25), "-2.25");
        assert_eq!(fmt_sig(100.0), "100");
        assert_eq!(fmt_sig(0.1136151901), "0.1136151901");
    }

    #[test]
    fn ten_significant_digits() {
        assert_eq!(fmt_sig(1.23456789012345), "1.23456789");
        assert_eq!(fmt_sig(12345.6789012345), "12345.6789");
    }

    #[test]
    fn extreme_magnitudes_use_scientific() {
        assert_eq!(fmt_sig(1.5e-7), "1.500000000e-7");
        assert_eq!(fmt_sig(3.0e12), "3.000000000e12");
    }

    #[test]
    fn roundtrips_through_parse() {
        for v in [0.035, 1.0 - 0.99f64.powi(12), 123.456, 7.7e-3] {
            let back: f64 = fmt_sig(v).parse().unwrap();
            assert!((back - v).abs() <= v.abs() * 1e-9);
        }
    }
}
