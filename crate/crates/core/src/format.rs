//! Stable number formatting for CSV outputs.

/// Formats like C's `%.12g`: 12 significant digits, trailing zeros removed,
/// scientific notation only for very small or very large magnitudes.
pub fn sig12(x: f64) -> String {
    format_g(x, 12)
}

pub fn format_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has exponent");
    let exp: i32 = exp.parse().expect("valid exponent");
    if exp < -4 || exp >= p as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
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
    fn matches_printf_g() {
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(0.31), "0.31");
        assert_eq!(sig12(-2.5), "-2.5");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(123456789012.0), "123456789012");
        assert_eq!(sig12(1234567890123.0), "1.23456789012e+12");
        assert_eq!(sig12(0.0001), "0.0001");
        assert_eq!(sig12(0.00001234), "1.234e-05");
        assert_eq!(sig12(17933.0), "17933");
    }
}
