use super::TokenError;

/// Significant digits kept when serializing sampled values.
pub const DEFAULT_PRECISION: usize = 15;

/// Serializes a real number into numeral tokens.
///
/// Values with magnitude in `[1e-4, 1e15)` (after rounding) are written in
/// fixed point, everything else as `mantissa E [-] exponent`. At most
/// `precision` significant digits are kept and trailing fractional zeros are
/// dropped, so the output is canonical.
pub fn tokenize_number(value: f64, precision: usize) -> Result<Vec<&'static str>, TokenError> {
    if !value.is_finite() {
        return Err(TokenError::NonFinite(value));
    }
    if !(1..=17).contains(&precision) {
        return Err(TokenError::Precision(precision));
    }
    if value == 0.0 {
        return Ok(vec!["0"]);
    }

    let formatted = format!("{:.*e}", precision - 1, value.abs());
    let (mantissa, exponent) = formatted.split_once('e').expect("exponent formatting");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    let mut digits: Vec<u8> = mantissa.bytes().filter(u8::is_ascii_digit).map(|b| b - b'0').collect();
    while digits.len() > 1 && digits.last() == Some(&0) {
        digits.pop();
    }

    let mut out = Vec::with_capacity(digits.len() + 6);
    if value < 0.0 {
        out.push("-");
    }
    if (-4..=14).contains(&exponent) {
        if exponent >= 0 {
            let int_len = exponent as usize + 1;
            for i in 0..int_len {
                out.push(digit(*digits.get(i).unwrap_or(&0)));
            }
            if digits.len() > int_len {
                out.push(".");
                out.extend(digits[int_len..].iter().map(|&d| digit(d)));
            }
        } else {
            out.push("0");
            out.push(".");
            for _ in 0..(-exponent - 1) {
                out.push("0");
            }
            out.extend(digits.iter().map(|&d| digit(d)));
        }
    } else {
        out.push(digit(digits[0]));
        if digits.len() > 1 {
            out.push(".");
            out.extend(digits[1..].iter().map(|&d| digit(d)));
        }
        out.push("E");
        if exponent < 0 {
            out.push("-");
        }
        out.extend(exponent.unsigned_abs().to_string().bytes().map(|b| digit(b - b'0')));
    }
    Ok(out)
}

fn digit(d: u8) -> &'static str {
    ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"][d as usize]
}

/// Inverse of [`tokenize_number`] for a token run holding exactly one number.
pub fn parse_number(tokens: &[&str]) -> Option<f64> {
    let text: String = tokens.iter().map(|t| if *t == "E" { "e" } else { t }).collect();
    text.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(v: f64) -> Vec<&'static str> {
        tokenize_number(v, DEFAULT_PRECISION).unwrap()
    }

    #[test]
    fn fixed_and_scientific_forms() {
        assert_eq!(tok(0.25), ["0", ".", "2", "5"]);
        assert_eq!(tok(0.0), ["0"]);
        assert_eq!(tok(-0.0), ["0"]);
        assert_eq!(tok(2e-9), ["2", "E", "-", "9"]);
        assert_eq!(tok(1.5e-9), ["1", ".", "5", "E", "-", "9"]);
        assert_eq!(tok(100.0), ["1", "0", "0"]);
        assert_eq!(tok(-3.5), ["-", "3", ".", "5"]);
        assert_eq!(tok(1e-4), ["0", ".", "0", "0", "0", "1"]);
        assert_eq!(tok(9.9e-5), ["9", ".", "9", "E", "-", "5"]);
        assert_eq!(tok(1e15), ["1", "E", "1", "5"]);
        assert_eq!(tok(0.1), ["0", ".", "1"]);
    }

    #[test]
    fn truncates_to_precision() {
        assert_eq!(tokenize_number(1.0 / 3.0, 3).unwrap(), ["0", ".", "3", "3", "3"]);
        let digits = tok(std::f64::consts::PI).iter().filter(|t| t.len() == 1 && t.as_bytes()[0].is_ascii_digit()).count();
        assert_eq!(digits, 15);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(tokenize_number(f64::NAN, 15), Err(TokenError::NonFinite(_))));
        assert!(matches!(tokenize_number(f64::INFINITY, 15), Err(TokenError::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn injective_at_fifteen_digits(mag in -12.0f64..18.0, m in 1.0f64..10.0, neg: bool) {
            let v = (if neg { -m } else { m }) * 10f64.powf(mag.floor());
            let rounded: f64 = format!("{:.14e}", v).parse().unwrap();
            let toks = tok(rounded);
            prop_assert_eq!(parse_number(&toks), Some(rounded));
            prop_assert!(toks.last() != Some(&"."));
        }
    }
}
