//! Fixed numeric formatting for emitted files.
//!
//! All floating-point values written to result files go through
//! [`sig9`], which renders 9 significant digits in the style of C's `%.9g`
//! (plain decimal for moderate exponents, scientific otherwise, trailing
//! zeros trimmed). One formatter everywhere keeps re-runs byte-identical.

/// Format with 9 significant digits, `%.9g`-style.
pub fn sig9(v: f64) -> String {
    debug_assert!(v.is_finite(), "non-finite value must not reach output");
    if v == 0.0 {
        return "0".to_string();
    }
    // Let the stdlib do the rounding to 9 significant digits, then re-render.
    let sci = format!("{:.8e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent parses");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 9);

    let body = if (-4..9).contains(&exp) {
        render_fixed(&digits, exp)
    } else {
        render_scientific(&digits, exp)
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn render_fixed(digits: &str, exp: i32) -> String {
    let out = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let point = exp as usize + 1;
        if point >= digits.len() {
            format!("{}{}", digits, "0".repeat(point - digits.len()))
        } else {
            format!("{}.{}", &digits[..point], &digits[point..])
        }
    };
    trim_zeros(&out).to_string()
}

fn render_scientific(digits: &str, exp: i32) -> String {
    let mantissa = format!("{}.{}", &digits[..1], &digits[1..]);
    format!("{}e{}", trim_zeros(&mantissa), exp)
}
