//! Round-trip number formatting.
//!
//! Every number the crate writes uses 17 significant digits in the style of
//! C's `%.17g`, which is enough to parse back to the identical `f64`.

use std::fmt::Write;

/// Formats `v` like C's `%.17g`.
pub fn g17(v: f64) -> String {
    let mut s = String::with_capacity(24);
    write_g17(&mut s, v);
    s
}

/// Appends the `%.17g` rendering of `v` to `out`.
pub fn write_g17(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("nan");
        return;
    }
    if v.is_infinite() {
        out.push_str(if v > 0.0 { "inf" } else { "-inf" });
        return;
    }
    // Integers below 1e17 print without exponent or fraction under %.17g.
    if v.fract() == 0.0 && v.abs() < 1e17 {
        if v == 0.0 && v.is_sign_negative() {
            out.push_str("-0");
        } else {
            let _ = write!(out, "{}", v as i64);
        }
        return;
    }
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if negative {
        out.push('-');
    }
    if (-4..17).contains(&exp) {
        if exp < 0 {
            out.push_str("0.");
            for _ in 0..(-exp - 1) {
                out.push('0');
            }
            out.push_str(digits.trim_end_matches('0'));
        } else {
            let split = exp as usize + 1;
            let (int_part, frac_part) = digits.split_at(split);
            out.push_str(int_part);
            let frac = frac_part.trim_end_matches('0');
            if !frac.is_empty() {
                out.push('.');
                out.push_str(frac);
            }
        }
    } else {
        let (lead, rest) = digits.split_at(1);
        out.push_str(lead);
        let rest = rest.trim_end_matches('0');
        if !rest.is_empty() {
            out.push('.');
            out.push_str(rest);
        }
        let _ = write!(out, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
}
