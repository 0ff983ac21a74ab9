//! Text normalization for speech: numbers become words, unit
//! abbreviations after numbers are expanded.

const ONES: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

const UNITS: &[(&str, &str)] = &[("m", "meters"), ("km", "kilometers"), ("cm", "centimeters")];

/// Largest integer spelled as a cardinal; longer digit runs are read digit by digit.
pub const MAX_SPELLED_INTEGER: u32 = 9999;

fn below_hundred(n: u32) -> String {
    if n < 20 {
        ONES[n as usize].to_string()
    } else if n.is_multiple_of(10) {
        TENS[(n / 10) as usize].to_string()
    } else {
        format!("{}-{}", TENS[(n / 10) as usize], ONES[(n % 10) as usize])
    }
}

/// Cardinal words for `0..=9999`.
pub fn spell_integer(n: u32) -> String {
    assert!(n <= MAX_SPELLED_INTEGER, "{n} is out of range");
    if n < 100 {
        return below_hundred(n);
    }
    let mut parts = Vec::new();
    let thousands = n / 1000;
    let hundreds = (n / 100) % 10;
    let rest = n % 100;
    if thousands > 0 {
        parts.push(format!("{} thousand", ONES[thousands as usize]));
    }
    if hundreds > 0 {
        parts.push(format!("{} hundred", ONES[hundreds as usize]));
    }
    if rest > 0 {
        parts.push(below_hundred(rest));
    }
    parts.join(" ")
}

fn spell_digits(digits: &str) -> String {
    digits
        .chars()
        .map(|c| ONES[c.to_digit(10).expect("ascii digit") as usize])
        .collect::<Vec<_>>()
        .join(" ")
}

fn spell_number(int_part: &str, frac_part: Option<&str>) -> String {
    let whole = match int_part.parse::<u32>() {
        Ok(n) if n <= MAX_SPELLED_INTEGER && !(int_part.len() > 1 && int_part.starts_with('0')) => spell_integer(n),
        _ => spell_digits(int_part),
    };
    match frac_part {
        Some(frac) => format!("{whole} point {}", spell_digits(frac)),
        None => whole,
    }
}

/// Spells out every ASCII digit run. Text without digits passes through
/// unchanged, so the function is idempotent.
pub(crate) fn normalize(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let len = chars.len();
    let mut out = String::with_capacity(raw.len() + 16);
    let mut i = 0;
    while i < len {
        if !chars[i].is_ascii_digit() {
            out.push(chars[i]);
            i += 1;
            continue;
        }
        let start = i;
        while i < len && chars[i].is_ascii_digit() {
            i += 1;
        }
        let int_part: String = chars[start..i].iter().collect();
        let mut frac_part = None;
        if i + 1 < len && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
            let fs = i + 1;
            i = fs;
            while i < len && chars[i].is_ascii_digit() {
                i += 1;
            }
            frac_part = Some(chars[fs..i].iter().collect::<String>());
        }
        if out.chars().last().is_some_and(char::is_alphanumeric) {
            out.push(' ');
        }
        out.push_str(&spell_number(&int_part, frac_part.as_deref()));

        let mut j = i;
        if j < len && chars[j] == ' ' {
            j += 1;
        }
        let mut k = j;
        while k < len && chars[k].is_ascii_alphabetic() {
            k += 1;
        }
        let word: String = chars[j..k].iter().collect();
        let bounded = k == len || !chars[k].is_alphanumeric();
        if let Some((_, expanded)) = UNITS.iter().find(|(abbr, _)| *abbr == word).filter(|_| bounded) {
            out.push(' ');
            out.push_str(expanded);
            i = k;
        } else if i < len && chars[i].is_alphabetic() {
            out.push(' ');
        }
    }
    out
}
