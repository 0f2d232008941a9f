//! Exact decimal canonical form: `(-1)^neg * digits * 10^exp`, with no
//! leading or trailing zeros in `digits`. Zero is `("", 0)` and never negative.

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal {
    neg: bool,
    digits: String,
    exp: i64,
}

impl Decimal {
    /// Parses `[+-]? (digits [. digits?] | . digits) ([eE] [+-]? digits)?`.
    pub fn parse(text: &str) -> Option<Self> {
        let s = text.trim();
        let (neg, s) = match s.as_bytes().first()? {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (mantissa, exp_part) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], Some(&s[i + 1..])),
            None => (s, None),
        };
        let (int_part, frac_part) = match mantissa.find('.') {
            Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part
            .bytes()
            .chain(frac_part.bytes())
            .all(|b| b.is_ascii_digit())
        {
            return None;
        }
        let mut exp: i64 = match exp_part {
            None => 0,
            Some(e) => {
                let digits = e.strip_prefix(['+', '-']).unwrap_or(e);
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                e.parse().ok()?
            }
        };
        exp = exp.checked_sub(i64::try_from(frac_part.len()).ok()?)?;
        let all: String = int_part.chars().chain(frac_part.chars()).collect();
        let trimmed = all.trim_start_matches('0');
        let digits = trimmed.trim_end_matches('0');
        if digits.is_empty() {
            return Some(Self {
                neg: false,
                digits: String::new(),
                exp: 0,
            });
        }
        exp = exp.checked_add(i64::try_from(trimmed.len() - digits.len()).ok()?)?;
        Some(Self {
            neg,
            digits: digits.to_string(),
            exp,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }
}

impl std::fmt::Display for Decimal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let sign = if self.neg { "-" } else { "" };
        write!(f, "{sign}{}e{}", self.digits, self.exp)
    }
}
