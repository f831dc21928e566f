//! Population-dependent thresholds such as `n^(2/3)`.
//!
//! Accepted forms: `n`, `n^a` with `a` an integer, a fraction `p/q` (optionally
//! parenthesised) or a decimal; `log(n)` / `ln(n)` (natural log); a numeric
//! constant.

use std::fmt;
use std::str::FromStr;

use num::integer::gcd;

use crate::error::{usage, Error, Result};
use crate::stats::{floor_pow_ratio, pow_ratio};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// `n^(num/den)`
    Power {
        num: u32,
        den: u32,
    },
    Log,
    Constant(f64),
}

impl Threshold {
    pub const TWO_THIRDS: Threshold = Threshold::Power { num: 2, den: 3 };

    /// Real value at `n`; exact integers for perfect powers.
    pub fn value(&self, n: usize) -> f64 {
        match *self {
            Threshold::Power { num, den } => pow_ratio(n as u64, num, den),
            Threshold::Log => (n as f64).ln(),
            Threshold::Constant(c) => c,
        }
    }

    /// `⌊value⌋`, exact for powers.
    pub fn floor(&self, n: usize) -> u64 {
        match *self {
            Threshold::Power { num, den } => floor_pow_ratio(n as u64, num, den).0,
            _ => self.value(n).floor().max(0.0) as u64,
        }
    }

    /// `⌈value⌉`, exact for powers.
    pub fn ceil(&self, n: usize) -> u64 {
        match *self {
            Threshold::Power { num, den } => {
                let (r, exact) = floor_pow_ratio(n as u64, num, den);
                if exact {
                    r
                } else {
                    r + 1
                }
            }
            _ => self.value(n).ceil().max(0.0) as u64,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Threshold::Power { num, den: 1 } => write!(f, "n^{num}"),
            Threshold::Power { num, den } => write!(f, "n^({num}/{den})"),
            Threshold::Log => f.write_str("log(n)"),
            Threshold::Constant(c) => write!(f, "{c}"),
        }
    }
}

fn parse_exponent(s: &str) -> Result<(u32, u32)> {
    let s = s
        .strip_prefix('(')
        .and_then(|x| x.strip_suffix(')'))
        .unwrap_or(s)
        .trim();
    let bad = || usage(format!("bad exponent '{s}'"));
    let (num, den) = if let Some((p, q)) = s.split_once('/') {
        let p: u32 = p.trim().parse().map_err(|_| bad())?;
        let q: u32 = q.trim().parse().map_err(|_| bad())?;
        (p, q)
    } else if let Some((int, frac)) = s.split_once('.') {
        if frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10u32.pow(frac.len() as u32);
        let int: u32 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac: u32 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        (int * den + frac, den)
    } else {
        (s.parse().map_err(|_| bad())?, 1)
    };
    if den == 0 {
        return Err(bad());
    }
    let g = gcd(num, den).max(1);
    Ok((num / g, den / g))
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_lowercase();
        if t == "log(n)" || t == "ln(n)" {
            return Ok(Threshold::Log);
        }
        if t == "n" {
            return Ok(Threshold::Power { num: 1, den: 1 });
        }
        if let Some(exp) = t.strip_prefix("n^") {
            let (num, den) = parse_exponent(exp)?;
            return Ok(Threshold::Power { num, den });
        }
        match t.parse::<f64>() {
            Ok(c) if c.is_finite() => Ok(Threshold::Constant(c)),
            _ => Err(usage(format!("unsupported threshold expression '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_forms() {
        assert_eq!(
            "n^(2/3)".parse::<Threshold>().unwrap(),
            Threshold::TWO_THIRDS
        );
        assert_eq!("n^2/3".parse::<Threshold>().unwrap(), Threshold::TWO_THIRDS);
        assert_eq!(
            "n^(4/6)".parse::<Threshold>().unwrap(),
            Threshold::TWO_THIRDS
        );
        assert_eq!(
            "n^0.5".parse::<Threshold>().unwrap(),
            Threshold::Power { num: 1, den: 2 }
        );
        assert_eq!(
            "N".parse::<Threshold>().unwrap(),
            Threshold::Power { num: 1, den: 1 }
        );
        assert_eq!("log(n)".parse::<Threshold>().unwrap(), Threshold::Log);
        assert_eq!("1".parse::<Threshold>().unwrap(), Threshold::Constant(1.0));
        assert!("n^x".parse::<Threshold>().is_err());
        assert!("n^(1/0)".parse::<Threshold>().is_err());
        assert!("sqrt(n)".parse::<Threshold>().is_err());
    }

    #[test]
    fn evaluates_exactly() {
        let t = Threshold::TWO_THIRDS;
        assert_eq!(t.value(4096), 256.0);
        assert_eq!((t.floor(4096), t.ceil(4096)), (256, 256));
        assert_eq!((t.floor(1024), t.ceil(1024)), (101, 102));
        assert_eq!((t.floor(64), t.ceil(64)), (16, 16));
        assert!((t.value(1024) - 101.593_667).abs() < 1e-5);
        assert_eq!(Threshold::Constant(2.5).ceil(10), 3);
        assert_eq!(t.to_string(), "n^(2/3)");
    }
}
